//! Structural equation models on a DAG with one D-vine regression per
//! non-root node: fitting via inference-for-margins, edge pruning readout,
//! joint density evaluation, and goodness-of-fit tables.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::DagSpec;
use crate::dataset::Dataset;
use crate::dvine::{fit_dvine_reg, CopulaConfig, DVineRegModel, SelCriterion};
use crate::error::{Error, Result};
use crate::margins::{fit_margin, MarginKind, MarginModel, MarginOptions, PIT_EPS};

/// Full fitting configuration for a SEM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub margin: MarginKind,
    pub copulas: CopulaConfig,
    pub criterion: SelCriterion,
    pub mixture_kmax: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(margin: MarginKind, copulas: CopulaConfig, criterion: SelCriterion) -> Self {
        FitConfig {
            margin,
            copulas,
            criterion,
            mixture_kmax: 5,
            seed: 0,
        }
    }

    /// Gaussian margins with Gaussian pair copulas.
    pub fn gaussian() -> Self {
        Self::new(
            MarginKind::Gaussian,
            CopulaConfig::gaussian_only(),
            SelCriterion::Caic,
        )
    }

    /// Kernel margins with parametric and nonparametric pair copulas.
    pub fn kernel_pnp() -> Self {
        Self::new(
            MarginKind::Kde,
            CopulaConfig::parametric_nonparametric(),
            SelCriterion::Caic,
        )
    }

    /// Mixture margins with parametric and nonparametric pair copulas.
    pub fn mixture_pnp() -> Self {
        Self::new(
            MarginKind::Mixture,
            CopulaConfig::parametric_nonparametric(),
            SelCriterion::Caic,
        )
    }
}

/// One node of a fitted SEM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeModel {
    pub node: String,
    pub margin: MarginModel,
    /// None for root nodes; may have an empty order when every parent was
    /// rejected by the selection criterion.
    pub regression: Option<DVineRegModel>,
}

/// A fitted D-vine SEM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemModel {
    pub dag: DagSpec,
    pub topo_order: Vec<String>,
    /// Node models in topological order.
    pub nodes: Vec<NodeModel>,
    pub config: FitConfig,
    pub n: usize,
    /// Training columns in topological order, retained for quantile paths
    /// and goodness-of-fit recomputation.
    pub training: Vec<Vec<f64>>,
}

pub fn fit_sem(data: &Dataset, dag: &DagSpec, config: &FitConfig) -> Result<SemModel> {
    let n = data.n();
    if n < 30 {
        return Err(Error::Insufficient { need: 30, got: n });
    }
    for node in &dag.nodes {
        data.column(node)?;
    }
    let topo_order = dag.topo_sort()?;

    // IFM step one: margins per node, in parallel.
    let margin_opts = MarginOptions {
        kmax: config.mixture_kmax,
        seed: config.seed,
    };
    let margins: Vec<MarginModel> = topo_order
        .par_iter()
        .map(|node| fit_margin(data.column(node)?, config.margin, &margin_opts))
        .collect::<Result<_>>()?;

    // Pseudo-observations for every node.
    let pseudo: HashMap<&str, Vec<f64>> = topo_order
        .iter()
        .zip(&margins)
        .map(|(node, margin)| {
            let col = data.column(node).unwrap();
            (node.as_str(), col.iter().map(|&x| margin.pit(x)).collect())
        })
        .collect();

    // Step two: one D-vine regression per non-root node, in parallel.
    let regressions: Vec<Option<DVineRegModel>> = topo_order
        .par_iter()
        .map(|node| {
            let parents = dag.parents(node);
            if parents.is_empty() {
                return Ok(None);
            }
            let candidates: Vec<(String, Vec<f64>)> = parents
                .iter()
                .map(|p| (p.to_string(), pseudo[p].clone()))
                .collect();
            fit_dvine_reg(
                node,
                &pseudo[node.as_str()],
                &candidates,
                config.criterion,
                &config.copulas,
            )
            .map(Some)
        })
        .collect::<Result<_>>()?;

    let nodes = topo_order
        .iter()
        .zip(margins)
        .zip(regressions)
        .map(|((node, margin), regression)| NodeModel {
            node: node.clone(),
            margin,
            regression,
        })
        .collect();
    let training = topo_order
        .iter()
        .map(|node| data.column(node).unwrap().to_vec())
        .collect();
    Ok(SemModel {
        dag: dag.clone(),
        topo_order,
        nodes,
        config: config.clone(),
        n,
        training,
    })
}

/// One copula-scale row: (node, selected order, loglik, aic, bic).
pub type CopulaGofRow = (String, Vec<String>, f64, f64, f64);
/// Copula-scale totals: (loglik, aic, bic).
pub type CopulaGofTotals = (f64, f64, f64);

/// Per-node goodness-of-fit row on the original scale.
#[derive(Debug, Clone, Serialize)]
pub struct GofRow {
    pub node: String,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub edf: f64,
}

impl SemModel {
    pub fn node_model(&self, name: &str) -> Result<&NodeModel> {
        self.nodes
            .iter()
            .find(|m| m.node == name)
            .ok_or_else(|| Error::Usage(format!("unknown node '{name}'")))
    }

    pub fn training_column(&self, name: &str) -> Result<&[f64]> {
        let i = self
            .topo_order
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Usage(format!("unknown node '{name}'")))?;
        Ok(&self.training[i])
    }

    /// DAG edges whose parent was not selected in the child's regression.
    pub fn pruned_edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for node in &self.topo_order {
            let model = self.node_model(node).expect("node exists");
            let selected: Vec<&str> = model
                .regression
                .as_ref()
                .map(|r| r.order.iter().map(|s| s.as_str()).collect())
                .unwrap_or_default();
            for parent in self.dag.parents(node) {
                if !selected.contains(&parent) {
                    out.push((parent.to_string(), node.clone()));
                }
            }
        }
        out
    }

    pub fn retained_edge_count(&self) -> usize {
        self.dag.edges.len() - self.pruned_edges().len()
    }

    /// Joint log-density at a full observation, plus the number of PIT
    /// values that hit the clamping boundary.
    pub fn joint_logdensity_with_diagnostics(
        &self,
        x: &HashMap<String, f64>,
    ) -> Result<(f64, usize)> {
        let mut clamped = 0;
        let mut pit = |model: &MarginModel, v: f64| {
            let raw = model.cdf(v);
            if raw <= PIT_EPS || raw >= 1.0 - PIT_EPS {
                clamped += 1;
            }
            model.pit(v)
        };
        let mut total = 0.0;
        for node in &self.nodes {
            let xv = *x
                .get(&node.node)
                .ok_or_else(|| Error::Usage(format!("missing value for '{}'", node.node)))?;
            let margin_log = node.margin.pdf(xv).max(1e-300).ln();
            total += margin_log;
            if let Some(reg) = &node.regression {
                let y_u = pit(&node.margin, xv);
                let mut x_u = HashMap::new();
                for cov in &reg.order {
                    let cv = *x
                        .get(cov)
                        .ok_or_else(|| Error::Usage(format!("missing value for '{cov}'")))?;
                    let cov_margin = &self.node_model(cov)?.margin;
                    x_u.insert(cov.clone(), pit(cov_margin, cv));
                }
                total += reg.log_cond_factor(y_u, &x_u)?;
            }
        }
        Ok((total, clamped))
    }

    pub fn joint_logdensity(&self, x: &HashMap<String, f64>) -> Result<f64> {
        self.joint_logdensity_with_diagnostics(x).map(|(v, _)| v)
    }

    /// Margin-only fit table in topological order plus totals.
    pub fn margins_gof(&self) -> (Vec<GofRow>, GofRow) {
        let mut rows = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            rows.push(GofRow {
                node: node.node.clone(),
                loglik: node.margin.loglik,
                aic: node.margin.aic,
                bic: node.margin.bic,
                edf: node.margin.edf,
            });
        }
        let total = total_row(&rows);
        (rows, total)
    }

    /// Copula-scale fit table (non-root nodes): selected order, conditional
    /// log-likelihood, and its AIC/BIC penalizations.
    pub fn copulas_gof(&self) -> (Vec<CopulaGofRow>, CopulaGofTotals) {
        let mut rows = Vec::new();
        let mut tot = (0.0, 0.0, 0.0);
        for node in &self.nodes {
            if let Some(reg) = &node.regression {
                let (cll, caic, cbic) = (reg.fit_cll(), reg.caic(), reg.cbic());
                rows.push((node.node.clone(), reg.order.clone(), cll, caic, cbic));
                tot.0 += cll;
                tot.1 += caic;
                tot.2 += cbic;
            }
        }
        (rows, tot)
    }

    /// Extract the linear Gaussian model a Gaussian-config SEM implies.
    ///
    /// With Gaussian margins and Gaussian pair copulas every conditional
    /// median is exactly linear in the parent values, so intercepts,
    /// coefficients, and residual scales can be read off from conditional
    /// quantiles at unit inputs. Only defined for the Gaussian config.
    pub fn implied_lgbn(&self) -> Result<crate::lgbn::LgbnModel> {
        use crate::numeric::{normal_cdf, normal_pdf};
        if self.config.margin != MarginKind::Gaussian
            || self.config.copulas.allow_nonparametric
            || self
                .config
                .copulas
                .families
                .iter()
                .any(|f| !matches!(f, crate::copula::Family::Gaussian))
        {
            return Err(Error::Unsupported(
                "implied_lgbn requires Gaussian margins and Gaussian pair copulas".into(),
            ));
        }
        let q84 = normal_cdf(1.0);
        let mut regs = Vec::with_capacity(self.nodes.len());
        let mut edges = Vec::new();
        for node in &self.nodes {
            let selected: Vec<String> = node
                .regression
                .as_ref()
                .map(|r| r.order.clone())
                .unwrap_or_default();
            let value_at = |parent_values: &HashMap<String, f64>, alpha: f64| -> Result<f64> {
                let u = match &node.regression {
                    None => alpha,
                    Some(reg) => {
                        let mut x_u = HashMap::new();
                        for cov in &reg.order {
                            let m = &self.node_model(cov)?.margin;
                            x_u.insert(cov.clone(), m.pit(parent_values[cov]));
                        }
                        reg.cond_quantile(alpha, &x_u)?
                    }
                };
                Ok(node.margin.pit_inv(u))
            };
            let zeros: HashMap<String, f64> = selected.iter().map(|p| (p.clone(), 0.0)).collect();
            let intercept = value_at(&zeros, 0.5)?;
            let sigma = value_at(&zeros, q84)? - intercept;
            let mut coefficients = Vec::with_capacity(selected.len());
            for p in &selected {
                let mut unit = zeros.clone();
                unit.insert(p.clone(), 1.0);
                coefficients.push(value_at(&unit, 0.5)? - intercept);
            }
            for p in &selected {
                edges.push((p.clone(), node.node.clone()));
            }
            let x = self.training_column(&node.node)?;
            let cols: Vec<&[f64]> = selected
                .iter()
                .map(|p| self.training_column(p))
                .collect::<Result<_>>()?;
            let loglik: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let mean = intercept
                        + coefficients
                            .iter()
                            .zip(&cols)
                            .map(|(c, col)| c * col[i])
                            .sum::<f64>();
                    (normal_pdf((xi - mean) / sigma) / sigma).max(1e-300).ln()
                })
                .sum();
            let edf = selected.len() as f64 + 2.0;
            regs.push(crate::lgbn::NodeRegression {
                node: node.node.clone(),
                parents: selected,
                intercept,
                coefficients,
                sigma,
                loglik,
                edf,
            });
        }
        let dag = DagSpec::new(self.dag.nodes.clone(), edges)?;
        Ok(crate::lgbn::LgbnModel {
            dag,
            topo_order: self.topo_order.clone(),
            nodes: regs,
            n: self.n,
        })
    }

    /// Original-scale per-node fit table: margin and copula contributions
    /// combined, plus totals.
    pub fn gof_table(&self, data: &Dataset) -> Result<(Vec<GofRow>, GofRow)> {
        if data.n() != self.n {
            return Err(Error::Usage(format!(
                "gof data has {} rows, model was fitted on {}",
                data.n(),
                self.n
            )));
        }
        let nf = self.n as f64;
        let mut rows = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            data.column(&node.node)?;
            let copula_ll = node.regression.as_ref().map_or(0.0, |r| r.fit_cll());
            let copula_edf = node.regression.as_ref().map_or(0.0, |r| r.edf());
            let loglik = node.margin.loglik + copula_ll;
            let edf = node.margin.edf + copula_edf;
            rows.push(GofRow {
                node: node.node.clone(),
                loglik,
                aic: -2.0 * loglik + 2.0 * edf,
                bic: -2.0 * loglik + nf.ln() * edf,
                edf,
            });
        }
        let total = total_row(&rows);
        Ok((rows, total))
    }
}

fn total_row(rows: &[GofRow]) -> GofRow {
    GofRow {
        node: "total".to_string(),
        loglik: rows.iter().map(|r| r.loglik).sum(),
        aic: rows.iter().map(|r| r.aic).sum(),
        bic: rows.iter().map(|r| r.bic).sum(),
        edf: rows.iter().map(|r| r.edf).sum(),
    }
}
