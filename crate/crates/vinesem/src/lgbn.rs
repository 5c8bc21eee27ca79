//! Linear Gaussian Bayesian network: per-node ordinary least squares on the
//! DAG parents with maximum-likelihood residual variances, conditional
//! normal evaluation, and implied joint covariance.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dag::DagSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numeric::normal_pdf;

/// One node's conditional normal: mean = intercept + coef . parents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRegression {
    pub node: String,
    pub parents: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Maximum-likelihood residual standard deviation (denominator n).
    pub sigma: f64,
    pub loglik: f64,
    /// Parent count + intercept + variance.
    pub edf: f64,
}

/// One goodness-of-fit row: (node, loglik, aic, bic, edf).
pub type LgbnGofRow = (String, f64, f64, f64, f64);
/// Totals: (loglik, aic, bic, edf).
pub type LgbnGofTotals = (f64, f64, f64, f64);

/// A fitted linear Gaussian Bayesian network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LgbnModel {
    pub dag: DagSpec,
    pub topo_order: Vec<String>,
    pub nodes: Vec<NodeRegression>,
    pub n: usize,
}

pub fn fit_lgbn(data: &Dataset, dag: &DagSpec) -> Result<LgbnModel> {
    let n = data.n();
    let max_parents = dag
        .nodes
        .iter()
        .map(|nd| dag.parents(nd).len())
        .max()
        .unwrap_or(0);
    if n <= max_parents + 1 {
        return Err(Error::Insufficient {
            need: max_parents + 2,
            got: n,
        });
    }
    for node in &dag.nodes {
        data.column(node)?;
    }
    let topo_order = dag.topo_sort()?;
    let mut nodes = Vec::with_capacity(dag.nodes.len());
    for node in &topo_order {
        let y = data.column(node)?;
        let parents: Vec<String> = dag.parents(node).iter().map(|s| s.to_string()).collect();
        let p = parents.len();
        let nf = n as f64;

        // Design matrix with intercept column.
        let mut x = DMatrix::zeros(n, p + 1);
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        for (j, parent) in parents.iter().enumerate() {
            let col = data.column(parent)?;
            for i in 0..n {
                x[(i, j + 1)] = col[i];
            }
        }
        let yv = DVector::from_column_slice(y);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &yv;
        let beta = xtx
            .clone()
            .lu()
            .solve(&xty)
            .ok_or_else(|| Error::Degenerate(format!("collinear parents for node '{node}'")))?;
        // Guard against rank deficiency that LU silently tolerates.
        let recon = &xtx * &beta - &xty;
        if recon.norm() > 1e-6 * (1.0 + xty.norm()) {
            return Err(Error::Degenerate(format!(
                "collinear parents for node '{node}'"
            )));
        }
        let resid = &yv - &x * &beta;
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let sigma = (rss / nf).sqrt();
        if sigma <= 0.0 {
            return Err(Error::Degenerate(format!(
                "zero residual variance for '{node}'"
            )));
        }
        let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI * sigma * sigma).ln() + 1.0);
        nodes.push(NodeRegression {
            node: node.clone(),
            parents,
            intercept: beta[0],
            coefficients: beta.iter().skip(1).cloned().collect(),
            sigma,
            loglik,
            edf: p as f64 + 2.0,
        });
    }
    Ok(LgbnModel {
        dag: dag.clone(),
        topo_order,
        nodes,
        n,
    })
}

impl LgbnModel {
    pub fn node(&self, name: &str) -> Result<&NodeRegression> {
        self.nodes
            .iter()
            .find(|r| r.node == name)
            .ok_or_else(|| Error::Usage(format!("unknown node '{name}'")))
    }

    /// Conditional mean and standard deviation of `node` at the given
    /// parent values.
    pub fn cond_params(
        &self,
        node: &str,
        parent_values: &HashMap<String, f64>,
    ) -> Result<(f64, f64)> {
        let reg = self.node(node)?;
        let mut mean = reg.intercept;
        for (parent, coef) in reg.parents.iter().zip(&reg.coefficients) {
            let v = parent_values.get(parent).ok_or_else(|| {
                Error::Usage(format!("missing parent '{parent}' for node '{node}'"))
            })?;
            mean += coef * v;
        }
        Ok((mean, reg.sigma))
    }

    /// Joint log-density: sum of the conditional normal log-densities.
    pub fn logdensity(&self, x: &HashMap<String, f64>) -> Result<f64> {
        let mut total = 0.0;
        for reg in &self.nodes {
            let xi = *x
                .get(&reg.node)
                .ok_or_else(|| Error::Usage(format!("missing value for '{}'", reg.node)))?;
            let (mean, sd) = self.cond_params(&reg.node, x)?;
            total += (normal_pdf((xi - mean) / sd) / sd).max(1e-300).ln();
        }
        Ok(total)
    }

    /// Per-node (loglik, aic, bic, edf) rows plus the totals row.
    pub fn gof_table(&self) -> (Vec<LgbnGofRow>, LgbnGofTotals) {
        let nf = self.n as f64;
        let mut rows = Vec::with_capacity(self.nodes.len());
        let mut tot = (0.0, 0.0, 0.0, 0.0);
        for reg in &self.nodes {
            let aic = -2.0 * reg.loglik + 2.0 * reg.edf;
            let bic = -2.0 * reg.loglik + nf.ln() * reg.edf;
            rows.push((reg.node.clone(), reg.loglik, aic, bic, reg.edf));
            tot.0 += reg.loglik;
            tot.1 += aic;
            tot.2 += bic;
            tot.3 += reg.edf;
        }
        (rows, tot)
    }

    /// Mean vector and implied covariance from the structural form:
    /// inverse covariance (I - A) Omega^-1 (I - A)^T with A the weighted
    /// adjacency in topological order.
    pub fn implied_moments(&self) -> (Vec<String>, DVector<f64>, DMatrix<f64>) {
        let names = self.topo_order.clone();
        let idx: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let d = names.len();
        let mut a = DMatrix::zeros(d, d); // A[i][j] = weight of i -> j
        let mut omega_inv = DMatrix::zeros(d, d);
        let mut b0 = DVector::zeros(d);
        for reg in &self.nodes {
            let j = idx[reg.node.as_str()];
            b0[j] = reg.intercept;
            omega_inv[(j, j)] = 1.0 / (reg.sigma * reg.sigma);
            for (parent, coef) in reg.parents.iter().zip(&reg.coefficients) {
                a[(idx[parent.as_str()], j)] = *coef;
            }
        }
        let i_minus_a = DMatrix::identity(d, d) - &a;
        let prec = &i_minus_a * omega_inv * i_minus_a.transpose();
        let cov = prec
            .try_inverse()
            .expect("precision matrix is positive definite");
        // Mean solves mu = A^T mu + b0.
        let mean = i_minus_a
            .transpose()
            .lu()
            .solve(&b0)
            .expect("I - A^T is unit triangular in topological order");
        (names, mean, cov)
    }
}
