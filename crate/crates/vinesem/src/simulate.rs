//! Forward sampling from fitted models along the topological order,
//! conditional sampling of single nodes, and conditional-median paths.
//!
//! Randomness comes from a counter-based generator with one independent
//! stream per node, so per-node draws are reproducible regardless of how
//! the work is scheduled.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lgbn::LgbnModel;
use crate::numeric::{empirical_quantile, normal_quantile};
use crate::sem::SemModel;

/// Sampling configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
}

/// Uniform draws for one node: an independent ChaCha stream per node index.
fn node_uniforms(seed: u64, node_index: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(node_index as u64 + 1);
    (0..n).map(|_| rng.gen_range(1e-12..1.0 - 1e-12)).collect()
}

/// Forward-sample a fitted SEM: roots through the inverse PIT, non-roots
/// through the nested h-inverses of their D-vine given the already
/// simulated parents.
pub fn sample_sem(model: &SemModel, config: &SimConfig) -> Result<Dataset> {
    if config.n == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    let n = config.n;
    let mut columns: HashMap<String, Vec<f64>> = HashMap::new();
    for (node_index, name) in model.topo_order.iter().enumerate() {
        let node = model.node_model(name)?;
        let w = node_uniforms(config.seed, node_index, n);
        let values = match &node.regression {
            None => w
                .iter()
                .map(|&wi| node.margin.pit_inv(wi))
                .collect::<Vec<f64>>(),
            Some(reg) => {
                // PIT the already simulated selected parents once.
                let parent_u: Vec<(String, Vec<f64>)> = reg
                    .order
                    .iter()
                    .map(|cov| {
                        let margin = &model.node_model(cov)?.margin;
                        let col = &columns[cov];
                        Ok((cov.clone(), col.iter().map(|&x| margin.pit(x)).collect()))
                    })
                    .collect::<Result<_>>()?;
                let mut out = Vec::with_capacity(n);
                let mut x_u = HashMap::new();
                for (i, &wi) in w.iter().enumerate() {
                    for (cov, us) in &parent_u {
                        x_u.insert(cov.clone(), us[i]);
                    }
                    let u_y = reg.cond_quantile(wi, &x_u)?;
                    out.push(node.margin.pit_inv(u_y));
                }
                out
            }
        };
        columns.insert(name.clone(), values);
    }
    let cols: Vec<Vec<f64>> = model
        .topo_order
        .iter()
        .map(|name| columns.remove(name).unwrap())
        .collect();
    Dataset::new(model.topo_order.clone(), cols)
}

/// Forward-sample a linear Gaussian Bayesian network.
pub fn sample_lgbn(model: &LgbnModel, config: &SimConfig) -> Result<Dataset> {
    if config.n == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    let n = config.n;
    let mut columns: HashMap<String, Vec<f64>> = HashMap::new();
    for (node_index, name) in model.topo_order.iter().enumerate() {
        let reg = model.node(name)?;
        let w = node_uniforms(config.seed, node_index, n);
        let mut values = Vec::with_capacity(n);
        for (i, &wi) in w.iter().enumerate() {
            let mut mean = reg.intercept;
            for (parent, coef) in reg.parents.iter().zip(&reg.coefficients) {
                mean += coef * columns[parent][i];
            }
            values.push(mean + reg.sigma * normal_quantile(wi));
        }
        columns.insert(name.clone(), values);
    }
    let cols: Vec<Vec<f64>> = model
        .topo_order
        .iter()
        .map(|name| columns.remove(name).unwrap())
        .collect();
    Dataset::new(model.topo_order.clone(), cols)
}

/// Draw `n` values of one node from its conditional law given fixed parent
/// values. Values of non-selected parents are ignored, so perturbing them
/// cannot change the output.
pub fn sample_node_given_parents(
    model: &SemModel,
    node: &str,
    parent_values: &HashMap<String, f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    let node_index = model
        .topo_order
        .iter()
        .position(|m| m == node)
        .ok_or_else(|| Error::Usage(format!("unknown node '{node}'")))?;
    let nm = model.node_model(node)?;
    let w = node_uniforms(seed, node_index, n);
    match &nm.regression {
        None => Ok(w.iter().map(|&wi| nm.margin.pit_inv(wi)).collect()),
        Some(reg) => {
            let mut x_u = HashMap::new();
            for cov in &reg.order {
                let value = parent_values.get(cov).ok_or_else(|| {
                    Error::Usage(format!("missing selected parent '{cov}' for node '{node}'"))
                })?;
                let margin = &model.node_model(cov)?.margin;
                x_u.insert(cov.clone(), margin.pit(*value));
            }
            w.iter()
                .map(|&wi| {
                    let u_y = reg.cond_quantile(wi, &x_u)?;
                    Ok(nm.margin.pit_inv(u_y))
                })
                .collect()
        }
    }
}

/// Propagate conditional medians down the topological order: each root
/// takes its training column's alpha-quantile, every other node the
/// conditional median given the already computed path values of its
/// selected parents.
pub fn cond_median_path(model: &SemModel, alpha: f64) -> Result<Vec<(String, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("alpha {alpha} outside (0,1)")));
    }
    let mut path: Vec<(String, f64)> = Vec::with_capacity(model.topo_order.len());
    let mut values: HashMap<String, f64> = HashMap::new();
    for name in &model.topo_order {
        let node = model.node_model(name)?;
        let value = match &node.regression {
            None => {
                let mut col = model.training_column(name)?.to_vec();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                empirical_quantile(&col, alpha)
            }
            Some(reg) => {
                let mut x_u = HashMap::new();
                for cov in &reg.order {
                    let margin = &model.node_model(cov)?.margin;
                    x_u.insert(cov.clone(), margin.pit(values[cov]));
                }
                let u_med = reg.cond_quantile(0.5, &x_u)?;
                node.margin.pit_inv(u_med)
            }
        };
        values.insert(name.clone(), value);
        path.push((name.clone(), value));
    }
    Ok(path)
}
