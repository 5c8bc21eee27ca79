//! Univariate marginal models: Gaussian, Gaussian mixture fitted by EM with
//! BIC order selection, and Gaussian-kernel density estimation. Each model
//! exposes the density, the probability integral transform and its inverse,
//! and effective-parameter fit statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    empirical_quantile, find_root_monotone, normal_cdf, normal_pdf, normal_quantile,
};

/// Clamp for PIT outputs.
pub const PIT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginKind {
    Gaussian,
    Mixture,
    Kde,
}

impl MarginKind {
    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => MarginKind::Gaussian,
            "mixture" => MarginKind::Mixture,
            "kde" => MarginKind::Kde,
            other => return Err(Error::Usage(format!("unknown margin kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MarginSpec {
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
        converged: bool,
        /// BIC per tried component count, for selection diagnostics.
        k_bics: Vec<f64>,
    },
    Kde {
        sample: Vec<f64>,
        bandwidth: f64,
    },
}

/// A fitted univariate margin with PIT/inverse-PIT and fit statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginModel {
    #[serde(flatten)]
    spec: MarginSpec,
    pub edf: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    /// Range of the training sample, used to bracket inverse transforms.
    lo: f64,
    hi: f64,
}

/// Options for `fit_margin`.
#[derive(Debug, Clone)]
pub struct MarginOptions {
    /// Largest mixture order tried (selection by BIC).
    pub kmax: usize,
    /// Seed driving the EM restarts.
    pub seed: u64,
}

impl Default for MarginOptions {
    fn default() -> Self {
        MarginOptions { kmax: 5, seed: 0 }
    }
}

pub fn fit_margin(x: &[f64], kind: MarginKind, options: &MarginOptions) -> Result<MarginModel> {
    let n = x.len();
    if n < 20 {
        return Err(Error::Insufficient { need: 20, got: n });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Usage(
            "margin data contains non-finite values".into(),
        ));
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return Err(Error::Degenerate("constant column".into()));
    }

    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let sd_ml = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();

    let (spec, edf) = match kind {
        MarginKind::Gaussian => (
            MarginSpec::Gaussian {
                mu: mean,
                sigma: sd_ml,
            },
            2.0,
        ),
        MarginKind::Mixture => {
            if options.kmax < 1 {
                return Err(Error::Usage("mixture kmax must be at least 1".into()));
            }
            let (components, converged, k_bics) = fit_mixture_em(x, options)?;
            let edf = 3.0 * components.len() as f64 - 1.0;
            (
                MarginSpec::Mixture {
                    components,
                    converged,
                    k_bics,
                },
                edf,
            )
        }
        MarginKind::Kde => {
            let mut sorted = x.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let iqr = empirical_quantile(&sorted, 0.75) - empirical_quantile(&sorted, 0.25);
            let spread = if iqr > 0.0 {
                sd_ml.min(iqr / 1.34)
            } else {
                sd_ml
            };
            let bandwidth = 0.9 * spread * nf.powf(-0.2);
            if bandwidth <= 0.0 {
                return Err(Error::Degenerate("zero kde bandwidth".into()));
            }
            let edf = kde_edf(x, bandwidth);
            (
                MarginSpec::Kde {
                    sample: x.to_vec(),
                    bandwidth,
                },
                edf,
            )
        }
    };

    let mut model = MarginModel {
        spec,
        edf,
        loglik: 0.0,
        aic: 0.0,
        bic: 0.0,
        n,
        lo,
        hi,
    };
    model.loglik = match &model.spec {
        // Leave-one-out for the kde to avoid the self-kernel bias.
        MarginSpec::Kde { sample, bandwidth } => kde_loo_loglik(sample, *bandwidth),
        _ => x.iter().map(|&v| model.pdf(v).max(1e-300).ln()).sum(),
    };
    model.aic = -2.0 * model.loglik + 2.0 * model.edf;
    model.bic = -2.0 * model.loglik + nf.ln() * model.edf;
    Ok(model)
}

impl MarginModel {
    pub fn kind(&self) -> MarginKind {
        match self.spec {
            MarginSpec::Gaussian { .. } => MarginKind::Gaussian,
            MarginSpec::Mixture { .. } => MarginKind::Mixture,
            MarginSpec::Kde { .. } => MarginKind::Kde,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.spec {
            MarginSpec::Gaussian { mu, sigma } => normal_pdf((x - mu) / sigma) / sigma,
            MarginSpec::Mixture { components, .. } => components
                .iter()
                .map(|c| c.weight * normal_pdf((x - c.mu) / c.sigma) / c.sigma)
                .sum(),
            MarginSpec::Kde { sample, bandwidth } => {
                let s: f64 = sample
                    .iter()
                    .map(|&xi| normal_pdf((x - xi) / bandwidth))
                    .sum();
                s / (sample.len() as f64 * bandwidth)
            }
        }
    }

    /// Model CDF without clamping.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.spec {
            MarginSpec::Gaussian { mu, sigma } => normal_cdf((x - mu) / sigma),
            MarginSpec::Mixture { components, .. } => components
                .iter()
                .map(|c| c.weight * normal_cdf((x - c.mu) / c.sigma))
                .sum(),
            MarginSpec::Kde { sample, bandwidth } => {
                let s: f64 = sample
                    .iter()
                    .map(|&xi| normal_cdf((x - xi) / bandwidth))
                    .sum();
                s / sample.len() as f64
            }
        }
    }

    /// Probability integral transform, clamped inside (0,1).
    pub fn pit(&self, x: f64) -> f64 {
        self.cdf(x).clamp(PIT_EPS, 1.0 - PIT_EPS)
    }

    /// Inverse PIT by closed form (Gaussian) or monotone root-find.
    pub fn pit_inv(&self, u: f64) -> f64 {
        let u = u.clamp(PIT_EPS, 1.0 - PIT_EPS);
        match &self.spec {
            MarginSpec::Gaussian { mu, sigma } => mu + sigma * normal_quantile(u),
            _ => {
                let span = (self.hi - self.lo).max(1e-6);
                let (mut a, mut b) = (self.lo - 10.0 * span, self.hi + 10.0 * span);
                // Widen until the bracket surrounds the target.
                while self.cdf(a) > u {
                    a -= span;
                }
                while self.cdf(b) < u {
                    b += span;
                }
                find_root_monotone(|x| self.cdf(x) - u, a, b, 1e-10, 500)
                    .expect("margin cdf is continuous and monotone")
            }
        }
    }

    pub fn mixture_components(&self) -> Option<&[MixtureComponent]> {
        match &self.spec {
            MarginSpec::Mixture { components, .. } => Some(components),
            _ => None,
        }
    }

    pub fn mixture_bic_trace(&self) -> Option<&[f64]> {
        match &self.spec {
            MarginSpec::Mixture { k_bics, .. } => Some(k_bics),
            _ => None,
        }
    }

    pub fn gaussian_params(&self) -> Option<(f64, f64)> {
        match &self.spec {
            MarginSpec::Gaussian { mu, sigma } => Some((*mu, *sigma)),
            _ => None,
        }
    }

    pub fn kde_bandwidth(&self) -> Option<f64> {
        match &self.spec {
            MarginSpec::Kde { bandwidth, .. } => Some(*bandwidth),
            _ => None,
        }
    }

    pub fn sample_range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Fit statistics of a margin on its training data.
pub fn margin_gof(model: &MarginModel, x: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if x.len() != model.n {
        return Err(Error::Usage(format!(
            "gof data length {} does not match the fitted sample size {}",
            x.len(),
            model.n
        )));
    }
    Ok((model.loglik, model.aic, model.bic, model.edf))
}

fn kde_loo_loglik(sample: &[f64], h: f64) -> f64 {
    let n = sample.len();
    let k0 = normal_pdf(0.0) / h;
    (0..n)
        .map(|i| {
            let s: f64 = sample
                .iter()
                .map(|&xj| normal_pdf((sample[i] - xj) / h) / h)
                .sum();
            (((s - k0) / (n as f64 - 1.0)).max(1e-300)).ln()
        })
        .sum()
}

/// Trace of the kernel smoother: sum of each point's self-weight share.
fn kde_edf(sample: &[f64], h: f64) -> f64 {
    let k0 = normal_pdf(0.0) / h;
    sample
        .iter()
        .map(|&xi| {
            let s: f64 = sample.iter().map(|&xj| normal_pdf((xi - xj) / h) / h).sum();
            k0 / s
        })
        .sum()
}

/// EM for a k-component Gaussian mixture with BIC selection of k and
/// restarted initializations. Returns the winning components, a
/// convergence flag, and the per-k BIC trace.
fn fit_mixture_em(
    x: &[f64],
    options: &MarginOptions,
) -> Result<(Vec<MixtureComponent>, bool, Vec<f64>)> {
    use rand::SeedableRng;
    let n = x.len() as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sigma_floor = (1e-6 * sd).max(1e-12);

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(options.seed ^ 0x6d61_7267_696e);
    let mut best: Option<(f64, Vec<MixtureComponent>, bool)> = None;
    let mut k_bics = Vec::new();

    for k in 1..=options.kmax {
        let mut best_k: Option<(f64, Vec<MixtureComponent>, bool)> = None;
        let restarts = if k == 1 { 1 } else { 10 };
        for r in 0..restarts {
            let mut comps: Vec<MixtureComponent> = (0..k)
                .map(|j| {
                    let q = (j as f64 + 0.5) / k as f64;
                    let jitter = if r == 0 {
                        0.0
                    } else {
                        rng.gen_range(-0.3..0.3) * sd
                    };
                    MixtureComponent {
                        weight: 1.0 / k as f64,
                        mu: empirical_quantile(&sorted, q) + jitter,
                        sigma: sd.max(sigma_floor),
                    }
                })
                .collect();

            let mut prev_ll = f64::NEG_INFINITY;
            let mut converged = false;
            let mut resp = vec![0.0f64; x.len() * k];
            for _ in 0..500 {
                // E step with log-sum-exp.
                let mut ll = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    let logs: Vec<f64> = comps
                        .iter()
                        .map(|c| {
                            c.weight.max(1e-300).ln()
                                + (normal_pdf((xi - c.mu) / c.sigma) / c.sigma)
                                    .max(1e-300)
                                    .ln()
                        })
                        .collect();
                    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = logs.iter().map(|&l| (l - m).exp()).sum();
                    ll += m + sum.ln();
                    for j in 0..k {
                        resp[i * k + j] = (logs[j] - m).exp() / sum;
                    }
                }
                if (ll - prev_ll).abs() < 1e-8 {
                    converged = true;
                    prev_ll = ll;
                    break;
                }
                prev_ll = ll;
                // M step.
                for j in 0..k {
                    let wsum: f64 = (0..x.len()).map(|i| resp[i * k + j]).sum();
                    let w = (wsum / n).max(1e-10);
                    let mu = (0..x.len()).map(|i| resp[i * k + j] * x[i]).sum::<f64>()
                        / wsum.max(1e-300);
                    let var = (0..x.len())
                        .map(|i| resp[i * k + j] * (x[i] - mu).powi(2))
                        .sum::<f64>()
                        / wsum.max(1e-300);
                    comps[j] = MixtureComponent {
                        weight: w,
                        mu,
                        sigma: var.sqrt().max(sigma_floor),
                    };
                }
                let total_w: f64 = comps.iter().map(|c| c.weight).sum();
                for c in comps.iter_mut() {
                    c.weight /= total_w;
                }
            }
            if best_k.as_ref().is_none_or(|(ll, _, _)| prev_ll > *ll) {
                best_k = Some((prev_ll, comps, converged));
            }
        }
        let (ll, comps, converged) = best_k.unwrap();
        let edf = 3.0 * k as f64 - 1.0;
        let bic = -2.0 * ll + n.ln() * edf;
        k_bics.push(bic);
        let best_bic = best.as_ref().map(|(b, _, _)| *b).unwrap_or(f64::INFINITY);
        if bic < best_bic {
            best = Some((bic, comps, converged));
        }
    }

    let (_, comps, converged) = best.unwrap();
    Ok((comps, converged, k_bics))
}
