//! Nonparametric bivariate copula density estimation.
//!
//! Transformation kernel estimator: pseudo-observations are mapped to the
//! z-scale with the normal quantile, a bivariate Gaussian kernel density
//! with a normal-reference bandwidth matrix is fitted there, and the copula
//! density is read back as the ratio to the product of standard normal
//! densities. Evaluation goes through a precomputed 201x201 grid with
//! cumulative tables for the h-functions.

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{HDir, PseudoObs, CLAMP_EPS};
use crate::error::{Error, Result};
use crate::numeric::{normal_pdf, normal_quantile};

/// Grid cells per axis for density and cumulative caching.
pub const GRID_M: usize = 201;

#[inline]
fn center(i: usize) -> f64 {
    (i as f64 + 0.5) / GRID_M as f64
}

/// A fitted nonparametric pair copula.
#[derive(Debug, Clone)]
pub struct NpCopula {
    pub n: usize,
    /// Kernel covariance matrix (z-scale).
    pub bandwidth: [[f64; 2]; 2],
    pub edf: f64,
    pub loglik: f64,
    /// Density values at cell centers, row-major in the first argument;
    /// globally rescaled so the midpoint double sum is exactly one.
    grid: Vec<f64>,
    /// Per second-argument column: normalized cumulative over the first
    /// argument at the M+1 cell boundaries.
    cum_second: Vec<f64>,
    /// Per first-argument row: normalized cumulative over the second.
    cum_first: Vec<f64>,
}

impl NpCopula {
    pub fn fit(data: &PseudoObs) -> Result<Self> {
        let n = data.n();
        if n < 30 {
            return Err(Error::Insufficient { need: 30, got: n });
        }
        let zu: Vec<f64> = data.u.iter().map(|&u| normal_quantile(u)).collect();
        let zv: Vec<f64> = data.v.iter().map(|&v| normal_quantile(v)).collect();

        // Normal-reference bandwidth: sample covariance scaled by n^(-1/3).
        let nf = n as f64;
        let mu = zu.iter().sum::<f64>() / nf;
        let mv = zv.iter().sum::<f64>() / nf;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for i in 0..n {
            let dx = zu[i] - mu;
            let dy = zv[i] - mv;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        sxx /= nf - 1.0;
        syy /= nf - 1.0;
        sxy /= nf - 1.0;
        // Keep the matrix safely positive definite.
        let cap = 0.999 * (sxx * syy).sqrt();
        sxy = sxy.clamp(-cap, cap);
        let scale = nf.powf(-1.0 / 3.0);
        let h = [[sxx * scale, sxy * scale], [sxy * scale, syy * scale]];

        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        let a11 = h[1][1] / det;
        let a22 = h[0][0] / det;
        let a12 = -h[0][1] / det;
        let norm_const = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
        let kernel = move |dx: f64, dy: f64| {
            norm_const * (-0.5 * (a11 * dx * dx + 2.0 * a12 * dx * dy + a22 * dy * dy)).exp()
        };

        // Leave-one-out log-likelihood and smoother-trace edf in one pass.
        let k0 = norm_const;
        let stats: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s_all = 0.0;
                for j in 0..n {
                    s_all += kernel(zu[i] - zu[j], zv[i] - zv[j]);
                }
                let loo = ((s_all - k0) / (nf - 1.0)).max(1e-300);
                let c_loo = loo / (normal_pdf(zu[i]) * normal_pdf(zv[i]));
                (c_loo.ln(), k0 / s_all)
            })
            .collect();
        let loglik: f64 = stats.iter().map(|s| s.0).sum();
        let edf: f64 = stats.iter().map(|s| s.1).sum();

        // Density grid on (0,1)^2 cell centers.
        let zgrid: Vec<f64> = (0..GRID_M).map(|i| normal_quantile(center(i))).collect();
        let pgrid: Vec<f64> = zgrid.iter().map(|&z| normal_pdf(z)).collect();
        let mut grid = vec![0.0f64; GRID_M * GRID_M];
        grid.par_chunks_mut(GRID_M)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, cell) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += kernel(zgrid[i] - zu[k], zgrid[j] - zv[k]);
                    }
                    *cell = s / (nf * pgrid[i] * pgrid[j]);
                }
            });
        let cell_area = 1.0 / (GRID_M * GRID_M) as f64;
        let total: f64 = grid.iter().sum::<f64>() * cell_area;
        for g in grid.iter_mut() {
            *g /= total;
        }

        let (cum_second, cum_first) = build_cumulatives(&grid);
        Ok(NpCopula {
            n,
            bandwidth: h,
            edf,
            loglik,
            grid,
            cum_second,
            cum_first,
        })
    }

    /// Copula density by bilinear interpolation of the cached grid.
    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        let (i0, wi) = cell_weight(u);
        let (j0, wj) = cell_weight(v);
        let g = |i: usize, j: usize| self.grid[i * GRID_M + j];
        let a = g(i0, j0) * (1.0 - wi) + g(i0 + 1, j0) * wi;
        let b = g(i0, j0 + 1) * (1.0 - wi) + g(i0 + 1, j0 + 1) * wi;
        (a * (1.0 - wj) + b * wj).max(0.0)
    }

    /// h(u|v) (given-second) or h(v|u) (given-first) from the cumulative
    /// tables, linear between boundaries and blended across the two
    /// neighboring conditioning cells.
    pub fn hfunc(&self, dir: HDir, u: f64, v: f64) -> f64 {
        let (free, cond, cum) = match dir {
            HDir::GivenSecond => (u, v, &self.cum_second),
            HDir::GivenFirst => (v, u, &self.cum_first),
        };
        let (c0, wc) = cell_weight(cond);
        let t = (free.clamp(0.0, 1.0)) * GRID_M as f64;
        let k = (t.floor() as usize).min(GRID_M - 1);
        let fr = t - k as f64;
        let val = |col: usize| {
            let base = col * (GRID_M + 1);
            cum[base + k] + fr * (cum[base + k + 1] - cum[base + k])
        };
        let h = val(c0) * (1.0 - wc) + val(c0 + 1) * wc;
        h.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    }

    /// Exact inverse of the piecewise-linear `hfunc` interpolant.
    pub fn hinv(&self, dir: HDir, p: f64, cond: f64) -> f64 {
        let cum = match dir {
            HDir::GivenSecond => &self.cum_second,
            HDir::GivenFirst => &self.cum_first,
        };
        let (c0, wc) = cell_weight(cond);
        let knot = |k: usize| {
            cum[c0 * (GRID_M + 1) + k] * (1.0 - wc) + cum[(c0 + 1) * (GRID_M + 1) + k] * wc
        };
        let p = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        // Binary search the bracketing boundary pair.
        let (mut lo, mut hi) = (0usize, GRID_M);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if knot(mid) <= p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (knot(lo), knot(hi));
        let fr = if b > a { (p - a) / (b - a) } else { 0.5 };
        let u = (lo as f64 + fr) / GRID_M as f64;
        u.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    }

    pub fn to_json(&self) -> NpCopulaJson {
        let mut bytes = Vec::with_capacity(self.grid.len() * 8);
        for &g in &self.grid {
            bytes.extend_from_slice(&g.to_le_bytes());
        }
        NpCopulaJson {
            n: self.n,
            bandwidth: self.bandwidth,
            edf: self.edf,
            loglik: self.loglik,
            grid_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn from_json(j: NpCopulaJson) -> Result<Self> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&j.grid_base64)
            .map_err(|e| Error::Usage(format!("invalid grid payload: {e}")))?;
        if bytes.len() != GRID_M * GRID_M * 8 {
            return Err(Error::Usage(format!(
                "grid payload has {} bytes, expected {}",
                bytes.len(),
                GRID_M * GRID_M * 8
            )));
        }
        let grid: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (cum_second, cum_first) = build_cumulatives(&grid);
        Ok(NpCopula {
            n: j.n,
            bandwidth: j.bandwidth,
            edf: j.edf,
            loglik: j.loglik,
            grid,
            cum_second,
            cum_first,
        })
    }

    #[cfg(test)]
    pub(crate) fn grid_value(&self, i: usize, j: usize) -> f64 {
        self.grid[i * GRID_M + j]
    }
}

/// Serialized payload for a nonparametric pair copula.
#[derive(Serialize, Deserialize)]
pub struct NpCopulaJson {
    pub n: usize,
    pub bandwidth: [[f64; 2]; 2],
    pub edf: f64,
    pub loglik: f64,
    pub grid_base64: String,
}

/// Map a conditioning coordinate to its left cell index and blend weight.
#[inline]
fn cell_weight(x: f64) -> (usize, f64) {
    let t = x.clamp(0.0, 1.0) * GRID_M as f64 - 0.5;
    if t <= 0.0 {
        (0, 0.0)
    } else if t >= (GRID_M - 1) as f64 {
        (GRID_M - 2, 1.0)
    } else {
        let i = (t.floor() as usize).min(GRID_M - 2);
        (i, t - i as f64)
    }
}

/// Normalized cumulative tables along each axis: for every conditioning
/// cell, the running integral of the density over the free axis rescaled
/// to end at one.
fn build_cumulatives(grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut cum_second = vec![0.0f64; GRID_M * (GRID_M + 1)];
    let mut cum_first = vec![0.0f64; GRID_M * (GRID_M + 1)];
    for j in 0..GRID_M {
        let base = j * (GRID_M + 1);
        let mut acc = 0.0;
        for i in 0..GRID_M {
            acc += grid[i * GRID_M + j];
            cum_second[base + i + 1] = acc;
        }
        if acc > 0.0 {
            for k in 1..=GRID_M {
                cum_second[base + k] /= acc;
            }
        }
    }
    for i in 0..GRID_M {
        let base = i * (GRID_M + 1);
        let mut acc = 0.0;
        for j in 0..GRID_M {
            acc += grid[i * GRID_M + j];
            cum_first[base + j + 1] = acc;
        }
        if acc > 0.0 {
            for k in 1..=GRID_M {
                cum_first[base + k] /= acc;
            }
        }
    }
    (cum_second, cum_first)
}
