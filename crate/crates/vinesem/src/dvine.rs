//! D-vine copula regression: one response ordered first on a path, with
//! covariates appended by greedy forward selection. The conditional
//! distribution, density, and quantiles of the response given the selected
//! covariates are then available in closed form through nested
//! h-functions, with no numerical integration.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{
    clamp_unit, select_pair_family, Family, HDir, PairCopula, PairCriterion, PseudoObs,
};
use crate::error::{Error, Result};

/// Forward-selection criterion: conditional log-likelihood, or its AIC/BIC
/// penalized versions over the response-row effective parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelCriterion {
    Cll,
    Caic,
    Cbic,
}

impl SelCriterion {
    /// Lower is better.
    pub fn value(self, cll: f64, edf: f64, n: usize) -> f64 {
        match self {
            SelCriterion::Cll => -cll,
            SelCriterion::Caic => -2.0 * cll + 2.0 * edf,
            SelCriterion::Cbic => -2.0 * cll + (n as f64).ln() * edf,
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "cll" => SelCriterion::Cll,
            "caic" => SelCriterion::Caic,
            "cbic" => SelCriterion::Cbic,
            other => return Err(Error::Usage(format!("unknown criterion '{other}'"))),
        })
    }
}

/// Pair-copula catalogue used when fitting vine edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaConfig {
    pub families: Vec<Family>,
    pub allow_nonparametric: bool,
    pub pair_criterion: PairCriterion,
}

impl CopulaConfig {
    pub fn gaussian_only() -> Self {
        CopulaConfig {
            families: vec![Family::Gaussian],
            allow_nonparametric: false,
            pair_criterion: PairCriterion::Aic,
        }
    }

    pub fn parametric() -> Self {
        CopulaConfig {
            families: vec![
                Family::Bb8,
                Family::Clayton,
                Family::Frank,
                Family::Gaussian,
                Family::Gumbel,
                Family::Joe,
            ],
            allow_nonparametric: false,
            pair_criterion: PairCriterion::Aic,
        }
    }

    pub fn parametric_nonparametric() -> Self {
        CopulaConfig {
            allow_nonparametric: true,
            ..Self::parametric()
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => Self::gaussian_only(),
            "parametric" => Self::parametric(),
            "pnp" => Self::parametric_nonparametric(),
            other => return Err(Error::Usage(format!("unknown copula set '{other}'"))),
        })
    }
}

/// One accepted forward-selection step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionStep {
    pub covariate: String,
    /// Cumulative conditional log-likelihood after the step.
    pub cll: f64,
    /// Cumulative response-row effective parameters.
    pub edf: f64,
    /// Criterion value after the step (lower is better).
    pub criterion_value: f64,
}

/// A fitted D-vine regression of one response on an ordered covariate
/// subset. `trees[t-1][e]` is the pair copula of tree t at path offset e;
/// offset 0 pairs the response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DVineRegModel {
    pub response: String,
    pub order: Vec<String>,
    pub trees: Vec<Vec<PairCopula>>,
    pub criterion: SelCriterion,
    pub trace: Vec<SelectionStep>,
    pub n: usize,
}

fn validate_unit(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Usage(format!(
            "pseudo-observations for '{name}' must lie strictly inside (0,1)"
        )));
    }
    Ok(())
}

/// Greedy forward selection of covariates into a D-vine with the response
/// first. At each step every unselected candidate is tentatively appended
/// (fitting the full new diagonal of pair copulas), and the one that most
/// improves the criterion is kept; selection stops when no candidate
/// strictly improves it.
pub fn fit_dvine_reg(
    response: &str,
    resp_u: &[f64],
    candidates: &[(String, Vec<f64>)],
    criterion: SelCriterion,
    config: &CopulaConfig,
) -> Result<DVineRegModel> {
    let n = resp_u.len();
    if n < 30 {
        return Err(Error::Insufficient { need: 30, got: n });
    }
    validate_unit(response, resp_u)?;
    for (name, xs) in candidates {
        if xs.len() != n {
            return Err(Error::Usage(format!(
                "covariate '{name}' has {} rows, response has {n}",
                xs.len()
            )));
        }
        validate_unit(name, xs)?;
    }

    let mut builder = Builder::new(resp_u, n, criterion, config);
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    let mut order = Vec::new();
    let mut trace = Vec::new();

    while !remaining.is_empty() {
        let current = builder.criterion_value();
        // Tentative fits are independent; evaluate candidates in parallel
        // and reduce deterministically in candidate order.
        let appended: Vec<(usize, Result<Appended>)> = remaining
            .par_iter()
            .map(|&ci| (ci, builder.try_append(&candidates[ci].1)))
            .collect();
        // Candidates arrive in candidate order; strict comparison keeps the
        // earliest on ties.
        let mut best: Option<(f64, usize, Appended)> = None;
        for (ci, res) in appended {
            let app = res?;
            let val = criterion.value(builder.cll + app.resp_loglik, builder.edf + app.resp_edf, n);
            if best.as_ref().is_none_or(|(bv, _, _)| val < *bv - 1e-12) {
                best = Some((val, ci, app));
            }
        }
        let Some((val, ci, app)) = best else { break };
        if val >= current - 1e-10 {
            break; // no strict improvement
        }
        builder.accept(&candidates[ci].1, app);
        order.push(candidates[ci].0.clone());
        remaining.retain(|&r| r != ci);
        trace.push(SelectionStep {
            covariate: candidates[ci].0.clone(),
            cll: builder.cll,
            edf: builder.edf,
            criterion_value: val,
        });
    }

    Ok(DVineRegModel {
        response: response.to_string(),
        order,
        trees: builder.trees,
        criterion,
        trace,
        n,
    })
}

/// Result of tentatively appending one covariate: the new diagonal of pair
/// copulas together with the argument arrays needed to update the state.
struct Appended {
    /// (tree index t, fitted pair, left args, right args).
    diagonal: Vec<(usize, PairCopula, Vec<f64>, Vec<f64>)>,
    resp_loglik: f64,
    resp_edf: f64,
    /// B(0, s+1): conditional CDF of the new covariate given the prefix.
    b0_new: Vec<f64>,
}

/// Incremental D-vine state over the training data.
struct Builder<'a> {
    n: usize,
    config: &'a CopulaConfig,
    criterion: SelCriterion,
    /// Number of covariates accepted so far.
    s: usize,
    trees: Vec<Vec<PairCopula>>,
    /// resp_chain[t-1] = F(resp | first t-1 covariates); index 0 holds the
    /// raw response pseudo-observations.
    resp_chain: Vec<Vec<f64>>,
    /// b0[t-1] = F(covariate t | covariates 1..t-1).
    b0: Vec<Vec<f64>>,
    /// frontier_a[e-1] = F(covariate e | covariates e+1..s), the left
    /// argument for the next diagonal at path offset e.
    frontier_a: Vec<Vec<f64>>,
    cll: f64,
    edf: f64,
}

impl<'a> Builder<'a> {
    fn new(resp_u: &[f64], n: usize, criterion: SelCriterion, config: &'a CopulaConfig) -> Self {
        Builder {
            n,
            config,
            criterion,
            s: 0,
            trees: Vec::new(),
            resp_chain: vec![resp_u.iter().map(|&x| clamp_unit(x)).collect()],
            b0: Vec::new(),
            frontier_a: Vec::new(),
            cll: 0.0,
            edf: 0.0,
        }
    }

    fn criterion_value(&self) -> f64 {
        self.criterion.value(self.cll, self.edf, self.n)
    }

    /// Fit the diagonal created by appending one covariate, without
    /// mutating the builder.
    fn try_append(&self, cov_u: &[f64]) -> Result<Appended> {
        let s = self.s;
        let mut b: Vec<f64> = cov_u.iter().map(|&x| clamp_unit(x)).collect();
        let mut diagonal = Vec::with_capacity(s + 1);
        let mut resp_loglik = 0.0;
        let mut resp_edf = 0.0;
        let mut b0_new = Vec::new();
        for t in 1..=(s + 1) {
            let e = s + 1 - t;
            let a: &[f64] = if e == 0 {
                &self.resp_chain[t - 1]
            } else {
                &self.frontier_a[e - 1]
            };
            let data = PseudoObs::new(a.to_vec(), b.clone())?;
            let fit = select_pair_family(
                &data,
                &self.config.families,
                self.config.allow_nonparametric,
                self.config.pair_criterion,
            )?;
            if e == 0 {
                resp_loglik = fit.loglik();
                resp_edf = fit.edf();
                b0_new = b.clone();
                diagonal.push((t, fit, a.to_vec(), b.clone()));
            } else {
                let next_b: Vec<f64> = a
                    .iter()
                    .zip(&b)
                    .map(|(&ai, &bi)| fit.hfunc(HDir::GivenFirst, ai, bi))
                    .collect();
                diagonal.push((t, fit, a.to_vec(), b.clone()));
                b = next_b;
            }
        }
        Ok(Appended {
            diagonal,
            resp_loglik,
            resp_edf,
            b0_new,
        })
    }

    fn accept(&mut self, cov_u: &[f64], app: Appended) {
        let s = self.s;
        let mut new_frontier: Vec<Vec<f64>> = vec![Vec::new(); s + 1];
        for (t, fit, a, b) in app.diagonal {
            let e = s + 1 - t;
            if e >= 1 {
                // A(e, t+1) feeds the next diagonal at offset e.
                new_frontier[e - 1] = a
                    .iter()
                    .zip(&b)
                    .map(|(&ai, &bi)| fit.hfunc(HDir::GivenSecond, ai, bi))
                    .collect();
            } else {
                let next_resp: Vec<f64> = self.resp_chain[t - 1]
                    .iter()
                    .zip(&app.b0_new)
                    .map(|(&ri, &bi)| fit.hfunc(HDir::GivenSecond, ri, bi))
                    .collect();
                self.resp_chain.push(next_resp);
            }
            while self.trees.len() < t {
                self.trees.push(Vec::new());
            }
            self.trees[t - 1].push(fit);
        }
        new_frontier[s] = cov_u.iter().map(|&x| clamp_unit(x)).collect();
        self.frontier_a = new_frontier;
        self.b0.push(app.b0_new);
        self.cll += app.resp_loglik;
        self.edf += app.resp_edf;
        self.s += 1;
    }
}

impl DVineRegModel {
    /// Number of selected covariates.
    pub fn m(&self) -> usize {
        self.order.len()
    }

    /// Conditional log-likelihood accumulated at fit time (sum of the
    /// response-row pair log-likelihoods).
    pub fn fit_cll(&self) -> f64 {
        self.trees.iter().map(|t| t[0].loglik()).sum()
    }

    /// Total effective parameters of the response-row pair copulas.
    pub fn edf(&self) -> f64 {
        self.trees.iter().map(|t| t[0].edf()).sum()
    }

    pub fn caic(&self) -> f64 {
        -2.0 * self.fit_cll() + 2.0 * self.edf()
    }

    pub fn cbic(&self) -> f64 {
        -2.0 * self.fit_cll() + (self.n as f64).ln() * self.edf()
    }

    fn ordered_values(&self, x_u: &HashMap<String, f64>) -> Result<Vec<f64>> {
        self.order
            .iter()
            .map(|name| {
                x_u.get(name)
                    .copied()
                    .map(clamp_unit)
                    .ok_or_else(|| Error::Usage(format!("missing selected covariate '{name}'")))
            })
            .collect()
    }

    /// B(0,t) = F(covariate t | covariates 1..t-1) for one observation.
    fn cov_b0(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        if m == 0 {
            return Vec::new();
        }
        let mut a: Vec<f64> = u.to_vec(); // A(e,1) = u_e, e = 1..m
        let mut b: Vec<f64> = u[1..].to_vec(); // B(e,1) = u_{e+1}, e = 1..m-1
        let mut b0 = vec![u[0]];
        for t in 1..m {
            let edges = &self.trees[t - 1];
            b0.push(edges[1].hfunc(HDir::GivenFirst, a[0], b[0]));
            let reach = m - t; // entries needed at the next level
            let mut a_next = Vec::with_capacity(reach);
            let mut b_next = Vec::with_capacity(reach.saturating_sub(1));
            for e in 1..=reach {
                a_next.push(edges[e].hfunc(HDir::GivenSecond, a[e - 1], b[e - 1]));
            }
            for e in 1..reach {
                b_next.push(edges[e + 1].hfunc(HDir::GivenFirst, a[e], b[e]));
            }
            a = a_next;
            b = b_next;
        }
        b0
    }

    /// Conditional CDF F(response <= y_u | covariates) on the copula scale.
    pub fn cond_cdf(&self, y_u: f64, x_u: &HashMap<String, f64>) -> Result<f64> {
        let u = self.ordered_values(x_u)?;
        let b0 = self.cov_b0(&u);
        let mut r = clamp_unit(y_u);
        for t in 1..=self.m() {
            r = self.trees[t - 1][0].hfunc(HDir::GivenSecond, r, b0[t - 1]);
        }
        Ok(r)
    }

    /// Conditional quantile at level alpha, on the copula scale, via the
    /// h-inverses applied in reverse tree order.
    pub fn cond_quantile(&self, alpha: f64, x_u: &HashMap<String, f64>) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Usage(format!("alpha {alpha} outside (0,1)")));
        }
        let u = self.ordered_values(x_u)?;
        let b0 = self.cov_b0(&u);
        let mut r = alpha;
        for t in (1..=self.m()).rev() {
            r = self.trees[t - 1][0].hinv(HDir::GivenSecond, r, b0[t - 1])?;
        }
        Ok(r)
    }

    /// Log of the copula factor of the conditional density at one point.
    pub fn log_cond_factor(&self, y_u: f64, x_u: &HashMap<String, f64>) -> Result<f64> {
        let u = self.ordered_values(x_u)?;
        Ok(self.log_cond_factor_ordered(y_u, &u))
    }

    fn log_cond_factor_ordered(&self, y_u: f64, u: &[f64]) -> f64 {
        let b0 = self.cov_b0(u);
        let mut r = clamp_unit(y_u);
        let mut acc = 0.0;
        for t in 1..=self.m() {
            let edge = &self.trees[t - 1][0];
            acc += edge.log_pdf(r, b0[t - 1]);
            r = edge.hfunc(HDir::GivenSecond, r, b0[t - 1]);
        }
        acc
    }

    /// Conditional density: copula factor times the margin density at y
    /// supplied by the caller.
    pub fn cond_pdf(
        &self,
        y_u: f64,
        x_u: &HashMap<String, f64>,
        margin_density_at_y: f64,
    ) -> Result<f64> {
        Ok(self.log_cond_factor(y_u, x_u)?.exp() * margin_density_at_y)
    }

    /// Conditional log-likelihood recomputed on data (sum over rows of the
    /// log copula factor).
    pub fn cll(&self, resp_u: &[f64], x_u: &HashMap<String, Vec<f64>>) -> Result<f64> {
        let cols: Vec<&[f64]> = self
            .order
            .iter()
            .map(|name| {
                x_u.get(name)
                    .map(|v| v.as_slice())
                    .ok_or_else(|| Error::Usage(format!("missing selected covariate '{name}'")))
            })
            .collect::<Result<_>>()?;
        for c in &cols {
            if c.len() != resp_u.len() {
                return Err(Error::Usage("covariate/response length mismatch".into()));
            }
        }
        let mut total = 0.0;
        let mut row = vec![0.0; self.m()];
        for i in 0..resp_u.len() {
            for (j, c) in cols.iter().enumerate() {
                row[j] = clamp_unit(c[i]);
            }
            total += self.log_cond_factor_ordered(resp_u[i], &row);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{ParametricCopula, Rotation};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    use crate::numeric::{normal_cdf, normal_quantile};

    /// Draw from a trivariate normal with the given correlation matrix
    /// (unit variances) and return u-scale columns via the true margins.
    fn trivariate_gaussian_u(
        r: &[[f64; 3]; 3],
        n: usize,
        seed: u64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        // Cholesky of r.
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = r[i][j];
                for (lik, ljk) in l[i].iter().zip(&l[j]).take(j) {
                    s -= lik * ljk;
                }
                if i == j {
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
        let mut raw = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..3)
                .map(|_| normal_quantile(rng.gen_range(1e-12..1.0 - 1e-12)))
                .collect();
            let mut x = [0.0; 3];
            for i in 0..3 {
                for k in 0..=i {
                    x[i] += l[i][k] * z[k];
                }
            }
            raw.push(x.to_vec());
            for i in 0..3 {
                cols[i].push(normal_cdf(x[i]));
            }
        }
        let c2 = cols.pop().unwrap();
        let c1 = cols.pop().unwrap();
        let c0 = cols.pop().unwrap();
        (c0, c1, c2, raw)
    }

    fn xmap(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn empty_model_is_identity() {
        let model = DVineRegModel {
            response: "y".into(),
            order: vec![],
            trees: vec![],
            criterion: SelCriterion::Caic,
            trace: vec![],
            n: 100,
        };
        let x = xmap(&[]);
        assert_abs_diff_eq!(model.cond_cdf(0.42, &x).unwrap(), 0.42, epsilon = 1e-12);
        assert_abs_diff_eq!(model.cond_quantile(0.5, &x).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(model.cond_pdf(0.3, &x, 2.5).unwrap(), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(model.fit_cll(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn independent_response_selects_nothing() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let n = 1000;
        let resp: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let cands: Vec<(String, Vec<f64>)> = (0..3)
            .map(|i| (format!("x{i}"), (0..n).map(|_| rng.gen()).collect()))
            .collect();
        let model = fit_dvine_reg(
            "y",
            &resp,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::parametric(),
        )
        .unwrap();
        assert_eq!(model.m(), 0, "selected {:?}", model.order);
    }

    #[test]
    fn selects_strong_parent_first_and_improves_strictly() {
        // y driven by x0 strongly and x1 weakly; x2 independent.
        let spec_strong =
            ParametricCopula::new(Family::Gaussian, Rotation::R0, vec![0.85]).unwrap();
        let spec_weak = ParametricCopula::new(Family::Gaussian, Rotation::R0, vec![0.3]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let n = 1500;
        let mut y = Vec::new();
        let mut x0 = Vec::new();
        let mut x1 = Vec::new();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        for _ in 0..n {
            let yy: f64 = rng.gen();
            y.push(yy);
            x0.push(spec_strong.hinv(HDir::GivenSecond, rng.gen(), yy).unwrap());
            x1.push(spec_weak.hinv(HDir::GivenSecond, rng.gen(), yy).unwrap());
        }
        let cands = vec![
            ("x0".to_string(), x0),
            ("x1".to_string(), x1),
            ("x2".to_string(), x2),
        ];
        let model = fit_dvine_reg(
            "y",
            &y,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::parametric(),
        )
        .unwrap();
        assert_eq!(model.order[0], "x0");
        assert!(!model.order.contains(&"x2".to_string()));
        // Trace strictly improves.
        let mut prev = 0.0;
        for step in &model.trace {
            assert!(step.criterion_value < prev - 1e-10);
            prev = step.criterion_value;
        }
    }

    #[test]
    fn gaussian_vine_matches_conditional_normal_oracle() {
        let r = [[1.0, 0.6, 0.4], [0.6, 1.0, 0.3], [0.4, 0.3, 1.0]];
        let (y_u, x1_u, x2_u, _) = trivariate_gaussian_u(&r, 5000, 11);
        let cands = vec![("x1".to_string(), x1_u), ("x2".to_string(), x2_u)];
        let model = fit_dvine_reg(
            "y",
            &y_u,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::gaussian_only(),
        )
        .unwrap();
        assert_eq!(model.m(), 2);

        // Analytic conditional law of X0 | X1 = a, X2 = b.
        let s11 = [[1.0, 0.3], [0.3, 1.0]];
        let det = s11[0][0] * s11[1][1] - s11[0][1] * s11[1][0];
        let inv = [
            [s11[1][1] / det, -s11[0][1] / det],
            [-s11[1][0] / det, s11[0][0] / det],
        ];
        let s01 = [0.6, 0.4];
        let w = [
            s01[0] * inv[0][0] + s01[1] * inv[1][0],
            s01[0] * inv[0][1] + s01[1] * inv[1][1],
        ];
        let cvar = 1.0 - (w[0] * s01[0] + w[1] * s01[1]);

        for &(a, b) in &[(0.5, -0.3), (-1.0, 0.8), (0.0, 0.0), (1.2, 1.2)] {
            let cmean = w[0] * a + w[1] * b;
            let x = xmap(&[("x1", normal_cdf(a)), ("x2", normal_cdf(b))]);
            for &y in &[-1.0, 0.0, 0.7, 1.5] {
                let got = model.cond_cdf(normal_cdf(y), &x).unwrap();
                let expect = normal_cdf((y - cmean) / cvar.sqrt());
                assert!(
                    (got - expect).abs() < 0.02,
                    "cond cdf {got} vs {expect} at y={y} x=({a},{b})"
                );
            }
            // Median through the quantile path matches the conditional mean.
            let med_u = model.cond_quantile(0.5, &x).unwrap();
            let med = normal_quantile(med_u);
            assert!((med - cmean).abs() < 0.06, "median {med} vs mean {cmean}");
        }
    }

    #[test]
    fn quantiles_roundtrip_and_never_cross() {
        let r = [[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]];
        let (y_u, x1_u, x2_u, _) = trivariate_gaussian_u(&r, 2000, 21);
        let cands = vec![("x1".to_string(), x1_u), ("x2".to_string(), x2_u)];
        let model = fit_dvine_reg(
            "y",
            &y_u,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::parametric(),
        )
        .unwrap();
        let x = xmap(&[("x1", 0.35), ("x2", 0.7)]);
        for &alpha in &[0.1, 0.5, 0.9] {
            let q = model.cond_quantile(alpha, &x).unwrap();
            let back = model.cond_cdf(q, &x).unwrap();
            assert!((back - alpha).abs() < 1e-7, "roundtrip {back} vs {alpha}");
        }
        let mut prev = 0.0;
        for i in 1..99 {
            let q = model.cond_quantile(i as f64 / 100.0, &x).unwrap();
            assert!(q > prev, "quantile crossing at alpha {}", i as f64 / 100.0);
            prev = q;
        }
        // cond_cdf is monotone in y_u.
        assert!(
            model.cond_cdf(0.2, &x).unwrap() < model.cond_cdf(0.8, &x).unwrap(),
            "cond cdf not monotone"
        );
    }

    #[test]
    fn conditional_density_normalizes() {
        let r = [[1.0, 0.55, 0.0], [0.55, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (y_u, x1_u, _, _) = trivariate_gaussian_u(&r, 3000, 31);
        let cands = vec![("x1".to_string(), x1_u)];
        let model = fit_dvine_reg(
            "y",
            &y_u,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::parametric(),
        )
        .unwrap();
        for &x1 in &[0.25, 0.5, 0.8] {
            let x = xmap(&[("x1", x1)]);
            // Integrate the conditional density over the real line through
            // the standard normal margin.
            let total = crate::numeric::adaptive_simpson(
                |y: f64| {
                    let u = normal_cdf(y);
                    let margin = crate::numeric::normal_pdf(y);
                    model.cond_pdf(u, &x, margin).unwrap()
                },
                -8.0,
                8.0,
                1e-8,
            );
            assert!((total - 1.0).abs() < 1e-2, "integral {total} at x1={x1}");
        }
    }

    #[test]
    fn cll_matches_fit_for_parametric_pairs() {
        let r = [[1.0, 0.5, 0.3], [0.5, 1.0, 0.2], [0.3, 0.2, 1.0]];
        let (y_u, x1_u, x2_u, _) = trivariate_gaussian_u(&r, 1000, 41);
        let cands = vec![
            ("x1".to_string(), x1_u.clone()),
            ("x2".to_string(), x2_u.clone()),
        ];
        let model = fit_dvine_reg(
            "y",
            &y_u,
            &cands,
            SelCriterion::Caic,
            &CopulaConfig::gaussian_only(),
        )
        .unwrap();
        let mut data = HashMap::new();
        data.insert("x1".to_string(), x1_u);
        data.insert("x2".to_string(), x2_u);
        let recomputed = model.cll(&y_u, &data).unwrap();
        assert_abs_diff_eq!(recomputed, model.fit_cll(), epsilon = 1e-6);
        assert_abs_diff_eq!(
            model.caic(),
            -2.0 * model.fit_cll() + 2.0 * model.edf(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn usage_errors_for_bad_inputs() {
        let resp = vec![0.5; 100];
        let cands = vec![("x".to_string(), vec![0.5; 99])];
        assert!(matches!(
            fit_dvine_reg(
                "y",
                &resp,
                &cands,
                SelCriterion::Caic,
                &CopulaConfig::parametric()
            ),
            Err(Error::Usage(_))
        ));
        let bad = vec![("x".to_string(), vec![1.5; 100])];
        assert!(matches!(
            fit_dvine_reg(
                "y",
                &resp,
                &bad,
                SelCriterion::Caic,
                &CopulaConfig::parametric()
            ),
            Err(Error::Usage(_))
        ));
        let model = DVineRegModel {
            response: "y".into(),
            order: vec!["a".into()],
            trees: vec![vec![PairCopula::independence()]],
            criterion: SelCriterion::Caic,
            trace: vec![],
            n: 100,
        };
        assert!(matches!(
            model.cond_cdf(0.5, &HashMap::new()),
            Err(Error::Usage(_))
        ));
    }
}
