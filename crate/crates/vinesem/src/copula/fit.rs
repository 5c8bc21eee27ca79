//! Maximum-likelihood fitting of parametric pair copulas and criterion
//! based family selection over a candidate catalogue.

use super::families::Family;
use super::{param_from_tau, PairCopula, ParametricCopula, PseudoObs, Rotation};
use crate::error::{Error, Result};
use crate::npcop::NpCopula;
use crate::numeric::{nelder_mead_2d, sample_kendall_tau, scan_then_brent};

/// Criterion for picking among fitted pair-copula candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairCriterion {
    Aic,
    Bic,
    Loglik,
}

impl PairCriterion {
    /// Lower is better.
    fn value(self, loglik: f64, edf: f64, n: usize) -> f64 {
        match self {
            PairCriterion::Aic => -2.0 * loglik + 2.0 * edf,
            PairCriterion::Bic => -2.0 * loglik + (n as f64).ln() * edf,
            PairCriterion::Loglik => -loglik,
        }
    }
}

fn loglik_sum(family: Family, params: &[f64], rotation: Rotation, data: &PseudoObs) -> f64 {
    let spec = ParametricCopula {
        family,
        rotation,
        params: params.to_vec(),
        edf: family.param_count() as f64,
        loglik: f64::NAN,
    };
    data.u
        .iter()
        .zip(&data.v)
        .map(|(&u, &v)| spec.log_pdf(u, v))
        .sum()
}

/// Fit one parametric family at a fixed rotation by maximum likelihood.
///
/// One-parameter families are optimized by a grid scan refined with Brent;
/// bb8 by Nelder-Mead on a logistic-unconstrained scale with three starts.
pub fn fit_pair_mle(data: &PseudoObs, family: Family, rotation: Rotation) -> Result<PairCopula> {
    if data.n() < 10 {
        return Err(Error::Insufficient {
            need: 10,
            got: data.n(),
        });
    }
    if data.is_degenerate() {
        return Err(Error::Degenerate(
            "all pseudo-observations on the clamp boundary".into(),
        ));
    }
    if rotation != Rotation::R0 && !family.needs_rotation_for_negative() {
        return Err(Error::Domain(format!(
            "{} does not admit rotation {}",
            family.name(),
            rotation.degrees()
        )));
    }

    if family == Family::Independence {
        return Ok(PairCopula::Parametric(ParametricCopula::independence()));
    }

    let tau_hat = sample_kendall_tau(&data.u, &data.v);

    let fitted = match family {
        Family::Bb8 => fit_bb8(data, rotation),
        _ => {
            let (lo, hi) = family.param_bounds()[0];
            let init = param_from_tau(family, rotation, tau_hat)
                .ok()
                .map(|p| p[0])
                .into_iter()
                .collect::<Vec<_>>();
            let neg_ll = |p: f64| -loglik_sum(family, &[p], rotation, data);
            let (p, negv) = scan_then_brent(neg_ll, lo, hi, 33, &init, 1e-8);
            ParametricCopula {
                family,
                rotation,
                params: vec![p],
                edf: 1.0,
                loglik: -negv,
            }
        }
    };
    Ok(PairCopula::Parametric(fitted))
}

fn fit_bb8(data: &PseudoObs, rotation: Rotation) -> ParametricCopula {
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let to_params = |z: &[f64; 2]| [1.0 + 7.0 * sigmoid(z[0]), sigmoid(z[1]).max(1e-6)];
    let obj = |z: &[f64; 2]| {
        let p = to_params(z);
        -loglik_sum(Family::Bb8, &p, rotation, data)
    };
    let starts = [[0.0, 0.0], [-1.5, 1.5], [1.5, -1.0]];
    let mut best: Option<([f64; 2], f64)> = None;
    for s in starts {
        let (z, v) = nelder_mead_2d(obj, s, 0.7, 1e-10, 500);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((z, v));
        }
    }
    let (z, v) = best.unwrap();
    let p = to_params(&z);
    ParametricCopula {
        family: Family::Bb8,
        rotation,
        params: vec![p[0], p[1]],
        edf: 2.0,
        loglik: -v,
    }
}

/// Candidate rotations fitted for a family during selection.
fn rotations_for(family: Family) -> &'static [Rotation] {
    if family.needs_rotation_for_negative() {
        &[Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270]
    } else {
        &[Rotation::R0]
    }
}

/// Fixed enumeration order: independence, parametric families
/// alphabetically, nonparametric last. Ties favor earlier candidates.
pub const PARAMETRIC_ORDER: [Family; 6] = [
    Family::Bb8,
    Family::Clayton,
    Family::Frank,
    Family::Gaussian,
    Family::Gumbel,
    Family::Joe,
];

/// Pick the best-fitting pair copula among the enabled candidates.
pub fn select_pair_family(
    data: &PseudoObs,
    candidates: &[Family],
    allow_nonparametric: bool,
    criterion: PairCriterion,
) -> Result<PairCopula> {
    if candidates.is_empty() && !allow_nonparametric {
        return Err(Error::Usage("empty candidate family set".into()));
    }
    if allow_nonparametric && data.n() < 30 {
        return Err(Error::Insufficient {
            need: 30,
            got: data.n(),
        });
    }
    let n = data.n();

    let mut best: Option<(f64, PairCopula)> = None;
    let consider = |fit: PairCopula, best: &mut Option<(f64, PairCopula)>| {
        let val = criterion.value(fit.loglik(), fit.edf(), n);
        if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
            *best = Some((val, fit));
        }
    };

    // Independence always competes (zero parameters).
    consider(PairCopula::independence(), &mut best);

    for &family in PARAMETRIC_ORDER.iter() {
        if !candidates.contains(&family) || family == Family::Independence {
            continue;
        }
        for &rot in rotations_for(family) {
            let fit = fit_pair_mle(data, family, rot)?;
            consider(fit, &mut best);
        }
    }

    if allow_nonparametric {
        let np = NpCopula::fit(data)?;
        consider(PairCopula::Nonparametric(np), &mut best);
    }

    Ok(best.expect("at least independence was considered").1)
}
