//! Bivariate copulas: parametric families with rotations, h-functions and
//! their inverses, Kendall's tau maps, maximum-likelihood fitting, and
//! family selection. The nonparametric estimator lives in [`crate::npcop`]
//! and plugs into the same [`PairCopula`] interface.

mod families;
mod fit;

pub use families::{param_from_tau as base_param_from_tau, Family, FRANK_INDEP_EPS};
pub use fit::{fit_pair_mle, select_pair_family, PairCriterion};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npcop::NpCopula;

/// Clamp width for pseudo-observations and h-arguments.
pub const CLAMP_EPS: f64 = 1e-10;

#[inline]
pub fn clamp_unit(x: f64) -> f64 {
    x.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// Quarter-turn rotations of a copula density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(d: u16) -> Result<Self> {
        Ok(match d {
            0 => Rotation::R0,
            90 => Rotation::R90,
            180 => Rotation::R180,
            270 => Rotation::R270,
            other => return Err(Error::Usage(format!("invalid rotation {other}"))),
        })
    }

    /// Rotations 90 and 270 flip the sign of Kendall's tau.
    pub fn tau_sign(self) -> f64 {
        match self {
            Rotation::R0 | Rotation::R180 => 1.0,
            Rotation::R90 | Rotation::R270 => -1.0,
        }
    }
}

/// Which argument of the copula is conditioned on in an h-function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HDir {
    /// h(v|u): condition on the first argument.
    GivenFirst,
    /// h(u|v): condition on the second argument.
    GivenSecond,
}

/// Pseudo-observations on the copula scale, clamped inside (0,1).
#[derive(Debug, Clone)]
pub struct PseudoObs {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PseudoObs {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Usage(format!(
                "pseudo-observation vectors differ in length: {} vs {}",
                u.len(),
                v.len()
            )));
        }
        let clamp_all = |xs: Vec<f64>| xs.into_iter().map(clamp_unit).collect();
        Ok(PseudoObs {
            u: clamp_all(u),
            v: clamp_all(v),
        })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    fn on_boundary(x: f64) -> bool {
        x <= CLAMP_EPS || x >= 1.0 - CLAMP_EPS
    }

    /// True when one margin sits entirely on the clamp boundary.
    pub fn is_degenerate(&self) -> bool {
        self.u.iter().all(|&x| Self::on_boundary(x)) || self.v.iter().all(|&x| Self::on_boundary(x))
    }
}

/// A fitted parametric pair copula: family, rotation, parameters, and the
/// fit statistics carried along for model selection and reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCopula {
    pub family: Family,
    pub rotation: Rotation,
    pub params: Vec<f64>,
    pub edf: f64,
    pub loglik: f64,
}

impl ParametricCopula {
    pub fn new(family: Family, rotation: Rotation, params: Vec<f64>) -> Result<Self> {
        family.check_params(&params)?;
        if rotation != Rotation::R0 && !family.needs_rotation_for_negative() {
            return Err(Error::Domain(format!(
                "{} does not admit rotations (covers both dependence signs natively)",
                family.name()
            )));
        }
        let edf = family.param_count() as f64;
        Ok(ParametricCopula {
            family,
            rotation,
            params,
            edf,
            loglik: f64::NAN,
        })
    }

    pub fn independence() -> Self {
        ParametricCopula {
            family: Family::Independence,
            rotation: Rotation::R0,
            params: vec![],
            edf: 0.0,
            loglik: 0.0,
        }
    }

    /// Rotated arguments for density evaluation.
    #[inline]
    fn rot_args(&self, u: f64, v: f64) -> (f64, f64) {
        match self.rotation {
            Rotation::R0 => (u, v),
            Rotation::R90 => (1.0 - u, v),
            Rotation::R180 => (1.0 - u, 1.0 - v),
            Rotation::R270 => (u, 1.0 - v),
        }
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let (a, b) = self.rot_args(u, v);
        families::log_pdf(self.family, &self.params, a, b)
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.log_pdf(u, v).exp()
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        // Uniform-margin boundary identities hold for every copula.
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        let base = |a: f64, b: f64| families::cdf(self.family, &self.params, a, b);
        let c = match self.rotation {
            Rotation::R0 => base(u, v),
            Rotation::R90 => v - base(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + base(1.0 - u, 1.0 - v),
            Rotation::R270 => u - base(u, 1.0 - v),
        };
        c.clamp(0.0, 1.0)
    }

    pub fn hfunc(&self, dir: HDir, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        // All base families are exchangeable, so conditioning on the first
        // argument is the base h with swapped roles.
        let h0 = |a: f64, b: f64| families::hfunc(self.family, &self.params, a, b);
        let h = match (dir, self.rotation) {
            (HDir::GivenSecond, Rotation::R0) => h0(u, v),
            (HDir::GivenSecond, Rotation::R90) => 1.0 - h0(1.0 - u, v),
            (HDir::GivenSecond, Rotation::R180) => 1.0 - h0(1.0 - u, 1.0 - v),
            (HDir::GivenSecond, Rotation::R270) => h0(u, 1.0 - v),
            (HDir::GivenFirst, Rotation::R0) => h0(v, u),
            (HDir::GivenFirst, Rotation::R90) => h0(v, 1.0 - u),
            (HDir::GivenFirst, Rotation::R180) => 1.0 - h0(1.0 - v, 1.0 - u),
            (HDir::GivenFirst, Rotation::R270) => 1.0 - h0(1.0 - v, u),
        };
        h.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    }

    /// Inverse of `hfunc` in its free argument at fixed conditioning value.
    pub fn hinv(&self, dir: HDir, p: f64, cond: f64) -> Result<f64> {
        let (p, cond) = (clamp_unit(p), clamp_unit(cond));
        let inv0 = |p: f64, v: f64| -> Result<f64> {
            match families::hinv_closed(self.family, &self.params, p, v) {
                Some(x) => Ok(clamp_unit(x)),
                None => families::hinv_numeric(self.family, &self.params, p, v, CLAMP_EPS),
            }
        };
        let x = match (dir, self.rotation) {
            (HDir::GivenSecond, Rotation::R0) => inv0(p, cond)?,
            (HDir::GivenSecond, Rotation::R90) => 1.0 - inv0(1.0 - p, cond)?,
            (HDir::GivenSecond, Rotation::R180) => 1.0 - inv0(1.0 - p, 1.0 - cond)?,
            (HDir::GivenSecond, Rotation::R270) => inv0(p, 1.0 - cond)?,
            (HDir::GivenFirst, Rotation::R0) => inv0(p, cond)?,
            (HDir::GivenFirst, Rotation::R90) => inv0(p, 1.0 - cond)?,
            (HDir::GivenFirst, Rotation::R180) => 1.0 - inv0(1.0 - p, 1.0 - cond)?,
            (HDir::GivenFirst, Rotation::R270) => 1.0 - inv0(1.0 - p, cond)?,
        };
        Ok(clamp_unit(x))
    }

    pub fn kendall_tau(&self) -> f64 {
        self.rotation.tau_sign() * families::kendall_tau(self.family, &self.params)
    }
}

/// Invert the tau map for a rotated family.
pub fn param_from_tau(family: Family, rotation: Rotation, tau: f64) -> Result<Vec<f64>> {
    families::param_from_tau(family, rotation.tau_sign() * tau)
}

/// A fitted pair copula: parametric or the kernel-based nonparametric
/// estimator, behind one evaluation interface.
#[derive(Debug, Clone)]
pub enum PairCopula {
    Parametric(ParametricCopula),
    Nonparametric(NpCopula),
}

impl PairCopula {
    pub fn independence() -> Self {
        PairCopula::Parametric(ParametricCopula::independence())
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            PairCopula::Parametric(p) => p.family.name(),
            PairCopula::Nonparametric(_) => "nonparametric",
        }
    }

    pub fn is_independence(&self) -> bool {
        matches!(self, PairCopula::Parametric(p) if p.family == Family::Independence)
    }

    pub fn edf(&self) -> f64 {
        match self {
            PairCopula::Parametric(p) => p.edf,
            PairCopula::Nonparametric(np) => np.edf,
        }
    }

    pub fn loglik(&self) -> f64 {
        match self {
            PairCopula::Parametric(p) => p.loglik,
            PairCopula::Nonparametric(np) => np.loglik,
        }
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        match self {
            PairCopula::Parametric(p) => p.log_pdf(u, v),
            PairCopula::Nonparametric(np) => np.pdf(u, v).max(1e-300).ln(),
        }
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        match self {
            PairCopula::Parametric(p) => p.pdf(u, v),
            PairCopula::Nonparametric(np) => np.pdf(u, v),
        }
    }

    pub fn hfunc(&self, dir: HDir, u: f64, v: f64) -> f64 {
        match self {
            PairCopula::Parametric(p) => p.hfunc(dir, u, v),
            PairCopula::Nonparametric(np) => np.hfunc(dir, u, v),
        }
    }

    pub fn hinv(&self, dir: HDir, p: f64, cond: f64) -> Result<f64> {
        match self {
            PairCopula::Parametric(p0) => p0.hinv(dir, p, cond),
            PairCopula::Nonparametric(np) => Ok(np.hinv(dir, p, cond)),
        }
    }

    pub fn kendall_tau(&self) -> Result<f64> {
        match self {
            PairCopula::Parametric(p) => Ok(p.kendall_tau()),
            PairCopula::Nonparametric(_) => Err(Error::Unsupported(
                "kendall_tau is defined for parametric pair copulas".into(),
            )),
        }
    }
}

/// Serialized form shared by both kinds of pair copula.
#[derive(Serialize, Deserialize)]
struct PairCopulaJson {
    family: String,
    rotation: u16,
    params: Vec<f64>,
    edf: f64,
    loglik: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nonparametric: Option<crate::npcop::NpCopulaJson>,
}

impl Serialize for PairCopula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let j = match self {
            PairCopula::Parametric(p) => PairCopulaJson {
                family: p.family.name().to_string(),
                rotation: p.rotation.degrees(),
                params: p.params.clone(),
                edf: p.edf,
                loglik: p.loglik,
                nonparametric: None,
            },
            PairCopula::Nonparametric(np) => PairCopulaJson {
                family: "nonparametric".to_string(),
                rotation: 0,
                params: vec![],
                edf: np.edf,
                loglik: np.loglik,
                nonparametric: Some(np.to_json()),
            },
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PairCopula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PairCopulaJson::deserialize(d)?;
        if j.family == "nonparametric" {
            let np = j.nonparametric.ok_or_else(|| {
                serde::de::Error::custom("nonparametric pair copula without grid payload")
            })?;
            let np = NpCopula::from_json(np).map_err(serde::de::Error::custom)?;
            return Ok(PairCopula::Nonparametric(np));
        }
        let family = Family::from_name(&j.family).map_err(serde::de::Error::custom)?;
        let rotation = Rotation::from_degrees(j.rotation).map_err(serde::de::Error::custom)?;
        let mut p =
            ParametricCopula::new(family, rotation, j.params).map_err(serde::de::Error::custom)?;
        p.edf = j.edf;
        p.loglik = j.loglik;
        Ok(PairCopula::Parametric(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(family: Family, rotation: Rotation, params: &[f64]) -> ParametricCopula {
        ParametricCopula::new(family, rotation, params.to_vec()).unwrap()
    }

    #[test]
    fn invariants_reject_bad_specs() {
        assert!(ParametricCopula::new(Family::Gaussian, Rotation::R0, vec![1.2]).is_err());
        assert!(ParametricCopula::new(Family::Gaussian, Rotation::R90, vec![0.5]).is_err());
        assert!(ParametricCopula::new(Family::Frank, Rotation::R180, vec![3.0]).is_err());
        assert!(ParametricCopula::new(Family::Clayton, Rotation::R90, vec![2.0]).is_ok());
        assert!(ParametricCopula::new(Family::Clayton, Rotation::R0, vec![30.0]).is_err());
    }

    #[test]
    fn independence_identities() {
        let c = PairCopula::independence();
        assert_abs_diff_eq!(c.pdf(0.3, 0.7), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.hfunc(HDir::GivenSecond, 0.3, 0.9), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.hinv(HDir::GivenSecond, 0.25, 0.4).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        if let PairCopula::Parametric(p) = &c {
            assert_abs_diff_eq!(p.cdf(0.3, 0.7), 0.21, epsilon = 1e-15);
        }
    }

    #[test]
    fn rotated_density_matches_reflections() {
        let base = spec(Family::Clayton, Rotation::R0, &[2.0]);
        let (u, v) = (0.3, 0.7);
        for (rot, args) in [
            (Rotation::R90, (1.0 - u, v)),
            (Rotation::R180, (1.0 - u, 1.0 - v)),
            (Rotation::R270, (u, 1.0 - v)),
        ] {
            let r = spec(Family::Clayton, rot, &[2.0]);
            assert_abs_diff_eq!(r.pdf(u, v), base.pdf(args.0, args.1), epsilon = 1e-12);
        }
    }

    #[test]
    fn cdf_boundary_identities() {
        for rot in [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270] {
            let c = spec(Family::Gumbel, rot, &[1.7]);
            assert_abs_diff_eq!(c.cdf(0.42, 1.0), 0.42, epsilon = 1e-12);
            assert_abs_diff_eq!(c.cdf(1.0, 0.37), 0.37, epsilon = 1e-12);
            assert_abs_diff_eq!(c.cdf(0.42, 0.0), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(c.cdf(0.0, 0.37), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hfunc_matches_cdf_finite_difference_across_rotations() {
        let d = 1e-6;
        for fam in [
            Family::Gaussian,
            Family::Clayton,
            Family::Gumbel,
            Family::Frank,
            Family::Joe,
        ] {
            let rots: &[Rotation] = if fam.needs_rotation_for_negative() {
                &[Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270]
            } else {
                &[Rotation::R0]
            };
            let params = match fam {
                Family::Gaussian => vec![0.55],
                Family::Frank => vec![4.0],
                _ => vec![1.9],
            };
            for &rot in rots {
                let c = spec(fam, rot, &params);
                for &(u, v) in &[(0.3, 0.6), (0.8, 0.2), (0.5, 0.5)] {
                    let fd_v = (c.cdf(u, v + d) - c.cdf(u, v - d)) / (2.0 * d);
                    assert_abs_diff_eq!(c.hfunc(HDir::GivenSecond, u, v), fd_v, epsilon = 2e-6);
                    let fd_u = (c.cdf(u + d, v) - c.cdf(u - d, v)) / (2.0 * d);
                    assert_abs_diff_eq!(c.hfunc(HDir::GivenFirst, u, v), fd_u, epsilon = 2e-6);
                }
            }
        }
    }

    #[test]
    fn hinv_roundtrips_both_directions() {
        for fam in [
            Family::Gaussian,
            Family::Clayton,
            Family::Gumbel,
            Family::Frank,
            Family::Joe,
            Family::Bb8,
        ] {
            let params = match fam {
                Family::Gaussian => vec![-0.6],
                Family::Frank => vec![-3.0],
                Family::Bb8 => vec![3.0, 0.7],
                _ => vec![2.2],
            };
            let c = spec(fam, Rotation::R0, &params);
            for &(free, cond) in &[(0.15, 0.4), (0.5, 0.85), (0.92, 0.1)] {
                // GivenSecond: free variable is the first argument.
                let h = c.hfunc(HDir::GivenSecond, free, cond);
                let back = c.hinv(HDir::GivenSecond, h, cond).unwrap();
                assert_abs_diff_eq!(back, free, epsilon = 1e-8);
                // GivenFirst: free variable is the second argument.
                let h = c.hfunc(HDir::GivenFirst, cond, free);
                let back = c.hinv(HDir::GivenFirst, h, cond).unwrap();
                assert_abs_diff_eq!(back, free, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gumbel_hinv_matches_independent_bisection() {
        // Plain midpoint bisection on hfunc, independent of the library's
        // bracketing root finder.
        let c = spec(Family::Gumbel, Rotation::R0, &[1.5]);
        let (p, v) = (0.25, 0.4);
        let (mut lo, mut hi) = (1e-10, 1.0 - 1e-10);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if c.hfunc(HDir::GivenSecond, mid, v) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(
            c.hinv(HDir::GivenSecond, p, v).unwrap(),
            oracle,
            epsilon = 1e-8
        );
    }

    #[test]
    fn rotation_negates_tau() {
        let c0 = spec(Family::Gumbel, Rotation::R0, &[2.4]);
        let c90 = spec(Family::Gumbel, Rotation::R90, &[2.4]);
        let c270 = spec(Family::Gumbel, Rotation::R270, &[2.4]);
        assert_eq!(c90.kendall_tau(), -c0.kendall_tau());
        assert_eq!(c270.kendall_tau(), -c0.kendall_tau());
    }

    #[test]
    fn serialization_roundtrip() {
        let mut p = spec(Family::Bb8, Rotation::R180, &[3.5, 0.8]);
        p.loglik = 12.5;
        let pc = PairCopula::Parametric(p);
        let json = serde_json::to_string(&pc).unwrap();
        let back: PairCopula = serde_json::from_str(&json).unwrap();
        assert_eq!(back.family_name(), "bb8");
        assert_abs_diff_eq!(back.loglik(), 12.5, epsilon = 1e-12);
        assert_abs_diff_eq!(back.pdf(0.4, 0.6), pc.pdf(0.4, 0.6), epsilon = 1e-12);
    }
}
