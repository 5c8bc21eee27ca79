//! Closed forms for the parametric bivariate copula families at rotation 0:
//! log density, CDF, h-function h(u|v) = dC/dv, analytic h-inverses where
//! they exist, and the Kendall's tau maps.
//!
//! All functions assume arguments already clamped inside (0,1); rotation
//! handling lives one level up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    adaptive_simpson, bivariate_normal_cdf, find_root_monotone, normal_cdf, normal_quantile,
};

/// Parametric pair copula families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Independence,
    Gaussian,
    Clayton,
    Gumbel,
    Frank,
    Joe,
    Bb8,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
            Family::Joe => "joe",
            Family::Bb8 => "bb8",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "independence" => Family::Independence,
            "gaussian" => Family::Gaussian,
            "clayton" => Family::Clayton,
            "gumbel" => Family::Gumbel,
            "frank" => Family::Frank,
            "joe" => Family::Joe,
            "bb8" => Family::Bb8,
            other => return Err(Error::Usage(format!("unknown copula family '{other}'"))),
        })
    }

    pub fn param_count(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::Bb8 => 2,
            _ => 1,
        }
    }

    /// Whether negative dependence requires a rotated variant.
    pub fn needs_rotation_for_negative(self) -> bool {
        matches!(
            self,
            Family::Clayton | Family::Gumbel | Family::Joe | Family::Bb8
        )
    }

    /// Inclusive fitting bounds per parameter.
    pub fn param_bounds(self) -> &'static [(f64, f64)] {
        match self {
            Family::Independence => &[],
            Family::Gaussian => &[(-0.99999, 0.99999)],
            Family::Clayton => &[(1e-6, 28.0)],
            Family::Gumbel => &[(1.0, 50.0)],
            Family::Frank => &[(-35.0, 35.0)],
            Family::Joe => &[(1.0, 50.0)],
            Family::Bb8 => &[(1.0, 8.0), (1e-6, 1.0)],
        }
    }

    /// Validate a parameter vector against the family domain.
    pub fn check_params(self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Domain(format!(
                "{} expects {} parameter(s), got {}",
                self.name(),
                self.param_count(),
                params.len()
            )));
        }
        let ok = match self {
            Family::Independence => true,
            Family::Gaussian => params[0] > -1.0 && params[0] < 1.0,
            Family::Clayton => params[0] > 0.0 && params[0] <= 28.0,
            Family::Gumbel | Family::Joe => params[0] >= 1.0 && params[0] <= 50.0,
            Family::Frank => params[0].abs() <= 35.0,
            Family::Bb8 => {
                params[0] >= 1.0 && params[0] <= 8.0 && params[1] > 0.0 && params[1] <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{} parameters {:?} outside admissible range",
                self.name(),
                params
            )))
        }
    }
}

/// Frank with |theta| below this is evaluated as independence.
pub const FRANK_INDEP_EPS: f64 = 1e-5;

pub fn log_pdf(family: Family, params: &[f64], u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => {
            let rho = params[0];
            if rho == 0.0 {
                return 0.0;
            }
            let x = normal_quantile(u);
            let y = normal_quantile(v);
            let s = 1.0 - rho * rho;
            -0.5 * s.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s)
        }
        Family::Clayton => {
            let th = params[0];
            let l = clayton_log_sum(th, u, v);
            (1.0 + th).ln() - (th + 1.0) * (u.ln() + v.ln()) - (2.0 + 1.0 / th) * l
        }
        Family::Gumbel => {
            let th = params[0];
            let (lx, ly) = ((-u.ln()).ln(), (-v.ln()).ln());
            let (xt, yt) = (-u.ln(), -v.ln());
            let ls = log_sum_pow(xt, yt, th);
            let t = (ls / th).exp();
            -t + xt
                + yt
                + (th - 1.0) * (lx + ly)
                + (2.0 / th - 2.0) * ls
                + (1.0 + (th - 1.0) / t).ln()
        }
        Family::Frank => {
            let th = params[0];
            if th.abs() < FRANK_INDEP_EPS {
                return 0.0;
            }
            let g1 = (-th).exp_m1();
            (-th * g1).ln() - th * (u + v) - 2.0 * frank_denom(th, u, v).abs().ln()
        }
        Family::Joe => {
            let th = params[0];
            let lxb = th * (-u).ln_1p(); // ln (1-u)^theta
            let lyb = th * (-v).ln_1p();
            let xb = lxb.exp();
            let yb = lyb.exp();
            let s = xb + yb - xb * yb;
            (1.0 / th - 2.0) * s.ln()
                + (th - 1.0) * ((-u).ln_1p() + (-v).ln_1p())
                + (th - 1.0 + s).ln()
        }
        Family::Bb8 => {
            let (th, de) = (params[0], params[1]);
            let eta = 1.0 - (1.0 - de).powf(th);
            let x = 1.0 - (1.0 - de * u).powf(th);
            let y = 1.0 - (1.0 - de * v).powf(th);
            let w = 1.0 - x * y / eta;
            let lead =
                th * de * (1.0 - de * u).powf(th - 1.0) * (1.0 - de * v).powf(th - 1.0) / eta;
            let bracket = w + (1.0 - 1.0 / th) * x * y / eta;
            lead.ln() + (1.0 / th - 2.0) * w.max(1e-300).ln() + bracket.max(1e-300).ln()
        }
    }
}

pub fn cdf(family: Family, params: &[f64], u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => u * v,
        Family::Gaussian => {
            let rho = params[0];
            bivariate_normal_cdf(normal_quantile(u), normal_quantile(v), rho)
        }
        Family::Clayton => {
            let th = params[0];
            (-clayton_log_sum(th, u, v) / th).exp()
        }
        Family::Gumbel => {
            let th = params[0];
            let ls = log_sum_pow(-u.ln(), -v.ln(), th);
            (-(ls / th).exp()).exp()
        }
        Family::Frank => {
            let th = params[0];
            if th.abs() < FRANK_INDEP_EPS {
                return u * v;
            }
            let g1 = (-th).exp_m1();
            // ln(N/g1) via |.| since N and g1 share their sign.
            -(frank_denom(th, u, v).abs().ln() - g1.abs().ln()) / th
        }
        Family::Joe => {
            let th = params[0];
            let xb = (th * (-u).ln_1p()).exp();
            let yb = (th * (-v).ln_1p()).exp();
            1.0 - (xb + yb - xb * yb).powf(1.0 / th)
        }
        Family::Bb8 => {
            let (th, de) = (params[0], params[1]);
            let eta = 1.0 - (1.0 - de).powf(th);
            let x = 1.0 - (1.0 - de * u).powf(th);
            let y = 1.0 - (1.0 - de * v).powf(th);
            (1.0 - (1.0 - x * y / eta).powf(1.0 / th)) / de
        }
    }
}

/// h(u|v) = dC(u,v)/dv at rotation 0.
pub fn hfunc(family: Family, params: &[f64], u: f64, v: f64) -> f64 {
    let h = match family {
        Family::Independence => u,
        Family::Gaussian => {
            let rho = params[0];
            let x = normal_quantile(u);
            let y = normal_quantile(v);
            normal_cdf((x - rho * y) / (1.0 - rho * rho).sqrt())
        }
        Family::Clayton => {
            let th = params[0];
            let l = clayton_log_sum(th, u, v);
            (-(th + 1.0) * v.ln() - (1.0 + 1.0 / th) * l).exp()
        }
        Family::Gumbel => {
            let th = params[0];
            let yt = -v.ln();
            let ls = log_sum_pow(-u.ln(), yt, th);
            let t = (ls / th).exp();
            (-t + yt + (th - 1.0) * yt.ln() + (1.0 / th - 1.0) * ls).exp()
        }
        Family::Frank => {
            let th = params[0];
            if th.abs() < FRANK_INDEP_EPS {
                return u;
            }
            let gu = (-th * u).exp_m1();
            gu * (-th * v).exp() / frank_denom(th, u, v)
        }
        Family::Joe => {
            let th = params[0];
            let xb = (th * (-u).ln_1p()).exp();
            let yb = (th * (-v).ln_1p()).exp();
            let s = xb + yb - xb * yb;
            s.powf(1.0 / th - 1.0) * (th * (-v).ln_1p() * (1.0 - 1.0 / th)).exp() * (1.0 - xb)
        }
        Family::Bb8 => {
            let (th, de) = (params[0], params[1]);
            let eta = 1.0 - (1.0 - de).powf(th);
            let x = 1.0 - (1.0 - de * u).powf(th);
            let y = 1.0 - (1.0 - de * v).powf(th);
            let w = 1.0 - x * y / eta;
            w.powf(1.0 / th - 1.0) * x * (1.0 - de * v).powf(th - 1.0) / eta
        }
    };
    h.clamp(0.0, 1.0)
}

/// Analytic inverse of `hfunc` in u where available. `None` means the
/// caller must invert numerically.
pub fn hinv_closed(family: Family, params: &[f64], p: f64, v: f64) -> Option<f64> {
    match family {
        Family::Independence => Some(p),
        Family::Gaussian => {
            let rho = params[0];
            let y = normal_quantile(v);
            Some(normal_cdf(
                normal_quantile(p) * (1.0 - rho * rho).sqrt() + rho * y,
            ))
        }
        Family::Clayton => {
            let th = params[0];
            // ln w with w = (p v^(th+1))^(-th/(th+1)).
            let lw = -th / (th + 1.0) * p.ln() - th * v.ln();
            // ln S with S = w + 1 - v^(-th) > 1.
            let lvt = -th * v.ln(); // ln v^(-th) >= 0
            let ls = if lvt < 1e-12 {
                // v^(-th) ~ 1: S ~ w.
                lw + (-(lvt.exp_m1()) * (-lw).exp()).ln_1p()
            } else {
                let lt = lvt + (-(-lvt).exp()).ln_1p(); // ln(v^(-th) - 1)
                lw + (-(lt - lw).exp()).ln_1p()
            };
            let u = (-ls / th).exp();
            if u.is_finite() {
                Some(u)
            } else {
                None
            }
        }
        Family::Frank => {
            let th = params[0];
            if th.abs() < FRANK_INDEP_EPS {
                return Some(p);
            }
            // 1 + g(u) as a ratio of positive sums; the naive ln_1p form
            // cancels catastrophically for large |theta|.
            let ev = (-th * v).exp();
            let num = (1.0 - p) * ev + p * (-th).exp();
            let den = p + (1.0 - p) * ev;
            let u = -(num / den).ln() / th;
            if u.is_finite() {
                Some(u)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Numeric h-inverse by monotone bracketing on [eps, 1-eps]. The interval
/// tolerance is tightened well past the contract's 1e-10 so that steep
/// conditionals (densities in the hundreds) still invert to 1e-8 in h.
pub fn hinv_numeric(family: Family, params: &[f64], p: f64, v: f64, eps: f64) -> Result<f64> {
    find_root_monotone(
        |u| hfunc(family, params, u, v) - p,
        eps,
        1.0 - eps,
        1e-13,
        200,
    )
}

/// Kendall's tau of the rotation-0 family at the given parameters.
pub fn kendall_tau(family: Family, params: &[f64]) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => 2.0 / std::f64::consts::PI * params[0].asin(),
        Family::Clayton => params[0] / (params[0] + 2.0),
        Family::Gumbel => 1.0 - 1.0 / params[0],
        Family::Frank => frank_tau(params[0]),
        Family::Joe => joe_tau(params[0]),
        Family::Bb8 => bb8_tau(params[0], params[1]),
    }
}

/// Invert the tau map for one-parameter families.
pub fn param_from_tau(family: Family, tau: f64) -> Result<Vec<f64>> {
    let fail = |range: &str| {
        Err(Error::Domain(format!(
            "tau {tau} not attainable by {} (needs {range})",
            family.name()
        )))
    };
    match family {
        Family::Independence => {
            if tau.abs() < 1e-9 {
                Ok(vec![])
            } else {
                fail("tau = 0")
            }
        }
        Family::Gaussian => {
            if tau.abs() < 1.0 {
                Ok(vec![(std::f64::consts::FRAC_PI_2 * tau).sin()])
            } else {
                fail("|tau| < 1")
            }
        }
        Family::Clayton => {
            let max = 28.0 / 30.0;
            if tau > 0.0 && tau <= max {
                Ok(vec![2.0 * tau / (1.0 - tau)])
            } else {
                fail("0 < tau <= 14/15")
            }
        }
        Family::Gumbel => {
            if (0.0..=1.0 - 1.0 / 50.0).contains(&tau) {
                Ok(vec![if tau == 0.0 { 1.0 } else { 1.0 / (1.0 - tau) }])
            } else {
                fail("0 <= tau <= 0.98")
            }
        }
        Family::Frank => {
            if tau == 0.0 {
                return Ok(vec![1e-4]);
            }
            let hi = frank_tau(35.0);
            if tau.abs() >= hi {
                return fail("|tau| < tau(35)");
            }
            let target = tau.abs();
            let th = find_root_monotone(|t| frank_tau(t) - target, 1e-4, 35.0, 1e-10, 300)?;
            Ok(vec![th * tau.signum()])
        }
        Family::Joe => {
            let hi = joe_tau(50.0);
            if !(0.0..hi).contains(&tau) {
                return fail("0 <= tau < tau(50)");
            }
            if tau == 0.0 {
                return Ok(vec![1.0]);
            }
            let th = find_root_monotone(|t| joe_tau(t) - tau, 1.0, 50.0, 1e-10, 300)?;
            Ok(vec![th])
        }
        Family::Bb8 => Err(Error::Unsupported(
            "param_from_tau is not defined for the two-parameter bb8 family".into(),
        )),
    }
}

// ---- helpers ----

/// ln(u^-th + v^-th - 1) computed in log space.
fn clayton_log_sum(th: f64, u: f64, v: f64) -> f64 {
    let a = -th * u.ln();
    let b = -th * v.ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

/// g(1) + g(u) g(v) with g(z) = exp(-th z) - 1, expanded into four
/// exponentials. The expanded form avoids the catastrophic cancellation
/// the product form suffers for |th| above roughly 20.
fn frank_denom(th: f64, u: f64, v: f64) -> f64 {
    (-th).exp() - (-th * u).exp() - (-th * v).exp() + (-th * (u + v)).exp()
}

/// ln(x^th + y^th) for positive x, y in log space.
fn log_sum_pow(x: f64, y: f64, th: f64) -> f64 {
    let a = th * x.ln();
    let b = th * y.ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Frank tau via the first Debye function.
fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < FRANK_INDEP_EPS {
        return theta / 9.0;
    }
    let t = theta.abs();
    let integrand = |x: f64| {
        if x < 1e-8 {
            1.0 - x / 2.0
        } else {
            x / x.exp_m1()
        }
    };
    let d1 = adaptive_simpson(integrand, 0.0, t, 1e-10) / t;
    let tau = 1.0 + 4.0 * (d1 - 1.0) / t;
    tau * theta.signum()
}

/// Joe tau via the standard series.
fn joe_tau(theta: f64) -> f64 {
    if theta <= 1.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 1..500_000u64 {
        let kf = k as f64;
        let term = 1.0 / (kf * (theta * kf + 2.0) * (theta * (kf - 1.0) + 2.0));
        sum += term;
        if term < 1e-13 * sum.max(1e-10) && k > 50 {
            break;
        }
    }
    1.0 - 4.0 * sum
}

/// BB8 tau via the Archimedean generator integral.
fn bb8_tau(theta: f64, delta: f64) -> f64 {
    let integrand = |t: f64| {
        // Both endpoints are removable singularities with limit zero.
        if t < 1e-12 || 1.0 - delta * t < 1e-14 {
            return 0.0;
        }
        let eta = 1.0 - (1.0 - delta).powf(theta);
        let a = 1.0 - (1.0 - delta * t).powf(theta);
        (a / eta).ln() * a / (theta * delta * (1.0 - delta * t).powf(theta - 1.0))
    };
    1.0 + 4.0 * adaptive_simpson(integrand, 0.0, 1.0, 1e-10)
}
