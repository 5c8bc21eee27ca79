//! Scalar numerics shared across the crate: normal distribution helpers,
//! bounded minimization, monotone root finding, quadrature, and rank
//! statistics.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation refined with one Halley step against
/// `normal_cdf`, giving close to full double precision and exact
/// consistency with the forward transform.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "normal_quantile requires p in (0,1), got {p}"
    );

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };

    // Halley refinement.
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Bivariate standard normal CDF P(X <= x, Y <= y) with correlation `rho`.
///
/// Genz's rework of the Drezner-Wesolowsky quadrature (the `bvnd` routine),
/// accurate to about 1e-14. `bvnd(h, k, r)` computes the upper orthant
/// P(X > h, Y > k); the CDF is `bvnd(-x, -y, rho)`.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> f64 {
    bvnd(-x, -y, rho).clamp(0.0, 1.0)
}

const GL_6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];
const GL_12: [(f64, f64); 6] = [
    (0.04717533638651177, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];
const GL_20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410906, -0.9122344282513259),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.07652652113349733),
];

fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL_6
    } else if r.abs() < 0.75 {
        &GL_12
    } else {
        &GL_20
    };

    let mut bvn = 0.0;
    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = 0.5 * r.asin();
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / two_pi;
        }
        bvn + normal_cdf(-h) * normal_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let b_s = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (b_s / a_s + hk);
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0
                        + c * d * a_s * a_s / 5.0);
            }
            if -hk < 100.0 {
                let b = b_s.sqrt();
                bvn -= (-0.5 * hk).exp()
                    * SQRT_2PI
                    * normal_cdf(-b / a)
                    * b
                    * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
            }
            a /= 2.0;
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let xs = (a * (is * x + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -0.5 * (b_s / xs + hk);
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn *= -1.0 / two_pi;
        }
        if r > 0.0 {
            bvn + normal_cdf(-h.max(k))
        } else {
            let mut out = -bvn;
            if k > h {
                out += normal_cdf(k) - normal_cdf(h);
            }
            out
        }
    }
}

/// Brent's bounded scalar minimization on `[lo, hi]`.
///
/// Returns `(argmin, min)`. `f` must be continuous; unimodality gives the
/// usual superlinear convergence, otherwise a local minimum is found.
pub fn brent_minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_2;
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut take_golden = true;
        if e.abs() > tol1 {
            // Parabolic interpolation through (v, w, x).
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q2 = 2.0 * (q - r);
            if q2 > 0.0 {
                p = -p;
            } else {
                q2 = -q2;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q2 * e_prev).abs() && p > q2 * (a - x) && p < q2 * (b - x) {
                d = p / q2;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                take_golden = false;
            }
        }
        if take_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimize over `[lo, hi]` by a coarse grid scan followed by Brent
/// refinement around the best bracket. `extra` points are merged into the
/// scan (used to seed from moment estimates).
pub fn scan_then_brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    scan_points: usize,
    extra: &[f64],
    tol: f64,
) -> (f64, f64) {
    let n = scan_points.max(4);
    let mut xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    for &p in extra {
        if p > lo && p < hi {
            xs.push(p);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for (i, &v) in vals.iter().enumerate() {
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let a = if best == 0 { xs[0] } else { xs[best - 1] };
    let b = if best + 1 == xs.len() {
        xs[xs.len() - 1]
    } else {
        xs[best + 1]
    };
    if a == b {
        return (a, best_val);
    }
    let (x, fx) = brent_minimize(&mut f, a, b, tol, 500);
    if fx <= best_val {
        (x, fx)
    } else {
        (xs[best], best_val)
    }
}

/// Root of a monotone continuous function on `[lo, hi]` with f(lo), f(hi)
/// of opposite sign. Illinois-damped regula falsi with a bisection
/// safeguard; converges to `tol` on the argument.
pub fn find_root_monotone<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        // Clamp to the closer endpoint: the root lies outside the bracket.
        return Ok(if fa.abs() < fb.abs() { a } else { b });
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        if (b - a).abs() < tol {
            return Ok(0.5 * (a + b));
        }
        let denom = fb - fa;
        let mut x = if denom.abs() > f64::MIN_POSITIVE {
            (a * fb - b * fa) / denom
        } else {
            0.5 * (a + b)
        };
        // Keep strictly inside; fall back to bisection when stuck at an edge.
        let guard = 0.01 * (b - a);
        if !(x > a + guard * 1e-6 && x < b - guard * 1e-6) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx == 0.0 || (b - a).abs() < tol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    if (b - a).abs() < tol * 10.0 {
        Ok(0.5 * (a + b))
    } else {
        Err(Error::Numeric(format!(
            "root find did not converge: bracket [{a}, {b}] after {max_iter} iterations"
        )))
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Nelder-Mead minimization in 2 dimensions.
///
/// Returns `(argmin, min)`. Used for the two-parameter copula fit where the
/// likelihood surface is smooth but has no separable structure.
pub fn nelder_mead_2d<F: FnMut(&[f64; 2]) -> f64>(
    mut f: F,
    start: [f64; 2],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ];
    let mut vals = [f(&simplex[0]), f(&simplex[1]), f(&simplex[2])];

    for _ in 0..max_iter {
        // Order best..worst.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let (b, m, w) = (idx[0], idx[1], idx[2]);
        if (vals[w] - vals[b]).abs() < tol
            && (simplex[w][0] - simplex[b][0]).abs() + (simplex[w][1] - simplex[b][1]).abs() < tol
        {
            break;
        }
        let centroid = [
            0.5 * (simplex[b][0] + simplex[m][0]),
            0.5 * (simplex[b][1] + simplex[m][1]),
        ];
        let refl = [
            centroid[0] + (centroid[0] - simplex[w][0]),
            centroid[1] + (centroid[1] - simplex[w][1]),
        ];
        let f_refl = f(&refl);
        if f_refl < vals[b] {
            let exp = [
                centroid[0] + 2.0 * (centroid[0] - simplex[w][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[w][1]),
            ];
            let f_exp = f(&exp);
            if f_exp < f_refl {
                simplex[w] = exp;
                vals[w] = f_exp;
            } else {
                simplex[w] = refl;
                vals[w] = f_refl;
            }
        } else if f_refl < vals[m] {
            simplex[w] = refl;
            vals[w] = f_refl;
        } else {
            let contr = [
                centroid[0] + 0.5 * (simplex[w][0] - centroid[0]),
                centroid[1] + 0.5 * (simplex[w][1] - centroid[1]),
            ];
            let f_contr = f(&contr);
            if f_contr < vals[w] {
                simplex[w] = contr;
                vals[w] = f_contr;
            } else {
                // Shrink toward best.
                for i in 0..3 {
                    if i != b {
                        simplex[i] = [
                            simplex[b][0] + 0.5 * (simplex[i][0] - simplex[b][0]),
                            simplex[b][1] + 0.5 * (simplex[i][1] - simplex[b][1]),
                        ];
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    (simplex[best], vals[best])
}

/// Sample Kendall's tau-b via Knight's O(n log n) algorithm.
pub fn sample_kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap()
            .then(y[a].partial_cmp(&y[b]).unwrap())
    });

    let n0 = n as i64 * (n as i64 - 1) / 2;

    // Ties in x and joint ties.
    let mut n1: i64 = 0;
    let mut n3: i64 = 0;
    {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && x[idx[j]] == x[idx[i]] {
                j += 1;
            }
            let t = (j - i) as i64;
            n1 += t * (t - 1) / 2;
            let mut a = i;
            while a < j {
                let mut b = a + 1;
                while b < j && y[idx[b]] == y[idx[a]] {
                    b += 1;
                }
                let tj = (b - a) as i64;
                n3 += tj * (tj - 1) / 2;
                a = b;
            }
            i = j;
        }
    }

    // Ties in y.
    let mut ys: Vec<f64> = y.to_vec();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut n2: i64 = 0;
    {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && ys[j] == ys[i] {
                j += 1;
            }
            let t = (j - i) as i64;
            n2 += t * (t - 1) / 2;
            i = j;
        }
    }

    // Count discordant pairs as merge-sort inversions of y ordered by x.
    let mut seq: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut seq, &mut buf) as i64;

    let num = n0 - n1 - n2 + n3 - 2 * swaps;
    let den = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num as f64 / den
    }
}

fn merge_count(a: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = a.split_at_mut(mid);
        merge_count(l, &mut buf[..mid]) + merge_count(r, &mut buf[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[i] <= a[j] {
            buf[k] = a[i];
            i += 1;
        } else {
            buf[k] = a[j];
            j += 1;
            inv += (mid - i) as u64;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = a[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = a[j];
        j += 1;
        k += 1;
    }
    a.copy_from_slice(&buf[..n]);
    inv
}

/// Empirical quantile with linear interpolation between order statistics
/// (the convention used by most statistics software for continuous data).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// One-sample Kolmogorov-Smirnov statistic of `x` against the CDF `f`.
pub fn ks_statistic<F: Fn(f64) -> f64>(x: &[f64], f: F) -> f64 {
    let mut s: Vec<f64> = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &xi) in s.iter().enumerate() {
        let fx = f(xi);
        d = d.max(((i + 1) as f64 / n - fx).abs());
        d = d.max((fx - i as f64 / n).abs());
    }
    d
}

/// Asymptotic Kolmogorov-Smirnov critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // K^{-1}(1-alpha) for the Kolmogorov distribution.
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c / (n as f64).sqrt()
}
