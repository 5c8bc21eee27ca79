//! Acceptance suite: one line per criterion, PASS/FAIL/SKIP, failing the
//! test if any criterion fails.
//!
//! Criteria 1-5, parts of 8, and 9 evaluate the fitted models against the
//! published reference results for the cd3cd28+aktinhib experiment and
//! need the dataset at `data/sachs_cd3cd28_aktinhib.csv` (override with
//! the `SACHS_DATA` environment variable; see the README for column names
//! and preparation). Without it those criteria are reported as SKIP.
//! Criteria 6 and 7 are self-contained property and oracle suites.
//!
//! Run with `cargo test -p vinesem --test acceptance -- --nocapture`.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use vinesem::numeric::{
    adaptive_simpson, empirical_quantile, ks_critical, ks_statistic, normal_cdf, normal_quantile,
    sample_kendall_tau,
};
use vinesem::{
    cond_median_path, fit_dvine_reg, fit_lgbn, fit_margin, fit_pair_mle, fit_sem, margin_gof,
    param_from_tau, sample_sem, select_pair_family, CopulaConfig, DagSpec, Dataset, Family,
    FitConfig, HDir, MarginKind, MarginOptions, PairCopula, PairCriterion, ParametricCopula,
    PseudoObs, Rotation, SelCriterion, SemModel, SimConfig,
};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Gate {
            failures: Vec::new(),
        }
    }

    fn report(&mut self, id: &str, issues: Vec<String>, detail: String) {
        if issues.is_empty() {
            println!("PASS | {id} | {detail}");
        } else {
            println!("FAIL | {id} | {}", issues.join("; "));
            self.failures.push(format!("{id}: {}", issues.join("; ")));
        }
    }

    fn skip(&mut self, id: &str, why: &str) {
        println!("SKIP | {id} | {why}");
    }

    fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "acceptance criteria failed:\n{}",
            self.failures.join("\n")
        );
    }
}

/// Collects tolerance violations for one criterion.
struct Checks(Vec<String>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        // NaN-safe: anything that is not provably within tolerance fails.
        let within = matches!(
            (got - want).abs().partial_cmp(&tol),
            Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
        );
        if !within {
            self.0
                .push(format!("{what}: {got:.4} vs {want:.4} (tol {tol})"));
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        if !ok {
            self.0.push(what.to_string());
        }
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

const NODE_NAMES: [&str; 11] = [
    "pip3", "plc", "pip2", "pkc", "pka", "p38", "jnk", "raf", "mek", "erk", "akt",
];

/// Load the reference experiment if present: 11 named protein columns,
/// n = 845. Raw-scale files (values in the thousands) are log-transformed;
/// files already on the log scale are used as-is.
fn reference_data() -> Result<Dataset, String> {
    let path = std::env::var("SACHS_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sachs_cd3cd28_aktinhib.csv")
        });
    if !path.exists() {
        return Err(format!("reference data not found at {}", path.display()));
    }
    let mut data =
        Dataset::from_csv_path(&path).map_err(|e| format!("cannot read reference data: {e}"))?;
    for node in NODE_NAMES {
        if !data.has_column(node) {
            return Err(format!("reference data lacks column '{node}'"));
        }
    }
    if data.n() != 845 {
        return Err(format!("reference data has n={}, expected 845", data.n()));
    }
    let max = NODE_NAMES
        .iter()
        .flat_map(|n| data.column(n).unwrap())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max > 30.0 {
        data.log_transform()
            .map_err(|e| format!("log transform failed: {e}"))?;
    }
    Ok(data)
}

fn consent_dag() -> DagSpec {
    DagSpec::from_json_path(fixture("consent_dag.json")).expect("consent DAG fixture")
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    let data = reference_data();
    let dag = consent_dag();

    // Shared fits across the data-gated criteria.
    let gaussian_sem: Option<SemModel> = data
        .as_ref()
        .ok()
        .map(|d| fit_sem(d, &dag, &FitConfig::gaussian()).expect("gaussian SEM fit"));
    let ker_sem: Option<SemModel> = data
        .as_ref()
        .ok()
        .map(|d| fit_sem(d, &dag, &FitConfig::kernel_pnp()).expect("kernel pnp SEM fit"));
    let mix_sem: Option<SemModel> = data
        .as_ref()
        .ok()
        .map(|d| fit_sem(d, &dag, &FitConfig::mixture_pnp()).expect("mixture pnp SEM fit"));

    criterion_1_lgbn(&mut gate, &data, &dag);
    criterion_2_gaussian_sem(&mut gate, &data, &dag, &gaussian_sem);
    criterion_3_pnp_pruning(&mut gate, &data, &ker_sem, &mix_sem);
    criterion_4_parent_orders(&mut gate, &data, &gaussian_sem);
    criterion_5_margins(&mut gate, &data);
    criterion_6_copula_properties(&mut gate);
    criterion_7_gaussian_oracles(&mut gate);
    criterion_8_simulation(&mut gate, &data, &dag, &gaussian_sem, &ker_sem, &mix_sem);
    criterion_9_median_path(&mut gate, &data, &dag, &gaussian_sem);
    pnp_loglik_note(&mut gate, &data, &ker_sem, &mix_sem);

    gate.finish();
}

fn criterion_1_lgbn(gate: &mut Gate, data: &Result<Dataset, String>, dag: &DagSpec) {
    let id = "criterion 1: LGBN reproduction";
    let Ok(data) = data else {
        gate.skip(id, data.as_ref().err().unwrap());
        return;
    };
    let start = Instant::now();
    let model = fit_lgbn(data, dag).expect("LGBN fit");
    let elapsed = start.elapsed();
    let (rows, total) = model.gof_table();
    let mut c = Checks::new();
    c.close("total loglik", total.0, -9189.29, 1.0);
    c.close("total AIC", total.1, 18462.58, 2.0);
    // The published BIC total is internally inconsistent with its own
    // loglik/AIC/parameter count: one node's BIC row implies a different
    // edf than its AIC row, inflating the total by 4.74. The
    // self-consistent value is -2*(-9189.29) + ln(845)*42 = 18661.63.
    c.close("total BIC (published)", total.2, 18666.37, 2.0);
    c.holds("42 parameters", (total.3 - 42.0).abs() < 1e-9);
    let akt = rows.iter().find(|r| r.0 == "akt").unwrap();
    c.close("akt loglik", akt.1, -196.03, 0.5);
    c.holds("runtime < 1 s", elapsed.as_secs_f64() < 1.0);
    gate.report(
        id,
        c.0,
        format!(
            "loglik {:.2}, AIC {:.2}, BIC {:.2}, {} params, {:.3} s",
            total.0,
            total.1,
            total.2,
            total.3,
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_2_gaussian_sem(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    dag: &DagSpec,
    model: &Option<SemModel>,
) {
    let id = "criterion 2: Gaussian-config SEM";
    let (Ok(data), Some(model)) = (data, model) else {
        gate.skip(
            id,
            data.as_ref()
                .err()
                .map(String::as_str)
                .unwrap_or("fit unavailable"),
        );
        return;
    };
    // Refit to measure runtime in isolation.
    let start = Instant::now();
    let timed = fit_sem(data, dag, &FitConfig::gaussian()).expect("gaussian SEM fit");
    let elapsed = start.elapsed();
    let (_, copula_total) = timed.copulas_gof();
    let (_, sem_total) = timed.gof_table(data).expect("gof");
    let lgbn = fit_lgbn(data, dag).expect("LGBN fit");
    let (_, lgbn_total) = lgbn.gof_table();
    let mut c = Checks::new();
    c.close("copula loglik", copula_total.0, 1497.84, 5.0);
    c.close("copula AIC", copula_total.1, -2971.68, 10.0);
    c.holds(
        "SEM total within 10 of LGBN",
        (sem_total.loglik - lgbn_total.0).abs() <= 10.0,
    );
    c.holds(
        &format!("12 retained edges (got {})", timed.retained_edge_count()),
        timed.retained_edge_count() == 12,
    );
    c.holds("runtime < 10 s", elapsed.as_secs_f64() < 10.0);

    // Fixture pair fits from the same pipeline: plc-pip3 and akt-erk on
    // Gaussian-margin pseudo-observations.
    let pit = |node: &str| -> Vec<f64> {
        let m = &model.node_model(node).unwrap().margin;
        model
            .training_column(node)
            .unwrap()
            .iter()
            .map(|&x| m.pit(x))
            .collect()
    };
    let obs = PseudoObs::new(pit("plc"), pit("pip3")).unwrap();
    let pair = fit_pair_mle(&obs, Family::Gaussian, Rotation::R0).expect("pair fit");
    c.close("plc-pip3 gaussian loglik", pair.loglik(), 57.72, 1.0);
    if let PairCopula::Parametric(p) = &pair {
        c.close("plc-pip3 rho", p.params[0], 0.36, 0.01);
    }
    let obs = PseudoObs::new(pit("akt"), pit("erk")).unwrap();
    let sel = select_pair_family(&obs, &[Family::Gaussian], false, PairCriterion::Aic)
        .expect("akt-erk selection");
    c.holds("akt-erk selects gaussian", sel.family_name() == "gaussian");
    c.close(
        "akt-erk tau",
        sel.kendall_tau().unwrap_or(f64::NAN),
        0.67,
        0.01,
    );

    gate.report(
        id,
        c.0,
        format!(
            "copula loglik {:.2}, AIC {:.2}, {} edges, {:.2} s",
            copula_total.0,
            copula_total.1,
            timed.retained_edge_count(),
            elapsed.as_secs_f64()
        ),
    );
}

fn removed_edges(model: &SemModel) -> HashSet<(String, String)> {
    model.pruned_edges().into_iter().collect()
}

fn criterion_3_pnp_pruning(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    ker: &Option<SemModel>,
    mix: &Option<SemModel>,
) {
    let id = "criterion 3: pnp edge pruning";
    let (Ok(_), Some(ker), Some(mix)) = (data, ker, mix) else {
        gate.skip(
            id,
            data.as_ref()
                .err()
                .map(String::as_str)
                .unwrap_or("fit unavailable"),
        );
        return;
    };
    let expected: HashSet<(String, String)> = [("mek", "erk"), ("plc", "pkc"), ("pip3", "akt")]
        .iter()
        .map(|(p, c)| (p.to_string(), c.to_string()))
        .collect();
    let mut c = Checks::new();
    let mut details = Vec::new();
    for (name, model) in [("ker", ker), ("mix", mix)] {
        let removed = removed_edges(model);
        let extra: Vec<String> = removed
            .difference(&expected)
            .map(|(p, ch)| format!("{p}->{ch}"))
            .collect();
        let missing: Vec<String> = expected
            .difference(&removed)
            .map(|(p, ch)| format!("{p}->{ch}"))
            .collect();
        // The nonparametric estimator substitutes for the paper's; one
        // edge of deviation is tolerated but must be visible in the
        // output line.
        c.holds(
            &format!(
                "{name}: removed set deviates by more than one edge (extra {extra:?}, missing {missing:?})"
            ),
            extra.len() <= 1 && missing.len() <= 1,
        );
        if extra.is_empty() && missing.is_empty() {
            details.push(format!(
                "{name}: exact match ({} retained)",
                model.retained_edge_count()
            ));
        } else {
            details.push(format!(
                "{name}: DEVIATION extra {extra:?} missing {missing:?} ({} retained)",
                model.retained_edge_count()
            ));
        }
    }
    gate.report(id, c.0, details.join("; "));
}

fn criterion_4_parent_orders(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    model: &Option<SemModel>,
) {
    let id = "criterion 4: gaussian-config parent orders";
    let (Ok(_), Some(model)) = (data, model) else {
        gate.skip(
            id,
            data.as_ref()
                .err()
                .map(String::as_str)
                .unwrap_or("fit unavailable"),
        );
        return;
    };
    let mut c = Checks::new();
    let mut got = Vec::new();
    for (node, want) in [
        ("raf", vec!["pka", "pkc"]),
        ("mek", vec!["raf", "pkc"]),
        ("akt", vec!["erk", "pka"]),
    ] {
        let order: Vec<String> = model
            .node_model(node)
            .unwrap()
            .regression
            .as_ref()
            .map(|r| r.order.clone())
            .unwrap_or_default();
        c.holds(
            &format!("{node} order {order:?} != {want:?}"),
            order == want.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        );
        got.push(format!("{node}: ({})", order.join(", ")));
    }
    gate.report(id, c.0, got.join("; "));
}

fn criterion_5_margins(gate: &mut Gate, data: &Result<Dataset, String>) {
    let id = "criterion 5: marginal fixtures";
    let Ok(data) = data else {
        gate.skip(id, data.as_ref().err().unwrap());
        return;
    };
    let mut c = Checks::new();
    let opts = MarginOptions::default();
    let pip3 = data.column("pip3").unwrap();
    let g = fit_margin(pip3, MarginKind::Gaussian, &opts).expect("gaussian margin");
    let (mu, sigma) = g.gaussian_params().unwrap();
    c.close("pip3 mu", mu, 3.52, 0.01);
    c.close("pip3 sigma", sigma, 0.61, 0.01);
    let (ll, aic, bic, _) = margin_gof(&g, pip3).unwrap();
    c.close("pip3 loglik", ll, -986.90, 0.5);
    c.close("pip3 AIC", aic, 1977.81, 0.5);
    c.close("pip3 BIC", bic, 1987.29, 0.5);
    // Mixture margins never fit worse than Gaussian by BIC. Equality
    // occurs when the mixture order selection picks one component.
    for node in NODE_NAMES {
        let col = data.column(node).unwrap();
        let gauss = fit_margin(col, MarginKind::Gaussian, &opts).unwrap();
        let mixture = fit_margin(col, MarginKind::Mixture, &opts).unwrap();
        c.holds(
            &format!(
                "{node}: mixture BIC {} > gaussian BIC {}",
                mixture.bic, gauss.bic
            ),
            mixture.bic <= gauss.bic + 1e-6,
        );
    }
    gate.report(
        id,
        c.0,
        format!("pip3 margin ({mu:.2}, {sigma:.2}), loglik {ll:.2}"),
    );
}

/// Parametric family test settings spanning each parameter range.
fn family_settings() -> Vec<(Family, Rotation, Vec<f64>)> {
    use Family::*;
    use Rotation::*;
    vec![
        (Gaussian, R0, vec![-0.85]),
        (Gaussian, R0, vec![0.3]),
        (Gaussian, R0, vec![0.95]),
        (Clayton, R0, vec![0.8]),
        (Clayton, R90, vec![5.0]),
        (Clayton, R0, vec![20.0]),
        (Gumbel, R0, vec![1.2]),
        (Gumbel, R180, vec![2.5]),
        (Gumbel, R0, vec![8.0]),
        (Frank, R0, vec![-20.0]),
        (Frank, R0, vec![4.0]),
        (Frank, R0, vec![25.0]),
        (Joe, R0, vec![1.3]),
        (Joe, R270, vec![3.0]),
        (Joe, R0, vec![8.0]),
        (Bb8, R0, vec![1.5, 0.8]),
        (Bb8, R90, vec![4.0, 0.5]),
        (Bb8, R0, vec![7.0, 0.95]),
    ]
}

/// Integrate g over [-8.5, 8.5] in segments split around the dependence
/// ridge locations, so that adaptive quadrature cannot step over the thin
/// high-density band of strongly dependent copulas.
fn ridge_quadrature<F: Fn(f64) -> f64>(g: F, ridge_at: &[f64], tol: f64) -> f64 {
    let mut cuts = vec![-8.5, 8.5];
    for &r in ridge_at {
        for off in [-3.0, 3.0] {
            let x = r + off;
            if x > -8.5 && x < 8.5 {
                cuts.push(x);
            }
        }
        if r > -8.5 && r < 8.5 {
            cuts.push(r);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.windows(2)
        .map(|w| adaptive_simpson(&g, w[0], w[1], tol))
        .sum()
}

fn criterion_6_copula_properties(gate: &mut Gate) {
    let id = "criterion 6: copula property suite";
    let start = Instant::now();
    let mut c = Checks::new();

    for (family, rotation, params) in family_settings() {
        let spec = ParametricCopula::new(family, rotation, params.clone()).unwrap();
        let tag = format!("{}({:?},{}deg)", family.name(), params, rotation.degrees());

        // Density normalization: substitute both axes through the normal
        // quantile so corner spikes become smooth z-scale lobes, and split
        // the inner integral around the +-x ridge.
        let total = ridge_quadrature(
            |x| {
                let u = normal_cdf(x);
                let px = vinesem::numeric::normal_pdf(x);
                px * ridge_quadrature(
                    |y| spec.pdf(u, normal_cdf(y)) * vinesem::numeric::normal_pdf(y),
                    &[x, -x],
                    1e-8,
                )
            },
            &[0.0],
            1e-7,
        );
        c.close(&format!("{tag} density integral"), total, 1.0, 1e-3);

        // Uniform conditional normalization at five fixed v.
        for v in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let zv = normal_quantile(v);
            let cond = ridge_quadrature(
                |x| spec.pdf(normal_cdf(x), v) * vinesem::numeric::normal_pdf(x),
                &[zv, -zv],
                1e-8,
            );
            c.close(&format!("{tag} conditional at v={v}"), cond, 1.0, 1e-3);
        }

        // h equals the central difference of the CDF, and the density
        // equals the central difference of h, closing the C -> h -> c
        // consistency chain.
        let d = 1e-6;
        let mut grid = 0.05;
        let mut max_h_err: f64 = 0.0;
        let mut max_c_err: f64 = 0.0;
        while grid <= 0.95 + 1e-9 {
            let mut v = 0.05;
            while v <= 0.95 + 1e-9 {
                let fd = (spec.cdf(grid, v + d) - spec.cdf(grid, v - d)) / (2.0 * d);
                max_h_err = max_h_err.max((spec.hfunc(HDir::GivenSecond, grid, v) - fd).abs());
                let fd = (spec.cdf(grid + d, v) - spec.cdf(grid - d, v)) / (2.0 * d);
                max_h_err = max_h_err.max((spec.hfunc(HDir::GivenFirst, grid, v) - fd).abs());
                let fd_c = (spec.hfunc(HDir::GivenSecond, grid + d, v)
                    - spec.hfunc(HDir::GivenSecond, grid - d, v))
                    / (2.0 * d);
                let pdf = spec.pdf(grid, v);
                max_c_err = max_c_err.max((pdf - fd_c).abs() / pdf.max(1.0));
                v += 0.09;
            }
            grid += 0.09;
        }
        c.holds(
            &format!("{tag} h vs finite difference (max err {max_h_err:.2e})"),
            max_h_err <= 1e-5,
        );
        c.holds(
            &format!("{tag} density vs h derivative (max rel err {max_c_err:.2e})"),
            max_c_err <= 1e-4,
        );

        // h-inverse roundtrips on a 9x9 interior grid, both directions.
        // Points where h comes within 1e-6 of the boundary are excluded:
        // there the conditional density underflows and the inversion is
        // numerically void of information.
        let saturated = |h: f64| h <= 1e-6 || h >= 1.0 - 1e-6;
        let mut max_rt: f64 = 0.0;
        for i in 1..=9 {
            for j in 1..=9 {
                let (x, cond) = (i as f64 / 10.0, j as f64 / 10.0);
                let h = spec.hfunc(HDir::GivenSecond, x, cond);
                if !saturated(h) {
                    let back = spec.hinv(HDir::GivenSecond, h, cond).unwrap();
                    max_rt = max_rt.max((back - x).abs());
                }
                let p = spec.hinv(HDir::GivenSecond, x, cond).unwrap();
                let fwd = spec.hfunc(HDir::GivenSecond, p, cond);
                max_rt = max_rt.max((fwd - x).abs());
                let h = spec.hfunc(HDir::GivenFirst, cond, x);
                if !saturated(h) {
                    let back = spec.hinv(HDir::GivenFirst, h, cond).unwrap();
                    max_rt = max_rt.max((back - x).abs());
                }
            }
        }
        c.holds(
            &format!("{tag} hinv roundtrip (max err {max_rt:.2e})"),
            max_rt <= 1e-8,
        );

        // Rotation coherence.
        if family.needs_rotation_for_negative() {
            let base = ParametricCopula::new(family, Rotation::R0, params.clone()).unwrap();
            let r90 = ParametricCopula::new(family, Rotation::R90, params.clone()).unwrap();
            let r270 = ParametricCopula::new(family, Rotation::R270, params.clone()).unwrap();
            c.holds(
                &format!("{tag} rotation tau negation"),
                r90.kendall_tau() == -base.kendall_tau()
                    && r270.kendall_tau() == -base.kendall_tau(),
            );
        }
    }

    // Simulated tau at n = 100 000 against the analytic value.
    let sim_settings = [
        (Family::Gaussian, Rotation::R0, vec![0.6]),
        (Family::Clayton, Rotation::R0, vec![2.0]),
        (Family::Gumbel, Rotation::R0, vec![2.0]),
        (Family::Frank, Rotation::R0, vec![5.0]),
        (Family::Joe, Rotation::R0, vec![2.5]),
        (Family::Bb8, Rotation::R0, vec![3.0, 0.7]),
        (Family::Clayton, Rotation::R90, vec![2.0]),
    ];
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    for (family, rotation, params) in sim_settings {
        let spec = ParametricCopula::new(family, rotation, params.clone()).unwrap();
        let n = 100_000;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let vv: f64 = rng.gen();
            let p: f64 = rng.gen();
            u.push(spec.hinv(HDir::GivenSecond, p, vv).unwrap());
            v.push(vv);
        }
        let tau_hat = sample_kendall_tau(&u, &v);
        c.close(
            &format!(
                "{}({:?},{}deg) simulated tau",
                family.name(),
                params,
                rotation.degrees()
            ),
            tau_hat,
            spec.kendall_tau(),
            0.01,
        );
    }

    // Tau inversion for one-parameter families.
    for (family, tau) in [
        (Family::Gaussian, -0.4),
        (Family::Clayton, 0.55),
        (Family::Gumbel, 0.3),
        (Family::Frank, -0.45),
        (Family::Joe, 0.62),
    ] {
        let params = param_from_tau(family, Rotation::R0, tau).unwrap();
        let spec = ParametricCopula::new(family, Rotation::R0, params).unwrap();
        c.close(
            &format!("{} param_from_tau roundtrip", family.name()),
            spec.kendall_tau(),
            tau,
            1e-6,
        );
    }

    let elapsed = start.elapsed();
    c.holds("runtime < 60 s", elapsed.as_secs_f64() < 60.0);
    gate.report(
        id,
        c.0,
        format!("18 settings, {:.1} s", elapsed.as_secs_f64()),
    );
}

fn criterion_7_gaussian_oracles(gate: &mut Gate) {
    let id = "criterion 7: gaussian oracle suite";
    let mut c = Checks::new();

    // Trivariate normal with known correlation matrix.
    let r = [[1.0, 0.6, 0.4], [0.6, 1.0, 0.3], [0.4, 0.3, 1.0]];
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = r[i][j];
            for (lik, ljk) in l[i].iter().zip(&l[j]).take(j) {
                s -= lik * ljk;
            }
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let n = 5000;
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let z: Vec<f64> = (0..3)
            .map(|_| normal_quantile(rng.gen_range(1e-12..1.0 - 1e-12)))
            .collect();
        for i in 0..3 {
            let x: f64 = (0..=i).map(|k| l[i][k] * z[k]).sum();
            cols[i].push(x);
        }
    }

    // D-vine regression of the first coordinate on the other two, with
    // fitted Gaussian margins (the IFM pipeline).
    let opts = MarginOptions::default();
    let margins: Vec<_> = cols
        .iter()
        .map(|col| fit_margin(col, MarginKind::Gaussian, &opts).unwrap())
        .collect();
    let to_u = |i: usize| -> Vec<f64> { cols[i].iter().map(|&x| margins[i].pit(x)).collect() };
    let cands = vec![("x1".to_string(), to_u(1)), ("x2".to_string(), to_u(2))];
    let reg = fit_dvine_reg(
        "y",
        &to_u(0),
        &cands,
        SelCriterion::Caic,
        &CopulaConfig::gaussian_only(),
    )
    .expect("dvine fit");
    c.holds("both covariates selected", reg.m() == 2);

    // Analytic conditional law of X0 | X1, X2.
    let det = 1.0 - 0.3f64 * 0.3;
    let inv = [[1.0 / det, -0.3 / det], [-0.3 / det, 1.0 / det]];
    let s01 = [0.6, 0.4];
    let w = [
        s01[0] * inv[0][0] + s01[1] * inv[1][0],
        s01[0] * inv[0][1] + s01[1] * inv[1][1],
    ];
    let cvar = 1.0 - (w[0] * s01[0] + w[1] * s01[1]);
    let mut max_q_err: f64 = 0.0;
    for &(a, b) in &[
        (0.6, -0.4),
        (-1.1, 0.9),
        (0.0, 0.0),
        (1.4, 1.2),
        (-0.7, -1.3),
    ] {
        let cmean = w[0] * a + w[1] * b;
        let x_u: HashMap<String, f64> = [
            ("x1".to_string(), margins[1].pit(a)),
            ("x2".to_string(), margins[2].pit(b)),
        ]
        .into();
        for &alpha in &[0.1, 0.5, 0.9] {
            let q_u = reg.cond_quantile(alpha, &x_u).unwrap();
            let got = margins[0].pit_inv(q_u);
            let want = cmean + cvar.sqrt() * normal_quantile(alpha);
            max_q_err = max_q_err.max((got - want).abs());
        }
    }
    c.holds(
        &format!("conditional quantiles within 0.03 (max err {max_q_err:.4})"),
        max_q_err <= 0.03,
    );

    // Joint density of a Gaussian-config SEM equals the closed-form
    // multivariate normal built from its own coefficients.
    let names = vec!["y".to_string(), "x1".to_string(), "x2".to_string()];
    let data = Dataset::new(names.clone(), cols.clone()).unwrap();
    let dag = DagSpec::new(
        names.clone(),
        vec![
            ("x1".to_string(), "y".to_string()),
            ("x2".to_string(), "y".to_string()),
            ("x1".to_string(), "x2".to_string()),
        ],
    )
    .unwrap();
    let sem = fit_sem(&data, &dag, &FitConfig::gaussian()).expect("sem fit");
    let implied = sem.implied_lgbn().expect("implied lgbn");
    let (mnames, mean, cov) = implied.implied_moments();
    let prec = cov.clone().try_inverse().unwrap();
    let logdet = cov.determinant().ln();
    let mut max_d_err: f64 = 0.0;
    for t in 0..20 {
        let i = (t * 211) % n;
        let point: HashMap<String, f64> = names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), cols[j][i] * 0.95 + 0.05))
            .collect();
        let sem_ld = sem.joint_logdensity(&point).unwrap();
        let dv = nalgebra::DVector::from_iterator(3, mnames.iter().map(|nm| point[nm])) - &mean;
        let mvn = -0.5
            * (3.0 * (2.0 * std::f64::consts::PI).ln()
                + logdet
                + (dv.transpose() * &prec * &dv)[0]);
        max_d_err = max_d_err.max((sem_ld - mvn).abs());
    }
    c.holds(
        &format!("joint density vs closed form within 1e-4 (max err {max_d_err:.2e})"),
        max_d_err <= 1e-4,
    );

    gate.report(
        id,
        c.0,
        format!("quantile err {max_q_err:.4}, density err {max_d_err:.2e}"),
    );
}

fn criterion_8_simulation(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    dag: &DagSpec,
    gaussian: &Option<SemModel>,
    ker: &Option<SemModel>,
    mix: &Option<SemModel>,
) {
    let id = "criterion 8: simulation suite";
    let mut c = Checks::new();
    let mut detail = Vec::new();

    // Seeded determinism holds for any fitted model; check it on a small
    // synthetic mixed-copula model so it runs even without the reference
    // data.
    {
        let mut rng = ChaCha12Rng::seed_from_u64(808);
        let n = 400;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let x = normal_quantile(rng.gen_range(1e-12..1.0 - 1e-12));
            a.push(x);
            b.push(0.8 * x + 0.6 * normal_quantile(rng.gen_range(1e-12..1.0 - 1e-12)));
        }
        let sdata = Dataset::new(vec!["a".into(), "b".into()], vec![a, b]).unwrap();
        let sdag = DagSpec::new(
            vec!["a".into(), "b".into()],
            vec![("a".to_string(), "b".to_string())],
        )
        .unwrap();
        let smodel = fit_sem(&sdata, &sdag, &FitConfig::mixture_pnp()).unwrap();
        let s1 = sample_sem(&smodel, &SimConfig { n: 300, seed: 99 }).unwrap();
        let s2 = sample_sem(&smodel, &SimConfig { n: 300, seed: 99 }).unwrap();
        let identical = ["a", "b"].iter().all(|nm| {
            s1.column(nm)
                .unwrap()
                .iter()
                .zip(s2.column(nm).unwrap())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
        c.holds("seeded reruns byte-identical", identical);
        detail.push("determinism ok".to_string());
    }

    let (Ok(data), Some(gaussian), Some(ker), Some(mix)) = (data, gaussian, ker, mix) else {
        gate.report(
            id,
            c.0,
            format!(
                "{}; reference-data checks skipped ({})",
                detail.join("; "),
                data.as_ref()
                    .err()
                    .map(String::as_str)
                    .unwrap_or("fit unavailable")
            ),
        );
        return;
    };

    // Per-column KS against the fitted margins at 1%.
    for (name, model) in [("gaussian", gaussian), ("ker", ker), ("mix", mix)] {
        let sim = sample_sem(model, &SimConfig { n: 845, seed: 1234 }).unwrap();
        let mut worst = (String::new(), 0.0f64);
        for node in NODE_NAMES {
            let margin = &model.node_model(node).unwrap().margin;
            let d = ks_statistic(sim.column(node).unwrap(), |x| margin.cdf(x));
            if d > worst.1 {
                worst = (node.to_string(), d);
            }
        }
        c.holds(
            &format!("{name}: KS rejected ({} d={:.4})", worst.0, worst.1),
            worst.1 < ks_critical(845, 0.01),
        );
    }

    // Kendall tau of simulated akt vs erk under the kernel pnp model.
    let sim = sample_sem(ker, &SimConfig { n: 845, seed: 4321 }).unwrap();
    let tau = sample_kendall_tau(sim.column("akt").unwrap(), sim.column("erk").unwrap());
    c.close("pnp simulated tau(akt, erk)", tau, 0.67, 0.05);
    detail.push(format!("tau(akt,erk) {tau:.3}"));

    // Sum-over-nodes mean for every config, including the LGBN.
    let lgbn = fit_lgbn(data, dag).unwrap();
    let row_sums = |ds: &Dataset| -> Vec<f64> {
        (0..ds.n())
            .map(|i| NODE_NAMES.iter().map(|nm| ds.column(nm).unwrap()[i]).sum())
            .collect()
    };
    let train = row_sums(data);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = |xs: &[f64], m: f64| {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let mt = mean(&train);
    let st = sd(&train, mt);
    let mut sum_checks = Vec::new();
    for (name, sums) in [
        (
            "gaussian",
            row_sums(&sample_sem(gaussian, &SimConfig { n: 845, seed: 77 }).unwrap()),
        ),
        (
            "ker",
            row_sums(&sample_sem(ker, &SimConfig { n: 845, seed: 77 }).unwrap()),
        ),
        (
            "mix",
            row_sums(&sample_sem(mix, &SimConfig { n: 845, seed: 77 }).unwrap()),
        ),
        (
            "lgbn",
            row_sums(&vinesem::sample_lgbn(&lgbn, &SimConfig { n: 845, seed: 77 }).unwrap()),
        ),
    ] {
        let ms = mean(&sums);
        let se = (st * st / 845.0 + sd(&sums, ms).powi(2) / 845.0).sqrt();
        c.holds(
            &format!(
                "{name}: sum-over-nodes mean {ms:.3} vs {mt:.3} (3 se = {:.3})",
                3.0 * se
            ),
            (ms - mt).abs() < 3.0 * se,
        );
        sum_checks.push(format!("{name} {ms:.2}"));
    }
    detail.push(format!(
        "row-sum means [{}] vs train {mt:.2}",
        sum_checks.join(", ")
    ));

    gate.report(id, c.0, detail.join("; "));
}

fn criterion_9_median_path(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    dag: &DagSpec,
    gaussian: &Option<SemModel>,
) {
    let id = "criterion 9: conditional median path";
    let (Ok(data), Some(gaussian)) = (data, gaussian) else {
        gate.skip(
            id,
            data.as_ref()
                .err()
                .map(String::as_str)
                .unwrap_or("fit unavailable"),
        );
        return;
    };
    let mut c = Checks::new();
    let path = cond_median_path(gaussian, 0.5).expect("median path");
    c.holds("one value per node", path.len() == 11);
    // Root at the sample median.
    let mut pip3 = data.column("pip3").unwrap().to_vec();
    pip3.sort_by(|a, b| a.partial_cmp(b).unwrap());
    c.close(
        "pip3 root value",
        path[0].1,
        empirical_quantile(&pip3, 0.5),
        1e-9,
    );
    // Iterate the LGBN conditional means from the same root value.
    let lgbn = fit_lgbn(data, dag).unwrap();
    let mut values: HashMap<String, f64> = HashMap::new();
    let mut max_gap: f64 = 0.0;
    for (node, sem_value) in &path {
        let reg = lgbn.node(node).unwrap();
        let value = if reg.parents.is_empty() {
            path[0].1
        } else {
            lgbn.cond_params(node, &values).unwrap().0
        };
        values.insert(node.clone(), value);
        max_gap = max_gap.max((sem_value - value).abs());
        c.holds(
            &format!("{node}: sem {sem_value:.3} vs lgbn mean {value:.3}"),
            (sem_value - value).abs() <= 0.05,
        );
    }
    gate.report(
        id,
        c.0,
        format!("max gap to iterated LGBN means {max_gap:.4}"),
    );
}

fn pnp_loglik_note(
    gate: &mut Gate,
    data: &Result<Dataset, String>,
    ker: &Option<SemModel>,
    mix: &Option<SemModel>,
) {
    let id = "note: pnp copula loglik totals within 10%";
    let (Ok(_), Some(ker), Some(mix)) = (data, ker, mix) else {
        gate.skip(
            id,
            data.as_ref()
                .err()
                .map(String::as_str)
                .unwrap_or("fit unavailable"),
        );
        return;
    };
    let mut c = Checks::new();
    let (_, ker_total) = ker.copulas_gof();
    let (_, mix_total) = mix.copulas_gof();
    c.holds(
        &format!("ker copula loglik {:.2} vs 2316.23", ker_total.0),
        (ker_total.0 - 2316.23).abs() <= 0.10 * 2316.23,
    );
    c.holds(
        &format!("mix copula loglik {:.2} vs 2292.34", mix_total.0),
        (mix_total.0 - 2292.34).abs() <= 0.10 * 2292.34,
    );
    gate.report(
        id,
        c.0,
        format!(
            "ker {:.2} (target 2316.23), mix {:.2} (target 2292.34)",
            ker_total.0, mix_total.0
        ),
    );
}
