//! Command-line front end: fit SEM and LGBN models, simulate, draw
//! conditional samples, propagate quantile paths, and evaluate joint
//! densities. See `vinesem --help`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use vinesem::dataset::format_sig;
use vinesem::{
    cond_median_path, fit_lgbn, fit_sem, sample_lgbn, sample_node_given_parents, sample_sem,
    CopulaConfig, DagSpec, Dataset, FitConfig, LgbnModel, MarginKind, SelCriterion, SemModel,
    SimConfig,
};

const SIG_DIGITS: usize = 6;

#[derive(Parser)]
#[command(
    name = "vinesem",
    version,
    about = "D-vine copula SEMs on DAGs",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker threads for fitting and grid evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a D-vine copula SEM and write the model plus fit tables.
    Fit(FitArgs),
    /// Fit the linear Gaussian Bayesian network reference model.
    FitLgbn(FitLgbnArgs),
    /// Forward-sample a fitted model.
    Simulate(SimulateArgs),
    /// Sample one node given fixed parent values.
    CondSample(CondSampleArgs),
    /// Conditional median path down the topological order.
    QuantilePath(QuantilePathArgs),
    /// Joint log-density of a fitted SEM at given observations.
    JointDensity(JointDensityArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row of node names.
    #[arg(long)]
    data: PathBuf,
    /// DAG JSON: {"nodes": [...], "edges": [["parent","child"], ...]}.
    #[arg(long)]
    dag: PathBuf,
    /// Apply the natural logarithm to all columns before fitting.
    #[arg(long)]
    log: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Margin estimator.
    #[arg(long, default_value = "kde", value_parser = ["gaussian", "mixture", "kde"])]
    margins: String,
    /// Pair copula catalogue.
    #[arg(long, default_value = "pnp", value_parser = ["gaussian", "parametric", "pnp"])]
    copulas: String,
    /// Forward-selection criterion.
    #[arg(long, default_value = "caic", value_parser = ["cll", "caic", "cbic"])]
    criterion: String,
    /// Seed for estimator restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitLgbnArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// model.json or lgbn.json from a previous fit.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 845)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CondSampleArgs {
    /// model.json from a previous SEM fit.
    #[arg(long)]
    model: PathBuf,
    /// Node to sample.
    #[arg(long)]
    node: String,
    /// CSV of conditioning values: either columns (parent,value) or the
    /// long fixture layout (node,parent,point,value) filtered by --node
    /// and --point.
    #[arg(long)]
    cond_values: PathBuf,
    /// Conditioning point label when the long layout is used.
    #[arg(long, default_value = "mode")]
    point: String,
    #[arg(long, default_value_t = 845)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QuantilePathArgs {
    #[arg(long)]
    model: PathBuf,
    /// Quantile level for the root nodes.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JointDensityArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of observations (header row of node names).
    #[arg(long)]
    data: PathBuf,
    /// Apply the natural logarithm to all columns first.
    #[arg(long)]
    log: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Exit codes: 0 success, 1 numeric failure, 2 usage or input error.
fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("VINESEM_LOG")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::FitLgbn(args) => cmd_fit_lgbn(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::CondSample(args) => cmd_cond_sample(args),
        Command::QuantilePath(args) => cmd_quantile_path(args),
        Command::JointDensity(args) => cmd_joint_density(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let code = if is_usage(&err) { 2 } else { 1 };
        std::process::exit(code);
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    match err.downcast_ref::<vinesem::Error>() {
        Some(e) => matches!(
            e,
            vinesem::Error::Usage(_)
                | vinesem::Error::Cycle { .. }
                | vinesem::Error::Csv(_)
                | vinesem::Error::Json(_)
                | vinesem::Error::Io(_)
                | vinesem::Error::Insufficient { .. }
                | vinesem::Error::Degenerate(_)
        ),
        None => true,
    }
}

fn load_inputs(input: &DataArgs) -> anyhow::Result<(Dataset, DagSpec)> {
    let mut data = Dataset::from_csv_path(&input.data)
        .with_context(|| format!("reading {}", input.data.display()))?;
    if input.log {
        data.log_transform()?;
    }
    let dag = DagSpec::from_json_path(&input.dag)
        .with_context(|| format!("reading {}", input.dag.display()))?;
    Ok((data, dag))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Sidecar run description; the only output allowed to carry a timestamp.
fn write_sidecar(out: &Path, name: &str, payload: serde_json::Value) -> anyhow::Result<()> {
    let mut doc = payload;
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    doc["timestamp_unix"] = serde_json::json!(ts);
    write_text(&out.join(name), &serde_json::to_string_pretty(&doc)?)
}

fn gof_csv(rows: &[vinesem::sem::GofRow], total: &vinesem::sem::GofRow) -> String {
    let mut s = String::from("node,loglik,aic,bic,edf\n");
    for r in rows.iter().chain(std::iter::once(total)) {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.node,
            format_sig(r.loglik, SIG_DIGITS),
            format_sig(r.aic, SIG_DIGITS),
            format_sig(r.bic, SIG_DIGITS),
            format_sig(r.edf, SIG_DIGITS)
        ));
    }
    s
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let (data, dag) = load_inputs(&args.input)?;
    let config = FitConfig {
        margin: MarginKind::from_name(&args.margins)?,
        copulas: CopulaConfig::from_name(&args.copulas)?,
        criterion: SelCriterion::from_name(&args.criterion)?,
        mixture_kmax: 5,
        seed: args.seed,
    };
    std::fs::create_dir_all(&args.out)?;
    let model = fit_sem(&data, &dag, &config)?;

    write_text(
        &args.out.join("model.json"),
        &serde_json::to_string(&model)?,
    )?;

    let (mrows, mtotal) = model.margins_gof();
    write_text(&args.out.join("margins_gof.csv"), &gof_csv(&mrows, &mtotal))?;

    let (crows, ctotal) = model.copulas_gof();
    let mut copulas = String::from("node,order,loglik,aic,bic\n");
    for (node, order, cll, caic, cbic) in &crows {
        copulas.push_str(&format!(
            "{},{},{},{},{}\n",
            node,
            order.join(" "),
            format_sig(*cll, SIG_DIGITS),
            format_sig(*caic, SIG_DIGITS),
            format_sig(*cbic, SIG_DIGITS)
        ));
    }
    copulas.push_str(&format!(
        "total,,{},{},{}\n",
        format_sig(ctotal.0, SIG_DIGITS),
        format_sig(ctotal.1, SIG_DIGITS),
        format_sig(ctotal.2, SIG_DIGITS)
    ));
    write_text(&args.out.join("copulas_gof.csv"), &copulas)?;

    let (srows, stotal) = model.gof_table(&data)?;
    write_text(&args.out.join("sem_gof.csv"), &gof_csv(&srows, &stotal))?;

    let mut pruned = String::new();
    for (p, c) in model.pruned_edges() {
        pruned.push_str(&format!("{p} -> {c}\n"));
    }
    write_text(&args.out.join("pruned_edges.txt"), &pruned)?;

    // Margin diagnostics for external plotting: fitted density curves and
    // the PIT-transformed training data.
    let mut curves = String::from("node,x,density\n");
    for name in &model.topo_order {
        let margin = &model.node_model(name)?.margin;
        let (lo, hi) = margin.sample_range();
        let pad = 0.1 * (hi - lo);
        for i in 0..=200 {
            let x = lo - pad + (hi - lo + 2.0 * pad) * i as f64 / 200.0;
            curves.push_str(&format!(
                "{name},{},{}\n",
                format_sig(x, SIG_DIGITS),
                format_sig(margin.pdf(x), SIG_DIGITS)
            ));
        }
    }
    write_text(&args.out.join("margin_curves.csv"), &curves)?;

    let mut pits = model.topo_order.join(",");
    pits.push('\n');
    for i in 0..model.n {
        let row: Vec<String> = model
            .topo_order
            .iter()
            .map(|name| {
                let margin = &model.node_model(name).unwrap().margin;
                let col = model.training_column(name).unwrap();
                format_sig(margin.pit(col[i]), SIG_DIGITS)
            })
            .collect();
        pits.push_str(&row.join(","));
        pits.push('\n');
    }
    write_text(&args.out.join("pit_values.csv"), &pits)?;

    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "fit",
            "data": args.input.data.display().to_string(),
            "dag": args.input.dag.display().to_string(),
            "margins": args.margins,
            "copulas": args.copulas,
            "criterion": args.criterion,
            "seed": args.seed,
            "n": model.n,
            "retained_edges": model.retained_edge_count(),
        }),
    )?;
    println!(
        "fitted {} nodes on n={} ({} of {} edges retained)",
        model.topo_order.len(),
        model.n,
        model.retained_edge_count(),
        model.dag.edges.len()
    );
    Ok(())
}

fn cmd_fit_lgbn(args: FitLgbnArgs) -> anyhow::Result<()> {
    let (data, dag) = load_inputs(&args.input)?;
    std::fs::create_dir_all(&args.out)?;
    let model = fit_lgbn(&data, &dag)?;
    write_text(
        &args.out.join("lgbn.json"),
        &serde_json::to_string_pretty(&model)?,
    )?;
    let (rows, total) = model.gof_table();
    let mut s = String::from("node,loglik,aic,bic,edf\n");
    for (node, ll, aic, bic, edf) in &rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            node,
            format_sig(*ll, SIG_DIGITS),
            format_sig(*aic, SIG_DIGITS),
            format_sig(*bic, SIG_DIGITS),
            format_sig(*edf, SIG_DIGITS)
        ));
    }
    s.push_str(&format!(
        "total,{},{},{},{}\n",
        format_sig(total.0, SIG_DIGITS),
        format_sig(total.1, SIG_DIGITS),
        format_sig(total.2, SIG_DIGITS),
        format_sig(total.3, SIG_DIGITS)
    ));
    write_text(&args.out.join("lgbn_gof.csv"), &s)?;
    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "fit-lgbn",
            "data": args.input.data.display().to_string(),
            "dag": args.input.dag.display().to_string(),
            "n": model.n,
        }),
    )?;
    println!(
        "fitted LGBN: total loglik {}",
        format_sig(total.0, SIG_DIGITS)
    );
    Ok(())
}

/// A fitted model file: either a SEM or an LGBN.
enum AnyModel {
    Sem(Box<SemModel>),
    Lgbn(Box<LgbnModel>),
}

fn load_model(path: &Path) -> anyhow::Result<AnyModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(sem) = serde_json::from_str::<SemModel>(&text) {
        return Ok(AnyModel::Sem(Box::new(sem)));
    }
    let lgbn: LgbnModel = serde_json::from_str(&text).map_err(|e| {
        anyhow::Error::from(vinesem::Error::Usage(format!(
            "{} is neither a SEM nor an LGBN model file: {e}",
            path.display()
        )))
    })?;
    Ok(AnyModel::Lgbn(Box::new(lgbn)))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    std::fs::create_dir_all(&args.out)?;
    let cfg = SimConfig {
        n: args.n,
        seed: args.seed,
    };
    let sample = match &model {
        AnyModel::Sem(m) => sample_sem(m, &cfg)?,
        AnyModel::Lgbn(m) => sample_lgbn(m, &cfg)?,
    };
    let mut buf = Vec::new();
    sample.write_csv(&mut buf, SIG_DIGITS)?;
    write_text(&args.out.join("samples.csv"), &String::from_utf8(buf)?)?;
    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "simulate",
            "model": args.model.display().to_string(),
            "n": args.n,
            "seed": args.seed,
        }),
    )?;
    println!("wrote {} samples", args.n);
    Ok(())
}

fn read_cond_values(path: &Path, node: &str, point: &str) -> anyhow::Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut out = HashMap::new();
    if let (Some(pi), Some(vi)) = (col("parent"), col("value")) {
        let ni = col("node");
        let poi = col("point");
        for rec in rdr.records() {
            let rec = rec?;
            if let Some(ni) = ni {
                if rec.get(ni) != Some(node) {
                    continue;
                }
            }
            if let Some(poi) = poi {
                if rec.get(poi) != Some(point) {
                    continue;
                }
            }
            let parent = rec.get(pi).unwrap_or_default().to_string();
            let value: f64 =
                rec.get(vi).unwrap_or_default().parse().map_err(|_| {
                    vinesem::Error::Usage(format!("bad value for parent '{parent}'"))
                })?;
            out.insert(parent, value);
        }
    } else {
        return Err(vinesem::Error::Usage(
            "conditioning CSV needs 'parent' and 'value' columns".into(),
        )
        .into());
    }
    if out.is_empty() {
        return Err(vinesem::Error::Usage(format!(
            "no conditioning rows for node '{node}' (point '{point}') in {}",
            path.display()
        ))
        .into());
    }
    Ok(out)
}

fn cmd_cond_sample(args: CondSampleArgs) -> anyhow::Result<()> {
    let AnyModel::Sem(model) = load_model(&args.model)? else {
        return Err(vinesem::Error::Usage("cond-sample needs a SEM model".into()).into());
    };
    let cond = read_cond_values(&args.cond_values, &args.node, &args.point)?;
    std::fs::create_dir_all(&args.out)?;
    let draws = sample_node_given_parents(&model, &args.node, &cond, args.n, args.seed)?;
    let mut s = format!("{}\n", args.node);
    for d in &draws {
        s.push_str(&format_sig(*d, SIG_DIGITS));
        s.push('\n');
    }
    write_text(&args.out.join("cond_samples.csv"), &s)?;

    // The conditional density as data: a kernel density estimate over the
    // drawn samples, evaluated on a grid for external plotting.
    let kde = vinesem::fit_margin(
        &draws,
        vinesem::MarginKind::Kde,
        &vinesem::MarginOptions::default(),
    )?;
    let (lo, hi) = kde.sample_range();
    let pad = 0.1 * (hi - lo).max(1e-9);
    let mut dens = String::from("x,density\n");
    for i in 0..=200 {
        let x = lo - pad + (hi - lo + 2.0 * pad) * i as f64 / 200.0;
        dens.push_str(&format!(
            "{},{}\n",
            format_sig(x, SIG_DIGITS),
            format_sig(kde.pdf(x), SIG_DIGITS)
        ));
    }
    write_text(&args.out.join("cond_density.csv"), &dens)?;

    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "cond-sample",
            "model": args.model.display().to_string(),
            "node": args.node,
            "point": args.point,
            "conditioning": cond,
            "n": args.n,
            "seed": args.seed,
        }),
    )?;
    println!("wrote {} conditional samples for {}", args.n, args.node);
    Ok(())
}

fn cmd_quantile_path(args: QuantilePathArgs) -> anyhow::Result<()> {
    let AnyModel::Sem(model) = load_model(&args.model)? else {
        return Err(vinesem::Error::Usage("quantile-path needs a SEM model".into()).into());
    };
    std::fs::create_dir_all(&args.out)?;
    let path = cond_median_path(&model, args.alpha)?;
    let mut s = String::from("node,value\n");
    for (node, value) in &path {
        s.push_str(&format!("{node},{}\n", format_sig(*value, SIG_DIGITS)));
    }
    write_text(&args.out.join("quantile_path.csv"), &s)?;
    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "quantile-path",
            "model": args.model.display().to_string(),
            "alpha": args.alpha,
        }),
    )?;
    println!("wrote quantile path for alpha {}", args.alpha);
    Ok(())
}

fn cmd_joint_density(args: JointDensityArgs) -> anyhow::Result<()> {
    let AnyModel::Sem(model) = load_model(&args.model)? else {
        return Err(vinesem::Error::Usage("joint-density needs a SEM model".into()).into());
    };
    let mut data = Dataset::from_csv_path(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    if args.log {
        data.log_transform()?;
    }
    for node in &model.topo_order {
        if !data.has_column(node) {
            return Err(
                vinesem::Error::Usage(format!("data is missing model column '{node}'")).into(),
            );
        }
    }
    std::fs::create_dir_all(&args.out)?;
    let mut s = String::from("row,logdensity,clamped_pits\n");
    let mut total_clamped = 0usize;
    for i in 0..data.n() {
        let x: HashMap<String, f64> = model
            .topo_order
            .iter()
            .map(|node| (node.clone(), data.column(node).unwrap()[i]))
            .collect();
        let (ld, clamped) = model.joint_logdensity_with_diagnostics(&x)?;
        total_clamped += clamped;
        s.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            format_sig(ld, SIG_DIGITS),
            clamped
        ));
    }
    write_text(&args.out.join("joint_density.csv"), &s)?;
    if total_clamped > 0 {
        log::warn!("{total_clamped} PIT values hit the clamping boundary");
    }
    write_sidecar(
        &args.out,
        "run_info.json",
        serde_json::json!({
            "command": "joint-density",
            "model": args.model.display().to_string(),
            "data": args.data.display().to_string(),
            "rows": data.n(),
            "clamped_pits": total_clamped,
        }),
    )?;
    println!("evaluated {} rows", data.n());
    Ok(())
}
