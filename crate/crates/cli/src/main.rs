//! `glamer` — command-line front end for the GLAMER pipeline: Group Lasso,
//! factor-level merging, maximum-likelihood refit, lambda-net model
//! selection, prediction, and simulation/benchmark drivers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use rand::Rng;
use serde_json::json;

use glamer_core::design::{self, Dataset, DesignMatrix, Schema};
use glamer_core::glm::Family;
use glamer_core::merge::Linkage;
use glamer_core::select::{self, PipelineConfig, SavedModel, SelectionCriterion};
use glamer_core::simbench::{self, SyntheticSpec};
use glamer_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "glamer",
    about = "Sparse regression with categorical predictors: Group Lasso, level merging, MLE refit",
    version
)]
struct Cli {
    /// RNG seed; drawn and printed when absent
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataOpts {
    /// Data CSV (header row required)
    #[arg(long)]
    data: PathBuf,
    /// Schema file: one `name,kind[,level|level|...]` line per predictor
    #[arg(long)]
    schema: PathBuf,
    /// Response column (default: the single data column absent from the schema)
    #[arg(long)]
    response: Option<String>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    family: FamilyArg,
}

#[derive(Args)]
struct NetOpts {
    /// Number of lambda grid points
    #[arg(long, default_value_t = 100)]
    nlambda: usize,
    /// Smallest-to-largest lambda ratio of the geometric grid
    #[arg(long, default_value_t = 1e-3)]
    lambda_ratio: f64,
    /// Weight exponent: column weight = ||x||^q
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, value_enum, default_value_t = LinkageArg::Complete)]
    linkage: LinkageArg,
}

#[derive(Args)]
struct SelectOpts {
    #[arg(long, value_enum)]
    select: Option<SelectArg>,
    /// Cross-validation folds
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// RIC per-parameter penalty constant
    #[arg(long, default_value_t = 2.0)]
    ric_const: f64,
}

#[derive(Copy, Clone, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Logistic,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Logistic => Family::Logistic,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum LinkageArg {
    Single,
    Complete,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Linkage {
        match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SelectArg {
    Cv,
    Ric,
}

#[derive(Subcommand)]
enum Command {
    /// Single fit at explicit (lambda, tau): Group Lasso, threshold merge, MLE refit
    Fit {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
    },
    /// Lambda net with nested families; final model by RIC (or CV via --select)
    Path {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        net: NetOpts,
        #[command(flatten)]
        sel: SelectOpts,
    },
    /// Lambda net with cross-validated final selection
    Cv {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        net: NetOpts,
        #[command(flatten)]
        sel: SelectOpts,
    },
    /// Apply a saved model to new rows
    Predict {
        /// Saved model JSON
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional schema file checked against the model's fingerprint
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Treat unseen factor levels as the reference level
        #[arg(long)]
        map_unseen_to_reference: bool,
    },
    /// Recovery-rate curve on synthetic data from a JSON experiment spec
    Simulate {
        /// Experiment spec JSON (base synthetic spec + grid + replications)
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        net: NetOpts,
        #[command(flatten)]
        sel: SelectOpts,
    },
    /// Train/test PE and MD table on a real dataset
    Bench {
        #[command(flatten)]
        data: DataOpts,
        /// Training split percentage
        #[arg(long, default_value_t = 70.0)]
        m_percent: f64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[command(flatten)]
        net: NetOpts,
        #[command(flatten)]
        sel: SelectOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 0 success, 2 configuration/validation, 3 data/model incompatibility,
/// 4 numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) | Error::InvalidParameter(_) | Error::Io(_) => 2,
        Error::Data(_)
        | Error::Dimension(_)
        | Error::RankDeficient { .. }
        | Error::Csv(_)
        | Error::Json(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("cannot set --threads: {e}")))?;
    }
    let seed = match cli.seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::thread_rng().gen();
            println!("seed: {s}");
            s
        }
    };
    std::fs::create_dir_all(&cli.out)?;

    match cli.command {
        Command::Fit {
            data,
            lambda,
            tau,
            q,
        } => cmd_fit(&cli.out, &data, lambda, tau, q, seed, cli.threads),
        Command::Path { data, net, sel } => cmd_net(
            &cli.out,
            &data,
            &net,
            criterion(&sel, SelectArg::Ric),
            seed,
            cli.threads,
            "path",
        ),
        Command::Cv { data, net, sel } => cmd_net(
            &cli.out,
            &data,
            &net,
            criterion(&sel, SelectArg::Cv),
            seed,
            cli.threads,
            "cv",
        ),
        Command::Predict {
            model,
            data,
            schema,
            map_unseen_to_reference,
        } => cmd_predict(&cli.out, &model, &data, schema.as_deref(), map_unseen_to_reference),
        Command::Simulate { spec, net, sel } => cmd_simulate(
            &cli.out,
            &spec,
            &net,
            &sel,
            seed,
            cli.threads,
        ),
        Command::Bench {
            data,
            m_percent,
            iterations,
            net,
            sel,
        } => cmd_bench(
            &cli.out,
            &data,
            m_percent,
            iterations,
            &net,
            &sel,
            seed,
            cli.threads,
        ),
    }
}

fn criterion(sel: &SelectOpts, default: SelectArg) -> SelectionCriterion {
    match sel.select.unwrap_or(default) {
        SelectArg::Cv => SelectionCriterion::Cv { folds: sel.folds },
        SelectArg::Ric => SelectionCriterion::Ric {
            constant: sel.ric_const,
        },
    }
}

fn criterion_json(c: &SelectionCriterion) -> serde_json::Value {
    match c {
        SelectionCriterion::Cv { folds } => json!({"select": "cv", "folds": folds}),
        SelectionCriterion::Ric { constant } => json!({"select": "ric", "constant": constant}),
    }
}

/// Loads data + schema, resolves factor levels, and encodes the design.
fn load_design(opts: &DataOpts) -> Result<(Dataset, Schema, DesignMatrix, Array1<f64>, String)> {
    let schema_text = std::fs::read_to_string(&opts.schema).map_err(|e| {
        Error::Schema(format!(
            "cannot read schema file `{}`: {e}",
            opts.schema.display()
        ))
    })?;
    let mut schema = design::parse_schema(&schema_text)?;
    let data = Dataset::from_csv_path(&opts.data)?;
    schema.resolve_levels(&data)?;
    let response = match &opts.response {
        Some(r) => r.clone(),
        None => data.infer_response(&schema)?,
    };
    let y = data.numeric_column(&response)?;
    Family::from(opts.family).check_response(y.view())?;
    let design = design::encode(&data, &schema)?;
    Ok((data, schema, design, y, response))
}

/// Six significant digits, plain notation where readable.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let digits = (5 - exp).max(0) as usize;
        format!("{v:.digits$}")
    } else {
        format!("{v:.5e}")
    }
}

fn write_report(
    path: &Path,
    saved: &SavedModel,
    config: &serde_json::Value,
) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "config: {config}");
    let _ = writeln!(out, "family: {}", saved.family);
    let _ = writeln!(out, "model dimension: {}", saved.md);
    let _ = writeln!(out, "training loss: {}", sig6(saved.train_loss));
    let _ = writeln!(out, "lambda: {}", sig6(saved.lambda));
    if let Some(tau) = saved.tau {
        let _ = writeln!(out, "tau: {}", sig6(tau));
    }
    let _ = writeln!(
        out,
        "kkt residual: {}",
        sig6(saved.diagnostics.kkt_residual)
    );
    let _ = writeln!(out, "intercept: {}", sig6(saved.intercept));
    for term in &saved.terms {
        match term {
            select::SavedTerm::Continuous {
                name,
                present,
                coefficient,
            } => {
                if *present {
                    let _ = writeln!(out, "{name}: {}", sig6(*coefficient));
                } else {
                    let _ = writeln!(out, "{name}: dropped");
                }
            }
            select::SavedTerm::Factor { name, clusters } => {
                let _ = writeln!(out, "{name}:");
                for cl in clusters {
                    let tag = if cl.reference { " (reference)" } else { "" };
                    let _ = writeln!(
                        out,
                        "  {{{}}}: {}{tag}",
                        cl.levels.join(", "),
                        sig6(cl.coefficient)
                    );
                }
            }
        }
    }
    if !saved.diagnostics.dropped_columns.is_empty() {
        let _ = writeln!(
            out,
            "rank repair dropped: {}",
            saved.diagnostics.dropped_columns.join(", ")
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    out: &Path,
    data_opts: &DataOpts,
    lambda: f64,
    tau: f64,
    q: f64,
    seed: u64,
    threads: Option<usize>,
) -> Result<()> {
    let family = Family::from(data_opts.family);
    let (_, schema, design, y, response) = load_design(data_opts)?;
    let weights = design::default_weights(&design, q)?;
    let fit = select::glamer_fit(
        &design,
        y.view(),
        family,
        &weights,
        lambda,
        tau,
        glamer_core::grouplasso::DEFAULT_TOL,
        glamer_core::grouplasso::DEFAULT_MAX_ITER,
    )?;
    let config = json!({
        "command": "fit",
        "data": data_opts.data.display().to_string(),
        "schema": data_opts.schema.display().to_string(),
        "response": response,
        "family": family.to_string(),
        "lambda": lambda,
        "tau": tau,
        "q": q,
        "seed": seed,
        "threads": threads,
    });
    let saved = SavedModel::from_fit(&fit, &design, &schema, family, &response, config.clone());
    saved.save(&out.join("model.json"))?;
    write_report(&out.join("report.txt"), &saved, &config)?;
    println!(
        "fit: MD {} loss {} -> {}",
        fit.md,
        sig6(fit.train_loss),
        out.join("model.json").display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_net(
    out: &Path,
    data_opts: &DataOpts,
    net: &NetOpts,
    crit: SelectionCriterion,
    seed: u64,
    threads: Option<usize>,
    command: &str,
) -> Result<()> {
    let family = Family::from(data_opts.family);
    let (_, schema, design, y, response) = load_design(data_opts)?;
    let mut cfg = PipelineConfig::new(family);
    cfg.q = net.q;
    cfg.linkage = net.linkage.into();
    cfg.n_lambda = net.nlambda;
    cfg.lambda_ratio = net.lambda_ratio;

    let (path, _) = select::run_path(&design, y.view(), &cfg)?;
    let sel = select::select_final(&design, y.view(), &cfg, &path, &crit, seed)?;

    let config = json!({
        "command": command,
        "data": data_opts.data.display().to_string(),
        "schema": data_opts.schema.display().to_string(),
        "response": response,
        "family": family.to_string(),
        "nlambda": net.nlambda,
        "lambda_ratio": net.lambda_ratio,
        "q": net.q,
        "linkage": format!("{:?}", cfg.linkage).to_lowercase(),
        "criterion": criterion_json(&crit),
        "seed": seed,
        "threads": threads,
    });

    // path CSV: one row per (lambda, dimension) refit
    let mut csv = String::new();
    csv.push_str(&format!("# config: {config}\n"));
    csv.push_str("lambda_index,lambda,md,train_loss\n");
    for e in &path.entries {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.lambda_index,
            path.lambdas[e.lambda_index],
            e.md,
            e.train_loss
        ));
    }
    std::fs::write(out.join("path.csv"), csv)?;

    let trace = json!({
        "config": config,
        "method": sel.trace.method,
        "chosen_md": sel.trace.chosen_md,
        "values": sel.trace.values,
        "fold_drops": sel.trace.fold_drops,
    });
    std::fs::write(
        out.join("trace.json"),
        serde_json::to_string_pretty(&trace)?,
    )?;

    let saved =
        SavedModel::from_fit(&sel.fit, &design, &schema, family, &response, config.clone());
    saved.save(&out.join("model.json"))?;
    write_report(&out.join("report.txt"), &saved, &config)?;
    println!(
        "{command}: selected MD {} ({}) -> {}",
        sel.fit.md,
        sel.trace.method,
        out.join("model.json").display()
    );
    Ok(())
}

fn cmd_predict(
    out: &Path,
    model_path: &Path,
    data_path: &Path,
    schema_path: Option<&Path>,
    map_unseen: bool,
) -> Result<()> {
    let model = SavedModel::load(model_path)?;
    if let Some(sp) = schema_path {
        let text = std::fs::read_to_string(sp).map_err(|e| {
            Error::Schema(format!("cannot read schema file `{}`: {e}", sp.display()))
        })?;
        let schema = design::parse_schema(&text)?;
        if schema.fingerprint() != model.schema_fingerprint {
            return Err(Error::Data(format!(
                "schema fingerprint mismatch: model was trained under a different schema than `{}`",
                sp.display()
            )));
        }
    }
    let data = Dataset::from_csv_path(data_path)?;
    let preds = model.predict(&data, map_unseen)?;

    let config = json!({
        "command": "predict",
        "model": model_path.display().to_string(),
        "data": data_path.display().to_string(),
        "map_unseen_to_reference": map_unseen,
        "model_config": model.config,
    });
    let mut csv = String::new();
    csv.push_str(&format!("# config: {config}\n"));
    match model.family {
        Family::Gaussian => {
            csv.push_str("prediction\n");
            for p in &preds {
                csv.push_str(&format!("{}\n", p.mean));
            }
        }
        Family::Logistic => {
            csv.push_str("probability,label\n");
            for p in &preds {
                csv.push_str(&format!("{},{}\n", p.mean, p.label.unwrap_or(0)));
            }
        }
    }
    let target = out.join("predictions.csv");
    std::fs::write(&target, csv)?;
    println!("predict: {} rows -> {}", preds.len(), target.display());
    Ok(())
}

/// Experiment file for `simulate`: a base synthetic spec, an optional grid
/// over an effect scale or the sample size, and a replication count.
#[derive(serde::Deserialize)]
struct SimulateSpec {
    base: SyntheticSpec,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default = "default_replications")]
    replications: usize,
}

fn default_replications() -> usize {
    100
}

#[derive(serde::Deserialize)]
struct GridSpec {
    parameter: GridParameter,
    values: Vec<f64>,
}

#[derive(serde::Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum GridParameter {
    /// Multiply every true effect (factor clusters and continuous) by the value.
    EffectScale,
    /// Replace the sample size with the value.
    N,
}

fn cmd_simulate(
    out: &Path,
    spec_path: &Path,
    net: &NetOpts,
    sel: &SelectOpts,
    seed: u64,
    threads: Option<usize>,
) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| {
        Error::InvalidParameter(format!(
            "cannot read experiment spec `{}`: {e}",
            spec_path.display()
        ))
    })?;
    let exp: SimulateSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("experiment spec: {e}")))?;
    let family = exp.base.family;
    let crit = criterion(sel, SelectArg::Cv);
    let mut cfg = PipelineConfig::new(family);
    cfg.q = net.q;
    cfg.linkage = net.linkage.into();
    cfg.n_lambda = net.nlambda;
    cfg.lambda_ratio = net.lambda_ratio;

    let (parameter, values): (GridParameter, Vec<f64>) = match &exp.grid {
        Some(g) => (g.parameter, g.values.clone()),
        None => (GridParameter::EffectScale, vec![1.0]),
    };
    let base = exp.base;
    let make_spec = |g: f64, rep_seed: u64| -> SyntheticSpec {
        let mut s = base.clone();
        match parameter {
            GridParameter::EffectScale => {
                for f in &mut s.factors {
                    for e in &mut f.effects {
                        *e *= g;
                    }
                }
                for c in &mut s.continuous {
                    *c *= g;
                }
            }
            GridParameter::N => s.n = g.round().max(1.0) as usize,
        }
        s.seed = rep_seed;
        s
    };
    let points = simbench::consistency_experiment(
        &values,
        exp.replications,
        &cfg,
        &crit,
        seed,
        make_spec,
    )?;

    let config = json!({
        "command": "simulate",
        "spec": spec_path.display().to_string(),
        "replications": exp.replications,
        "nlambda": net.nlambda,
        "lambda_ratio": net.lambda_ratio,
        "q": net.q,
        "linkage": format!("{:?}", cfg.linkage).to_lowercase(),
        "criterion": criterion_json(&crit),
        "seed": seed,
        "threads": threads,
    });
    let mut csv = String::new();
    csv.push_str(&format!("# config: {config}\n"));
    csv.push_str("grid_value,delta,replications,exact_recoveries,recovery_rate,mean_rand_index\n");
    for (point, &g) in points.iter().zip(&values) {
        let spec = make_spec(g, 0);
        let delta = simbench::compute_delta(&spec.true_coefficients(), spec.factors.len());
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            point.grid_value,
            delta.map_or("undefined".into(), |d| d.to_string()),
            point.replications,
            point.exact_recoveries,
            point.recovery_rate,
            point.mean_rand_index
        ));
    }
    let target = out.join("recovery.csv");
    std::fs::write(&target, csv)?;
    println!(
        "simulate: {} grid point(s) x {} replications -> {}",
        values.len(),
        exp.replications,
        target.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    out: &Path,
    data_opts: &DataOpts,
    m_percent: f64,
    iterations: usize,
    net: &NetOpts,
    sel: &SelectOpts,
    seed: u64,
    threads: Option<usize>,
) -> Result<()> {
    let family = Family::from(data_opts.family);
    let (_, _, design, y, response) = load_design(data_opts)?;
    let mut cfg = PipelineConfig::new(family);
    cfg.q = net.q;
    cfg.linkage = net.linkage.into();
    cfg.n_lambda = net.nlambda;
    cfg.lambda_ratio = net.lambda_ratio;
    let crit = criterion(sel, SelectArg::Cv);

    let rows = simbench::run_benchmark(&design, &y, &cfg, &crit, m_percent, iterations, seed)?;
    let summary = simbench::summarize(&rows);

    let config = json!({
        "command": "bench",
        "data": data_opts.data.display().to_string(),
        "schema": data_opts.schema.display().to_string(),
        "response": response,
        "family": family.to_string(),
        "m_percent": m_percent,
        "iterations": iterations,
        "nlambda": net.nlambda,
        "lambda_ratio": net.lambda_ratio,
        "q": net.q,
        "linkage": format!("{:?}", cfg.linkage).to_lowercase(),
        "criterion": criterion_json(&crit),
        "seed": seed,
    });
    let mut csv = String::new();
    csv.push_str(&format!("# config: {config}\n"));
    csv.push_str("iteration,seed,train_n,test_n,pe,md,restarts\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.seed, r.train_n, r.test_n, r.pe, r.md, r.restarts
        ));
    }
    std::fs::write(out.join("bench.csv"), csv)?;
    let summary_json = json!({
        "config": config,
        "iterations": summary.iterations,
        "mean_pe": summary.mean_pe,
        "se_pe": summary.se_pe,
        "mean_md": summary.mean_md,
        "se_md": summary.se_md,
    });
    std::fs::write(
        out.join("bench_summary.json"),
        serde_json::to_string_pretty(&summary_json)?,
    )?;
    let _ = threads;
    println!(
        "bench: {} iterations, mean PE {} mean MD {} -> {}",
        summary.iterations,
        sig6(summary.mean_pe),
        sig6(summary.mean_md),
        out.join("bench.csv").display()
    );
    Ok(())
}
