//! `mvtc` command line front end.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable inputs),
//! 2 numerical or validation error. Errors are reported on stderr as one JSON
//! object `{"error": <kind>, "message": <text>}`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mvtc_core::analyze::{analyze, AnalyzeConfig};
use mvtc_core::graph::{sidepath_nodes, DEFAULT_SIDEPATH_EPS};
use mvtc_core::io::{self as mio, ResultRecord};
use mvtc_core::mclab::{qq_points, run_ensemble, summarize};
use mvtc_core::measures::{
    bootstrap_ci, bootstrap_ci_with_conditions, condition_set, sidepath_set, DEFAULT_BOOTSTRAP_REPS,
};
use mvtc_core::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "mvtc", version, about = "Coupling strength in multivariate autoregressive time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a model and write the series as CSV.
    Simulate(SimulateArgs),
    /// Write the analytic lagged covariance of a model as CSV.
    Cov(CovArgs),
    /// Analytic MIT of one link and the quantities behind it.
    Theorem(TheoremArgs),
    /// Estimate one measure on data for one link.
    Measure(MeasureArgs),
    /// Estimate the time series graph of a data set.
    Infer(InferArgs),
    /// Lag-function matrix: cross correlations and MIT with intervals.
    Analyze(AnalyzeArgs),
    /// Monte Carlo ensemble of a measure with a Kolmogorov-Smirnov fit.
    Mc(McArgs),
}

#[derive(Args, Debug)]
struct LinkArgs {
    /// Source variable (name or index).
    #[arg(long)]
    source: String,
    /// Target variable (name or index).
    #[arg(long)]
    target: String,
    /// Lag of the source.
    #[arg(long, default_value_t = 1)]
    lag: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CovArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    tau_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoremArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// CC, MIT, ITY, ITX or MITS.
    #[arg(long, default_value = "MIT")]
    kind: String,
    #[command(flatten)]
    link: LinkArgs,
    /// Model used to find sidepaths for MITS; without it they are tested on the data.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Bootstrap replicates for the interval; 0 skips it.
    #[arg(long, default_value_t = 0)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    tau_max: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    max_conds: usize,
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Bootstrap replicates per link; 0 skips intervals.
    #[arg(long, default_value_t = 0)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Graph JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Links CSV output.
    #[arg(long)]
    links: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    tau_max: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPS)]
    boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Remove per-phase means first; the period defaults to 12 (monthly data).
    #[arg(long, num_args = 0..=1, default_missing_value = "12", value_name = "PERIOD")]
    deseasonalize: Option<usize>,
    /// Lag-function matrix CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimated graph JSON output.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "MIT")]
    kind: String,
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, default_value_t = 20)]
    length: usize,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ensemble summary JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// q-q CSV output.
    #[arg(long)]
    qq: Option<PathBuf>,
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

/// Runs the command line with `argv` (including the program name) and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .is_test(cfg!(test))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                report("UsageError", e.to_string().trim().to_string());
            }
            return code;
        }
    };
    if let Err(f) = configure_threads() {
        return fail(f);
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            report("UsageError", msg);
            1
        }
        Failure::Numeric(e) => {
            report(e.kind(), e.to_string());
            2
        }
    }
}

fn report(kind: &str, message: String) {
    let json = serde_json::to_string(&ErrorReport { error: kind, message })
        .unwrap_or_else(|_| format!("{{\"error\":\"{kind}\"}}"));
    eprintln!("{json}");
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("MVTC_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("MVTC_THREADS must be a positive integer, got {value:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn check_alpha(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

fn check_boot(boot: usize) -> CliResult<()> {
    if boot == 0 || boot >= 100 {
        Ok(())
    } else {
        Err(Failure::Usage("--boot must be 0 or at least 100".into()))
    }
}

fn parse_kind(s: &str, allowed: &[MeasureKind]) -> CliResult<MeasureKind> {
    let kind: MeasureKind = s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    if allowed.contains(&kind) {
        Ok(kind)
    } else {
        Err(Failure::Usage(format!("measure {kind} is not available here")))
    }
}

/// A variable given by name, or by index if no name matches.
fn resolve(names: &[String], var: &str) -> CliResult<usize> {
    if let Some(i) = names.iter().position(|n| n == var) {
        return Ok(i);
    }
    match var.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(Failure::Numeric(Error::Key(format!("no variable {var:?}")))),
    }
}

fn resolve_link(names: &[String], link: &LinkArgs) -> CliResult<(LaggedNode, usize)> {
    if link.lag == 0 {
        return Err(Failure::Usage("--lag must be at least 1".into()));
    }
    Ok((LaggedNode::new(resolve(names, &link.source)?, link.lag), resolve(names, &link.target)?))
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(path) => mio::write_json_file(path, value)?,
        None => emit_with(None, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })?,
    }
    Ok(())
}

fn emit_with<F>(out: Option<&Path>, write: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let mut f = mio::create_file(path)?;
            write(&mut f)?;
            f.flush().map_err(Error::from)?;
        }
        None => {
            let mut buf = Vec::new();
            write(&mut buf)?;
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(&buf).and_then(|()| stdout.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r.map_err(Error::from)?,
            }
        }
    }
    Ok(())
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Cov(a) => cov_cmd(a),
        Command::Theorem(a) => theorem_cmd(a),
        Command::Measure(a) => measure_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Mc(a) => mc_cmd(a),
    }
}

fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    require_file(&a.model)?;
    if a.length == 0 {
        return Err(Failure::Usage("--length must be at least 1".into()));
    }
    let model = mio::read_model_file(&a.model)?;
    let data = simulate(&model, a.length, a.seed, a.burn_in)?;
    emit_with(a.out.as_deref(), |w| mio::write_data(w, &data))
}

fn cov_cmd(a: CovArgs) -> CliResult<()> {
    require_file(&a.model)?;
    let model = mio::read_model_file(&a.model)?;
    let table = lagged_covariance(&model, a.tau_max, DEFAULT_SERIES_TOL)?;
    emit_with(a.out.as_deref(), |w| mio::write_gamma_csv(w, &table, model.var_names()))
}

#[derive(Serialize)]
struct TheoremReport {
    source: String,
    lag: usize,
    target: String,
    mit: f64,
    no_sidepath_mit: f64,
    c: f64,
    sigma_x2: f64,
    sigma_y2: f64,
    cov_xy: f64,
    var_x: f64,
    var_y: f64,
    sidepath_nodes: Vec<(String, usize)>,
    mits: Option<f64>,
}

fn theorem_cmd(a: TheoremArgs) -> CliResult<()> {
    require_file(&a.model)?;
    let model = mio::read_model_file(&a.model)?;
    let names = model.var_names().to_vec();
    let (source, target) = resolve_link(&names, &a.link)?;
    let graph = graph_from_model(&model, DEFAULT_LINK_EPS)?;
    let q = theorem_quantities(&model, &graph, source, target, DEFAULT_SERIES_TOL)?;
    let (a_star, mits) = if graph.has_link(source.var, target, source.lag) {
        let a_star = sidepath_nodes(&graph, &model, source, target, DEFAULT_SIDEPATH_EPS)?;
        let mits = mvtc_core::measures::analytic_measure(&model, &graph, MeasureKind::Mits, source, target)?;
        (a_star, Some(mits))
    } else {
        (Default::default(), None)
    };
    let report = TheoremReport {
        source: names[source.var].clone(),
        lag: source.lag,
        target: names[target].clone(),
        mit: q.mit(),
        no_sidepath_mit: q.no_sidepath_mit(),
        c: q.c,
        sigma_x2: q.sigma_x2,
        sigma_y2: q.sigma_y2,
        cov_xy: q.cov_xy,
        var_x: q.var_x,
        var_y: q.var_y,
        sidepath_nodes: a_star.iter().map(|n| (names[n.var].clone(), n.lag)).collect(),
        mits,
    };
    emit_json(a.out.as_deref(), &report)
}

fn measure_cmd(a: MeasureArgs) -> CliResult<()> {
    require_file(&a.data)?;
    require_file(&a.graph)?;
    if let Some(m) = &a.model {
        require_file(m)?;
    }
    check_alpha("alpha", a.alpha)?;
    check_alpha("level", a.level)?;
    check_boot(a.boot)?;
    let kind = parse_kind(
        &a.kind,
        &[MeasureKind::Cc, MeasureKind::Mit, MeasureKind::Ity, MeasureKind::Itx, MeasureKind::Mits],
    )?;
    let data = mio::read_data_file(&a.data)?;
    let graph = mio::read_graph_file(&a.graph)?;
    if graph.var_names() != data.var_names() {
        return Err(Failure::Numeric(Error::Dimension(
            "graph and data name different variables".into(),
        )));
    }
    let (source, target) = resolve_link(data.var_names(), &a.link)?;
    let model = a.model.as_deref().map(mio::read_model_file).transpose()?;
    let mut result = if kind == MeasureKind::Mits {
        let sidepaths = match &model {
            Some(m) => SidepathSource::model(m),
            None => SidepathSource::Data { alpha: a.alpha },
        };
        let r = mits(&data, &graph, sidepaths, source, target)?;
        if a.boot > 0 {
            let a_star = sidepath_set(&data, &graph, sidepaths, source, target)?;
            let conds = condition_set(&graph, kind, source, target, &a_star)?;
            let ci = bootstrap_ci_with_conditions(&data, source, target, &conds, a.level, a.boot, a.seed)?;
            MeasureResult { ci: Some(ci), ..r }
        } else {
            r
        }
    } else {
        coupling_measure(&data, &graph, kind, source, target)?
    };
    if a.boot > 0 && result.ci.is_none() {
        result.ci = Some(bootstrap_ci(&data, &graph, kind, source, target, a.level, a.boot, a.seed)?);
    }
    #[derive(Serialize)]
    struct Out {
        #[serde(flatten)]
        record: ResultRecord,
        significant: bool,
        alpha: f64,
    }
    let out = Out {
        record: ResultRecord::new(&result, data.var_names())?,
        significant: result.is_significant(a.alpha),
        alpha: a.alpha,
    };
    emit_json(a.out.as_deref(), &out)
}

fn infer_cmd(a: InferArgs) -> CliResult<()> {
    require_file(&a.data)?;
    check_alpha("alpha", a.alpha)?;
    check_alpha("level", a.level)?;
    check_boot(a.boot)?;
    let config = InferenceConfig {
        tau_max: a.tau_max,
        alpha: a.alpha,
        max_conds: a.max_conds,
        max_iters: a.max_iters,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let data = mio::read_data_file(&a.data)?;
    let mut inferred = infer_graph(&data, &config)?;
    if a.boot > 0 {
        for (i, link) in inferred.links.iter_mut().enumerate() {
            let seed = a.seed.wrapping_add(i as u64);
            link.ci = Some(bootstrap_ci(
                &data,
                &inferred.graph,
                MeasureKind::Mit,
                link.source,
                link.target,
                a.level,
                a.boot,
                seed,
            )?);
        }
    }
    if let Some(path) = &a.links {
        emit_with(Some(path), |w| mio::write_links_csv(w, &inferred.links, data.var_names()))?;
    }
    match &a.out {
        Some(path) => mio::write_graph_file(path, &inferred.graph)?,
        None => emit_json(None, &inferred.graph)?,
    }
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> CliResult<()> {
    require_file(&a.data)?;
    check_alpha("alpha", a.alpha)?;
    check_alpha("level", a.level)?;
    check_boot(a.boot)?;
    let config = AnalyzeConfig {
        inference: InferenceConfig { tau_max: a.tau_max, alpha: a.alpha, ..InferenceConfig::default() },
        level: a.level,
        n_boot: a.boot,
        seed: a.seed,
        deseasonalize: a.deseasonalize,
    };
    config.inference.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let data = mio::read_data_file(&a.data)?;
    let analysis = analyze(&data, &config)?;
    if let Some(path) = &a.graph_out {
        mio::write_graph_file(path, &analysis.graph)?;
    }
    emit_with(a.out.as_deref(), |w| analysis.write_csv(w))
}

fn mc_cmd(a: McArgs) -> CliResult<()> {
    require_file(&a.model)?;
    if a.reps < 100 {
        return Err(Failure::Usage("--reps must be at least 100".into()));
    }
    let kind = parse_kind(
        &a.kind,
        &[MeasureKind::Cc, MeasureKind::Mit, MeasureKind::Ity, MeasureKind::Itx, MeasureKind::Mits],
    )?;
    let model = mio::read_model_file(&a.model)?;
    let (source, target) = resolve_link(model.var_names(), &a.link)?;
    let sample = run_ensemble(&model, kind, source, target, a.length, a.reps, a.seed)?;
    if let Some(path) = &a.qq {
        let qq = qq_points(&sample)?;
        emit_with(Some(path), |w| mio::write_qq_csv(w, &qq, sample.kind, sample.df))?;
    }
    emit_json(a.out.as_deref(), &summarize(&sample)?)
}
