use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use werr::covmodel::{read_matrix_file, write_csv, write_matrix_file, GridMetric};
use werr::diagnostics::{self as diag, ForecastKind, ObsGroup, Provenance};
use werr::harness::{
    generate_truth_and_obs, run_cycle_with, runs_root, CycleMode, ExperimentConfig, RunArchive,
};
use werr::neuralerr::{read_checkpoint_file, write_checkpoint_file};
use werr::qpipeline::{self as qp, read_q, write_q, QOutput};

/// Model-error covariance laboratory for weak-constraint 4D-Var twin
/// experiments.
///
/// Outputs go to --out, or to $WERR_RUNS_DIR/<run.name> (default
/// ./runs/<run.name>).
#[derive(Parser, Debug)]
#[command(name = "werr", version)]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the truth trajectory and observations.
    Truth,
    /// Cycle 4D-Var over the configured windows (weak-constraint when a Q
    /// matrix is given).
    Cycle(CycleArgs),
    /// Fit the model-error emulator to the increments of an archived run.
    TrainAnn(TrainArgs),
    /// Build a Q matrix.
    BuildQ(BuildQArgs),
    /// Write a diagnostic table as CSV.
    Diagnose(DiagnoseArgs),
    /// Convert a matrix file to CSV.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct CycleArgs {
    /// Q matrix for weak-constraint cycling; defaults to `cycle.q`.
    #[arg(long)]
    q: Option<PathBuf>,
    /// Archive directory name under the output directory.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Archived run to learn from.
    #[arg(long, default_value = "sc")]
    archive: String,
    /// Checkpoint file name under the output directory.
    #[arg(long, default_value = "ann.nn")]
    name: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QChoice {
    Pred,
    Oper,
    Ann,
    Incr,
    Daley,
}

#[derive(Args, Debug)]
struct BuildQArgs {
    kind: QChoice,
    /// Input Q (oper: the Q_pred to bootstrap from).
    #[arg(long)]
    q: Option<PathBuf>,
    /// Archived run supplying predictors or increments.
    #[arg(long, default_value = "sc")]
    archive: String,
    /// Emulator checkpoint (ann).
    #[arg(long)]
    nn: Option<PathBuf>,
    /// Output matrix file name under the output directory.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    StdProfile,
    Correlation,
    Increments,
    Departures,
    Skill,
    Eta,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    metric: Metric,
    /// Archived run (increments, departures, skill, eta).
    #[arg(long, default_value = "wc")]
    archive: String,
    /// Control run for departure ratios and relative skill.
    #[arg(long)]
    control: Option<String>,
    /// Q matrix (std-profile, correlation).
    #[arg(long)]
    q: Option<PathBuf>,
    /// Reference grid points for correlation curves.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 10, 20, 30])]
    refs: Vec<usize>,
    /// Forecast leads in sub-windows.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 12, 16])]
    leads: Vec<usize>,
    /// Number of contiguous observation groups.
    #[arg(long, default_value_t = 2)]
    groups: usize,
    /// CSV path; defaults to `diag/<metric>_<archive>.csv` under the output
    /// directory.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Matrix file (`WERRMAT 1`).
    input: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn archive(&self, name: &str) -> AnyResult<RunArchive> {
        let dir = self.path(name);
        RunArchive::read(&dir).map_err(|e| format!("reading archive {}: {e}", dir.display()).into())
    }

    fn save_q(&self, out: &QOutput, default: &str, name: Option<&str>) -> AnyResult<()> {
        let path = self.path(name.unwrap_or(default));
        write_q(&path, &out.q, &out.recipe)?;
        let flags: Vec<String> = out.flags.iter().map(|f| format!("{f:?}")).collect();
        println!("q={} flags=[{}]", path.display(), flags.join(","));
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> AnyResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| runs_root().join(&cfg.run_name));
    if let Command::Export(a) = cli.command {
        // Keep stdout clean for the CSV itself.
        eprintln!("config_hash={}", cfg.hash());
        return export(a);
    }
    fs::create_dir_all(&out)?;
    println!("config_hash={}", cfg.hash());
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Export(_) => unreachable!("handled above"),
        Command::Truth => truth(&ctx),
        Command::Cycle(a) => cycle(&ctx, a),
        Command::TrainAnn(a) => train_ann(&ctx, a),
        Command::BuildQ(a) => build_q(&ctx, a),
        Command::Diagnose(a) => diagnose(&ctx, a),
    }
}

fn truth(ctx: &Ctx) -> AnyResult<()> {
    let cfg = &ctx.cfg;
    let twin = generate_truth_and_obs(cfg)?;
    let m = nalgebra::DMatrix::from_fn(twin.truth.len(), cfg.n, |t, i| twin.truth[t][i]);
    write_matrix_file(&ctx.path("truth.bin"), &m)?;
    let mut w = csv::Writer::from_path(ctx.path("obs.csv"))?;
    w.write_record(["window", "k", "index", "value", "sigma"])?;
    for (win, set) in twin.obs.iter().enumerate() {
        for o in &set.obs {
            w.write_record([
                win.to_string(),
                o.k.to_string(),
                o.index.to_string(),
                o.value.to_string(),
                o.sigma.to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!(
        "truth={} obs={}",
        ctx.path("truth.bin").display(),
        ctx.path("obs.csv").display()
    );
    Ok(())
}

fn write_archive(ctx: &Ctx, archive: &RunArchive, name: &str) -> AnyResult<()> {
    let dir = ctx.path(name);
    archive.write(&dir)?;
    println!(
        "archive={} config_hash={} content_hash={}",
        dir.display(),
        archive.config.hash(),
        archive.content_hash()?
    );
    match &archive.failure {
        Some((w, msg)) => Err(format!("cycling stopped at window {w}: {msg}").into()),
        None => Ok(()),
    }
}

fn cycle(ctx: &Ctx, a: CycleArgs) -> AnyResult<()> {
    let mut cfg = ctx.cfg.clone();
    let q_path = a.q.or_else(|| cfg.q_path.as_ref().map(PathBuf::from));
    let q = match &q_path {
        Some(p) => Some(read_q(p).map_err(|e| format!("{}: {e}", p.display()))?.0),
        None => None,
    };
    cfg.mode = if q.is_some() {
        CycleMode::Weak
    } else {
        CycleMode::Strong
    };
    let twin = generate_truth_and_obs(&cfg)?;
    let archive = run_cycle_with(&cfg, &twin, q.as_ref())?;
    let name = a.name.unwrap_or_else(|| cfg.mode.as_str().to_string());
    write_archive(ctx, &archive, &name)
}

fn train_ann(ctx: &Ctx, a: TrainArgs) -> AnyResult<()> {
    let archive = ctx.archive(&a.archive)?;
    let (params, hist) = qp::train_ann(&ctx.cfg, &archive)?;
    let path = ctx.path(&a.name);
    write_checkpoint_file(&path, &params)?;
    println!(
        "checkpoint={} epochs={} best_epoch={} best_val_mse={}",
        path.display(),
        hist.train_mse.len(),
        hist.best_epoch
            .map_or_else(|| "-".into(), |e| e.to_string()),
        hist.best_val_mse
            .map_or_else(|| "-".into(), |v| v.to_string()),
    );
    Ok(())
}

fn build_q(ctx: &Ctx, a: BuildQArgs) -> AnyResult<()> {
    let cfg = &ctx.cfg;
    let name = a.name.as_deref();
    match a.kind {
        QChoice::Pred => {
            let twin = generate_truth_and_obs(cfg)?;
            ctx.save_q(&qp::build_q_pred_for(cfg, &twin)?, "q_pred.mat", name)
        }
        QChoice::Oper => {
            let src = a.q.unwrap_or_else(|| ctx.path("q_pred.mat"));
            let (q_pred, _) = read_q(&src).map_err(|e| format!("{}: {e}", src.display()))?;
            let twin = generate_truth_and_obs(cfg)?;
            let (out, archive) = qp::build_q_oper(cfg, &twin, &q_pred)?;
            write_archive(ctx, &archive, "wc_pred")?;
            ctx.save_q(&out, "q_oper.mat", name)
        }
        QChoice::Ann => {
            let nn = a.nn.unwrap_or_else(|| ctx.path("ann.nn"));
            let params = read_checkpoint_file(&nn).map_err(|e| format!("{}: {e}", nn.display()))?;
            let archive = ctx.archive(&a.archive)?;
            ctx.save_q(
                &qp::build_q_ann(cfg, &params, &archive, &cfg.ann_taper()?)?,
                "q_ann.mat",
                name,
            )
        }
        QChoice::Incr => {
            let archive = ctx.archive(&a.archive)?;
            ctx.save_q(
                &qp::build_q_increment_climatology(&archive, &cfg.incr_taper()?)?,
                "q_incr.mat",
                name,
            )
        }
        QChoice::Daley => {
            let (spec, pa, q_true) = qp::daley_linear_case(cfg.n)?;
            let out = qp::build_q_daley(&spec, &pa, &q_true, cfg.daley_samples, cfg.seed)?;
            let err = (out.q.entries() - q_true.entries()).norm() / q_true.entries().norm();
            println!("daley_relative_error={err}");
            ctx.save_q(&out, "q_daley.mat", name)
        }
    }
}

fn contiguous_groups(n: usize, count: usize) -> Vec<ObsGroup> {
    let count = count.clamp(1, n);
    (0..count)
        .map(|g| {
            ObsGroup::new(
                format!("g{g}"),
                (g * n / count..(g + 1) * n / count).collect(),
            )
        })
        .collect()
}

fn diagnose(ctx: &Ctx, a: DiagnoseArgs) -> AnyResult<()> {
    let cfg = &ctx.cfg;
    let q_input = || -> AnyResult<(werr::covmodel::CovarianceMatrix, Provenance)> {
        let p = a.q.clone().ok_or("this metric needs --q")?;
        let (q, _) = read_q(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        let label = p
            .file_stem()
            .map_or_else(|| "q".into(), |s| s.to_string_lossy().into_owned());
        Ok((q, Provenance::matrix(label)))
    };
    let (stem, default_name) = match a.metric {
        Metric::StdProfile | Metric::Correlation => {
            let (_, p) = q_input()?;
            (metric_name(a.metric), p.run)
        }
        _ => (metric_name(a.metric), a.archive.clone()),
    };
    let csv_path = a
        .csv
        .clone()
        .unwrap_or_else(|| ctx.path("diag").join(format!("{stem}_{default_name}.csv")));
    if let Some(dir) = csv_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(&csv_path)?);
    match a.metric {
        Metric::StdProfile => {
            let (q, p) = q_input()?;
            let spec = cfg.forecast_spec();
            diag::std_profile(&q, spec.subwindows, spec.window_length())?.write_csv(&mut w, &p)?;
        }
        Metric::Correlation => {
            let (q, p) = q_input()?;
            let rows =
                diag::horizontal_correlation_rows(&q, &a.refs, &GridMetric::periodic(q.dim()))?;
            diag::write_correlation_rows(&mut w, &rows, &p)?;
            let map_path = csv_path.with_extension("map.csv");
            diag::correlation_map(&q).write_csv(BufWriter::new(File::create(&map_path)?), &p)?;
            println!("csv={}", map_path.display());
        }
        Metric::Increments => {
            let archive = ctx.archive(&a.archive)?;
            let p = Provenance::of(&archive);
            let (mean, rms) = diag::increment_stats(&archive)?;
            mean.write_csv(&mut w, &p)?;
            let rms_path = csv_path.with_extension("rms.csv");
            rms.write_csv(BufWriter::new(File::create(&rms_path)?), &p)?;
            println!("csv={}", rms_path.display());
        }
        Metric::Departures => {
            let archive = ctx.archive(&a.archive)?;
            let p = Provenance::of(&archive);
            let groups = contiguous_groups(archive.n(), a.groups);
            let stats = diag::departure_stats(&archive, &groups)?;
            stats.write_csv(&mut w, &p)?;
            if let Some(c) = &a.control {
                let control = diag::departure_stats(&ctx.archive(c)?, &groups)?;
                let ratio_path = csv_path.with_extension("ratio.csv");
                let ratios = stats.ratio_percent(&control)?;
                diag::write_ratio_csv(BufWriter::new(File::create(&ratio_path)?), &ratios, &p)?;
                println!("csv={}", ratio_path.display());
            }
        }
        Metric::Skill => {
            let archive = ctx.archive(&a.archive)?;
            let p = Provenance::of(&archive);
            let mut curves = Vec::new();
            for kind in [
                ForecastKind::Unforced,
                ForecastKind::Debiased,
                ForecastKind::Persistence,
            ] {
                curves.push(diag::forecast_skill(&archive, &a.leads, kind)?);
            }
            if let Some(c) = &a.control {
                let mut ctl =
                    diag::forecast_skill(&ctx.archive(c)?, &a.leads, ForecastKind::Unforced)?;
                ctl.label = format!("control:{c}");
                curves.push(ctl);
            }
            diag::write_skill_csv(&mut w, &curves, &p)?;
        }
        Metric::Eta => {
            let archive = ctx.archive(&a.archive)?;
            let v = diag::eta_variability(&archive)?;
            v.write_csv(&mut w, &Provenance::of(&archive))?;
            match v.median {
                Some(m) => println!("eta_median_ratio={m}"),
                None => println!("eta_median_ratio=undefined"),
            }
        }
    }
    w.flush()?;
    println!("csv={}", csv_path.display());
    Ok(())
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::StdProfile => "std_profile",
        Metric::Correlation => "correlation",
        Metric::Increments => "increments",
        Metric::Departures => "departures",
        Metric::Skill => "skill",
        Metric::Eta => "eta",
    }
}

fn export(a: ExportArgs) -> AnyResult<()> {
    let m = read_matrix_file(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
    match &a.csv {
        Some(p) => {
            write_csv(BufWriter::new(File::create(p)?), &m)?;
            println!("csv={}", p.display());
        }
        None => write_csv(io::stdout().lock(), &m)?,
    }
    Ok(())
}
