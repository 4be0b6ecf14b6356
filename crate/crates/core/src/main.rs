use clap::{Args, Parser, Subcommand, ValueEnum};
use multiverse::data::{emit_datasheet, save_dataset};
use multiverse::hash::{fnv1a64, hex_id, labelled_seed};
use multiverse::report::artifacts::{load_view, manifest_bytes, read_manifest, render_summary};
use multiverse::report::run::load_data;
use multiverse::report::{execute, write_artifacts, CurveSort, ReportError, RunConfig, RunOptions};
use multiverse::synth::{generate_population, inject_bias};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "multiverse", version, about = "Multiverse audit of individual-level predictive inconsistency")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads (default: config value, else available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Svg,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sort {
    ScoreAsc,
    PathCanonical,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by a config.
    Synth { config: PathBuf },
    /// Check a config and print raw/admissible path counts.
    Validate { config: PathBuf },
    /// Execute every admissible path and write all artifacts.
    Run { config: PathBuf },
    /// Print one subject's inconsistency profile from a finished run.
    Profile {
        #[arg(long)]
        subject: String,
    },
    /// Write one subject's specification curve from a finished run.
    Curve {
        #[arg(long)]
        subject: String,
        #[arg(long, value_enum, default_value = "svg")]
        format: Format,
        #[arg(long, value_enum)]
        sort: Option<Sort>,
    },
    /// Print the global summary of a finished run.
    Report,
    /// Re-execute a run from its manifest and data files and compare scores.
    Replay {
        /// Manifest to replay (default: <out>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding the data files (default: the manifest's directory).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn load_config(path: &Path, g: &Global) -> Result<RunConfig, ReportError> {
    let mut c = RunConfig::load(path)?;
    if let Some(s) = g.master_seed {
        c.master_seed = s;
    }
    Ok(c)
}

fn workers(g: &Global, c: &RunConfig) -> usize {
    g.workers
        .or(c.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

fn synth(config: &Path, g: &Global) -> Result<(), ReportError> {
    let c = load_config(config, g)?;
    let s = c.synth.as_ref().ok_or_else(|| ReportError::ConfigInvalid("config has no synth section".into()))?;
    let mut d = generate_population(&s.population, labelled_seed(c.master_seed, "population"))?.dataset;
    for (i, b) in s.biases.iter().enumerate() {
        d = inject_bias(&d, b, labelled_seed(c.master_seed, &format!("bias/{i}")))?;
    }
    std::fs::create_dir_all(&g.out).map_err(io(&g.out))?;
    save_dataset(&d, &g.out.join("dataset.csv"), &g.out.join("events.csv"))?;
    emit_datasheet(&d, &g.out.join("datasheet.txt"), c.fairness.min_group_size)?;
    println!("subjects={} out={}", d.len(), g.out.display());
    Ok(())
}

fn validate(config: &Path, g: &Global) -> Result<(), ReportError> {
    let c = load_config(config, g)?;
    let r = c.universe.validate()?;
    println!("raw={} admissible={}", r.raw_paths, r.admissible_paths);
    Ok(())
}

fn run(config: &Path, g: &Global) -> Result<(), ReportError> {
    let c = load_config(config, g)?;
    let opts = RunOptions { workers: workers(g, &c), config_dir: config_dir(config), dataset_files: None };
    let state = execute(&c, &opts)?;
    let h = write_artifacts(&state, &g.out)?;
    let (_, manifest) = load_view(&g.out)?;
    print!("{}", render_summary(&manifest));
    println!("manifest_hash={}", hex_id(h));
    println!("workers={} elapsed={:.2}s", state.workers, state.elapsed.as_secs_f64());
    Ok(())
}

fn profile(subject: &str, g: &Global) -> Result<(), ReportError> {
    let (view, _) = load_view(&g.out)?;
    let p = view.profile(subject)?;
    println!("{}", serde_json::to_string_pretty(&p)?);
    Ok(())
}

fn curve(subject: &str, format: Format, sort: Option<Sort>, g: &Global) -> Result<(), ReportError> {
    let (view, _) = load_view(&g.out)?;
    let sort = match sort {
        Some(Sort::ScoreAsc) => CurveSort::ScoreAsc,
        Some(Sort::PathCanonical) => CurveSort::PathCanonical,
        None => view.config.curves.sort,
    };
    let file = view.write_curve(&g.out, subject, matches!(format, Format::Svg), sort)?;
    println!("{}", file.display());
    Ok(())
}

fn report(g: &Global) -> Result<(), ReportError> {
    let (_, manifest) = load_view(&g.out)?;
    print!("{}", render_summary(&manifest));
    Ok(())
}

/// Returns whether the replay reproduced the recorded scores.
fn replay(manifest: Option<PathBuf>, data_dir: Option<PathBuf>, g: &Global) -> Result<bool, ReportError> {
    let manifest_path = manifest.unwrap_or_else(|| g.out.join("manifest.json"));
    let recorded = read_manifest(&manifest_path)?;
    let c: RunConfig = serde_json::from_value(recorded.config.clone())?;
    c.validate()?;
    let dir = data_dir.unwrap_or_else(|| config_dir(&manifest_path));
    let dataset_files = c.synth.as_ref().map(|_| (dir.join("dataset.csv"), dir.join("events.csv")));
    let opts = RunOptions { workers: workers(g, &c), config_dir: dir, dataset_files };
    let (_, data_hash) = load_data(&c, &opts)?;
    if hex_id(data_hash) != recorded.data_hash {
        println!("data hash mismatch: recorded {} found {}", recorded.data_hash, hex_id(data_hash));
        return Ok(false);
    }
    let state = execute(&c, &opts)?;
    let fresh = multiverse::report::artifacts::build_manifest(&state, recorded.artifacts.clone());
    let mut mismatched = 0usize;
    for (a, b) in recorded.paths.iter().zip(&fresh.paths) {
        if a.path_id != b.path_id || a.scores_hash != b.scores_hash || a.status != b.status {
            mismatched += 1;
        }
    }
    mismatched += recorded.paths.len().abs_diff(fresh.paths.len());
    let matrix = multiverse::report::artifacts::matrix_csv(&state.matrix)?;
    let matrix_hash = hex_id(fnv1a64(&matrix));
    let matrix_ok = recorded.artifacts.get("matrix.csv") == Some(&matrix_hash);
    let (_, fresh_hash) = manifest_bytes(&fresh)?;
    let (_, recorded_hash) = manifest_bytes(&recorded)?;
    println!(
        "paths={} mismatched={} matrix_hash={} ({}) manifest_hash={}",
        fresh.paths.len(),
        mismatched,
        matrix_hash,
        if matrix_ok { "match" } else { "differs" },
        if fresh_hash == recorded_hash { "match" } else { "differs" },
    );
    println!("workers={} elapsed={:.2}s", state.workers, state.elapsed.as_secs_f64());
    Ok(mismatched == 0 && matrix_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Synth { config } => synth(config, g).map(|_| true),
        Command::Validate { config } => validate(config, g).map(|_| true),
        Command::Run { config } => run(config, g).map(|_| true),
        Command::Profile { subject } => profile(subject, g).map(|_| true),
        Command::Curve { subject, format, sort } => curve(subject, *format, *sort, g).map(|_| true),
        Command::Report => report(g).map(|_| true),
        Command::Replay { manifest, data_dir } => replay(manifest.clone(), data_dir.clone(), g),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
