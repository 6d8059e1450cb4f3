use std::path::{Path, PathBuf};

use clap::Parser;

use crate::commands::{run_experiment, Command};
use crate::config::{parse_config, ExperimentConfig};
use crate::report::write_atomic;

#[derive(Debug, Parser)]
#[command(
    name = "phlab",
    version,
    about = "Numerical experiments on partially hyperbolic maps of the 3-torus"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Config file; built-in defaults when absent.
    #[arg(long, visible_alias = "map")]
    pub config: Option<PathBuf>,
    /// Base point `x,y,z`.
    #[arg(long, visible_alias = "seed", value_name = "X,Y,Z")]
    pub point: Option<String>,
    #[arg(long)]
    pub radius: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Target chain diameter.
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    /// Chain length.
    #[arg(short = 'N', long = "n")]
    pub n: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub npush: Option<String>,
    /// Report path. A `.csv` path receives the bulk data and the report goes
    /// next to it as `.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any other key, as `section.key=value`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> Vec<(&'static str, &'static str, &str)> {
        [
            ("experiment", "point", &self.point),
            ("experiment", "radius", &self.radius),
            ("tolerances", "tau", &self.tau),
            ("map", "epsilon", &self.epsilon),
            ("experiment", "eps", &self.eps),
            ("tolerances", "delta", &self.delta),
            ("experiment", "n", &self.n),
            ("experiment", "grid", &self.grid),
            ("experiment", "npush", &self.npush),
        ]
        .into_iter()
        .filter_map(|(s, k, v)| v.as_deref().map(|v| (s, k, v)))
        .collect()
    }
}

fn load(args: &Args) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    for (section, key, value) in args.overrides() {
        cfg.set(section, key, value).map_err(|e| e.to_string())?;
    }
    for item in &args.set {
        let (path, value) = item
            .split_once('=')
            .ok_or(format!("--set {item}: expected section.key=value"))?;
        let (section, key) = path.trim().split_once('.').unwrap_or(("", path.trim()));
        if !cfg
            .set(section, key, value.trim())
            .map_err(|e| e.to_string())?
        {
            return Err(format!("--set {item}: unknown key"));
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Report and sidecar paths for a run.
fn targets(args: &Args, cfg: &ExperimentConfig) -> (PathBuf, PathBuf) {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.dir.join(format!("{}.json", args.command.name())));
    if out.extension().is_some_and(|e| e == "csv") {
        (out.with_extension("json"), out)
    } else {
        let csv = out.with_extension("csv");
        (out, csv)
    }
}

fn thread_count(cfg: &ExperimentConfig) -> Result<Option<usize>, String> {
    match std::env::var("PHLAB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("PHLAB_THREADS={v}: expected a positive integer")),
        },
        Err(_) => Ok(cfg.budgets.threads),
    }
}

#[cfg(feature = "parallel")]
fn init_pool(threads: Option<usize>) -> Result<(), String> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build_global().map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_threads: Option<usize>) -> Result<(), String> {
    Ok(())
}

fn dir_of(path: &Path) -> &Path {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

/// Runs the tool and returns the process exit code.
pub fn run(args: Args) -> i32 {
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("phlab: {e}");
            return 1;
        }
    };
    let (report_path, csv_path) = targets(&args, &cfg);
    if !dir_of(&report_path).is_dir() {
        eprintln!(
            "phlab: output directory {} does not exist",
            dir_of(&report_path).display()
        );
        return 1;
    }
    if let Err(e) = thread_count(&cfg).and_then(init_pool) {
        eprintln!("phlab: {e}");
        return 1;
    }
    let run = run_experiment(&cfg, args.command);
    if let (Some(csv), true) = (&run.csv, cfg.output.csv) {
        if let Err(e) = write_atomic(&csv_path, csv.as_bytes()) {
            eprintln!("phlab: writing {}: {e}", csv_path.display());
            return 1;
        }
    }
    if let Err(e) = write_atomic(&report_path, run.report.to_json().as_bytes()) {
        eprintln!("phlab: writing {}: {e}", report_path.display());
        return 1;
    }
    for c in &run.report.checks {
        eprintln!("{} {}", if c.pass { "ok  " } else { "FAIL" }, c.name);
    }
    if let Some(e) = &run.report.error {
        eprintln!("phlab: {e}");
    }
    run.report.exit_code()
}
