//! `wbflux`: runs, table replays, convergence studies and entropy checks.
//!
//! Exit status: 0 success, 1 check failed (or other error), 2 state
//! blow-up, 3 config error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "wbflux", version, about = "Well-balanced finite volume schemes for scalar balance laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write snapshots, final state and a manifest.
    Run(Flags),
    /// Replay the published error table of a preset.
    Table(Flags),
    /// Grid-refinement study over `dx_list`.
    Convergence(Flags),
    /// Sampled cell entropy inequality, plus the weak residual with `--history`.
    EntropyCheck(Flags),
    /// List the built-in test cases.
    Presets,
}

/// Command-line twins of the most used config keys; they override the file.
#[derive(Args, Default)]
struct Flags {
    /// Config file (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Any config key, e.g. `--set initial="2 - x"`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_assignment)]
    set: Vec<(String, toml::Value)>,

    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    z: Option<String>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    n_cells: Option<usize>,
    #[arg(long)]
    dt_mode: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    safety: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    history: bool,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long)]
    lambda_scale: Option<f64>,
    #[arg(long)]
    delta_min: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    weak_tolerance: Option<f64>,
    /// 1-based row range, e.g. `1-2`.
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    expensive: bool,
    #[arg(long)]
    reference_cells: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    dx_list: Option<Vec<f64>>,
}

impl Flags {
    fn overrides(&self) -> toml::Table {
        let mut t = toml::Table::new();
        for (k, v) in &self.set {
            t.insert(k.clone(), v.clone());
        }
        let mut put = |k: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                t.insert(k.into(), v);
            }
        };
        let s = |v: &Option<String>| v.clone().map(toml::Value::String);
        let f = |v: Option<f64>| v.map(toml::Value::Float);
        let i = |v: Option<usize>| v.map(|n| toml::Value::Integer(n as i64));
        let list = |v: &Option<Vec<f64>>| {
            v.as_ref().map(|l| toml::Value::Array(l.iter().map(|x| toml::Value::Float(*x)).collect()))
        };
        put("preset", s(&self.preset));
        put("scheme", s(&self.scheme));
        put("model", s(&self.model));
        put("z", s(&self.z));
        put("t_final", f(self.t_final));
        put("dx", f(self.dx));
        put("n_cells", i(self.n_cells));
        put("dt_mode", s(&self.dt_mode));
        put("dt", f(self.dt));
        put("cfl", f(self.cfl));
        put("safety", f(self.safety));
        put("dt_max", f(self.dt_max));
        put("snapshot_times", list(&self.snapshot_times));
        put("output_dir", self.output_dir.as_ref().map(|p| toml::Value::String(p.display().to_string())));
        put("seed", self.seed.map(|n| toml::Value::Integer(n as i64)));
        put("history", self.history.then_some(toml::Value::Boolean(true)));
        put("samples", i(self.samples));
        put("bound", f(self.bound));
        put("lambda_scale", f(self.lambda_scale));
        put("delta_min", f(self.delta_min));
        put("tolerance", f(self.tolerance));
        put("weak_tolerance", f(self.weak_tolerance));
        put("rows", s(&self.rows));
        put("expensive", self.expensive.then_some(toml::Value::Boolean(true)));
        put("reference_cells", i(self.reference_cells));
        put("dx_list", list(&self.dx_list));
        t
    }

    fn load(&self) -> Result<RunConfig, Failure> {
        Ok(config::load(self.config.as_deref(), self.overrides())?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(f) => f.load().and_then(|c| commands::cmd_run(&c)),
        Command::Table(f) => f.load().and_then(|c| commands::cmd_table(&c)),
        Command::Convergence(f) => f.load().and_then(|c| commands::cmd_convergence(&c)),
        Command::EntropyCheck(f) => f.load().and_then(|c| commands::cmd_entropy_check(&c)),
        Command::Presets => commands::cmd_presets(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let kind = match e {
                Failure::Config(_) => "config error",
                Failure::Blowup(_) => "blow-up",
                Failure::Failed(_) => "error",
            };
            eprintln!("wbflux: {kind}: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
