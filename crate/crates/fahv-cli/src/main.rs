mod figures;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fahv_core::acceptance::{run_all, AcceptanceConfig};
use fahv_core::config::{parse_config_with_overrides, ScenarioConfig, Variant};
use fahv_core::error::Error;
use fahv_core::sim::{run_scenario, RunMetrics, RunOutput};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "fahv", version, about = "Batch simulator for hypersonic vehicle tracking control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trajectory, metrics and plots.
    Run(Common),
    /// Run the proposed controller and the fixed-envelope baseline side by side.
    Compare(Common),
    /// Run a grid of scenarios over dotted keys.
    Sweep(SweepArgs),
    /// Run the acceptance suite and print one line per criterion.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML); absent keys keep their defaults.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a scenario key, e.g. `--set fault.f_delta=0.02` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Skip SVG output.
    #[arg(long)]
    no_plot: bool,
    /// Worker threads for parallel runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Grid axis `key=v1,v2,...` (repeatable; cells are the Cartesian product).
    #[arg(long, value_name = "KEY=V1,V2,...", required = true)]
    grid: Vec<String>,
    /// Run only this many cells, drawn at random with `--seed`.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Nominal scenario for the closed-loop criteria (defaults when absent).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override a suite or scenario key, e.g. `--set lemma3.c=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

/// Failure that maps to exit code 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.into()))
}

fn load(path: &Path, overrides: &[String]) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(usage)?;
    parse_config_with_overrides(&text, overrides)
        .with_context(|| format!("in scenario {}", path.display()))
        .map_err(usage)
}

fn init_pool(jobs: usize) {
    if jobs > 0 {
        // a second initialization only happens in tests and is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

/// Writes the CSV, metrics, resolved scenario and (optionally) plots of one run.
fn write_run(dir: &Path, cfg: &ScenarioConfig, out: &RunOutput, plots: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut csv = fs::File::create(dir.join("trajectory.csv"))?;
    out.log.write_csv(&mut csv)?;
    let mut text = match &out.failure {
        None => "status = \"ok\"\n".to_string(),
        Some(e) => format!("status = \"failed\"\nfailure = {:?}\n", e.to_string()),
    };
    if let Some(m) = &out.metrics {
        text.push_str(&m.to_text());
    }
    fs::write(dir.join("metrics.txt"), text)?;
    fs::write(dir.join("scenario.toml"), cfg.to_text())?;
    if plots && !out.log.is_empty() {
        for (name, fig) in figures::run_figures(&out.log) {
            fs::write(dir.join(name), fig.to_svg())?;
        }
    }
    Ok(())
}

fn report_failure(label: &str, out: &RunOutput) {
    if let Some(e) = &out.failure {
        eprintln!("{label}: run ended early: {e}");
    }
}

fn cmd_run(args: &Common) -> anyhow::Result<bool> {
    let cfg = load(&args.scenario, &args.overrides)?;
    let out = run_scenario(&cfg).map_err(usage)?;
    write_run(&args.out, &cfg, &out, !args.no_plot)?;
    report_failure("run", &out);
    if let Some(m) = &out.metrics {
        println!("{}", summary_line("run", m));
    }
    info!("wrote {}", args.out.display());
    Ok(out.succeeded())
}

fn summary_line(label: &str, m: &RunMetrics) -> String {
    format!(
        "{label}: t_end {:.2} s, violations V/h {}/{}, max|e_V| after T_s {:.4}, max|e_h| after T_s {:.4}",
        m.t_end,
        m.velocity.transformed_violations + m.velocity.violations_after_tp,
        m.altitude.transformed_violations + m.altitude.violations_after_tp,
        m.velocity.max_abs_e_after_ts,
        m.altitude.max_abs_e_after_ts,
    )
}

fn status(out: &RunOutput) -> String {
    match &out.failure {
        None => "ok".into(),
        Some(Error::BoundBreach { channel, t, .. }) => format!("BoundBreach({channel} @ {t:.3} s)"),
        Some(e) => e.to_string(),
    }
}

fn comparison_table(rows: &[(&str, &RunOutput)]) -> String {
    let mut s = format!(
        "{:<10} {:>8} {:>10} {:>10} {:>12} {:>12} {:>12} {:>12}  status\n",
        "variant", "t_end", "viol_V", "viol_h", "maxe_V>T_p", "maxe_h>T_p", "maxe_V>T_s", "maxe_h>T_s"
    );
    for (name, out) in rows {
        let m = out.metrics.clone().unwrap_or_default();
        s.push_str(&format!(
            "{:<10} {:>8.2} {:>10} {:>10} {:>12.4} {:>12.4} {:>12.4} {:>12.4}  {}\n",
            name,
            m.t_end,
            m.velocity.transformed_violations + m.velocity.violations_after_tp,
            m.altitude.transformed_violations + m.altitude.violations_after_tp,
            m.velocity.max_abs_e_after_tp,
            m.altitude.max_abs_e_after_tp,
            m.velocity.max_abs_e_after_ts,
            m.altitude.max_abs_e_after_ts,
            status(out),
        ));
    }
    s
}

fn cmd_compare(args: &Common) -> anyhow::Result<bool> {
    init_pool(args.jobs);
    let cfg = load(&args.scenario, &args.overrides)?;
    let mut base = cfg.clone();
    base.variant = Variant::Baseline;
    let mut prop = cfg;
    prop.variant = Variant::Proposed;
    let cfgs = [prop, base];
    let outs: Vec<_> = cfgs.par_iter().map(run_scenario).collect::<Result<_, _>>().map_err(usage)?;
    for (name, (c, o)) in ["proposed", "baseline"].iter().zip(cfgs.iter().zip(&outs)) {
        write_run(&args.out.join(name), c, o, !args.no_plot)?;
    }
    let table = comparison_table(&[("proposed", &outs[0]), ("baseline", &outs[1])]);
    fs::write(args.out.join("comparison.txt"), &table)?;
    print!("{table}");
    if !args.no_plot {
        for (name, fig) in figures::compare_figures(&outs[0].log, &outs[1].log) {
            fs::write(args.out.join(name), fig.to_svg())?;
        }
    }
    Ok(outs[0].succeeded())
}

/// Cartesian product of `key=v1,v2` axes as override lists.
fn grid_cells(axes: &[String]) -> anyhow::Result<Vec<Vec<String>>> {
    let mut cells: Vec<Vec<String>> = vec![Vec::new()];
    for axis in axes {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| usage(anyhow::anyhow!("grid axis `{axis}` is not key=v1,v2,...")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(usage(anyhow::anyhow!("grid axis `{key}` has no values")));
        }
        cells = cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(format!("{}={v}", key.trim()));
                    c
                })
            })
            .collect();
    }
    Ok(cells)
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<bool> {
    let c = &args.common;
    init_pool(c.jobs);
    let text = fs::read_to_string(&c.scenario)
        .with_context(|| format!("reading scenario {}", c.scenario.display()))
        .map_err(usage)?;
    let mut cells = grid_cells(&args.grid)?;
    if let Some(n) = args.sample {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        cells.shuffle(&mut rng);
        cells.truncate(n);
    }
    // validate every cell before spending time on any run
    let cfgs: Vec<ScenarioConfig> = cells
        .iter()
        .map(|cell| {
            let all: Vec<String> = c.overrides.iter().chain(cell).cloned().collect();
            parse_config_with_overrides(&text, &all).map_err(usage)
        })
        .collect::<anyhow::Result<_>>()?;
    let outs: Vec<_> = cfgs.par_iter().map(run_scenario).collect::<Result<_, _>>().map_err(usage)?;

    let mut table = String::from("cell,overrides,status,t_end,violations_V,violations_h,max_e_V_after_tp,max_e_h_after_tp,max_e_V_after_ts,max_e_h_after_ts,breach_V,breach_h\n");
    for (i, ((cell, cfg), out)) in cells.iter().zip(&cfgs).zip(&outs).enumerate() {
        write_run(&c.out.join(format!("cell_{i:03}")), cfg, out, !c.no_plot)?;
        let m = out.metrics.clone().unwrap_or_default();
        table.push_str(&format!(
            "{i},\"{}\",\"{}\",{},{},{},{},{},{},{},{},{}\n",
            cell.join(" "),
            status(out).replace('"', "'"),
            m.t_end,
            m.velocity.transformed_violations + m.velocity.violations_after_tp,
            m.altitude.transformed_violations + m.altitude.violations_after_tp,
            m.velocity.max_abs_e_after_tp,
            m.altitude.max_abs_e_after_tp,
            m.velocity.max_abs_e_after_ts,
            m.altitude.max_abs_e_after_ts,
            m.breach_steps[0],
            m.breach_steps[1],
        ));
    }
    fs::write(c.out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(true)
}

fn cmd_check(args: &CheckArgs) -> anyhow::Result<bool> {
    init_pool(args.jobs);
    let mut cfg = AcceptanceConfig::default();
    if let Some(p) = &args.scenario {
        cfg.scenario = load(p, &[])?;
    }
    let cfg = cfg.with_overrides(&args.overrides).map_err(usage)?;
    let report = run_all(&cfg);
    println!("{report}");
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
