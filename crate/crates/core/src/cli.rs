//! Command-line front end. Exit codes: 0 pass, 1 usage or input error,
//! 2 numerical failure, 3 monitor failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{resolve_config, RunConfig, THREADS_ENV};
use crate::diagnostics::{check_energy_boundedness, MonitorVerdict, TestFunctionSpec};
use crate::error::Error;
use crate::grid::GridSpec;
use crate::harness::{
    barenblatt_test, eps_sweep, evaluate_monitors, heat_mode_test, m_sweep, weak_refinement, RunOutput, Runner,
    SweepReport,
};
use crate::output::{
    load_checkpoint, read_csv, read_json, save_checkpoint, write_csv, write_json, write_refinement, write_snapshot,
    write_sweep_report,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_MONITOR: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "chemons", version, about = "Regularized chemotaxis-fluid solver and estimate monitor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug)]
pub struct ConfigArgs {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Overrides of the form --section.key=value.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario and write its history, snapshots and checkpoint.
    Run {
        /// Continue from a checkpoint instead of the initial data.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Compare runs over the `sweep.eps` list.
    SweepEps(ConfigArgs),
    /// Compare runs over the `sweep.m` list.
    SweepM(ConfigArgs),
    /// Weak-form residuals over the `sweep.grids` refinement.
    Refine(ConfigArgs),
    /// Porous-medium diffusion against the Barenblatt profile.
    Barenblatt {
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 128)]
        cells: usize,
        #[arg(long, default_value_t = 1.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.5)]
        t1: f64,
        /// Largest accepted L¹ error relative to the mass.
        #[arg(long, default_value_t = 0.03)]
        max_rel: f64,
    },
    /// Linear diffusion of a cosine mode against its discrete decay.
    HeatTest {
        #[arg(long, default_value_t = 64)]
        cells: usize,
        #[arg(long, default_value_t = 0.1)]
        t1: f64,
        #[arg(long, default_value_t = 0.5)]
        amp: f64,
        #[arg(long, default_value_t = 5e-4)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        max_err: f64,
    },
    /// Re-run the monitor suite on an existing output directory.
    Check { dir: PathBuf },
}

/// Parses the arguments and executes the command, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let env = std::env::var(THREADS_ENV).ok();
    let cfg = resolve_config(&text, env.as_deref(), &args.overrides)?;
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
        log::debug!("thread pool already set up: {e}");
    }
    Ok(cfg)
}

fn report_verdicts(verdicts: &[MonitorVerdict], path: &Path) -> Result<bool, Error> {
    let mut s = String::new();
    for v in verdicts {
        println!("{v}");
        writeln!(s, "{v}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))?;
    Ok(verdicts.iter().all(|v| v.passed))
}

fn write_history(out: &RunOutput, every: usize, path: &Path) -> Result<(), Error> {
    let last = out.history.len().saturating_sub(1);
    let rows: Vec<_> = out
        .history
        .iter()
        .enumerate()
        .filter(|(k, _)| k % every == 0 || *k == last)
        .map(|(_, r)| r.clone())
        .collect();
    write_csv(&rows, path)
}

fn cmd_run(cfg: RunConfig, resume: Option<PathBuf>) -> Result<i32, Error> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&cfg, &dir.join("run.json"))?;
    let mut runner = match resume {
        Some(path) => Runner::from_checkpoint(load_checkpoint(&path)?)?,
        None => Runner::new(cfg.scenario.clone())?,
    };
    if let Err(fail) = runner.advance(None) {
        write_history(&fail.partial, cfg.output.every, &dir.join("history.csv"))?;
        save_checkpoint(&fail.checkpoint, &dir.join("checkpoint.json"))?;
        eprintln!("error: {fail}");
        return Ok(if fail.error.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE });
    }
    if cfg.output.checkpoint {
        save_checkpoint(&runner.checkpoint(), &dir.join("checkpoint.json"))?;
    }
    let out = runner.finish();
    write_history(&out, cfg.output.every, &dir.join("history.csv"))?;
    if cfg.output.snapshots {
        for (k, s) in out.samples.iter().enumerate() {
            write_snapshot(s, &dir.join(format!("snap_{k:05}.vtk")))?;
        }
    }
    let c0 = cfg.scenario.initial_state()?.c;
    let verdicts = evaluate_monitors(&out.history, &c0, &cfg.scenario.params, &cfg.monitor);
    let ok = report_verdicts(&verdicts, &dir.join("monitors.txt"))?;
    Ok(if ok { EXIT_OK } else { EXIT_MONITOR })
}

fn cmd_sweep(cfg: RunConfig, report: SweepReport, energy: bool) -> Result<i32, Error> {
    let dir = PathBuf::from(&cfg.output.dir);
    write_json(&cfg, &dir.join("run.json"))?;
    write_sweep_report(&report, &dir)?;
    for (v, h) in &report.histories {
        write_csv(h, &dir.join(format!("{}_{v}", report.axis.name())).join("history.csv"))?;
    }
    let c0 = cfg.scenario.initial_state()?.c;
    let mut verdicts = Vec::new();
    for (v, h) in &report.histories {
        let mut p = cfg.scenario.params.clone();
        match report.axis {
            crate::harness::SweepAxis::Eps => p.eps = *v,
            crate::harness::SweepAxis::M => p.m = *v,
            crate::harness::SweepAxis::Grid => {}
        }
        for mut verdict in evaluate_monitors(h, &c0, &p, &cfg.monitor) {
            verdict.name = format!("{}[{}={v}]", verdict.name, report.axis.name());
            verdicts.push(verdict);
        }
    }
    if energy && report.histories.len() >= 2 {
        let (v, reports) = check_energy_boundedness(&report.histories, cfg.energy_factor, 0.0);
        write_json(&reports, &dir.join("energy.json"))?;
        verdicts.push(v);
    }
    println!("cauchy ratios {:?} ({:?})", report.cauchy_ratios, report.trend);
    let ok = report_verdicts(&verdicts, &dir.join("monitors.txt"))?;
    if !report.failures.is_empty() {
        return Ok(EXIT_NUMERICAL);
    }
    Ok(if ok { EXIT_OK } else { EXIT_MONITOR })
}

fn execute(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Run { resume, args } => cmd_run(load(&args)?, resume),
        Command::SweepEps(args) => {
            let cfg = load(&args)?;
            let r = eps_sweep(&cfg.scenario, &cfg.sweep.eps)?;
            cmd_sweep(cfg, r, true)
        }
        Command::SweepM(args) => {
            let cfg = load(&args)?;
            let r = m_sweep(&cfg.scenario, &cfg.sweep.m)?;
            cmd_sweep(cfg, r, false)
        }
        Command::Refine(args) => {
            let cfg = load(&args)?;
            let spec = TestFunctionSpec::standard(cfg.sweep.t_support * cfg.scenario.t_final);
            let r = weak_refinement(&cfg.scenario, &cfg.sweep.grids, cfg.sweep.dt_over_h, &spec)?;
            let dir = PathBuf::from(&cfg.output.dir);
            write_refinement(&r, &dir.join("refinement.csv"))?;
            let v = vec![
                MonitorVerdict::new("weak_monotone", if r.monotone() { 0.0 } else { 1.0 }, 0.0, 0.0),
                MonitorVerdict::new("weak_order", 0.8, r.min_order(), 0.0),
            ];
            for (c, res) in r.cells.iter().zip(&r.residuals) {
                println!("{c}: n {:.3e} c {:.3e} u {:.3e}", res.n, res.c, res.u);
            }
            let ok = report_verdicts(&v, &dir.join("monitors.txt"))?;
            Ok(if ok { EXIT_OK } else { EXIT_MONITOR })
        }
        Command::Barenblatt { m, cells, t0, t1, max_rel } => {
            let g = GridSpec::unit_square(cells)?;
            let r = barenblatt_test(m, &g, t0, t1)?;
            let v = MonitorVerdict::new("barenblatt_l1", r.relative, max_rel, 0.0);
            println!("L1 error {:.6e} (mass {:.6e}, {} steps)", r.l1_error, r.mass, r.steps);
            println!("{v}");
            Ok(if v.passed { EXIT_OK } else { EXIT_MONITOR })
        }
        Command::HeatTest { cells, t1, amp, dt, max_err } => {
            let g = GridSpec::unit_square(cells)?;
            let r = heat_mode_test(&g, t1, amp, dt)?;
            let v = MonitorVerdict::new("heat_mode_linf", r.linf_error, max_err, 0.0);
            println!("eigenvalue {:.12e}, dt {:e}, {} steps", r.eigenvalue, r.dt, r.steps);
            println!("{v}");
            Ok(if v.passed { EXIT_OK } else { EXIT_MONITOR })
        }
        Command::Check { dir } => {
            let cfg: RunConfig = read_json(&dir.join("run.json"))?;
            let history = read_csv(&dir.join("history.csv"))?;
            if history.is_empty() {
                return Err(Error::Input(format!("{} has no rows", dir.join("history.csv").display())));
            }
            let c0 = cfg.scenario.initial_state()?.c;
            let verdicts = evaluate_monitors(&history, &c0, &cfg.scenario.params, &cfg.monitor);
            let mut ok = true;
            for v in &verdicts {
                println!("{v}");
                ok &= v.passed;
            }
            Ok(if ok { EXIT_OK } else { EXIT_MONITOR })
        }
    }
}
