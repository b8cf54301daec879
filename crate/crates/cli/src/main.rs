//! `edtrade`: run scheduling experiments from scenario files.
//!
//! Exit status is 0 on success, 1 when the scenario is infeasible and 2 on
//! configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edtrade::experiment::{
    dismissal_sweep, dismissal_table, frame_table, run_experiment, sensitivity_table, solve_frame,
};
use edtrade::output::{fmt_f64, Table};
use edtrade::row;
use edtrade::scenario::{Scenario, GROUPS, RC2400HP, RN131C};
use edtrade::{Error, FopMode};

#[derive(Parser)]
#[command(name = "edtrade", version, about = "Distortion/lifetime scheduling for compressing sensor nodes")]
struct Cli {
    /// Log progress and per-sweep traces to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Admission, lifetime sweep and every CSV artifact.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trade-off weight; repeat for several curves.
        #[arg(long)]
        sigma: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve a single frame with explicit energies.
    SolveFrame {
        #[command(flatten)]
        common: Common,
        /// Per-node energies in joules, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        energies: Vec<f64>,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Dismissal counts over the scenario's frame lengths.
    SweepDismissal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trade-off curves over the scenario's processing slopes.
    SweepSensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in radios and group templates.
    Catalog {
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// full_csi, statistical or suboptimal; defaults to the scenario's.
    #[arg(long)]
    mode: Option<FopMode>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> edtrade::Result<(Scenario, FopMode)> {
        let mut s = Scenario::load(&self.config)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        let mode = self.mode.unwrap_or(s.run.mode);
        Ok((s, mode))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Error::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit(t: &Table, out: Option<&PathBuf>, name: &str) -> edtrade::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            t.write(dir.join(name))
        }
        None => {
            print!("{}", t.to_string_csv());
            Ok(())
        }
    }
}

fn dispatch(cmd: Command) -> edtrade::Result<ExitCode> {
    match cmd {
        Command::Run { common, sigma, out } => {
            let (s, mode) = common.load()?;
            let sigmas = if sigma.is_empty() { s.run.sigma.clone() } else { sigma };
            if let Some(bad) = sigmas.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Config {
                    key: "--sigma".into(),
                    msg: format!("{bad} is outside [0, 1]"),
                });
            }
            let report = run_experiment(&s, mode, &sigmas, &out)?;
            let sweep = &report.outcome.sweep;
            for &sg in &sigmas {
                if let Some((n, sch)) = sweep.best(sg) {
                    println!("sigma {sg}: n = {n}, d_mean = {}", fmt_f64(sch.d_mean));
                }
            }
            if !report.outcome.admission.dismissed.is_empty() {
                println!("dismissed nodes: {:?}", report.outcome.admission.dismissed);
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SolveFrame { common, energies, csv } => {
            let (s, mode) = common.load()?;
            let (_, sol) = solve_frame(&s, &energies, mode)?;
            if !sol.feasible {
                let why = sol.binding.map_or("unknown".to_string(), |b| format!("{b:?}"));
                if csv {
                    println!("feasible,gamma_star,binding\nfalse,inf,\"{why}\"");
                } else {
                    println!("infeasible; binding constraint: {why}");
                }
                return Ok(ExitCode::from(1));
            }
            let t = frame_table(&sol);
            if csv {
                print!("{}", t.to_string_csv());
            } else {
                println!("gamma* = {}", fmt_f64(sol.gamma_star));
                println!("total airtime = {} s", fmt_f64(sol.total_tau));
                if let Some(b) = sol.binding {
                    println!("binding: {b:?}");
                }
                println!("{:>5} {:>18} {:>18} {:>18} {:>18} {:>18}", "node", "tau", "power", "l_bits", "distortion", "e_used");
                for r in &t.rows {
                    println!("{:>5} {:>18} {:>18} {:>18} {:>18} {:>18}", r[0], r[1], r[2], r[3], r[4], r[5]);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepDismissal { common, out } => {
            let (s, mode) = common.load()?;
            let rows = dismissal_sweep(&s, mode)?;
            emit(&dismissal_table(&rows, s.devices.len()), out.as_ref(), "dismissal.csv")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepSensitivity { common, out } => {
            let (s, mode) = common.load()?;
            emit(&sensitivity_table(&s, mode)?, out.as_ref(), "sensitivity.csv")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog { csv } => {
            let t = catalog_table();
            if csv {
                print!("{}", t.to_string_csv());
            } else {
                for r in &t.rows {
                    println!("{}", t.header.iter().zip(r).map(|(h, v)| format!("{h}={v}")).collect::<Vec<_>>().join(" "));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn catalog_table() -> Table {
    let mut t = Table::new(&[
        "entry", "radio", "p_min", "p_max", "eta_a", "e_c_rate", "beta_const", "distance", "l0", "d_th", "priority",
    ]);
    for (name, r) in [("rn131c", RN131C), ("rc2400hp", RC2400HP)] {
        t.push(row![name, name, r.p_min, r.p_max, r.eta_a, r.e_c_rate, r.beta_const, "", "", "", ""]);
    }
    for g in &GROUPS {
        let r = g.radio;
        t.push(row![
            g.name, g.radio_name, r.p_min, r.p_max, r.eta_a, r.e_c_rate, r.beta_const, g.distance, g.l0, g.d_th, g.priority
        ]);
    }
    t
}
