use bldc_dtc::sim::config::{ControllerKind, SensorMode, SimConfig};
use bldc_dtc::sim::trace::{read_csv, write_csv};
use bldc_dtc::sim::tune::tune_smo_gains;
use bldc_dtc::sim::{compute_metrics, run_simulation, SimError};
use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bldc-sim", version, about = "Sensorless DTC BLDC drive simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Pi,
    Mmras,
}

#[derive(Clone, Copy, ValueEnum)]
enum SensorArg {
    Sensorless,
    Oracle,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its trace as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        controller: Option<ControllerArg>,
        #[arg(long, value_enum)]
        sensor: Option<SensorArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the PI and MMRAS controllers on the same scenario.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for observer gains and write them as a config fragment.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics of a written trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Scenario the trace came from (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write_trace(path: &Path, cfg: &SimConfig) -> Result<Vec<bldc_dtc::sim::TraceRecord>, SimError> {
    let trace = run_simulation(cfg)?;
    let f = File::create(path).map_err(|e| SimError::Config(format!("cannot create {}: {e}", path.display())))?;
    write_csv(BufWriter::new(f), &trace)?;
    Ok(trace)
}

fn execute(cmd: Cmd) -> Result<(), SimError> {
    match cmd {
        Cmd::Run {
            config,
            out,
            controller,
            sensor,
            seed,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(c) = controller {
                cfg.controller = match c {
                    ControllerArg::Pi => ControllerKind::Pi,
                    ControllerArg::Mmras => ControllerKind::Mmras,
                };
            }
            if let Some(s) = sensor {
                cfg.sensor_mode = match s {
                    SensorArg::Sensorless => SensorMode::Sensorless,
                    SensorArg::Oracle => SensorMode::Oracle,
                };
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            write_trace(&out, &cfg)?;
        }
        Cmd::Compare { config, out } => {
            let base = SimConfig::load(&config)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| SimError::Config(format!("cannot create {}: {e}", out.display())))?;
            let mut summary = String::new();
            for (name, kind) in [("pi", ControllerKind::Pi), ("mmras", ControllerKind::Mmras)] {
                let cfg = SimConfig {
                    controller: kind,
                    ..base.clone()
                };
                let trace = write_trace(&out.join(format!("{name}.csv")), &cfg)?;
                let m = compute_metrics(&trace, &cfg)?;
                summary.push_str(&format!("[{name}]\n{}\n", m.to_toml()));
            }
            std::fs::write(out.join("metrics.toml"), &summary)?;
            print!("{summary}");
        }
        Cmd::Tune {
            config,
            budget,
            seed,
            out,
        } => {
            let cfg = SimConfig::load(&config)?;
            let r = tune_smo_gains(&cfg, budget, seed)?;
            let g = r.gains;
            let text = format!(
                "# objective {} (starting gains {}), {} evaluations, seed {seed}\n\
                 [smo]\nks1 = {}\nks2 = {}\nks3 = {}\nks4 = {}\ndelta = {}\n",
                r.objective, r.initial_objective, r.evaluations, g.ks1, g.ks2, g.ks3, g.ks4, g.delta
            );
            std::fs::write(&out, &text)?;
            print!("{text}");
        }
        Cmd::Metrics { trace, config } => {
            let cfg = match config {
                Some(p) => SimConfig::load(&p)?,
                None => SimConfig::default(),
            };
            let f =
                File::open(&trace).map_err(|e| SimError::Config(format!("cannot read {}: {e}", trace.display())))?;
            let records = read_csv(BufReader::new(f)).map_err(|e| match e {
                SimError::Format { line, msg } => SimError::Format {
                    line,
                    msg: format!("{}: {msg}", trace.display()),
                },
                other => other,
            })?;
            let m = compute_metrics(&records, &cfg)?;
            let mut stdout = std::io::stdout().lock();
            write!(stdout, "{}", m.to_toml())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
