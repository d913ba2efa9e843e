use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use timeprot::harness::experiment::{analyze_samples, ExperimentError};
use timeprot::harness::heatmap::render_heatmap;
use timeprot::harness::io::{self, IoError, ReportDoc};
use timeprot::harness::sweep::{sweep, sweep_csv, sweep_table};
use timeprot::harness::{load_config, run_experiment, ConfigError, ExperimentConfig};
use timeprot::leakage::DEFAULT_TRIALS;
use timeprot::machine::kernel::prepare_worst_case;
use timeprot::machine::{measure_worst_case_pad, Machine, MachineError};
use timeprot::uarch::DomainId;

#[derive(Parser)]
#[command(
    name = "timeprot",
    version,
    about = "On-core timing-channel simulator and leakage analysis"
)]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs one experiment and writes samples, matrix, report and heatmap.
    Run { config: PathBuf },
    /// Analyses an existing samples CSV.
    Analyze {
        samples: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        bin_width: Option<u64>,
    },
    /// Runs every attack under every mitigation and both write policies.
    Sweep { config: PathBuf },
    /// Renders a matrix CSV as a PPM heatmap.
    Render { matrix: PathBuf, output: PathBuf },
    /// Measures the worst-case context-switch latency and the pad covering it.
    PadCalibrate {
        config: PathBuf,
        /// Replays the worst case with this pad installed instead.
        #[arg(long)]
        check: Option<u32>,
        #[arg(long, default_value_t = 1)]
        iterations: usize,
    },
}

enum Failure {
    Config(String),
    Pad(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Pad(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Pad(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<MachineError> for Failure {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::PadExceeded { .. } => Failure::Pad(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::PadExceeded { .. } => Failure::Pad(e.to_string()),
            ExperimentError::Pool(_) => Failure::Io(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut cfg =
        load_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.cmd {
        Cmd::Run { config } => {
            let cfg = load(cli, config)?;
            let out = run_experiment(&cfg, cli.jobs)?;
            let dir = &cfg.output_dir;
            io::write_samples_csv(&out.samples, &dir.join("samples.csv"))?;
            io::write_matrix_csv(&out.matrix, &dir.join("matrix.csv"))?;
            let doc = ReportDoc::new(&out.report, cfg.seed, cfg.fingerprint());
            io::write_atomic(&dir.join("report.json"), &doc.to_json())?;
            let ppm = render_heatmap(&out.matrix).map_err(|e| Failure::Config(e.to_string()))?;
            io::write_atomic(&dir.join("heatmap.ppm"), &ppm)?;
            println!(
                "{} {} pad={} n={} M={:.1} mb M0={} mb verdict={}",
                cfg.attack,
                cfg.mitigation.kind,
                out.pad,
                out.report.n,
                out.report.m_mb,
                out.report.m0_mb.map_or("n/a".into(), |v| format!("{v:.1}")),
                out.report.verdict.as_str()
            );
        }
        Cmd::Analyze {
            samples,
            trials,
            bin_width,
        } => {
            let set = io::read_samples_csv(samples)?;
            let cfg = ExperimentConfig {
                seed: cli.seed.unwrap_or(0),
                trials: *trials,
                bin_width: *bin_width,
                ..ExperimentConfig::default()
            };
            let (matrix, report) = analyze_samples(&set, &cfg)?;
            let doc = ReportDoc::new(&report, cfg.seed, String::new()).to_json();
            if let Some(dir) = &cli.out {
                io::write_matrix_csv(&matrix, &dir.join("matrix.csv"))?;
                io::write_atomic(&dir.join("report.json"), &doc)?;
            }
            print!("{}", String::from_utf8_lossy(&doc));
        }
        Cmd::Sweep { config } => {
            let cfg = load(cli, config)?;
            let cells = sweep(&cfg, cli.jobs)?;
            io::write_atomic(&cfg.output_dir.join("sweep.csv"), &sweep_csv(&cells))?;
            print!("{}", sweep_table(&cells));
        }
        Cmd::Render { matrix, output } => {
            let m = io::read_matrix_csv(matrix)?;
            let ppm = render_heatmap(&m).map_err(|e| Failure::Config(e.to_string()))?;
            io::write_atomic(output, &ppm)?;
        }
        Cmd::PadCalibrate {
            config,
            check,
            iterations,
        } => {
            let cfg = load(cli, config)?;
            match check {
                None => {
                    let w = measure_worst_case_pad(&cfg.arch, cfg.mitigation)?;
                    println!("worst_case_cycles={} pad={}", w.worst_case_cycles, w.pad);
                }
                Some(pad) => {
                    for i in 0..*iterations {
                        let mut m = Machine::new(cfg.arch)?;
                        prepare_worst_case(&mut m)?;
                        m.set_pad(*pad);
                        let r = m.context_switch(cfg.mitigation, DomainId::SPY).map_err(
                            |e| match e {
                                MachineError::PadExceeded { overshoot } => Failure::Pad(
                                    ExperimentError::PadExceeded {
                                        iteration: i,
                                        overshoot,
                                    }
                                    .to_string(),
                                ),
                                e => e.into(),
                            },
                        )?;
                        println!(
                            "iteration {i}: total_cycles={} stall={}",
                            r.total_cycles, r.stall_cycles
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
