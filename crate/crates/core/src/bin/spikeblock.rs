use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikeblock::fourier::{tail_profile, Cutoff};
use spikeblock::master::Caps;
use spikeblock::regimes::{Built, RegimeConfig};
use spikeblock::verify::{self, Report, RunConfig};
use spikeblock::{Error, SEED_ENV};

#[derive(Parser)]
#[command(name = "spikeblock", version, about = "Build and check lacunary spike-block constructions")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; per-sample seeds are derived from it.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Output path (file or directory, depending on the subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Regime config (TOML) to manifest (JSON).
    Build {
        #[arg(long)]
        config: PathBuf,
        /// Desk caps, e.g. `trials=64,layers=2097152`.
        #[arg(long)]
        caps: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Manifest to the full property-suite report.
    Verify {
        /// Manifest to check; alternatively build one from `--config`.
        manifest: Option<PathBuf>,
        #[arg(long, conflicts_with = "manifest")]
        config: Option<PathBuf>,
        #[arg(long)]
        caps: Option<String>,
        #[arg(long, default_value_t = 4000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        /// Interval half-width in standard deviations.
        #[arg(long, default_value_t = verify::DEFAULT_Z)]
        tolerance: f64,
        /// Skip the manifest-independent suite.
        #[arg(long)]
        no_core: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Manifest and samples to good-event and average CSVs.
    Simulate {
        manifest: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Manifest and a grid of `log2 N` to the tail-profile CSV.
    Fourier {
        manifest: PathBuf,
        /// Comma-separated `log2 N` values; defaults to each `E_k` and `E_k + 8`.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Report CSVs to a summary and one merged CSV.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>, caps: Option<&str>) -> Result<RegimeConfig, Error> {
    let mut cfg = RegimeConfig::from_toml(&read(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(c) = caps {
        cfg.opts.caps = Caps::parse(c)?;
    }
    Ok(cfg)
}

fn seed_of(built: &Built) -> u64 {
    match built {
        Built::Master { manifest, .. } => manifest.seed,
        Built::Bounded(hm) => hm.seed,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Command::Build { config, caps, common } => {
            let built = load_config(&config, common.seed, caps.as_deref())?.build()?;
            if let Built::Master { notes, .. } = &built {
                for n in notes {
                    eprint!("{n}");
                }
            }
            emit(common.out.as_deref(), &built.to_json())?;
            Ok(true)
        }
        Command::Verify { manifest, config, caps, samples, tolerance, no_core, common } => {
            let built = match (manifest, config) {
                (Some(m), _) => Built::from_json(&read(&m)?)?,
                (None, Some(c)) => load_config(&c, common.seed, caps.as_deref())?.build()?,
                (None, None) => return Err(Error::Malformed("need a manifest or --config".into())),
            };
            let cfg = RunConfig { seed: common.seed.unwrap_or(seed_of(&built)), samples, z: tolerance, core: !no_core, ..RunConfig::default() };
            let report = verify::verify_built(&built, &cfg)?;
            match &common.out {
                Some(p) => {
                    write(p, &report.to_csv())?;
                    print!("{}", report.summary());
                }
                None => print!("{}", report.to_csv()),
            }
            for r in report.failures() {
                eprintln!("failed: {} ({})", r.claim, r.detail);
            }
            Ok(report.passed())
        }
        Command::Simulate { manifest, samples, common } => {
            let built = Built::from_json(&read(&manifest)?)?;
            let seed = common.seed.unwrap_or(seed_of(&built));
            let dir = common.out.unwrap_or_else(|| PathBuf::from("."));
            match &built {
                Built::Master { manifest, .. } => {
                    let (good, avg) = verify::simulate_master(manifest, samples, seed)?;
                    write(&dir.join("good_events.csv"), &good)?;
                    write(&dir.join("averages.csv"), &avg)?;
                    if let Some(p) = manifest.p {
                        let tapes: Vec<_> = (0..samples).map(|i| (i, spikeblock::BitTape::for_sample(seed, i))).collect();
                        write(&dir.join("growth.csv"), &verify::growth_scan(manifest, &tapes, p)?.to_csv())?;
                    }
                }
                Built::Bounded(hm) => write(&dir.join("hit_events.csv"), &verify::simulate_bounded(hm, samples, seed)?)?,
            }
            Ok(true)
        }
        Command::Fourier { manifest, grid, common } => {
            let m = match Built::from_json(&read(&manifest)?)? {
                Built::Master { manifest, .. } => manifest,
                Built::Bounded(_) => return Err(Error::Malformed("fourier needs a master manifest".into())),
            };
            let grid: Vec<Cutoff> = if grid.is_empty() {
                m.stages.iter().flat_map(|s| [Cutoff::Pow2(s.threshold_log2), Cutoff::Pow2(s.threshold_log2 + 8)]).collect()
            } else {
                grid.into_iter().map(Cutoff::Pow2).collect()
            };
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| a.log2().total_cmp(&b.log2()));
            emit(common.out.as_deref(), &tail_profile(&m.blocks(), &sorted)?.to_csv())?;
            Ok(true)
        }
        Command::Report { inputs, common } => {
            let mut merged = Report::new(format!("spikeblock report over {} files", inputs.len()));
            for p in &inputs {
                merged.extend(Report::from_csv(&read(p)?)?.rows);
            }
            if let Some(p) = &common.out {
                write(p, &merged.to_csv())?;
            }
            print!("{}", merged.summary());
            Ok(merged.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
