use clap::{Parser, Subcommand, ValueEnum};
use featgate::experiment::{
    self, compare_arms, config::ingest_files, emit_report, load_dataset, read_json, write_atomic,
    ChampionModel, ExperimentConfig, ExperimentError, RunStore,
};
use featgate::ingest::{calendar_gaps, AlignedDataset, PoolTag};
use featgate::synth::{self, SynthConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "featgate",
    version,
    about = "Does an exogenous feature block improve return forecasts?"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Baseline,
    Augmented,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Align a price file and an indicator file into one dataset CSV.
    Ingest {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        covid: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the GA searches for one or both arms.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Aligned dataset; overrides the config's data section.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        arm: ArmArg,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        generations: Option<usize>,
        /// Score fitness on the last N training rows instead of the test rows.
        #[arg(long)]
        holdout: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare stored runs and write the report and plots.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Permutation importance of a stored champion on its test rows.
    Pfi {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = featgate::metrics::DEFAULT_PFI_REPEATS)]
        repeats: usize,
        /// Defaults to the seed the run itself used.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic planted-signal dataset and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 558)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, ExperimentError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    write_atomic(path, &serde_json::to_string_pretty(value).expect("serializable"))
}

fn dispatch(cmd: Command) -> Result<(), ExperimentError> {
    match cmd {
        Command::Ingest {
            prices,
            covid,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let d = ingest_files(&cfg.data, &prices, covid.as_deref())?;
            std::fs::create_dir_all(&out).map_err(|e| ExperimentError::io(&out, e))?;
            let path = out.join("aligned.csv");
            d.write_csv(&path)?;
            let gaps = calendar_gaps(d.dates());
            let summary = serde_json::json!({
                "rows": d.len(),
                "first_date": d.dates().first(),
                "last_date": d.dates().last(),
                "horizon": d.horizon(),
                "series": d.series_names().collect::<Vec<_>>(),
                "calendar_gaps": gaps,
            });
            write_pretty(&out.join("ingest_summary.json"), &summary)?;
            println!(
                "{} rows, {} series -> {}",
                d.len(),
                d.all_series().len(),
                path.display()
            );
            Ok(())
        }
        Command::Run {
            config,
            data,
            arm,
            runs,
            seed,
            generations,
            holdout,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(p) = data {
                cfg.data.dataset = Some(p);
            }
            if let Some(r) = runs {
                cfg.experiment.runs = r;
            }
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(g) = generations {
                cfg.ga.generations = g;
            }
            if holdout.is_some() {
                cfg.ga.holdout = holdout;
            }
            cfg.validate()?;
            let dataset = load_dataset(&cfg.data)?;
            let store = RunStore::new(&out);
            write_pretty(&out.join("config.json"), &cfg)?;
            let arms: &[PoolTag] = match arm {
                ArmArg::Baseline => &[PoolTag::Baseline],
                ArmArg::Augmented => &[PoolTag::Augmented],
                ArmArg::Both => &[PoolTag::Baseline, PoolTag::Augmented],
            };
            let records = experiment::run_arms(&dataset, &cfg, arms, Some(&store))?;
            if arms.len() == 2 {
                let report = compare_arms(&records, Some(&cfg))?;
                emit_report(&report, &records, &out)?;
                print_summary(&report);
            } else {
                println!("{} runs written to {}", records.len(), out.display());
            }
            Ok(())
        }
        Command::Report { input, out } => {
            let store = RunStore::new(&input);
            let records = store.load_all()?;
            let snapshot = input.join("config.json");
            let cfg: Option<ExperimentConfig> = if snapshot.exists() {
                Some(read_json(&snapshot)?)
            } else {
                None
            };
            let report = compare_arms(&records, cfg.as_ref())?;
            emit_report(&report, &records, &out)?;
            copy_models(&input, &out)?;
            print_summary(&report);
            Ok(())
        }
        Command::Pfi {
            model,
            data,
            repeats,
            seed,
        } => {
            let champion: ChampionModel = read_json(&model)?;
            let d = AlignedDataset::read_csv(&data)?;
            let seed = seed.unwrap_or_else(|| experiment::pfi_seed(champion.seed));
            let pfi = champion.pfi(&d, repeats, seed)?;
            println!("{}", serde_json::to_string_pretty(&pfi).expect("serializable"));
            Ok(())
        }
        Command::Synth { out, rows, seed } => {
            let s = synth::generate(&SynthConfig {
                rows,
                seed,
                ..Default::default()
            })?;
            synth::write_csvs(&s, &out).map_err(|e| ExperimentError::io(&out, e))?;
            s.dataset.write_csv(&out.join("aligned.csv"))?;
            let mut cfg = ExperimentConfig::default();
            cfg.data.dataset = Some("aligned.csv".into());
            cfg.data.indicators.clear();
            cfg.data.test_rows =
                (rows * cfg.data.test_rows).div_ceil(cfg.data.train_rows + cfg.data.test_rows);
            cfg.data.train_rows = rows - cfg.data.test_rows;
            let text = toml::to_string(&cfg).map_err(|e| ExperimentError::Config(e.to_string()))?;
            std::fs::write(out.join("config.toml"), text).map_err(|e| ExperimentError::io(&out, e))?;
            println!("synthetic data written to {}", out.display());
            Ok(())
        }
    }
}

fn copy_models(from: &Path, to: &Path) -> Result<(), ExperimentError> {
    let src = from.join("models");
    if !src.is_dir() || from.join("models") == to.join("models") {
        return Ok(());
    }
    let dst = to.join("models");
    std::fs::create_dir_all(&dst).map_err(|e| ExperimentError::io(&dst, e))?;
    for entry in std::fs::read_dir(&src).map_err(|e| ExperimentError::io(&src, e))? {
        let p = entry.map_err(|e| ExperimentError::io(&src, e))?.path();
        if let Some(name) = p.file_name() {
            std::fs::copy(&p, dst.join(name)).map_err(|e| ExperimentError::io(&p, e))?;
        }
    }
    Ok(())
}

fn print_summary(report: &experiment::ComparisonReport) {
    println!("{} runs per arm", report.runs_per_arm);
    println!(
        "{:<6} {:>12} {:>12} {:>9} {:>8} {:>10}",
        "metric", "baseline", "augmented", "change", "overlap", "p"
    );
    for m in &report.metrics {
        let change = m
            .percent_change
            .map_or_else(|| "n/a".to_string(), |c| format!("{:+.1}%", 100.0 * c));
        println!(
            "{:<6} {:>12.6} {:>12.6} {:>9} {:>8.3} {:>10.3e}",
            m.metric, m.baseline_mean, m.augmented_mean, change, m.overlap, m.u_test.p_value
        );
    }
    for f in report.feature_frequency.iter().take(10) {
        println!(
            "  {:<50} {:>3}  mean drop {:+.4}",
            f.feature, f.count, f.mean_r2_drop
        );
    }
}
