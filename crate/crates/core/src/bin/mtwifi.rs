use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mtwifi::ap_select::{apply_mask, build_mask};
use mtwifi::data::{load_csv, Role};
use mtwifi::evaluate::format_table;
use mtwifi::harness::{self, DataPaths, ExperimentConfig, RunRecord, Scenario, Strategy};
use mtwifi::{Error, ModelKind, NoiseKind, TrainedModel};

#[derive(Parser, Debug)]
#[command(name = "mtwifi", version, about = "Mean Teacher Wi-Fi fingerprint localization")]
struct Cli {
    /// Training seed (first replicate).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Simo,
    Cnnloc,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Simo => ModelKind::SimoDnn,
            ModelArg::Cnnloc => ModelKind::CnnLoc,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Sl,
    Ssl,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Sl => Strategy::Sl,
            StrategyArg::Ssl => Strategy::Ssl,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    Hybrid,
    Online,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    Ap,
    Noise,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    Awgn,
    Uniform,
}

#[derive(clap::Args, Debug)]
struct DataArgs {
    /// Directory with trainingData.csv and validationData.csv
    /// (default: $UJIINDOORLOC_DIR).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "simo")]
    model: ModelArg,
    #[arg(long, default_value = "ssl")]
    strategy: StrategyArg,
    #[arg(long)]
    replicates: Option<usize>,
    /// Cap on SSL epochs.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Cap on supervised (pre-)training epochs.
    #[arg(long)]
    pretrain_epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a UJIIndoorLoc CSV and print a summary.
    Ingest {
        path: PathBuf,
        /// Parse as unlabeled (location columns may be empty).
        #[arg(long)]
        unlabeled: bool,
    },
    /// Build an AP selection mask.
    SelectAps {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        unlabeled: Option<PathBuf>,
    },
    /// Train one scenario (hybrid case or online learning).
    Train {
        #[arg(long, default_value = "hybrid")]
        scenario: ScenarioArg,
        #[arg(long = "case", default_value_t = 4)]
        case: u8,
        #[arg(long, default_value_t = 1)]
        periods: usize,
        /// Online only: Case 4 SL reference checkpoint (trained on demand if absent).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run the AP-selection or noise-type ablation.
    Ablate {
        which: AblationArg,
        #[arg(long, default_value = "awgn")]
        noise: NoiseArg,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate a checkpoint on a labeled CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Aggregate run.json records below a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Divergence { .. } => 3,
                Error::Config(_) => 1,
                _ => 2,
            })
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let out = cli.out.clone();
    match cli.command {
        Command::Ingest { ref path, unlabeled } => {
            let role = if unlabeled { Role::Unlabeled } else { Role::Labeled };
            let data = load_csv(path, role)?;
            let detected: usize = data.records().iter().map(|r| r.detected_count()).sum();
            let mut buildings = std::collections::BTreeMap::new();
            for r in data.records() {
                if let Some(l) = r.label {
                    *buildings.entry((l.building, l.floor)).or_insert(0usize) += 1;
                }
            }
            println!("records: {}", data.len());
            println!("ap columns: {}", data.width());
            println!("mean detected APs per record: {:.2}", detected as f64 / data.len().max(1) as f64);
            for ((b, f), n) in buildings {
                println!("building {b} floor {f}: {n}");
            }
            Ok(())
        }
        Command::SelectAps { ref labeled, ref unlabeled } => {
            let l = load_csv(labeled, Role::Labeled)?;
            let u = unlabeled.as_ref().map(|p| load_csv(p, Role::Unlabeled)).transpose()?;
            let mask = build_mask(&l, u.as_ref())?;
            // Confirms every selected id resolves against the labeled schema.
            apply_mask(&l, &mask)?;
            println!("selected {} of {} APs", mask.len(), l.width());
            match out {
                Some(path) => mask.save(path)?,
                None => print!("{}", mask.to_text()),
            }
            Ok(())
        }
        Command::Train {
            scenario,
            case,
            periods,
            ref reference,
            ref data,
        } => {
            let scenario = match scenario {
                ScenarioArg::Hybrid => Scenario::Hybrid { case },
                ScenarioArg::Online => Scenario::Online { periods },
            };
            let mut cfg = experiment(&cli, scenario, data)?;
            if reference.is_some() {
                cfg.reference_checkpoint = reference.clone();
            }
            print_records(&harness::run(&cfg)?);
            Ok(())
        }
        Command::Ablate { which, noise, ref data } => {
            let scenario = match which {
                AblationArg::Ap => Scenario::AblationAp,
                AblationArg::Noise => Scenario::AblationNoise {
                    kind: match noise {
                        NoiseArg::Awgn => NoiseKind::Gaussian,
                        NoiseArg::Uniform => NoiseKind::Uniform,
                    },
                },
            };
            let cfg = experiment(&cli, scenario, data)?;
            print_records(&harness::run(&cfg)?);
            Ok(())
        }
        Command::Eval { ref checkpoint, ref test } => {
            let model = TrainedModel::load(checkpoint)?;
            let data = load_csv(test, Role::Test)?;
            let report = model.evaluate(&data)?;
            let table = format_table(&[("-".into(), model.spec.name.display_name().into(), report.clone())]);
            print!("{table}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let path = dir.join("report.json");
                std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Report { ref dir } => {
            let records = harness::collect_records(dir)?;
            if records.is_empty() {
                return Err(Failure::Usage(format!("no run.json records under {}", dir.display())));
            }
            print!("{}", harness::format_summary(&harness::summarize(&records)));
            Ok(())
        }
    }
}

fn experiment(cli: &Cli, scenario: Scenario, data: &DataArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            cfg.scenario = scenario;
            cfg
        }
        None => {
            let paths = match &data.data {
                Some(dir) => DataPaths::in_dir(dir),
                None => DataPaths::from_env().ok_or_else(|| {
                    Failure::Usage("no dataset: pass --data DIR or set UJIINDOORLOC_DIR".into())
                })?,
            };
            ExperimentConfig::new(scenario, data.model.into(), data.strategy.into(), paths, PathBuf::from("runs"))
        }
    };
    if let Some(dir) = &data.data {
        cfg.paths = DataPaths::in_dir(dir);
    }
    cfg.model = data.model.into();
    cfg.strategy = data.strategy.into();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(r) = data.replicates {
        cfg.replicates = r;
    }
    if let Some(e) = data.max_epochs {
        cfg.ssl.max_epochs = e;
    }
    if let Some(e) = data.pretrain_epochs {
        cfg.ssl.pretrain_max_epochs = e;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if !cfg.paths.exist() {
        return Err(Failure::Run(Error::Validation(format!(
            "dataset files not found: {} and {}",
            cfg.paths.training.display(),
            cfg.paths.validation.display()
        ))));
    }
    Ok(cfg)
}

fn print_records(records: &[RunRecord]) {
    for r in records {
        println!(
            "{} {} {} seed {}: EvAAL {:.3} m, gamma {:.4} -> {}",
            r.config.scenario.label(),
            r.config.model.display_name(),
            r.config.strategy.display_name(),
            r.seed,
            r.report.evaal_error,
            r.report.gamma,
            display_parent(&r.checkpoint)
        );
    }
    print!("{}", harness::format_summary(&harness::summarize(records)));
}

fn display_parent(path: &Path) -> String {
    path.parent().unwrap_or(path).display().to_string()
}
