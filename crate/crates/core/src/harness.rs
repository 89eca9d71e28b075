//! End-to-end experiment runners: hybrid-database cases, online continuous
//! learning and the two ablations.
//!
//! Every run writes a directory holding `config.json`, `metrics.csv`,
//! `report.json`, `model.ckpt`, `mask.txt` and `run.json`. Replicates of one
//! configuration share the split seed and differ only in the training seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ap_select::{apply_mask, build_mask, SelectionMask};
use crate::checkpoint::TrainedModel;
use crate::data::{load_csv, split_online, split_quarters, Dataset, Role};
use crate::error::{Error, Result};
use crate::evaluate::{improvement, EvalReport};
use crate::mean_teacher::{holdout_split, ssl_train, train_supervised, MetricLog, SslConfig};
use crate::models::{AutoencoderConfig, ModelKind, ModelSpec};
use crate::preprocess::{encode, inject_noise, normalize_dataset, EncodedBatch, NoiseConfig, NoiseKind};

pub const TRAINING_FILE: &str = "trainingData.csv";
pub const VALIDATION_FILE: &str = "validationData.csv";
/// Environment variable naming a directory with the two UJIIndoorLoc files.
pub const DATA_DIR_ENV: &str = "UJIINDOORLOC_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Scenario {
    /// `case` quarters of the training set are labeled, the rest unlabeled.
    Hybrid { case: u8 },
    Online { periods: usize },
    AblationAp,
    AblationNoise { kind: NoiseKind },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::Hybrid { case } if !(1..=4).contains(&case) => {
                Err(Error::Config(format!("hybrid case must be 1..=4, got {case}")))
            }
            Scenario::Online { periods: 0 } => Err(Error::Config("online periods must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scenario::Hybrid { case } => format!("hybrid-case{case}"),
            Scenario::Online { periods } => format!("online-p{periods}"),
            Scenario::AblationAp => "ablation-ap".into(),
            Scenario::AblationNoise { kind } => format!("ablation-noise-{kind:?}").to_lowercase(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sl,
    Ssl,
}

impl Strategy {
    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::Sl => "SL",
            Strategy::Ssl => "SSL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub training: PathBuf,
    pub validation: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            training: dir.join(TRAINING_FILE),
            validation: dir.join(VALIDATION_FILE),
        }
    }

    /// Paths under `$UJIINDOORLOC_DIR`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(DATA_DIR_ENV).map(|d| Self::in_dir(PathBuf::from(d)))
    }

    pub fn exist(&self) -> bool {
        self.training.is_file() && self.validation.is_file()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub strategy: Strategy,
    pub ssl: SslConfig,
    pub noise: NoiseConfig,
    pub paths: DataPaths,
    pub output_dir: PathBuf,
    /// First training seed; replicate `r` uses `seed + r`.
    pub seed: u64,
    /// Seed of the quarter split and the held-out slice, shared by all arms.
    pub split_seed: u64,
    pub replicates: usize,
    /// Reconstruction pre-training of the CNNLoc encoder.
    pub autoencoder: AutoencoderConfig,
    /// Online scenario only: checkpoint of the Case 4 SL reference.
    #[serde(default)]
    pub reference_checkpoint: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, model: ModelKind, strategy: Strategy, paths: DataPaths, output_dir: PathBuf) -> Self {
        let ssl = match scenario {
            Scenario::Online { .. } => SslConfig::online(),
            _ => SslConfig::hybrid(),
        };
        let noise = match scenario {
            Scenario::AblationNoise { kind } => NoiseConfig::of_kind(kind),
            _ => NoiseConfig::awgn(),
        };
        Self {
            scenario,
            model,
            strategy,
            ssl,
            noise,
            paths,
            output_dir,
            seed: 1,
            split_seed: 42,
            replicates: 3,
            autoencoder: AutoencoderConfig::default(),
            reference_checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.ssl.validate()?;
        self.noise.validate()?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Same experiment with a different training seed and one replicate.
    pub fn for_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            replicates: 1,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub wall_time_s: f64,
    pub report: EvalReport,
    pub checkpoint: PathBuf,
    pub metric_log: PathBuf,
    /// Content hash of the labeled training rows this run consumed.
    pub labeled_hash: String,
    pub input_width: usize,
    pub epochs: usize,
}

impl RunRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Training and validation files as labeled and test datasets.
pub fn load_uji(paths: &DataPaths) -> Result<(Dataset, Dataset)> {
    let train = load_csv(&paths.training, Role::Labeled)?;
    let test = load_csv(&paths.validation, Role::Test)?;
    Ok((train, test))
}

/// Labeled and (labels withheld) unlabeled parts of a hybrid case.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridParts {
    pub labeled: Dataset,
    pub unlabeled: Option<Dataset>,
}

pub fn hybrid_parts(train: &Dataset, case: u8, split_seed: u64) -> Result<HybridParts> {
    Scenario::Hybrid { case }.validate()?;
    let quarters = split_quarters(train, split_seed)?;
    let k = usize::from(case);
    let labeled: Vec<&Dataset> = quarters[..k].iter().collect();
    let unlabeled: Vec<&Dataset> = quarters[k..].iter().collect();
    Ok(HybridParts {
        labeled: Dataset::concat(&labeled, Role::Labeled)?,
        unlabeled: if unlabeled.is_empty() {
            None
        } else {
            Some(Dataset::concat(&unlabeled, Role::Unlabeled)?)
        },
    })
}

/// Everything a training run consumes, already masked and encoded.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRun {
    pub spec: ModelSpec,
    pub mask: SelectionMask,
    /// Labeled rows used for gradient steps (the held-out slice removed).
    pub train: EncodedBatch,
    pub dev: EncodedBatch,
    /// Unlabeled features for the SSL arm, real or noise-injected.
    pub unlabeled: Array2<f64>,
    pub test: Dataset,
    pub labeled_hash: String,
}

fn features_hash(batch: &EncodedBatch) -> String {
    let mut h = Sha256::new();
    for v in batch.features.iter() {
        h.update(v.to_le_bytes());
    }
    if let Some(t) = &batch.targets {
        for v in t.bf.iter().chain(t.coords.iter()) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6e6f_6973_655f_7365
}

/// Masks, encodes and splits the data of a hybrid-style run.
///
/// `select_aps = false` keeps all columns (the AP ablation's control arm).
/// Without real unlabeled data the SSL arm gets a noise-injected copy of the
/// labeled training rows, and the mask is built before injection.
pub fn prepare(cfg: &ExperimentConfig, parts: &HybridParts, test: Dataset, seed: u64, select_aps: bool) -> Result<PreparedRun> {
    let mask = if select_aps {
        build_mask(&parts.labeled, parts.unlabeled.as_ref())?
    } else {
        SelectionMask::all_of(&parts.labeled)?
    };
    let spec = cfg.model.build(mask.len())?;
    let convention = cfg.model.coord_convention();
    let labeled = encode(&apply_mask(&parts.labeled, &mask)?, None, convention)?;
    let (train_rows, dev_rows) = holdout_split(labeled.len(), cfg.ssl.holdout_fraction, cfg.split_seed);
    let mut train = labeled.select(&train_rows);
    let dev = labeled.select(&dev_rows);
    let labeled_hash = features_hash(&train);
    let unlabeled = match &parts.unlabeled {
        Some(u) => normalize_dataset(&apply_mask(u, &mask)?)?,
        None => inject_noise(train.features.view(), &cfg.noise, noise_seed(seed))?,
    };
    if matches!(cfg.scenario, Scenario::AblationNoise { .. }) && cfg.strategy == Strategy::Sl {
        // Original and noised rows together, the noised copies keeping their labels.
        let targets = train.targets()?.clone();
        let doubled: Vec<usize> = (0..train.len()).chain(0..train.len()).collect();
        train = EncodedBatch {
            features: concatenate(Axis(0), &[train.features.view(), unlabeled.view()])
                .map_err(|e| Error::shape("noise ablation", e.to_string()))?,
            targets: Some(targets.select(&doubled)),
            scaler: train.scaler,
        };
    }
    let test = apply_mask(&test, &mask)?;
    Ok(PreparedRun {
        spec,
        mask,
        train,
        dev,
        unlabeled,
        test,
        labeled_hash,
    })
}

/// A trained model and its training log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: MetricLog,
    pub epochs: usize,
}

fn initial_params(cfg: &ExperimentConfig, spec: &ModelSpec, features: &Array2<f64>, seed: u64) -> Result<crate::nn::Parameters> {
    let mut params = spec.init_params(seed)?;
    if spec.name == ModelKind::CnnLoc {
        let ae = AutoencoderConfig { seed, ..cfg.autoencoder };
        spec.pretrain_autoencoder(&mut params, features.view(), &ae)?;
    }
    Ok(params)
}

/// Runs the SL or SSL arm on prepared data.
pub fn train_prepared(cfg: &ExperimentConfig, prepared: &PreparedRun, seed: u64) -> Result<TrainOutcome> {
    let ssl = SslConfig { seed, ..cfg.ssl.clone() };
    let spec = &prepared.spec;
    let init = initial_params(cfg, spec, &prepared.train.features, seed)?;
    let mut log = MetricLog::default();
    let (params, epochs) = match cfg.strategy {
        Strategy::Sl => {
            let out = train_supervised(spec, init, &prepared.train, Some(&prepared.dev), &ssl, ssl.pretrain_max_epochs, &mut log)?;
            (out.best_params, out.epochs_run)
        }
        Strategy::Ssl => {
            let mut pre_log = MetricLog::default();
            let pre = train_supervised(spec, init, &prepared.train, Some(&prepared.dev), &ssl, ssl.pretrain_max_epochs, &mut pre_log)?;
            let out = ssl_train(spec, &pre.final_params, &prepared.train, prepared.unlabeled.view(), Some(&prepared.dev), &ssl, &mut log)?;
            (out.teacher, pre.epochs_run + out.epochs_run)
        }
    };
    Ok(TrainOutcome {
        model: TrainedModel {
            spec: spec.clone(),
            params,
            mask: prepared.mask.clone(),
            scaler: prepared.train.scaler,
        },
        log,
        epochs,
    })
}

/// Writes the run directory and returns its record.
pub fn finish_run(
    cfg: &ExperimentConfig,
    seed: u64,
    outcome: &TrainOutcome,
    test: &Dataset,
    labeled_hash: String,
    dir: &Path,
    started: Instant,
) -> Result<RunRecord> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = outcome.model.evaluate(test)?;
    let write = |name: &str, text: String| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    write("config.json", cfg.for_seed(seed).to_json())?;
    let metric_log = write("metrics.csv", outcome.log.to_csv())?;
    write("report.json", report.to_json())?;
    write("mask.txt", outcome.model.mask.to_text())?;
    let checkpoint = dir.join("model.ckpt");
    outcome.model.save(&checkpoint)?;
    let record = RunRecord {
        config: cfg.for_seed(seed),
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        report,
        checkpoint,
        metric_log,
        labeled_hash,
        input_width: outcome.model.spec.input_width,
        epochs: outcome.epochs,
    };
    write("run.json", serde_json::to_string_pretty(&record).expect("record serializes"))?;
    log::info!(
        "{} {} {} seed {}: EvAAL {:.3} m, gamma {:.4}",
        cfg.scenario.label(),
        cfg.model.display_name(),
        cfg.strategy.display_name(),
        seed,
        record.report.evaal_error,
        record.report.gamma
    );
    Ok(record)
}

fn run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!(
        "{}_{:?}_{:?}_seed{}",
        cfg.scenario.label(),
        cfg.model,
        cfg.strategy,
        seed
    ).to_lowercase())
}

fn run_single_hybrid(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, case: u8, select_aps: bool, seed: u64) -> Result<RunRecord> {
    let started = Instant::now();
    let parts = hybrid_parts(train, case, cfg.split_seed)?;
    let prepared = prepare(cfg, &parts, test.clone(), seed, select_aps)?;
    let outcome = train_prepared(cfg, &prepared, seed)?;
    finish_run(cfg, seed, &outcome, &prepared.test, prepared.labeled_hash.clone(), &run_dir(cfg, seed), started)
}

fn seeds(cfg: &ExperimentConfig) -> impl Iterator<Item = u64> + '_ {
    (0..cfg.replicates as u64).map(move |r| cfg.seed + r)
}

/// Hybrid-database Case `k` over all replicates.
pub fn run_hybrid_case(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let Scenario::Hybrid { case } = cfg.scenario else {
        return Err(Error::Config("run_hybrid_case needs a hybrid scenario".into()));
    };
    let (train, test) = load_uji(&cfg.paths)?;
    seeds(cfg).map(|s| run_single_hybrid(cfg, &train, &test, case, true, s)).collect()
}

/// With- and without-selection runs of Case 4, per replicate.
pub fn run_ablation_ap(cfg: &ExperimentConfig) -> Result<Vec<(RunRecord, RunRecord)>> {
    cfg.validate()?;
    let (train, test) = load_uji(&cfg.paths)?;
    let mut pairs = Vec::new();
    for s in seeds(cfg) {
        let with = ExperimentConfig {
            output_dir: cfg.output_dir.join("with_selection"),
            ..cfg.clone()
        };
        let without = ExperimentConfig {
            output_dir: cfg.output_dir.join("without_selection"),
            ..cfg.clone()
        };
        pairs.push((
            run_single_hybrid(&with, &train, &test, 4, true, s)?,
            run_single_hybrid(&without, &train, &test, 4, false, s)?,
        ));
    }
    Ok(pairs)
}

/// SSL (noised data as unlabeled) and SL (original plus noised data as
/// labeled) arms of Case 4, per replicate. Returns `(ssl, sl)` pairs.
pub fn run_ablation_noise(cfg: &ExperimentConfig) -> Result<Vec<(RunRecord, RunRecord)>> {
    cfg.validate()?;
    let Scenario::AblationNoise { kind } = cfg.scenario else {
        return Err(Error::Config("run_ablation_noise needs a noise ablation scenario".into()));
    };
    let base = ExperimentConfig {
        noise: NoiseConfig { kind, ..cfg.noise },
        ..cfg.clone()
    };
    let (train, test) = load_uji(&cfg.paths)?;
    let mut pairs = Vec::new();
    for s in seeds(cfg) {
        let ssl = ExperimentConfig { strategy: Strategy::Ssl, ..base.clone() };
        let sl = ExperimentConfig { strategy: Strategy::Sl, ..base.clone() };
        pairs.push((
            run_single_hybrid(&ssl, &train, &test, 4, true, s)?,
            run_single_hybrid(&sl, &train, &test, 4, true, s)?,
        ));
    }
    Ok(pairs)
}

/// The Case 4 SL reference for the online scenario: loaded from
/// `reference_checkpoint` when given, else trained now with the same seed.
pub fn online_reference(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, seed: u64) -> Result<TrainedModel> {
    if let Some(path) = &cfg.reference_checkpoint {
        return TrainedModel::load(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(format!("reference checkpoint {} is missing", path.display())),
            other => other,
        });
    }
    let reference = ExperimentConfig {
        scenario: Scenario::Hybrid { case: 4 },
        strategy: Strategy::Sl,
        ssl: SslConfig { seed, ..SslConfig::hybrid() },
        output_dir: cfg.output_dir.join("reference"),
        ..cfg.clone()
    };
    let record = run_single_hybrid(&reference, train, test, 4, true, seed)?;
    TrainedModel::load(&record.checkpoint)
}

/// Consecutive, timestamp-ordered chunks of the online stream.
pub fn online_periods(online: &Dataset, periods: usize) -> Result<Vec<Dataset>> {
    if periods == 0 || periods > online.len() {
        return Err(Error::Config(format!(
            "periods must be in 1..={} for this stream, got {periods}",
            online.len()
        )));
    }
    let n = online.len();
    (0..periods)
        .map(|p| {
            let rows: Vec<usize> = (p * n / periods..(p + 1) * n / periods).collect();
            online.subset(&rows, Role::Unlabeled)
        })
        .collect()
}

/// Online continuous learning from a reference model, one run per replicate.
pub fn run_online(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let Scenario::Online { periods } = cfg.scenario else {
        return Err(Error::Config("run_online needs an online scenario".into()));
    };
    let (train, validation) = load_uji(&cfg.paths)?;
    let (online, held_back) = split_online(&validation)?;
    let chunks = online_periods(&online, periods)?;
    let mut records = Vec::new();
    for seed in seeds(cfg) {
        let started = Instant::now();
        let reference = online_reference(cfg, &train, &validation, seed)?;
        let labeled = encode(&apply_mask(&train, &reference.mask)?, Some(&reference.scaler), reference.spec.name.coord_convention())?;
        let labeled_hash = features_hash(&labeled);
        let mut log = MetricLog::default();
        let mut model = reference.clone();
        let mut epochs = 0;
        if cfg.strategy == Strategy::Ssl {
            let ssl = SslConfig { seed, ..cfg.ssl.clone() };
            for chunk in &chunks {
                let unlabeled = normalize_dataset(&apply_mask(chunk, &reference.mask)?)?;
                let out = ssl_train(&model.spec, &model.params, &labeled, unlabeled.view(), None, &ssl, &mut log)?;
                model.params = out.teacher;
                epochs += out.epochs_run;
            }
        }
        let outcome = TrainOutcome { model, log, epochs };
        records.push(finish_run(cfg, seed, &outcome, &held_back, labeled_hash, &run_dir(cfg, seed), started)?);
    }
    Ok(records)
}

/// Dispatches on the scenario; ablations flatten their pairs.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    match cfg.scenario {
        Scenario::Hybrid { .. } => run_hybrid_case(cfg),
        Scenario::Online { .. } => run_online(cfg),
        Scenario::AblationAp => Ok(run_ablation_ap(cfg)?.into_iter().flat_map(|(a, b)| [a, b]).collect()),
        Scenario::AblationNoise { .. } => Ok(run_ablation_noise(cfg)?.into_iter().flat_map(|(a, b)| [a, b]).collect()),
    }
}

/// Mean and (sample) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub model: String,
    pub strategy: String,
    pub input_width: usize,
    pub runs: usize,
    pub evaal_mean: f64,
    pub evaal_std: f64,
    pub gamma_mean: f64,
    pub gamma_std: f64,
}

/// Groups records by scenario, model, strategy and input width.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String, usize)> = Vec::new();
    for r in records {
        let key = (
            r.config.scenario.label(),
            r.config.model.display_name().to_string(),
            r.config.strategy.display_name().to_string(),
            r.input_width,
        );
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, model, strategy, input_width)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| {
                    r.config.scenario.label() == scenario
                        && r.config.model.display_name() == model
                        && r.config.strategy.display_name() == strategy
                        && r.input_width == input_width
                })
                .collect();
            let (evaal_mean, evaal_std) = mean_std(&group.iter().map(|r| r.report.evaal_error).collect::<Vec<_>>());
            let (gamma_mean, gamma_std) = mean_std(&group.iter().map(|r| r.report.gamma).collect::<Vec<_>>());
            SummaryRow {
                scenario,
                model,
                strategy,
                input_width,
                runs: group.len(),
                evaal_mean,
                evaal_std,
                gamma_mean,
                gamma_std,
            }
        })
        .collect()
}

/// Text table of summary rows, with η for every SSL row that has a matching
/// SL row (same scenario, model and width).
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<22} {:<9} {:<8} {:>5} {:>4} {:>17} {:>15} {:>8}\n",
        "Scenario", "Model", "Strategy", "APs", "n", "EvAAL [m]", "gamma", "eta [%]"
    );
    for r in rows {
        let eta = (r.strategy == "SSL")
            .then(|| {
                rows.iter().find(|o| {
                    o.strategy == "SL" && o.scenario == r.scenario && o.model == r.model && o.input_width == r.input_width
                })
            })
            .flatten()
            .and_then(|sl| improvement(sl.evaal_mean, r.evaal_mean).ok())
            .map(|i| format!("{:.2}", i.eta))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<22} {:<9} {:<8} {:>5} {:>4} {:>8.3} ± {:<6.3} {:>6.4} ± {:<6.4} {:>8}\n",
            r.scenario, r.model, r.strategy, r.input_width, r.runs, r.evaal_mean, r.evaal_std, r.gamma_mean, r.gamma_std, eta
        ));
    }
    out
}

/// All `run.json` records below `dir`, in path order.
pub fn collect_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.file_name() == "run.json" {
            found.push(RunRecord::load(entry.path())?);
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    #[test]
    fn case_k_labeled_rows_are_first_k_quarters() {
        let train = generate(&SyntheticConfig::new(103, 3)).unwrap();
        let quarters = split_quarters(&train, 42).unwrap();
        for case in 1..=4u8 {
            let parts = hybrid_parts(&train, case, 42).unwrap();
            let expected: usize = quarters[..usize::from(case)].iter().map(|q| q.len()).sum();
            assert_eq!(parts.labeled.len(), expected);
            assert_eq!(parts.unlabeled.as_ref().map_or(0, |u| u.len()), 103 - expected);
            if let Some(u) = &parts.unlabeled {
                assert!(u.records().iter().all(|r| r.label.is_none()));
            }
        }
        assert!(hybrid_parts(&train, 5, 42).is_err());
    }

    #[test]
    fn periods_chunk_in_order() {
        let data = generate(&SyntheticConfig::new(10, 3)).unwrap().into_unlabeled();
        let chunks = online_periods(&data, 3).unwrap();
        assert_eq!(chunks.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![3, 3, 4]);
        assert_eq!(online_periods(&data, 10).unwrap().len(), 10);
        assert!(online_periods(&data, 0).is_err());
        assert!(online_periods(&data, 11).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::new(
            Scenario::AblationNoise { kind: NoiseKind::Uniform },
            ModelKind::CnnLoc,
            Strategy::Ssl,
            DataPaths::in_dir("/data"),
            "out".into(),
        );
        assert_eq!(cfg.noise.kind, NoiseKind::Uniform);
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let online = ExperimentConfig::new(Scenario::Online { periods: 1 }, ModelKind::SimoDnn, Strategy::Ssl, DataPaths::in_dir("/d"), "o".into());
        assert_eq!((online.ssl.alpha, online.ssl.wc), (0.9, 10.0));
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
