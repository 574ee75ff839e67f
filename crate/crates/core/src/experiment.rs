//! End-to-end experiments: data, training, enrollment and evaluation,
//! repeated with consecutive training seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, write_dataset, ProcessedAccount};
use crate::db::AccountDb;
use crate::error::{Error, Result};
use crate::eval::{average_metrics, evaluate, metrics_text, EvalReport, IdentMetrics, TOLERANCES};
use crate::net::encode_model;
use crate::synth::{generate_dataset, SynthParams};
use crate::train::{train_full, TrainConfig, TrainLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directory. When absent the dataset is generated from `synth`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthParams>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_tolerances")]
    pub tolerances: Vec<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// R: runs with training seeds `train.seed .. train.seed + R`.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_tolerances() -> Vec<usize> {
    TOLERANCES.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("experiment")
}

fn default_repetitions() -> usize {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            synth: None,
            train: TrainConfig::default(),
            tolerances: default_tolerances(),
            output: default_output(),
            repetitions: default_repetitions(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_some() && self.synth.is_some() {
            return Err(Error::Config("give either `dataset` or `synth`, not both".into()));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.train.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if self.tolerances.is_empty() || self.tolerances.iter().any(|&l| l > crate::db::MAX_TOLERANCE) {
            return Err(Error::Config(format!(
                "tolerances must be a non-empty list of values in 0..={}",
                crate::db::MAX_TOLERANCE
            )));
        }
        Ok(())
    }

    /// The dataset, preprocessed. Generated data is also written under the
    /// output directory.
    pub fn accounts(&self) -> Result<Vec<ProcessedAccount>> {
        let ds = match &self.dataset {
            Some(path) => load_dataset(path)?,
            None => {
                let params = self.synth.clone().unwrap_or_default();
                let ds = generate_dataset(&params)?;
                write_dataset(&self.output.join("dataset"), &ds, Some(&params))?;
                ds
            }
        };
        ds.preprocess()
    }
}

pub struct RunOutput {
    pub seed: u64,
    pub model: Vec<u8>,
    pub database: Vec<u8>,
    pub log: TrainLog,
    pub report: EvalReport,
    pub elapsed: Duration,
}

/// Train, enroll every account from its training split, evaluate on the
/// test split.
pub fn run_once(
    accounts: &[ProcessedAccount],
    train: &TrainConfig,
    tolerances: &[usize],
    checkpoints: Option<&Path>,
) -> Result<RunOutput> {
    let start = Instant::now();
    let out = train_full(accounts, train, checkpoints)?;
    let registrations: Vec<(u64, &[_])> = accounts.iter().map(|a| (a.id, &a.train[..])).collect();
    let db = AccountDb::build(&out.net, &registrations)?;
    let report = evaluate(&out.net, &db, accounts, tolerances)?;
    Ok(RunOutput {
        seed: train.seed,
        model: encode_model(&out.net),
        database: db.encode(),
        log: out.log,
        report,
        elapsed: start.elapsed(),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl RunOutput {
    /// `model.fmh`, `accounts.fmdb`, `train.log`, `report.txt` and `plots/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("model.fmh"), &self.model)?;
        write(&dir.join("accounts.fmdb"), &self.database)?;
        write(&dir.join("train.log"), self.log.to_text().as_bytes())?;
        write(&dir.join("report.txt"), self.report.to_text().as_bytes())?;
        self.report.write_plots(&dir.join("plots"))
    }
}

pub struct ExperimentOutput {
    pub runs: Vec<RunOutput>,
    pub average: Vec<IdentMetrics>,
}

impl ExperimentOutput {
    pub fn summary(&self) -> String {
        let mut out = format!("runs {}\nseeds", self.runs.len());
        for r in &self.runs {
            out.push_str(&format!(" {}", r.seed));
        }
        out.push_str("\n# averaged over runs\n");
        out.push_str(&metrics_text(&self.average));
        out
    }
}

/// Runs the experiment, writing each run under `output/run-<r>/` and the
/// averaged metrics to `output/summary.txt`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let accounts = cfg.accounts()?;
    let mut runs = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let train = TrainConfig {
            seed: cfg.train.seed + r as u64,
            ..cfg.train.clone()
        };
        let dir = cfg.output.join(format!("run-{r}"));
        let ckpt = dir.join("checkpoints");
        let run = run_once(&accounts, &train, &cfg.tolerances, Some(&ckpt))?;
        run.write(&dir)?;
        runs.push(run);
    }
    let per_run: Vec<Vec<IdentMetrics>> = runs.iter().map(|r| r.report.identification.clone()).collect();
    let output = ExperimentOutput {
        average: average_metrics(&per_run),
        runs,
    };
    write(&cfg.output.join("summary.txt"), output.summary().as_bytes())?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_rejections() {
        let cfg = ExperimentConfig::parse("repetitions = 2\n[train]\nhash_bits = 32\n").unwrap();
        assert_eq!(cfg.repetitions, 2);
        assert_eq!(cfg.train.hash_bits, 32);
        assert_eq!(cfg.tolerances, vec![0, 1, 2]);
        assert!(ExperimentConfig::parse("repetition = 2").is_err());
        assert!(ExperimentConfig::parse("[train]\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("tolerances = [3]").is_err());
        assert!(ExperimentConfig::parse("dataset = \"x\"\n[synth]\naccounts = 3").is_err());
        assert!(ExperimentConfig::parse("[synth]\naccounts = 1").is_err());
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn tiny_experiment_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            synth: Some(SynthParams {
                accounts: 2,
                k_train: 2,
                k_test: 1,
                ..SynthParams::default()
            }),
            train: TrainConfig {
                pairs_per_label: 1,
                pretrain_iters: 2,
                pairwise_iters: 3,
                augment_target: 4,
                checkpoint_every: 3,
                ..TrainConfig::default()
            },
            output: dir.path().to_path_buf(),
            repetitions: 2,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert_eq!((out.runs[0].seed, out.runs[1].seed), (0, 1));
        for f in ["model.fmh", "accounts.fmdb", "train.log", "report.txt", "plots/hamming_intra.txt"] {
            assert!(dir.path().join("run-1").join(f).exists(), "{f}");
        }
        assert!(dir.path().join("run-0/checkpoints/checkpoint-000005.fmh").exists());
        assert!(dir.path().join("dataset/manifest.txt").exists());
        assert!(fs::read_to_string(dir.path().join("summary.txt")).unwrap().contains("l=2"));
    }
}
