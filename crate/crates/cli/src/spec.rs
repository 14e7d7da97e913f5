//! Run specifications, presets, dataset resolution and config hashing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smlp_core::dataio::{load_mnist_idx, load_sparse, permutation, split_and_shuffle};
use smlp_core::net::TRAIN_INIT_STD;
use smlp_core::{Dataset, TrainConfig, UpdateRule};

/// Environment variable naming the dataset root directory.
pub const DATA_ENV: &str = "SMLP_DATA";

/// Held-out samples cut from a single-file subset when no test file exists.
pub const DEFAULT_HOLDOUT: usize = 1000;

/// Seed of the train/test split; fixed so that runs with different training
/// seeds still see the same held-out samples.
pub const SPLIT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// A directory holding either the four standard MNIST IDX files or the
    /// `subset-images-idx3-ubyte` / `subset-labels-idx1-ubyte` pair.
    Mnist { dir: PathBuf },
    /// Sparse `label idx:val ...` text files.
    Sparse {
        train: PathBuf,
        test: PathBuf,
        n_features: Option<usize>,
    },
}

impl DataSource {
    pub fn default_mnist() -> Self {
        DataSource::Mnist {
            dir: data_root().join("mnist"),
        }
    }
}

/// `$SMLP_DATA`, or `./data` when unset.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Minutes on one core: [784,200,200,10], FSGD, 1 epoch on 10k samples.
    Desk,
    /// [784,300,300,10], FSGD, 50 epochs on all of MNIST.
    Full,
    /// [784,200,200,10], SGD, 50 epochs on all of MNIST.
    FullSgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub init_std: f64,
    pub epochs: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Timesteps used when evaluating the spiking network; defaults to the training `T`.
    pub eval_t: Option<usize>,
    /// Train or evaluate the dense network instead of the spiking one.
    pub oracle: bool,
    /// Learning rate of the dense network.
    pub oracle_eta: f64,
    pub init_from: Option<PathBuf>,
    pub eval_only: bool,
    pub data: DataSource,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl RunSpec {
    pub fn preset(preset: Preset) -> Self {
        let base = RunSpec {
            arch: vec![784, 200, 200, 10],
            train: TrainConfig {
                update_rule: UpdateRule::Fsgd,
                ..TrainConfig::default()
            },
            init_std: TRAIN_INIT_STD,
            epochs: 1,
            train_limit: Some(10_000),
            test_limit: Some(DEFAULT_HOLDOUT),
            eval_t: None,
            oracle: false,
            oracle_eta: 0.02,
            init_from: None,
            eval_only: false,
            data: DataSource::default_mnist(),
        };
        match preset {
            Preset::Desk => base,
            Preset::Full => RunSpec {
                arch: vec![784, 300, 300, 10],
                epochs: 50,
                train_limit: None,
                test_limit: None,
                ..base
            },
            Preset::FullSgd => RunSpec {
                train: TrainConfig {
                    update_rule: UpdateRule::Sgd,
                    ..base.train.clone()
                },
                epochs: 50,
                train_limit: None,
                test_limit: None,
                ..base
            },
        }
    }

    pub fn eval_steps(&self) -> usize {
        self.eval_t.unwrap_or(self.train.t_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch.len() < 2 || self.arch.contains(&0) {
            bail!("architecture needs at least two nonzero layer sizes, got {:?}", self.arch);
        }
        self.train.validate()?;
        if !self.init_std.is_finite() || self.init_std < 0.0 {
            bail!("init std must be finite and non-negative, got {}", self.init_std);
        }
        if !self.oracle_eta.is_finite() || self.oracle_eta < 0.0 {
            bail!("dense learning rate must be finite and non-negative, got {}", self.oracle_eta);
        }
        if self.eval_t == Some(0) {
            bail!("evaluation timesteps must be at least 1");
        }
        if !self.eval_only && self.epochs == 0 {
            bail!("epochs must be at least 1 (use --eval-only to skip training)");
        }
        if self.eval_only && self.init_from.is_none() {
            bail!("--eval-only needs --init-from");
        }
        Ok(())
    }
}

/// Hex SHA-256 prefix of the canonical JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("configs serialize");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

fn require(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        bail!("missing data file {}", path.display());
    }
    Ok(path)
}

/// Load `(train, test)` for a run, applying the sample limits.
pub fn load_datasets(data: &DataSource, train_limit: Option<usize>, test_limit: Option<usize>) -> Result<(Dataset, Dataset)> {
    let (train, test) = match data {
        DataSource::Mnist { dir } => load_mnist_dir(dir, test_limit)?,
        DataSource::Sparse { train, test, n_features } => {
            let tr = load_sparse(require(train)?, *n_features)?;
            let te = load_sparse(require(test)?, Some(n_features.unwrap_or(tr.n_features)))?;
            if te.n_features > tr.n_features {
                bail!("test file has {} features, training file {}", te.n_features, tr.n_features);
            }
            let n_classes = tr.n_classes.max(te.n_classes);
            let widen = |d: Dataset, n_features| Dataset::new(d.samples, n_features, n_classes);
            let nf = tr.n_features;
            (widen(tr, nf)?, widen(te, nf)?)
        }
    };
    let train = match train_limit {
        Some(n) => train.take(n),
        None => train,
    };
    let test = match test_limit {
        Some(n) => test.take(n),
        None => test,
    };
    if train.is_empty() || test.is_empty() {
        bail!("empty dataset after limits: {} train, {} test", train.len(), test.len());
    }
    Ok((train, test))
}

fn load_mnist_dir(dir: &Path, test_limit: Option<usize>) -> Result<(Dataset, Dataset)> {
    let full = dir.join("train-images-idx3-ubyte");
    if full.is_file() {
        let train = load_mnist_idx(&full, require(&dir.join("train-labels-idx1-ubyte"))?)
            .with_context(|| format!("loading {}", dir.display()))?;
        let test = load_mnist_idx(
            require(&dir.join("t10k-images-idx3-ubyte"))?,
            require(&dir.join("t10k-labels-idx1-ubyte"))?,
        )?;
        let train = train.subset(&permutation(train.len(), SPLIT_SEED));
        return Ok((train, test));
    }
    let images = dir.join("subset-images-idx3-ubyte");
    if !images.is_file() {
        bail!(
            "no MNIST files in {} (expected train-images-idx3-ubyte or subset-images-idx3-ubyte; set {DATA_ENV} or --data-dir)",
            dir.display()
        );
    }
    let all = load_mnist_idx(&images, require(&dir.join("subset-labels-idx1-ubyte"))?)?;
    let holdout = test_limit.unwrap_or(DEFAULT_HOLDOUT);
    if holdout == 0 || holdout >= all.len() {
        bail!("cannot hold out {holdout} of {} samples", all.len());
    }
    let ratio = (all.len() - holdout) as f64 / all.len() as f64;
    Ok(split_and_shuffle(&all, ratio, SPLIT_SEED)?)
}
