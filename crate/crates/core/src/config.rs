//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment. Keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `dataset.source` | `synth` | `synth` or `csv` |
//! | `dataset.path` | | CSV file (`label,f1,f2,...` after a header) |
//! | `dataset.n` | 1000 | synthetic samples |
//! | `dataset.dim` | 16 | channels per position |
//! | `dataset.classes` | 4 | synthetic classes |
//! | `dataset.anisotropy` | 1e3 | eigenvalue spread of the class covariance |
//! | `dataset.val_fraction` | 0.2 | share held out for validation |
//! | `model.head` | `gcp` | `gcp`, `whiten` or `linear` |
//! | `model.d` | 8 | output channels of the Pre-SVD layer |
//! | `model.positions` | 32 | spatial positions per sample (`gcp` only) |
//! | `treatments.sn`, `.ol`, `.ow`, `.nog`, `.olr` | `false` | single-run flags |
//! | `treatments.ol_weight` | 1e-3 | orthogonality-loss coefficient |
//! | `treatments.sweep` | | comma-separated labels, e.g. `svd, nog, ow, ow+nog+olr` |
//! | `run.seed` | 0 | data, initialization and batch order |
//! | `run.epochs` | 20 | |
//! | `run.lr` | 0.3 | base learning rate |
//! | `run.batch` | 32 | |
//! | `run.momentum` | 0 | |
//! | `run.retries` | 3 | jittered eigensolver retries per step |
//! | `run.stabilizer_eps` | 1e-12 | relative SOFT_K epsilon; 0 disables it |
//! | `out.dir` | `out` | output directory |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ortho::{TreatmentConfig, DEFAULT_OL_WEIGHT};
use crate::svdlayer::GradStabilizer;
use crate::trainer::{self, Dataset, HeadMode, ToyModel, TrainOptions, TrainTrace};

const DEFAULT_LR: f64 = 0.3;
const DEFAULT_POSITIONS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub anisotropy: f64,
    pub val_fraction: f64,
    pub head: HeadMode,
    pub d: usize,
    /// One entry per run; a sweep lists several.
    pub treatments: Vec<TreatmentConfig>,
    pub options: TrainOptions,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lr = DEFAULT_LR;
        Self {
            source: DataSource::Synthetic,
            n: 1000,
            dim: 16,
            classes: 4,
            anisotropy: 1e3,
            val_fraction: 0.2,
            head: HeadMode::Gcp { positions: DEFAULT_POSITIONS },
            d: 8,
            treatments: vec![TreatmentConfig::baseline(lr)],
            options: TrainOptions {
                epochs: 20,
                batch_size: 32,
                ..TrainOptions::default()
            },
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Treatment set from a label such as `svd`, `nog` or `ow+nog+olr`.
pub fn parse_treatment_label(label: &str, base_lr: f64, ol_weight: f64) -> Result<TreatmentConfig> {
    let mut t = TreatmentConfig::baseline(base_lr);
    for part in label.split('+').map(str::trim) {
        match part {
            "svd" => {}
            "sn" => t.use_sn = true,
            "ol" => t.ol_weight = Some(ol_weight),
            "ow" => t.use_ow = true,
            "nog" => t.use_nog = true,
            "olr" => t.use_olr = true,
            other => return Err(Error::Config(format!("unknown treatment `{other}`"))),
        }
    }
    Ok(t)
}

struct Entry {
    line: usize,
    column: usize,
    value: String,
}

fn bad(entry: &Entry, message: String) -> Error {
    Error::Parse {
        line: entry.line,
        column: entry.column,
        message,
    }
}

fn parse_value<T: std::str::FromStr>(entry: &Entry, key: &str) -> Result<T> {
    entry
        .value
        .parse()
        .map_err(|_| bad(entry, format!("invalid value `{}` for {key}", entry.value)))
}

fn parse_bool(entry: &Entry, key: &str) -> Result<bool> {
    match entry.value.as_str() {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(bad(entry, format!("invalid boolean `{}` for {key}", entry.value))),
    }
}

const KEYS: &[&str] = &[
    "dataset.source",
    "dataset.path",
    "dataset.n",
    "dataset.dim",
    "dataset.classes",
    "dataset.anisotropy",
    "dataset.val_fraction",
    "model.head",
    "model.d",
    "model.positions",
    "treatments.sn",
    "treatments.ol",
    "treatments.ol_weight",
    "treatments.ow",
    "treatments.nog",
    "treatments.olr",
    "treatments.sweep",
    "run.seed",
    "run.epochs",
    "run.lr",
    "run.batch",
    "run.momentum",
    "run.retries",
    "run.stabilizer_eps",
    "out.dir",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        // Relative data paths resolve against the config file.
        if let DataSource::Csv(p) = &cfg.source {
            if p.is_relative() {
                if let Some(parent) = path.parent() {
                    cfg.source = DataSource::Csv(parent.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(Error::Parse {
                    line,
                    column: 1,
                    message: "expected `key = value`".into(),
                });
            };
            let key = content[..eq].trim();
            let value = content[eq + 1..].trim();
            let key_column = content.len() - content.trim_start().len() + 1;
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(Error::Parse {
                    line,
                    column: key_column,
                    message: format!("unknown key `{key}`"),
                });
            };
            let value_column = eq + 2 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
            if value.is_empty() {
                return Err(Error::Parse {
                    line,
                    column: value_column,
                    message: format!("missing value for {key}"),
                });
            }
            if let Some(prev) = entries.get(known) {
                return Err(Error::Parse {
                    line,
                    column: key_column,
                    message: format!("{key} already set on line {}", prev.line),
                });
            }
            entries.insert(
                known,
                Entry {
                    line,
                    column: value_column,
                    value: value.to_string(),
                },
            );
        }

        let mut cfg = Self::default();
        let get = |k: &str| entries.get(k);
        if let Some(e) = get("dataset.source") {
            cfg.source = match e.value.as_str() {
                "synth" => DataSource::Synthetic,
                "csv" => {
                    let path = get("dataset.path").ok_or_else(|| {
                        bad(e, "dataset.source = csv requires dataset.path".into())
                    })?;
                    DataSource::Csv(PathBuf::from(&path.value))
                }
                other => return Err(bad(e, format!("unknown dataset source `{other}`"))),
            };
        } else if let Some(e) = get("dataset.path") {
            return Err(bad(e, "dataset.path requires dataset.source = csv".into()));
        }
        if let Some(e) = get("dataset.n") {
            cfg.n = parse_value(e, "dataset.n")?;
        }
        if let Some(e) = get("dataset.dim") {
            cfg.dim = parse_value(e, "dataset.dim")?;
        }
        if let Some(e) = get("dataset.classes") {
            cfg.classes = parse_value(e, "dataset.classes")?;
        }
        if let Some(e) = get("dataset.anisotropy") {
            cfg.anisotropy = parse_value(e, "dataset.anisotropy")?;
            if !(cfg.anisotropy >= 1.0 && cfg.anisotropy.is_finite()) {
                return Err(bad(e, "dataset.anisotropy must be ≥ 1".into()));
            }
        }
        if let Some(e) = get("dataset.val_fraction") {
            cfg.val_fraction = parse_value(e, "dataset.val_fraction")?;
            if !(0.0..1.0).contains(&cfg.val_fraction) {
                return Err(bad(e, "dataset.val_fraction must be in [0, 1)".into()));
            }
        }
        let positions = match get("model.positions") {
            Some(e) => {
                let p: usize = parse_value(e, "model.positions")?;
                if p == 0 {
                    return Err(bad(e, "model.positions must be positive".into()));
                }
                p
            }
            None => DEFAULT_POSITIONS,
        };
        if let Some(e) = get("model.head") {
            cfg.head = match e.value.as_str() {
                "gcp" => HeadMode::Gcp { positions },
                "whiten" => HeadMode::Whiten,
                "linear" => HeadMode::Linear,
                other => return Err(bad(e, format!("unknown head `{other}`"))),
            };
        } else {
            cfg.head = HeadMode::Gcp { positions };
        }
        if let Some(e) = get("model.d") {
            cfg.d = parse_value(e, "model.d")?;
            if cfg.d == 0 {
                return Err(bad(e, "model.d must be positive".into()));
            }
        }

        if let Some(e) = get("run.seed") {
            cfg.options.seed = parse_value(e, "run.seed")?;
        }
        if let Some(e) = get("run.epochs") {
            cfg.options.epochs = parse_value(e, "run.epochs")?;
        }
        if let Some(e) = get("run.batch") {
            cfg.options.batch_size = parse_value(e, "run.batch")?;
            if cfg.options.batch_size < 2 {
                return Err(bad(e, "run.batch must be at least 2".into()));
            }
        }
        if let Some(e) = get("run.momentum") {
            cfg.options.momentum = parse_value(e, "run.momentum")?;
            if !(0.0..1.0).contains(&cfg.options.momentum) {
                return Err(bad(e, "run.momentum must be in [0, 1)".into()));
            }
        }
        if let Some(e) = get("run.retries") {
            cfg.options.retries = parse_value(e, "run.retries")?;
        }
        if let Some(e) = get("run.stabilizer_eps") {
            let eps: f64 = parse_value(e, "run.stabilizer_eps")?;
            cfg.options.stabilizer = if eps == 0.0 {
                GradStabilizer::none()
            } else {
                GradStabilizer::soft_k(eps).map_err(|err| bad(e, err.to_string()))?
            };
        }
        let mut lr = DEFAULT_LR;
        if let Some(e) = get("run.lr") {
            lr = parse_value(e, "run.lr")?;
            if !(lr.is_finite() && lr > 0.0) {
                return Err(bad(e, "run.lr must be finite and positive".into()));
            }
        }
        let mut ol_weight = DEFAULT_OL_WEIGHT;
        if let Some(e) = get("treatments.ol_weight") {
            ol_weight = parse_value(e, "treatments.ol_weight")?;
            if !(ol_weight.is_finite() && ol_weight >= 0.0) {
                return Err(bad(e, "treatments.ol_weight must be non-negative".into()));
            }
        }
        if let Some(e) = get("treatments.sweep") {
            for flag in ["sn", "ol", "ow", "nog", "olr"] {
                if let Some(f) = get(&format!("treatments.{flag}")) {
                    return Err(bad(f, "single-run flags cannot be combined with treatments.sweep".into()));
                }
            }
            let mut runs = Vec::new();
            for label in e.value.split(',').map(str::trim) {
                let t = parse_treatment_label(label, lr, ol_weight).map_err(|err| bad(e, err.to_string()))?;
                t.validate().map_err(|err| bad(e, err.to_string()))?;
                if runs.iter().any(|r: &TreatmentConfig| r.label() == t.label()) {
                    return Err(bad(e, format!("treatment `{label}` listed twice")));
                }
                runs.push(t);
            }
            cfg.treatments = runs;
        } else {
            let mut t = TreatmentConfig::baseline(lr);
            let flag = |name: &str| -> Result<bool> {
                get(&format!("treatments.{name}")).map_or(Ok(false), |e| parse_bool(e, name))
            };
            t.use_sn = flag("sn")?;
            t.ol_weight = flag("ol")?.then_some(ol_weight);
            t.use_ow = flag("ow")?;
            t.use_nog = flag("nog")?;
            t.use_olr = flag("olr")?;
            if let Err(err) = t.validate() {
                let anchor = get("treatments.ow").or(get("treatments.ol")).or(get("run.lr"));
                return Err(match anchor {
                    Some(a) => bad(a, err.to_string()),
                    None => err,
                });
            }
            cfg.treatments = vec![t];
        }
        if let Some(e) = get("out.dir") {
            cfg.out_dir = PathBuf::from(&e.value);
        }
        Ok(cfg)
    }

    pub fn positions(&self) -> usize {
        match self.head {
            HeadMode::Gcp { positions } => positions,
            _ => 1,
        }
    }

    /// Training and validation splits.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let data = match &self.source {
            DataSource::Synthetic => trainer::synth_maps(
                self.options.seed,
                self.n,
                self.dim,
                self.positions(),
                self.classes,
                self.anisotropy,
            )?,
            DataSource::Csv(path) => Dataset::from_csv(path)?,
        };
        data.split(self.val_fraction)
    }

    /// Trains a fresh model under `treatments`. Runs sharing a seed see the
    /// same data and batch order.
    pub fn run(&self, train: &Dataset, validation: &Dataset, treatments: &TreatmentConfig) -> Result<TrainTrace> {
        let mut rng = crate::random::rng(self.options.seed);
        let mut model = ToyModel::new(
            &mut rng,
            train.dim(),
            self.d,
            train.classes,
            self.head,
            treatments.use_ow,
        )?;
        trainer::train(&mut model, train, validation, treatments, &self.options)
    }

    /// Every configured run, one thread each; results keep the sweep order.
    pub fn run_all(&self) -> Result<Vec<TrainTrace>> {
        let (train, validation) = self.load_data()?;
        let (train, validation) = (&train, &validation);
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .treatments
                .iter()
                .map(|t| scope.spawn(move || self.run(train, validation, t)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(ExperimentConfig::parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sweep_and_flags() {
        let cfg = ExperimentConfig::parse("run.lr = 0.5\ntreatments.sweep = svd, nog, ow+nog+olr\n").unwrap();
        let labels: Vec<String> = cfg.treatments.iter().map(|t| t.label()).collect();
        assert_eq!(labels, ["svd", "nog", "ow+nog+olr"]);
        assert!(cfg.treatments.iter().all(|t| t.base_lr == 0.5));

        let cfg = ExperimentConfig::parse("treatments.nog = true\ntreatments.olr = on").unwrap();
        assert_eq!(cfg.treatments[0].label(), "nog+olr");
    }

    #[test]
    fn errors_are_line_anchored() {
        let err = ExperimentConfig::parse("run.seed = 1\n  model.dd = 3\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                column: 3,
                message: "unknown key `model.dd`".into()
            }
        );
        let err = ExperimentConfig::parse("run.epochs = many").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 14, .. }), "{err:?}");
        let err = ExperimentConfig::parse("run.seed = 1\nrun.seed = 2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ExperimentConfig::parse("treatments.ow = true\ntreatments.ol = true").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = ExperimentConfig::parse("junk").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn treatment_labels() {
        let t = parse_treatment_label("ow+nog+olr", 0.1, 1e-3).unwrap();
        assert!(t.use_ow && t.use_nog && t.use_olr && !t.use_sn);
        assert!(parse_treatment_label("magic", 0.1, 1e-3).is_err());
    }
}
