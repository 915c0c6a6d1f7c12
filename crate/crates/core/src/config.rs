//! Run configuration files (TOML) and the bundled test presets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::component::{BoundMode, BoundRule, ModelKind, SensorSpec, DEFAULT_EPSILON_MIN, DEFAULT_WEIGHT};
use crate::data::cmapss::{parse_cmapss, select_series, sensor_index};
use crate::data::model_file;
use crate::data::ncmapss::{filter_cruise, parse_ncmapss_csv, ColumnMap, CruiseFilter};
use crate::data::pretrain::{pretrain_model, synth_pretrain_series};
use crate::data::series::SegmentedSeries;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::nn::{DaeParams, TrainConfig};

/// Value of a `[pretrained]` entry that requests synthetic pretraining.
pub const SYNTH_SOURCE: &str = "synth";

const PRESETS: [(&str, &str); 13] = [
    ("cmapss-t1", include_str!("../presets/cmapss-t1.toml")),
    ("cmapss-t2", include_str!("../presets/cmapss-t2.toml")),
    ("cmapss-t3", include_str!("../presets/cmapss-t3.toml")),
    ("cmapss-t4", include_str!("../presets/cmapss-t4.toml")),
    ("cmapss-t5", include_str!("../presets/cmapss-t5.toml")),
    ("cmapss-t6", include_str!("../presets/cmapss-t6.toml")),
    ("cmapss-t7", include_str!("../presets/cmapss-t7.toml")),
    ("cmapss-t8", include_str!("../presets/cmapss-t8.toml")),
    ("ncmapss-t1", include_str!("../presets/ncmapss-t1.toml")),
    ("ncmapss-t2", include_str!("../presets/ncmapss-t2.toml")),
    ("ncmapss-t3", include_str!("../presets/ncmapss-t3.toml")),
    ("ncmapss-t4", include_str!("../presets/ncmapss-t4.toml")),
    ("ncmapss-t5", include_str!("../presets/ncmapss-t5.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses and validates a bundled preset.
pub fn preset(name: &str) -> Result<RunConfigFile> {
    let src = preset_source(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset {name:?}; available: {}",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    RunConfigFile::from_toml(src)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Cmapss,
    NcmapssCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvColumns {
    #[serde(default)]
    pub time: Option<String>,
    pub altitude: String,
    pub flight: String,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub format: DatasetFormat,
    pub path: PathBuf,
    /// CMAPSS engine unit, or the N-CMAPSS unit kept when `columns.unit` is set.
    #[serde(default)]
    pub unit: Option<u32>,
    #[serde(default)]
    pub columns: Option<CsvColumns>,
    #[serde(default)]
    pub filter: Option<CruiseFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorEntry {
    pub name: String,
    pub model_kind: ModelKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    DEFAULT_WEIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineBlock {
    pub window_size: usize,
    pub burn_in_length: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub eval_stride: usize,
    #[serde(default)]
    pub bound_mode: BoundMode,
    #[serde(default = "default_epsilon")]
    pub epsilon_min: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_MIN
}

/// Training hyperparameters; the seed comes from `[engine]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBlock {
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub validation_fraction: Option<f64>,
}

impl TrainingBlock {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            seed,
        }
    }
}

/// Settings for `"synth"` pretrained sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainingBlock {
    pub length: usize,
    pub max_epochs: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for PretrainingBlock {
    fn default() -> Self {
        Self {
            length: 3000,
            max_epochs: 200,
            stride: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// RunLog CSV; events CSV and calibration JSON are written beside it.
    pub log: PathBuf,
    #[serde(default)]
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub dataset: DatasetBlock,
    pub sensors: Vec<SensorEntry>,
    pub engine: EngineBlock,
    #[serde(default)]
    pub training: TrainingBlock,
    /// Model file path or `"synth"` per model kind.
    pub pretrained: BTreeMap<ModelKind, String>,
    #[serde(default)]
    pub pretraining: PretrainingBlock,
    pub output: OutputBlock,
}

fn field_err(field: impl AsRef<str>, msg: impl AsRef<str>) -> Error {
    Error::Config(format!("{}: {}", field.as_ref(), msg.as_ref()))
}

/// Resolves `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfigFile {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.format {
            DatasetFormat::Cmapss => {
                if d.unit.is_none() {
                    return Err(field_err("dataset.unit", "required for the cmapss format"));
                }
                if d.columns.is_some() || d.filter.is_some() {
                    return Err(field_err("dataset", "columns and filter apply only to ncmapss_csv"));
                }
            }
            DatasetFormat::NcmapssCsv => {
                let cols = d
                    .columns
                    .as_ref()
                    .ok_or_else(|| field_err("dataset.columns", "required for the ncmapss_csv format"))?;
                if d.unit.is_some() && cols.unit.is_none() {
                    return Err(field_err("dataset.columns.unit", "required when dataset.unit is set"));
                }
                if let Some(f) = &d.filter {
                    if !(f.alt_min.is_finite() && f.alt_max.is_finite() && f.alt_min <= f.alt_max) {
                        return Err(field_err("dataset.filter", "alt_min must not exceed alt_max"));
                    }
                    if f.min_len == 0 {
                        return Err(field_err("dataset.filter.min_len", "must be positive"));
                    }
                }
            }
        }
        if self.sensors.is_empty() {
            return Err(field_err("sensors", "at least one sensor is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.sensors.iter().enumerate() {
            if s.name.is_empty() {
                return Err(field_err(format!("sensors[{i}].name"), "must not be empty"));
            }
            if !seen.insert(&s.name) {
                return Err(field_err(
                    format!("sensors[{i}].name"),
                    format!("duplicate sensor {}", s.name),
                ));
            }
            if !(s.weight > 0.0 && s.weight.is_finite()) {
                return Err(field_err(
                    format!("sensors[{i}].weight"),
                    format!("must be positive, got {}", s.weight),
                ));
            }
            if d.format == DatasetFormat::Cmapss && sensor_index(&s.name).is_none() {
                return Err(field_err(
                    format!("sensors[{i}].name"),
                    format!("{:?} is not a CMAPSS sensor", s.name),
                ));
            }
            if !self.pretrained.contains_key(&s.model_kind) {
                return Err(field_err(
                    format!("pretrained.{}", s.model_kind),
                    format!("required by sensor {}", s.name),
                ));
            }
        }
        for (kind, src) in &self.pretrained {
            if src.is_empty() {
                return Err(field_err(format!("pretrained.{kind}"), "must be a path or \"synth\""));
            }
        }
        let p = &self.pretraining;
        if p.length < 2 || p.max_epochs == 0 || p.stride == 0 {
            return Err(field_err(
                "pretraining",
                "length must be at least 2; max_epochs and stride must be positive",
            ));
        }
        self.engine_config().validate().map_err(|e| match e {
            Error::Config(m) => field_err("engine/training", m),
            other => other,
        })
    }

    pub fn bound_rule(&self) -> BoundRule {
        BoundRule {
            mode: self.engine.bound_mode,
            epsilon_min: self.engine.epsilon_min,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.training.to_train_config(self.engine.seed)
    }

    pub fn engine_config(&self) -> EngineConfig {
        let sensors = self
            .sensors
            .iter()
            .map(|s| SensorSpec::new(s.name.clone(), s.model_kind).with_weight(s.weight))
            .collect();
        let mut c = EngineConfig::new(sensors, self.engine.window_size, self.engine.burn_in_length);
        c.stride = self.engine.stride;
        c.eval_stride = self.engine.eval_stride;
        c.bound = self.bound_rule();
        c.train = self.train_config();
        c
    }

    pub fn sensor_names(&self) -> Vec<String> {
        self.sensors.iter().map(|s| s.name.clone()).collect()
    }

    /// Reads the dataset and returns one series per configured sensor.
    pub fn load_dataset(&self, base: &Path) -> Result<BTreeMap<String, SegmentedSeries>> {
        let path = resolve(base, &self.dataset.path);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let names = self.sensor_names();
        match self.dataset.format {
            DatasetFormat::Cmapss => {
                let records = parse_cmapss(BufReader::new(file))?;
                let unit = self.dataset.unit.expect("validated");
                names
                    .iter()
                    .map(|n| select_series(&records, unit, n).map(|s| (n.clone(), s)))
                    .collect()
            }
            DatasetFormat::NcmapssCsv => {
                let cols = self.dataset.columns.as_ref().expect("validated");
                let map = ColumnMap {
                    time: cols.time.clone(),
                    altitude: cols.altitude.clone(),
                    flight: cols.flight.clone(),
                    unit: cols.unit.clone(),
                    sensors: names.clone(),
                };
                let mut records = parse_ncmapss_csv(BufReader::new(file), &map)?;
                if let Some(unit) = self.dataset.unit {
                    records.retain(|r| r.unit == Some(i64::from(unit)));
                    if records.is_empty() {
                        return Err(Error::Data(format!("unit {unit} not present in dataset")));
                    }
                }
                filter_cruise(&records, &self.dataset.filter.unwrap_or_default(), &names)
            }
        }
    }

    /// Pretrained network for every configured kind: loaded from its model
    /// file, or trained on synthetic data for `"synth"`. Synthetic kinds
    /// train concurrently and each result depends only on its kind.
    pub fn pretrained_models(&self, base: &Path) -> Result<BTreeMap<ModelKind, DaeParams>> {
        let synth: Vec<ModelKind> = self
            .pretrained
            .iter()
            .filter(|(_, src)| src.as_str() == SYNTH_SOURCE)
            .map(|(k, _)| *k)
            .collect();
        let mut trained: BTreeMap<ModelKind, DaeParams> = std::thread::scope(|scope| {
            let handles: Vec<_> = synth
                .iter()
                .map(|&k| (k, scope.spawn(move || self.synth_pretrained(k))))
                .collect();
            handles
                .into_iter()
                .map(|(k, h)| {
                    let model = h
                        .join()
                        .map_err(|_| Error::Training(format!("pretraining {k} panicked")))??;
                    Ok((k, model.dae))
                })
                .collect::<Result<_>>()
        })?;
        let mut out = BTreeMap::new();
        for (kind, src) in &self.pretrained {
            let dae = if src == SYNTH_SOURCE {
                trained.remove(kind).expect("trained above")
            } else {
                let path = resolve(base, Path::new(src));
                if !path.exists() {
                    return Err(Error::Setup(format!(
                        "pretrained model for kind {kind} not found at {}",
                        path.display()
                    )));
                }
                model_file::load_model_for_window(&path, self.engine.window_size)?.dae
            };
            out.insert(*kind, dae);
        }
        Ok(out)
    }

    fn synth_pretrained(&self, kind: ModelKind) -> Result<crate::component::ComponentModel> {
        let p = &self.pretraining;
        let series = synth_pretrain_series(kind, p.length, p.seed);
        let mut config = self.training.to_train_config(p.seed);
        config.max_epochs = p.max_epochs;
        pretrain_model(
            kind,
            &series,
            self.engine.window_size,
            p.stride,
            &config,
            &self.bound_rule(),
        )
    }
}
