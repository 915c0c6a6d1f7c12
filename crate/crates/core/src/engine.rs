//! The setup → burn-in → inference state machine.
//!
//! The engine accumulates burn-in samples per sensor, trains every component
//! and calibrates all bounds synchronously inside the `ingest` call that
//! completes the burn-in count, and afterwards evaluates the last `n`
//! samples of each sensor on every (or every `eval_stride`-th) new sample.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::component::{burn_in_fit, BoundMode, BoundRule, ComponentModel, FittedComponent, ModelKind, SensorSpec};
use crate::data::model_file;
use crate::data::series::SegmentedSeries;
use crate::error::{Error, Result};
use crate::nn::{DaeParams, Tensor, TrainConfig};
use crate::supervisor::{AlarmEvent, JointRecord, SupervisorModel};

/// One time step of readings, keyed by sensor id.
pub type Readings = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub sensors: Vec<SensorSpec>,
    pub window_size: usize,
    /// Samples collected before the transition to inference.
    pub burn_in_length: usize,
    /// Stride between burn-in training windows.
    pub stride: usize,
    /// Inference evaluates every `eval_stride`-th sample.
    pub eval_stride: usize,
    pub bound: BoundRule,
    /// `seed` acts as the base from which every component's training seed is
    /// derived.
    pub train: TrainConfig,
}

impl EngineConfig {
    pub fn new(sensors: Vec<SensorSpec>, window_size: usize, burn_in_length: usize) -> Self {
        Self {
            sensors,
            window_size,
            burn_in_length,
            stride: 1,
            eval_stride: 1,
            bound: BoundRule::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::Config("at least one sensor must be configured".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.sensors {
            s.validate()?;
            if !seen.insert(s.sensor_id.as_str()) {
                return Err(Error::Config(format!("duplicate sensor id {}", s.sensor_id)));
            }
        }
        if self.window_size == 0 || self.stride == 0 || self.eval_stride == 0 {
            return Err(Error::Config(
                "window_size, stride and eval_stride must be positive".into(),
            ));
        }
        if self.burn_in_length < self.window_size + 1 {
            return Err(Error::Config(format!(
                "burn_in_length {} must be at least window_size + 1 = {}",
                self.burn_in_length,
                self.window_size + 1
            )));
        }
        self.bound.validate()?;
        self.train.validate()
    }

    /// Training seed of the component at `index`.
    pub fn component_seed(&self, index: usize) -> u64 {
        splitmix64(self.train.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Source of pretrained per-kind networks.
pub trait ModelStore {
    fn pretrained(&self, kind: ModelKind) -> Result<DaeParams>;
}

impl ModelStore for BTreeMap<ModelKind, DaeParams> {
    fn pretrained(&self, kind: ModelKind) -> Result<DaeParams> {
        self.get(&kind)
            .cloned()
            .ok_or_else(|| Error::Setup(format!("no pretrained model for kind {kind}")))
    }
}

/// Loads pretrained networks from model files.
#[derive(Debug, Clone, Default)]
pub struct FileModelStore {
    pub paths: BTreeMap<ModelKind, PathBuf>,
}

impl ModelStore for FileModelStore {
    fn pretrained(&self, kind: ModelKind) -> Result<DaeParams> {
        let path = self
            .paths
            .get(&kind)
            .ok_or_else(|| Error::Setup(format!("no pretrained model path for kind {kind}")))?;
        if !path.exists() {
            return Err(Error::Setup(format!(
                "pretrained model for kind {kind} not found at {}",
                path.display()
            )));
        }
        Ok(model_file::load_model(path)?.dae)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    BurnIn,
    Inference,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::BurnIn => "burn_in",
            Phase::Inference => "inference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub t: u64,
    pub phase: Phase,
    pub joint: Option<JointRecord>,
    pub alarm: Option<AlarmEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub sensor_id: String,
    pub model_kind: ModelKind,
    pub weight: f64,
    pub normalizer_mean: f64,
    pub normalizer_std: f64,
    pub normalizer_degenerate: bool,
    pub training_windows: usize,
    pub train_seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub burn_in_hi_mean: f64,
    pub burn_in_hi_std: f64,
    pub hi_upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSummary {
    pub weights: BTreeMap<String, f64>,
    pub burn_in_points: usize,
    pub burn_in_mean: f64,
    pub burn_in_std: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub window_size: usize,
    pub burn_in_length: usize,
    pub bound_mode: BoundMode,
    pub epsilon_min: f64,
    pub components: Vec<ComponentSummary>,
    pub joint: JointSummary,
}

pub struct Engine {
    config: EngineConfig,
    pretrained: BTreeMap<ModelKind, DaeParams>,
    phase: Phase,
    t: u64,
    /// Burn-in samples per sensor, as closed-or-open segments.
    burn_in: Vec<Vec<Vec<f64>>>,
    new_segment: bool,
    buffers: Vec<VecDeque<f64>>,
    components: Vec<ComponentModel>,
    supervisor: Option<SupervisorModel>,
    calibration: Option<CalibrationSummary>,
}

impl Engine {
    /// Validates the configuration and loads every referenced pretrained
    /// network. The engine starts in [`Phase::Setup`] with `t = 0`.
    pub fn new(config: EngineConfig, store: &dyn ModelStore) -> Result<Self> {
        config.validate()?;
        let mut pretrained = BTreeMap::new();
        for s in &config.sensors {
            if let std::collections::btree_map::Entry::Vacant(e) = pretrained.entry(s.model_kind) {
                let dae = store.pretrained(s.model_kind)?;
                dae.validate()?;
                if dae.window_size != config.window_size {
                    return Err(Error::Config(format!(
                        "pretrained model of kind {} has window_size {}, configuration uses {}",
                        s.model_kind, dae.window_size, config.window_size
                    )));
                }
                e.insert(dae);
            }
        }
        let k = config.sensors.len();
        Ok(Self {
            pretrained,
            phase: Phase::Setup,
            t: 0,
            burn_in: vec![Vec::new(); k],
            new_segment: true,
            buffers: vec![VecDeque::with_capacity(config.window_size); k],
            components: Vec::new(),
            supervisor: None,
            calibration: None,
            config,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn components(&self) -> &[ComponentModel] {
        &self.components
    }

    pub fn supervisor(&self) -> Option<&SupervisorModel> {
        self.supervisor.as_ref()
    }

    pub fn calibration(&self) -> Option<&CalibrationSummary> {
        self.calibration.as_ref()
    }

    pub fn num_components(&self) -> usize {
        self.config.sensors.len()
    }

    /// Starts a new contiguous segment: window buffers are cleared so no
    /// window spans the break.
    pub fn start_segment(&mut self) {
        self.new_segment = true;
        self.buffers.iter_mut().for_each(VecDeque::clear);
    }

    /// The current window buffer of sensor `index` (oldest first).
    pub fn buffer(&self, index: usize) -> Vec<f64> {
        self.buffers[index].iter().copied().collect()
    }

    fn check_readings(&self, readings: &Readings) -> Result<Vec<f64>> {
        if readings.len() != self.config.sensors.len() {
            return Err(Error::Data(format!(
                "expected readings for {} sensors, got {}",
                self.config.sensors.len(),
                readings.len()
            )));
        }
        self.config
            .sensors
            .iter()
            .map(|s| {
                let v = *readings
                    .get(&s.sensor_id)
                    .ok_or_else(|| Error::Data(format!("missing reading for sensor {}", s.sensor_id)))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite reading {v} for sensor {}",
                        s.sensor_id
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    /// Accepts one complete row of readings. Rejected rows leave the engine
    /// untouched.
    pub fn ingest(&mut self, readings: &Readings) -> Result<StepOutput> {
        let values = self.check_readings(readings)?;
        if self.phase == Phase::Setup {
            self.phase = Phase::BurnIn;
        }
        self.t += 1;

        let n = self.config.window_size;
        for (buf, &v) in self.buffers.iter_mut().zip(&values) {
            if buf.len() == n {
                buf.pop_front();
            }
            buf.push_back(v);
        }

        match self.phase {
            Phase::Setup => unreachable!("left setup above"),
            Phase::BurnIn => {
                let open_new = self.new_segment;
                for (segments, &v) in self.burn_in.iter_mut().zip(&values) {
                    if open_new || segments.is_empty() {
                        segments.push(Vec::new());
                    }
                    segments.last_mut().expect("segment opened").push(v);
                }
                self.new_segment = false;
                if self.t == self.config.burn_in_length as u64 {
                    self.finalize_burn_in()?;
                }
                Ok(StepOutput {
                    t: self.t,
                    phase: Phase::BurnIn,
                    joint: None,
                    alarm: None,
                })
            }
            Phase::Inference => {
                self.new_segment = false;
                let since = self.t - self.config.burn_in_length as u64 - 1;
                let due = since.is_multiple_of(self.config.eval_stride as u64);
                let full = self.buffers.iter().all(|b| b.len() == n);
                let (joint, alarm) = if due && full {
                    let (j, a) = self.evaluate_buffers()?;
                    (Some(j), a)
                } else {
                    (None, None)
                };
                Ok(StepOutput {
                    t: self.t,
                    phase: Phase::Inference,
                    joint,
                    alarm,
                })
            }
        }
    }

    fn evaluate_buffers(&self) -> Result<(JointRecord, Option<AlarmEvent>)> {
        let mut records = Vec::with_capacity(self.components.len());
        for (model, buf) in self.components.iter().zip(&self.buffers) {
            let window: Vec<f64> = buf.iter().copied().collect();
            records.push(model.step(&Tensor::column(&window), self.t)?);
        }
        self.supervisor
            .as_ref()
            .expect("supervisor calibrated before inference")
            .evaluate(records, self.t)
    }

    /// Trains every component on its burn-in series (in parallel), derives
    /// the joint burn-in series and calibrates the supervisor.
    pub fn finalize_burn_in(&mut self) -> Result<CalibrationSummary> {
        if self.phase != Phase::BurnIn || self.t != self.config.burn_in_length as u64 {
            return Err(Error::Config(format!(
                "burn-in can only be finalized after exactly {} samples (phase {:?}, t={})",
                self.config.burn_in_length, self.phase, self.t
            )));
        }
        let cfg = &self.config;
        let series: Vec<SegmentedSeries> = self
            .burn_in
            .iter()
            .map(|segs| SegmentedSeries::from_segments(segs.iter().enumerate().map(|(i, s)| (i as u64, s.clone()))))
            .collect::<Result<_>>()?;

        let fitted: Vec<Result<FittedComponent>> = std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .sensors
                .iter()
                .zip(&series)
                .enumerate()
                .map(|(i, (spec, s))| {
                    let pretrained = &self.pretrained[&spec.model_kind];
                    let train = TrainConfig {
                        seed: cfg.component_seed(i),
                        ..cfg.train.clone()
                    };
                    scope.spawn(move || {
                        burn_in_fit(spec, pretrained, s, cfg.window_size, cfg.stride, &train, &cfg.bound)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("component fitting panicked"))
                .collect()
        });
        let fitted: Vec<FittedComponent> = fitted.into_iter().collect::<Result<_>>()?;

        let weights: BTreeMap<String, f64> = cfg.sensors.iter().map(|s| (s.sensor_id.clone(), s.weight)).collect();
        let joint_series = joint_burn_in_series(&fitted, &weights)?;
        let supervisor = SupervisorModel::calibrate(weights.clone(), &joint_series, &cfg.bound)?;

        let components = fitted
            .iter()
            .map(|f| ComponentSummary {
                sensor_id: f.model.spec.sensor_id.clone(),
                model_kind: f.model.spec.model_kind,
                weight: f.model.spec.weight,
                normalizer_mean: f.model.normalizer.mean,
                normalizer_std: f.model.normalizer.std,
                normalizer_degenerate: f.model.normalizer.degenerate,
                training_windows: f.burn_in_his.len(),
                train_seed: f.model.train_seed,
                epochs_run: f.report.epochs_run,
                best_epoch: f.report.best_epoch,
                best_validation_loss: f.report.best_validation_loss,
                burn_in_hi_mean: f.model.burn_in_hi_mean,
                burn_in_hi_std: f.model.burn_in_hi_std,
                hi_upper_bound: f.model.hi_upper_bound,
            })
            .collect();
        let summary = CalibrationSummary {
            window_size: cfg.window_size,
            burn_in_length: cfg.burn_in_length,
            bound_mode: cfg.bound.mode,
            epsilon_min: cfg.bound.epsilon_min,
            components,
            joint: JointSummary {
                weights,
                burn_in_points: joint_series.len(),
                burn_in_mean: supervisor.joint_burn_in_mean,
                burn_in_std: supervisor.joint_burn_in_std,
                upper_bound: supervisor.joint_upper_bound,
            },
        };

        self.components = fitted.into_iter().map(|f| f.model).collect();
        self.supervisor = Some(supervisor);
        self.calibration = Some(summary.clone());
        self.burn_in.iter_mut().for_each(Vec::clear);
        self.phase = Phase::Inference;
        Ok(summary)
    }
}

/// Joint HI at every window end index shared by all components.
fn joint_burn_in_series(fitted: &[FittedComponent], weights: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let lookups: Vec<BTreeMap<usize, f64>> = fitted.iter().map(|f| f.burn_in_his.iter().copied().collect()).collect();
    let Some(first) = lookups.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(first.len());
    'idx: for &end in first.keys() {
        let mut his = BTreeMap::new();
        for (f, l) in fitted.iter().zip(&lookups) {
            match l.get(&end) {
                Some(&h) => {
                    his.insert(f.model.spec.sensor_id.clone(), h);
                }
                None => continue 'idx,
            }
        }
        out.push(crate::supervisor::joint_hi(&his, weights)?);
    }
    Ok(out)
}

/// Everything a replay produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub sensors: Vec<String>,
    pub steps: Vec<StepOutput>,
    pub calibration: Option<CalibrationSummary>,
}

impl RunLog {
    pub fn joint_records(&self) -> impl Iterator<Item = &JointRecord> {
        self.steps.iter().filter_map(|s| s.joint.as_ref())
    }

    pub fn alarms(&self) -> impl Iterator<Item = &AlarmEvent> {
        self.steps.iter().filter_map(|s| s.alarm.as_ref())
    }

    pub fn first_alarm(&self) -> Option<&AlarmEvent> {
        self.alarms().next()
    }

    /// First time step at which `trigger` (a sensor id or `"joint"`) was
    /// over its bound.
    pub fn first_crossing(&self, trigger: &str) -> Option<u64> {
        self.alarms()
            .find(|a| a.triggers.iter().any(|t| t == trigger))
            .map(|a| a.t)
    }
}

/// Feeds a per-sensor dataset through a fresh engine. All series must share
/// the same segment structure; buffers reset at every segment start.
pub fn run_replay(
    dataset: &BTreeMap<String, SegmentedSeries>,
    config: EngineConfig,
    store: &dyn ModelStore,
) -> Result<RunLog> {
    let mut engine = Engine::new(config, store)?;
    let order: Vec<&SegmentedSeries> = engine
        .config()
        .sensors
        .iter()
        .map(|s| {
            dataset
                .get(&s.sensor_id)
                .ok_or_else(|| Error::Data(format!("dataset has no series for sensor {}", s.sensor_id)))
        })
        .collect::<Result<_>>()?;
    let lengths = order[0].lengths();
    if let Some((i, _)) = order.iter().enumerate().find(|(_, s)| s.lengths() != lengths) {
        return Err(Error::Data(format!(
            "series for sensor {} does not share the common segment structure",
            engine.config().sensors[i].sensor_id
        )));
    }
    let total: usize = lengths.iter().sum();
    if total < engine.config().burn_in_length {
        return Err(Error::InsufficientData(format!(
            "dataset holds {total} samples, burn-in needs {}",
            engine.config().burn_in_length
        )));
    }

    let ids: Vec<String> = engine.config().sensors.iter().map(|s| s.sensor_id.clone()).collect();
    let mut steps = Vec::with_capacity(total);
    for (seg, &len) in lengths.iter().enumerate() {
        engine.start_segment();
        for k in 0..len {
            let readings: Readings = ids
                .iter()
                .zip(&order)
                .map(|(id, s)| (id.clone(), s.segments()[seg].samples[k]))
                .collect();
            steps.push(engine.ingest(&readings)?);
        }
    }
    Ok(RunLog {
        sensors: ids,
        steps,
        calibration: engine.calibration().cloned(),
    })
}
