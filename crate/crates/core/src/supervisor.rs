//! Joint health indicator and alarm publication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::component::{BoundCalibration, BoundRule, HiRecord};
use crate::error::{Error, Result};

pub const JOINT_TRIGGER: &str = "joint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorModel {
    pub weights: BTreeMap<String, f64>,
    pub joint_upper_bound: f64,
    pub joint_burn_in_mean: f64,
    pub joint_burn_in_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub t: u64,
    pub joint_hi: f64,
    pub over_bound: bool,
    pub component_records: Vec<HiRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub t: u64,
    /// Sensor ids whose HI left its region, then `"joint"` if the joint HI did.
    pub triggers: Vec<String>,
}

/// Weighted average `Σ wᵢ·HIᵢ / Σ wᵢ`.
pub fn joint_hi(his: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> Result<f64> {
    if his.is_empty() {
        return Err(Error::Config("joint HI of zero components".into()));
    }
    if his.len() != weights.len() || his.keys().any(|k| !weights.contains_key(k)) {
        return Err(Error::Config(format!(
            "HI sensors {:?} do not match weighted sensors {:?}",
            his.keys().collect::<Vec<_>>(),
            weights.keys().collect::<Vec<_>>()
        )));
    }
    let first = weights[his.keys().next().expect("non-empty")];
    if his.keys().all(|k| weights[k] == first) {
        // Equal weights cancel: plain mean.
        return Ok(his.values().sum::<f64>() / his.len() as f64);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (id, hi) in his {
        let w = weights[id];
        num += w * hi;
        den += w;
    }
    Ok(num / den)
}

/// Same statistics and bound rule as the component models.
pub fn calibrate_joint_bound(series: &[f64], rule: &BoundRule) -> Result<BoundCalibration> {
    rule.calibrate(series)
}

impl SupervisorModel {
    /// Validates the weights and calibrates the joint bound from the
    /// burn-in joint HI series.
    pub fn calibrate(weights: BTreeMap<String, f64>, burn_in_joint: &[f64], rule: &BoundRule) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("supervisor needs at least one sensor".into()));
        }
        if let Some((id, w)) = weights.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!(
                "weight of sensor {id} must be positive, got {w}"
            )));
        }
        let cal = calibrate_joint_bound(burn_in_joint, rule)?;
        Ok(Self {
            weights,
            joint_upper_bound: cal.bound,
            joint_burn_in_mean: cal.mean,
            joint_burn_in_std: cal.std,
        })
    }

    pub fn joint_hi(&self, his: &BTreeMap<String, f64>) -> Result<f64> {
        joint_hi(his, &self.weights)
    }

    /// Combines one step's component records and decides whether an alarm
    /// is published.
    pub fn evaluate(&self, component_records: Vec<HiRecord>, t: u64) -> Result<(JointRecord, Option<AlarmEvent>)> {
        let mut his = BTreeMap::new();
        for r in &component_records {
            if his.insert(r.sensor_id.clone(), r.hi).is_some() {
                return Err(Error::Config(format!("duplicate record for sensor {}", r.sensor_id)));
            }
        }
        if let Some(missing) = self.weights.keys().find(|k| !his.contains_key(*k)) {
            return Err(Error::Config(format!("no HI record for sensor {missing} at t={t}")));
        }
        let joint = self.joint_hi(&his)?;
        let over = joint > self.joint_upper_bound;

        let mut triggers: Vec<String> = component_records
            .iter()
            .filter(|r| r.over_bound)
            .map(|r| r.sensor_id.clone())
            .collect();
        if over {
            triggers.push(JOINT_TRIGGER.to_string());
        }
        let alarm = (!triggers.is_empty()).then_some(AlarmEvent { t, triggers });
        Ok((
            JointRecord {
                t,
                joint_hi: joint,
                over_bound: over,
                component_records,
            },
            alarm,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn rec(id: &str, hi: f64, over: bool) -> HiRecord {
        HiRecord {
            sensor_id: id.into(),
            t: 1,
            hi,
            over_bound: over,
        }
    }

    fn sup(bound: f64) -> SupervisorModel {
        SupervisorModel {
            weights: map(&[("a", 0.5), ("b", 0.5)]),
            joint_upper_bound: bound,
            joint_burn_in_mean: 0.0,
            joint_burn_in_std: 0.0,
        }
    }

    #[test]
    fn joint_examples() {
        let w = map(&[("a", 0.5), ("b", 0.5)]);
        let j = joint_hi(&map(&[("a", 0.2), ("b", 0.4)]), &w).unwrap();
        assert!((j - 0.3).abs() < 1e-15);
        let j3 = joint_hi(
            &map(&[("a", 0.1), ("b", 0.2), ("c", 0.3)]),
            &map(&[("a", 0.6), ("b", 0.2), ("c", 0.2)]),
        )
        .unwrap();
        assert!((j3 - 0.16).abs() < 1e-15);
        let single = joint_hi(&map(&[("z", 0.7)]), &map(&[("z", 3.0)])).unwrap();
        assert!((single - 0.7).abs() < 1e-15);
    }

    #[test]
    fn joint_key_errors() {
        let w = map(&[("a", 0.5)]);
        assert!(matches!(joint_hi(&BTreeMap::new(), &w), Err(Error::Config(_))));
        assert!(matches!(joint_hi(&map(&[("b", 0.1)]), &w), Err(Error::Config(_))));
    }

    #[test]
    fn joint_bound_examples() {
        let rule = BoundRule::default();
        let cal = calibrate_joint_bound(&[0.0, 2.0], &rule).unwrap();
        assert!((cal.bound - 9.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(calibrate_joint_bound(&[0.4; 5], &rule).unwrap().bound, rule.epsilon_min);
        let base = [0.1, 0.3, 0.2, 0.5];
        let k = 3.5;
        let scaled: Vec<f64> = base.iter().map(|v| v * k).collect();
        let a = calibrate_joint_bound(&base, &rule).unwrap().bound;
        let b = calibrate_joint_bound(&scaled, &rule).unwrap().bound;
        assert!((b - k * a).abs() < 1e-12);
    }

    #[test]
    fn no_alarm_when_all_inside() {
        let (j, a) = sup(1.0)
            .evaluate(vec![rec("a", 0.1, false), rec("b", 0.2, false)], 1)
            .unwrap();
        assert!(!j.over_bound);
        assert!(a.is_none());
    }

    #[test]
    fn component_alarm_before_joint() {
        let (j, a) = sup(1.0)
            .evaluate(vec![rec("a", 0.9, true), rec("b", 0.1, false)], 5)
            .unwrap();
        assert!(!j.over_bound);
        assert_eq!(a.unwrap().triggers, vec!["a".to_string()]);
    }

    #[test]
    fn joint_alarm_alone() {
        let (j, a) = sup(0.2)
            .evaluate(vec![rec("a", 0.3, false), rec("b", 0.3, false)], 5)
            .unwrap();
        assert!(j.over_bound);
        assert_eq!(a.unwrap().triggers, vec![JOINT_TRIGGER.to_string()]);
    }

    #[test]
    fn missing_record_rejected() {
        assert!(matches!(
            sup(1.0).evaluate(vec![rec("a", 0.1, false)], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn calibrate_rejects_nonpositive_weight() {
        let r = SupervisorModel::calibrate(map(&[("a", 0.0)]), &[0.1, 0.2], &BoundRule::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
