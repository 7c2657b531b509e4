//! Two-state (active/sleep) energy model for duty-cycled workers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::NodeId;

/// Reduction figure published for the 10% duty-cycle deployment.
pub const PUBLISHED_REDUCTION_PCT: f64 = 98.0;

/// Assumed draw of the non-IoT reference machine; only used for the
/// secondary baseline.
pub const DEFAULT_REFERENCE_POWER_W: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Mean current while awake, amperes.
    pub i_active: f64,
    /// Mean current while asleep, amperes.
    pub i_sleep: f64,
    pub voltage: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            i_active: 0.260,
            i_sleep: 2.5e-6,
            voltage: 3.3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("{0} must be non-negative (horizon positive), got {1}")]
    NegativeTime(&'static str, f64),
    #[error("energy parameters must be positive with i_sleep < i_active: {0:?}")]
    InvalidParams(EnergyParams),
    #[error("duty cycle must be in (0, 1], got {0}")]
    InvalidDutyCycle(f64),
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let ok = self.i_active > 0.0 && self.i_sleep > 0.0 && self.voltage > 0.0 && self.i_sleep < self.i_active;
        if ok {
            Ok(())
        } else {
            Err(EnergyError::InvalidParams(*self))
        }
    }
}

/// `V * (I_active * active + I_sleep * sleep)` in joules.
pub fn energy_joules(active_s: f64, sleep_s: f64, params: &EnergyParams) -> Result<f64, EnergyError> {
    if active_s < 0.0 {
        return Err(EnergyError::NegativeTime("active_s", active_s));
    }
    if sleep_s < 0.0 {
        return Err(EnergyError::NegativeTime("sleep_s", sleep_s));
    }
    Ok(params.voltage * (params.i_active * active_s + params.i_sleep * sleep_s))
}

/// Percentage saved over `horizon_s` by running at duty cycle `dc` instead of
/// always on. Voltage and horizon cancel out of the ratio.
pub fn reduction_vs_always_on(dc: f64, horizon_s: f64, params: &EnergyParams) -> Result<f64, EnergyError> {
    if !(dc > 0.0 && dc <= 1.0) {
        return Err(EnergyError::InvalidDutyCycle(dc));
    }
    if !(horizon_s > 0.0) {
        return Err(EnergyError::NegativeTime("horizon_s", horizon_s));
    }
    let cycled = energy_joules(dc * horizon_s, (1.0 - dc) * horizon_s, params)?;
    let always_on = energy_joules(horizon_s, 0.0, params)?;
    Ok((1.0 - cycled / always_on) * 100.0)
}

/// Per-run energy totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub per_node: BTreeMap<NodeId, f64>,
    pub total: f64,
    /// Same nodes awake for the whole run.
    pub baseline_always_on: f64,
    pub reduction_pct: f64,
    /// Reference machine powered for the whole run.
    pub reference_baseline: f64,
    pub reduction_vs_reference_pct: f64,
    pub published_reduction_pct: f64,
}

impl EnergyReport {
    /// `awake` maps each node to (awake seconds, observed seconds).
    pub fn from_awake_times(
        awake: &BTreeMap<NodeId, (f64, f64)>,
        params: &EnergyParams,
        reference_power_w: f64,
        duration_s: f64,
    ) -> Result<Self, EnergyError> {
        let mut per_node = BTreeMap::new();
        let mut baseline = 0.0;
        for (id, &(active, observed)) in awake {
            let active = active.min(observed);
            per_node.insert(id.clone(), energy_joules(active, observed - active, params)?);
            baseline += energy_joules(observed, 0.0, params)?;
        }
        let total: f64 = per_node.values().sum();
        let reduction_pct = if baseline > 0.0 {
            (1.0 - total / baseline) * 100.0
        } else {
            0.0
        };
        let reference_baseline = reference_power_w * duration_s;
        let reduction_vs_reference_pct = if reference_baseline > 0.0 {
            (1.0 - total / reference_baseline) * 100.0
        } else {
            0.0
        };
        Ok(Self {
            per_node,
            total,
            baseline_always_on: baseline,
            reduction_pct,
            reference_baseline,
            reduction_vs_reference_pct,
            published_reduction_pct: PUBLISHED_REDUCTION_PCT,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ten_seconds_active() {
        let e = energy_joules(10.0, 0.0, &EnergyParams::default()).unwrap();
        assert!(close(e, 8.58, 1e-12));
    }

    #[test]
    fn pure_sleep() {
        let e = energy_joules(0.0, 100.0, &EnergyParams::default()).unwrap();
        assert!(close(e, 8.25e-4, 1e-15));
    }

    #[test]
    fn ten_percent_over_100s() {
        let e = energy_joules(10.0, 90.0, &EnergyParams::default()).unwrap();
        assert!(close(e, 8.58 + 7.425e-4, 1e-12));
        assert!(close(e, 8.5807, 1e-4));
    }

    #[test]
    fn negative_time_rejected() {
        let p = EnergyParams::default();
        assert_eq!(energy_joules(-1.0, 0.0, &p), Err(EnergyError::NegativeTime("active_s", -1.0)));
        assert!(energy_joules(0.0, -1.0, &p).is_err());
    }

    #[test]
    fn reductions() {
        let p = EnergyParams::default();
        assert!(close(reduction_vs_always_on(1.0, 100.0, &p).unwrap(), 0.0, 1e-12));
        // (0.1 * 0.26 + 0.9 * 2.5e-6) / 0.26 = 0.10000865...
        let expected_10 = (1.0 - (0.1 * 0.26 + 0.9 * 2.5e-6) / 0.26) * 100.0;
        assert!(close(reduction_vs_always_on(0.10, 100.0, &p).unwrap(), expected_10, 1e-12));
        assert!(close(reduction_vs_always_on(0.10, 100.0, &p).unwrap(), 90.0, 0.01));
        assert!(close(reduction_vs_always_on(0.01, 3600.0, &p).unwrap(), 99.0, 0.01));
        assert!(reduction_vs_always_on(0.0, 1.0, &p).is_err());
        assert!(reduction_vs_always_on(0.5, 0.0, &p).is_err());
    }

    #[test]
    fn reduction_ignores_voltage_and_horizon() {
        let p = EnergyParams::default();
        let q = EnergyParams { voltage: 5.0, ..p };
        let base = reduction_vs_always_on(0.3, 10.0, &p).unwrap();
        assert!(close(base, reduction_vs_always_on(0.3, 10.0, &q).unwrap(), 1e-9));
        assert!(close(base, reduction_vs_always_on(0.3, 1e6, &p).unwrap(), 1e-9));
    }

    #[test]
    fn report_totals() {
        let p = EnergyParams::default();
        let mut awake = BTreeMap::new();
        awake.insert(NodeId::from("a"), (10.0, 100.0));
        awake.insert(NodeId::from("b"), (10.0, 100.0));
        let r = EnergyReport::from_awake_times(&awake, &p, 30.0, 100.0).unwrap();
        assert!(close(r.total, r.per_node.values().sum::<f64>(), 1e-12));
        assert!(close(r.total, 2.0 * 8.5807425, 1e-9));
        assert!(close(r.baseline_always_on, 2.0 * 85.8, 1e-9));
        assert!(close(r.reduction_pct, reduction_vs_always_on(0.1, 100.0, &p).unwrap(), 1e-9));
        assert!(close(r.reference_baseline, 3000.0, 1e-9));
        assert!((0.0..100.0).contains(&r.reduction_pct));
    }

    proptest! {
        #[test]
        fn linear(a in 0.0..1e4f64, s in 0.0..1e5f64, a2 in 0.0..1e4f64, s2 in 0.0..1e5f64) {
            let p = EnergyParams::default();
            let whole = energy_joules(a + a2, s + s2, &p).unwrap();
            let parts = energy_joules(a, s, &p).unwrap() + energy_joules(a2, s2, &p).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1.0));
        }

        #[test]
        fn reduction_strictly_decreasing(x in 0.001..1.0f64, y in 0.001..1.0f64) {
            prop_assume!((x - y).abs() > 1e-9);
            let p = EnergyParams::default();
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(reduction_vs_always_on(lo, 60.0, &p).unwrap() > reduction_vs_always_on(hi, 60.0, &p).unwrap());
        }
    }
}
