//! Deterministic synthetic numeric kernels and the canonical result digest.
//!
//! A kernel's output is a pure function of `(kernel, size, seed)`; honest
//! replicas therefore agree bit-for-bit on the digest.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::registry::NodeId;

/// Decimal places kept when serializing numeric results for digesting.
pub const DEFAULT_DIGEST_PRECISION: usize = 9;

/// Seconds per abstract operation on an ESP-32-class worker; a size-1000
/// task takes one second.
pub const ESP32_COST_PER_OP_S: f64 = 1e-3;
/// How much faster the reference node is than a worker.
pub const DEFAULT_REFERENCE_SPEEDUP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Fixed-width checksum of a canonicalized result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResultDigest(pub u64);

impl ResultDigest {
    /// Flips one bit; used to model byzantine corruption.
    pub fn flip_bit(self, bit: u32) -> Self {
        Self(self.0 ^ (1u64 << (bit % 64)))
    }
}

impl fmt::Display for ResultDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for ResultDigest {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(ResultDigest)
    }
}

impl Serialize for ResultDigest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResultDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical text form of a numeric result: each value rounded to
/// `precision` decimals, comma separated, negative zero folded to zero.
pub fn canonical_form(values: &[f64], precision: usize) -> String {
    values
        .iter()
        .map(|v| {
            if v.is_nan() {
                "nan".to_owned()
            } else {
                let s = format!("{:.*}", precision, v);
                if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                    s[1..].to_owned()
                } else {
                    s
                }
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn digest_values(values: &[f64], precision: usize) -> ResultDigest {
    let hash = Sha256::digest(canonical_form(values, precision).as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&hash[..8]);
    ResultDigest(u64::from_be_bytes(word))
}

/// Registered kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Sum of great-circle distances over seeded coordinate pairs.
    ArcDist,
    /// Rosenbrock objective over a seeded vector.
    RosenLike,
    /// Fibonacci recurrence modulo a prime from a seeded start.
    FibLike,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::ArcDist, Kernel::RosenLike, Kernel::FibLike];

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::ArcDist => "arc_dist",
            Kernel::RosenLike => "rosen_like",
            Kernel::FibLike => "fib_like",
        }
    }

    pub fn evaluate(&self, size: u64, seed: u64) -> f64 {
        match self {
            Kernel::ArcDist => arc_dist(size, seed),
            Kernel::RosenLike => rosen_like(size, seed),
            Kernel::FibLike => fib_like(size, seed),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    Unknown(String),
}

impl FromStr for Kernel {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KernelError::Unknown(s.to_owned()))
    }
}

fn arc_dist(size: u64, seed: u64) -> f64 {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..size {
        let theta_1 = rng.random_range(-PI / 2.0..PI / 2.0);
        let phi_1 = rng.random_range(-PI..PI);
        let theta_2 = rng.random_range(-PI / 2.0..PI / 2.0);
        let phi_2 = rng.random_range(-PI..PI);
        let temp = ((theta_2 - theta_1) / 2.0).sin().powi(2)
            + theta_1.cos() * theta_2.cos() * ((phi_2 - phi_1) / 2.0).sin().powi(2);
        total += 2.0 * temp.sqrt().atan2((1.0 - temp).sqrt());
    }
    total
}

fn rosen_like(size: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if size == 0 {
        return 0.0;
    }
    let mut prev: f64 = rng.random_range(-2.0..2.0);
    let mut total = 0.0;
    for _ in 0..size {
        let next: f64 = rng.random_range(-2.0..2.0);
        total += 100.0 * (next - prev * prev).powi(2) + (1.0 - prev).powi(2);
        prev = next;
    }
    total
}

fn fib_like(size: u64, seed: u64) -> f64 {
    const MODULUS: u64 = (1 << 31) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = rng.random_range(0..MODULUS);
    let mut b = rng.random_range(0..MODULUS);
    if size == 0 {
        return 0.0;
    }
    for _ in 0..size {
        let next = (a + b) % MODULUS;
        a = b;
        b = next;
    }
    b as f64
}

/// Unit of offloaded work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    /// Kernel name; resolved against the kernel table at execution time.
    pub kernel: String,
    /// Work amount in abstract operations.
    pub size: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<TaskId>, kernel: Kernel, size: u64, seed: u64) -> Self {
        Self {
            task_id: task_id.into(),
            kernel: kernel.name().to_owned(),
            size,
            seed,
            deadline_s: None,
        }
    }

    /// Digest an honest replica produces, or an error for unknown kernels.
    pub fn honest_digest(&self) -> Result<ResultDigest, KernelError> {
        let kernel: Kernel = self.kernel.parse()?;
        Ok(digest_values(
            &[kernel.evaluate(self.size, self.seed)],
            DEFAULT_DIGEST_PRECISION,
        ))
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Execution speed of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    #[default]
    Esp32,
    /// Stand-in for the non-IoT baseline machine.
    Reference,
    CostPerOp(f64),
}

/// Cost constants that turn operation counts into seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub worker_cost_per_op_s: f64,
    pub reference_speedup: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            worker_cost_per_op_s: ESP32_COST_PER_OP_S,
            reference_speedup: DEFAULT_REFERENCE_SPEEDUP,
        }
    }
}

impl SpeedClass {
    pub fn cost_per_op_s(&self, cal: &Calibration) -> f64 {
        match *self {
            SpeedClass::Esp32 => cal.worker_cost_per_op_s,
            SpeedClass::Reference => cal.worker_cost_per_op_s / cal.reference_speedup,
            SpeedClass::CostPerOp(c) => c,
        }
    }

    pub fn compute_seconds(&self, size: u64, cal: &Calibration) -> f64 {
        size as f64 * self.cost_per_op_s(cal)
    }
}

/// A replica's answer for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: TaskId,
    pub digest: ResultDigest,
    pub compute_s: f64,
    pub executed_by: NodeId,
}

/// Runs `spec` as node `node` of speed `speed`.
pub fn execute_kernel(
    spec: &TaskSpec,
    node: &NodeId,
    speed: SpeedClass,
    cal: &Calibration,
) -> Result<TaskResult, KernelError> {
    let digest = spec.honest_digest()?;
    Ok(TaskResult {
        task_id: spec.task_id.clone(),
        digest,
        compute_s: speed.compute_seconds(spec.size, cal),
        executed_by: node.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kernel: Kernel, size: u64, seed: u64) -> TaskSpec {
        TaskSpec::new("t", kernel, size, seed)
    }

    /// Straight-line great-circle sum, written independently of the kernel.
    fn arc_dist_oracle(size: u64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        let mut coords = Vec::new();
        for _ in 0..size {
            let a: f64 = rng.random_range(-half_pi..half_pi);
            let b: f64 = rng.random_range(-pi..pi);
            let c: f64 = rng.random_range(-half_pi..half_pi);
            let d: f64 = rng.random_range(-pi..pi);
            coords.push((a, b, c, d));
        }
        let mut sum = 0.0;
        for (lat1, lon1, lat2, lon2) in coords {
            let dlat = lat2 - lat1;
            let dlon = lon2 - lon1;
            let h = (dlat / 2.0).sin() * (dlat / 2.0).sin()
                + lat1.cos() * lat2.cos() * (dlon / 2.0).sin() * (dlon / 2.0).sin();
            sum += 2.0 * f64::atan2(h.sqrt(), (1.0 - h).sqrt());
        }
        sum
    }

    #[test]
    fn empty_arc_dist_digests_zero() {
        let node = NodeId::from("w");
        let r = execute_kernel(&spec(Kernel::ArcDist, 0, 99), &node, SpeedClass::Esp32, &Calibration::default())
            .unwrap();
        assert_eq!(r.digest, digest_values(&[0.0], DEFAULT_DIGEST_PRECISION));
        assert_eq!(r.compute_s, 0.0);
    }

    #[test]
    fn arc_dist_is_deterministic() {
        let s = spec(Kernel::ArcDist, 1000, 42);
        assert_eq!(s.honest_digest().unwrap(), s.honest_digest().unwrap());
    }

    #[test]
    fn arc_dist_matches_oracle() {
        let expected = digest_values(&[arc_dist_oracle(10, 7)], DEFAULT_DIGEST_PRECISION);
        assert_eq!(spec(Kernel::ArcDist, 10, 7).honest_digest().unwrap(), expected);
        // law of cosines agrees on the value itself
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sum = 0.0;
        for _ in 0..10 {
            let a: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let b: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let c: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let d: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            sum += (a.sin() * c.sin() + a.cos() * c.cos() * (d - b).cos()).clamp(-1.0, 1.0).acos();
        }
        assert!((sum - Kernel::ArcDist.evaluate(10, 7)).abs() < 1e-9);
    }

    #[test]
    fn unknown_kernel_is_rejected() {
        let mut s = spec(Kernel::ArcDist, 5, 1);
        s.kernel = "matmul_huge".into();
        let err = execute_kernel(&s, &"w".into(), SpeedClass::Esp32, &Calibration::default()).unwrap_err();
        assert_eq!(err, KernelError::Unknown("matmul_huge".into()));
    }

    #[test]
    fn compute_time_scales_with_speed_class() {
        let cal = Calibration::default();
        let s = spec(Kernel::RosenLike, 1000, 3);
        let w = execute_kernel(&s, &"w".into(), SpeedClass::Esp32, &cal).unwrap();
        let r = execute_kernel(&s, &"r".into(), SpeedClass::Reference, &cal).unwrap();
        assert!((w.compute_s - 1.0).abs() < 1e-12);
        assert!((w.compute_s / r.compute_s - 10.0).abs() < 1e-9);
        assert_eq!(w.digest, r.digest);
    }

    #[test]
    fn canonical_form_rounds_and_folds_negative_zero() {
        assert_eq!(canonical_form(&[1.0 / 3.0, -0.0], 9), "0.333333333,0.000000000");
        assert_eq!(canonical_form(&[-1e-12], 9), "0.000000000");
        assert_eq!(
            digest_values(&[0.1 + 0.2], 9),
            digest_values(&[0.3], 9),
            "formatting noise below precision must not change the digest"
        );
    }

    #[test]
    fn digest_round_trips_through_text() {
        let d = digest_values(&[42.0], 9);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s.len(), 18);
        assert_eq!(serde_json::from_str::<ResultDigest>(&s).unwrap(), d);
        assert_ne!(d.flip_bit(5), d);
        assert_eq!(d.flip_bit(5).flip_bit(5), d);
    }

    #[test]
    fn kernels_are_total_on_small_sizes() {
        for k in Kernel::ALL {
            for size in 0..5 {
                assert!(k.evaluate(size, 11).is_finite());
            }
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
    }
}
