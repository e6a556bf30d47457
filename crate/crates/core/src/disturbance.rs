//! Time-varying input SOPs: static, slow drift and abrupt jumps, all modelled
//! as rotations of the Stokes vector on the Poincaré sphere.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::anneal::{run_lock, AnnealConfig, Objective};
use crate::device::{measure, DetectorSample, DeviceParams, PhaseQuad};
use crate::error::{Error, Result};
use crate::jones::{JonesMatrix, JonesVector};

/// Std. dev. of the per-iteration random walk of the drift axis.
const AXIS_WALK_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    #[default]
    Static,
    Drift,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceModel {
    pub kind: DisturbanceKind,
    /// Poincaré rotation per iteration, rad.
    pub drift_rate: f64,
    /// Iteration (1-based) at which the jump is applied.
    pub jump_at: usize,
    /// Poincaré rotation of the jump, rad.
    pub jump_magnitude: f64,
    /// ER a re-lock must reach to count as recovered, dB.
    pub recovery_threshold_db: f64,
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::Static,
            drift_rate: 0.0,
            jump_at: 250,
            jump_magnitude: std::f64::consts::FRAC_PI_2,
            recovery_threshold_db: 20.0,
        }
    }
}

impl DisturbanceModel {
    pub fn jump(at: usize, magnitude: f64) -> Self {
        Self {
            kind: DisturbanceKind::Jump,
            jump_at: at,
            jump_magnitude: magnitude,
            ..Self::default()
        }
    }

    pub fn drift(rate: f64) -> Self {
        Self {
            kind: DisturbanceKind::Drift,
            drift_rate: rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drift_rate.is_finite() && self.drift_rate >= 0.0) {
            return Err(Error::invalid("disturbance.drift_rate", "must be ≥ 0"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.jump_magnitude) {
            return Err(Error::invalid(
                "disturbance.jump_magnitude",
                "must lie in [0, π]",
            ));
        }
        if self.recovery_threshold_db.is_nan() {
            return Err(Error::invalid(
                "disturbance.recovery_threshold_db",
                "is NaN",
            ));
        }
        Ok(())
    }
}

/// SU(2) matrix rotating the Stokes vector by `angle` about unit `axis`
/// (s1, s2, s3): exp(−i·angle/2·(a₁σz + a₂σx + a₃σy)).
pub fn poincare_rotation(axis: [f64; 3], angle: f64) -> JonesMatrix {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [a1, a2, a3] = axis.map(|a| a / norm);
    let (s, c) = (0.5 * angle).sin_cos();
    let i = Complex64::i();
    let cc = Complex64::new(c, 0.0);
    // n·σ = [[a1, a2 − i a3], [a2 + i a3, −a1]]
    JonesMatrix::new(
        cc - i * s * a1,
        -i * s * Complex64::new(a2, -a3),
        -i * s * Complex64::new(a2, a3),
        cc + i * s * a1,
    )
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

/// Stateful disturbance process: the model plus its drift axis and rng.
#[derive(Debug, Clone)]
pub struct Disturbance<R> {
    pub model: DisturbanceModel,
    axis: [f64; 3],
    rng: R,
}

impl<R: Rng> Disturbance<R> {
    pub fn new(model: DisturbanceModel, mut rng: R) -> Self {
        let axis = random_axis(&mut rng);
        Self { model, axis, rng }
    }

    /// SOP seen at `iteration` given the SOP of the previous iteration.
    pub fn evolve(&mut self, sop: &JonesVector, iteration: usize) -> JonesVector {
        evolve_sop(sop, iteration, &self.model, &mut self.axis, &mut self.rng)
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }
}

/// One step of the disturbance: static leaves `sop` untouched, drift rotates by
/// `drift_rate` about a random-walking axis, jump rotates by `jump_magnitude`
/// about a fresh random axis at `jump_at` only.
pub fn evolve_sop<R: Rng + ?Sized>(
    sop: &JonesVector,
    iteration: usize,
    model: &DisturbanceModel,
    axis: &mut [f64; 3],
    rng: &mut R,
) -> JonesVector {
    match model.kind {
        DisturbanceKind::Static => *sop,
        DisturbanceKind::Drift => {
            let walked: [f64; 3] = std::array::from_fn(|k| {
                axis[k] + AXIS_WALK_SIGMA * rng.sample::<f64, _>(StandardNormal)
            });
            let n = (walked[0].powi(2) + walked[1].powi(2) + walked[2].powi(2)).sqrt();
            if n > 1e-9 {
                *axis = walked.map(|x| x / n);
            }
            poincare_rotation(*axis, model.drift_rate).apply(sop)
        }
        DisturbanceKind::Jump => {
            if iteration == model.jump_at {
                *axis = random_axis(rng);
                poincare_rotation(*axis, model.jump_magnitude).apply(sop)
            } else {
                *sop
            }
        }
    }
}

/// Simulated chip whose input SOP evolves with the iteration count.
pub struct DisturbedObjective<R, D> {
    pub sop: JonesVector,
    pub params: DeviceParams,
    pub noise: R,
    pub disturbance: Disturbance<D>,
}

impl<R: Rng, D: Rng> Objective for DisturbedObjective<R, D> {
    fn evaluate(&mut self, phases: &PhaseQuad) -> Result<DetectorSample> {
        Ok(measure(&self.sop, phases, &self.params, &mut self.noise))
    }

    fn on_iteration(&mut self, iteration: usize) {
        self.sop = self.disturbance.evolve(&self.sop, iteration);
    }
}

/// Independent rng streams of one trial, all derived from a single seed.
#[derive(Debug, Clone)]
pub struct TrialRngs {
    pub sop: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub controller: ChaCha8Rng,
    pub disturbance: ChaCha8Rng,
}

impl TrialRngs {
    pub fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Self {
            sop: stream(0),
            noise: stream(1),
            controller: stream(2),
            disturbance: stream(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelockOutcome {
    pub trace: crate::anneal::LockTrace,
    /// Iterations from the jump until ER first reaches the threshold.
    pub recovery_iterations: Option<usize>,
}

/// Locks on `sop` while the disturbance acts, and measures how long the lock
/// takes to recover after the jump.
pub fn relock_experiment(
    sop: JonesVector,
    device: &DeviceParams,
    cfg: &AnnealConfig,
    model: &DisturbanceModel,
    seed: u64,
) -> Result<RelockOutcome> {
    if model.kind != DisturbanceKind::Jump {
        return Err(Error::invalid(
            "disturbance.kind",
            "re-lock experiment needs a jump",
        ));
    }
    model.validate()?;
    let rngs = TrialRngs::new(seed);
    let mut objective = DisturbedObjective {
        sop,
        params: *device,
        noise: rngs.noise,
        disturbance: Disturbance::new(*model, rngs.disturbance),
    };
    let mut ctl = rngs.controller;
    let trace = run_lock(&mut objective, cfg, &device.tps, &mut ctl)?;
    let recovery_iterations = recovery_after(&trace, model.jump_at, model.recovery_threshold_db);
    Ok(RelockOutcome {
        trace,
        recovery_iterations,
    })
}

/// First iteration ≥ `jump_at` whose ER reaches `threshold_db`, relative to `jump_at`.
pub fn recovery_after(
    trace: &crate::anneal::LockTrace,
    jump_at: usize,
    threshold_db: f64,
) -> Option<usize> {
    trace
        .steps
        .iter()
        .find(|s| s.iteration >= jump_at && s.er_db >= threshold_db)
        .map(|s| s.iteration - jump_at)
}
