//! Variable-step simulated annealing lock.
//!
//! The controller maximizes the LO-port intensity I_px over the four stage
//! phases. The proposal step is chosen from the gap I_st = 1 − I_max between
//! the normalized maximum and the best reading so far, so the search takes
//! coarse steps while far from lock and fine steps once near it. Temperature
//! follows T_k = T₀·pᵏ over the outer loops; acceptance is Metropolis on the
//! maximization objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{phase_step_to_voltage_step, DetectorSample, PhaseQuad, TpsParams};
use crate::error::{Error, Result};

/// Table mapping the intensity gap to a proposal step.
///
/// Entries are `(threshold, step)` with strictly decreasing thresholds; a gap
/// `g` uses the step of the last entry whose threshold is ≥ `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct StepSchedule {
    entries: Vec<(f64, f64)>,
}

impl StepSchedule {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid(
                "anneal.schedule",
                "needs at least one entry",
            ));
        }
        for &(thr, st) in &entries {
            if !(thr.is_finite() && st.is_finite()) {
                return Err(Error::invalid("anneal.schedule", "entries must be finite"));
            }
        }
        if entries.len() == 1 {
            if entries[0].1 < 0.0 {
                return Err(Error::invalid("anneal.schedule", "step must be ≥ 0"));
            }
        } else {
            for w in entries.windows(2) {
                if w[1].0 >= w[0].0 {
                    return Err(Error::invalid(
                        "anneal.schedule",
                        "thresholds must be strictly decreasing",
                    ));
                }
                if w[1].1 >= w[0].1 {
                    return Err(Error::invalid(
                        "anneal.schedule",
                        "steps must be strictly decreasing",
                    ));
                }
            }
            if entries.iter().any(|&(_, st)| st <= 0.0) {
                return Err(Error::invalid("anneal.schedule", "steps must be > 0"));
            }
        }
        Ok(Self { entries })
    }

    /// 0.16 / 0.08 / 0.03 / 0.008 rad over gap brackets split at 0.1, 0.01, 0.001.
    pub fn variable() -> Self {
        Self {
            entries: vec![(1.0, 0.16), (0.1, 0.08), (0.01, 0.03), (0.001, 0.008)],
        }
    }

    /// Constant step `st` (radians).
    pub fn fixed(st: f64) -> Self {
        Self {
            entries: vec![(1.0, st)],
        }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn is_fixed(&self) -> bool {
        self.entries.len() == 1
    }

    pub fn step_for_gap(&self, i_st: f64) -> f64 {
        step_for_gap(i_st, self)
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::variable()
    }
}

impl TryFrom<Vec<(f64, f64)>> for StepSchedule {
    type Error = Error;

    fn try_from(entries: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<StepSchedule> for Vec<(f64, f64)> {
    fn from(s: StepSchedule) -> Self {
        s.entries
    }
}

/// Step for intensity gap `i_st`; the gap is clamped to [0, 1].
pub fn step_for_gap(i_st: f64, schedule: &StepSchedule) -> f64 {
    let gap = if i_st.is_nan() {
        1.0
    } else {
        i_st.clamp(0.0, 1.0)
    };
    let e = &schedule.entries;
    for k in 0..e.len() - 1 {
        if gap > e[k + 1].0 {
            return e[k].1;
        }
    }
    e[e.len() - 1].1
}

/// What the controller steps: heater phases directly, or drive voltages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepDomain {
    #[default]
    Phase,
    /// Phase steps are converted to the minimum voltage step (taken at
    /// `v_max`) and voltages are mapped to phases through the heater model.
    Voltage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    /// Initial temperature T₀.
    pub t0: f64,
    /// Number of outer (cooling) loops m₀.
    pub outer_loops: usize,
    /// Inner iterations per outer loop n₀.
    pub inner_loops: usize,
    /// Cooling ratio p in T_{k+1} = p·T_k.
    pub cooling_p: f64,
    /// Starting phase of every stage; `None` means half of `phase_max`.
    pub init_phase: Option<f64>,
    pub schedule: StepSchedule,
    pub mode: StepDomain,
    /// Lock-loss detector: at each outer-loop boundary the current point is
    /// re-read, and if it fell more than this below the best reading the
    /// best-so-far state is reset to the fresh reading. `None` disables it.
    pub relock_drop: Option<f64>,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            t0: 1e-5,
            outer_loops: 10,
            inner_loops: 50,
            cooling_p: 0.5,
            init_phase: None,
            schedule: StepSchedule::variable(),
            mode: StepDomain::Phase,
            relock_drop: Some(0.01),
        }
    }
}

impl AnnealConfig {
    pub fn with_schedule(&self, schedule: StepSchedule) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.outer_loops * self.inner_loops
    }

    pub fn init_phase_for(&self, tps: &TpsParams) -> f64 {
        self.init_phase.unwrap_or(0.5 * tps.phase_max)
    }

    /// Temperature during outer loop `k` (0-based): T₀·pᵏ.
    pub fn temperature_at(&self, k: usize) -> f64 {
        self.t0 * self.cooling_p.powi(k as i32)
    }

    pub fn validate(&self, tps: &TpsParams) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::invalid(
                "anneal.t0",
                format!("must be > 0, got {}", self.t0),
            ));
        }
        if self.outer_loops == 0 {
            return Err(Error::invalid("anneal.outer_loops", "must be ≥ 1"));
        }
        if self.inner_loops == 0 {
            return Err(Error::invalid("anneal.inner_loops", "must be ≥ 1"));
        }
        if !(self.cooling_p > 0.0 && self.cooling_p < 1.0) {
            return Err(Error::invalid(
                "anneal.cooling_p",
                format!("must lie in (0, 1), got {}", self.cooling_p),
            ));
        }
        let init = self.init_phase_for(tps);
        if !(0.0..=tps.phase_max).contains(&init) {
            return Err(Error::invalid(
                "anneal.init_phase",
                format!("must lie in [0, {}], got {init}", tps.phase_max),
            ));
        }
        if let Some(drop) = self.relock_drop {
            if !(drop.is_finite() && drop > 0.0) {
                return Err(Error::invalid("anneal.relock_drop", "must be > 0"));
            }
        }
        // Revalidate in case the struct was built by hand.
        StepSchedule::new(self.schedule.entries.clone())?;
        Ok(())
    }
}

/// Something the controller can measure at a phase setting.
pub trait Objective {
    fn evaluate(&mut self, phases: &PhaseQuad) -> Result<DetectorSample>;

    /// Called before inner iteration `iteration` (1-based) is measured.
    fn on_iteration(&mut self, _iteration: usize) {}
}

impl<F> Objective for F
where
    F: FnMut(&PhaseQuad) -> Result<DetectorSample>,
{
    fn evaluate(&mut self, phases: &PhaseQuad) -> Result<DetectorSample> {
        self(phases)
    }
}

/// A simulated chip with a fixed input SOP.
pub struct DeviceObjective<R> {
    pub sop: crate::jones::JonesVector,
    pub params: crate::device::DeviceParams,
    pub rng: R,
}

impl<R: Rng> Objective for DeviceObjective<R> {
    fn evaluate(&mut self, phases: &PhaseQuad) -> Result<DetectorSample> {
        Ok(crate::device::measure(
            &self.sop,
            phases,
            &self.params,
            &mut self.rng,
        ))
    }
}

/// One coordinate of a proposal with explicit draws `r ∈ [0, 1]` and `c ∈ {−1, +1}`.
///
/// At or below 0 the move is forced upward, at or above `upper` downward.
pub fn propose_component(x: f64, st: f64, upper: f64, r: f64, c: f64) -> f64 {
    if x <= 0.0 {
        x + st * r
    } else if x >= upper {
        x - st * r
    } else {
        x + c * st * r
    }
}

/// Random neighbour of `s_p`: every component moves independently, and the
/// result is clamped back into `[0, upper]`.
pub fn propose<R: Rng + ?Sized>(s_p: &PhaseQuad, st: f64, upper: f64, rng: &mut R) -> PhaseQuad {
    PhaseQuad(s_p.0.map(|x| {
        let r: f64 = rng.random();
        let c = if rng.random::<bool>() { 1.0 } else { -1.0 };
        propose_component(x, st, upper, r, c).clamp(0.0, upper)
    }))
}

/// Metropolis probability of moving from `i_old` to `i_new` when maximizing.
pub fn acceptance_probability(i_new: f64, i_old: f64, temperature: f64) -> f64 {
    if i_new >= i_old {
        1.0
    } else if temperature > 0.0 {
        ((i_new - i_old) / temperature).exp()
    } else {
        0.0
    }
}

pub fn accept<R: Rng + ?Sized>(i_new: f64, i_old: f64, temperature: f64, rng: &mut R) -> bool {
    if i_new >= i_old {
        return true;
    }
    rng.random::<f64>() < acceptance_probability(i_new, i_old, temperature)
}

/// Minimum voltage step for phase step `dtheta`: the step formula evaluated
/// at `v_max`, where ΔV per radian is smallest.
pub fn voltage_domain_step(dtheta: f64, tps: &TpsParams) -> f64 {
    phase_step_to_voltage_step(dtheta, tps.v_max, tps).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Cumulative inner-iteration index, 1-based.
    pub iteration: usize,
    pub temperature: f64,
    /// Step size used, radians.
    pub step_rad: f64,
    /// Proposed stage phases.
    pub proposal: PhaseQuad,
    /// Proposed drive voltages (voltage mode only).
    pub drive: Option<PhaseQuad>,
    pub sample: DetectorSample,
    pub er_db: f64,
    pub accepted: bool,
    /// Running best I_max after this iteration.
    pub best_i_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockTrace {
    /// Reading at the initial point, before iteration 1.
    pub initial: DetectorSample,
    pub initial_phases: PhaseQuad,
    pub steps: Vec<TraceStep>,
    /// Best reading I_max.
    pub best_i_px: f64,
    /// Phases S_max where I_max was read.
    pub best_phases: PhaseQuad,
    /// Iteration that set I_max (0 = initial reading).
    pub best_iteration: usize,
    /// Iterations at which the lock-loss detector reset the best state.
    pub relocks: Vec<usize>,
}

impl LockTrace {
    pub fn final_phases(&self) -> PhaseQuad {
        self.best_phases
    }

    pub fn er_at(&self, iteration: usize) -> Option<f64> {
        self.steps.get(iteration.checked_sub(1)?).map(|s| s.er_db)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.accepted).count() as f64 / self.steps.len() as f64
    }
}

struct Search<'a> {
    mode: StepDomain,
    tps: &'a TpsParams,
}

impl Search<'_> {
    fn upper(&self) -> f64 {
        match self.mode {
            StepDomain::Phase => self.tps.phase_max,
            StepDomain::Voltage => self.tps.v_max,
        }
    }

    fn start(&self, init_phase: f64) -> PhaseQuad {
        match self.mode {
            StepDomain::Phase => PhaseQuad::splat(init_phase),
            StepDomain::Voltage => {
                let theta = init_phase.clamp(self.tps.theta_bias, self.tps.phase_at_v_max());
                // Inside the reachable range by construction.
                PhaseQuad::splat(self.tps.voltage_for_phase(theta).unwrap_or(0.0))
            }
        }
    }

    fn step(&self, st_rad: f64) -> f64 {
        match self.mode {
            StepDomain::Phase => st_rad,
            StepDomain::Voltage => voltage_domain_step(st_rad, self.tps),
        }
    }

    /// Search point → stage phases.
    fn phases(&self, point: &PhaseQuad) -> PhaseQuad {
        match self.mode {
            StepDomain::Phase => *point,
            StepDomain::Voltage => PhaseQuad(
                point
                    .0
                    .map(|v| self.tps.c_slope * v * v / self.tps.resistance + self.tps.theta_bias),
            ),
        }
    }
}

/// Runs the full annealing lock and returns every iteration.
///
/// `rng` drives proposals and Metropolis draws; measurement noise belongs to
/// the objective.
pub fn run_lock<O, R>(
    objective: &mut O,
    cfg: &AnnealConfig,
    tps: &TpsParams,
    rng: &mut R,
) -> Result<LockTrace>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate(tps)?;
    let search = Search {
        mode: cfg.mode,
        tps,
    };
    let upper = search.upper();

    let mut current = search.start(cfg.init_phase_for(tps));
    let initial_phases = search.phases(&current);
    let initial = objective.evaluate(&initial_phases)?;
    let mut i_current = initial.i_px;
    let mut best_i = initial.i_px;
    let mut best_phases = initial_phases;
    let mut best_iteration = 0;
    let mut relocks = Vec::new();
    let mut steps = Vec::with_capacity(cfg.total_iterations());

    for outer in 0..cfg.outer_loops {
        let temperature = cfg.temperature_at(outer);
        for inner in 0..cfg.inner_loops {
            let iteration = outer * cfg.inner_loops + inner + 1;
            objective.on_iteration(iteration);

            if inner == 0 && outer > 0 {
                if let Some(drop) = cfg.relock_drop {
                    let fresh = objective.evaluate(&search.phases(&current))?.i_px;
                    if fresh < best_i - drop {
                        i_current = fresh;
                        best_i = fresh;
                        best_phases = search.phases(&current);
                        best_iteration = iteration;
                        relocks.push(iteration);
                    }
                }
            }

            let st = cfg.schedule.step_for_gap(1.0 - best_i);
            let candidate = propose(&current, search.step(st), upper, rng);
            let phases = search.phases(&candidate);
            let sample = objective.evaluate(&phases)?;
            let accepted = accept(sample.i_px, i_current, temperature, rng);
            if accepted {
                current = candidate;
                i_current = sample.i_px;
            }
            if sample.i_px > best_i {
                best_i = sample.i_px;
                best_phases = phases;
                best_iteration = iteration;
            }
            steps.push(TraceStep {
                iteration,
                temperature,
                step_rad: st,
                proposal: phases,
                drive: (cfg.mode == StepDomain::Voltage).then_some(candidate),
                sample,
                er_db: sample.er_db(),
                accepted,
                best_i_px: best_i,
            });
        }
    }

    Ok(LockTrace {
        initial,
        initial_phases,
        steps,
        best_i_px: best_i,
        best_phases,
        best_iteration,
        relocks,
    })
}

/// [`run_lock`] with a constant step `st` (radians).
pub fn run_lock_fixed<O, R>(
    objective: &mut O,
    cfg: &AnnealConfig,
    st: f64,
    tps: &TpsParams,
    rng: &mut R,
) -> Result<LockTrace>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    run_lock(
        objective,
        &cfg.with_schedule(StepSchedule::fixed(st)),
        tps,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{dpc_transform, DeviceParams};
    use crate::jones::{random_sop, JonesVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn objective(sop: JonesVector, params: DeviceParams, seed: u64) -> DeviceObjective<ChaCha8Rng> {
        DeviceObjective {
            sop,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[test]
    fn step_for_gap_brackets() {
        let s = StepSchedule::variable();
        assert_eq!(s.step_for_gap(0.5), 0.16);
        assert_eq!(s.step_for_gap(1.0), 0.16);
        assert_eq!(s.step_for_gap(0.1), 0.08);
        assert_eq!(s.step_for_gap(0.05), 0.08);
        assert_eq!(s.step_for_gap(0.01), 0.03);
        assert_eq!(s.step_for_gap(0.005), 0.03);
        assert_eq!(s.step_for_gap(0.001), 0.008);
        assert_eq!(s.step_for_gap(0.0005), 0.008);
        assert_eq!(s.step_for_gap(-0.2), 0.008);
        assert_eq!(s.step_for_gap(7.0), 0.16);
        assert_eq!(StepSchedule::fixed(0.03).step_for_gap(0.9), 0.03);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(vec![]).is_err());
        assert!(StepSchedule::new(vec![(1.0, 0.1), (1.0, 0.05)]).is_err());
        assert!(StepSchedule::new(vec![(1.0, 0.1), (0.1, 0.2)]).is_err());
        assert!(StepSchedule::new(vec![(1.0, 0.1), (0.1, 0.0)]).is_err());
        assert!(StepSchedule::new(vec![(1.0, -0.1)]).is_err());
        assert!(StepSchedule::new(vec![(1.0, 0.0)]).is_ok());
    }

    #[test]
    fn proposal_component_branches() {
        let up = 3.0 * PI;
        assert!((propose_component(0.0, 0.16, up, 0.5, -1.0) - 0.08).abs() < 1e-15);
        assert!((propose_component(up, 0.16, up, 1.0, 1.0) - (up - 0.16)).abs() < 1e-15);
        assert!((propose_component(PI, 0.08, up, 0.25, -1.0) - (PI - 0.02)).abs() < 1e-15);
        assert!((propose_component(PI, 0.08, up, 0.25, 1.0) - (PI + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn proposals_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let up = 3.0 * PI;
        let mut q = PhaseQuad::new(0.0, up, 0.05, up - 0.05);
        for _ in 0..10_000 {
            let next = propose(&q, 0.16, up, &mut rng);
            for k in 0..4 {
                assert!((next.0[k] - q.0[k]).abs() <= 0.16 + 1e-12);
                if q.0[k] <= 0.0 {
                    assert!(next.0[k] >= 0.0);
                }
                if q.0[k] >= up {
                    assert!(next.0[k] <= up);
                }
            }
            assert!(next.within(0.0, up));
            q = next;
        }
    }

    #[test]
    fn metropolis_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(accept(0.6, 0.5, 1e-5, &mut rng));
        assert!(accept(0.5, 0.5, 1e-5, &mut rng));
        let p = acceptance_probability(0.5 - 1e-5, 0.5, 1e-5);
        assert!((p - (-1f64).exp()).abs() < 1e-9);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| accept(0.5 - 1e-5, 0.5, 1e-5, &mut rng))
            .count();
        assert!((hits as f64 / n as f64 - 0.3679).abs() < 0.01);
        assert!(acceptance_probability(0.0, 1.0, 1e-5) < 1e-43);
        assert!(!(0..1000).any(|_| accept(0.0, 1.0, 1e-5, &mut rng)));
    }

    #[test]
    fn voltage_domain_steps() {
        let tps = TpsParams::default();
        assert!((voltage_domain_step(0.008, &tps) - 4.78e-3).abs() < 5e-6);
        assert!((voltage_domain_step(0.16, &tps) - 95.6e-3).abs() < 5e-5);
        assert_eq!(voltage_domain_step(0.0, &tps), 0.0);
    }

    #[test]
    fn temperature_follows_geometric_cooling() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        let mut obj = objective(random_sop(1), DeviceParams::default(), 1);
        let trace = run_lock(&mut obj, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(trace.steps.len(), 500);
        let mut t = cfg.t0;
        for k in 0..cfg.outer_loops {
            for s in &trace.steps[k * 50..(k + 1) * 50] {
                assert_eq!(s.temperature, cfg.t0 * cfg.cooling_p.powi(k as i32));
                assert!((s.temperature - t).abs() <= 1e-15 * t);
            }
            t *= cfg.cooling_p;
        }
    }

    #[test]
    fn trace_invariants_hold() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        for seed in 0..20 {
            let mut obj = objective(random_sop(seed), DeviceParams::default(), seed);
            let trace =
                run_lock(&mut obj, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(trace.relocks.is_empty());
            let mut prev_best = trace.initial.i_px;
            let mut prev_step = f64::INFINITY;
            for s in &trace.steps {
                assert!(s.best_i_px >= prev_best);
                assert!(s.step_rad <= prev_step);
                assert!(s.proposal.within(0.0, tps.phase_max));
                prev_best = s.best_i_px;
                prev_step = s.step_rad;
            }
            assert_eq!(prev_best, trace.best_i_px);
            if trace.best_iteration > 0 {
                let s = &trace.steps[trace.best_iteration - 1];
                assert_eq!(s.sample.i_px, trace.best_i_px);
                assert_eq!(s.proposal, trace.best_phases);
            }
            // Noiseless re-read of S_max is within noise of I_max.
            let (ix, _) = crate::device::port_powers(&obj.sop, &trace.best_phases);
            assert!(ix >= trace.best_i_px - 6.0 * 5e-4);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        let run = || {
            let mut obj = objective(random_sop(9), DeviceParams::default(), 9);
            run_lock(&mut obj, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn locked_start_stays_locked() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        // Input that the initial phases route entirely to the x port.
        let start = dpc_transform(&PhaseQuad::splat(1.5 * PI));
        let sop = start.dagger().apply(&JonesVector::horizontal());
        let mut obj = objective(sop, DeviceParams::default().noiseless(), 3);
        let trace = run_lock(&mut obj, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let er0 = trace.initial.er_db();
        assert!((er0 - 28.0).abs() < 1e-6);
        for s in &trace.steps {
            assert!(
                (s.er_db - er0).abs() <= 2.0,
                "iteration {}: {}",
                s.iteration,
                s.er_db
            );
        }
    }

    #[test]
    fn zero_step_keeps_trace_constant() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        let mut obj = objective(random_sop(5), DeviceParams::default().noiseless(), 5);
        let trace =
            run_lock_fixed(&mut obj, &cfg, 0.0, &tps, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for s in &trace.steps {
            assert_eq!(s.proposal, trace.initial_phases);
            assert_eq!(s.sample, trace.initial);
        }
    }

    #[test]
    fn voltage_mode_moves_in_voltage_space() {
        let cfg = AnnealConfig {
            mode: StepDomain::Voltage,
            ..AnnealConfig::default()
        };
        let tps = TpsParams::default();
        let mut obj = objective(random_sop(6), DeviceParams::default(), 6);
        let trace = run_lock(&mut obj, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let v0 = tps.voltage_for_phase(1.5 * PI).unwrap();
        assert!((trace.initial_phases.0[0] - 1.5 * PI).abs() < 1e-9);
        let first = trace.steps[0].drive.unwrap();
        let dv = voltage_domain_step(trace.steps[0].step_rad, &tps);
        for v in first.0 {
            assert!((v - v0).abs() <= dv + 1e-12);
        }
        for s in &trace.steps {
            assert!(s.drive.unwrap().within(0.0, tps.v_max));
        }
        assert!(trace.best_i_px > 0.99);
    }

    #[test]
    fn objective_errors_propagate() {
        let cfg = AnnealConfig::default();
        let tps = TpsParams::default();
        let mut calls = 0;
        let mut failing = |_: &PhaseQuad| -> Result<DetectorSample> {
            calls += 1;
            if calls > 3 {
                Err(Error::Objective("detector offline".into()))
            } else {
                Ok(DetectorSample {
                    i_px: 0.5,
                    i_py: 0.5,
                })
            }
        };
        let err = run_lock(&mut failing, &cfg, &tps, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Objective(_))));
    }

    #[test]
    fn config_validation() {
        let tps = TpsParams::default();
        let bad = [
            AnnealConfig {
                t0: 0.0,
                ..Default::default()
            },
            AnnealConfig {
                outer_loops: 0,
                ..Default::default()
            },
            AnnealConfig {
                inner_loops: 0,
                ..Default::default()
            },
            AnnealConfig {
                cooling_p: 1.0,
                ..Default::default()
            },
            AnnealConfig {
                init_phase: Some(-0.1),
                ..Default::default()
            },
            AnnealConfig {
                relock_drop: Some(0.0),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate(&tps).is_err(), "{cfg:?}");
        }
        assert!(AnnealConfig::default().validate(&tps).is_ok());
    }
}
