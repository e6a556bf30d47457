//! Self-check of the Jones algebra and actuator arithmetic, run by `validate`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{
    dpc_transform, phase_step_to_voltage_step, power_to_phase, PhaseQuad, TpsParams,
};
use crate::jones::{
    m0_unchecked, m45_unchecked, m45_via_couplers, random_sop_with, to_stokes, JonesVector,
};

/// Elementwise and unitarity tolerance.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Runs every identity with `samples` random draws per check.
pub fn identity_suite(samples: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let worst = (0..samples)
        .map(|_| {
            let d = rng.random_range(0.0..=3.0 * PI);
            m45_via_couplers(d)
                .expect("finite")
                .max_abs_diff(&m45_unchecked(d))
        })
        .fold(0.0, f64::max);
    out.push(check(
        "coupler_decomposition",
        worst <= ALGEBRA_TOL,
        format!("max |Δ| = {worst:.2e} over {samples} δ"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let d = rng.random_range(0.0..=3.0 * PI);
        let q = PhaseQuad(std::array::from_fn(|_| rng.random_range(0.0..=3.0 * PI)));
        for m in [m0_unchecked(d), m45_unchecked(d), dpc_transform(&q)] {
            worst = worst.max(m.unitarity_defect());
        }
    }
    out.push(check(
        "unitarity",
        worst <= ALGEBRA_TOL,
        format!("max ‖M†M − I‖ = {worst:.2e}"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let v = random_sop_with(&mut rng);
        let q = PhaseQuad(std::array::from_fn(|_| rng.random_range(0.0..=3.0 * PI)));
        worst = worst.max((dpc_transform(&q).apply(&v).intensity() - 1.0).abs());
    }
    out.push(check(
        "norm_preservation",
        worst <= ALGEBRA_TOL,
        format!("max |‖Mv‖² − 1| = {worst:.2e}"),
    ));

    let h = FRAC_1_SQRT_2;
    let cases = [
        (JonesVector::horizontal(), [1.0, 0.0, 0.0]),
        (JonesVector::vertical(), [-1.0, 0.0, 0.0]),
        (JonesVector::from_real(h, h), [0.0, 1.0, 0.0]),
        (
            JonesVector::new(Complex64::new(h, 0.0), Complex64::new(0.0, h)),
            [0.0, 0.0, 1.0],
        ),
    ];
    let worst = cases
        .iter()
        .map(|(v, want)| {
            let got = to_stokes(v).expect("unit vector").unit();
            (0..3).map(|k| (got[k] - want[k]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    out.push(check(
        "stokes_basis",
        worst <= ALGEBRA_TOL,
        format!("max component error {worst:.2e}"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let v = random_sop_with(&mut rng);
        let phi = rng.random_range(0.0..2.0 * PI);
        let a = to_stokes(&v).expect("unit vector");
        let b = to_stokes(&v.scale(Complex64::cis(phi))).expect("unit vector");
        worst = worst
            .max((a.s1 - b.s1).abs())
            .max((a.s2 - b.s2).abs())
            .max((a.s3 - b.s3).abs())
            .max((a.degree_of_polarization() - 1.0).abs());
    }
    out.push(check(
        "stokes_global_phase",
        worst <= ALGEBRA_TOL,
        format!("max drift {worst:.2e}"),
    ));

    out.extend(actuator_checks(&TpsParams::default()));
    out
}

/// Heater arithmetic against the reference drive values.
pub fn actuator_checks(tps: &TpsParams) -> Vec<Check> {
    let within = |x: f64, target: f64, rel: f64| ((x - target) / target).abs() <= rel;
    let mut out = Vec::new();
    for (name, dtheta, target) in [
        ("voltage_step_coarse", 0.16, 0.1),
        ("voltage_step_fine", 0.008, 0.005),
    ] {
        let dv = phase_step_to_voltage_step(dtheta, tps.v_max, tps).unwrap_or(f64::NAN);
        out.push(check(
            name,
            within(dv, target, 0.05),
            format!(
                "Δθ = {dtheta} rad at {} V → {dv:.4e} V (target {target} V ± 5%)",
                tps.v_max
            ),
        ));
    }
    let theta = power_to_phase(50.56e-3, tps).unwrap_or(f64::NAN);
    out.push(check(
        "phase_span",
        within(theta, 3.0 * PI, 0.02),
        format!("P = 50.56 mW → {theta:.4} rad (target 3π ± 2%)"),
    ));
    out
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
