//! Brute-force reference optimum: exhaustive grid then coordinate descent.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::device::{port_powers, DeviceParams, PhaseQuad};
use crate::error::{Error, Result};
use crate::jones::{m0_unchecked, m45_unchecked, JonesVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Points per axis, endpoints included.
    pub grid_points: usize,
    /// Upper end of each phase axis, rad.
    pub upper: f64,
    pub step_start: f64,
    pub step_min: f64,
    /// Reading clamp, as on the detector.
    pub saturation: Option<f64>,
}

impl OracleSettings {
    pub fn for_device(device: &DeviceParams) -> Self {
        Self {
            grid_points: 64,
            upper: device.tps.phase_max,
            step_start: 0.05,
            step_min: 1e-5,
            saturation: device.detector_saturation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub intensity: f64,
    pub phases: PhaseQuad,
    /// Best value on the grid, before refinement.
    pub grid_intensity: f64,
}

/// Highest I_px reachable for `sop` on a noiseless `device`.
pub fn oracle_best(sop: &JonesVector, device: &DeviceParams) -> Result<OracleResult> {
    if device.noise_sigma != 0.0 {
        return Err(Error::invalid(
            "device.noise_sigma",
            format!(
                "oracle needs a noiseless device, got {}",
                device.noise_sigma
            ),
        ));
    }
    device.validate()?;
    let sop = sop.normalized()?;
    Ok(oracle_best_with(&sop, &OracleSettings::for_device(device)))
}

/// [`oracle_best`] for many SOPs in parallel; results keep input order.
pub fn oracle_best_many(sops: &[JonesVector], device: &DeviceParams) -> Result<Vec<OracleResult>> {
    sops.par_iter().map(|s| oracle_best(s, device)).collect()
}

pub fn oracle_best_with(sop: &JonesVector, s: &OracleSettings) -> OracleResult {
    let sat = s.saturation.unwrap_or(f64::INFINITY);
    let objective = |p: &PhaseQuad| port_powers(sop, p).0.min(sat);

    let (grid_intensity, start) = grid_search(sop, s);
    let grid_intensity = grid_intensity.min(sat);
    let (intensity, phases) = coordinate_descent(objective, start, s);
    OracleResult {
        intensity,
        phases,
        grid_intensity,
    }
}

fn grid(s: &OracleSettings) -> Vec<f64> {
    let n = s.grid_points.max(2);
    (0..n)
        .map(|k| s.upper * k as f64 / (n - 1) as f64)
        .collect()
}

/// Exhaustive search over the grid, reusing partial products of the
/// cascade so each point costs a handful of complex multiplies.
fn grid_search(sop: &JonesVector, s: &OracleSettings) -> (f64, PhaseQuad) {
    let axis = grid(s);
    let m0: Vec<_> = axis.iter().map(|&t| m0_unchecked(t)).collect();
    let m45: Vec<_> = axis.iter().map(|&t| m45_unchecked(t)).collect();
    // Only the x-row of the last stage matters: (cos, −i·sin).
    let last: Vec<(f64, Complex64)> = axis
        .iter()
        .map(|&t| {
            let (sn, cs) = (0.5 * t).sin_cos();
            (cs, Complex64::new(0.0, -sn))
        })
        .collect();

    let n = axis.len();
    let (best, idx) = (0..n * n)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            let v2 = m45[j].apply(&m0[i].apply(sop));
            let mut best = (f64::NEG_INFINITY, [0usize; 4]);
            for (k, m) in m0.iter().enumerate() {
                let v3 = m.apply(&v2);
                for (l, &(c, o)) in last.iter().enumerate() {
                    let x = (v3.ex * c + v3.ey * o).norm_sqr();
                    if x > best.0 {
                        best = (x, [i, j, k, l]);
                    }
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, [0; 4]),
            // Ties go to the lower index so the result is schedule-independent.
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    (best, PhaseQuad(idx.map(|k| axis[k])))
}

fn coordinate_descent<F: Fn(&PhaseQuad) -> f64>(
    f: F,
    start: PhaseQuad,
    s: &OracleSettings,
) -> (f64, PhaseQuad) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = s.step_start;
    while step >= s.step_min {
        let mut improved = false;
        for d in 0..4 {
            for sign in [1.0, -1.0] {
                // Keep walking along this direction while it pays.
                loop {
                    let mut y = x;
                    y.0[d] = (y.0[d] + sign * step).clamp(0.0, s.upper);
                    let fy = f(&y);
                    if fy > fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    } else {
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}
