//! Chip model: thermo-optic phase shifters, the four-stage retarder cascade,
//! the grating-coupler splitter with a finite static extinction ratio, and
//! noisy detectors.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::jones::{m0_unchecked, m45_unchecked, JonesMatrix, JonesVector};

/// Intensities below this are clamped before taking an extinction ratio.
pub const ER_INTENSITY_FLOOR: f64 = 1e-12;

/// Electrical and dynamic constants of one TiN heater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpsParams {
    /// Heater resistance, ohms.
    pub resistance: f64,
    /// Thermo-optic slope, rad/W.
    pub c_slope: f64,
    /// Phase at zero drive, rad.
    pub theta_bias: f64,
    /// Maximum drive voltage, V.
    pub v_max: f64,
    /// Upper bound of the searched phase range, rad.
    pub phase_max: f64,
    /// Time for an upward step to cover 90% of its swing, s.
    pub rise_time: f64,
    /// Time for a downward step to cover 90% of its swing, s.
    pub fall_time: f64,
}

impl Default for TpsParams {
    fn default() -> Self {
        Self {
            resistance: 1970.0,
            c_slope: 164.85,
            theta_bias: 0.93,
            v_max: 10.0,
            phase_max: 3.0 * PI,
            rise_time: 11e-6,
            fall_time: 5.9e-6,
        }
    }
}

impl TpsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tps.resistance", self.resistance),
            ("tps.c_slope", self.c_slope),
            ("tps.v_max", self.v_max),
            ("tps.phase_max", self.phase_max),
            ("tps.rise_time", self.rise_time),
            ("tps.fall_time", self.fall_time),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    key,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if !(0.0..2.0 * PI).contains(&self.theta_bias) {
            return Err(Error::invalid(
                "tps.theta_bias",
                format!("must lie in [0, 2π), got {}", self.theta_bias),
            ));
        }
        Ok(())
    }

    /// First-order time constant for rising phase.
    ///
    /// The 90% crossing of exp settling happens at τ·ln 10.
    pub fn tau_rise(&self) -> f64 {
        self.rise_time / std::f64::consts::LN_10
    }

    pub fn tau_fall(&self) -> f64 {
        self.fall_time / std::f64::consts::LN_10
    }

    /// −3 dB bandwidth of the first-order rising response, Hz.
    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / (2.0 * PI * self.tau_rise())
    }

    /// Steady-state phase at drive voltage `v`.
    pub fn phase_at(&self, v: f64) -> Result<f64> {
        power_to_phase(voltage_to_power(v, self)?, self)
    }

    /// Phase reachable at `v_max`.
    pub fn phase_at_v_max(&self) -> f64 {
        self.c_slope * self.v_max * self.v_max / self.resistance + self.theta_bias
    }

    /// Inverse of [`TpsParams::phase_at`].
    pub fn voltage_for_phase(&self, theta: f64) -> Result<f64> {
        let hi = self.phase_at_v_max();
        if !(self.theta_bias..=hi).contains(&theta) {
            return Err(Error::OutOfRange {
                what: "phase",
                value: theta,
                lo: self.theta_bias,
                hi,
            });
        }
        Ok(((theta - self.theta_bias) * self.resistance / self.c_slope).sqrt())
    }
}

/// P = V²/R.
pub fn voltage_to_power(v: f64, tps: &TpsParams) -> Result<f64> {
    if !(0.0..=tps.v_max).contains(&v) {
        return Err(Error::OutOfRange {
            what: "voltage",
            value: v,
            lo: 0.0,
            hi: tps.v_max,
        });
    }
    Ok(v * v / tps.resistance)
}

/// θ = c·P + θ_bias.
pub fn power_to_phase(p: f64, tps: &TpsParams) -> Result<f64> {
    ensure_finite("power", p)?;
    if p < 0.0 {
        return Err(Error::OutOfRange {
            what: "power",
            value: p,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(tps.c_slope * p + tps.theta_bias)
}

/// Voltage step giving phase step `dtheta` around operating voltage `v`:
/// ΔV = R·Δθ / (2·c·V).
pub fn phase_step_to_voltage_step(dtheta: f64, v: f64, tps: &TpsParams) -> Result<f64> {
    ensure_finite("dtheta", dtheta)?;
    ensure_finite("voltage", v)?;
    if v <= 0.0 {
        return Err(Error::Singular(v));
    }
    Ok(tps.resistance * dtheta / (2.0 * tps.c_slope * v))
}

/// Phase of a heater `t` seconds after its drive jumps from `v_from` to `v_to`.
///
/// Exponential settling between the two steady-state phases, using the rise
/// constant when the phase increases and the fall constant when it decreases.
pub fn thermal_step_response(v_from: f64, v_to: f64, t: f64, tps: &TpsParams) -> Result<f64> {
    ensure_finite("time", t)?;
    if t < 0.0 {
        return Err(Error::OutOfRange {
            what: "time",
            value: t,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let start = tps.phase_at(v_from)?;
    let end = tps.phase_at(v_to)?;
    let tau = if end >= start {
        tps.tau_rise()
    } else {
        tps.tau_fall()
    };
    Ok(end + (start - end) * (-t / tau).exp())
}

/// The four stage phases θ₁..θ₄ (search point of the controller), rad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseQuad(pub [f64; 4]);

impl PhaseQuad {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Self {
        Self([theta1, theta2, theta3, theta4])
    }

    pub fn splat(theta: f64) -> Self {
        Self([theta; 4])
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        Self(self.0.map(|t| t.clamp(lo, hi)))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|t| t.is_finite())
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.0.iter().all(|t| (lo..=hi).contains(t))
    }
}

/// Transfer matrix of the cascade M₀(θ₁) → M₄₅(θ₂) → M₀(θ₃) → M₄₅(θ₄).
pub fn dpc_transform(phases: &PhaseQuad) -> JonesMatrix {
    let [t1, t2, t3, t4] = phases.0;
    m45_unchecked(t4) * m0_unchecked(t3) * m45_unchecked(t2) * m0_unchecked(t1)
}

/// Ideal output-port powers (x, y) for `input` through the cascade.
pub fn port_powers(input: &JonesVector, phases: &PhaseQuad) -> (f64, f64) {
    let out = dpc_transform(phases).apply(input);
    (out.ex.norm_sqr(), out.ey.norm_sqr())
}

/// Whole-device parameters. Intensities are normalized to I_in = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub tps: TpsParams,
    /// Static extinction ratio of the output splitter, dB. `inf` = ideal.
    pub static_er_db: f64,
    /// Std. dev. of additive detector noise on normalized intensity.
    pub noise_sigma: f64,
    /// Loss per grating coupler, dB (absolute-power reporting only).
    pub coupling_loss_db: f64,
    /// On-chip transmission loss, dB (absolute-power reporting only).
    pub on_chip_loss_db: f64,
    /// Hard upper clamp on each detector reading.
    pub detector_saturation: Option<f64>,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            tps: TpsParams::default(),
            static_er_db: 28.0,
            noise_sigma: 5e-4,
            coupling_loss_db: 7.0,
            on_chip_loss_db: 3.0,
            detector_saturation: None,
        }
    }
}

impl DeviceParams {
    /// Lossless, noiseless, perfect splitter.
    pub fn ideal() -> Self {
        Self {
            static_er_db: f64::INFINITY,
            noise_sigma: 0.0,
            coupling_loss_db: 0.0,
            on_chip_loss_db: 0.0,
            ..Self::default()
        }
    }

    pub fn noiseless(self) -> Self {
        Self {
            noise_sigma: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tps.validate()?;
        if self.static_er_db.is_nan() || self.static_er_db <= 0.0 {
            return Err(Error::invalid(
                "device.static_er_db",
                format!("must be > 0, got {}", self.static_er_db),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "device.noise_sigma",
                format!("must be finite and ≥ 0, got {}", self.noise_sigma),
            ));
        }
        for (key, v) in [
            ("device.coupling_loss_db", self.coupling_loss_db),
            ("device.on_chip_loss_db", self.on_chip_loss_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    key,
                    format!("must be finite and ≥ 0, got {v}"),
                ));
            }
        }
        if let Some(sat) = self.detector_saturation {
            if !(sat.is_finite() && sat > 0.0) {
                return Err(Error::invalid(
                    "device.detector_saturation",
                    format!("must be finite and > 0, got {sat}"),
                ));
            }
        }
        Ok(())
    }

    /// Leakage fraction 10^(−ER/10) of the output splitter.
    pub fn leakage(&self) -> f64 {
        10f64.powf(-self.static_er_db / 10.0)
    }

    /// Input coupler + on-chip + output coupler, dB.
    pub fn insertion_loss_db(&self) -> f64 {
        2.0 * self.coupling_loss_db + self.on_chip_loss_db
    }

    /// Converts a normalized sample to absolute detector powers, W.
    pub fn absolute_powers(&self, sample: &DetectorSample, input_power_w: f64) -> (f64, f64) {
        let gain = input_power_w * 10f64.powf(-self.insertion_loss_db() / 10.0);
        (sample.i_px * gain, sample.i_py * gain)
    }
}

/// One reading of the two output detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSample {
    /// LO-path port, maximized by the controller.
    pub i_px: f64,
    /// Signal-path port.
    pub i_py: f64,
}

impl DetectorSample {
    /// Extinction ratio with both readings clamped to [`ER_INTENSITY_FLOOR`].
    pub fn er_db(&self) -> f64 {
        10.0 * (self.i_px.max(ER_INTENSITY_FLOOR) / self.i_py.max(ER_INTENSITY_FLOOR)).log10()
    }
}

/// Detector readout without noise or saturation, splitter floor included.
pub fn noiseless_reading(
    input_sop: &JonesVector,
    phases: &PhaseQuad,
    params: &DeviceParams,
) -> DetectorSample {
    let (ix, iy) = port_powers(input_sop, phases);
    DetectorSample {
        i_px: ix,
        i_py: iy.max(ix * params.leakage()),
    }
}

/// Simulated detector readout for `input_sop` at `phases`.
///
/// The splitter floor raises the y-port to at least I_px·10^(−ER/10), so a
/// noiseless reading never exceeds the static extinction ratio. Two normal
/// draws are consumed per call whatever the noise level.
pub fn measure<R: Rng + ?Sized>(
    input_sop: &JonesVector,
    phases: &PhaseQuad,
    params: &DeviceParams,
    rng: &mut R,
) -> DetectorSample {
    let DetectorSample { i_px: ix, i_py: iy } = noiseless_reading(input_sop, phases, params);
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    let sat = params.detector_saturation.unwrap_or(f64::INFINITY);
    let read = |i: f64, n: f64| (i + params.noise_sigma * n).clamp(0.0, sat);
    DetectorSample {
        i_px: read(ix, nx),
        i_py: read(iy, ny),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jones::random_sop;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn voltage_to_power_examples() {
        let tps = TpsParams::default();
        assert_eq!(voltage_to_power(0.0, &tps).unwrap(), 0.0);
        assert!((voltage_to_power(10.0, &tps).unwrap() - 50.76e-3).abs() < 5e-6);
        assert!((voltage_to_power(5.6, &tps).unwrap() - 15.92e-3).abs() < 5e-6);
        assert!(voltage_to_power(-0.1, &tps).is_err());
        assert!(voltage_to_power(10.01, &tps).is_err());
    }

    #[test]
    fn power_to_phase_examples() {
        let tps = TpsParams::default();
        assert!((power_to_phase(0.0, &tps).unwrap() - 0.93).abs() < 1e-12);
        let span = power_to_phase(50.56e-3, &tps).unwrap();
        assert!((span - 9.265).abs() < 1e-3);
        assert!((span / PI - 2.95).abs() < 0.01);
        assert!((power_to_phase(25.28e-3, &tps).unwrap() - 5.097).abs() < 1e-3);
        assert!(power_to_phase(-1e-6, &tps).is_err());
    }

    #[test]
    fn voltage_step_examples() {
        let tps = TpsParams::default();
        assert!(
            rel(
                phase_step_to_voltage_step(0.16, 10.0, &tps).unwrap(),
                0.0956
            ) < 1e-3
        );
        assert!(
            rel(
                phase_step_to_voltage_step(0.008, 10.0, &tps).unwrap(),
                4.78e-3
            ) < 1e-3
        );
        assert!(rel(phase_step_to_voltage_step(0.16, 5.0, &tps).unwrap(), 0.191) < 2e-3);
        assert!(matches!(
            phase_step_to_voltage_step(0.16, 0.0, &tps),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn voltage_step_is_local_linearization() {
        let tps = TpsParams::default();
        let v = 8.0;
        for k in 1..=10 {
            let dtheta = 0.001 * k as f64;
            let dv = phase_step_to_voltage_step(dtheta, v, &tps).unwrap();
            let moved = tps.phase_at(v + dv).unwrap() - tps.phase_at(v).unwrap();
            assert!(rel(moved, dtheta) < 0.02, "Δθ = {dtheta}: moved {moved}");
        }
    }

    #[test]
    fn phase_voltage_inverse() {
        let tps = TpsParams::default();
        for v in [0.0, 0.5, 3.3, 7.0, 10.0] {
            let back = tps.voltage_for_phase(tps.phase_at(v).unwrap()).unwrap();
            assert!((back - v).abs() < 1e-12);
        }
        assert!(tps.voltage_for_phase(0.5).is_err());
    }

    #[test]
    fn transfer_chain_is_monotone() {
        let tps = TpsParams::default();
        let mut prev_p = -1.0;
        let mut prev_theta = -1.0;
        for k in 0..=100 {
            let v = tps.v_max * k as f64 / 100.0;
            let p = voltage_to_power(v, &tps).unwrap();
            let theta = power_to_phase(p, &tps).unwrap();
            assert!(p > prev_p && theta > prev_theta);
            prev_p = p;
            prev_theta = theta;
        }
    }

    #[test]
    fn dpc_identity_and_unitary() {
        let id = dpc_transform(&PhaseQuad::splat(0.0));
        assert!(id.max_abs_diff(&JonesMatrix::identity()) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = PhaseQuad(std::array::from_fn(|_| rng.random_range(0.0..3.0 * PI)));
            assert!(dpc_transform(&q).is_unitary(1e-12));
        }
    }

    #[test]
    fn measure_symmetric_split() {
        let params = DeviceParams::ideal();
        let diag = JonesVector::from_real(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = measure(&diag, &PhaseQuad::splat(0.0), &params, &mut rng);
        assert!((s.i_px - 0.5).abs() < 1e-12 && (s.i_py - 0.5).abs() < 1e-12);
        assert!(s.er_db().abs() < 1e-9);
    }

    #[test]
    fn measure_static_floor_caps_er() {
        let params = DeviceParams::default().noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = measure(
            &JonesVector::horizontal(),
            &PhaseQuad::splat(0.0),
            &params,
            &mut rng,
        );
        assert_eq!(s.i_px, 1.0);
        assert!((s.i_py - 10f64.powf(-2.8)).abs() < 1e-15);
        assert!((s.er_db() - 28.0).abs() < 1e-9);
    }

    #[test]
    fn measure_noise_has_configured_sigma() {
        let params = DeviceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sop = random_sop(4);
        let q = PhaseQuad::splat(1.0);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| measure(&sop, &q, &params, &mut rng).i_px)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(rel(var.sqrt(), 5e-4) < 0.10, "sd = {}", var.sqrt());
    }

    #[test]
    fn measure_saturation_clamps() {
        let params = DeviceParams {
            detector_saturation: Some(0.2),
            ..DeviceParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = measure(
            &JonesVector::horizontal(),
            &PhaseQuad::splat(0.0),
            &params,
            &mut rng,
        );
        assert_eq!(s.i_px, 0.2);
    }

    #[test]
    fn thermal_response_limits() {
        let tps = TpsParams::default();
        let start = thermal_step_response(0.0, 5.6, 0.0, &tps).unwrap();
        assert!((start - tps.phase_at(0.0).unwrap()).abs() < 1e-12);
        let end = thermal_step_response(0.0, 5.6, 1.0, &tps).unwrap();
        assert!((end - tps.phase_at(5.6).unwrap()).abs() < 1e-9);
        assert!(thermal_step_response(0.0, 5.6, -1e-6, &tps).is_err());
        assert!(thermal_step_response(0.0, 11.0, 1e-6, &tps).is_err());
    }

    #[test]
    fn thermal_response_hits_ninety_percent_at_rise_time() {
        let tps = TpsParams::default();
        let (lo, hi) = (tps.phase_at(0.0).unwrap(), tps.phase_at(5.6).unwrap());
        let at = |t: f64| (thermal_step_response(0.0, 5.6, t, &tps).unwrap() - lo) / (hi - lo);
        assert!(at(11e-6 * 0.99) < 0.9 && at(11e-6 * 1.01) > 0.9);
        let down = |t: f64| (hi - thermal_step_response(5.6, 0.0, t, &tps).unwrap()) / (hi - lo);
        assert!(down(5.9e-6 * 0.99) < 0.9 && down(5.9e-6 * 1.01) > 0.9);
    }

    #[test]
    fn bandwidth_is_about_thirty_khz() {
        let bw = TpsParams::default().bandwidth_hz();
        assert!((30e3..36e3).contains(&bw), "{bw}");
    }

    #[test]
    fn absolute_power_uses_loss_budget() {
        let params = DeviceParams::default();
        assert_eq!(params.insertion_loss_db(), 17.0);
        let s = DetectorSample {
            i_px: 1.0,
            i_py: 0.0,
        };
        let (px, _) = params.absolute_powers(&s, 1e-3);
        assert!(rel(px, 1e-3 * 10f64.powf(-1.7)) < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let p = DeviceParams {
            noise_sigma: -1.0,
            ..DeviceParams::default()
        };
        assert!(p.validate().is_err());
        let mut p = DeviceParams::default();
        p.tps.resistance = 0.0;
        assert!(p.validate().is_err());
        let p = DeviceParams {
            static_er_db: f64::INFINITY,
            ..DeviceParams::default()
        };
        assert!(p.validate().is_ok());
        assert_eq!(p.leakage(), 0.0);
    }
}
