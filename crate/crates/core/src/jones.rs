//! Jones-calculus kernel: polarization states, 2×2 transfer matrices,
//! Stokes diagnostics and extinction-ratio arithmetic.
//!
//! Basis: `ex` is the mode routed to the x (LO) port of the output splitter,
//! `ey` the mode routed to the y (signal) port.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Mul;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fully polarized field, two complex mode amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub ex: Complex64,
    pub ey: Complex64,
}

impl JonesVector {
    pub const fn new(ex: Complex64, ey: Complex64) -> Self {
        Self { ex, ey }
    }

    pub fn from_real(ex: f64, ey: f64) -> Self {
        Self::new(Complex64::new(ex, 0.0), Complex64::new(ey, 0.0))
    }

    pub fn horizontal() -> Self {
        Self::new(ONE, ZERO)
    }

    pub fn vertical() -> Self {
        Self::new(ZERO, ONE)
    }

    /// |ex|² + |ey|²
    pub fn intensity(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.intensity().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() {
            return Err(Error::NonFinite {
                what: "Jones vector norm",
                value: n,
            });
        }
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self::new(self.ex / n, self.ey / n))
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.intensity() - 1.0).abs() <= tol
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.ex.conj() * other.ex + self.ey.conj() * other.ey
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::new(self.ex * factor, self.ey * factor)
    }

    /// Equality up to a global phase (and overall scale): 1 − |⟨a|b⟩|²/(‖a‖²‖b‖²) ≤ tol.
    pub fn same_sop(&self, other: &Self, tol: f64) -> bool {
        let (na, nb) = (self.intensity(), other.intensity());
        if na == 0.0 || nb == 0.0 {
            return false;
        }
        1.0 - self.inner(other).norm_sqr() / (na * nb) <= tol
    }
}

/// Complex 2×2 transfer matrix acting on column Jones vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix {
    pub m: [[Complex64; 2]; 2],
}

impl JonesMatrix {
    pub const fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self {
            m: [[m00, m01], [m10, m11]],
        }
    }

    pub fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn diag(d0: Complex64, d1: Complex64) -> Self {
        Self::new(d0, ZERO, ZERO, d1)
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self::new(
            m[0][0].conj(),
            m[1][0].conj(),
            m[0][1].conj(),
            m[1][1].conj(),
        )
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }

    /// max |(M†M − I)ᵢⱼ|
    pub fn unitarity_defect(&self) -> f64 {
        (self.dagger() * *self).max_abs_diff(&Self::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        apply(self, v)
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        let (a, b) = (&self.m, &rhs.m);
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        JonesMatrix { m: out }
    }
}

impl Mul<JonesVector> for JonesMatrix {
    type Output = JonesVector;

    fn mul(self, rhs: JonesVector) -> JonesVector {
        apply(&self, &rhs)
    }
}

/// Retarder with its fast axis at 0°: diag(e^{−iδ/2}, e^{+iδ/2}).
///
/// On chip this is a pair of thermal phase shifters driven differentially
/// between the two waveguides.
pub fn make_m0(delta0: f64) -> Result<JonesMatrix> {
    ensure_finite("delta0", delta0)?;
    Ok(m0_unchecked(delta0))
}

/// Retarder with its fast axis at 45°:
/// [[cos(δ/2), −i sin(δ/2)], [−i sin(δ/2), cos(δ/2)]].
pub fn make_m45(delta45: f64) -> Result<JonesMatrix> {
    ensure_finite("delta45", delta45)?;
    Ok(m45_unchecked(delta45))
}

#[inline]
pub(crate) fn m0_unchecked(delta: f64) -> JonesMatrix {
    let half = 0.5 * delta;
    JonesMatrix::diag(Complex64::cis(-half), Complex64::cis(half))
}

#[inline]
pub(crate) fn m45_unchecked(delta: f64) -> JonesMatrix {
    let (s, c) = (0.5 * delta).sin_cos();
    let d = Complex64::new(c, 0.0);
    let o = Complex64::new(0.0, -s);
    JonesMatrix::new(d, o, o, d)
}

/// Output-side 50/50 coupler of the M₄₅ realization:
/// (1/√2)·[[1, −1], [1, 1]].
pub fn coupler_out() -> JonesMatrix {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    JonesMatrix::new(h, -h, h, h)
}

/// Input-side 50/50 coupler of the M₄₅ realization:
/// (1/√2)·[[1, 1], [−1, 1]].
pub fn coupler_in() -> JonesMatrix {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    JonesMatrix::new(h, h, -h, h)
}

/// M₄₅ built the way the chip builds it: coupler · M₀(δ) · coupler.
pub fn m45_via_couplers(delta45: f64) -> Result<JonesMatrix> {
    Ok(coupler_out() * make_m0(delta45)? * coupler_in())
}

pub fn apply(m: &JonesMatrix, v: &JonesVector) -> JonesVector {
    JonesVector::new(
        m.m[0][0] * v.ex + m.m[0][1] * v.ey,
        m.m[1][0] * v.ex + m.m[1][1] * v.ey,
    )
}

/// Stokes parameters.
///
/// Sign convention: s3 = −2·Im(ex·ey*), so (1, i)/√2 has s3 = +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesParams {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesParams {
    /// Reduced Stokes vector (s1, s2, s3)/s0 on the Poincaré sphere.
    pub fn unit(&self) -> [f64; 3] {
        [self.s1 / self.s0, self.s2 / self.s0, self.s3 / self.s0]
    }

    pub fn degree_of_polarization(&self) -> f64 {
        self.s1.hypot(self.s2).hypot(self.s3) / self.s0
    }

    /// Great-circle angle between two states on the Poincaré sphere.
    pub fn angle_to(&self, other: &StokesParams) -> f64 {
        let (a, b) = (self.unit(), other.unit());
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        dot.clamp(-1.0, 1.0).acos()
    }
}

pub fn to_stokes(v: &JonesVector) -> Result<StokesParams> {
    let s0 = v.intensity();
    if !s0.is_finite() {
        return Err(Error::NonFinite {
            what: "Jones vector norm",
            value: s0,
        });
    }
    if s0 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cross = v.ex * v.ey.conj();
    Ok(StokesParams {
        s0,
        s1: v.ex.norm_sqr() - v.ey.norm_sqr(),
        s2: 2.0 * cross.re,
        s3: -2.0 * cross.im,
    })
}

/// Uniformly distributed SOP on the Poincaré sphere, deterministic per seed.
pub fn random_sop(seed: u64) -> JonesVector {
    random_sop_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws a uniform SOP from `rng`.
///
/// Four i.i.d. normals normalized give a uniform point on S³, whose Hopf
/// image is uniform on the Poincaré sphere.
pub fn random_sop_with<R: Rng + ?Sized>(rng: &mut R) -> JonesVector {
    loop {
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let v = JonesVector::new(Complex64::new(g[0], g[1]), Complex64::new(g[2], g[3]));
        if let Ok(n) = v.normalized() {
            return n;
        }
    }
}

/// Extinction ratio in dB, 10·log₁₀(i_px / i_py).
pub fn extinction_ratio_db(i_px: f64, i_py: f64) -> Result<f64> {
    for v in [i_px, i_py] {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositiveIntensity(v));
        }
    }
    Ok(10.0 * (i_px / i_py).log10())
}
