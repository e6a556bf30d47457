use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polarlock::anneal::propose;
use polarlock::device::{dpc_transform, measure, DeviceParams, PhaseQuad};
use polarlock::jones::{m45_via_couplers, make_m45, to_stokes, JonesVector};

fn phase() -> impl Strategy<Value = f64> {
    0.0..=3.0 * PI
}

fn quad() -> impl Strategy<Value = PhaseQuad> {
    [phase(), phase(), phase(), phase()].prop_map(PhaseQuad)
}

fn sop() -> impl Strategy<Value = JonesVector> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("non-zero", |g| g.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|g| {
            JonesVector::new(Complex64::new(g[0], g[1]), Complex64::new(g[2], g[3]))
                .normalized()
                .unwrap()
        })
}

proptest! {
    #[test]
    fn cascade_is_unitary(q in quad()) {
        prop_assert!(dpc_transform(&q).unitarity_defect() < 1e-12);
    }

    #[test]
    fn coupler_sandwich_matches_m45(d in phase()) {
        let a = m45_via_couplers(d).unwrap();
        let b = make_m45(d).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn cascade_preserves_power(v in sop(), q in quad()) {
        let out = dpc_transform(&q).apply(&v);
        prop_assert!((out.intensity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stokes_ignores_global_phase(v in sop(), phi in 0.0..2.0 * PI) {
        let a = to_stokes(&v).unwrap();
        let b = to_stokes(&v.scale(Complex64::cis(phi))).unwrap();
        prop_assert!((a.s1 - b.s1).abs() < 1e-12);
        prop_assert!((a.s2 - b.s2).abs() < 1e-12);
        prop_assert!((a.s3 - b.s3).abs() < 1e-12);
    }

    #[test]
    fn proposals_stay_in_range(q in quad(), st in 0.0..2.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = propose(&q, st, 3.0 * PI, &mut rng);
        prop_assert!(p.within(0.0, 3.0 * PI));
        for k in 0..4 {
            prop_assert!((p.0[k] - q.0[k]).abs() <= st + 1e-12);
        }
    }

    #[test]
    fn noiseless_er_respects_ceiling(v in sop(), q in quad(), er in 10.0..40.0f64) {
        let params = DeviceParams { static_er_db: er, ..DeviceParams::default().noiseless() };
        let s = measure(&v, &q, &params, &mut ChaCha8Rng::seed_from_u64(0));
        prop_assert!(s.er_db() <= er + 1e-9);
    }
}
