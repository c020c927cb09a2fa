mod common;

use common::*;
use proptest::prelude::*;
use qnd_core::cnot_qnd::{characterize_device, default_ensemble, ObservableBasis};
use qnd_core::hilbert::ProbDist;
use qnd_core::metrics::{classical_fidelity, fm_from_tm, fqnd_from_ts};
use qnd_core::photonics::{polarization_ensemble, OpticalQnd, STRENGTH_MAX};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dist() -> impl Strategy<Value = ProbDist> {
    (2usize..=5)
        .prop_flat_map(|d| prop::collection::vec(0.0f64..1.0, d))
        .prop_filter_map("zero weight", |w| ProbDist::from_weights(w).ok())
}

fn pair() -> impl Strategy<Value = (ProbDist, ProbDist)> {
    (2usize..=5).prop_flat_map(|d| {
        (prop::collection::vec(0.0f64..1.0, d), prop::collection::vec(0.0f64..1.0, d)).prop_filter_map("zero weight", |(a, b)| {
            Some((ProbDist::from_weights(a).ok()?, ProbDist::from_weights(b).ok()?))
        })
    })
}

fn oracle_fidelity(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    s * s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fidelity_is_symmetric((p, q) in pair()) {
        prop_assert_eq!(classical_fidelity(&p, &q).unwrap(), classical_fidelity(&q, &p).unwrap());
    }

    #[test]
    fn fidelity_is_in_unit_interval((p, q) in pair()) {
        let f = classical_fidelity(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - oracle_fidelity(p.probs(), q.probs()).clamp(0.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fidelity_one_iff_equal((p, q) in pair()) {
        prop_assert!((classical_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-10);
        let equal = p.probs().iter().zip(q.probs()).all(|(a, b)| (a - b).abs() < 1e-10);
        let one = (classical_fidelity(&p, &q).unwrap() - 1.0).abs() < 1e-12;
        if one {
            // F = 1 − O(‖p − q‖²), so unit fidelity pins p to q at the square root of the tolerance.
            prop_assert!(p.probs().iter().zip(q.probs()).all(|(a, b)| (a - b).abs() < 1e-5));
        }
        if equal {
            prop_assert!(one);
        }
    }

    #[test]
    fn fidelity_against_self_is_one(p in dist()) {
        prop_assert!((classical_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bridges_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assume!((a - b).abs() > 1e-12);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(fm_from_tm(lo).unwrap() < fm_from_tm(hi).unwrap());
        prop_assert!(fqnd_from_ts(lo).unwrap() < fqnd_from_ts(hi).unwrap());
    }

    #[test]
    fn simulated_devices_respect_englert(seed in any::<u64>(), g in std::f64::consts::FRAC_1_SQRT_2..=1.0, a in 0.0..=STRENGTH_MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = ObservableBasis::new(random_basis(&mut rng)).unwrap();
        let cnot = qnd_core::cnot_qnd::CnotQnd { prep: qnd_core::cnot_qnd::MeterPrep::new(g).unwrap(), basis: basis.clone() };
        let c = characterize_device(&cnot, &basis, &default_ensemble(&basis)).unwrap();
        prop_assert!((c.distinguishability.englert_lhs - 1.0).abs() < 1e-9);
        let optics = OpticalQnd::with_strength(a).unwrap();
        let o = characterize_device(&optics, &ObservableBasis::stokes_s1(), &polarization_ensemble()).unwrap();
        prop_assert!(o.distinguishability.englert_lhs <= 1.0 + 1e-9);
    }
}

#[test]
fn negative_transmission_is_rejected() {
    assert!(fm_from_tm(-0.1).is_err());
    assert!(fqnd_from_ts(-1e-3).is_err());
}
