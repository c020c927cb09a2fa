mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qnd_core::cnot_qnd::{run, MeterPrep, ObservableBasis};
use qnd_core::hilbert::{unitarity_defect, PureState};
use qnd_core::photonics::{
    self, build_qnd_circuit, lift_two_photon, meter_prep, meter_prep_strength, run_gate, success_for_meter, Element, FockState,
    LinearCircuit, ModeLayout, ETA_QND, STRENGTH_MAX,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The QND network written out as a matrix product, independent of the
/// element embedding in the library.
fn network_oracle(eta: f64, loss: bool) -> DMatrix<C> {
    let m = if loss { 5 } else { 4 };
    let two_mode = |i: usize, j: usize, b: [[f64; 2]; 2]| {
        let mut u = DMatrix::<C>::identity(m, m);
        u[(i, i)] = c(b[0][0], 0.0);
        u[(i, j)] = c(b[0][1], 0.0);
        u[(j, i)] = c(b[1][0], 0.0);
        u[(j, j)] = c(b[1][1], 0.0);
        u
    };
    let (r, t) = (eta.sqrt(), (1.0 - eta).sqrt());
    let mut u = two_mode(0, 2, [[r, t], [t, -r]]);
    if loss {
        let (lr, lt) = ((1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt());
        u = two_mode(1, 4, [[lr, lt], [lt, -lr]]) * u;
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    two_mode(2, 3, [[h, h], [h, -h]]) * u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn network_is_unitary(eta in 0.001f64..0.999, loss in any::<bool>()) {
        let circuit = build_qnd_circuit(eta, loss).unwrap();
        prop_assert!(unitarity_defect(circuit.unitary()) < 1e-12);
        let oracle = network_oracle(eta, loss);
        prop_assert!((circuit.unitary() - oracle).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn output_classes_are_complete(seed in any::<u64>(), eta in 0.001f64..0.999, loss in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, m) = (random_qubit(&mut rng), random_qubit(&mut rng));
        let r = run_gate(&s, &m, eta, loss).unwrap();
        prop_assert!((r.success_prob + r.failure_breakdown.total() - 1.0).abs() < 1e-12);
        if !loss {
            prop_assert_eq!(r.failure_breakdown.dump_occupied, 0.0);
        }
        if let Some(j) = r.conditional_joint {
            prop_assert!((j.overlap(&j).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn success_matches_closed_form(seed in any::<u64>(), eta in 0.001f64..0.999, loss in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_qubit(&mut rng);
        let meter = random_qubit(&mut rng);
        let sim = run_gate(&s, &meter, eta, loss).unwrap().success_prob;
        let closed = success_for_meter(s.amps()[0], s.amps()[1], &meter, eta, loss).unwrap();
        prop_assert!((sim - closed).abs() < 1e-12);
    }

    #[test]
    fn balanced_meter_success(seed in any::<u64>(), loss in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_qubit(&mut rng);
        let (a, b) = (s.amps()[0].norm_sqr(), s.amps()[1].norm_sqr());
        let want = if loss { 1.0 / 6.0 } else { (a + 3.0 * b) / 6.0 };
        let got = run_gate(&s, &meter_prep(ETA_QND).unwrap(), ETA_QND, loss).unwrap().success_prob;
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn lift_matches_permanents(seed in any::<u64>(), m in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(&mut rng, m);
        let input = random_fock(&mut rng, m);
        let oracle = permanent_lift(&u, &input);
        let state = FockState::new(m, input).unwrap();
        let lifted = lift_two_photon(&circuit_from(u), &state).unwrap();
        prop_assert!(fock_distance(&lifted, &oracle) < 1e-10);
        let total: f64 = lifted.amplitudes().values().map(|a| a.norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hom_dip_follows_reflectance(eta in 0.0f64..=1.0) {
        let layout = ModeLayout::new(vec!["a".into(), "b".into()]).unwrap();
        let bs = LinearCircuit::new(layout, vec![Element::Beamsplitter { modes: [0, 1], eta }]).unwrap();
        let input = FockState::new(2, [(vec![1, 1], c(1.0, 0.0))].into()).unwrap();
        let out = lift_two_photon(&bs, &input).unwrap();
        // Coincidence amplitude is t² − r² for a real beamsplitter.
        prop_assert!((out.probability(&[1, 1]) - (1.0 - 2.0 * eta).powi(2)).abs() < 1e-12);
        let bunched = out.probability(&[2, 0]) + out.probability(&[0, 2]);
        prop_assert!((bunched - 2.0 * eta * (1.0 - eta) * 2.0).abs() < 1e-12);
    }

    /// Heralded output of the balanced gate is the CNOT output with a sign on
    /// the V branch and a branch weight set by each rail's success amplitude.
    #[test]
    fn heralded_state_matches_cnot(seed in any::<u64>(), loss in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_qubit(&mut rng);
        let (alpha, beta) = (s.amps()[0], s.amps()[1]);
        let r = run_gate(&s, &meter_prep(ETA_QND).unwrap(), ETA_QND, loss).unwrap();
        let joint = r.conditional_joint.unwrap();
        let w_h = (1.0f64 / 6.0).sqrt();
        let w_v = if loss { -(1.0f64 / 6.0).sqrt() } else { -(0.5f64).sqrt() };
        let zero = c(0.0, 0.0);
        let raw = [alpha * w_h, zero, zero, beta * w_v];
        let n = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let want = PureState::new(vec![2, 2], raw.iter().map(|z| z / n).collect()).unwrap();
        prop_assert!((joint.overlap(&want).unwrap() - 1.0).abs() < 1e-12);
        if loss {
            // Equal weights: the CNOT output up to a phase flip on the signal.
            let flipped = PureState::qubit(alpha, -beta).unwrap();
            let ideal = run(&flipped, MeterPrep::projective(), &ObservableBasis::z()).unwrap().joint;
            prop_assert!((joint.overlap(&ideal).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variable_strength_saturates_englert(a in 0.0f64..=STRENGTH_MAX) {
        let p = photonics::characterize_strength(a).unwrap();
        let d = p.characterization.distinguishability;
        prop_assert!((d.englert_lhs - 1.0).abs() < 1e-9);
        let g = p.gamma_eff;
        prop_assert!((p.characterization.report.f_qsp - g * g).abs() < 1e-12);
        let meter = meter_prep_strength(a).unwrap();
        let want = success_for_meter(c(1.0, 0.0), c(0.0, 0.0), &meter, ETA_QND, true).unwrap();
        prop_assert!((p.success_prob - want).abs() < 1e-12);
    }

    #[test]
    fn circuit_round_trips_through_json(seed in any::<u64>(), loss in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = rng.random_range(0.01..0.99);
        let circuit = build_qnd_circuit(eta, loss).unwrap();
        let text = serde_json::to_string(&circuit).unwrap();
        let back: LinearCircuit = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &circuit);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(v["modes"].as_array().unwrap().len(), circuit.modes());
        prop_assert!(v["elements"].is_array());
    }
}
