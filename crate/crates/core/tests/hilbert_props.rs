mod common;

use common::*;
use proptest::prelude::*;
use qnd_core::hilbert::{
    apply_unitary, born_distribution, collapse_remainder, conditional_collapse, partial_trace, tensor_product, DensityMatrix,
    PureState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_register(rng: &mut ChaCha8Rng, qubits: usize) -> PureState {
    let amps = random_amplitudes(rng, 1 << qubits);
    PureState::new(vec![2; qubits], amps).unwrap()
}

fn random_mixture(rng: &mut ChaCha8Rng, qubits: usize) -> DensityMatrix {
    let parts: Vec<(f64, PureState)> = (0..3)
        .map(|_| (rng.random::<f64>() + 0.01, random_register(rng, qubits)))
        .collect();
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let parts: Vec<_> = parts.into_iter().map(|(w, s)| (w / total, s)).collect();
    DensityMatrix::mixture(&parts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unitaries_preserve_norm(seed in any::<u64>(), qubits in 1usize..=3, which in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_register(&mut rng, qubits);
        let target = which % qubits;
        let u = random_unitary(&mut rng, 2);
        let out = apply_unitary(&u, &state, &[target]).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        if qubits >= 2 {
            let u2 = random_unitary(&mut rng, 4);
            let other = (target + 1) % qubits;
            let out = apply_unitary(&u2, &state, &[other, target]).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_preserves_trace(seed in any::<u64>(), qubits in 2usize..=3, keep in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_mixture(&mut rng, qubits);
        let reduced = partial_trace(&rho, &[keep % qubits]).unwrap();
        prop_assert!((reduced.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn marginals_agree_between_routes(seed in any::<u64>(), qubits in 2usize..=3, sub in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_register(&mut rng, qubits);
        let sub = sub % qubits;
        let basis = random_basis(&mut rng);
        let direct = born_distribution(&state, &basis, sub).unwrap();
        let reduced = partial_trace(&state.to_density(), &[sub]).unwrap();
        let via_trace = born_distribution(&reduced, &basis, 0).unwrap();
        for k in 0..2 {
            prop_assert!((direct.get(k) - via_trace.get(k)).abs() < 1e-10);
        }
        let mixed = random_mixture(&mut rng, qubits);
        let whole = born_distribution(&mixed, &basis, sub).unwrap();
        let part = born_distribution(&partial_trace(&mixed, &[sub]).unwrap(), &basis, 0).unwrap();
        for k in 0..2 {
            prop_assert!((whole.get(k) - part.get(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn collapse_probabilities_are_complete(seed in any::<u64>(), qubits in 1usize..=3, sub in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_register(&mut rng, qubits);
        let sub = sub % qubits;
        let basis = random_basis(&mut rng);
        let total: f64 = (0..2).map(|k| conditional_collapse(&state, &basis, sub, k).map(|r| r.0).unwrap_or(0.0)).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        if qubits > 1 {
            let rest: f64 = (0..2).map(|k| collapse_remainder(&state, &basis, sub, k).map(|r| r.0).unwrap_or(0.0)).sum();
            prop_assert!((rest - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn purity_is_bounded(seed in any::<u64>(), qubits in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_mixture(&mut rng, qubits);
        let d = rho.dim() as f64;
        let p = rho.purity();
        prop_assert!(p >= 1.0 / d - 1e-10 && p <= 1.0 + 1e-10);
        let reduced = partial_trace(&rho, &[0]).unwrap();
        let p = reduced.purity();
        prop_assert!((0.5 - 1e-10..=1.0 + 1e-10).contains(&p));
    }

    #[test]
    fn tensor_of_normalized_states_is_normalized(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_register(&mut rng, 1);
        let b = random_register(&mut rng, 2);
        let ab = tensor_product(&a, &b);
        prop_assert_eq!(ab.dims(), &[2, 2, 2]);
        prop_assert!((ab.norm_sqr() - 1.0).abs() < 1e-12);
        let back = partial_trace(&ab.to_density(), &[0]).unwrap();
        let diff = back.entries() - a.to_density().entries();
        prop_assert!(diff.iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn state_round_trips_through_json(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_register(&mut rng, 2);
        let text = serde_json::to_string(&s).unwrap();
        let back: PureState = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, s);
    }
}
