//! Conditional no-jump evolution and quantum-jump (Monte Carlo wave-function)
//! simulation of photodetection records.

mod propagator;
mod record;
mod simulate;
mod state;

pub use propagator::{
    evolve, expm, prepare_propagator, CVector, Method, ModalState, Propagator,
    MAX_EIGENVECTOR_CONDITION,
};
pub use record::{ClassicalRecord, Detection, RecordMetadata, CHANNEL_ATOM, CHANNEL_CAVITY};
pub use simulate::{
    simulate_record, PopulationSample, SimulationOptions, Simulator, Trajectory,
    JUMP_TIME_RESOLUTION,
};
pub use state::{InitialState, QuantumState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{angular, basis_index, build_model, CMatrix, EffectiveHamiltonian, Model, ModelParams};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(epsilon: f64) -> Model {
        build_model(ModelParams { n_trunc: 4, ..ModelParams::reference(epsilon) }).unwrap()
    }

    fn random_state(dim: usize, rng: &mut impl Rng) -> CVector {
        let v = CVector::from_fn(dim, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let n = v.norm();
        v.unscale(n)
    }

    fn max_diff(a: &CVector, b: &CVector) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_duration_is_identity() {
        let model = small_model(30.0);
        let prop = Propagator::new(&model.effective_hamiltonian(40.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let psi = random_state(model.dim, &mut rng);
            let s = QuantumState::new(psi.clone());
            assert_eq!(evolve(&prop, &s, 0.0).unwrap().amplitudes, psi);
        }
    }

    #[test]
    fn negative_duration_rejected() {
        let model = small_model(30.0);
        let prop = Propagator::new(&model.effective_hamiltonian(40.0).unwrap()).unwrap();
        let s = QuantumState::initial(&model, InitialState::default()).unwrap();
        assert!(matches!(evolve(&prop, &s, -1e-3), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn single_photon_decay() {
        let model = build_model(ModelParams { epsilon: 0.0, ..ModelParams::reference(0.0) }).unwrap();
        let prop = Propagator::new(&model.effective_hamiltonian(0.0).unwrap()).unwrap();
        let init = InitialState { photons: 1, excited: false };
        let s = QuantumState::initial(&model, init).unwrap();
        let tau = 0.01;
        let survival = evolve(&prop, &s, tau).unwrap().norm_squared();
        let expected = (-2.0 * angular(30.0) * tau).exp();
        assert!((survival - expected).abs() < 1e-12);
        assert!((survival - 0.02310).abs() < 1e-4);
    }

    #[test]
    fn vacuum_stays_dark() {
        let model = build_model(ModelParams::reference(0.0)).unwrap();
        let prop = Propagator::new(&model.effective_hamiltonian(0.0).unwrap()).unwrap();
        let s = QuantumState::initial(&model, InitialState::default()).unwrap();
        for tau in [0.0, 1e-3, 0.5, 10.0] {
            assert!((evolve(&prop, &s, tau).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_path_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let params = ModelParams {
                g0: 57.0,
                gamma_perp: rng.gen_range(0.5..5.0),
                kappa: rng.gen_range(5.0..40.0),
                epsilon: rng.gen_range(0.0..45.0),
                n_trunc: 2,
            };
            let model = build_model(params).unwrap();
            let mut h = model.effective_hamiltonian(rng.gen_range(0.0..57.0)).unwrap();
            // generic non-Hermitian perturbation, still dissipative enough to stay bounded
            let noise = CMatrix::from_fn(6, 6, |_, _| Complex64::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)));
            h.matrix += noise;
            let eig = Propagator::with_method(&h, Method::Eigendecomposition).unwrap();
            let series = Propagator::with_method(&h, Method::ScalingSquaring).unwrap();
            let psi = random_state(6, &mut rng);
            let a = eig.apply(&psi, 0.137).unwrap();
            let b = series.apply(&psi, 0.137).unwrap();
            let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
            assert!(max_diff(&a, &b) <= 1e-10 * scale, "diff {}", max_diff(&a, &b));
        }
    }

    #[test]
    fn eigen_reconstruction() {
        let model = build_model(ModelParams::reference(44.3)).unwrap();
        let h = model.effective_hamiltonian(45.0).unwrap();
        let prop = Propagator::new(&h).unwrap();
        assert_eq!(prop.method(), Method::Eigendecomposition);
        let u = prop.matrix(0.01);
        let oracle = expm(&h.matrix.map(|z| -Complex64::i() * z * 0.01));
        let err = (&u - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn defective_generator_falls_back() {
        // Jordan block: not diagonalizable
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = Complex64::new(0.0, -1.0);
        m[(1, 1)] = Complex64::new(0.0, -1.0);
        m[(2, 2)] = Complex64::new(0.0, -2.0);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        let h = EffectiveHamiltonian { matrix: m.clone(), g: 0.0 };
        let prop = prepare_propagator(&h).unwrap();
        assert_eq!(prop.method(), Method::ScalingSquaring);
        let psi = CVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let out = prop.apply(&psi, 0.5).unwrap();
        // exp(-iHτ) for a Jordan block picks up the τ-linear off-diagonal term
        let decay = (-0.5f64).exp();
        assert!((out[0] - Complex64::new(0.0, -0.5 * decay)).norm() < 1e-12);
        assert!((out[1] - Complex64::new(decay, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn non_finite_hamiltonian_rejected() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        let h = EffectiveHamiltonian { matrix: m, g: 0.0 };
        assert!(matches!(prepare_propagator(&h), Err(crate::Error::Numeric(_))));
    }

    #[test]
    fn norm_decay_rate_matches_total_decay() {
        let model = small_model(34.0);
        let prop = Propagator::new(&model.effective_hamiltonian(45.0).unwrap()).unwrap();
        let decay = model.total_decay();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let psi = random_state(model.dim, &mut rng);
            let h = 1e-6;
            let fd = (prop.apply(&psi, h).unwrap().norm_squared() - psi.norm_squared()) / h;
            let analytic = -(psi.adjoint() * &decay * &psi)[(0, 0)].re;
            assert!(((fd - analytic) / analytic).abs() < 1e-3, "fd {fd} analytic {analytic}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn survival_is_monotone(seed in any::<u64>(), t1 in 0.0f64..0.05, dt in 0.0f64..0.05, g in 0.0f64..57.0) {
            let model = small_model(44.3);
            let prop = Propagator::new(&model.effective_hamiltonian(g).unwrap()).unwrap();
            let psi = random_state(model.dim, &mut ChaCha8Rng::seed_from_u64(seed));
            let n1 = prop.apply(&psi, t1).unwrap().norm_squared();
            let n2 = prop.apply(&psi, t1 + dt).unwrap().norm_squared();
            prop_assert!(n2 <= n1 * (1.0 + 1e-12));
            prop_assert!(n1 <= 1.0 + 1e-12);
        }

        #[test]
        fn semigroup(seed in any::<u64>(), t1 in 0.0f64..0.2, t2 in 0.0f64..0.2, g in 0.0f64..57.0) {
            let model = small_model(34.0);
            let prop = Propagator::new(&model.effective_hamiltonian(g).unwrap()).unwrap();
            let psi = random_state(model.dim, &mut ChaCha8Rng::seed_from_u64(seed));
            let two_step = prop.apply(&prop.apply(&psi, t1).unwrap(), t2).unwrap();
            let one_step = prop.apply(&psi, t1 + t2).unwrap();
            prop_assert!(max_diff(&two_step, &one_step) <= 1e-10);
        }
    }

    #[test]
    fn dark_system_never_clicks() {
        let model = build_model(ModelParams { n_trunc: 3, ..ModelParams::reference(0.0) }).unwrap();
        let rec = simulate_record(&model, 0.0, 0.0, 1.0, 5).unwrap();
        assert!(rec.events.is_empty());
    }

    #[test]
    fn no_atomic_decay_means_cavity_clicks_only() {
        let params = ModelParams { gamma_perp: 0.0, n_trunc: 8, ..ModelParams::reference(34.0) };
        let model = build_model(params).unwrap();
        for seed in 0..3 {
            let rec = simulate_record(&model, 45.0, 0.0, 0.5, seed).unwrap();
            assert!(!rec.events.is_empty());
            assert!(rec.events.iter().all(|e| e.channel == CHANNEL_CAVITY));
        }
    }

    #[test]
    fn records_are_valid_and_deterministic() {
        let model = build_model(ModelParams { n_trunc: 10, ..ModelParams::reference(34.0) }).unwrap();
        let sim = Simulator::new(&model, 45.0).unwrap();
        for seed in 0..10 {
            let a = sim.record(0.0, 0.3, seed).unwrap();
            a.validate().unwrap();
            assert!(a.count(CHANNEL_ATOM) + a.count(CHANNEL_CAVITY) == a.len());
            let b = sim.record(0.0, 0.3, seed).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(sim.record(0.0, 0.3, 1).unwrap(), sim.record(0.0, 0.3, 2).unwrap());
    }

    #[test]
    fn samples_are_taken_at_requested_times() {
        let model = build_model(ModelParams { n_trunc: 10, ..ModelParams::reference(34.0) }).unwrap();
        let sim = Simulator::new(&model, 45.0).unwrap();
        let opts = SimulationOptions { sample_times: vec![0.0, 0.1, 0.2], ..Default::default() };
        let traj = sim.run(0.0, 0.2, 4, &opts).unwrap();
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.2]);
        assert_eq!(traj.samples[0].photons, 0.0);
        assert!(traj.samples.iter().all(|s| s.photons >= 0.0 && (0.0..=1.0).contains(&s.excited)));
        // sampling never perturbs the random stream
        assert_eq!(traj.record, sim.record(0.0, 0.2, 4).unwrap());
    }

    #[test]
    fn initial_state_outside_truncation() {
        let model = build_model(ModelParams { n_trunc: 2, ..ModelParams::reference(0.0) }).unwrap();
        assert!(QuantumState::initial(&model, InitialState { photons: 3, excited: false }).is_err());
        let v = InitialState { photons: 2, excited: true }.vector(&model).unwrap();
        assert_eq!(v[basis_index(2, true)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn invalid_window_rejected() {
        let model = small_model(10.0);
        assert!(simulate_record(&model, 45.0, 1.0, 1.0, 0).is_err());
    }
}
