use geohmc::prelude::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn iid(dim: usize) -> TargetDensity {
    make_target(&TargetSpec::IidGaussian { dim }).unwrap()
}

fn warped(dim: usize) -> TargetDensity {
    make_target(&TargetSpec::warped_default(dim)).unwrap()
}

fn riemannian_system(dim: usize) -> HamiltonianSystem {
    let kinetic = KineticEnergy::gaussian(Metric::diagonal_fn(DiagonalMetric::one_plus_square(dim)));
    HamiltonianSystem::new(iid(dim), kinetic).unwrap()
}

fn point(q: &[f64], p: &[f64]) -> PhasePoint {
    PhasePoint::new(DVector::from_row_slice(q), DVector::from_row_slice(p)).unwrap()
}

#[test]
fn leapfrog_preserves_volume_on_builtins() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gauss = make_target(&TargetSpec::Gaussian {
        mean: DVector::from_row_slice(&[0.5, -1.0]),
        cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0]),
    })
    .unwrap();
    for target in [iid(3), gauss, warped(2), warped(4)] {
        let sys = HamiltonianSystem::euclidean(target.clone());
        let spec = IntegratorSpec::new(Scheme::Leapfrog, 0.1, 1);
        for _ in 0..100 {
            let q = target.exact_sample(&mut rng).unwrap();
            let z = PhasePoint::new(q, normal_vec(target.dim(), &mut rng)).unwrap();
            let det = jacobian_det_fd(&sys, &z, &spec).unwrap();
            assert!((det - 1.0).abs() <= 1e-6, "{}: det = {det}", target.label());
        }
    }
}

#[test]
fn exact_flow_is_volume_preserving_and_reversible() {
    let sys = HamiltonianSystem::euclidean(iid(3));
    let spec = IntegratorSpec::new(Scheme::ExactGaussian, 0.3, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let z = PhasePoint::new(normal_vec(3, &mut rng), normal_vec(3, &mut rng)).unwrap();
        assert!((jacobian_det_fd(&sys, &z, &spec).unwrap() - 1.0).abs() <= 1e-8);
        assert!(reversibility_defect(&sys, &z, &spec).unwrap() <= 1e-12);
        let traj = integrate(&sys, &z, &spec).unwrap();
        assert!(traj.max_energy_error() <= 1e-12);
    }
}

#[test]
fn euler_is_not_reversible_on_warped() {
    let target = warped(2);
    let sys = HamiltonianSystem::euclidean(target.clone());
    let spec = IntegratorSpec::new(Scheme::Euler, 0.1, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let z = PhasePoint::new(target.exact_sample(&mut rng).unwrap(), normal_vec(2, &mut rng)).unwrap();
        assert!(reversibility_defect(&sys, &z, &spec).unwrap() > 1e-6);
    }
}

#[test]
fn leapfrog_energy_error_beats_euler_over_long_path() {
    let sys = HamiltonianSystem::euclidean(iid(1));
    let z = point(&[1.0], &[0.0]);
    let leap = integrate(&sys, &z, &IntegratorSpec::new(Scheme::Leapfrog, 0.1, 63)).unwrap();
    let euler = integrate(&sys, &z, &IntegratorSpec::new(Scheme::Euler, 0.1, 63)).unwrap();
    assert!(leap.max_energy_error() < 2e-3);
    assert!(euler.max_energy_error() >= 10.0 * leap.max_energy_error());
}

#[test]
fn leapfrog_energy_error_is_uniformly_bounded() {
    // On the harmonic oscillator the shadow energy keeps |H_k − H₀| ≤ C·ε²
    // for all k, with C independent of the path length.
    let sys = HamiltonianSystem::euclidean(iid(1));
    let z = point(&[1.0], &[0.5]);
    let h0 = sys.hamiltonian(&z).unwrap();
    for eps in [0.1, 0.05] {
        let traj = integrate(&sys, &z, &IntegratorSpec::new(Scheme::Leapfrog, eps, 5000)).unwrap();
        assert!(traj.max_energy_error() <= 0.5 * h0 * eps * eps);
    }
}

#[test]
fn forward_flip_forward_flip_returns_start() {
    let target = warped(2);
    let sys = HamiltonianSystem::euclidean(target.clone());
    let spec = IntegratorSpec::new(Scheme::Leapfrog, 0.1, 128);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let z = PhasePoint::new(target.exact_sample(&mut rng).unwrap(), normal_vec(2, &mut rng)).unwrap();
        let fwd = integrate(&sys, &z, &spec).unwrap();
        let back = integrate(&sys, &fwd.last().flipped(), &spec).unwrap();
        let end = back.last().flipped();
        let scale = 1.0 + z.q.amax().max(z.p.amax());
        assert!((end.q - &z.q).amax().max((end.p - &z.p).amax()) <= 1e-10 * scale);
    }
}

#[test]
fn generalized_leapfrog_on_position_dependent_metric() {
    let sys = riemannian_system(2);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let spec = IntegratorSpec::new(Scheme::generalized_default(), 0.05, 1);
    let mut worst_iters = 0;
    for _ in 0..50 {
        let z = PhasePoint::new(normal_vec(2, &mut rng), normal_vec(2, &mut rng)).unwrap();
        let (_, stats) =
            generalized_leapfrog_step_with_stats(&sys, &z, 0.05, DEFAULT_GLF_TOL, DEFAULT_GLF_MAX_ITERS).unwrap();
        worst_iters = worst_iters.max(stats.momentum_iters).max(stats.position_iters);
        assert!((jacobian_det_fd(&sys, &z, &spec).unwrap() - 1.0).abs() <= 1e-8);
        assert!(relative_reversibility_defect(&sys, &z, &spec.with_steps(10)).unwrap() <= 1e-8);
    }
    assert!(worst_iters <= 20, "worst iteration count {worst_iters}");
}

#[test]
fn generalized_leapfrog_reduces_to_leapfrog_for_constant_metric() {
    let target = warped(3);
    let sys = HamiltonianSystem::new(
        target.clone(),
        KineticEnergy::gaussian(
            Metric::dense(DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0, 0.5]))).unwrap(),
        ),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let z = PhasePoint::new(target.exact_sample(&mut rng).unwrap(), normal_vec(3, &mut rng)).unwrap();
        let a = leapfrog_step(&sys, &z, 0.1).unwrap();
        let b = generalized_leapfrog_step(&sys, &z, 0.1, DEFAULT_GLF_TOL, DEFAULT_GLF_MAX_ITERS).unwrap();
        assert!((a.q - b.q).amax() <= 1e-12 && (a.p - b.p).amax() <= 1e-12);
    }
}

#[test]
fn explicit_schemes_reject_position_dependent_metrics() {
    let sys = riemannian_system(2);
    let z = point(&[0.1, 0.2], &[0.3, 0.4]);
    for scheme in [Scheme::Leapfrog, Scheme::Euler] {
        let err = integrate(&sys, &z, &IntegratorSpec::new(scheme, 0.1, 5)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err:?}");
    }
}

#[test]
fn student_t_hamiltonian_flows_conserve_energy_to_second_order() {
    let kinetic = KineticEnergy::new(KineticFamily::StudentT { nu: 5.0 }, Metric::identity(2)).unwrap();
    let sys = HamiltonianSystem::new(iid(2), kinetic).unwrap();
    let z = point(&[0.8, -0.4], &[0.6, 1.1]);
    let errs: Vec<f64> = [0.1, 0.05]
        .iter()
        .map(|&eps| {
            let steps = (1.0 / eps) as usize;
            integrate(&sys, &z, &IntegratorSpec::new(Scheme::Leapfrog, eps, steps))
                .unwrap()
                .max_energy_error()
        })
        .collect();
    let ratio = errs[0] / errs[1];
    assert!((3.0..5.5).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #[test]
    fn flip_is_an_involution(q in prop::collection::vec(-1e3f64..1e3, 1..6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = PhasePoint::new(DVector::from_vec(q.clone()), normal_vec(q.len(), &mut rng)).unwrap();
        let back = momentum_flip(&momentum_flip(&z));
        prop_assert_eq!(back, z);
    }

    #[test]
    fn hamiltonian_is_even_in_momentum(q in -5f64..5.0, p in -5f64..5.0, nu in 2.5f64..50.0) {
        let families = [KineticFamily::Gaussian, KineticFamily::StudentT { nu }];
        for family in families {
            let kinetic = KineticEnergy::new(family, Metric::diagonal_fn(DiagonalMetric::one_plus_square(1))).unwrap();
            let sys = HamiltonianSystem::new(iid(1), kinetic).unwrap();
            let z = point(&[q], &[p]);
            prop_assert_eq!(sys.hamiltonian(&z).unwrap(), sys.hamiltonian(&z.flipped()).unwrap());
        }
    }

    #[test]
    fn exact_flow_conserves_norm(q in -10f64..10.0, p in -10f64..10.0, t in -20f64..20.0) {
        let z = point(&[q], &[p]);
        let w = exact_gaussian_flow(&z, t);
        let before = q * q + p * p;
        let after = w.q[0] * w.q[0] + w.p[0] * w.p[0];
        prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before));
    }

    #[test]
    fn tiny_step_barely_moves(q in -5f64..5.0, p in -5f64..5.0) {
        let sys = HamiltonianSystem::euclidean(warped(2));
        let z = point(&[q, q], &[p, -p]);
        let w = leapfrog_step(&sys, &z, 1e-8).unwrap();
        prop_assert!((w.q - z.q).amax() < 1e-7);
    }
}
