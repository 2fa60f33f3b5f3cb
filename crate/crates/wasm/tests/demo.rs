use geohmc_wasm::{sample_points, scaling_rates, trajectory_points};

#[test]
fn leapfrog_trajectory_nearly_conserves_energy() {
    let pts = trajectory_points("leapfrog", [1.0, 10.0], [0.5, -0.5], 0.05, 200).unwrap();
    assert_eq!(pts.len(), 3 * 201);
    assert_eq!(&pts[..2], &[1.0, 10.0]);
    let h0 = pts[2];
    assert!(pts.chunks(3).all(|r| (r[2] - h0).abs() < 1e-2));
}

#[test]
fn euler_trajectory_drifts_in_energy() {
    let lf = trajectory_points("leapfrog", [0.0, 10.0], [1.0, 1.0], 0.1, 300).unwrap();
    let eu = trajectory_points("euler", [0.0, 10.0], [1.0, 1.0], 0.1, 300).unwrap();
    let drift = |p: &[f64]| (p[p.len() - 1] - p[2]).abs();
    assert!(drift(&eu) > 10.0 * drift(&lf));
}

#[test]
fn bad_arguments_are_reported() {
    assert!(trajectory_points("rk4", [0.0; 2], [0.0; 2], 0.1, 10).is_err());
    assert!(trajectory_points("leapfrog", [0.0; 2], [0.0; 2], -0.1, 10).is_err());
    assert!(sample_points("nuts", 0.1, 10, 0).is_err());
}

#[test]
fn samples_are_deterministic_and_sized() {
    for kernel in ["hmc", "rwm", "mala"] {
        let a = sample_points(kernel, 0.5, 200, 3).unwrap();
        let b = sample_points(kernel, 0.5, 200, 3).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.points().len(), 400);
        assert!(a.accept_rate() > 0.0 && a.accept_rate() <= 1.0);
    }
    assert_eq!(sample_points("hmc", 0.1, 500, 1).unwrap().divergences(), 0);
}

#[test]
fn scaling_rows_separate_the_integrators() {
    let rows = scaling_rates(&[1, 100], 0.1, 1.0, 300, 8).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!((rows[0], rows[3]), (1.0, 100.0));
    assert!(rows[1] > 0.95 && rows[4] > 0.95);
    assert!(rows[5] < rows[2]);
}
