use chronos_core::analysis::{fit_slope, l2_error, run_benchmark};
use chronos_core::problems::{
    pendulum, rod_dalembert, rod_with, RodMesh, TriangleLoad, PENDULUM_THETADOT0, ROD_T_END,
};
use chronos_core::schemes::{init_scheme, Family, SchemeSpec};
use chronos_core::stepper::IterationSettings;

fn free_end_velocity_error(n_el: usize) -> f64 {
    let mesh = RodMesh::unit(n_el);
    let load = TriangleLoad::default();
    let rod = rod_with(mesh, load, ROD_T_END).unwrap();
    let sc = init_scheme(SchemeSpec::new(Family::SingleMultipleRoot, 3, 0.0)).unwrap();
    let h = run_benchmark(&rod, &sc, IterationSettings::default(), mesh.dt_from_cfl(5.0)).unwrap();
    let (num, rf): (Vec<f64>, Vec<f64>) = (1..h.len())
        .map(|i| (h.v[i][n_el - 1], rod_dalembert(&mesh, &load, mesh.length, h.times[i]).1))
        .unzip();
    l2_error(&num, &rf).unwrap()
}

#[test]
fn rod_free_end_velocity_converges_with_mesh() {
    let e200 = free_end_velocity_error(200);
    let e400 = free_end_velocity_error(400);
    assert!(e200 < 5.0, "n_el = 200: {e200} %");
    assert!(e400 < e200, "n_el = 400: {e400} % vs {e200} %");
}

/// Largest relative deviation of `½θ̇² + 1 − cos θ` from its initial value.
fn max_energy_drift(m: usize, n: usize) -> f64 {
    let bench = pendulum();
    let sc = init_scheme(SchemeSpec::new(Family::DistinctRoots, m, 1.0)).unwrap();
    let h = run_benchmark(&bench, &sc, IterationSettings::default(), bench.t_end / n as f64).unwrap();
    let e0 = 0.5 * PENDULUM_THETADOT0 * PENDULUM_THETADOT0;
    h.u.iter()
        .zip(&h.v)
        .map(|(u, v)| (0.5 * v[0] * v[0] + 1.0 - u[0].cos() - e0).abs() / e0)
        .fold(0.0, f64::max)
}

#[test]
fn pendulum_energy_drift_follows_scheme_order() {
    // Grids stay above the round-off floor of the drift (~1e-12).
    for (m, steps) in [(1, vec![400, 800, 1600, 3200]), (2, vec![1600, 3200, 6400]), (3, vec![400, 800])] {
        let dts: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
        let drift: Vec<f64> = steps.iter().map(|&n| max_energy_drift(m, n)).collect();
        let slope = fit_slope(&dts, &drift).unwrap();
        let order = 2.0 * m as f64;
        assert!((slope - order).abs() < 0.3, "M = {m}: drift slope {slope}, drifts {drift:?}");
    }
}
