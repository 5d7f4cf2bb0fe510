mod common;

use chronos_core::schemes::{init_scheme, Family, SchemeSpec};
use chronos_core::stepper::{advance, IterationSettings};
use common::{dense_start_acceleration, dense_step, rel_err, Lcg, OracleSystem};
use nalgebra::DVector;

fn one_case(family: Family, m: usize, rho: f64, n: usize, seed: u64) -> (f64, f64) {
    let scheme = init_scheme(SchemeSpec::new(family, m, rho)).unwrap();
    let mut rng = Lcg(seed);
    let sys = OracleSystem::random(n, &mut rng);
    let dt = 0.3 + 0.2 * rng.next();
    let t0 = 1.7;
    let ftilde: Vec<DVector<f64>> = (0..=scheme.spec.p_f)
        .map(|_| DVector::from_fn(n, |_, _| rng.next()))
        .collect();
    let z_prev = DVector::from_fn(2 * n, |_, _| rng.next());
    let acc_prev = dense_start_acceleration(&sys, dt, &z_prev, &ftilde);

    let (z_ref, acc_ref) = dense_step(&scheme, &sys, dt, &z_prev, &ftilde);
    let linear = sys.linear_system(ftilde, t0, dt);
    let out = advance(
        &linear,
        &scheme,
        IterationSettings::default(),
        z_prev.as_slice(),
        acc_prev.as_slice(),
        t0,
        dt,
    )
    .unwrap();
    (
        rel_err(&out.z, z_ref.as_slice()),
        rel_err(&out.acc, acc_ref.as_slice()),
    )
}

#[test]
fn one_step_matches_dense_evaluation() {
    let mut seed = 11;
    for family in [Family::DistinctRoots, Family::SingleMultipleRoot] {
        for m in 1..=3 {
            for rho in [0.0, 0.5, 1.0] {
                for n in [1, 2, 4] {
                    seed += 1;
                    let (ez, ea) = one_case(family, m, rho, n, seed);
                    assert!(ez < 1e-10, "{family} M={m} rho={rho} n={n}: state error {ez:e}");
                    assert!(ea < 1e-10, "{family} M={m} rho={rho} n={n}: acceleration error {ea:e}");
                }
            }
        }
    }
}

#[test]
fn higher_orders_match_dense_evaluation() {
    let mut seed = 900;
    for (family, m) in [
        (Family::DistinctRoots, 4),
        (Family::SingleMultipleRoot, 4),
        (Family::SingleMultipleRoot, 5),
        (Family::SingleMultipleRoot, 6),
    ] {
        for rho in [0.0, 0.5, 1.0] {
            seed += 1;
            let (ez, ea) = one_case(family, m, rho, 3, seed);
            assert!(ez < 1e-9, "{family} M={m} rho={rho}: state error {ez:e}");
            assert!(ea < 1e-9, "{family} M={m} rho={rho}: acceleration error {ea:e}");
        }
    }
}
