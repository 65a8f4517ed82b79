mod common;

use agestruct::controller::InputLaw;
use agestruct::galerkin::{assemble, build_basis, characteristic_roots, residual, simulate};
use agestruct::trajectory::{make_constant, make_transition};
use agestruct::Error;
use common::*;
use nalgebra::DVector;

#[test]
fn trials_satisfy_the_birth_condition() {
    let (params, eq) = calibrated(401);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let basis = build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap();
    for (i, phi) in basis.trials().iter().enumerate() {
        let defect = phi.at_node(0) - phi.inner(&params.k);
        assert!(defect.abs() < 1e-8 * phi.max_abs(), "trial {i}: {defect}");
    }
}

#[test]
fn steady_state_is_exact() {
    let (params, eq) = calibrated(401);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let basis = build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap();
    let mut sys = assemble(&basis, &params).unwrap();
    let mut e2 = DVector::zeros(basis.len());
    e2[1] = 1.0;
    sys.lambda = e2.clone();
    let traj = make_constant(1.0).unwrap();
    let trace = simulate(
        &mut sys,
        &basis,
        &params,
        &traj,
        &InputLaw::Constant(eq.d_star),
        10.0,
        0.005,
        &[],
    )
    .unwrap();
    for lambda in &trace.lambdas {
        for (a, b) in lambda.iter().zip(e2.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn residual_is_orthogonal_to_the_trials() {
    let (params, eq) = calibrated(401);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let basis = build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap();
    let mut sys = assemble(&basis, &params).unwrap();
    let traj = make_transition(1.0, 3.0, 5.0).unwrap();
    simulate(
        &mut sys,
        &basis,
        &params,
        &traj,
        &InputLaw::Feedback(gains()),
        1.0,
        0.005,
        &[],
    )
    .unwrap();
    for d in [0.5, 0.9, 1.5] {
        let (r, defect) = residual(&sys, &basis, &params, d);
        assert!(r > 0.0);
        for phi in basis.trials() {
            let projection = phi.inner(&defect);
            assert!(
                projection.abs() < 1e-10 * r.max(1.0) * phi.max_abs(),
                "{projection}"
            );
        }
    }
}

#[test]
fn mass_matrix_matches_refined_quadrature() {
    let (params, eq) = calibrated(401);
    let (fine_params, fine_eq) = calibrated(801);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let coarse = assemble(
        &build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap(),
        &params,
    )
    .unwrap();
    let fine_roots = characteristic_roots(&fine_eq, 6).unwrap();
    let fine = assemble(
        &build_basis(&x0(&fine_params), &fine_params, &fine_eq, &fine_roots, 6).unwrap(),
        &fine_params,
    )
    .unwrap();
    let scale = coarse.m_matrix.amax();
    assert!((&coarse.m_matrix - &fine.m_matrix).amax() < 1e-7 * scale);
    let gap = (&coarse.p_vector - &fine.p_vector).amax();
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn odd_or_tiny_basis_rejected() {
    let (params, eq) = calibrated(201);
    let roots = characteristic_roots(&eq, 6).unwrap();
    assert!(matches!(
        build_basis(&x0(&params), &params, &eq, &roots, 5),
        Err(Error::InvalidParams(_))
    ));
    assert!(matches!(
        build_basis(&x0(&params), &params, &eq, &roots, 2),
        Err(Error::InvalidParams(_))
    ));
    assert!(matches!(
        build_basis(&x0(&params), &params, &eq, &roots, 12),
        Err(Error::RootSearchExhausted { .. })
    ));
}

#[test]
fn transition_run_stays_positive_and_settles() {
    let (params, eq) = calibrated(401);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let basis = build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap();
    let mut sys = assemble(&basis, &params).unwrap();
    let traj = make_transition(1.0, 3.0, 5.0).unwrap();
    let trace = simulate(
        &mut sys,
        &basis,
        &params,
        &traj,
        &InputLaw::Feedback(gains()),
        20.0,
        0.005,
        &[1.0],
    )
    .unwrap();
    assert!(trace.samples.iter().all(|s| s.min_profile > 0.0));
    assert!(trace
        .samples
        .iter()
        .all(|s| params.bounds.contains(s.control.d_applied)));
    assert!(trace
        .samples
        .iter()
        .filter(|s| s.t >= 5.0)
        .all(|s| s.residual <= 1e-6));
    assert_eq!(trace.snapshots.len(), 1);
    let last = trace.samples.last().unwrap();
    assert!((last.y / 3.0 - 1.0).abs() < 1e-6);
    assert!((last.z[1] - eq.d_star).abs() < 1e-3);
}

#[test]
fn equilibrium_column_is_steady() {
    // N e₂ = D* M e₂ because x*′ = −(μ + D*) x*
    let (params, eq) = calibrated(401);
    let roots = characteristic_roots(&eq, 6).unwrap();
    let sys = assemble(
        &build_basis(&x0(&params), &params, &eq, &roots, 6).unwrap(),
        &params,
    )
    .unwrap();
    let lhs = sys.n_matrix.column(1).into_owned();
    let rhs = sys.m_matrix.column(1) * eq.d_star;
    assert!((lhs - rhs).amax() < 1e-12 * sys.m_matrix.amax());
}
