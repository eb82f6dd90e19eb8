use qdom_core::grid::{deposit_measure, Atom, Grid, GridMeasure};
use qdom_core::linsolve::SolverConfig;
use qdom_core::specfun::ball_capacity;
use qdom_core::twophase::{
    construct_two_phase_balayage, cross_validate, tau_membership, two_phase_by_minimization,
};

fn symmetric_pair(h_inv: usize, sep: f64) -> (Grid, GridMeasure, GridMeasure, f64) {
    let k = 0.5;
    let a = ball_capacity(2, k, 1.0).unwrap();
    let g = Grid::new(2, &[-2.5, -2.0], &[5.0, 4.0], &[5 * h_inv, 4 * h_inv]).unwrap();
    let mp = deposit_measure(&g, &[Atom::new(&[sep, 0.0], a)], 0.15).unwrap();
    let mm = deposit_measure(&g, &[Atom::new(&[-sep, 0.0], a)], 0.15).unwrap();
    (g, mp, mm, k)
}

#[test]
fn symmetric_pair_routes_agree() {
    let (g, mp, mm, k) = symmetric_pair(64, 0.85);
    let cfg = SolverConfig::tuned(&g);
    let bal = construct_two_phase_balayage(&mp, &mm, k, &cfg, 50).unwrap();
    for c in &bal.diagnostics.checks {
        assert!(c.passed, "{} failed: {}", c.name, c.detail);
    }
    let fp = mp.density().map(|m| m - 1.0);
    let fm = mm.density().map(|m| m - 1.0);
    let min = two_phase_by_minimization(k, k, &fp, &fm, &cfg).unwrap();
    assert!(min.diagnostics.converged);
    let rep = cross_validate(&bal, &min).unwrap();
    assert!(rep.l2_relative <= 0.05, "{rep:?}");
    assert!(rep.masks_within_collar, "{rep:?}");

    let parts = bal.parts.as_ref().unwrap();
    for u in [&bal.u, &parts.candidate_u, &min.u] {
        let tau =
            tau_membership(u, &mp, &mm, k, &parts.w_plus, &parts.w_minus, bal.tol_phase).unwrap();
        assert!(tau.member, "{tau:?}");
    }
    // the configuration is odd under x0 -> -x0
    let mirror = bal.d_plus.reflect(0, 0.0);
    assert!(mirror.agrees_within(&bal.d_minus, 1).unwrap());
}
