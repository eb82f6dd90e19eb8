use qdom_core::balayage::{partial_balayage, potential, structure_check};
use qdom_core::grid::{deposit_measure, helmholtz_apply, Atom, Grid, Mask};
use qdom_core::linsolve::SolverConfig;
use qdom_core::specfun::ball_capacity;

fn radius_from_area(m: &Mask) -> f64 {
    (m.volume() / std::f64::consts::PI).sqrt()
}

#[test]
fn atom_balayage_is_a_capacity_ball() {
    let k = 0.5;
    let a = ball_capacity(2, k, 1.0).unwrap();
    let g = Grid::centered(2, 2.0, 256).unwrap();
    let mu = deposit_measure(&g, &[Atom::new(&[0.0, 0.0], a)], 0.15).unwrap();
    let cfg = SolverConfig::tuned(&g);
    let res = partial_balayage(&mu, k, &Mask::full(g), &cfg).unwrap();
    let r = radius_from_area(&res.omega);
    let c = ball_capacity(2, k, r).unwrap();
    assert!((c - a).abs() / a <= 0.03, "r = {r}, c_k(r) = {c}, a = {a}");
    let rep = structure_check(&res, &mu, &Mask::full(g)).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn point_potential_matches_fundamental_solution_3d() {
    let g = Grid::centered(3, 2.5, 40).unwrap();
    let mu = deposit_measure(&g, &[Atom::new(&[0.0, 0.0, 0.0], 1.0)], 0.25).unwrap();
    let u = potential(&mu, 1.0).unwrap();
    let i = g.nearest_node(&[2.0 + 1e-9, 0.0625, 0.0625]).unwrap();
    let p = g.point(i);
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let want = r.cos() / (4.0 * std::f64::consts::PI * r);
    let got = u.values()[i];
    assert!((got - want).abs() <= 0.02 * want.abs(), "{got} vs {want}");
}

#[test]
fn potential_inverts_the_helmholtz_operator() {
    let k = 0.8;
    let g = Grid::centered(2, 2.0, 128).unwrap();
    let mu = deposit_measure(&g, &[Atom::new(&[0.0, 0.0], 2.0)], 0.5).unwrap();
    let u = potential(&mu, k).unwrap();
    let r = helmholtz_apply(&u, k).scale(-1.0);
    let peak = mu.density().sup_norm();
    let inner = Mask::ball(g, &[0.0, 0.0], 0.5 - 3.0 * g.h());
    let far = Mask::ball(g, &[0.0, 0.0], 0.5 + 3.0 * g.h()).not().erode(2);
    let mut worst: f64 = 0.0;
    for i in inner.or(&far).unwrap().indices() {
        worst = worst.max((r.values()[i] - mu.density().values()[i]).abs());
    }
    assert!(worst <= 0.05 * peak, "{worst} vs {peak}");
}
