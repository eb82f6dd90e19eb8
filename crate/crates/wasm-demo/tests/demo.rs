use qdom_core::specfun::capacity_bound;
use qdom_wasm_demo::{balayage_ball, null_ball, two_phase_pair};

#[test]
fn balayage_frame_has_rgba_of_grid_size() {
    let a = 0.5 * capacity_bound(2, 0.5).unwrap();
    let f = balayage_ball(0.5, a, 64).unwrap();
    assert_eq!((f.width(), f.height()), (64, 64));
    assert_eq!(f.pixels().len(), 64 * 64 * 4);
    assert!(f.summary().starts_with("radius"));
    // centre is strongly positive: red channel saturated
    let c = (32 * 64 + 32) * 4;
    assert_eq!(f.pixels()[c], 255);
    assert!(f.pixels()[c + 1] < 128);
}

#[test]
fn balayage_rejects_mass_over_bound() {
    let b = capacity_bound(2, 0.5).unwrap();
    assert!(balayage_ball(0.5, 1.01 * b, 64).is_err());
    assert!(balayage_ball(0.5, 1.0, 8).is_err());
}

#[test]
fn pair_frame_is_antisymmetric_in_colour() {
    let f = two_phase_pair(0.5, 3.0, 0.85, 64).unwrap();
    assert_eq!((f.width(), f.height()), (96, 64));
    let px = |col: usize, row: usize| {
        let i = (row * 96 + col) * 4;
        [f.pixels()[i], f.pixels()[i + 1], f.pixels()[i + 2]]
    };
    // +phase on the right is red, -phase on the left is blue
    let (r, l) = (px(48 + 14, 32), px(48 - 15, 32));
    assert_eq!(r[0], 255);
    assert_eq!(l[2], 255);
    assert_eq!(r[1], l[1]);
}

#[test]
fn null_ball_summary_reports_small_identity_error() {
    let f = null_ball(1.0, 128).unwrap();
    let err: f64 = f.summary().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 0.05, "{}", f.summary());
}
