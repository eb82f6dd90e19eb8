//! Three operations for the browser page: a one-phase balayage ball, a
//! two-phase pair and the first null quadrature ball. Each returns a
//! [`Frame`] holding an RGBA image and a one-line summary.

use wasm_bindgen::prelude::*;

use qdom_core::balayage::partial_balayage;
use qdom_core::linsolve::SolverConfig;
use qdom_core::specfun::{ball_capacity, bessel_zero, capacity_bound, BesselOrder};
use qdom_core::twophase::two_phase_by_minimization;
use qdom_core::verify::{null_qd_profile, null_qd_radius, pompeiu_identities};
use qdom_core::{deposit_measure, Atom, Grid, Mask, QdomError, ScalarField};

/// Largest image edge the page may request; keeps solves interactive.
pub const MAX_CELLS: usize = 256;

#[wasm_bindgen]
pub struct Frame {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    summary: String,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

impl Frame {
    pub fn pixels(&self) -> &[u8] {
        &self.rgba
    }
}

fn check_cells(cells: usize) -> Result<(), QdomError> {
    if !(16..=MAX_CELLS).contains(&cells) {
        return Err(QdomError::Config(format!(
            "cells must lie in 16..={MAX_CELLS}"
        )));
    }
    Ok(())
}

/// Colour map: blue for negative, red for positive, white at zero.
/// `outline` nodes are drawn black.
fn paint(field: &ScalarField, outline: Option<&Mask>) -> Frame {
    let g = field.grid();
    let [nx, ny, _] = g.cells();
    let scale = field.sup_norm().max(f64::MIN_POSITIVE);
    let edge = outline.map(|m| m.inner_boundary());
    let mut rgba = Vec::with_capacity(nx * ny * 4);
    for row in (0..ny).rev() {
        for col in 0..nx {
            let i = g.index([col, row, 0]);
            let t = (field.values()[i] / scale).clamp(-1.0, 1.0);
            let fade = (255.0 * (1.0 - t.abs())) as u8;
            let px = if edge.as_ref().is_some_and(|e| e.get(i)) {
                [0, 0, 0]
            } else if t >= 0.0 {
                [255, fade, fade]
            } else {
                [fade, fade, 255]
            };
            rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
    }
    Frame {
        width: nx,
        height: ny,
        rgba,
        summary: String::new(),
    }
}

/// Radius with c_k(r) = mass, by bisection below the first eigen-ball.
fn predicted_radius(k: f64, mass: f64) -> Result<f64, QdomError> {
    let (mut lo, mut hi) = (0.0, bessel_zero(BesselOrder::ZERO, 1)? / k);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ball_capacity(2, k, mid)? < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Balayage of a point mass of `mass` at the origin; the box is sized
/// from the predicted radius.
pub fn balayage_ball(k: f64, mass: f64, cells: usize) -> Result<Frame, QdomError> {
    check_cells(cells)?;
    let bound = capacity_bound(2, k)?;
    if !(mass > 0.0 && mass < bound) {
        return Err(QdomError::Config(format!(
            "mass must lie in (0, {bound:.4}) for k = {k}"
        )));
    }
    let g = Grid::centered(2, 1.5 * predicted_radius(k, mass)?.max(0.2), cells)?;
    let mu = deposit_measure(
        &g,
        &[Atom::new(&[0.0, 0.0], mass)],
        0.15_f64.max(3.0 * g.h()),
    )?;
    let res = partial_balayage(&mu, k, &Mask::full(g), &SolverConfig::tuned(&g))?;
    let r = (res.omega.volume() / std::f64::consts::PI).sqrt();
    let mut f = paint(&res.w, Some(&res.omega));
    f.summary = format!(
        "radius {r:.4}, c_k(r) = {:.4} against mass {mass:.4}",
        ball_capacity(2, k, r)?
    );
    Ok(f)
}

/// Two atoms of equal mass at (+-sep, 0) with opposite phases.
pub fn two_phase_pair(k: f64, mass: f64, sep: f64, cells: usize) -> Result<Frame, QdomError> {
    check_cells(cells)?;
    let g = Grid::new(2, &[-3.0, -2.0], &[6.0, 4.0], &[cells * 3 / 2, cells])?;
    if !(sep > 0.0 && sep < 2.5) {
        return Err(QdomError::Config("separation must lie in (0, 2.5)".into()));
    }
    let r = 0.15_f64.max(3.0 * g.h());
    let mp = deposit_measure(&g, &[Atom::new(&[sep, 0.0], mass)], r)?;
    let mm = deposit_measure(&g, &[Atom::new(&[-sep, 0.0], mass)], r)?;
    let fp = mp.density().map(|m| m - 1.0);
    let fm = mm.density().map(|m| m - 1.0);
    let tp = two_phase_by_minimization(k, k, &fp, &fm, &SolverConfig::tuned(&g))?;
    let mut f = paint(&tp.u, None);
    let touching = tp.d_plus.dilate(1).and(&tp.d_minus)?.count() > 0;
    f.summary = format!(
        "|D+| = {:.3}, |D-| = {:.3}, phases {}",
        tp.d_plus.volume(),
        tp.d_minus.volume(),
        if touching { "touch" } else { "apart" }
    );
    Ok(f)
}

/// First null quadrature ball for wave number k.
pub fn null_ball(k: f64, cells: usize) -> Result<Frame, QdomError> {
    check_cells(cells)?;
    let r = null_qd_radius(2, k, 1)?;
    let g = Grid::centered(2, 1.4 * r, cells)?;
    let (u, d) = null_qd_profile(&g, k, 1)?;
    let ids = pompeiu_identities(&u, &d, k, 0.05)?;
    let worst = ids
        .identities
        .iter()
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);
    let mut f = paint(&u, Some(&d));
    f.summary = format!(
        "R = {r:.4}, |D| = {:.3}, identity error {worst:.1e}",
        ids.volume
    );
    Ok(f)
}

fn js(r: Result<Frame, QdomError>) -> Result<Frame, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = balayageBall)]
pub fn balayage_ball_js(k: f64, mass: f64, cells: usize) -> Result<Frame, JsError> {
    js(balayage_ball(k, mass, cells))
}

#[wasm_bindgen(js_name = twoPhasePair)]
pub fn two_phase_pair_js(k: f64, mass: f64, sep: f64, cells: usize) -> Result<Frame, JsError> {
    js(two_phase_pair(k, mass, sep, cells))
}

#[wasm_bindgen(js_name = nullBall)]
pub fn null_ball_js(k: f64, cells: usize) -> Result<Frame, JsError> {
    js(null_ball(k, cells))
}

#[wasm_bindgen(js_name = capacityBound)]
pub fn capacity_bound_js(k: f64) -> f64 {
    capacity_bound(2, k).unwrap_or(f64::NAN)
}
