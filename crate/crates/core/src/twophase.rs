//! Two-phase quadrature domains by two routes: minimizing the scalar
//! two-phase energy, and alternating restricted balayage of mu+ and mu-.
//!
//! Both produce a sign-changing field u~ with D+ = {u~ > 0}, D- = {u~ < 0}
//! solving Delta u~ + k+^2 u~+ - k-^2 u~- = -f+ chi_{D+} + f- chi_{D-}.

use serde::{Deserialize, Serialize};

use crate::balayage::{
    balayage_gap, capacity_guard_mass, phase_tolerance, CapacityStatus, BOX_MARGIN,
};
use crate::error::{QdomError, Result};
use crate::grid::{helmholtz_apply, GridMeasure, Mask, ScalarField};
use crate::linsolve::SolverConfig;
use crate::multiphase::minimize_scalar_two_phase;
use crate::specfun::{ball_volume, capacity_bound};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Minimization,
    Balayage,
    /// Supplied field, e.g. a closed-form profile.
    Given,
}

/// One named hypothesis or consistency check and the formula it tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub formula: String,
    pub passed: bool,
    pub detail: String,
}

impl HypothesisCheck {
    pub fn new(name: &str, formula: &str, passed: bool, detail: String) -> Self {
        HypothesisCheck {
            name: name.into(),
            formula: formula.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub checks: Vec<HypothesisCheck>,
    /// Max PDE residual away from two-cell collars of the phase boundaries.
    pub residual_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Balayage route: positive masks shrink and negative masks grow after
    /// the first sweep.
    pub monotone: Option<bool>,
}

/// By-products of the balayage route.
#[derive(Debug, Clone)]
pub struct BalayageParts {
    /// Full-space W_k^{mu+} and W_k^{mu-}.
    pub w_plus: ScalarField,
    pub w_minus: ScalarField,
    pub omega_plus: Mask,
    pub omega_minus: Mask,
    /// u = W^{mu+} - W^{mu-} restricted to the complement of closure(omega+).
    pub candidate_u: ScalarField,
    /// v = W^{mu+} restricted to the complement of closure(omega-) - W^{mu-}.
    pub candidate_v: ScalarField,
    /// Node counts of (D+, D-) after each sweep.
    pub history: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct TwoPhaseResult {
    pub u: ScalarField,
    pub d_plus: Mask,
    pub d_minus: Mask,
    pub method: Method,
    pub k_plus: f64,
    pub k_minus: f64,
    pub f_plus: ScalarField,
    pub f_minus: ScalarField,
    pub tol_phase: f64,
    pub diagnostics: Diagnostics,
    pub parts: Option<BalayageParts>,
}

impl TwoPhaseResult {
    /// Wraps a given field: D+ = {u > tol}, D- = {u < -tol}, forcings
    /// f+- = -lambda+- (no source mass inside the phases).
    pub fn from_field(
        u: ScalarField,
        k_plus: f64,
        k_minus: f64,
        lambda_plus: f64,
        lambda_minus: f64,
        tol: f64,
    ) -> Result<Self> {
        let g = *u.grid();
        let d_plus = u.positive_mask(tol);
        let d_minus = u.negative_mask(tol);
        let f_plus = ScalarField::constant(g, -lambda_plus);
        let f_minus = ScalarField::constant(g, -lambda_minus);
        let (_, residual_max) =
            two_phase_residual(&u, k_plus, k_minus, &f_plus, &f_minus, &d_plus, &d_minus)?;
        Ok(TwoPhaseResult {
            u,
            d_plus,
            d_minus,
            method: Method::Given,
            k_plus,
            k_minus,
            f_plus,
            f_minus,
            tol_phase: tol,
            diagnostics: Diagnostics {
                residual_max,
                converged: true,
                ..Default::default()
            },
            parts: None,
        })
    }
}

/// Residual of Delta u + k+^2 u+ - k-^2 u- + f+ chi+ - f- chi- and its max
/// away from the box faces and from two-cell collars of dD+ and dD-.
pub fn two_phase_residual(
    u: &ScalarField,
    k_plus: f64,
    k_minus: f64,
    f_plus: &ScalarField,
    f_minus: &ScalarField,
    d_plus: &Mask,
    d_minus: &Mask,
) -> Result<(ScalarField, f64)> {
    let g = *u.grid();
    let lap = helmholtz_apply(u, 0.0);
    let mut vals = vec![0.0; g.len()];
    for (i, r) in vals.iter_mut().enumerate() {
        let x = u.values()[i];
        let mut v =
            lap.values()[i] + k_plus * k_plus * x.max(0.0) - k_minus * k_minus * (-x).max(0.0);
        if d_plus.get(i) {
            v += f_plus.values()[i];
        }
        if d_minus.get(i) {
            v -= f_minus.values()[i];
        }
        *r = v;
    }
    let collar = d_plus.collar(2).or(&d_minus.collar(2))?;
    let worst = (0..g.len())
        .filter(|&i| !collar.get(i) && g.margin(i) >= 2)
        .map(|i| vals[i].abs())
        .fold(0.0, f64::max);
    Ok((ScalarField::new(g, vals)?, worst))
}

/// Scalar minimization route with general forcings f+ = mu+ - lambda+ and
/// f- = mu- - lambda-.
pub fn two_phase_by_minimization(
    k_plus: f64,
    k_minus: f64,
    f_plus: &ScalarField,
    f_minus: &ScalarField,
    cfg: &SolverConfig,
) -> Result<TwoPhaseResult> {
    let r = minimize_scalar_two_phase(k_plus, k_minus, f_plus, f_minus, cfg)?;
    let tol_phase = phase_tolerance(cfg, r.u.sup_norm());
    let d_plus = r.u.positive_mask(tol_phase);
    let d_minus = r.u.negative_mask(tol_phase);
    let (_, residual_max) =
        two_phase_residual(&r.u, k_plus, k_minus, f_plus, f_minus, &d_plus, &d_minus)?;
    // nodes where the forcing is positive must belong to the matching phase
    let mut checks = Vec::new();
    for (name, f, d) in [
        ("support-plus", f_plus, &d_plus),
        ("support-minus", f_minus, &d_minus),
    ] {
        let pos = f.positive_mask(0.0);
        let miss = pos.and_not(d)?.count();
        checks.push(HypothesisCheck::new(
            name,
            "{f > 0} contained in D",
            miss == 0,
            format!("{miss} node(s) with positive forcing outside the phase"),
        ));
    }
    Ok(TwoPhaseResult {
        u: r.u,
        d_plus,
        d_minus,
        method: Method::Minimization,
        k_plus,
        k_minus,
        f_plus: f_plus.clone(),
        f_minus: f_minus.clone(),
        tol_phase,
        diagnostics: Diagnostics {
            checks,
            residual_max,
            iterations: r.sweeps,
            converged: r.converged,
            monotone: None,
        },
        parts: None,
    })
}

fn check_margin(w: &ScalarField, tol: f64) -> Result<()> {
    let edge = w.max_within_margin(BOX_MARGIN);
    if edge > tol {
        return Err(QdomError::BoxTooSmall(format!(
            "balayage within {BOX_MARGIN} cells of the box boundary ({edge:e})"
        )));
    }
    Ok(())
}

/// Two-phase balayage with lambda+ = lambda- = 1 and k+ = k- = k.
///
/// Checks, in order: mass below c_k(R_k); disjoint supports; closure of
/// omega(mu-) misses supp mu+ and vice versa; supp mu+ lies in the
/// non-contact set of mu+ balayaged onto the complement of closure(omega(mu-))
/// and vice versa. Then alternates restricted balayages, each phase pinned
/// to zero on the other phase's current node set, until both sets repeat.
pub fn construct_two_phase_balayage(
    mu_plus: &GridMeasure,
    mu_minus: &GridMeasure,
    k: f64,
    cfg: &SolverConfig,
    max_sweeps: usize,
) -> Result<TwoPhaseResult> {
    let g = *mu_plus.grid();
    g.check_same(mu_minus.grid())?;
    let n = g.n();
    let mut checks = Vec::new();

    let total = mu_plus.total_mass() + mu_minus.total_mass();
    let cap = capacity_guard_mass(total, k, n)?;
    let bound = capacity_bound(n, k)?;
    let cap_ok = cap == CapacityStatus::Strict;
    checks.push(HypothesisCheck::new(
        "capacity",
        "mu+(R^n) + mu-(R^n) < c_k(R_k)",
        cap_ok,
        format!("total mass {total:.6} vs c_k(R_k) = {bound:.6}"),
    ));
    if !cap_ok {
        return Err(QdomError::Hypothesis(format!(
            "capacity violated: mu+(R^n) + mu-(R^n) = {total} is not below c_k(R_k) = {bound}"
        )));
    }
    let (sp, sm) = (mu_plus.support(), mu_minus.support());
    let overlap = sp.and(&sm)?.count();
    checks.push(HypothesisCheck::new(
        "disjoint-supports",
        "supp mu+ and supp mu- disjoint",
        overlap == 0,
        format!("{overlap} shared node(s)"),
    ));
    if overlap > 0 {
        return Err(QdomError::Hypothesis(format!(
            "disjointness violated: supp mu+ and supp mu- share {overlap} node(s)"
        )));
    }

    let w_plus = balayage_gap(mu_plus, k, &Mask::full(g), cfg)?;
    let w_minus = balayage_gap(mu_minus, k, &Mask::full(g), cfg)?;
    let tol_phase = phase_tolerance(cfg, w_plus.sup_norm().max(w_minus.sup_norm()));
    check_margin(&w_plus, tol_phase)?;
    check_margin(&w_minus, tol_phase)?;
    let omega_plus = w_plus.positive_mask(tol_phase);
    let omega_minus = w_minus.positive_mask(tol_phase);
    let closure_plus = omega_plus.dilate(1);
    let closure_minus = omega_minus.dilate(1);

    for (name, formula, closure, supp) in [
        (
            "closure-disjoint-minus",
            "closure(omega(mu-)) meets no point of supp mu+",
            &closure_minus,
            &sp,
        ),
        (
            "closure-disjoint-plus",
            "closure(omega(mu+)) meets no point of supp mu-",
            &closure_plus,
            &sm,
        ),
    ] {
        let hits = closure.and(supp)?.count();
        checks.push(HypothesisCheck::new(
            name,
            formula,
            hits == 0,
            format!("{hits} node(s)"),
        ));
        if hits > 0 {
            return Err(QdomError::Hypothesis(format!(
                "disjointness violated ({formula}): {hits} node(s)"
            )));
        }
    }

    let w_plus_r = balayage_gap(mu_plus, k, &closure_minus.not(), cfg)?;
    let w_minus_r = balayage_gap(mu_minus, k, &closure_plus.not(), cfg)?;
    for (name, formula, w, supp) in [
        (
            "restricted-support-plus",
            "supp mu+ in omega_{R^n minus closure(omega(mu-))}(mu+)",
            &w_plus_r,
            &sp,
        ),
        (
            "restricted-support-minus",
            "supp mu- in omega_{R^n minus closure(omega(mu+))}(mu-)",
            &w_minus_r,
            &sm,
        ),
    ] {
        let miss = supp.and_not(&w.positive_mask(tol_phase))?.count();
        checks.push(HypothesisCheck::new(
            name,
            formula,
            miss == 0,
            format!("{miss} node(s) uncovered"),
        ));
        if miss > 0 {
            return Err(QdomError::Hypothesis(format!(
                "support condition violated ({formula}): {miss} node(s)"
            )));
        }
    }
    let candidate_u = w_plus.sub(&w_minus_r)?;
    let candidate_v = w_plus_r.sub(&w_minus)?;

    // alternating restricted balayage, negative phase first
    let u0 = w_plus.sub(&w_minus)?;
    let mut pos = u0.positive_mask(tol_phase);
    let mut neg = u0.negative_mask(tol_phase);
    let mut history = Vec::new();
    let mut monotone = true;
    let mut converged = false;
    let mut sweeps = 0;
    let mut wp = w_plus.clone();
    let mut wm = w_minus.clone();
    while sweeps < max_sweeps {
        sweeps += 1;
        wm = balayage_gap(mu_minus, k, &pos.not(), cfg)?;
        let new_neg = wm.positive_mask(tol_phase);
        wp = balayage_gap(mu_plus, k, &new_neg.not(), cfg)?;
        let new_pos = wp.positive_mask(tol_phase);
        if sweeps > 1 {
            monotone &= new_pos.is_subset_of(&pos)? && neg.is_subset_of(&new_neg)?;
        }
        let stable = new_pos == pos && new_neg == neg;
        pos = new_pos;
        neg = new_neg;
        history.push((pos.count(), neg.count()));
        if stable {
            converged = true;
            break;
        }
    }
    let u = wp.sub(&wm)?;
    check_margin(&u, tol_phase)?;
    let d_plus = u.positive_mask(tol_phase);
    let d_minus = u.negative_mask(tol_phase);
    let f_plus = mu_plus.density().map(|m| m - 1.0);
    let f_minus = mu_minus.density().map(|m| m - 1.0);
    let (_, residual_max) = two_phase_residual(&u, k, k, &f_plus, &f_minus, &d_plus, &d_minus)?;

    for (name, formula, supp, d) in [
        ("support-plus", "supp mu+ in D+", &sp, &d_plus),
        ("support-minus", "supp mu- in D-", &sm, &d_minus),
    ] {
        let miss = supp.and_not(d)?.count();
        checks.push(HypothesisCheck::new(
            name,
            formula,
            miss == 0,
            format!("{miss} node(s) outside"),
        ));
    }
    let lo = candidate_v.sub(&u)?.max();
    let hi = u.sub(&candidate_u)?.max();
    checks.push(HypothesisCheck::new(
        "candidate-ordering",
        "v <= u~ <= u nodewise",
        lo <= tol_phase && hi <= tol_phase,
        format!("max(v - u~) = {lo:e}, max(u~ - u) = {hi:e}"),
    ));

    Ok(TwoPhaseResult {
        u,
        d_plus,
        d_minus,
        method: Method::Balayage,
        k_plus: k,
        k_minus: k,
        f_plus,
        f_minus,
        tol_phase,
        diagnostics: Diagnostics {
            checks,
            residual_max,
            iterations: sweeps,
            converged,
            monotone: Some(monotone),
        },
        parts: Some(BalayageParts {
            w_plus,
            w_minus,
            omega_plus,
            omega_minus,
            candidate_u,
            candidate_v,
            history,
        }),
    })
}

/// eta(u, mu) = ((mu+ - 1)+ - (mu+ - 1)- chi_{u>0}) - ((mu- - 1)+ - (mu- - 1)- chi_{u<0})
/// with u > tol and u < -tol standing for the strict signs.
pub fn eta_measure(
    u: &ScalarField,
    mu_plus: &GridMeasure,
    mu_minus: &GridMeasure,
    tol: f64,
) -> Result<ScalarField> {
    u.grid().check_same(mu_plus.grid())?;
    u.grid().check_same(mu_minus.grid())?;
    let (p, m) = (mu_plus.density().values(), mu_minus.density().values());
    let vals = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| eta_value(x, p[i], m[i], tol))
        .collect();
    ScalarField::new(*u.grid(), vals)
}

pub(crate) fn eta_value(x: f64, mp: f64, mm: f64, tol: f64) -> f64 {
    let (ap, am) = (mp - 1.0, mm - 1.0);
    let plus = ap.max(0.0) - if x > tol { (-ap).max(0.0) } else { 0.0 };
    let minus = am.max(0.0) - if x < -tol { (-am).max(0.0) } else { 0.0 };
    plus - minus
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauReport {
    /// Nodes where -(Delta_h + k^2) w < eta(w, mu) beyond tolerance.
    pub pde_violations: usize,
    pub worst_pde_violation: f64,
    /// Nodes where w < -W^{mu-}.
    pub lower_violations: usize,
    /// Nodes outside -W^{mu-} <= w <= W^{mu+}.
    pub sandwich_violations: usize,
    pub member: bool,
}

/// Tests w against the defining inequalities of tau_{k,mu} at nodes outside
/// three-cell collars of dD+ and dD- (D+- are the sign sets of w) and away
/// from the box faces.
pub fn tau_membership(
    w: &ScalarField,
    mu_plus: &GridMeasure,
    mu_minus: &GridMeasure,
    k: f64,
    w_plus_full: &ScalarField,
    w_minus_full: &ScalarField,
    tol: f64,
) -> Result<TauReport> {
    let g = *w.grid();
    let eta = eta_measure(w, mu_plus, mu_minus, tol)?;
    let lhs = helmholtz_apply(w, k).scale(-1.0);
    let collar = w
        .positive_mask(tol)
        .collar(3)
        .or(&w.negative_mask(tol).collar(3))?;
    let scale = mu_plus
        .density()
        .sup_norm()
        .max(mu_minus.density().sup_norm())
        .max(1.0);
    let pde_tol = 1e-6 * scale;
    let mut pde_violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        if collar.get(i) || g.margin(i) < 2 {
            continue;
        }
        let gap = lhs.values()[i] - eta.values()[i];
        if gap < -pde_tol {
            pde_violations += 1;
            worst = worst.max(-gap);
        }
    }
    let (wv, lo, hi) = (w.values(), w_minus_full.values(), w_plus_full.values());
    let lower_violations = (0..g.len()).filter(|&i| wv[i] < -lo[i] - tol).count();
    let sandwich_violations = (0..g.len())
        .filter(|&i| wv[i] < -lo[i] - tol || wv[i] > hi[i] + tol)
        .count();
    Ok(TauReport {
        pde_violations,
        worst_pde_violation: worst,
        lower_violations,
        sandwich_violations,
        member: pde_violations == 0 && lower_violations == 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossReport {
    /// |D+(a) xor D+(b)| / |D+(a) or D+(b)| and likewise for D-.
    pub plus_symdiff: f64,
    pub minus_symdiff: f64,
    pub plus_symdiff_nodes: usize,
    pub minus_symdiff_nodes: usize,
    /// ||u_a - u_b|| / ||u_a|| in discrete L^2.
    pub l2_relative: f64,
    /// Whether the masks differ only within two-cell collars of each other.
    pub masks_within_collar: bool,
}

pub fn cross_validate(a: &TwoPhaseResult, b: &TwoPhaseResult) -> Result<CrossReport> {
    a.u.grid().check_same(b.u.grid())?;
    let ratio = |x: &Mask, y: &Mask| -> Result<(f64, usize)> {
        let d = x.xor(y)?.count();
        let u = x.or(y)?.count();
        Ok((if u == 0 { 0.0 } else { d as f64 / u as f64 }, d))
    };
    let (ps, pn) = ratio(&a.d_plus, &b.d_plus)?;
    let (ms, mn) = ratio(&a.d_minus, &b.d_minus)?;
    let norm = a.u.l2_norm();
    let diff = a.u.sub(&b.u)?.l2_norm();
    let l2_relative = if norm == 0.0 { diff } else { diff / norm };
    let masks_within_collar =
        a.d_plus.agrees_within(&b.d_plus, 2)? && a.d_minus.agrees_within(&b.d_minus, 2)?;
    Ok(CrossReport {
        plus_symdiff: ps,
        minus_symdiff: ms,
        plus_symdiff_nodes: pn,
        minus_symdiff_nodes: mn,
        l2_relative,
        masks_within_collar,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationEntry {
    pub point: Vec<f64>,
    pub mass: f64,
    pub radius: f64,
    /// mass / radius^n.
    pub density_ratio: f64,
    pub meets_surrogate: bool,
}

/// Compares each atom's mass / radius^n with a surrogate constant c_n
/// (default 1/|B_1|). The true constant is not computable; this documents
/// the margin rather than certifying the hypothesis.
pub fn concentration_preflight(
    mu: &GridMeasure,
    radius: f64,
    c_n: Option<f64>,
) -> Vec<ConcentrationEntry> {
    let n = mu.grid().n();
    let c = c_n.unwrap_or(1.0 / ball_volume(n, 1.0));
    mu.atoms()
        .iter()
        .map(|a| {
            let ratio = a.mass / radius.powi(n as i32);
            ConcentrationEntry {
                point: a.point.clone(),
                mass: a.mass,
                radius,
                density_ratio: ratio,
                meets_surrogate: ratio >= c,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{deposit_measure, Atom, Grid};

    #[test]
    fn eta_vanishes_for_zero_field_and_light_measures() {
        assert_eq!(eta_value(0.0, 0.5, 0.0, 0.0), 0.0);
        assert_eq!(eta_value(0.0, 0.0, 0.9, 0.0), 0.0);
    }

    #[test]
    fn eta_is_odd_under_swap() {
        for &(x, p, m) in &[
            (1.0, 3.0, 0.0),
            (-0.5, 0.0, 0.2),
            (0.0, 2.0, 0.0),
            (2.0, 0.0, 0.5),
        ] {
            assert_eq!(eta_value(-x, m, p, 0.0), -eta_value(x, p, m, 0.0));
        }
    }

    #[test]
    fn single_phase_degeneration() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        let mu = deposit_measure(&g, &[Atom::new(&[0.0, 0.0], 2.0)], 0.25).unwrap();
        let cfg = SolverConfig::tuned(&g);
        let r = construct_two_phase_balayage(&mu, &GridMeasure::zero(g), 0.5, &cfg, 20).unwrap();
        assert!(r.d_minus.is_empty());
        let w = balayage_gap(&mu, 0.5, &Mask::full(g), &cfg).unwrap();
        assert!(r.u.sub(&w).unwrap().sup_norm() <= 1e-12);
        assert_eq!(r.diagnostics.iterations, 1);
    }
}
