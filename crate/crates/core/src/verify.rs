//! Checks against exact Helmholtz solutions: quadrature identities over
//! families of plane waves and radial Bessel solutions, the closed-form null
//! quadrature balls, and the energy identities they satisfy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{QdomError, Result};
use crate::grid::{helmholtz_apply, integrate, Grid, GridMeasure, Mask, ScalarField};
use crate::multiphase::dirichlet_energy;
use crate::specfun::{bessel_zero, radial_solution, BesselOrder};

/// Gate constant: interior discrete residual must stay below
/// GATE * k^4 h^2 * ||w||_inf.
pub const RESIDUAL_GATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberKind {
    /// cos(k x . theta)
    PlaneRe { theta: Vec<f64> },
    /// sin(k x . theta)
    PlaneIm { theta: Vec<f64> },
    /// |x - a|^(1 - n/2) J_{n/2 - 1}(k |x - a|)
    Radial { center: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct TestMember {
    pub kind: MemberKind,
    pub field: ScalarField,
    /// Interior discrete Helmholtz residual measured at construction.
    pub gate_residual: f64,
}

impl TestMember {
    pub fn label(&self) -> String {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.kind {
            MemberKind::PlaneRe { theta } => format!("re-plane({})", fmt(theta)),
            MemberKind::PlaneIm { theta } => format!("im-plane({})", fmt(theta)),
            MemberKind::Radial { center } => format!("radial({})", fmt(center)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestFamily {
    pub k: f64,
    pub members: Vec<TestMember>,
}

/// Analytic value of a member at `x`.
pub fn evaluate_member(kind: &MemberKind, k: f64, x: &[f64]) -> f64 {
    match kind {
        MemberKind::PlaneRe { theta } => (k * dotp(x, theta)).cos(),
        MemberKind::PlaneIm { theta } => (k * dotp(x, theta)).sin(),
        MemberKind::Radial { center } => {
            let r = x
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            radial_solution(x.len(), k, r).expect("dimension checked at construction")
        }
    }
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit directions: equispaced angles in 2D, a Fibonacci lattice on the
/// sphere in 3D.
pub fn directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            if n == 2 {
                let a = 2.0 * PI * j as f64 / count as f64;
                vec![a.cos(), a.sin()]
            } else {
                let z = 1.0 - (2.0 * j as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = PI * (3.0 - 5f64.sqrt()) * j as f64;
                vec![r * phi.cos(), r * phi.sin(), z]
            }
        })
        .collect()
}

/// Interior discrete (Delta_h + k^2) residual: max over nodes whose stencil
/// stays inside the box.
pub fn interior_residual(field: &ScalarField, k: f64) -> f64 {
    let g = field.grid();
    let r = helmholtz_apply(field, k);
    (0..g.len())
        .filter(|&i| g.margin(i) >= 1)
        .map(|i| r.values()[i].abs())
        .fold(0.0, f64::max)
}

/// Requires k h <= 1, i.e. at least 2 pi nodes per wavelength.
pub fn check_sampling(grid: &Grid, k: f64) -> Result<()> {
    if k * grid.h() > 1.0 {
        return Err(QdomError::Resolution(format!(
            "k h = {} exceeds 1; increase cells",
            k * grid.h()
        )));
    }
    Ok(())
}

/// Samples a member and enforces the residual gate.
pub fn make_member(grid: &Grid, k: f64, kind: MemberKind) -> Result<TestMember> {
    check_sampling(grid, k)?;
    let field = ScalarField::from_fn(*grid, |x| evaluate_member(&kind, k, x));
    let gate_residual = interior_residual(&field, k);
    let h = grid.h();
    let limit = RESIDUAL_GATE * k.powi(4) * h * h * field.sup_norm();
    if gate_residual > limit {
        return Err(QdomError::Resolution(format!(
            "test solution residual {gate_residual:e} exceeds gate {limit:e}; refine the grid"
        )));
    }
    Ok(TestMember {
        kind,
        field,
        gate_residual,
    })
}

/// Re and Im plane waves over `n_dirs` directions plus radial members at
/// the given centres.
pub fn helmholtz_test_family(
    grid: &Grid,
    k: f64,
    n_dirs: usize,
    centers: &[Vec<f64>],
) -> Result<TestFamily> {
    if !(k > 0.0) {
        return Err(QdomError::Domain(format!(
            "test family needs k > 0, got {k}"
        )));
    }
    let n = grid.n();
    let mut members = Vec::new();
    for theta in directions(n, n_dirs) {
        members.push(make_member(
            grid,
            k,
            MemberKind::PlaneRe {
                theta: theta.clone(),
            },
        )?);
        members.push(make_member(grid, k, MemberKind::PlaneIm { theta })?);
    }
    for c in centers {
        if c.len() != n {
            return Err(QdomError::Config(format!("centre {c:?} is not in R^{n}")));
        }
        members.push(make_member(
            grid,
            k,
            MemberKind::Radial { center: c.clone() },
        )?);
    }
    Ok(TestFamily { k, members })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureEntry {
    pub member: String,
    /// int_{D+} w - int_{D-} w
    pub domain_integral: f64,
    /// <mu+ - mu-, w> with the grid density.
    pub pairing: f64,
    /// <mu+ - mu-, w> with the atoms evaluated analytically.
    pub pairing_atoms: f64,
    /// |domain_integral - pairing| / scale
    pub residual: f64,
    pub residual_atoms: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub entries: Vec<QuadratureEntry>,
    pub max_residual: f64,
    pub max_residual_atoms: f64,
}

/// Residuals of int_{D+} w - int_{D-} w = <mu+ - mu-, w>, each normalized by
/// ||w||_inf over D+ and D- times |D+| + |D-|.
pub fn quadrature_residual(
    d_plus: &Mask,
    d_minus: Option<&Mask>,
    mu_plus: Option<&GridMeasure>,
    mu_minus: Option<&GridMeasure>,
    family: &TestFamily,
) -> Result<QuadratureReport> {
    let g = *d_plus.grid();
    let empty = Mask::empty(g);
    let d_minus = d_minus.unwrap_or(&empty);
    let union = d_plus.or(d_minus)?;
    let vol = union.volume();
    let zero = GridMeasure::zero(g);
    let (mp, mm) = (mu_plus.unwrap_or(&zero), mu_minus.unwrap_or(&zero));
    let signed = mp.density().sub(mm.density())?;
    let mut entries = Vec::new();
    for m in &family.members {
        let w = &m.field;
        let lhs = integrate(w, Some(d_plus))? - integrate(w, Some(d_minus))?;
        let pairing = signed.dot(w)?;
        let atoms = |mu: &GridMeasure| -> f64 {
            mu.atoms()
                .iter()
                .map(|a| a.mass * evaluate_member(&m.kind, family.k, &a.point))
                .sum()
        };
        let pairing_atoms = atoms(mp) - atoms(mm);
        let sup = union
            .indices()
            .map(|i| w.values()[i].abs())
            .fold(0.0, f64::max);
        let scale = sup * vol;
        let norm = |x: f64| {
            if scale > 0.0 {
                x.abs() / scale
            } else {
                x.abs()
            }
        };
        entries.push(QuadratureEntry {
            member: m.label(),
            domain_integral: lhs,
            pairing,
            pairing_atoms,
            residual: norm(lhs - pairing),
            residual_atoms: norm(lhs - pairing_atoms),
            scale,
        });
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    let max_residual_atoms = entries.iter().map(|e| e.residual_atoms).fold(0.0, f64::max);
    Ok(QuadratureReport {
        entries,
        max_residual,
        max_residual_atoms,
    })
}

/// Radius R_m = j_{n/2, m} / k of the m-th null quadrature ball.
pub fn null_qd_radius(n: usize, k: f64, m: usize) -> Result<f64> {
    Ok(bessel_zero(BesselOrder::half_dim(n)?, m)? / k)
}

/// u~_m(x) = [g(R_m) - g(|x|)] / (k^2 g(R_m)) inside B_{R_m}, 0 outside,
/// where g(r) = r^((2-n)/2) J_{(n-2)/2}(k r). Solves (Delta + k^2) u = chi_B
/// with u = |grad u| = 0 on the sphere.
pub fn null_qd_profile(grid: &Grid, k: f64, m: usize) -> Result<(ScalarField, Mask)> {
    let n = grid.n();
    let r_m = null_qd_radius(n, k, m)?;
    let centre = vec![0.0; n];
    if grid.distance_to_boundary(&centre) < r_m + 2.0 * grid.h() {
        return Err(QdomError::BoxTooSmall(format!(
            "null quadrature ball of radius {r_m} does not fit with a 2-cell margin"
        )));
    }
    let a = radial_solution(n, k, r_m)?;
    let mask = Mask::ball(*grid, &centre, r_m);
    let field = ScalarField::from_fn(*grid, |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < r_m {
            (a - radial_solution(n, k, r).expect("dimension checked")) / (k * k * a)
        } else {
            0.0
        }
    });
    Ok((field, mask))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub formula: String,
    pub value: f64,
    pub target: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PompeiuReport {
    pub volume: f64,
    pub identities: Vec<IdentityCheck>,
    pub passed: bool,
}

fn identity(name: &str, formula: &str, value: f64, target: f64, tol: f64) -> IdentityCheck {
    let relative_error = (value - target).abs() / target.abs();
    IdentityCheck {
        name: name.into(),
        formula: formula.into(),
        value,
        target,
        relative_error,
        passed: relative_error <= tol,
    }
}

/// Boundary-vanishing gate: u is zero off D and small (<= 5% of its peak) on
/// a two-cell collar of dD.
pub fn vanishes_on_boundary(u: &ScalarField, d: &Mask) -> Result<bool> {
    let peak = u.sup_norm();
    let off = d
        .not()
        .indices()
        .map(|i| u.values()[i].abs())
        .fold(0.0, f64::max);
    let collar = d
        .collar(2)
        .indices()
        .map(|i| u.values()[i].abs())
        .fold(0.0, f64::max);
    Ok(off <= 1e-12 * peak.max(1.0) && collar <= 0.05 * peak)
}

/// The three energy identities of a solution of (Delta + k^2) u = chi_D with
/// u = |grad u| = 0 on dD:
/// ||grad u||^2 = n |D| / (2 k^2), k^2 ||u||^2 = (n+2) |D| / (2 k^2),
/// int u = |D| / k^2.
pub fn pompeiu_identities(u: &ScalarField, d: &Mask, k: f64, tol: f64) -> Result<PompeiuReport> {
    u.grid().check_same(d.grid())?;
    if !vanishes_on_boundary(u, d)? {
        return Err(QdomError::Hypothesis(
            "field does not vanish on the boundary of D; the identities need u = |grad u| = 0 there"
                .into(),
        ));
    }
    let n = u.grid().n() as f64;
    let vol = d.volume();
    let k2 = k * k;
    let grad = dirichlet_energy(u);
    let l2 = u.dot(u)?;
    let int = integrate(u, Some(d))?;
    let identities = vec![
        identity(
            "gradient-energy",
            "||grad u||^2 = n |D| / (2 k^2)",
            grad,
            n * vol / (2.0 * k2),
            tol,
        ),
        identity(
            "l2-energy",
            "k^2 ||u||^2 = (n+2) |D| / (2 k^2)",
            k2 * l2,
            (n + 2.0) * vol / (2.0 * k2),
            tol,
        ),
        identity("mass", "int_D u = |D| / k^2", int, vol / k2, tol),
    ];
    let passed = identities.iter().all(|c| c.passed);
    Ok(PompeiuReport {
        volume: vol,
        identities,
        passed,
    })
}

/// Discrete int_D |grad u|^2: forward-difference edges with an endpoint in D,
/// the zero exterior beyond the box included.
pub fn dirichlet_energy_on(u: &ScalarField, d: &Mask) -> Result<f64> {
    let g = *u.grid();
    g.check_same(d.grid())?;
    let v = u.values();
    let cells = g.cells();
    let mut terms = Vec::new();
    let mut stride = 1;
    for a in 0..g.n() {
        for idx in 0..g.len() {
            let c = g.coords(idx)[a];
            let next = c + 1 < cells[a];
            if d.get(idx) || (next && d.get(idx + stride)) {
                let w = if next { v[idx + stride] } else { 0.0 };
                terms.push((w - v[idx]) * (w - v[idx]));
            }
            if c == 0 && d.get(idx) {
                terms.push(v[idx] * v[idx]);
            }
        }
        stride *= cells[a];
    }
    let h = g.h();
    Ok(g.cell_volume() / (h * h) * crate::grid::pairwise_sum(&terms))
}

/// J~(U) = int_D |grad U|^2 - k^2 U^2 + 2 U for the fixed domain D.
pub fn saddle_functional(u: &ScalarField, d: &Mask, k: f64) -> Result<f64> {
    let ud = u.restrict(d)?;
    Ok(dirichlet_energy_on(u, d)? - k * k * ud.dot(&ud)? + 2.0 * integrate(u, Some(d))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub t: f64,
    pub value: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleReport {
    pub points: Vec<SaddlePoint>,
    /// max |value - target| / (|D| / k^2)
    pub max_deviation: f64,
    pub argmax_t: f64,
    pub eigen_direction: Option<EigenDirectionCheck>,
}

/// Evaluates J~(t u) along the ray against (-t^2 + 2t) |D| / k^2.
pub fn saddle_scan(u: &ScalarField, d: &Mask, k: f64, t_values: &[f64]) -> Result<SaddleReport> {
    let vol = d.volume();
    let peak = vol / (k * k);
    let base_grad = dirichlet_energy_on(u, d)?;
    let ud = u.restrict(d)?;
    let base_l2 = ud.dot(&ud)?;
    let base_int = integrate(u, Some(d))?;
    let mut points = Vec::new();
    for &t in t_values {
        let value = t * t * (base_grad - k * k * base_l2) + 2.0 * t * base_int;
        points.push(SaddlePoint {
            t,
            value,
            target: (-t * t + 2.0 * t) * peak,
        });
    }
    let max_deviation = points
        .iter()
        .map(|p| (p.value - p.target).abs() / peak)
        .fold(0.0, f64::max);
    let argmax_t = points
        .iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |(bt, bv), p| {
            if p.value > bv {
                (p.t, p.value)
            } else {
                (bt, bv)
            }
        })
        .0;
    Ok(SaddleReport {
        points,
        max_deviation,
        argmax_t,
        eigen_direction: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenDirectionCheck {
    /// Discrete eigenvalue k0^2 of the box mode used, k0 > k.
    pub k0: f64,
    pub mode: Vec<usize>,
    /// (k0^2 - k^2) int_D u phi + int_D phi: the first variation of J~ at u
    /// along phi, zero when u is a critical point.
    pub linear_coefficient: f64,
    /// linear_coefficient over (k0^2 + k^2) int_D |u phi| + int_D |phi|.
    pub linear_relative: f64,
    /// int_D |grad phi|^2 - k^2 phi^2
    pub quadratic_coefficient: f64,
    /// J~(u + t phi) - J~(u) at t = +tau and t = -tau.
    pub gain_plus: f64,
    pub gain_minus: f64,
    /// Both gains positive: u is not a local maximum.
    pub not_local_max: bool,
}

fn box_modes(n: usize, pmax: usize) -> Vec<Vec<usize>> {
    let mut modes = vec![vec![1usize; n]];
    for a in 0..n {
        let mut next = Vec::new();
        for m in &modes {
            for p in 1..=pmax {
                let mut mm = m.clone();
                mm[a] = p;
                next.push(mm);
            }
        }
        modes = next;
    }
    modes
}

/// Perturbs u along the box eigenmode prod_a sin(p_a pi (i_a + 1) / (N_a + 1))
/// of lowest eigenvalue above k^2 whose quadratic form on D is positive.
/// Since u is critical the first variation vanishes and
/// J~(u + t phi) - J~(u) = t^2 (||grad phi||_D^2 - k^2 ||phi||_D^2) > 0 on
/// both sides.
pub fn eigen_direction_check(u: &ScalarField, d: &Mask, k: f64) -> Result<EigenDirectionCheck> {
    let g = *u.grid();
    let n = g.n();
    let h = g.h();
    let cells = g.cells();
    let lam = |a: usize, p: usize| {
        let s = (p as f64 * PI / (2.0 * (cells[a] + 1) as f64)).sin();
        4.0 / (h * h) * s * s
    };
    let mut modes: Vec<(f64, Vec<usize>)> = box_modes(n, 16)
        .into_iter()
        .map(|m| ((0..n).map(|a| lam(a, m[a])).sum::<f64>(), m))
        .filter(|(l, _)| *l > k * k)
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sample = |mode: &[usize]| -> Result<ScalarField> {
        let vals = (0..g.len())
            .map(|idx| {
                let c = g.coords(idx);
                (0..n)
                    .map(|a| {
                        (mode[a] as f64 * PI * (c[a] + 1) as f64 / (cells[a] + 1) as f64).sin()
                    })
                    .product::<f64>()
            })
            .collect();
        let phi = ScalarField::new(g, vals)?;
        Ok(phi.scale(1.0 / phi.sup_norm().max(1e-300)))
    };
    let mut chosen = None;
    for (l, mode) in modes.iter().take(64) {
        let phi = sample(mode)?;
        let pd = phi.restrict(d)?;
        let quad = dirichlet_energy_on(&phi, d)? - k * k * pd.dot(&pd)?;
        if quad > 0.0 {
            chosen = Some((*l, mode.clone(), phi, quad));
            break;
        }
    }
    let (l, mode, phi, quad) = chosen
        .ok_or_else(|| QdomError::Resolution("no box mode with positive form on D".into()))?;
    let ud = u.restrict(d)?;
    let int_u_phi = ud.dot(&phi)?;
    let int_phi = integrate(&phi, Some(d))?;
    let abs_u_phi = ud.zip_map(&phi, |a, b| (a * b).abs())?;
    let scale =
        (l + k * k) * integrate(&abs_u_phi, Some(d))? + integrate(&phi.map(f64::abs), Some(d))?;
    let linear = (l - k * k) * int_u_phi + int_phi;
    let base = saddle_functional(u, d, k)?;
    let tau = 0.1 * u.sup_norm();
    let gain_plus = saddle_functional(&u.add(&phi.scale(tau))?, d, k)? - base;
    let gain_minus = saddle_functional(&u.add(&phi.scale(-tau))?, d, k)? - base;
    Ok(EigenDirectionCheck {
        k0: l.sqrt(),
        mode,
        linear_coefficient: linear,
        linear_relative: linear.abs() / scale.max(1e-300),
        quadratic_coefficient: quad,
        gain_plus,
        gain_minus,
        not_local_max: gain_plus > 0.0 && gain_minus > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_counts_and_gate() {
        let g = Grid::centered(2, 3.0, 96).unwrap();
        let f = helmholtz_test_family(&g, 1.0, 4, &[]).unwrap();
        assert_eq!(f.members.len(), 8);
        let f = helmholtz_test_family(&g, 1.0, 4, &[vec![0.5, 0.0]]).unwrap();
        assert_eq!(f.members.len(), 9);
        assert!(f.members.iter().all(|m| m.gate_residual.is_finite()));
    }

    #[test]
    fn radial_member_centre_value() {
        let k = 1.7;
        let v = evaluate_member(
            &MemberKind::Radial {
                center: vec![0.3, 0.2],
            },
            k,
            &[0.3, 0.2],
        );
        assert_eq!(v, 1.0);
        let v3 = evaluate_member(
            &MemberKind::Radial {
                center: vec![0.0; 3],
            },
            k,
            &[0.0; 3],
        );
        assert!((v3 - (2.0 * k / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn opposite_directions_conjugate() {
        let th = vec![0.6, 0.8];
        let neg: Vec<f64> = th.iter().map(|v| -v).collect();
        let x = [0.37, -1.2];
        let re = |t: &Vec<f64>| evaluate_member(&MemberKind::PlaneRe { theta: t.clone() }, 1.3, &x);
        let im = |t: &Vec<f64>| evaluate_member(&MemberKind::PlaneIm { theta: t.clone() }, 1.3, &x);
        assert!((re(&th) - re(&neg)).abs() < 1e-15);
        assert!((im(&th) + im(&neg)).abs() < 1e-15);
    }

    #[test]
    fn null_profile_centre_value() {
        let g = Grid::centered(2, 4.5, 64).unwrap();
        let (u, mask) = null_qd_profile(&g, 1.0, 1).unwrap();
        let j0 = crate::specfun::bessel_j(BesselOrder::ZERO, 3.831_705_970_207_512).unwrap();
        let centre = (j0 - 1.0) / j0;
        assert!((centre - 3.4829).abs() < 1e-3);
        assert!(u.max() <= centre + 1e-12 && u.min() >= 0.0);
        assert!(!mask.is_empty());
        assert!(null_qd_profile(&Grid::centered(2, 3.0, 64).unwrap(), 1.0, 1).is_err());
    }

    #[test]
    fn zero_member_has_zero_residual() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let member = TestMember {
            kind: MemberKind::PlaneIm {
                theta: vec![1.0, 0.0],
            },
            field: ScalarField::zeros(g),
            gate_residual: 0.0,
        };
        let fam = TestFamily {
            k: 1.0,
            members: vec![member],
        };
        let d = Mask::ball(g, &[0.0, 0.0], 1.0);
        let r = quadrature_residual(&d, None, None, None, &fam).unwrap();
        assert_eq!(r.max_residual, 0.0);
    }
}
