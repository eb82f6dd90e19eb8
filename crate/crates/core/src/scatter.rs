//! Non-scattering contrasts built from a two-phase solution and a real
//! incident field, plus the TE-mode permittivity that realizes a contrast.

use serde::{Deserialize, Serialize};

use crate::error::{QdomError, Result};
use crate::grid::{helmholtz_apply, Grid, Mask, ScalarField};
use crate::linsolve::{cg_solve, OperatorSpec, SolverConfig};
use crate::specfun::radial_solution;
use crate::twophase::TwoPhaseResult;
use crate::verify::{check_sampling, directions, interior_residual, RESIDUAL_GATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncidentKind {
    /// sum_j w_j cos(k0 x . theta_j)
    Herglotz {
        dirs: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// sign * scale * |x - c|^(1 - n/2) J_{n/2 - 1}(k0 |x - c|)
    Radial {
        center: Vec<f64>,
        scale: f64,
        sign: f64,
    },
}

impl IncidentKind {
    /// Uniform weights |S^{n-1}| / count over `count` directions.
    pub fn uniform_herglotz(n: usize, count: usize) -> Self {
        let area = if n == 2 {
            2.0 * std::f64::consts::PI
        } else {
            4.0 * std::f64::consts::PI
        };
        IncidentKind::Herglotz {
            dirs: directions(n, count),
            weights: vec![area / count as f64; count],
        }
    }

    pub fn evaluate(&self, k0: f64, x: &[f64]) -> f64 {
        match self {
            IncidentKind::Herglotz { dirs, weights } => dirs
                .iter()
                .zip(weights)
                .map(|(d, w)| w * (k0 * d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).cos())
                .sum(),
            IncidentKind::Radial {
                center,
                scale,
                sign,
            } => {
                let r = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sign * scale * radial_solution(x.len(), k0, r).expect("dimension checked")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IncidentField {
    pub k0: f64,
    pub kind: IncidentKind,
    pub field: ScalarField,
    pub gate_residual: f64,
}

pub fn make_incident(grid: &Grid, k0: f64, kind: IncidentKind) -> Result<IncidentField> {
    if !(k0 > 0.0) || !k0.is_finite() {
        return Err(QdomError::Domain(format!(
            "incident wavenumber must be > 0, got {k0}"
        )));
    }
    let n = grid.n();
    match &kind {
        IncidentKind::Herglotz { dirs, weights } => {
            if dirs.len() != weights.len() || dirs.is_empty() {
                return Err(QdomError::Config(
                    "herglotz needs one weight per direction".into(),
                ));
            }
            if dirs.iter().any(|d| d.len() != n) {
                return Err(QdomError::Config(format!("directions must lie in R^{n}")));
            }
        }
        IncidentKind::Radial { center, .. } => {
            if center.len() != n {
                return Err(QdomError::Config(format!(
                    "radial centre must lie in R^{n}"
                )));
            }
        }
    }
    check_sampling(grid, k0)?;
    let field = ScalarField::from_fn(*grid, |x| kind.evaluate(k0, x));
    let gate_residual = interior_residual(&field, k0);
    let h = grid.h();
    let limit = RESIDUAL_GATE * k0.powi(4) * h * h * field.sup_norm();
    if gate_residual > limit {
        return Err(QdomError::Resolution(format!(
            "incident residual {gate_residual:e} exceeds gate {limit:e}; increase cells"
        )));
    }
    Ok(IncidentField {
        k0,
        kind,
        field,
        gate_residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// max u0 over the one-cell collars of dD+ and dD-.
    pub max_on_collars: f64,
    pub delta: f64,
    pub passed: bool,
    /// Both phases empty.
    pub vacuous: bool,
}

pub fn admissibility_check(u0: &IncidentField, tp: &TwoPhaseResult) -> Result<AdmissibilityReport> {
    u0.field.grid().check_same(tp.u.grid())?;
    let delta = 1e-3 * u0.field.sup_norm();
    let collar = tp.d_plus.collar(1).or(&tp.d_minus.collar(1))?;
    let vacuous = tp.d_plus.is_empty() && tp.d_minus.is_empty();
    let max_on_collars = collar
        .indices()
        .map(|i| u0.field.values()[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = vacuous || max_on_collars <= -delta;
    Ok(AdmissibilityReport {
        max_on_collars,
        delta,
        passed,
        vacuous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfaceLimit {
    pub point: Vec<f64>,
    /// Side of the interface the node lies on: "plus" or "minus".
    pub side: String,
    pub rho: f64,
    /// -lambda / u0(x0)
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct ScatterResult {
    pub k0: f64,
    /// Source term h with (Delta + k0^2) u~ = h.
    pub h: ScalarField,
    pub rho_plus: ScalarField,
    pub rho_minus: ScalarField,
    /// rho+ chi+ - rho- chi-
    pub q: ScalarField,
    pub residual_norm: f64,
    pub boundary_limits: Vec<InterfaceLimit>,
}

/// h = -(k+^2 - k0^2) u+ + (k-^2 - k0^2) u- - f+ chi+ + f- chi-, which equals
/// -(k+^2 - k0^2) u+ + (k-^2 - k0^2) u- + lambda+ chi+ - lambda- chi- where
/// the phases carry no source mass.
pub fn source_term(tp: &TwoPhaseResult, k0: f64) -> ScalarField {
    let g = *tp.u.grid();
    let (kp, km) = (
        tp.k_plus * tp.k_plus - k0 * k0,
        tp.k_minus * tp.k_minus - k0 * k0,
    );
    let vals = (0..g.len())
        .map(|i| {
            let u = tp.u.values()[i];
            let mut v = -kp * u.max(0.0) + km * (-u).max(0.0);
            if tp.d_plus.get(i) {
                v -= tp.f_plus.values()[i];
            }
            if tp.d_minus.get(i) {
                v += tp.f_minus.values()[i];
            }
            v
        })
        .collect();
    ScalarField::new(g, vals).expect("same grid")
}

/// rho+ = -h / (u0 + u~) on D+, rho- = h / (u0 + u~) on D-.
pub fn build_contrasts(
    tp: &TwoPhaseResult,
    u0: &IncidentField,
    spec: &ContrastSpec,
) -> Result<ScatterResult> {
    let g = *tp.u.grid();
    g.check_same(u0.field.grid())?;
    let k0 = u0.k0;
    let delta = 1e-3 * u0.field.sup_norm();
    let total = u0.field.add(&tp.u)?;
    let d = tp.d_plus.or(&tp.d_minus)?;
    // small values, or a sign change to a neighbour inside D (the zero sits
    // between nodes)
    let t = total.values();
    let bad: Vec<usize> = d
        .indices()
        .filter(|&i| {
            t[i].abs() < delta
                || g.neighbors(i)
                    .iter()
                    .flatten()
                    .any(|&j| d.get(j) && t[i] * t[j] < 0.0 && t[i].abs() <= t[j].abs())
        })
        .collect();
    if let Some(&first) = bad.first() {
        return Err(QdomError::DivisionSingularity {
            count: bad.len(),
            first: g.point(first)[..g.n()].to_vec(),
        });
    }
    let h = source_term(tp, k0);
    let mut rp = vec![0.0; g.len()];
    let mut rm = vec![0.0; g.len()];
    let mut q = vec![0.0; g.len()];
    for i in d.indices() {
        let ratio = h.values()[i] / total.values()[i];
        if tp.d_plus.get(i) {
            rp[i] = -ratio;
            q[i] = -ratio;
        } else {
            rm[i] = ratio;
            q[i] = -ratio;
        }
    }
    let (rho_plus, rho_minus, q) = (
        ScalarField::new(g, rp)?,
        ScalarField::new(g, rm)?,
        ScalarField::new(g, q)?,
    );

    let mut boundary_limits = Vec::new();
    let near_minus = tp.d_minus.dilate(1);
    let near_plus = tp.d_plus.dilate(1);
    for i in tp.d_plus.and(&near_minus)?.indices() {
        let pred = -spec.lambda_plus / u0.field.values()[i];
        boundary_limits.push(limit_entry(&g, i, "plus", rho_plus.values()[i], pred));
    }
    for i in tp.d_minus.and(&near_plus)?.indices() {
        let pred = -spec.lambda_minus / u0.field.values()[i];
        boundary_limits.push(limit_entry(&g, i, "minus", rho_minus.values()[i], pred));
    }
    let mut res = ScatterResult {
        k0,
        h,
        rho_plus,
        rho_minus,
        q,
        residual_norm: 0.0,
        boundary_limits,
    };
    res.residual_norm = nonscattering_residual(&res, u0, tp)?.max_residual;
    Ok(res)
}

fn limit_entry(g: &Grid, i: usize, side: &str, rho: f64, predicted: f64) -> InterfaceLimit {
    InterfaceLimit {
        point: g.point(i)[..g.n()].to_vec(),
        side: side.into(),
        rho,
        predicted,
        relative_error: (rho - predicted).abs() / predicted.abs(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    /// max |(Delta_h + k0^2 + q)(u0 + u~)| away from the box faces and from
    /// two-cell collars of dD+ and dD-.
    pub max_residual: f64,
    /// max |u~| on the outermost two node layers.
    pub margin_max: f64,
    pub margin_ok: bool,
}

pub fn nonscattering_residual(
    res: &ScatterResult,
    u0: &IncidentField,
    tp: &TwoPhaseResult,
) -> Result<ResidualReport> {
    let g = *tp.u.grid();
    let total = u0.field.add(&tp.u)?;
    let lhs = helmholtz_apply(&total, res.k0);
    let collar = tp.d_plus.collar(2).or(&tp.d_minus.collar(2))?;
    let max_residual = (0..g.len())
        .filter(|&i| g.margin(i) >= 1 && !collar.get(i))
        .map(|i| (lhs.values()[i] + res.q.values()[i] * total.values()[i]).abs())
        .fold(0.0, f64::max);
    let margin_max = (0..g.len())
        .filter(|&i| g.margin(i) < 2)
        .map(|i| tp.u.values()[i].abs())
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        max_residual,
        margin_max,
        margin_ok: margin_max <= tp.tol_phase,
    })
}

#[derive(Debug, Clone)]
pub struct Permittivity {
    pub epsilon: ScalarField,
    pub psi: ScalarField,
    pub min_psi: f64,
    /// max |Delta_h psi + q psi| over the disk.
    pub self_residual: f64,
    pub disk: Mask,
}

/// Solves Delta psi + q psi = 0 in the disk of radius `r` about `center`
/// with psi = 1 outside, and returns epsilon = psi^-2.
pub fn reconstruct_permittivity(
    q: &ScalarField,
    center: &[f64],
    r: f64,
    cfg: &SolverConfig,
) -> Result<Permittivity> {
    let g = *q.grid();
    if g.n() != 2 {
        return Err(QdomError::Config(
            "the TE reduction is two-dimensional".into(),
        ));
    }
    if g.distance_to_boundary(center) < r {
        return Err(QdomError::BoxTooSmall(format!(
            "disk of radius {r} leaves the box"
        )));
    }
    let disk = Mask::ball(g, center, r);
    let outside = q.restrict(&disk.not())?;
    if outside.sup_norm() > 0.0 {
        return Err(QdomError::Config(
            "contrast must vanish outside the disk".into(),
        ));
    }
    // psi = 1 + phi with (-Delta - q) phi = q, phi = 0 off the disk
    let op = OperatorSpec::new(0.0, disk.clone())?.with_q(q.scale(-1.0))?;
    let phi = cg_solve(&op, q, &ScalarField::zeros(g), cfg).map_err(|e| match e {
        QdomError::Indefinite(m) => QdomError::Indefinite(format!(
            "0 is close to an eigenvalue of -Delta - q on the disk: {m}"
        )),
        other => other,
    })?;
    let psi = phi.map(|v| 1.0 + v);
    let min_psi = disk
        .indices()
        .map(|i| psi.values()[i])
        .fold(f64::INFINITY, f64::min);
    if !(min_psi > 0.0) {
        return Err(QdomError::PhysicalValidity(format!(
            "psi reaches {min_psi} <= 0; permittivity undefined"
        )));
    }
    let epsilon = psi.map(|v| 1.0 / (v * v));
    // Delta_h psi with psi = 1 continued outside the box
    let inv_h2 = 1.0 / (g.h() * g.h());
    let self_residual = disk
        .indices()
        .map(|i| {
            let mut s = -(2.0 * g.n() as f64) * psi.values()[i];
            for nb in g.neighbors(i).iter().take(2 * g.n()) {
                s += nb.map_or(1.0, |j| psi.values()[j]);
            }
            (s * inv_h2 + q.values()[i] * psi.values()[i]).abs()
        })
        .fold(0.0, f64::max);
    Ok(Permittivity {
        epsilon,
        psi,
        min_psi,
        self_residual,
        disk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_direction_is_cosine() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        let kind = IncidentKind::Herglotz {
            dirs: vec![vec![1.0, 0.0]],
            weights: vec![1.0],
        };
        assert_eq!(kind.evaluate(1.5, &[0.0, 0.0]), 1.0);
        let inc = make_incident(&g, 1.5, kind).unwrap();
        assert!(inc.field.sup_norm() <= 1.0);
    }

    #[test]
    fn zero_contrast_gives_unit_permittivity() {
        let g = Grid::centered(2, 3.0, 64).unwrap();
        let p = reconstruct_permittivity(
            &ScalarField::zeros(g),
            &[0.0, 0.0],
            2.5,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(p.epsilon.values().iter().all(|&e| e == 1.0));
        assert_eq!(p.min_psi, 1.0);
    }

    #[test]
    fn permittivity_rejects_3d() {
        let g = Grid::centered(3, 1.0, 16).unwrap();
        let e = reconstruct_permittivity(
            &ScalarField::zeros(g),
            &[0.0; 3],
            0.5,
            &SolverConfig::default(),
        );
        assert!(matches!(e, Err(QdomError::Config(_))));
    }
}
