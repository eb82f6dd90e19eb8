//! Helmholtz potentials and partial balayage.
//!
//! The partial balayage of mu onto a set D is computed through W = U - V,
//! which solves the complementarity problem
//! W >= 0, (-Delta_h - k^2) W >= mu - 1 on D, W (...) = 0, W = 0 off D.
//! The balayage measure is then mu + (Delta_h + k^2) W: it equals 1 on the
//! non-contact set {W > 0}, mu away from it, and picks up a nonnegative
//! excess on the nodes just outside D.

use serde::{Deserialize, Serialize};

use crate::error::{QdomError, Result};
use crate::grid::{helmholtz_apply, integrate, Grid, GridMeasure, Mask, ScalarField};
use crate::linsolve::{box_k_star, psor_lcp, OperatorSpec, SolverConfig};
use crate::specfun::{capacity_bound, fundamental_solution, fundamental_solution_ball_mean};

/// Margin (in cells) that W must keep from the box faces.
pub const BOX_MARGIN: usize = 2;

/// Kernel values Psi_k(h |d|) for integer offsets d >= 0 on each axis.
struct KernelTable {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl KernelTable {
    fn new(grid: &Grid, k: f64) -> Result<Self> {
        let n = grid.n();
        let h = grid.h();
        let dims = grid.cells();
        let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
        // the singular cell uses the mean of Psi over a ball of equal volume
        let rho = if n == 2 {
            h / std::f64::consts::PI.sqrt()
        } else {
            h * (3.0 / (4.0 * std::f64::consts::PI)).cbrt()
        };
        for c in 0..dims[2] {
            for b in 0..dims[1] {
                for a in 0..dims[0] {
                    let idx = a + dims[0] * (b + dims[1] * c);
                    values[idx] = if idx == 0 {
                        fundamental_solution_ball_mean(n, k, rho)?
                    } else {
                        let r = h * ((a * a + b * b + c * c) as f64).sqrt();
                        fundamental_solution(n, k, r)?
                    };
                }
            }
        }
        Ok(KernelTable { dims, values })
    }

    #[inline]
    fn at(&self, a: usize, b: usize, c: usize) -> f64 {
        self.values[a + self.dims[0] * (b + self.dims[1] * c)]
    }
}

/// U_k^mu(x) = sum_y Psi_k(x - y) mu(y) h^n by direct summation over the
/// support of mu.
pub fn potential(mu: &GridMeasure, k: f64) -> Result<ScalarField> {
    if !(k > 0.0) {
        return Err(QdomError::Domain(format!("potential needs k > 0, got {k}")));
    }
    let g = *mu.grid();
    let table = KernelTable::new(&g, k)?;
    let vol = g.cell_volume();
    let cells = g.cells();
    let dens = mu.density().values();
    let mut out = vec![0.0; g.len()];
    for (j, &m) in dens.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let w = m * vol;
        let s = g.coords(j);
        let mut idx = 0;
        for c in 0..cells[2] {
            let dc = c.abs_diff(s[2]);
            for b in 0..cells[1] {
                let db = b.abs_diff(s[1]);
                for a in 0..cells[0] {
                    out[idx] += w * table.at(a.abs_diff(s[0]), db, dc);
                    idx += 1;
                }
            }
        }
    }
    ScalarField::new(g, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityStatus {
    Strict,
    Weak,
    Violated,
}

/// Compares a total mass with c_k(R_k) in dimension n.
pub fn capacity_guard_mass(total_mass: f64, k: f64, n: usize) -> Result<CapacityStatus> {
    let bound = capacity_bound(n, k)?;
    Ok(if total_mass < bound - 1e-12 {
        CapacityStatus::Strict
    } else if (total_mass - bound).abs() <= 1e-12 {
        CapacityStatus::Weak
    } else {
        CapacityStatus::Violated
    })
}

pub fn capacity_guard(mu: &GridMeasure, k: f64, n: usize) -> Result<CapacityStatus> {
    capacity_guard_mass(mu.total_mass(), k, n)
}

#[derive(Debug, Clone)]
pub struct BalayageResult {
    pub k: f64,
    /// Potential U_k^mu.
    pub u: ScalarField,
    /// Partial reduction V = U - W.
    pub v: ScalarField,
    /// W = U - V >= 0, zero off D.
    pub w: ScalarField,
    /// Non-contact set {W > tol_phase}.
    pub omega: Mask,
    /// Density of the balayage measure, mu + (Delta_h + k^2) W.
    pub bal_density: ScalarField,
    /// Mass of the part of the balayage measure carried by nodes outside D.
    pub boundary_excess: f64,
    pub tol_phase: f64,
    pub capacity: CapacityStatus,
}

/// Rejects k at or above the first Dirichlet wavenumber of the box.
pub fn check_below_box_k_star(grid: &Grid, k: f64) -> Result<()> {
    let ks = box_k_star(grid);
    if k >= ks {
        return Err(QdomError::Hypothesis(format!(
            "k = {k} is not below k_* = {ks:.6} of the box (first Dirichlet eigenvalue)"
        )));
    }
    Ok(())
}

/// Complementarity solve for W without the potential; used where only the
/// non-contact set matters.
pub fn balayage_gap(mu: &GridMeasure, k: f64, d: &Mask, cfg: &SolverConfig) -> Result<ScalarField> {
    let g = *mu.grid();
    g.check_same(d.grid())?;
    check_below_box_k_star(&g, k)?;
    let op = OperatorSpec::new(k, d.clone())?;
    let rhs = mu.density().map(|m| m - 1.0);
    psor_lcp(&op, &rhs, &ScalarField::zeros(g), cfg)
}

pub fn phase_tolerance(cfg: &SolverConfig, u_sup: f64) -> f64 {
    (10.0 * cfg.tol_rel * u_sup).max(1e-8)
}

/// Partial balayage of `mu` onto `d`.
pub fn partial_balayage(
    mu: &GridMeasure,
    k: f64,
    d: &Mask,
    cfg: &SolverConfig,
) -> Result<BalayageResult> {
    let g = *mu.grid();
    if !(k > 0.0) {
        return Err(QdomError::Domain(format!("balayage needs k > 0, got {k}")));
    }
    let capacity = capacity_guard(mu, k, g.n())?;
    if capacity == CapacityStatus::Violated {
        return Err(QdomError::Hypothesis(format!(
            "total mass {} exceeds the capacity bound c_k(R_k) = {}",
            mu.total_mass(),
            capacity_bound(g.n(), k)?
        )));
    }
    let w = balayage_gap(mu, k, d, cfg)?;
    let u = potential(mu, k)?;
    let tol_phase = phase_tolerance(cfg, u.sup_norm());
    let near_edge = w.max_within_margin(BOX_MARGIN);
    if near_edge > tol_phase {
        return Err(QdomError::BoxTooSmall(format!(
            "W = {near_edge:e} within {BOX_MARGIN} cells of the box boundary"
        )));
    }
    let v = u.sub(&w)?;
    let omega = w.positive_mask(tol_phase);
    let bal_density = mu.density().add(&helmholtz_apply(&w, k))?;
    let outside = d.not();
    let excess = bal_density.sub(mu.density())?;
    let boundary_excess = integrate(&excess, Some(&outside))?;
    Ok(BalayageResult {
        k,
        u,
        v,
        w,
        omega,
        bal_density,
        boundary_excess,
        tol_phase,
        capacity,
    })
}

/// Full-space balayage on a box grown about its centre (same h, doubled
/// extent) until the non-contact set keeps 4 cells from the faces.
pub fn full_space_balayage(
    build_mu: &dyn Fn(&Grid) -> Result<GridMeasure>,
    start: Grid,
    k: f64,
    cfg: &SolverConfig,
    max_doublings: usize,
) -> Result<(Grid, BalayageResult)> {
    let mut grid = start;
    for attempt in 0..=max_doublings {
        let mu = build_mu(&grid)?;
        match partial_balayage(&mu, k, &Mask::full(grid), cfg) {
            Ok(res) if res.omega.min_margin() >= 4 => return Ok((grid, res)),
            Ok(_) | Err(QdomError::BoxTooSmall(_)) if attempt < max_doublings => {
                grid = grow(&grid)?;
            }
            Ok(_) => {
                return Err(QdomError::BoxTooSmall(
                    "non-contact set within 4 cells of the box after growing".into(),
                ))
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

fn grow(g: &Grid) -> Result<Grid> {
    let n = g.n();
    let (o, e, c) = (g.origin(), g.extent(), g.cells());
    let origin: Vec<f64> = (0..n).map(|a| o[a] - 0.5 * e[a]).collect();
    let extent: Vec<f64> = (0..n).map(|a| 2.0 * e[a]).collect();
    let cells: Vec<usize> = (0..n).map(|a| 2 * c[a]).collect();
    Grid::new(n, &origin, &extent, &cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    /// max |bal - 1| on nodes of omega at least one cell inside it.
    pub interior_deviation: f64,
    /// max |bal - mu| on nodes of D at least one cell away from omega.
    pub exterior_deviation: f64,
    pub boundary_excess: f64,
    /// Smallest value of bal - mu over nodes outside D.
    pub min_remainder: f64,
    pub passed: bool,
}

/// Checks Bal = 1 on omega, Bal = mu off omega inside D, and a nonnegative
/// remainder outside D.
pub fn structure_check(
    res: &BalayageResult,
    mu: &GridMeasure,
    d: &Mask,
) -> Result<StructureReport> {
    let g = *mu.grid();
    g.check_same(d.grid())?;
    let bal = res.bal_density.values();
    let dens = mu.density().values();
    let inner = res.omega.erode(1);
    let interior_deviation = inner
        .indices()
        .map(|i| (bal[i] - 1.0).abs())
        .fold(0.0, f64::max);
    let near = res.omega.dilate(1);
    let exterior_deviation = d
        .erode(1)
        .and_not(&near)?
        .indices()
        .map(|i| (bal[i] - dens[i]).abs())
        .fold(0.0, f64::max);
    let min_remainder = d
        .not()
        .indices()
        .map(|i| bal[i] - dens[i])
        .fold(f64::INFINITY, f64::min);
    let min_remainder = if min_remainder.is_finite() {
        min_remainder
    } else {
        0.0
    };
    let passed = interior_deviation <= 0.05 && exterior_deviation <= 0.05 && min_remainder >= -1e-6;
    Ok(StructureReport {
        interior_deviation,
        exterior_deviation,
        boundary_excess: res.boundary_excess,
        min_remainder,
        passed,
    })
}
