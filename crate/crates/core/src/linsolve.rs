//! Matrix-free solvers for A = -Delta_h - k^2 + q restricted to a mask:
//! Jacobi-preconditioned conjugate gradients, projected SOR for the
//! complementarity problem, and inverse iteration for the first Dirichlet
//! eigenvalue.

use serde::{Deserialize, Serialize};

use crate::error::{QdomError, Result};
use crate::grid::{Grid, Mask, ScalarField};

/// Operator -Delta_h - k^2 + q on the active nodes of `domain`.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub k: f64,
    pub q: Option<ScalarField>,
    pub domain: Mask,
}

impl OperatorSpec {
    /// Checks k >= 0 and the M-matrix condition k^2 h^2 < 2n.
    pub fn new(k: f64, domain: Mask) -> Result<Self> {
        let g = *domain.grid();
        if !(k >= 0.0) || !k.is_finite() {
            return Err(QdomError::Config(format!(
                "wavenumber must be >= 0, got {k}"
            )));
        }
        let kh2 = k * k * g.h() * g.h();
        if kh2 >= 2.0 * g.n() as f64 {
            return Err(QdomError::Config(format!(
                "k^2 h^2 = {kh2} violates the M-matrix bound 2n = {}; refine the grid",
                2 * g.n()
            )));
        }
        Ok(OperatorSpec { k, q: None, domain })
    }

    pub fn with_q(mut self, q: ScalarField) -> Result<Self> {
        self.domain.grid().check_same(q.grid())?;
        self.q = Some(q);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        self.domain.grid()
    }

    /// Diagonal entry at node `idx`.
    fn diag(&self, idx: usize) -> f64 {
        let g = self.grid();
        let base = 2.0 * g.n() as f64 / (g.h() * g.h()) - self.k * self.k;
        match &self.q {
            Some(q) => base + q.values()[idx],
            None => base,
        }
    }

    /// A u at every active node (zero elsewhere), with `u` taken as given on
    /// inactive nodes and zero outside the box.
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        let g = *self.grid();
        g.check_same(u.grid())?;
        let inv_h2 = 1.0 / (g.h() * g.h());
        let v = u.values();
        let mut out = vec![0.0; g.len()];
        for idx in self.domain.indices() {
            let mut s = 0.0;
            for nb in g.neighbors(idx).iter().flatten() {
                s += v[*nb];
            }
            out[idx] = self.diag(idx) * v[idx] - inv_h2 * s;
        }
        ScalarField::new(g, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_rel: f64,
    /// `None` means 200 times the largest cell count of the grid.
    pub max_iter: Option<usize>,
    pub relaxation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_rel: 1e-9,
            max_iter: None,
            relaxation: 1.7,
        }
    }
}

impl SolverConfig {
    /// Default tolerances with the SOR-optimal relaxation for the grid's
    /// Laplacian, 2 / (1 + sin(pi / N)).
    pub fn tuned(grid: &Grid) -> Self {
        SolverConfig {
            relaxation: optimal_relaxation(grid),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(QdomError::Config(format!(
                "tol_rel must be > 0, got {}",
                self.tol_rel
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(QdomError::Config(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        Ok(())
    }

    pub fn iterations(&self, grid: &Grid) -> usize {
        self.max_iter.unwrap_or(200 * grid.max_cells())
    }
}

pub fn optimal_relaxation(grid: &Grid) -> f64 {
    let n = grid.max_cells() as f64;
    2.0 / (1.0 + (std::f64::consts::PI / n).sin())
}

/// Active nodes with their neighbour slots in compact numbering.
struct Compact {
    nodes: Vec<usize>,
    nbrs: Vec<[u32; 6]>,
    diag: Vec<f64>,
    off: f64,
}

const NONE: u32 = u32::MAX;

impl Compact {
    fn new(op: &OperatorSpec) -> Result<Self> {
        let g = op.grid();
        let nodes: Vec<usize> = op.domain.indices().collect();
        let mut slot = vec![NONE; g.len()];
        for (s, &i) in nodes.iter().enumerate() {
            slot[i] = s as u32;
        }
        let nbrs = nodes
            .iter()
            .map(|&i| {
                let mut out = [NONE; 6];
                for (j, nb) in g.neighbors(i).iter().enumerate() {
                    if let Some(nb) = nb {
                        out[j] = slot[*nb];
                    }
                }
                out
            })
            .collect();
        let diag: Vec<f64> = nodes.iter().map(|&i| op.diag(i)).collect();
        if let Some(s) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(QdomError::Indefinite(format!(
                "nonpositive diagonal at node {}",
                nodes[s]
            )));
        }
        Ok(Compact {
            nodes,
            nbrs,
            diag,
            off: 1.0 / (g.h() * g.h()),
        })
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for s in 0..self.nodes.len() {
            let mut acc = 0.0;
            for &t in &self.nbrs[s] {
                if t != NONE {
                    acc += x[t as usize];
                }
            }
            y[s] = self.diag[s] * x[s] - self.off * acc;
        }
    }

    /// Right-hand side on active nodes after moving known inactive values
    /// across.
    fn reduced_rhs(&self, op: &OperatorSpec, rhs: &[f64], boundary: &[f64]) -> Vec<f64> {
        let g = op.grid();
        self.nodes
            .iter()
            .map(|&i| {
                let mut b = rhs[i];
                for nb in g.neighbors(i).iter().flatten() {
                    if !op.domain.get(*nb) {
                        b += self.off * boundary[*nb];
                    }
                }
                b
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cg_compact(
    c: &Compact,
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<usize> {
    let m = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; m];
    c.matvec(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&c.diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; m];
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol_rel * bnorm {
            return Ok(it);
        }
        c.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(QdomError::Indefinite(format!(
                "p^T A p = {pap:e} at CG iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..m {
            z[i] = r[i] / c.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= tol_rel * bnorm {
        return Ok(max_iter);
    }
    Err(QdomError::Indefinite(format!(
        "CG did not reach tolerance in {max_iter} iterations"
    )))
}

/// Solves A u = rhs on active nodes with u = boundary on inactive nodes.
pub fn cg_solve(
    op: &OperatorSpec,
    rhs: &ScalarField,
    boundary: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    cfg.validate()?;
    let g = *op.grid();
    g.check_same(rhs.grid())?;
    g.check_same(boundary.grid())?;
    let c = Compact::new(op)?;
    let b = c.reduced_rhs(op, rhs.values(), boundary.values());
    let mut x = vec![0.0; b.len()];
    cg_compact(&c, &b, &mut x, cfg.tol_rel, cfg.iterations(&g).max(100))?;
    let mut out = boundary.values().to_vec();
    for (s, &i) in c.nodes.iter().enumerate() {
        out[i] = x[s];
    }
    ScalarField::new(g, out)
}

/// Projected SOR for the complementarity problem
/// W >= lower, A W - rhs >= 0, (W - lower)(A W - rhs) = 0 on active nodes,
/// W = 0 on inactive nodes.
pub fn psor_lcp(
    op: &OperatorSpec,
    rhs: &ScalarField,
    lower: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let start = lower.map(|v| v.max(0.0));
    psor_lcp_from(op, rhs, lower, &start, cfg)
}

/// As [`psor_lcp`], starting the sweeps from `start` on active nodes.
pub fn psor_lcp_from(
    op: &OperatorSpec,
    rhs: &ScalarField,
    lower: &ScalarField,
    start: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    cfg.validate()?;
    let g = *op.grid();
    g.check_same(rhs.grid())?;
    g.check_same(lower.grid())?;
    g.check_same(start.grid())?;
    let c = Compact::new(op)?;
    let zeros = vec![0.0; g.len()];
    let b = c.reduced_rhs(op, rhs.values(), &zeros);
    let lo: Vec<f64> = c.nodes.iter().map(|&i| lower.values()[i]).collect();
    let mut x: Vec<f64> = c
        .nodes
        .iter()
        .zip(&lo)
        .map(|(&i, &l)| start.values()[i].max(l))
        .collect();
    let scale = rhs.sup_norm().max(1.0);
    let stop = cfg.tol_rel * scale;
    let omega = cfg.relaxation;
    let max_iter = cfg.iterations(&g);
    for _sweep in 0..max_iter {
        let mut worst: f64 = 0.0;
        for s in 0..x.len() {
            let mut acc = 0.0;
            for &t in &c.nbrs[s] {
                if t != NONE {
                    acc += x[t as usize];
                }
            }
            let d = c.diag[s];
            let gs = (b[s] + c.off * acc) / d;
            let target = gs.max(lo[s]);
            worst = worst.max((target - x[s]).abs() * d);
            x[s] = (x[s] + omega * (gs - x[s])).max(lo[s]);
        }
        if !worst.is_finite() || worst > 1e30 {
            return Err(QdomError::Indefinite(
                "projected SOR iterates diverge".into(),
            ));
        }
        if worst <= stop {
            let mut out = vec![0.0; g.len()];
            for (s, &i) in c.nodes.iter().enumerate() {
                out[i] = x[s];
            }
            return ScalarField::new(g, out);
        }
    }
    Err(QdomError::NotConverged(format!(
        "projected SOR did not reach tolerance {stop:e} in {max_iter} sweeps"
    )))
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub k_star: f64,
    /// Positive, with discrete L^2 norm one.
    pub field: ScalarField,
}

/// Smallest eigenvalue of -Delta_h on the mask (zero Dirichlet data on the
/// complement) by inverse iteration with CG inner solves.
pub fn min_eigenvalue(domain: &Mask) -> Result<EigenPair> {
    if domain.is_empty() {
        return Err(QdomError::Config("eigenvalue of an empty mask".into()));
    }
    let g = *domain.grid();
    let op = OperatorSpec::new(0.0, domain.clone())?;
    let c = Compact::new(&op)?;
    let m = c.nodes.len();
    let mut x = vec![1.0; m];
    let mut y = vec![0.0; m];
    let mut ax = vec![0.0; m];
    let mut lambda_prev = f64::INFINITY;
    let inner_iter = 400 * g.max_cells();
    for _ in 0..200 {
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        c.matvec(&x, &mut ax);
        let lambda = dot(&x, &ax);
        if (lambda - lambda_prev).abs() <= 1e-12 * lambda {
            let sign = if x.iter().sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            let mut vals = vec![0.0; g.len()];
            for (s, &i) in c.nodes.iter().enumerate() {
                vals[i] = sign * x[s];
            }
            let mut field = ScalarField::new(g, vals)?;
            let l2 = field.l2_norm();
            field = field.scale(1.0 / l2);
            return Ok(EigenPair {
                lambda,
                k_star: lambda.sqrt(),
                field,
            });
        }
        lambda_prev = lambda;
        y.copy_from_slice(&x);
        cg_compact(&c, &x, &mut y, 1e-12, inner_iter)
            .map_err(|e| QdomError::NotConverged(format!("inverse iteration: {e}")))?;
        std::mem::swap(&mut x, &mut y);
    }
    Err(QdomError::NotConverged(
        "inverse iteration did not settle in 200 steps".into(),
    ))
}

/// First Dirichlet eigenvalue of -Delta_h on the whole box, in closed form.
pub fn box_eigenvalue(grid: &Grid) -> f64 {
    let h = grid.h();
    (0..grid.n())
        .map(|a| {
            let s = (std::f64::consts::PI / (2.0 * (grid.cells()[a] + 1) as f64)).sin();
            4.0 / (h * h) * s * s
        })
        .sum()
}

/// sqrt of [`box_eigenvalue`].
pub fn box_k_star(grid: &Grid) -> f64 {
    box_eigenvalue(grid).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_zero() {
        let g = Grid::centered(2, 1.0, 32).unwrap();
        let op = OperatorSpec::new(1.0, Mask::full(g)).unwrap();
        let z = ScalarField::zeros(g);
        let cfg = SolverConfig::default();
        assert_eq!(cg_solve(&op, &z, &z, &cfg).unwrap(), z);
        let neg = ScalarField::constant(g, -1.0);
        assert_eq!(psor_lcp(&op, &neg, &z, &cfg).unwrap(), z);
    }

    #[test]
    fn m_matrix_guard() {
        let g = Grid::centered(2, 1.0, 16).unwrap();
        // h = 1/8, so k^2 h^2 >= 4 needs k >= 16
        assert!(OperatorSpec::new(16.0, Mask::full(g)).is_err());
        assert!(OperatorSpec::new(15.9, Mask::full(g)).is_ok());
    }

    #[test]
    fn strip_poisson_matches_parabola() {
        // -u'' = 1 on (0,1): one active row with nodes at x0 = j h, the
        // rows above and below pinned to the parabola so the x1 difference
        // vanishes, and inactive nodes at x0 = 0 and x0 = 1.
        let cells = 64;
        let h = 1.0 / cells as f64;
        let g = Grid::new(
            2,
            &[-0.5 * h, 0.0],
            &[1.0 + h, 1.0 + h],
            &[cells + 1, cells + 1],
        )
        .unwrap();
        let mid = cells / 2;
        let mask = Mask::from_fn(g, |x| x[0] > 0.25 * h && x[0] < 1.0 - 0.25 * h);
        let row = Mask::from_fn(g, |x| (x[1] / h - 0.5).round() as usize == mid);
        let active = mask.and(&row).unwrap();
        let exact = ScalarField::from_fn(g, |x| 0.5 * x[0] * (1.0 - x[0]));
        let boundary = exact.restrict(&mask.and_not(&row).unwrap()).unwrap();
        let op = OperatorSpec::new(0.0, active.clone()).unwrap();
        let rhs = ScalarField::constant(g, 1.0);
        let u = cg_solve(&op, &rhs, &boundary, &SolverConfig::default()).unwrap();
        for i in active.indices() {
            // second differences are exact on quadratics
            assert!((u.values()[i] - exact.values()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn indefinite_operator_is_rejected() {
        let g = Grid::centered(2, 1.0, 32).unwrap();
        let ks = box_k_star(&g);
        let op = OperatorSpec::new(1.5 * ks, Mask::full(g)).unwrap();
        let rhs = ScalarField::constant(g, 1.0);
        let err =
            cg_solve(&op, &rhs, &ScalarField::zeros(g), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, QdomError::Indefinite(_)), "{err}");
        assert!(err.to_string().contains("first Dirichlet eigenvalue"));
    }

    #[test]
    fn unconstrained_lcp_matches_linear_solve() {
        let g = Grid::centered(2, 1.0, 32).unwrap();
        let op = OperatorSpec::new(1.0, Mask::full(g)).unwrap();
        let rhs = ScalarField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1]);
        let lower = ScalarField::constant(g, -1e30);
        let cfg = SolverConfig {
            tol_rel: 1e-12,
            ..SolverConfig::tuned(&g)
        };
        let w = psor_lcp_from(&op, &rhs, &lower, &ScalarField::zeros(g), &cfg).unwrap();
        let u = cg_solve(&op, &rhs, &ScalarField::zeros(g), &cfg).unwrap();
        let diff = w.sub(&u).unwrap().sup_norm();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn box_eigenvalue_matches_inverse_iteration() {
        let g = Grid::centered(2, 1.0, 24).unwrap();
        let e = min_eigenvalue(&Mask::full(g)).unwrap();
        assert!((e.lambda / box_eigenvalue(&g) - 1.0).abs() < 1e-9);
        assert!(e.field.values().iter().all(|&v| v > 0.0));
        assert!((e.field.l2_norm() - 1.0).abs() < 1e-12);
    }
}
