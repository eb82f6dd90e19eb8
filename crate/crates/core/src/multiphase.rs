//! The segregated energy
//! J(u_1..u_m) = sum_i int |grad u_i|^2 - k_i^2 u_i^2 - 2 f_i u_i,  f_i = mu_i - lambda_i,
//! over nonnegative states with pairwise disjoint supports, its one-phase
//! minimizers, and a Gauss-Seidel search for segregated fixed points.
//!
//! Two phases go through the scalar form U = u_1 - u_2, whose nodal energy is
//! a two-branch quadratic that can be minimized exactly node by node.

use serde::{Deserialize, Serialize};

use crate::balayage::{check_below_box_k_star, phase_tolerance, BOX_MARGIN};
use crate::error::{QdomError, Result};
use crate::grid::{laplacian_into, pairwise_sum, Grid, GridMeasure, Mask, ScalarField};
use crate::linsolve::{psor_lcp_from, OperatorSpec, SolverConfig};

pub const MAX_PHASES: usize = 6;
pub const DEFAULT_MAX_SWEEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum Lambda {
    Const(f64),
    Field(ScalarField),
}

impl Lambda {
    fn at(&self, idx: usize) -> f64 {
        match self {
            Lambda::Const(c) => *c,
            Lambda::Field(f) => f.values()[idx],
        }
    }

    fn min(&self) -> f64 {
        match self {
            Lambda::Const(c) => *c,
            Lambda::Field(f) => f.min(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSpec {
    pub label: String,
    pub k: f64,
    pub lambda: Lambda,
    pub mu: GridMeasure,
}

impl PhaseSpec {
    pub fn new(label: &str, k: f64, lambda: Lambda, mu: GridMeasure) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(QdomError::Config(format!("phase {label}: k must be >= 0")));
        }
        if !(lambda.min() > 0.0) {
            return Err(QdomError::Config(format!(
                "phase {label}: lambda must be bounded below by a positive constant"
            )));
        }
        if let Lambda::Field(f) = &lambda {
            mu.grid().check_same(f.grid())?;
        }
        Ok(PhaseSpec {
            label: label.to_string(),
            k,
            lambda,
            mu,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// f = mu - lambda at every node.
    pub fn forcing(&self) -> ScalarField {
        let g = *self.grid();
        let d = self.mu.density().values();
        let vals = (0..g.len()).map(|i| d[i] - self.lambda.at(i)).collect();
        ScalarField::new(g, vals).expect("finite forcing")
    }
}

#[derive(Debug, Clone)]
pub struct SegregatedState {
    pub fields: Vec<ScalarField>,
    pub masks: Vec<Mask>,
    pub energy: f64,
    pub energy_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub tol_phase: f64,
}

/// h^n [ sum over forward-difference edges (including the edges to the zero
/// exterior) of (du/h)^2 ] = discrete int |grad u|^2.
pub fn dirichlet_energy(u: &ScalarField) -> f64 {
    let g = *u.grid();
    let v = u.values();
    let h = g.h();
    let cells = g.cells();
    let mut terms = Vec::with_capacity(g.n() * g.len() + g.len());
    let mut stride = 1;
    for a in 0..g.n() {
        for idx in 0..g.len() {
            let c = g.coords(idx)[a];
            let next = if c + 1 < cells[a] {
                v[idx + stride]
            } else {
                0.0
            };
            let d = next - v[idx];
            terms.push(d * d);
            if c == 0 {
                terms.push(v[idx] * v[idx]);
            }
        }
        stride *= cells[a];
    }
    g.cell_volume() / (h * h) * pairwise_sum(&terms)
}

/// J_k(u) = int |grad u|^2 - k^2 u^2 - 2 f u.
pub fn phase_energy(u: &ScalarField, k: f64, f: &ScalarField) -> Result<f64> {
    u.grid().check_same(f.grid())?;
    let vol = u.grid().cell_volume();
    let rest: Vec<f64> = u
        .values()
        .iter()
        .zip(f.values())
        .map(|(&x, &fi)| -k * k * x * x - 2.0 * fi * x)
        .collect();
    Ok(dirichlet_energy(u) + vol * pairwise_sum(&rest))
}

/// Sum of the phase energies of a state.
pub fn energy(fields: &[ScalarField], specs: &[PhaseSpec]) -> Result<f64> {
    if fields.len() != specs.len() {
        return Err(QdomError::Config("one field per phase required".into()));
    }
    let mut e = 0.0;
    for (u, s) in fields.iter().zip(specs) {
        e += phase_energy(u, s.k, &s.forcing())?;
    }
    Ok(e)
}

/// Scalar two-phase energy
/// int |grad U|^2 - k1^2 U+^2 - k2^2 U-^2 - 2 f1 U+ - 2 f2 U-.
pub fn scalar_two_phase_energy(
    u: &ScalarField,
    k1: f64,
    k2: f64,
    f1: &ScalarField,
    f2: &ScalarField,
) -> Result<f64> {
    u.grid().check_same(f1.grid())?;
    u.grid().check_same(f2.grid())?;
    let vol = u.grid().cell_volume();
    let rest: Vec<f64> = (0..u.values().len())
        .map(|i| {
            let x = u.values()[i];
            let (p, m) = (x.max(0.0), (-x).max(0.0));
            -k1 * k1 * p * p - k2 * k2 * m * m - 2.0 * f1.values()[i] * p - 2.0 * f2.values()[i] * m
        })
        .collect();
    Ok(dirichlet_energy(u) + vol * pairwise_sum(&rest))
}

fn check_margin(u: &ScalarField, tol: f64) -> Result<()> {
    let edge = u.max_within_margin(BOX_MARGIN);
    if edge > tol {
        return Err(QdomError::BoxTooSmall(format!(
            "solution {edge:e} within {BOX_MARGIN} cells of the box boundary"
        )));
    }
    Ok(())
}

/// One-phase minimizer over {u >= 0, u = 0 off the box}: the complementarity
/// problem u >= 0, (-Delta_h - k^2) u >= f.
pub fn minimize_one_phase(spec: &PhaseSpec, cfg: &SolverConfig) -> Result<ScalarField> {
    let g = *spec.grid();
    minimize_one_phase_on(spec, &Mask::full(g), &ScalarField::zeros(g), cfg)
}

fn minimize_one_phase_on(
    spec: &PhaseSpec,
    domain: &Mask,
    start: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let g = *spec.grid();
    check_below_box_k_star(&g, spec.k)?;
    let op = OperatorSpec::new(spec.k, domain.clone())?;
    let f = spec.forcing();
    let u = psor_lcp_from(&op, &f, &ScalarField::zeros(g), start, cfg)?;
    check_margin(&u, phase_tolerance(cfg, u.sup_norm()))?;
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct ScalarTwoPhase {
    pub u: ScalarField,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimizes the scalar two-phase energy by nodewise two-branch projected
/// SOR: at each node the piecewise quadratic in U_i is minimized over the
/// positive and negative branches, the lower branch wins (ties go positive),
/// and the relaxed update is projected onto that branch's sign.
pub fn minimize_scalar_two_phase(
    k1: f64,
    k2: f64,
    f1: &ScalarField,
    f2: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarTwoPhase> {
    cfg.validate()?;
    let g = *f1.grid();
    g.check_same(f2.grid())?;
    for k in [k1, k2] {
        check_below_box_k_star(&g, k)?;
        OperatorSpec::new(k, Mask::empty(g))?;
    }
    let h2 = g.h() * g.h();
    let a = 2.0 * g.n() as f64 / h2;
    let (ap, am) = (a - k1 * k1, a - k2 * k2);
    let omega = cfg.relaxation;
    let stop = cfg.tol_rel * f1.sup_norm().max(f2.sup_norm()).max(1.0);
    let nbrs: Vec<[Option<usize>; 6]> = (0..g.len()).map(|i| g.neighbors(i)).collect();
    let (f1v, f2v) = (f1.values(), f2.values());
    let mut x = vec![0.0; g.len()];
    let max_iter = cfg.iterations(&g);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let mut s = 0.0;
            for nb in nbrs[i].iter().flatten() {
                s += x[*nb];
            }
            s /= h2;
            let pos = (s + f1v[i]) / ap;
            let neg = (s - f2v[i]) / am;
            let e_pos = if pos > 0.0 {
                -(s + f1v[i]).powi(2) / ap
            } else {
                0.0
            };
            let e_neg = if neg < 0.0 {
                -(s - f2v[i]).powi(2) / am
            } else {
                0.0
            };
            let old = x[i];
            let (target, sign) = if pos > 0.0 && e_pos <= e_neg {
                (pos, 1.0)
            } else if neg < 0.0 && e_neg < e_pos.min(0.0) {
                (neg, -1.0)
            } else {
                (0.0, 0.0)
            };
            worst = worst.max((target - old).abs() * a);
            x[i] = if sign == 0.0 {
                0.0
            } else if old * sign < 0.0 {
                // branch switch: take the exact minimizer
                target
            } else {
                let r = old + omega * (target - old);
                if r * sign > 0.0 {
                    r
                } else {
                    0.0
                }
            };
        }
        if !worst.is_finite() {
            return Err(QdomError::Indefinite("two-phase sweeps diverge".into()));
        }
        if worst <= stop {
            converged = true;
            break;
        }
    }
    let u = ScalarField::new(g, x)?;
    check_margin(&u, phase_tolerance(cfg, u.sup_norm()))?;
    Ok(ScalarTwoPhase {
        u,
        sweeps,
        converged,
    })
}

fn supports_disjoint(specs: &[PhaseSpec]) -> Result<()> {
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            let both = specs[i].mu.support().and(&specs[j].mu.support())?;
            if !both.is_empty() {
                return Err(QdomError::Hypothesis(format!(
                    "supports of mu_{} and mu_{} overlap on {} node(s)",
                    specs[i].label,
                    specs[j].label,
                    both.count()
                )));
            }
        }
    }
    Ok(())
}

/// Keeps at each node only the largest phase (lowest index on ties).
fn project(fields: &mut [ScalarField]) {
    let len = fields[0].values().len();
    for idx in 0..len {
        let mut best = 0;
        let mut best_v = fields[0].values()[idx];
        for (p, f) in fields.iter().enumerate().skip(1) {
            if f.values()[idx] > best_v {
                best = p;
                best_v = f.values()[idx];
            }
        }
        for (p, f) in fields.iter_mut().enumerate() {
            if p != best {
                f.values_mut()[idx] = 0.0;
            }
        }
    }
}

/// Segregated minimization. m = 1 is the one-phase problem, m = 2 goes
/// through the scalar two-phase form, m >= 3 runs Gauss-Seidel over phases,
/// each re-solved on the complement of the other phases' supports.
pub fn minimize_segregated(
    specs: &[PhaseSpec],
    cfg: &SolverConfig,
    max_sweeps: usize,
) -> Result<SegregatedState> {
    let m = specs.len();
    if m == 0 || m > MAX_PHASES {
        return Err(QdomError::Config(format!(
            "between 1 and {MAX_PHASES} phases, got {m}"
        )));
    }
    let g = *specs[0].grid();
    for s in specs {
        g.check_same(s.grid())?;
    }
    supports_disjoint(specs)?;

    let finish = |fields: Vec<ScalarField>, history: Vec<f64>, sweeps, converged| {
        let sup = fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
        let tol_phase = phase_tolerance(cfg, sup);
        let masks = fields.iter().map(|f| f.positive_mask(tol_phase)).collect();
        let energy = energy(&fields, specs)?;
        Ok(SegregatedState {
            fields,
            masks,
            energy,
            energy_history: history,
            sweeps,
            converged,
            tol_phase,
        })
    };

    if m == 1 {
        let u = minimize_one_phase(&specs[0], cfg)?;
        let e = energy(std::slice::from_ref(&u), specs)?;
        return finish(vec![u], vec![e], 1, true);
    }
    if m == 2 {
        let r = minimize_scalar_two_phase(
            specs[0].k,
            specs[1].k,
            &specs[0].forcing(),
            &specs[1].forcing(),
            cfg,
        )?;
        let fields = vec![r.u.positive_part(), r.u.negative_part()];
        let e = energy(&fields, specs)?;
        return finish(fields, vec![e], r.sweeps, r.converged);
    }

    let mut fields: Vec<ScalarField> = specs
        .iter()
        .map(|s| minimize_one_phase(s, cfg))
        .collect::<Result<_>>()?;
    project(&mut fields);
    let mut history = vec![energy(&fields, specs)?];
    let tol_of = |fields: &[ScalarField]| {
        phase_tolerance(cfg, fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max))
    };
    let mut masks: Vec<Mask> = fields
        .iter()
        .map(|f| f.positive_mask(tol_of(&fields)))
        .collect();
    for sweep in 1..=max_sweeps {
        for i in 0..m {
            let mut others = Mask::empty(g);
            for (j, f) in fields.iter().enumerate() {
                if j != i {
                    others = others.or(&f.positive_mask(0.0))?;
                }
            }
            let free = others.not();
            fields[i] = minimize_one_phase_on(&specs[i], &free, &fields[i], cfg)?;
            project(&mut fields);
        }
        let e = energy(&fields, specs)?;
        let prev = *history.last().expect("nonempty");
        history.push(e);
        let tol = tol_of(&fields);
        let new_masks: Vec<Mask> = fields.iter().map(|f| f.positive_mask(tol)).collect();
        let stable = new_masks == masks;
        masks = new_masks;
        if stable && (prev - e).abs() < 1e-10 * e.abs().max(1e-300) {
            return finish(fields, history, sweep, true);
        }
    }
    finish(fields, history, max_sweeps, false)
}

/// Residual of Delta(u_i - u_j) + k_i^2 u_i - k_j^2 u_j + f_i chi_i - f_j chi_j
/// on nodes at least two cells from the other phases and the box faces, and
/// its max over that region minus a two-cell collar of the phase boundaries.
pub fn local_pde_residual(
    state: &SegregatedState,
    i: usize,
    j: usize,
    specs: &[PhaseSpec],
) -> Result<(ScalarField, f64)> {
    let g = *state.fields[i].grid();
    if i == j {
        return Ok((ScalarField::zeros(g), 0.0));
    }
    let (ui, uj) = (&state.fields[i], &state.fields[j]);
    let diff = ui.sub(uj)?;
    let mut lap = vec![0.0; g.len()];
    laplacian_into(&g, diff.values(), &mut lap);
    let (fi, fj) = (specs[i].forcing(), specs[j].forcing());
    let (ki, kj) = (specs[i].k, specs[j].k);
    let (mi, mj) = (&state.masks[i], &state.masks[j]);
    let mut others = Mask::empty(g);
    for (l, m) in state.masks.iter().enumerate() {
        if l != i && l != j {
            others = others.or(m)?;
        }
    }
    let excluded = others.dilate(2);
    let mut vals = vec![0.0; g.len()];
    for idx in 0..g.len() {
        if excluded.get(idx) || g.margin(idx) < 2 {
            continue;
        }
        let ci = if mi.get(idx) { fi.values()[idx] } else { 0.0 };
        let cj = if mj.get(idx) { fj.values()[idx] } else { 0.0 };
        vals[idx] = lap[idx] + ki * ki * ui.values()[idx] - kj * kj * uj.values()[idx] + ci - cj;
    }
    let collar = mi.collar(2).or(&mj.collar(2))?;
    let worst = (0..g.len())
        .filter(|&idx| !collar.get(idx))
        .map(|idx| vals[idx].abs())
        .fold(0.0, f64::max);
    Ok((ScalarField::new(g, vals)?, worst))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSupportReport {
    pub label: String,
    /// Nodes of Omega_i outside a one-cell dilation of {v_i > 0}.
    pub outside_one_phase: usize,
    /// max(u_i, v_i) - v_i over all nodes.
    pub max_combination_gap: f64,
    /// Whether the supplied open set met min mu_i > lambda_i.
    pub open_set_hypothesis_met: Option<bool>,
    /// Nodes of the open set outside a one-cell dilation of supp u_i.
    pub open_set_uncovered: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportReport {
    pub phases: Vec<PhaseSupportReport>,
    pub passed: bool,
}

/// Compares each phase of a segregated state with its one-phase minimizer
/// (supp u_i within supp v_i) and checks that open sets where mu_i > lambda_i
/// are covered by supp u_i.
pub fn support_checks(
    state: &SegregatedState,
    specs: &[PhaseSpec],
    open_sets: Option<&[Mask]>,
    cfg: &SolverConfig,
) -> Result<SupportReport> {
    let k0 = specs[0].k;
    if specs.iter().any(|s| s.k != k0) {
        return Err(QdomError::Hypothesis(
            "support comparison needs equal wavenumbers k_1 = ... = k_m".into(),
        ));
    }
    let mut phases = Vec::new();
    let mut passed = true;
    for (i, s) in specs.iter().enumerate() {
        let v = minimize_one_phase(s, cfg)?;
        let vpos = v.positive_mask(0.0).dilate(1);
        let outside_one_phase = state.masks[i].and_not(&vpos)?.count();
        let max_combination_gap = state.fields[i]
            .values()
            .iter()
            .zip(v.values())
            .map(|(&a, &b)| a.max(b) - b)
            .fold(0.0, f64::max);
        let (mut met, mut uncovered) = (None, None);
        if let Some(sets) = open_sets {
            let u_set = &sets[i];
            let dens = s.mu.density().values();
            let ok = !u_set.is_empty() && u_set.indices().all(|x| dens[x] > s.lambda.at(x));
            met = Some(ok);
            if ok {
                let cover = state.fields[i].positive_mask(0.0).dilate(1);
                let c = u_set.and_not(&cover)?.count();
                passed &= c == 0;
                uncovered = Some(c);
            }
        }
        passed &= outside_one_phase == 0 && max_combination_gap <= state.tol_phase;
        phases.push(PhaseSupportReport {
            label: s.label.clone(),
            outside_one_phase,
            max_combination_gap,
            open_set_hypothesis_met: met,
            open_set_uncovered: uncovered,
        });
    }
    Ok(SupportReport { phases, passed })
}
