use serde_json::{json, Map, Value};

use qdom_core::balayage::{
    check_below_box_k_star, full_space_balayage, partial_balayage, phase_tolerance,
    structure_check, BalayageResult, CapacityStatus,
};
use qdom_core::linsolve::SolverConfig;
use qdom_core::multiphase::{
    minimize_one_phase, minimize_segregated, phase_energy, support_checks, Lambda, PhaseSpec,
    DEFAULT_MAX_SWEEPS,
};
use qdom_core::scatter::{
    admissibility_check, build_contrasts, make_incident, nonscattering_residual,
    reconstruct_permittivity, ContrastSpec, IncidentKind,
};
use qdom_core::specfun::{ball_capacity, ball_volume};
use qdom_core::twophase::{
    construct_two_phase_balayage, cross_validate, tau_membership, two_phase_by_minimization,
    HypothesisCheck, TwoPhaseResult,
};
use qdom_core::verify::{
    eigen_direction_check, helmholtz_test_family, null_qd_profile, null_qd_radius,
    pompeiu_identities, quadrature_residual, saddle_scan, vanishes_on_boundary,
};
use qdom_core::{Grid, GridMeasure, Mask, QdomError, Result, ScalarField};

use crate::config::{RouteChoice, RunConfig, Task};
use crate::output::Sink;

const DEFAULT_TOLERANCE: f64 = 0.02;
const DEFAULT_DIRECTIONS: usize = 8;
const DEFAULT_TWO_PHASE_SWEEPS: usize = 50;

/// Checks and metrics gathered by a pipeline.
#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<HypothesisCheck>,
    pub metrics: Map<String, Value>,
}

impl Outcome {
    fn check(&mut self, name: &str, formula: &str, passed: bool, detail: String) {
        self.checks
            .push(HypothesisCheck::new(name, formula, passed, detail));
    }

    fn metric(&mut self, key: &str, v: impl serde::Serialize) {
        self.metrics
            .insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

pub fn execute(cfg: &RunConfig, sink: &mut Sink, out: &mut Outcome) -> Result<()> {
    let grid = cfg.make_grid()?;
    let solver = cfg.solver(&grid)?;
    out.metric("h", grid.h());
    out.metric("nodes", grid.len());
    match cfg.task {
        Task::Balayage => run_balayage(cfg, &grid, &solver, sink, out),
        Task::OnePhase => run_one_phase(cfg, &grid, &solver, sink, out),
        Task::TwoPhase => run_two_phase(cfg, &grid, &solver, sink, out).map(|_| ()),
        Task::MultiPhase => run_multi_phase(cfg, &grid, &solver, sink, out),
        Task::VerifyNull => run_verify_null(cfg, &grid, sink, out),
        Task::Pompeiu => run_pompeiu(cfg, &grid, sink, out),
        Task::Scatter => run_scatter(cfg, &grid, &solver, sink, out).map(|_| ()),
        Task::Permittivity => run_permittivity(cfg, &grid, &solver, sink, out),
    }
}

fn tolerance(cfg: &RunConfig) -> f64 {
    cfg.options.tolerance.unwrap_or(DEFAULT_TOLERANCE)
}

fn equivalent_radius(n: usize, volume: f64) -> f64 {
    (volume / ball_volume(n, 1.0)).powf(1.0 / n as f64)
}

fn require_unit_lambda(cfg: &RunConfig, idx: usize, what: &str) -> Result<()> {
    let l = cfg.phases[idx].lambda;
    if l != 1.0 {
        return Err(QdomError::Config(format!(
            "{what} uses Lebesgue measure (lambda = 1); phase {idx} has lambda = {l}"
        )));
    }
    Ok(())
}

fn family_check(
    cfg: &RunConfig,
    grid: &Grid,
    k: f64,
    d_plus: &Mask,
    d_minus: Option<&Mask>,
    mu_plus: Option<&GridMeasure>,
    mu_minus: Option<&GridMeasure>,
    out: &mut Outcome,
) -> Result<()> {
    let centers = cfg.options.centers.clone().unwrap_or_default();
    let fam = helmholtz_test_family(
        grid,
        k,
        cfg.options.directions.unwrap_or(DEFAULT_DIRECTIONS),
        &centers,
    )?;
    let rep = quadrature_residual(d_plus, d_minus, mu_plus, mu_minus, &fam)?;
    let tol = tolerance(cfg);
    out.check(
        "quadrature-identity",
        "int_{D+} w - int_{D-} w = <mu+ - mu-, w> for (Delta + k^2) w = 0",
        rep.max_residual <= tol,
        format!(
            "max normalized residual {:.3e} over {} solutions (tolerance {tol})",
            rep.max_residual,
            rep.entries.len()
        ),
    );
    out.metric("quadrature", &rep);
    Ok(())
}

fn run_balayage(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<()> {
    require_unit_lambda(cfg, 0, "balayage")?;
    let phase = &cfg.phases[0];
    let k = phase.k;
    let (grid, mu, res): (Grid, GridMeasure, BalayageResult) = match cfg.options.grow_box {
        Some(d) if d > 0 => {
            let build = |g: &Grid| phase.measure(g);
            let (g, res) = full_space_balayage(&build, *grid, k, solver, d)?;
            (g, phase.measure(&g)?, res)
        }
        _ => {
            let mu = phase.measure(grid)?;
            let res = partial_balayage(&mu, k, &Mask::full(*grid), solver)?;
            (*grid, mu, res)
        }
    };
    let n = grid.n();
    out.check(
        "capacity",
        "mu(R^n) <= c_k(R_k)",
        res.capacity != CapacityStatus::Violated,
        format!("{:?}", res.capacity).to_lowercase(),
    );
    let s = structure_check(&res, &mu, &Mask::full(grid))?;
    out.check(
        "balayage-structure",
        "Bal(mu) = Lebesgue on omega, = mu off closure(omega), U = V off omega",
        s.passed,
        format!(
            "interior deviation {:.3e}, exterior deviation {:.3e}",
            s.interior_deviation, s.exterior_deviation
        ),
    );
    let vol = res.omega.volume();
    let r = equivalent_radius(n, vol);
    out.metric("structure", &s);
    out.metric("total_mass", mu.total_mass());
    out.metric("omega_volume", vol);
    out.metric("equivalent_radius", r);
    out.metric("equivalent_ball_capacity", ball_capacity(n, k, r)?);
    out.metric("tol_phase", res.tol_phase);
    out.metric("final_cells", grid.cells()[..n].to_vec());
    family_check(cfg, &grid, k, &res.omega, None, Some(&mu), None, out)?;
    sink.field("u", &res.u)?;
    sink.field("v", &res.v)?;
    sink.field("w", &res.w)?;
    sink.field("bal_density", &res.bal_density)?;
    sink.mask("omega", &res.omega)?;
    Ok(())
}

fn run_one_phase(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<()> {
    let p = &cfg.phases[0];
    check_below_box_k_star(grid, p.k)?;
    let mu = p.measure(grid)?;
    let spec = PhaseSpec::new(&p.label(0), p.k, Lambda::Const(p.lambda), mu.clone())?;
    let w = minimize_one_phase(&spec, solver)?;
    let tol = phase_tolerance(solver, w.sup_norm());
    let support = w.positive_mask(tol);
    out.metric("energy", phase_energy(&w, p.k, &spec.forcing())?);
    out.metric("support_volume", support.volume());
    out.metric(
        "equivalent_radius",
        equivalent_radius(grid.n(), support.volume()),
    );
    out.metric("tol_phase", tol);
    if p.lambda == 1.0 {
        let bal = partial_balayage(&mu, p.k, &Mask::full(*grid), solver)?;
        let agree = bal.omega.agrees_within(&support, 2)?;
        out.check(
            "balayage-agreement",
            "{W > 0} of the minimizer = omega_k(mu) up to a 2-cell collar",
            agree,
            format!(
                "{} nodes differ",
                bal.omega.symmetric_difference_count(&support)?
            ),
        );
        sink.mask("omega", &bal.omega)?;
    }
    sink.field("u", &w)?;
    sink.mask("support", &support)?;
    Ok(())
}

/// Runs the configured two-phase route(s) and returns the primary result.
fn solve_two_phase(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<(TwoPhaseResult, GridMeasure, GridMeasure)> {
    let (pp, pm) = (&cfg.phases[0], &cfg.phases[1]);
    check_below_box_k_star(grid, pp.k)?;
    check_below_box_k_star(grid, pm.k)?;
    let mp = pp.measure(grid)?;
    let mm = pm.measure(grid)?;
    let balayage_ok = pp.k == pm.k && pp.lambda == 1.0 && pm.lambda == 1.0;
    let route = cfg.options.method.unwrap_or(if balayage_ok {
        RouteChoice::Both
    } else {
        RouteChoice::Minimization
    });
    if route != RouteChoice::Minimization && !balayage_ok {
        return Err(QdomError::Config(
            "the balayage route needs k+ = k- and lambda+- = 1".into(),
        ));
    }
    let max_sweeps = cfg.solver.max_sweeps.unwrap_or(DEFAULT_TWO_PHASE_SWEEPS);
    let bal = if route != RouteChoice::Minimization {
        Some(construct_two_phase_balayage(
            &mp, &mm, pp.k, solver, max_sweeps,
        )?)
    } else {
        None
    };
    let min = if route != RouteChoice::Balayage {
        let fp = mp.density().map(|m| m - pp.lambda);
        let fm = mm.density().map(|m| m - pm.lambda);
        Some(two_phase_by_minimization(pp.k, pm.k, &fp, &fm, solver)?)
    } else {
        None
    };
    if let Some(b) = &bal {
        out.checks.extend(b.diagnostics.checks.iter().cloned());
        out.metric("balayage_route", &b.diagnostics);
        let parts = b.parts.as_ref().expect("balayage route keeps its parts");
        let tau = tau_membership(
            &b.u,
            &mp,
            &mm,
            pp.k,
            &parts.w_plus,
            &parts.w_minus,
            b.tol_phase,
        )?;
        out.check(
            "tau-membership",
            "(Delta + k^2) w >= -eta(w) and -W^{mu-} <= w <= W^{mu+}",
            tau.member,
            format!(
                "{} PDE, {} lower-bound, {} sandwich violations",
                tau.pde_violations, tau.lower_violations, tau.sandwich_violations
            ),
        );
        out.metric("tau", &tau);
        let mirror = b.d_plus.reflect(0, 0.0).agrees_within(&b.d_minus, 1)?;
        out.metric("mirror_within_one_cell", mirror);
        sink.field("u_balayage", &b.u)?;
    }
    if let Some(m) = &min {
        out.check(
            "minimization-converged",
            "two-branch PSOR reached tolerance",
            m.diagnostics.converged,
            format!("{} sweeps", m.diagnostics.iterations),
        );
        out.metric("minimization_route", &m.diagnostics);
        sink.field("u_minimization", &m.u)?;
    }
    if let (Some(b), Some(m)) = (&bal, &min) {
        let cross = cross_validate(b, m)?;
        out.check(
            "routes-agree",
            "||u_bal - u_min|| <= 5% ||u||, masks equal up to a 2-cell collar",
            cross.l2_relative <= 0.05 && cross.masks_within_collar,
            format!("relative L2 distance {:.3e}", cross.l2_relative),
        );
        out.metric("cross_validation", &cross);
    }
    let primary = bal.or(min).expect("at least one route ran");
    if balayage_ok {
        family_check(
            cfg,
            grid,
            pp.k,
            &primary.d_plus,
            Some(&primary.d_minus),
            Some(&mp),
            Some(&mm),
            out,
        )?;
    }
    out.metric("d_plus_volume", primary.d_plus.volume());
    out.metric("d_minus_volume", primary.d_minus.volume());
    sink.field("u", &primary.u)?;
    sink.phases("phases", &primary.d_plus, &primary.d_minus)?;
    sink.mask("d_plus", &primary.d_plus)?;
    sink.mask("d_minus", &primary.d_minus)?;
    Ok((primary, mp, mm))
}

fn run_two_phase(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<TwoPhaseResult> {
    Ok(solve_two_phase(cfg, grid, solver, sink, out)?.0)
}

fn run_multi_phase(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<()> {
    let mut specs = Vec::new();
    for (i, p) in cfg.phases.iter().enumerate() {
        check_below_box_k_star(grid, p.k)?;
        specs.push(PhaseSpec::new(
            &p.label(i),
            p.k,
            Lambda::Const(p.lambda),
            p.measure(grid)?,
        )?);
    }
    let max_sweeps = cfg.solver.max_sweeps.unwrap_or(DEFAULT_MAX_SWEEPS);
    let state = minimize_segregated(&specs, solver, max_sweeps)?;
    out.check(
        "segregated-converged",
        "alternating sweeps reached tolerance",
        state.converged,
        format!("{} sweeps", state.sweeps),
    );
    let monotone = state
        .energy_history
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
    out.check(
        "energy-monotone",
        "J(u^{s+1}) <= J(u^s)",
        monotone,
        format!("{} recorded energies", state.energy_history.len()),
    );
    if specs.iter().all(|s| s.k == specs[0].k) {
        let rep = support_checks(&state, &specs, None, solver)?;
        out.check(
            "support-within-one-phase",
            "supp u_i within supp v_i (one-phase minimizer)",
            rep.passed,
            format!("{} phases compared", rep.phases.len()),
        );
        out.metric("support", &rep);
    }
    out.metric("energy", state.energy);
    out.metric("energy_history", &state.energy_history);
    let mut labels = ScalarField::zeros(*grid);
    for (i, (spec, (u, mask))) in specs
        .iter()
        .zip(state.fields.iter().zip(&state.masks))
        .enumerate()
    {
        sink.field(&format!("u_{}", spec.label), u)?;
        for idx in mask.indices() {
            labels.values_mut()[idx] = (i + 1) as f64;
        }
        out.metric(&format!("volume_{}", spec.label), mask.volume());
    }
    sink.field("labels", &labels)?;
    Ok(())
}

fn null_setup(cfg: &RunConfig, grid: &Grid, out: &mut Outcome) -> Result<(f64, ScalarField, Mask)> {
    let k = cfg.phases[0].k;
    let m = cfg.options.m.unwrap_or(1);
    let (u, d) = null_qd_profile(grid, k, m)?;
    let r = null_qd_radius(grid.n(), k, m)?;
    out.metric("k", k);
    out.metric("m", m);
    out.metric("radius", r);
    out.metric("volume", d.volume());
    out.metric("ball_volume", ball_volume(grid.n(), r));
    out.metric("centre_value", u.max());
    Ok((k, u, d))
}

fn run_verify_null(cfg: &RunConfig, grid: &Grid, sink: &mut Sink, out: &mut Outcome) -> Result<()> {
    let (k, u, d) = null_setup(cfg, grid, out)?;
    out.check(
        "vanishes-on-boundary",
        "u = 0 off D and small on the collar of dD",
        vanishes_on_boundary(&u, &d)?,
        String::new(),
    );
    family_check(cfg, grid, k, &d, None, None, None, out)?;
    sink.field("u", &u)?;
    sink.mask("domain", &d)?;
    Ok(())
}

fn run_pompeiu(cfg: &RunConfig, grid: &Grid, sink: &mut Sink, out: &mut Outcome) -> Result<()> {
    let (k, u, d) = null_setup(cfg, grid, out)?;
    let tol = tolerance(cfg);
    let rep = pompeiu_identities(&u, &d, k, tol)?;
    for c in &rep.identities {
        out.check(
            &c.name,
            &c.formula,
            c.passed,
            format!(
                "value {:.6} target {:.6} relative error {:.3e}",
                c.value, c.target, c.relative_error
            ),
        );
    }
    let ts: Vec<f64> = (0..=20).map(|i| -2.0 + 0.25 * i as f64).collect();
    let mut scan = saddle_scan(&u, &d, k, &ts)?;
    out.check(
        "saddle-ray",
        "J(t u) = (-t^2 + 2t) |D| / k^2, maximal at t = 1",
        scan.argmax_t == 1.0 && scan.max_deviation <= tol,
        format!(
            "argmax t = {}, max deviation {:.3e}",
            scan.argmax_t, scan.max_deviation
        ),
    );
    let eig = eigen_direction_check(&u, &d, k)?;
    out.check(
        "eigen-direction",
        "J(u + t phi) > J(u) for t = +-tau along a box eigenmode with k0 > k",
        eig.not_local_max && eig.linear_relative <= tol,
        format!(
            "k0 = {:.4}, first variation {:.3e} (relative), gains {:.3e} / {:.3e}",
            eig.k0, eig.linear_relative, eig.gain_plus, eig.gain_minus
        ),
    );
    scan.eigen_direction = Some(eig);
    out.metric("identities", &rep);
    out.metric("saddle", &scan);
    sink.field("u", &u)?;
    Ok(())
}

fn run_scatter(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<Option<ScalarField>> {
    let (tp, _, _) = solve_two_phase(cfg, grid, solver, sink, out)?;
    let (pp, pm) = (&cfg.phases[0], &cfg.phases[1]);
    let k0 = cfg.options.k0.unwrap_or(pp.k);
    let kind = cfg
        .options
        .incident
        .clone()
        .unwrap_or(IncidentKind::Radial {
            center: vec![0.0; grid.n()],
            scale: 1.0,
            sign: -1.0,
        });
    let u0 = make_incident(grid, k0, kind)?;
    out.metric("incident_gate_residual", u0.gate_residual);
    let adm = admissibility_check(&u0, &tp)?;
    out.check(
        "admissible-incident",
        "u0 < 0 on dD+ and dD-",
        adm.passed,
        format!(
            "max u0 on collars {:.4e}, delta {:.4e}",
            adm.max_on_collars, adm.delta
        ),
    );
    out.metric("admissibility", &adm);
    sink.field("incident", &u0.field)?;
    if !adm.passed {
        return Ok(None);
    }
    let spec = ContrastSpec {
        lambda_plus: pp.lambda,
        lambda_minus: pm.lambda,
    };
    let res = build_contrasts(&tp, &u0, &spec)?;
    let rep = nonscattering_residual(&res, &u0, &tp)?;
    if tp.k_plus == k0 && tp.k_minus == k0 {
        let pos = |d: &Mask, rho: &ScalarField| -> Result<bool> {
            Ok(d.and(&d.collar(2))?
                .indices()
                .all(|i| rho.values()[i] > 0.0))
        };
        let ok = pos(&tp.d_plus, &res.rho_plus)? && pos(&tp.d_minus, &res.rho_minus)?;
        out.check(
            "contrast-positive-near-boundary",
            "rho+- > 0 on the 2-cell collars inside dD+-",
            ok,
            String::new(),
        );
    }
    let worst_limit = res
        .boundary_limits
        .iter()
        .map(|l| l.relative_error)
        .fold(0.0, f64::max);
    out.check(
        "interface-limits",
        "rho+- -> -lambda+- / u0(x0) at shared boundary points",
        worst_limit <= 0.05,
        format!(
            "{} interface nodes, worst relative error {worst_limit:.3e}",
            res.boundary_limits.len()
        ),
    );
    out.check(
        "scattered-field-compact",
        "max |u~| on the box margin <= tol_phase",
        rep.margin_ok,
        format!("{:.3e}", rep.margin_max),
    );
    out.metric("nonscattering_residual", rep.max_residual);
    out.metric("interface_limits", &res.boundary_limits);
    sink.field("rho_plus", &res.rho_plus)?;
    sink.field("rho_minus", &res.rho_minus)?;
    sink.field("q", &res.q)?;
    sink.field("total", &u0.field.add(&tp.u)?)?;
    Ok(Some(res.q))
}

fn run_permittivity(
    cfg: &RunConfig,
    grid: &Grid,
    solver: &SolverConfig,
    sink: &mut Sink,
    out: &mut Outcome,
) -> Result<()> {
    let q = if cfg.phases.is_empty() {
        ScalarField::zeros(*grid)
    } else {
        match run_scatter(cfg, grid, solver, sink, out)? {
            Some(q) => q,
            None => return Ok(()),
        }
    };
    let center = cfg.options.center.clone().unwrap_or(vec![0.0; grid.n()]);
    let radius = match cfg.options.radius {
        Some(r) => r,
        None => 0.95 * grid.distance_to_boundary(&center),
    };
    let p = reconstruct_permittivity(
        &q,
        &center,
        radius,
        &SolverConfig {
            relaxation: 1.0,
            ..*solver
        },
    )?;
    out.metric("min_psi", p.min_psi);
    out.metric("self_residual", p.self_residual);
    out.metric("epsilon_min", p.epsilon.min());
    out.metric("epsilon_max", p.epsilon.max());
    out.metric("radius", radius);
    sink.field("epsilon", &p.epsilon)?;
    sink.field("psi", &p.psi)?;
    Ok(())
}

/// Report JSON: keys sorted, timestamp the only run-dependent field.
pub fn report(
    cfg_echo: &Value,
    task: &str,
    status: &str,
    outcome: &Outcome,
    files: &[String],
    error: Option<(&str, String)>,
) -> Value {
    json!({
        "tool": "qdom",
        "version": env!("CARGO_PKG_VERSION"),
        "task": task,
        "timestamp": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "status": status,
        "checks": outcome.checks,
        "metrics": outcome.metrics,
        "outputs": files,
        "error": error.map(|(class, message)| json!({"class": class, "message": message})),
        "config": cfg_echo,
    })
}
