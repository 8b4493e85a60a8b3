//! The subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use vortex_core::functional::{energy, gradient};
use vortex_core::model::{check_assumptions, DEFAULT_T_CHECK};
use vortex_core::singular::verify_singular_identities;
use vortex_core::solvers::{comparison_diagnostic, continuation, minimize_constrained, mountain_pass, SolveOutcome};
use vortex_core::subsolution::{build_subsolution, probe_parameters};
use vortex_core::system::certify;
use vortex_core::{EnergyBreakdown, Field, Problem};

use crate::config::RunConfig;
use crate::report::{Output, RunReport};

/// Distinct solutions differ by at least this much in max norm.
pub const DISTINCT: f64 = 1e-3;
/// Relative tolerance on the flux `4πn`.
pub const FLUX_TOL: f64 = 1e-6;
/// Bound on `‖ε² rb‖₂` in units of `1 + λ²`.
pub const EQUIVALENCE_TOL: f64 = 1e-6;
/// ε-schedule used when the config does not give one.
pub const DEFAULT_SCHEDULE: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
/// Allowed relative rise between consecutive continuation steps.
pub const WIGGLE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    CheckModel,
    Sigma,
    Subsolution,
    Probe,
    Solve,
    Continuation,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckModel => "check-model",
            Command::Sigma => "sigma",
            Command::Subsolution => "subsolution",
            Command::Probe => "probe",
            Command::Solve => "solve",
            Command::Continuation => "continuation",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub dealias: bool,
    pub force: bool,
    /// Field to check for `verify`.
    pub field: Option<PathBuf>,
}

/// Per-solution numbers shared by `solve` and `verify`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionSummary {
    pub energy: EnergyParts,
    pub grad_norm: f64,
    pub grad_tol: f64,
    pub residual_a_l2: f64,
    pub residual_b_l2: f64,
    pub residual_b_scaled_l2: f64,
    pub equivalence_tol: f64,
    pub flux: f64,
    pub flux_error: f64,
    pub max_u: f64,
    pub min_u: f64,
    pub mean_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyParts {
    pub biharmonic: f64,
    pub dirichlet: f64,
    pub cross: f64,
    pub potential: f64,
    pub linear: f64,
    pub total: f64,
}

impl From<EnergyBreakdown> for EnergyParts {
    fn from(e: EnergyBreakdown) -> Self {
        EnergyParts {
            biharmonic: e.biharmonic,
            dirichlet: e.dirichlet,
            cross: e.cross,
            potential: e.potential,
            linear: e.linear,
            total: e.total,
        }
    }
}

impl SolutionSummary {
    pub fn is_critical(&self) -> bool {
        self.grad_norm <= self.grad_tol
    }

    pub fn equivalence_holds(&self) -> bool {
        self.residual_b_scaled_l2 <= self.equivalence_tol
    }

    pub fn flux_quantized(&self) -> bool {
        self.flux_error <= FLUX_TOL
    }
}

/// Energy, stationarity, system residuals and flux of `u`.
pub fn summarize(p: &Problem, u: &Field, grad_tol: f64) -> Result<(SolutionSummary, Field)> {
    let e = energy(p, u)?;
    let g = gradient(p, u)?;
    let pair = certify(p, u)?;
    let summary = SolutionSummary {
        energy: e.into(),
        grad_norm: g.l2_norm(),
        grad_tol,
        residual_a_l2: pair.residual_a.l2_norm(),
        residual_b_l2: pair.residual_b.l2_norm(),
        residual_b_scaled_l2: pair.residual_b_scaled.l2_norm(),
        equivalence_tol: EQUIVALENCE_TOL * p.scale(),
        flux: pair.flux,
        flux_error: pair.flux_error(p),
        max_u: u.max(),
        min_u: u.min(),
        mean_u: u.mean(),
    };
    Ok((summary, pair.v))
}

/// Run `cmd`, write `report.json` (also on failure) and return the report.
pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let mut out = Output::create(&dir)?;
    let mut report = RunReport::new(cmd.name(), opts.seed);
    report.result("config", json!(cfg.to_toml()));
    let outcome = match cmd {
        Command::CheckModel => check_model(cfg, &mut report),
        Command::Sigma => sigma(cfg, opts, &mut report, &mut out),
        Command::Subsolution => subsolution(cfg, opts, &mut report, &mut out),
        Command::Probe => probe(cfg, opts, &mut report, &mut out),
        Command::Solve => solve(cfg, opts, &mut report, &mut out),
        Command::Continuation => continuation_cmd(cfg, opts, &mut report, &mut out),
        Command::Verify => verify(cfg, opts, &mut report),
    };
    if let Err(e) = outcome {
        report.error = Some(format!("{e:#}"));
    }
    let name = if cmd == Command::Verify { "verify.json" } else { "report.json" };
    report.files = out.written().to_vec();
    report.files.push(name.into());
    out.text(name, &report.to_json())?;
    Ok(report)
}

fn check_model(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let model = report.stage("model", |_| cfg.model())?;
    let (t_check, samples) = cfg
        .check_model
        .as_ref()
        .map(|c| (c.t_check.unwrap_or(DEFAULT_T_CHECK), c.samples.unwrap_or(2000)))
        .unwrap_or((DEFAULT_T_CHECK, 2000));
    let a = report.stage("assumptions", |_| Ok(check_assumptions(&model, t_check, samples)?))?;
    report.flag("assumptions", a.passes());
    report.result(
        "assumptions",
        json!({
            "model": a.model,
            "samples": a.samples,
            "t_min": a.t_min,
            "t_max": a.t_max,
            "positive_derivative": a.positive_derivative,
            "min_derivative": a.min_derivative,
            "s_in_range": a.s_in_range,
            "f_at_zero": a.f_at_zero,
            "max_sampled_f": a.max_sampled_f,
            "inverse_consistent": a.inverse_consistent,
            "class_a": a.class_a,
            "class_b": a.class_b,
            "declared": a.declared.to_string(),
            "declared_passes": a.declared_passes,
            "note": a.note,
            "failures": a.failures(),
        }),
    );
    Ok(())
}

fn problem(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport) -> Result<Problem> {
    report.stage("sigma", |_| cfg.problem(opts.dealias))
}

fn record_sigma(p: &Problem, report: &mut RunReport) {
    let r = verify_singular_identities(p.background());
    report.flag("singular_identities", r.passes);
    report.result(
        "sigma",
        json!({
            "gradient_identity_residual": r.gradient_identity_residual,
            "tolerance": r.tolerance,
            "excluded_radius": r.excluded_radius,
            "w_max": r.w_max,
            "min_w": r.min_w,
            "max_w_at_vortices": r.max_w_at_vortices,
            "sigma_integral": r.sigma_integral,
            "source_mean": r.source_mean,
            "a": p.a(),
            "n": p.n(),
        }),
    );
}

fn sigma(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport, out: &mut Output) -> Result<()> {
    let p = problem(cfg, opts, report)?;
    record_sigma(&p, report);
    let bg = p.background();
    out.field("sigma.vfd", &bg.sigma)?;
    out.field("w.vfd", &bg.w)?;
    out.field("q.vfd", &bg.q)?;
    Ok(())
}

fn subsolution_stage(
    cfg: &RunConfig,
    p: &Problem,
    report: &mut RunReport,
    out: &mut Output,
) -> Result<vortex_core::SubsolutionResult> {
    let delta = cfg.delta(p.grid(), p.background().vortices());
    let r = report.stage("subsolution", |_| Ok(build_subsolution(p, delta)?))?;
    report.flag("subsolution_verified", r.verified);
    report.result(
        "subsolution",
        json!({
            "delta": r.delta,
            "phi0": r.phi0,
            "k": r.k,
            "inner_margin": r.inner_margin,
            "outer_margin": r.outer_margin,
            "sign_margin": r.sign_margin,
            "verified": r.verified,
            "lambda": r.lambda,
            "epsilon": r.epsilon,
        }),
    );
    out.field("u_sub.vfd", &r.u_sub)?;
    out.field("phi.vfd", &r.phi)?;
    out.field("margin.vfd", &r.margin)?;
    Ok(r)
}

fn subsolution(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport, out: &mut Output) -> Result<()> {
    let p = problem(cfg, opts, report)?;
    subsolution_stage(cfg, &p, report, out)?;
    Ok(())
}

fn probe(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport, out: &mut Output) -> Result<()> {
    let grids = cfg.probe.clone().ok_or_else(|| anyhow!("probe: the config has no [probe] table"))?;
    let p = problem(cfg, opts, report)?;
    let delta = cfg.delta(p.grid(), p.background().vortices());
    let table = report.stage("probe", |_| Ok(probe_parameters(&p, delta, &grids.lambdas, &grids.epsilons)?))?;
    out.text("probe.csv", &table.to_csv())?;
    report.flag("probe_feasible", table.lambda0.is_some());
    report.result(
        "probe",
        json!({ "lambda0": table.lambda0, "eps_lambda": table.eps_lambda, "delta": delta }),
    );
    Ok(())
}

fn solve(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport, out: &mut Output) -> Result<()> {
    let model = report.stage("model", |_| cfg.model())?;
    let a = report.stage("assumptions", |_| Ok(check_assumptions(&model, DEFAULT_T_CHECK, 2000)?))?;
    report.flag("assumptions", a.passes());
    let p = problem(cfg, opts, report)?;
    record_sigma(&p, report);
    let sub = subsolution_stage(cfg, &p, report, out)?;
    if !sub.verified && !opts.force {
        bail!("the subsolution is not verified at lambda = {}, epsilon = {}; rerun with --force", p.lambda(), p.epsilon());
    }
    let solve_opts = cfg.solve_options();
    let tol = solve_opts.tolerance(&p);

    let min = report.stage("local_min", |_| Ok(minimize_constrained(&p, &sub.u_sub, &solve_opts)?))?;
    out.field("u_min.vfd", &min.u)?;
    out.text("trace_min.csv", &min.trace_csv())?;
    let cmp = comparison_diagnostic(&p, &min.u, &sub.u_sub, 10.0 * tol)?;
    report.flag("local_min_converged", min.converged);
    report.flag("strict_comparison", min.min_gap.is_some_and(|g| g > 0.0));
    report.flag("comparison_inequality", cmp.passes());
    report.result(
        "comparison",
        json!({
            "inequality_residual": cmp.inequality_residual,
            "equation_residual": cmp.equation_residual,
            "min_gap": cmp.min_gap,
            "min_w_gap": cmp.min_w_gap,
            "tolerance": cmp.tolerance,
        }),
    );

    let mp = report.stage("mountain_pass", |_| Ok(mountain_pass(&p, &min.u, &solve_opts)?))?;
    out.field("u_mp.vfd", &mp.u)?;
    out.text("trace_mp.csv", &mp.trace_csv())?;
    if let Some(profile) = &mp.path_profile {
        let mut csv = String::from("node,energy\n");
        for (i, e) in profile.iter().enumerate() {
            csv.push_str(&format!("{i},{e:e}\n"));
        }
        out.text("path_mp.csv", &csv)?;
    }
    report.flag("mountain_pass_converged", mp.converged);

    let (s_min, s_mp) = report.stage("system", |_| {
        let (s_min, v_min) = summarize(&p, &min.u, tol)?;
        let (s_mp, v_mp) = summarize(&p, &mp.u, tol)?;
        out.field("v_min.vfd", &v_min)?;
        out.field("v_mp.vfd", &v_mp)?;
        Ok((s_min, s_mp))
    })?;
    report.flag("equivalence", s_min.equivalence_holds() && s_mp.equivalence_holds());
    report.flag("quantization", s_min.flux_quantized() && s_mp.flux_quantized());
    let distance = (&mp.u - &min.u).linf_norm();
    let ordered = s_mp.energy.total >= s_min.energy.total;
    report.flag("two_solutions", min.converged && mp.converged && distance >= DISTINCT && ordered);
    report.result("local_min", solve_details(&min, &s_min));
    report.result("mountain_pass", solve_details(&mp, &s_mp));
    report.result(
        "two_solutions",
        json!({
            "linf_distance": distance,
            "energy_gap": s_mp.energy.total - s_min.energy.total,
            // The pass level sits on the minimum: strictness of the minimum is in doubt.
            "degenerate_barrier": (s_mp.energy.total - s_min.energy.total).abs() <= 1e-8,
        }),
    );
    Ok(())
}

fn solve_details(o: &SolveOutcome, s: &SolutionSummary) -> serde_json::Value {
    json!({
        "summary": s,
        "converged": o.converged,
        "iterations": o.iterations,
        "min_gap": o.min_gap,
        "newton_history": o.newton_history,
    })
}

fn continuation_cmd(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport, out: &mut Output) -> Result<()> {
    let p = problem(cfg, opts, report)?;
    let schedule = cfg.problem.epsilon_schedule.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
    let delta = cfg.delta(p.grid(), p.background().vortices());
    let solve_opts = cfg.solve_options();
    let r = report.stage("continuation", |_| Ok(continuation(&p, &schedule, delta, &solve_opts)?))?;
    out.text("continuation.csv", &r.to_csv())?;
    let check = ContinuationChecks::of(&r);
    report.flag("all_converged", r.all_converged());
    report.flag("eps_laplacian_decreasing", check.eps_laplacian_decreasing);
    report.flag("cross_decreasing", check.cross_decreasing);
    report.flag("h1_distance_decreasing", check.h1_decreasing);
    report.flag("energy_gap_decreasing", check.energy_gap_decreasing);
    report.flag("subsolution_rate", check.slope_ok);
    report.flag("energy_limit", check.energy_limit_ok);
    report.result(
        "continuation",
        json!({
            "schedule": schedule,
            "limit_energy": r.limit.energy.total,
            "limit_converged": r.limit.converged,
            "subsolution_slope": check.slope,
            "final_relative_energy_gap": check.relative_gap,
            "eps_laplacian": r.eps_laplacians(),
            "cross": r.cross_terms(),
        }),
    );
    Ok(())
}

/// The pass criteria applied to a continuation run.
#[derive(Clone, Debug)]
pub struct ContinuationChecks {
    pub eps_laplacian_decreasing: bool,
    pub cross_decreasing: bool,
    pub h1_decreasing: bool,
    pub energy_gap_decreasing: bool,
    pub slope: f64,
    pub slope_ok: bool,
    pub relative_gap: f64,
    pub energy_limit_ok: bool,
}

impl ContinuationChecks {
    pub fn of(r: &vortex_core::solvers::ContinuationReport) -> ContinuationChecks {
        use vortex_core::solvers::ContinuationReport as R;
        let h1: Vec<f64> = r.steps.iter().map(|s| s.h1_distance).collect();
        let gaps: Vec<f64> = r.steps.iter().map(|s| s.energy_gap.abs()).collect();
        let slope = r.subsolution_slope();
        let relative_gap = r.final_relative_energy_gap();
        ContinuationChecks {
            eps_laplacian_decreasing: R::decreasing(&r.eps_laplacians(), WIGGLE),
            cross_decreasing: R::decreasing(&r.cross_terms(), WIGGLE),
            h1_decreasing: R::decreasing(&h1, WIGGLE),
            energy_gap_decreasing: R::decreasing(&gaps, WIGGLE),
            slope,
            slope_ok: (slope - 2.0).abs() <= 0.1,
            relative_gap,
            energy_limit_ok: relative_gap <= 1e-3,
        }
    }
}

fn verify(cfg: &RunConfig, opts: &RunOptions, report: &mut RunReport) -> Result<()> {
    let path: &Path = opts.field.as_deref().ok_or_else(|| anyhow!("verify: no field file given"))?;
    let p = problem(cfg, opts, report)?;
    let u = report.stage("load", |_| Field::load_vfd(path).with_context(|| format!("loading {}", path.display())))?;
    if !u.grid().same_as(p.grid()) {
        bail!("{} is on a {}-point grid, the config uses {}", path.display(), u.grid().n(), p.grid().n());
    }
    let tol = cfg.solve_options().tolerance(&p);
    let (s, _) = report.stage("system", |_| summarize(&p, &u, tol))?;
    report.flag("critical_point", s.is_critical());
    report.flag("equivalence", s.equivalence_holds());
    report.flag("quantization", s.flux_quantized());
    report.result("field", json!(path.display().to_string()));
    report.result("summary", &s);
    Ok(())
}
