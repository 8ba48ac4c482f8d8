use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use ssnkit::catalog::ProxFn;
use ssnkit::diagnostics::{basis_pursuit_dual, diagnose as run_diagnostics, sc_check_drs, DiagnosticsReport, Verdict};
use ssnkit::exec::Execution;
use ssnkit::experiments::{lasso_solution, warm_point};
use ssnkit::manifold::SupportManifold;
use ssnkit::problems::{save_instance, ProblemInstance};
use ssnkit::residual::{ResidualKind, ResidualSystem};
use ssnkit::solver::{projected_ssn_solve, rate_estimate, ssn_solve, RateEstimate, SolveTrace, TerminalStatus};
use ssnkit::verify::{run_suite, Suite};
use ssnkit::Vector;

use crate::config::{parse_support, ExperimentConfig, ManifoldChoice, ProblemSpec};
use crate::output::{num, table, Header, OutDir};
use crate::{CliError, RunArgs};

use CliError::{Config, Failed};

/// Config from `--config`, a preset or an instance file, then flag overrides.
fn resolve(run: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = if let Some(path) = &run.config {
        ExperimentConfig::load(path).map_err(Config)?
    } else if let Some(e) = run.experiment {
        ExperimentConfig::preset(e, run.seed.unwrap_or(0))
    } else if let Some(path) = &run.instance {
        ExperimentConfig::for_file(path.clone())
    } else {
        return Err(Config("one of --config, --experiment or --instance is required".into()));
    };
    if let Some(path) = &run.instance {
        cfg.problem = ProblemSpec::File { path: path.clone() };
    }
    if let Some(s) = run.seed {
        match &mut cfg.problem {
            ProblemSpec::Generator { seed, .. } => *seed = s,
            ProblemSpec::File { .. } => {
                return Err(Config("--seed applies to generated problems; an instance file fixes its own seed".into()))
            }
        }
    }
    if let Some(r) = run.residual {
        cfg.residual = Some(r.into());
    }
    if let Some(tol) = run.tol {
        cfg.solver.tol_residual = tol;
    }
    if let Some(k) = run.max_iters {
        cfg.solver.max_iters = k;
    }
    if let Some(s) = &run.manifold_support {
        cfg.manifold = Some(ManifoldChoice::Support(parse_support(s).map_err(Config)?));
    }
    if let Some(dir) = &run.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.header = None;
    cfg.validate().map_err(Config)?;
    Ok(cfg)
}

struct Prepared {
    cfg: ExperimentConfig,
    inst: ProblemInstance,
    sys: ResidualSystem,
    manifold: Option<SupportManifold>,
    seed: u64,
}

fn prepare(run: &RunArgs) -> Result<Prepared, CliError> {
    let mut cfg = resolve(run)?;
    let inst = cfg.instance().map_err(Config)?;
    let kind = cfg.residual_kind(&inst);
    cfg.residual = Some(kind);
    let sys = inst
        .residual_system(kind, cfg.step)
        .map_err(|e| Config(format!("residual {kind}: {e}")))?;
    let manifold = cfg.resolve_manifold(&inst).map_err(Config)?;
    let seed = cfg.seed(&inst);
    cfg.header = Some(Header::new(seed));
    Ok(Prepared { cfg, inst, sys, manifold, seed })
}

struct Solved {
    trace: SolveTrace,
    warm_residual: f64,
    wall_time_ms: f64,
}

fn run_solver(p: &Prepared) -> Result<Solved, CliError> {
    let opts = p.cfg.experiment_options();
    let start = Instant::now();
    let x0 = warm_point(&p.sys, p.manifold.as_ref(), &opts).map_err(|e| Failed(format!("warm start: {e}")))?;
    let warm_residual = p.sys.eval(&x0).map_err(|e| Failed(e.to_string()))?.norm();
    let trace = match &p.manifold {
        Some(m) => projected_ssn_solve(&p.sys, m, &x0, &opts.solver),
        None => ssn_solve(&p.sys, &x0, &opts.solver),
    }
    .map_err(|e| Failed(format!("solver: {e}")))?;
    Ok(Solved { trace, warm_residual, wall_time_ms: start.elapsed().as_secs_f64() * 1e3 })
}

#[derive(Serialize)]
struct DualSummary {
    dual_inf_norm: f64,
    /// `1 − ‖Aᵀy‖_∞`.
    dual_margin: f64,
    primal_infeasibility: f64,
    /// Present when the final point passes the stationarity tolerance.
    pattern_holds: Option<bool>,
}

#[derive(Serialize)]
struct SolveSummary {
    residual: ResidualKind,
    status: TerminalStatus,
    terminal_residual: f64,
    iterations: usize,
    warm_residual: f64,
    q_hat: Option<f64>,
    superlinear: bool,
    rate: RateEstimate,
    manifold_support: Option<Vec<usize>>,
    wall_time_ms: f64,
    dual: Option<DualSummary>,
    warnings: Vec<String>,
}

/// Primal point of the run: `x_final`, or `prox_{th}(z)` for DRS.
fn primal_point(sys: &ResidualSystem, x: &Vector) -> Result<Vector, CliError> {
    match sys {
        ResidualSystem::Drs(d) => d.primal(x).map_err(|e| Failed(e.to_string())),
        _ => Ok(x.clone()),
    }
}

fn dual_summary(p: &Prepared, z: &Vector) -> Option<DualSummary> {
    let ResidualSystem::Drs(d) = &p.sys else { return None };
    let ProxFn::AffineIndicator(c) = d.f() else { return None };
    let (x, y) = basis_pursuit_dual(d, z).ok()?;
    let aty = (c.a().transpose() * y).amax();
    Some(DualSummary {
        dual_inf_norm: aty,
        dual_margin: 1.0 - aty,
        primal_infeasibility: c.violation(&x),
        pattern_holds: sc_check_drs(d, z, &p.cfg.tolerances).ok().map(|s| s.pattern_holds),
    })
}

/// Per-coordinate complementarity data: `λ − |∇f(x)_i|` for an L1 natural
/// residual, `1 − |Aᵀy|_i` for DRS.
fn sc_gap_rows(p: &Prepared, point: &Vector) -> Option<(&'static str, Vec<f64>)> {
    match (&p.sys, p.sys.h()) {
        (ResidualSystem::Drs(d), _) => {
            let ProxFn::AffineIndicator(c) = d.f() else { return None };
            let (_, y) = basis_pursuit_dual(d, point).ok()?;
            let aty = c.a().transpose() * y;
            Some(("dual_slack", aty.iter().map(|v| 1.0 - v.abs()).collect()))
        }
        (_, ProxFn::L1 { lambda, .. }) => {
            let g = p.sys.quadratic()?.gradient(point);
            Some(("sc_gap", g.iter().map(|v| lambda - v.abs()).collect()))
        }
        _ => None,
    }
}

fn write_plots(out: &mut OutDir, p: &Prepared, trace: &SolveTrace) -> Result<(), CliError> {
    let rows = trace.iterations.iter().map(|r| [r.k.to_string(), num(r.res_norm.log10())]);
    out.csv("plot_residual.csv", &table(["k", "log10_resF"], rows)).map_err(Failed)?;

    let x = primal_point(&p.sys, &trace.x_final())?;
    let truth = p.inst.ground_truth.as_ref();
    let rows = (0..x.len()).map(|i| [i.to_string(), num(x[i]), truth.map_or(String::new(), |u| num(u[i]))]);
    out.csv("plot_solution.csv", &table(["i", "x", "ground_truth"], rows)).map_err(Failed)?;

    if let Some((name, vals)) = sc_gap_rows(p, &trace.x_final()) {
        let rows = vals.iter().enumerate().map(|(i, v)| [i.to_string(), num(*v)]);
        out.csv("plot_sc_gap.csv", &table(["i", name], rows)).map_err(Failed)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    trace: &'a SolveTrace,
}

pub fn solve(run: &RunArgs) -> Result<(), CliError> {
    let p = prepare(run)?;
    let mut out = OutDir::create(&p.cfg.out_dir, Header::new(p.seed)).map_err(Failed)?;
    out.raw_json("resolved_config.json", &p.cfg).map_err(Failed)?;
    let solved = run_solver(&p)?;
    let trace = &solved.trace;

    out.csv("trace.csv", &trace.to_csv()).map_err(Failed)?;
    out.json("trace.json", &TraceDoc { trace }).map_err(Failed)?;
    write_plots(&mut out, &p, trace)?;

    let rate = rate_estimate(trace);
    let summary = SolveSummary {
        residual: trace.residual,
        status: trace.status,
        terminal_residual: trace.final_residual(),
        iterations: trace.steps(),
        warm_residual: solved.warm_residual,
        q_hat: rate.order,
        superlinear: rate.superlinear,
        rate,
        manifold_support: p.manifold.as_ref().map(|m| m.support().to_vec()),
        wall_time_ms: solved.wall_time_ms,
        dual: dual_summary(&p, &trace.x_final()),
        warnings: trace.warnings.clone(),
    };
    out.json("summary.json", &summary).map_err(Failed)?;

    println!(
        "{} residual: status {:?}, ‖F‖ = {:.3e} after {} iterations, q̂ = {}, superlinear = {}",
        summary.residual,
        summary.status,
        summary.terminal_residual,
        summary.iterations,
        summary.q_hat.map_or("n/a".into(), |q| format!("{q:.3}")),
        summary.superlinear
    );
    for path in out.written() {
        println!("wrote {}", path.display());
    }
    if trace.status != TerminalStatus::Converged {
        return Err(Failed(format!(
            "solver stopped with status {:?} at ‖F‖ = {:.3e}",
            trace.status,
            trace.final_residual()
        )));
    }
    Ok(())
}

fn floats(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

/// A JSON array, or an object holding `x_final` (possibly under `trace`)
/// or `x`.
fn load_point(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Config(format!("{}: {e}", path.display())))?;
    floats(&v)
        .or_else(|| v.get("x_final").and_then(floats))
        .or_else(|| v.get("trace").and_then(|t| t.get("x_final")).and_then(floats))
        .or_else(|| v.get("x").and_then(floats))
        .ok_or_else(|| Config(format!("{}: expected an array of numbers or an object with x_final", path.display())))
}

#[derive(Serialize)]
struct DiagnoseDoc<'a> {
    point_source: &'a str,
    x: Vec<f64>,
    report: &'a DiagnosticsReport,
}

/// Candidate point: `--point`, the instance's known solution, a
/// high-accuracy reference solve for quadratic + L1 natural residuals, or
/// the final iterate of the configured solve.
fn candidate(p: &Prepared, point: Option<&Path>) -> Result<(Vector, &'static str), CliError> {
    if let Some(path) = point {
        let x = load_point(path)?;
        if x.len() != p.sys.dim() {
            return Err(Config(format!("point has {} entries, instance dimension is {}", x.len(), p.sys.dim())));
        }
        return Ok((Vector::from_vec(x), "file"));
    }
    if let (Some(x), false) = (&p.inst.solution, p.sys.kind() == ResidualKind::Drs) {
        return Ok((x.clone(), "known_solution"));
    }
    if p.sys.kind() == ResidualKind::Pgm && matches!(p.sys.h(), ProxFn::L1 { .. }) && p.manifold.is_none() {
        let x = lasso_solution(&p.inst).map_err(|e| Failed(format!("reference solve: {e}")))?;
        return Ok((x, "reference_solve"));
    }
    Ok((run_solver(p)?.trace.x_final(), "solver_final_iterate"))
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3e}"))
}

fn print_table(r: &DiagnosticsReport) {
    let verdict = |v: Verdict| match v {
        Verdict::Regular => "regular",
        Verdict::NotRegular => "not regular",
        Verdict::Undetermined => "undetermined",
    };
    println!("{:<24} {:<16} margin", "check", "verdict");
    println!("{:<24} {:<16} {:.3e}", "stationarity", if r.stationary { "stationary" } else { "VIOLATED" }, r.stationarity);
    if let Some(bd) = &r.bd {
        println!("{:<24} {:<16} {:.3e}", "bd_regularity", verdict(bd.verdict), bd.margin);
    }
    if let Some(sc) = &r.sc {
        println!("{:<24} {:<16} {:.3e}", "strict_complementarity", if sc.holds { "holds" } else { "fails" }, sc.gap);
    }
    if let Some(bp) = &r.basis_pursuit {
        println!("{:<24} {:<16} {:.3e}", "dual_inf_norm", if bp.pattern_holds { "pattern holds" } else { "pattern fails" }, bp.dual_inf_norm);
    }
    println!("{:<24} {:<16} {}", "invertibility", "", opt_num(r.invertibility_margin));
    if let Some(eb) = &r.error_bound {
        println!("{:<24} {:<16} {:.3e} (L̂ {:.3e})", "error_bound_gamma", if eb.gamma_hat > 0.0 { "positive" } else { "zero" }, eb.gamma_hat, eb.lipschitz_hat);
    }
    println!("{:<24} {:<16} {}", "smoothness_full", "", opt_num(r.smoothness.as_ref().map(|s| s.deviation)));
    println!("{:<24} {:<16} {}", "smoothness_manifold", "", opt_num(r.smoothness_restricted.as_ref().map(|s| s.deviation)));
    for note in &r.notes {
        println!("note: {note}");
    }
}

pub fn diagnose(run: &RunArgs, point: Option<&Path>) -> Result<(), CliError> {
    let p = prepare(run)?;
    let (x, source) = candidate(&p, point)?;
    let oracle = p.inst.solution_set(&x);
    let report = run_diagnostics(
        &p.sys,
        &x,
        &p.inst.f,
        oracle.as_ref().map(|o| o as &dyn ssnkit::diagnostics::DistanceOracle),
        &p.cfg.diagnostics,
        &p.cfg.tolerances,
        Execution::default(),
    )
    .map_err(|e| Failed(format!("diagnostics: {e}")))?;
    let mut out = OutDir::create(&p.cfg.out_dir, Header::new(p.seed)).map_err(Failed)?;
    out.raw_json("resolved_config.json", &p.cfg).map_err(Failed)?;
    out.json("diagnostics.json", &DiagnoseDoc { point_source: source, x: x.as_slice().to_vec(), report: &report })
        .map_err(Failed)?;
    println!("point: {source}");
    print_table(&report);
    for path in out.written() {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn verify(suite: Suite, out_dir: Option<&Path>) -> Result<(), CliError> {
    let report = run_suite(suite, Execution::default()).map_err(|e| Failed(format!("suite {suite}: {e}")))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failed(e.to_string()))?;
    println!("{text}");
    if let Some(dir) = out_dir {
        let mut out = OutDir::create(dir, Header::new(report.seed)).map_err(Failed)?;
        out.raw_json(&format!("verify_{suite}.json"), &report).map_err(Failed)?;
    }
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Failed(format!("suite {suite} failed: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn gen(run: &RunArgs, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(run)?;
    let inst = cfg.instance().map_err(Config)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Failed(e.to_string()))?;
            cfg.out_dir.join("instance.json")
        }
    };
    save_instance(&inst, &path).map_err(|e| Failed(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}
