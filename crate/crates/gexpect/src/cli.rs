//! Command-line front end: config loading, run-metadata capture, CSV/JSON
//! emission, and exit-code policy (0 success/pass, 1 usage/config error,
//! 2 verification failure, 3 indeterminate, 4 numerical precondition
//! failure).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::core::{GCoefficients, ScalarField, SpaceGrid, SpaceTimeField, TimeGrid};
use crate::csvio::{fmt_scalar, write_field};
use crate::decompose::{extract_decomposition, penalized_iterate};
use crate::error::{GxError, Result};
use crate::gbsde::{pathwise_k, solve_gbsde};
use crate::pde::{g_normal_expectation, solve_terminal_pde, supersolution_residual, PdeProblem};
use crate::scenario::{
    estimate_upper_expectation, sample_path, RNG_SCHEME,
};
use crate::verify::{check_supermartingale, default_tol, EquivalenceVerdict, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser)]
#[command(name = "gexpect", version = VERSION, about = "Numerical engine for sublinear (G-)expectation calculus: nonlinear PDE, volatility-controlled Monte Carlo, supermartingale decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sublinear expectation of a payoff of the canonical process at T
    Gexpect(CommonArgs),
    /// Solve the terminal-value nonlinear PDE and emit the value field
    Pde(CommonArgs),
    /// Solve the backward equation; emit value and Z fields plus K statistics
    Gbsde(CommonArgs),
    /// Simulate controlled paths and estimate the upper expectation
    Paths(CommonArgs),
    /// Penalization sweep and decomposition extraction for a candidate field
    Decompose(CommonArgs),
    /// Supermartingale / supersolution verification of a candidate field
    Verify(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Configuration file (sectioned key=value, or JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config entry: section.key=value (repeatable)
    #[arg(long = "set")]
    pub set: Vec<String>,
    /// Output directory (overrides [io] out_dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread count (wall time only; results are identical)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed (overrides [mc] master_seed)
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parse argv and run; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Gexpect(a) => ("gexpect", a),
        Command::Pde(a) => ("pde", a),
        Command::Gbsde(a) => ("gbsde", a),
        Command::Paths(a) => ("paths", a),
        Command::Decompose(a) => ("decompose", a),
        Command::Verify(a) => ("verify", a),
    };
    if let Some(n) = args.threads {
        // build_global fails if a pool already exists; results never depend
        // on the worker count, so that is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(name, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &GxError) -> i32 {
    match e {
        GxError::Config(_) | GxError::Parse(_) | GxError::InvalidParameter(_) | GxError::Io(_) => {
            EXIT_USAGE
        }
        GxError::CflViolation { .. }
        | GxError::Precondition(_)
        | GxError::OutsideMargin(_)
        | GxError::NonFinite(_)
        | GxError::GridMismatch(_) => EXIT_NUMERICAL,
    }
}

struct Run {
    cfg: RunConfig,
    out_dir: PathBuf,
    digest: String,
}

impl Run {
    fn prepare(args: &CommonArgs) -> Result<Self> {
        let text = fs::read_to_string(&args.config)?;
        let mut cfg = RunConfig::parse(&text)?;
        for s in &args.set {
            cfg.apply_set(s)?;
        }
        if let Some(seed) = args.seed {
            cfg.apply_set(&format!("mc.master_seed={}", seed))?;
        }
        let out_dir = args
            .out
            .clone()
            .or_else(|| cfg.out_dir().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("gexpect_out"));
        fs::create_dir_all(&out_dir)?;
        let digest = cfg.digest();
        fs::write(out_dir.join("config.canonical"), cfg.canonical())?;
        fs::write(out_dir.join("version.txt"), format!("gexpect {}\n", VERSION))?;
        Ok(Self {
            cfg,
            out_dir,
            digest,
        })
    }

    fn provenance_header(&self, space: &SpaceGrid<f64>, time: &TimeGrid<f64>) -> String {
        format!(
            "## config_sha256 = {}\n## version = gexpect {}\n## grid = x_min={} x_max={} nx={} T={} nt={}\n",
            self.digest,
            VERSION,
            fmt_scalar(space.x_min()),
            fmt_scalar(space.x_max()),
            space.n_points(),
            fmt_scalar(time.horizon()),
            time.n_steps()
        )
    }

    fn write_field_csv(
        &self,
        name: &str,
        field: &SpaceTimeField<f64>,
    ) -> Result<()> {
        let path = self.out_dir.join(name);
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        w.write_all(self.provenance_header(field.space(), field.time()).as_bytes())?;
        write_field(field, w)
    }

    fn write_report(&self, name: &str, mut body: serde_json::Map<String, Value>) -> Result<()> {
        body.insert("schema".into(), json!(1));
        body.insert("version".into(), json!(format!("gexpect {}", VERSION)));
        body.insert("config_sha256".into(), json!(self.digest));
        let text = serde_json::to_string_pretty(&Value::Object(body))
            .map_err(|e| GxError::Parse(format!("report serialization: {}", e)))?;
        fs::write(self.out_dir.join(name), text + "\n")?;
        Ok(())
    }

    fn grid_json(&self, space: &SpaceGrid<f64>, time: &TimeGrid<f64>) -> Value {
        json!({
            "x_min": space.x_min(),
            "x_max": space.x_max(),
            "nx": space.n_points(),
            "T": time.horizon(),
            "nt": time.n_steps(),
        })
    }
}

fn dispatch(name: &str, args: &CommonArgs) -> Result<i32> {
    let run = Run::prepare(args)?;
    match name {
        "gexpect" => cmd_gexpect(&run),
        "pde" => cmd_pde(&run),
        "gbsde" => cmd_gbsde(&run),
        "paths" => cmd_paths(&run),
        "decompose" => cmd_decompose(&run),
        "verify" => cmd_verify(&run),
        _ => unreachable!(),
    }
}

fn cmd_gexpect(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let space = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let payoff = cfg.payoff()?;
    let x0 = cfg.x0()?;
    let phi = ScalarField::sample(space, payoff.f.as_ref())?;
    let value = g_normal_expectation(&phi, time.horizon(), x0, &gc, &space, &time)?;
    let tol = 1e-3;
    let mut body = serde_json::Map::new();
    body.insert("payoff".into(), json!(payoff.name));
    body.insert("x0".into(), json!(x0));
    body.insert("value".into(), json!(value));
    body.insert("tolerance".into(), json!(tol));
    body.insert("grid".into(), run.grid_json(&space, &time));
    run.write_report("gexpect_report.json", body)?;
    println!("gexpect {} = {} ± {}", payoff.name, fmt_scalar(value), fmt_scalar(tol));
    Ok(EXIT_OK)
}

fn cmd_pde(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let space = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let gen = cfg.generator()?;
    let coeffs = cfg.coefficients()?;
    let payoff = cfg.payoff()?;
    let x0 = cfg.x0()?;
    let terminal = ScalarField::sample(space, payoff.f.as_ref())?;
    let p = PdeProblem::new(gc, coeffs, gen, terminal, time, space)?;
    let u = solve_terminal_pde(&p)?;
    let value = u.interp_x(0, x0);
    run.write_field_csv("pde_u.csv", &u)?;
    let mut body = serde_json::Map::new();
    body.insert("payoff".into(), json!(payoff.name));
    body.insert("value_at_origin".into(), json!(value));
    body.insert("sup_norm".into(), json!(u.sup_norm()));
    body.insert("grid".into(), run.grid_json(&space, &time));
    run.write_report("pde_report.json", body)?;
    println!(
        "pde {}: u(0, {}) = {} (sup |u| = {})",
        payoff.name,
        fmt_scalar(x0),
        fmt_scalar(value),
        fmt_scalar(u.sup_norm())
    );
    Ok(EXIT_OK)
}

fn cmd_gbsde(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let space = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let gen = cfg.generator()?;
    let coeffs = cfg.coefficients()?;
    let payoff = cfg.payoff()?;
    let x0 = cfg.x0()?;
    let terminal = ScalarField::sample(space, payoff.f.as_ref())?;
    let sol = solve_gbsde(&coeffs, &gen, &gc, terminal, time, space)?;
    run.write_field_csv("gbsde_u.csv", &sol.u)?;
    run.write_field_csv("gbsde_z.csv", &sol.z)?;

    // K statistics over a small sample per configured control
    let controls = cfg.controls(gc, &time, Some(&sol.u))?;
    let seed = cfg.master_seed()?;
    let n_sample = cfg.get_usize_or("mc", "k_sample_paths", 50)?;
    let mut k_stats = Vec::new();
    let mut worst_increment: f64 = 0.0;
    for (ci, ctrl) in controls.iter().enumerate() {
        let mut kt_sum = 0.0;
        let mut max_inc: f64 = 0.0;
        for p in 0..n_sample {
            let path = sample_path(ctrl, &coeffs, x0, &time, seed, (ci * n_sample + p) as u64)?;
            let pk = pathwise_k(&sol, &gen, &path)?;
            kt_sum += *pk.k.last().unwrap();
            max_inc = max_inc.max(pk.max_positive_increment);
        }
        worst_increment = worst_increment.max(max_inc);
        k_stats.push(json!({
            "control": ctrl.describe(),
            "mean_K_T": kt_sum / n_sample as f64,
            "max_positive_increment": max_inc,
            "paths": n_sample,
        }));
    }
    let value = sol.u.interp_x(0, x0);
    let mut body = serde_json::Map::new();
    body.insert("payoff".into(), json!(payoff.name));
    body.insert("value_at_origin".into(), json!(value));
    body.insert("k_statistics".into(), json!(k_stats));
    body.insert("k_note".into(), json!("checked on sampled controls only"));
    body.insert("z_note".into(), json!("two outermost columns unreliable (one-sided differences)"));
    body.insert("grid".into(), run.grid_json(&space, &time));
    run.write_report("gbsde_report.json", body)?;
    println!(
        "gbsde {}: u(0, {}) = {}, max positive K increment = {}",
        payoff.name,
        fmt_scalar(x0),
        fmt_scalar(value),
        fmt_scalar(worst_increment)
    );
    Ok(EXIT_OK)
}

fn cmd_paths(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let time = cfg.time_grid()?;
    let coeffs = cfg.coefficients()?;
    let payoff = cfg.payoff()?;
    let x0 = cfg.x0()?;
    let n_paths = cfg.n_paths()?;
    let seed = cfg.master_seed()?;
    let controls = cfg.controls(gc, &time, None)?;
    let est = estimate_upper_expectation(
        payoff.f.as_ref(),
        &controls,
        &coeffs,
        x0,
        &time,
        n_paths,
        seed,
    )?;

    // one illustrative path CSV per control
    let emit = cfg.get_usize_or("mc", "emit_paths", 1)?;
    for (ci, ctrl) in controls.iter().enumerate() {
        for p in 0..emit {
            let path = sample_path(ctrl, &coeffs, x0, &time, seed, p as u64)?;
            let mut text = format!(
                "## config_sha256 = {}\n## version = gexpect {}\n",
                run.digest, VERSION
            );
            let _ = writeln!(text, "## control = {}", ctrl.describe());
            let _ = writeln!(text, "## seed = {} path_index = {}", seed, p);
            let _ = writeln!(text, "# t, h, B, QV, X");
            for i in 0..=time.n_steps() {
                // h is per-step; the terminal row repeats the last level
                let h = path.h[i.min(time.n_steps() - 1)];
                let _ = writeln!(
                    text,
                    "{}, {}, {}, {}, {}",
                    fmt_scalar(time.t(i)),
                    fmt_scalar(h),
                    fmt_scalar(path.b[i]),
                    fmt_scalar(path.qv[i]),
                    fmt_scalar(path.x[i])
                );
            }
            fs::write(
                run.out_dir.join(format!("paths_path_c{}_p{}.csv", ci, p)),
                text,
            )?;
        }
    }
    let mut body = serde_json::Map::new();
    body.insert("payoff".into(), json!(payoff.name));
    body.insert("value".into(), json!(est.value));
    body.insert("stderr".into(), json!(est.stderr));
    body.insert("control".into(), json!(est.control_descriptor));
    body.insert("per_control_means".into(), json!(est.per_control));
    body.insert("n_paths".into(), json!(est.n_paths));
    body.insert("seed".into(), json!(seed));
    body.insert("rng".into(), json!(RNG_SCHEME));
    body.insert(
        "bound_side".into(),
        json!(match est.bound_side {
            crate::scenario::BoundSide::Lower => "lower",
            crate::scenario::BoundSide::Matched => "matched",
        }),
    );
    run.write_report("paths_report.json", body)?;
    println!(
        "paths {}: sup estimate = {} ± {} (control {}, {} paths)",
        payoff.name,
        fmt_scalar(est.value),
        fmt_scalar(est.stderr),
        est.control_descriptor,
        est.n_paths
    );
    Ok(EXIT_OK)
}

/// Candidate fields for decompose/verify: a closed analytic registry plus a
/// `csv:<path>` escape hatch (accepted with a warning: growth/continuity
/// hypotheses cannot be checked for arbitrary inputs).
fn candidate_field(
    spec: &str,
    gc: &GCoefficients<f64>,
    time: TimeGrid<f64>,
    space: SpaceGrid<f64>,
) -> Result<(SpaceTimeField<f64>, bool)> {
    let horizon = time.horizon();
    let s2 = gc.sigma_high_sq();
    let spec = spec.trim();
    if let Some(path) = spec.strip_prefix("csv:") {
        eprintln!("warning: CSV candidate accepted unchecked (continuity/growth hypotheses not verified)");
        let u = crate::csvio::read_field_from_path::<f64>(Path::new(path.trim()))?;
        return Ok((u, false));
    }
    let (f, kink): (Box<dyn Fn(f64, f64) -> f64>, bool) = match spec {
        "neg_square" => (Box::new(|_, x| -x * x), false),
        "square" => (Box::new(|_, x| x * x), false),
        "compensated_square" => (Box::new(move |t, x| x * x + s2 * (horizon - t)), false),
        "abs" => (Box::new(|_, x: f64| x.abs()), true),
        _ => {
            if let Some(args) = spec
                .strip_prefix("neg_square_drift")
                .and_then(|s| s.trim().strip_prefix('('))
                .and_then(|s| s.strip_suffix(')'))
            {
                let c: f64 = args.trim().parse().map_err(|_| {
                    GxError::Config(format!("bad candidate argument {:?}", args))
                })?;
                (Box::new(move |t, x| -x * x - c * (horizon - t)), false)
            } else {
                return Err(GxError::Config(format!("unknown candidate {:?}", spec)));
            }
        }
    };
    Ok((SpaceTimeField::sample(time, space, f)?, kink))
}

fn cmd_decompose(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let space = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let gen = cfg.generator()?;
    let coeffs = cfg.coefficients()?;
    let target_spec = cfg.get_or("decompose", "target", "neg_square").to_string();
    let (u, _) = candidate_field(&target_spec, &gc, time, space)?;
    let schedule = cfg.schedule()?;
    let gap_tol = cfg.gap_tol()?;
    let (_, report) = penalized_iterate(&u, &gen, &coeffs, &gc, &schedule, gap_tol)?;
    let d = extract_decomposition(&u, &gen, &coeffs, &gc, &report)?;
    run.write_field_csv("decompose_z.csv", &d.z)?;
    run.write_field_csv("decompose_rho.csv", &d.rho)?;
    run.write_field_csv("decompose_kappa.csv", &d.kappa)?;

    // per-path A series, one column per configured control (path index =
    // control index)
    let controls = cfg.controls(gc, &time, Some(&u))?;
    let seed = cfg.master_seed()?;
    let x0 = cfg.get_f64_or("decompose", "x0", 0.0)?;
    let mut series = Vec::new();
    for (ci, ctrl) in controls.iter().enumerate() {
        let path = sample_path(ctrl, &coeffs, x0, &time, seed, ci as u64)?;
        series.push((ctrl.describe(), d.pathwise_a(&path)?));
    }
    {
        let mut text = format!(
            "## config_sha256 = {}\n## version = gexpect {}\n",
            run.digest, VERSION
        );
        let mut header = String::from("# t");
        for (desc, _) in &series {
            let _ = write!(header, ", A[{}]", desc);
        }
        let _ = writeln!(text, "{}", header);
        for i in 0..=time.n_steps() {
            let mut line = fmt_scalar(time.t(i));
            for (_, a) in &series {
                let _ = write!(line, ", {}", fmt_scalar(a[i]));
            }
            let _ = writeln!(text, "{}", line);
        }
        fs::write(run.out_dir.join("decompose_a.csv"), text)?;
    }

    let mut body = serde_json::Map::new();
    body.insert("target".into(), json!(target_spec));
    body.insert("schedule".into(), json!(report.schedule));
    body.insert("gaps".into(), json!(report.gaps));
    body.insert("final_gap".into(), json!(report.final_gap));
    body.insert("monotone_in_n".into(), json!(report.monotone_in_n));
    body.insert("below_target".into(), json!(report.below_target));
    body.insert("sup_violation".into(), json!(report.sup_violation));
    body.insert(
        "stop_reason".into(),
        json!(match report.stop_reason {
            crate::decompose::StopReason::ScheduleExhausted => "schedule_exhausted",
            crate::decompose::StopReason::GapConverged => "gap_converged",
        }),
    );
    body.insert("grid".into(), run.grid_json(&space, &time));
    run.write_report("decompose_report.json", body)?;
    println!(
        "decompose {}: final gap = {} at n = {} ({} schedule entries)",
        target_spec,
        fmt_scalar(report.final_gap),
        fmt_scalar(*report.schedule.last().unwrap()),
        report.schedule.len()
    );
    Ok(EXIT_OK)
}

fn cmd_verify(run: &Run) -> Result<i32> {
    let cfg = &run.cfg;
    let gc = cfg.band()?;
    let space = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let gen = cfg.generator()?;
    let coeffs = cfg.coefficients()?;
    let target_spec = cfg.get_or("verify", "target", "neg_square").to_string();
    let (u, kink) = candidate_field(&target_spec, &gc, time, space)?;
    let tol = cfg.verify_tol()?.unwrap_or_else(|| default_tol(&u));
    let pairs = cfg.verify_pairs(&time)?;
    let sm = check_supermartingale(&u, &gen, &coeffs, &gc, &pairs, tol)?;
    let (_, residual_violation) = supersolution_residual(&u, &gc, &coeffs, &gen)?;
    let res_pass = residual_violation <= tol;
    let verdict = match (sm.verdict, res_pass) {
        (Verdict::Pass, true) => EquivalenceVerdict::BothPass,
        (Verdict::Fail, false) => EquivalenceVerdict::BothFail,
        _ => EquivalenceVerdict::Indeterminate,
    };
    let indeterminate_ok =
        sm.worst_violation <= 2.0 * tol && residual_violation <= 2.0 * tol;
    let per_pair: Vec<Value> = sm
        .pairs
        .iter()
        .map(|p| {
            json!({
                "s": p.s,
                "t1": p.t1,
                "violation": p.violation,
                "margin_at_origin": p.margin,
            })
        })
        .collect();
    let (verdict_str, code) = match verdict {
        EquivalenceVerdict::BothPass => ("pass", EXIT_OK),
        EquivalenceVerdict::BothFail => ("fail", EXIT_FAIL),
        EquivalenceVerdict::Indeterminate => ("indeterminate", EXIT_INDETERMINATE),
    };
    let mut body = serde_json::Map::new();
    body.insert("target".into(), json!(target_spec));
    body.insert("verdict".into(), json!(verdict_str));
    body.insert("worst_violation".into(), json!(sm.worst_violation));
    body.insert("residual_violation".into(), json!(residual_violation));
    body.insert("tol".into(), json!(tol));
    body.insert("per_pair".into(), json!(per_pair));
    body.insert(
        "note".into(),
        json!("no violation found at this resolution; finite battery, not a proof"),
    );
    if kink {
        body.insert(
            "kink_flag".into(),
            json!("candidate has a kink; residual is a smooth-point check only"),
        );
    }
    if verdict == EquivalenceVerdict::Indeterminate && !indeterminate_ok {
        body.insert(
            "disagreement".into(),
            json!("the two checks disagree outside the tolerance band"),
        );
    }
    body.insert("grid".into(), run.grid_json(&space, &time));
    run.write_report("verify_report.json", body)?;
    println!(
        "verify {}: {} (worst re-solve violation = {}, residual violation = {}, tol = {})",
        target_spec,
        verdict_str,
        fmt_scalar(sm.worst_violation),
        fmt_scalar(residual_violation),
        fmt_scalar(tol)
    );
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_registry_parses() {
        let gc = GCoefficients::new(0.5, 1.0).unwrap();
        let time = TimeGrid::new(1.0, 10).unwrap();
        let space = SpaceGrid::new(-2.0, 2.0, 5).unwrap();
        for name in ["neg_square", "square", "compensated_square", "abs", "neg_square_drift(0.25)"] {
            let (u, _) = candidate_field(name, &gc, time, space).unwrap();
            assert_eq!(u.space().n_points(), 5);
        }
        assert!(candidate_field("mystery", &gc, time, space).is_err());
        let (_, kink) = candidate_field("abs", &gc, time, space).unwrap();
        assert!(kink);
        let (u, _) = candidate_field("compensated_square", &gc, time, space).unwrap();
        assert!((u.at(0, 4) - (4.0 + 1.0)).abs() < 1e-12);
    }
}
