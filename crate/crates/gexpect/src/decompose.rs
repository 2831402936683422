//! Penalization scheme driving the penalized solutions v^n up to a
//! supermartingale candidate u, and extraction of the unique decomposition
//! (Z, A): `Y_t = Y_0 - int g ds + int Z dB - A_t` with A nondecreasing,
//! `A_0 = 0`. A is delivered as rate fields (rho, kappa) plus a pathwise
//! evaluator because it is control-dependent through the quadratic
//! variation: `dA = -(rho + kappa h^2) dt` along a path.

use rayon::prelude::*;

use crate::core::{CoefficientSpec, GCoefficients, GeneratorSpec, SpaceTimeField};
use crate::error::{GxError, Result};
use crate::pde::{solve_terminal_pde, z_field, PdeProblem};
use crate::real::{real, Real};
use crate::scenario::ScenarioPath;

/// Why the penalization schedule stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ScheduleExhausted,
    GapConverged,
}

/// Convergence diagnostics of the penalization sweep.
#[derive(Debug, Clone)]
pub struct PenalizationReport<R: Real> {
    /// Penalty parameters actually run, in order.
    pub schedule: Vec<R>,
    /// `sup (u - v^n)^+` per schedule entry.
    pub gaps: Vec<R>,
    /// Gaps nonincreasing along the schedule (up to tolerance).
    pub monotone_in_n: bool,
    /// `v^n <= u` held (up to tolerance) for every n.
    pub below_target: bool,
    /// Largest violation of `v^n <= u` observed over the whole sweep.
    pub sup_violation: R,
    pub final_gap: R,
    pub stop_reason: StopReason,
}

/// Run the penalized solves `v^n` for each `n` in the schedule (geometric by
/// default). Stops early once the gap falls below `gap_tol * (1 + ||u||)`;
/// pass `gap_tol = 0` to force the full schedule.
pub fn penalized_iterate<R: Real>(
    target: &SpaceTimeField<R>,
    gen: &GeneratorSpec<R>,
    coeffs: &CoefficientSpec<R>,
    gc: &GCoefficients<R>,
    schedule: &[R],
    gap_tol: R,
) -> Result<(Vec<SpaceTimeField<R>>, PenalizationReport<R>)> {
    if schedule.is_empty() {
        return Err(GxError::InvalidParameter("empty penalty schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] < R::zero() {
        return Err(GxError::InvalidParameter(
            "penalty schedule must be nonnegative and strictly increasing".into(),
        ));
    }
    let scale = R::one() + target.sup_norm();
    let terminal = target.slice(target.time().n_steps());

    let mut fields: Vec<SpaceTimeField<R>> = Vec::new();
    let mut gaps: Vec<R> = Vec::new();
    let mut ran: Vec<R> = Vec::new();
    let mut sup_violation = R::zero();
    let mut stop_reason = StopReason::ScheduleExhausted;

    for &n in schedule {
        let p = PdeProblem::new(
            *gc,
            coeffs.clone(),
            gen.clone(),
            terminal.clone(),
            *target.time(),
            *target.space(),
        )?
        .with_penalty(n, target)?;
        let v = solve_terminal_pde(&p)?;
        let gap = target.sup_diff(&v)?.max(R::zero());
        let violation = v.sup_diff(target)?.max(R::zero());
        sup_violation = sup_violation.max(violation);
        gaps.push(gap);
        ran.push(n);
        fields.push(v);
        if gap_tol > R::zero() && gap < gap_tol * scale {
            stop_reason = StopReason::GapConverged;
            break;
        }
    }

    let mono_tol = real::<R>(1e-9) * scale;
    let monotone_in_n = gaps.windows(2).all(|w| w[1] <= w[0] + mono_tol);
    let below_tol = real::<R>(1e-6) * scale;
    let report = PenalizationReport {
        schedule: ran,
        final_gap: *gaps.last().unwrap(),
        gaps,
        monotone_in_n,
        below_target: sup_violation <= below_tol,
        sup_violation,
        stop_reason,
    };
    Ok((fields, report))
}

/// Default geometric schedule `base^0, base^1, ..., base^k` capped at `max`.
pub fn geometric_schedule<R: Real>(base: u32, max: u32) -> Vec<R> {
    let mut out = Vec::new();
    let mut n: u64 = 1;
    while n <= max as u64 {
        out.push(real::<R>(n as f64));
        n *= base as u64;
    }
    out
}

/// The decomposition of a supermartingale candidate: Z field plus the rate
/// fields of the nondecreasing compensator A.
#[derive(Debug, Clone)]
pub struct DecompositionResult<R: Real> {
    pub u: SpaceTimeField<R>,
    pub z: SpaceTimeField<R>,
    /// `rho = Dt u + b Du + g(t, x, u, z)`: the dt-rate of -A.
    pub rho: SpaceTimeField<R>,
    /// `kappa = sigma^2 D2u / 2 + h Du + f(t, x, u, z)`: the d<B>-rate of -A.
    pub kappa: SpaceTimeField<R>,
    pub diagnostics: PenalizationReport<R>,
}

impl<R: Real> DecompositionResult<R> {
    /// Discrete A series along a path: `A_0 = 0`,
    /// `A_{i+1} = A_i - (rho + kappa h_i^2) dt` at `(t_i, X_i)`.
    pub fn pathwise_a(&self, path: &ScenarioPath<R>) -> Result<Vec<R>> {
        let time = self.u.time();
        if path.time.n_steps() != time.n_steps()
            || (path.time.horizon() - time.horizon()).abs() > time.dt() * real::<R>(1e-9)
        {
            return Err(GxError::GridMismatch(
                "path time grid does not match the decomposition".into(),
            ));
        }
        let dt = time.dt();
        let n = time.n_steps();
        let mut a = Vec::with_capacity(n + 1);
        a.push(R::zero());
        for i in 0..n {
            let xi = path.x[i];
            let rho = self.rho.interp_x(i, xi);
            let kappa = self.kappa.interp_x(i, xi);
            let h2 = path.h[i] * path.h[i];
            a.push(a[i] - (rho + kappa * h2) * dt);
        }
        Ok(a)
    }

    /// Most negative A increment over the path (0 when A is nondecreasing).
    pub fn worst_decrement(&self, path: &ScenarioPath<R>) -> Result<R> {
        let a = self.pathwise_a(path)?;
        Ok(a.windows(2)
            .fold(R::zero(), |m, w| m.min(w[1] - w[0]))
            .min(R::zero()))
    }
}

/// Extract the decomposition (Z, rho, kappa) from a candidate `u` whose
/// penalization report certifies it as a numerical supermartingale
/// representative (final gap below `5e-2 ||u||`).
pub fn extract_decomposition<R: Real>(
    u: &SpaceTimeField<R>,
    gen: &GeneratorSpec<R>,
    coeffs: &CoefficientSpec<R>,
    gc: &GCoefficients<R>,
    report: &PenalizationReport<R>,
) -> Result<DecompositionResult<R>> {
    let _ = gc;
    let accept = real::<R>(5e-2) * u.sup_norm();
    if report.final_gap > accept {
        return Err(GxError::Precondition(format!(
            "penalization gap {} exceeds acceptance gap {}: target is not a supermartingale at this resolution",
            report.final_gap, accept
        )));
    }
    let time = *u.time();
    let space = *u.space();
    let dt = time.dt();
    let dx = space.dx();
    let half = real::<R>(0.5);
    let two = real::<R>(2.0);

    let z = z_field(u, coeffs);
    let mut rho_rows = vec![vec![R::zero(); space.n_points()]; time.n_steps() + 1];
    let mut kappa_rows = rho_rows.clone();
    for i in 0..=time.n_steps() {
        let t = time.t(i);
        for j in 0..space.n_points() {
            let x = space.x(j);
            let row = u.row(i);
            let m = space.n_points();
            let dc = if j == 0 {
                (row[1] - row[0]) / dx
            } else if j == m - 1 {
                (row[m - 1] - row[m - 2]) / dx
            } else {
                (row[j + 1] - row[j - 1]) / (two * dx)
            };
            let d2 = u.second_diff(i, j);
            // forward time difference; backward on the terminal row
            let dt_u = if i < time.n_steps() {
                (u.at(i + 1, j) - u.at(i, j)) / dt
            } else {
                (u.at(i, j) - u.at(i - 1, j)) / dt
            };
            let s = coeffs.sigma.eval(t, x);
            let zz = s * dc;
            let v = row[j];
            let g_val = gen.form().eval(t, x, v, zz);
            let f_val = gen.f_form().map(|f| f.eval(t, x, v, zz));
            rho_rows[i][j] = dt_u + coeffs.b.eval(t, x) * dc + g_val;
            kappa_rows[i][j] = half * s * s * d2
                + coeffs.h.eval(t, x) * dc
                + f_val.unwrap_or(R::zero());
        }
    }
    Ok(DecompositionResult {
        u: u.clone(),
        z,
        rho: SpaceTimeField::new(time, space, rho_rows)?,
        kappa: SpaceTimeField::new(time, space, kappa_rows)?,
        diagnostics: report.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct UniquenessReport<R: Real> {
    pub max_dz: R,
    pub max_da: R,
}

/// Compare two decompositions of the same candidate: max nodal |z1 - z2| and
/// max pathwise |A1 - A2| over the sampled paths.
pub fn verify_uniqueness<R: Real>(
    d1: &DecompositionResult<R>,
    d2: &DecompositionResult<R>,
    paths: &[ScenarioPath<R>],
) -> Result<UniquenessReport<R>> {
    if d1.u != d2.u {
        return Err(GxError::Precondition(
            "decompositions come from different candidates".into(),
        ));
    }
    let max_dz = d1
        .z
        .rows()
        .iter()
        .flatten()
        .zip(d2.z.rows().iter().flatten())
        .fold(R::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    let max_da = paths
        .par_iter()
        .map(|p| {
            let a1 = d1.pathwise_a(p)?;
            let a2 = d2.pathwise_a(p)?;
            Ok(a1
                .iter()
                .zip(&a2)
                .fold(R::zero(), |m, (&x, &y)| m.max((x - y).abs())))
        })
        .collect::<Result<Vec<R>>>()?
        .into_iter()
        .fold(R::zero(), R::max);
    Ok(UniquenessReport { max_dz, max_da })
}
