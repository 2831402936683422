//! Monotone explicit finite-difference solver, backward in time, for the
//! fully nonlinear parabolic operator
//!
//! `dt u + G(sigma^2 D2u + 2 h Du [+ 2 f]) + b Du + g(t, x, u, sigma Du) = 0`
//!
//! with terminal data at `t = T`, an optional penalty term `n (u - target)`
//! treated implicitly, linear-extrapolation ghost nodes at the boundary,
//! upwind transport and centered differences inside the envelope.

use crate::core::{
    g_of_unchecked, CoefficientSpec, GCoefficients, GeneratorSpec, ScalarField,
    SpaceGrid, SpaceTimeField, TimeGrid,
};
use crate::error::{GxError, Result};
use crate::real::{real, Real};

/// Penalty term `n (u - target)` added to the operator.
#[derive(Debug, Clone)]
pub struct Penalty<'a, R: Real> {
    pub n: R,
    pub target: &'a SpaceTimeField<R>,
}

/// A terminal-value problem for the nonlinear operator above.
#[derive(Debug, Clone)]
pub struct PdeProblem<'a, R: Real> {
    pub gc: GCoefficients<R>,
    pub coeffs: CoefficientSpec<R>,
    pub gen: GeneratorSpec<R>,
    pub terminal: ScalarField<R>,
    pub time: TimeGrid<R>,
    pub space: SpaceGrid<R>,
    pub penalty: Option<Penalty<'a, R>>,
    /// Physical time of the local `t = 0` node; coefficients and drivers are
    /// evaluated at `t_offset + t`. Zero for whole-horizon solves.
    pub t_offset: R,
}

impl<'a, R: Real> PdeProblem<'a, R> {
    pub fn new(
        gc: GCoefficients<R>,
        coeffs: CoefficientSpec<R>,
        gen: GeneratorSpec<R>,
        terminal: ScalarField<R>,
        time: TimeGrid<R>,
        space: SpaceGrid<R>,
    ) -> Result<Self> {
        if *terminal.grid() != space {
            return Err(GxError::GridMismatch(
                "terminal data lives on a different space grid".into(),
            ));
        }
        Ok(Self {
            gc,
            coeffs,
            gen,
            terminal,
            time,
            space,
            penalty: None,
            t_offset: R::zero(),
        })
    }

    pub fn with_penalty(mut self, n: R, target: &'a SpaceTimeField<R>) -> Result<Self> {
        if n < R::zero() {
            return Err(GxError::InvalidParameter(
                "penalty parameter must be nonnegative".into(),
            ));
        }
        if *target.time() != self.time || *target.space() != self.space {
            return Err(GxError::GridMismatch(
                "penalty target lives on different grids".into(),
            ));
        }
        self.penalty = Some(Penalty { n, target });
        Ok(self)
    }
}

/// Largest admissible `dt` for the explicit scheme on this problem
/// (penalty term excluded: it is treated implicitly).
pub fn max_stable_dt<R: Real>(p: &PdeProblem<'_, R>) -> R {
    let dx = p.space.dx();
    let mut max_sig2 = R::zero();
    let mut max_b = R::zero();
    let mut max_h = R::zero();
    for i in 0..=p.time.n_steps() {
        let t = p.t_offset + p.time.t(i);
        for x in p.space.nodes() {
            let s = p.coeffs.sigma.eval(t, x);
            max_sig2 = max_sig2.max(s * s);
            max_b = max_b.max(p.coeffs.b.eval(t, x).abs());
            max_h = max_h.max(p.coeffs.h.eval(t, x).abs());
        }
    }
    let sh2 = p.gc.sigma_high_sq();
    let rate = sh2 * max_sig2 / (dx * dx) + (max_b + sh2 * max_h) / dx;
    if rate <= R::zero() {
        R::infinity()
    } else {
        rate.recip()
    }
}

/// Centered first difference with linear-extrapolation ghost nodes
/// (reduces to a one-sided difference at the boundary columns).
#[inline]
fn first_diff<R: Real>(row: &[R], j: usize, dx: R) -> R {
    let m = row.len();
    if j == 0 {
        (row[1] - row[0]) / dx
    } else if j == m - 1 {
        (row[m - 1] - row[m - 2]) / dx
    } else {
        (row[j + 1] - row[j - 1]) / (dx + dx)
    }
}

/// Centered second difference; zero at the boundary columns (ghost nodes by
/// linear extrapolation).
#[inline]
fn second_diff<R: Real>(row: &[R], j: usize, dx: R) -> R {
    let m = row.len();
    if j == 0 || j == m - 1 {
        R::zero()
    } else {
        (row[j + 1] - row[j] * real::<R>(2.0) + row[j - 1]) / (dx * dx)
    }
}

/// Upwind first difference in the sign of the transport coefficient `b`.
#[inline]
fn upwind_diff<R: Real>(row: &[R], j: usize, dx: R, b: R) -> R {
    let m = row.len();
    if b >= R::zero() {
        if j == m - 1 {
            (row[m - 1] - row[m - 2]) / dx
        } else {
            (row[j + 1] - row[j]) / dx
        }
    } else if j == 0 {
        (row[1] - row[0]) / dx
    } else {
        (row[j] - row[j - 1]) / dx
    }
}

/// Solve the terminal-value problem backward in time.
///
/// Each step maps the known slice at `t` to the slice at `t - dt`:
/// the explicit operator value is computed from the slice at `t`, and the
/// penalty `n (v - target)` is folded in implicitly by dividing by
/// `1 + dt n`, so stability is independent of `n`.
pub fn solve_terminal_pde<R: Real>(p: &PdeProblem<'_, R>) -> Result<SpaceTimeField<R>> {
    if *p.terminal.grid() != p.space {
        return Err(GxError::GridMismatch(
            "terminal data lives on a different space grid".into(),
        ));
    }
    if let Some(pen) = &p.penalty {
        if *pen.target.time() != p.time || *pen.target.space() != p.space {
            return Err(GxError::GridMismatch(
                "penalty target lives on different grids".into(),
            ));
        }
    }
    let dt = p.time.dt();
    let dt_max = max_stable_dt(p);
    if dt > dt_max {
        return Err(GxError::CflViolation {
            dt: dt.to_f64().unwrap_or(f64::NAN),
            dt_max: dt_max.to_f64().unwrap_or(f64::NAN),
        });
    }

    let n_steps = p.time.n_steps();
    let m = p.space.n_points();
    let dx = p.space.dx();
    let two = real::<R>(2.0);

    let mut rows: Vec<Vec<R>> = vec![Vec::new(); n_steps + 1];
    rows[n_steps] = p.terminal.values().to_vec();

    for i in (0..n_steps).rev() {
        let t_known = p.t_offset + p.time.t(i + 1);
        let (head, tail) = rows.split_at_mut(i + 1);
        let known = &tail[0];
        let mut new_row = vec![R::zero(); m];
        for (j, out) in new_row.iter_mut().enumerate() {
            let x = p.space.x(j);
            let b = p.coeffs.b.eval(t_known, x);
            let h = p.coeffs.h.eval(t_known, x);
            let s = p.coeffs.sigma.eval(t_known, x);
            let d2 = second_diff(known, j, dx);
            let dc = first_diff(known, j, dx);
            let z = s * dc;
            let v = known[j];
            let g_term = p.gen.form().eval(t_known, x, v, z);
            let mut envelope_arg = s * s * d2 + two * h * dc;
            if let Some(f) = p.gen.f_form() {
                envelope_arg = envelope_arg + two * f.eval(t_known, x, v, z);
            }
            let mut val = v
                + dt * (g_of_unchecked(envelope_arg, &p.gc)
                    + b * upwind_diff(known, j, dx, b)
                    + g_term);
            if let Some(pen) = &p.penalty {
                val = (val + dt * pen.n * pen.target.at(i, j)) / (R::one() + dt * pen.n);
            }
            if !val.is_finite() {
                return Err(GxError::NonFinite(format!(
                    "solution blew up at step {} node {}",
                    i, j
                )));
            }
            *out = val;
        }
        head[i] = new_row;
    }
    SpaceTimeField::new(p.time, p.space, rows)
}

/// `u(t, x_query) = E_hat[phi(x_query + sqrt(t) X)]` for G-normal `X`,
/// computed by solving the G-heat equation backward over horizon `t` and
/// interpolating the initial slice at `x_query`.
///
/// `x_query` must stay `6 sigma_high sqrt(t)` away from the domain edges so
/// the truncation boundary cannot pollute the value.
pub fn g_normal_expectation<R: Real>(
    phi: &ScalarField<R>,
    t: R,
    x_query: R,
    gc: &GCoefficients<R>,
    space: &SpaceGrid<R>,
    time: &TimeGrid<R>,
) -> Result<R> {
    let margin = real::<R>(6.0) * gc.sigma_high() * t.sqrt();
    if x_query < space.x_min() + margin || x_query > space.x_max() - margin {
        return Err(GxError::OutsideMargin(format!(
            "x = {} outside [{}, {}]",
            x_query,
            space.x_min() + margin,
            space.x_max() - margin
        )));
    }
    let problem = PdeProblem::new(
        *gc,
        CoefficientSpec::canonical(),
        GeneratorSpec::zero(),
        phi.clone(),
        TimeGrid::new(t, time.n_steps())?,
        *space,
    )?;
    let u = solve_terminal_pde(&problem)?;
    Ok(u.interp_x(0, x_query))
}

/// Pointwise residual `Dt u + F(D2u, Du, u, x, t)` of the supersolution
/// inequality, on interior nodes (forward time difference, centered space
/// differences). A viscosity supersolution has residual <= 0 at points of
/// smoothness; `max_violation` is the largest positive excursion.
///
/// Boundary columns and the terminal row are excluded (their residual
/// entries are zero). This is a smooth-point check only: no jet-based
/// verification is attempted at kinks.
pub fn supersolution_residual<R: Real>(
    u: &SpaceTimeField<R>,
    gc: &GCoefficients<R>,
    coeffs: &CoefficientSpec<R>,
    gen: &GeneratorSpec<R>,
) -> Result<(SpaceTimeField<R>, R)> {
    let space = *u.space();
    let time = *u.time();
    if space.n_points() < 5 {
        return Err(GxError::InvalidParameter(
            "residual check needs at least 3 interior nodes".into(),
        ));
    }
    let dt = time.dt();
    let dx = space.dx();
    let two = real::<R>(2.0);
    let mut rows = vec![vec![R::zero(); space.n_points()]; time.n_steps() + 1];
    let mut max_violation = R::zero();
    for i in 0..time.n_steps() {
        let t = time.t(i);
        for j in 1..space.n_points() - 1 {
            let x = space.x(j);
            let row = u.row(i);
            let d2 = second_diff(row, j, dx);
            let dc = first_diff(row, j, dx);
            let s = coeffs.sigma.eval(t, x);
            let h = coeffs.h.eval(t, x);
            let b = coeffs.b.eval(t, x);
            let z = s * dc;
            let v = row[j];
            let dt_u = (u.at(i + 1, j) - v) / dt;
            let mut envelope_arg = s * s * d2 + two * h * dc;
            if let Some(f) = gen.f_form() {
                envelope_arg = envelope_arg + two * f.eval(t, x, v, z);
            }
            let r = dt_u
                + g_of_unchecked(envelope_arg, gc)
                + b * dc
                + gen.form().eval(t, x, v, z);
            rows[i][j] = r;
            max_violation = max_violation.max(r);
        }
    }
    let field = SpaceTimeField::new(time, space, rows)?;
    Ok((field, max_violation))
}

/// Evaluate `generator_eval`-style driver on a field node; helper shared by
/// downstream modules that need the `z`-field `sigma * Du`.
pub fn z_field<R: Real>(u: &SpaceTimeField<R>, coeffs: &CoefficientSpec<R>) -> SpaceTimeField<R> {
    let time = *u.time();
    let space = *u.space();
    let dx = space.dx();
    let rows = (0..=time.n_steps())
        .map(|i| {
            let t = time.t(i);
            (0..space.n_points())
                .map(|j| coeffs.sigma.eval(t, space.x(j)) * first_diff(u.row(i), j, dx))
                .collect()
        })
        .collect();
    SpaceTimeField::new(time, space, rows).expect("z field shares u's grids")
}
