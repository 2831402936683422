//! Simulation of G-Brownian motion, its quadratic variation and the forward
//! SDE under the representing measures indexed by volatility controls
//! `h in [sigma_low, sigma_high]`; Monte-Carlo estimation of upper
//! expectations by maximizing over a control family.
//!
//! Noise splitting rule (fixed, versioned in run metadata as
//! `chacha12-stream-v1`): one master seed initializes a ChaCha12 state via
//! `seed_from_u64(master)`, and path `k` reads from stream `k`
//! (`set_stream(k)`). Parallel and serial runs agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::core::{CoefficientSpec, GCoefficients, SpaceTimeField, TimeGrid};
use crate::error::{GxError, Result};
use crate::real::{real, Real};

/// Identifier of the noise-splitting rule, recorded in run metadata.
pub const RNG_SCHEME: &str = "chacha12-stream-v1";

/// A volatility control: the measure-selection policy `h_t`.
#[derive(Debug, Clone)]
pub enum ControlKind<R: Real> {
    /// `h_t = c` for all t.
    Constant(R),
    /// One value per time step.
    Piecewise(Vec<R>),
    /// Bang-bang feedback from a candidate field: `h = sigma_high` where the
    /// nearest-node second difference of `u` is nonnegative, else
    /// `sigma_low`.
    Feedback(SpaceTimeField<R>),
}

#[derive(Debug, Clone)]
pub struct VolatilityControl<R: Real> {
    kind: ControlKind<R>,
    gc: GCoefficients<R>,
}

impl<R: Real> VolatilityControl<R> {
    pub fn new(kind: ControlKind<R>, gc: GCoefficients<R>) -> Result<Self> {
        match &kind {
            ControlKind::Constant(c) => {
                if !gc.contains(*c) {
                    return Err(GxError::InvalidParameter(format!(
                        "control value {} outside band [{}, {}]",
                        c,
                        gc.sigma_low(),
                        gc.sigma_high()
                    )));
                }
            }
            ControlKind::Piecewise(vals) => {
                if let Some(v) = vals.iter().find(|v| !gc.contains(**v)) {
                    return Err(GxError::InvalidParameter(format!(
                        "piecewise control value {} outside band",
                        v
                    )));
                }
            }
            ControlKind::Feedback(_) => {}
        }
        Ok(Self { kind, gc })
    }

    pub fn kind(&self) -> &ControlKind<R> {
        &self.kind
    }

    pub fn gc(&self) -> &GCoefficients<R> {
        &self.gc
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            ControlKind::Constant(c) => format!("constant({})", c),
            ControlKind::Piecewise(_) => "piecewise".into(),
            ControlKind::Feedback(_) => "feedback".into(),
        }
    }

    /// Realized control value at step `i` given the current state.
    fn value(&self, i: usize, t: R, x: R) -> R {
        match &self.kind {
            ControlKind::Constant(c) => *c,
            ControlKind::Piecewise(vals) => vals[i.min(vals.len() - 1)],
            ControlKind::Feedback(u) => {
                let ti = time_index(u.time(), t);
                let j = u.space().nearest(x);
                if u.second_diff(ti, j) >= R::zero() {
                    self.gc.sigma_high()
                } else {
                    self.gc.sigma_low()
                }
            }
        }
    }
}

fn time_index<R: Real>(grid: &TimeGrid<R>, t: R) -> usize {
    let i = (t / grid.dt()).round().to_f64().unwrap_or(0.0).max(0.0) as usize;
    i.min(grid.n_steps())
}

/// One simulated trajectory. `b` is the G-Brownian path, `qv` its quadratic
/// variation, `x` the forward state; `dw` and `h` have one entry per step.
#[derive(Debug, Clone)]
pub struct ScenarioPath<R: Real> {
    pub time: TimeGrid<R>,
    pub gc: GCoefficients<R>,
    pub dw: Vec<R>,
    pub h: Vec<R>,
    pub b: Vec<R>,
    pub qv: Vec<R>,
    pub x: Vec<R>,
}

/// Upper-expectation Monte-Carlo estimate.
#[derive(Debug, Clone)]
pub struct ExpectationEstimate<R: Real> {
    pub value: R,
    pub stderr: R,
    pub control_descriptor: String,
    pub n_paths: usize,
    pub bound_side: BoundSide,
    /// Per-control sample means in family order.
    pub per_control: Vec<R>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// Max over a fixed family: a lower bound on the upper expectation.
    Lower,
    /// A PDE-feedback control is in the family: the bound is matched.
    Matched,
}

/// Draw the per-path noise increments `dW_i ~ N(0, dt)` from the path's
/// dedicated substream.
pub fn draw_increments<R: Real>(time: &TimeGrid<R>, master_seed: u64, path_index: u64) -> Vec<R>
where
    StandardNormal: Distribution<R>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    let sqrt_dt = time.dt().sqrt();
    (0..time.n_steps())
        .map(|_| {
            let g: R = rng.sample(StandardNormal);
            g * sqrt_dt
        })
        .collect()
}

/// Build the path driven by the given increments under one control.
pub fn path_from_increments<R: Real>(
    dw: &[R],
    ctrl: &VolatilityControl<R>,
    coeffs: &CoefficientSpec<R>,
    x0: R,
    time: &TimeGrid<R>,
) -> Result<ScenarioPath<R>> {
    if dw.len() != time.n_steps() {
        return Err(GxError::GridMismatch(
            "increment count does not match the time grid".into(),
        ));
    }
    if let ControlKind::Piecewise(vals) = ctrl.kind() {
        if vals.len() != time.n_steps() {
            return Err(GxError::GridMismatch(
                "piecewise control length does not match the time grid".into(),
            ));
        }
    }
    if let ControlKind::Feedback(u) = ctrl.kind() {
        if (u.time().horizon() - time.horizon()).abs() > time.dt() * real::<R>(1e-9) {
            return Err(GxError::GridMismatch(
                "feedback field horizon does not match the run".into(),
            ));
        }
    }
    let n = time.n_steps();
    let dt = time.dt();
    let mut h = Vec::with_capacity(n);
    let mut b_path = Vec::with_capacity(n + 1);
    let mut qv = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    b_path.push(R::zero());
    qv.push(R::zero());
    x.push(x0);
    for i in 0..n {
        let t = time.t(i);
        let xi = x[i];
        let hi = ctrl.value(i, t, xi);
        debug_assert!(ctrl.gc.contains(hi));
        let b_c = coeffs.b.eval(t, xi);
        let h_c = coeffs.h.eval(t, xi);
        let s_c = coeffs.sigma.eval(t, xi);
        h.push(hi);
        b_path.push(b_path[i] + hi * dw[i]);
        qv.push(qv[i] + hi * hi * dt);
        x.push(xi + b_c * dt + h_c * hi * hi * dt + s_c * hi * dw[i]);
    }
    Ok(ScenarioPath {
        time: *time,
        gc: ctrl.gc,
        dw: dw.to_vec(),
        h,
        b: b_path,
        qv,
        x,
    })
}

/// Simulate one path under `ctrl` with the `(master_seed, path_index)`
/// substream. Identical arguments produce a bit-identical path regardless of
/// scheduling.
pub fn sample_path<R: Real>(
    ctrl: &VolatilityControl<R>,
    coeffs: &CoefficientSpec<R>,
    x0: R,
    time: &TimeGrid<R>,
    master_seed: u64,
    path_index: u64,
) -> Result<ScenarioPath<R>>
where
    StandardNormal: Distribution<R>,
{
    let dw = draw_increments(time, master_seed, path_index);
    path_from_increments(&dw, ctrl, coeffs, x0, time)
}

/// Monte-Carlo estimate of `sup_h E_h[phi(X_T)]` over the control family,
/// with common random numbers across controls. Returns the maximizing
/// control's mean and standard error.
pub fn estimate_upper_expectation<R, F>(
    phi: F,
    controls: &[VolatilityControl<R>],
    coeffs: &CoefficientSpec<R>,
    x0: R,
    time: &TimeGrid<R>,
    n_paths: usize,
    master_seed: u64,
) -> Result<ExpectationEstimate<R>>
where
    R: Real,
    F: Fn(R) -> R + Sync,
    StandardNormal: Distribution<R>,
{
    if controls.is_empty() {
        return Err(GxError::InvalidParameter("empty control list".into()));
    }
    if n_paths < 100 {
        return Err(GxError::InvalidParameter(format!(
            "need at least 100 paths, got {}",
            n_paths
        )));
    }
    // one row of phi values per path, one column per control (CRN: all
    // controls share the path's increments)
    let samples: Vec<Vec<R>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let dw = draw_increments(time, master_seed, k);
            controls
                .iter()
                .map(|c| {
                    let path = path_from_increments(&dw, c, coeffs, x0, time)?;
                    Ok(phi(*path.x.last().unwrap()))
                })
                .collect::<Result<Vec<R>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // deterministic reduction in path-index order
    let nc = controls.len();
    let n_r = real::<R>(n_paths as f64);
    let mut means = vec![R::zero(); nc];
    for row in &samples {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m = *m / n_r;
    }
    let (best, _) = means
        .iter()
        .enumerate()
        .fold((0usize, R::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let mean = means[best];
    let var = samples
        .iter()
        .map(|row| {
            let d = row[best] - mean;
            d * d
        })
        .sum::<R>()
        / real::<R>((n_paths - 1) as f64);
    let stderr = (var / n_r).sqrt();
    let matched = controls
        .iter()
        .any(|c| matches!(c.kind(), ControlKind::Feedback(_)));
    Ok(ExpectationEstimate {
        value: mean,
        stderr,
        control_descriptor: controls[best].describe(),
        n_paths,
        bound_side: if matched {
            BoundSide::Matched
        } else {
            BoundSide::Lower
        },
        per_control: means,
    })
}

/// True iff `sigma_low^2 t <= <B>_t <= sigma_high^2 t` at every node and the
/// quadratic variation is nondecreasing.
pub fn quadratic_variation_check<R: Real>(path: &ScenarioPath<R>) -> bool {
    let tol = real::<R>(1e-9) * (R::one() + path.time.horizon());
    let lo = path.gc.sigma_low_sq();
    let hi = path.gc.sigma_high_sq();
    let mut prev = R::zero();
    for (i, &q) in path.qv.iter().enumerate() {
        let t = path.time.t(i);
        if q < lo * t - tol || q > hi * t + tol || q < prev - tol {
            return false;
        }
        prev = q;
    }
    true
}

/// Bang-bang feedback control maximizing the envelope along a candidate
/// field: `sigma_high` where the second difference is nonnegative (ties
/// resolve to `sigma_high`, value-equivalent), `sigma_low` elsewhere.
pub fn feedback_control_from_field<R: Real>(
    u: SpaceTimeField<R>,
    gc: GCoefficients<R>,
) -> VolatilityControl<R> {
    VolatilityControl {
        kind: ControlKind::Feedback(u),
        gc,
    }
}
