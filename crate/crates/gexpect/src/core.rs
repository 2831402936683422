//! Domain types shared by every module: the volatility band and its
//! sublinear envelope, uniform grids, scalar and space-time fields, and the
//! closed registry of generator / coefficient forms.
//!
//! All types are immutable value types after construction and can be shared
//! freely between workers.

use crate::error::{GxError, Result};
use crate::real::{real, Real};

/// Volatility band `(sigma_low, sigma_high)` defining the sublinear envelope
/// `G(a) = (sigma_high^2 a^+ - sigma_low^2 a^-) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GCoefficients<R: Real> {
    sigma_low: R,
    sigma_high: R,
}

impl<R: Real> GCoefficients<R> {
    pub fn new(sigma_low: R, sigma_high: R) -> Result<Self> {
        if !sigma_low.is_finite() || !sigma_high.is_finite() {
            return Err(GxError::NonFinite("volatility band".into()));
        }
        if sigma_low <= R::zero() || sigma_high < sigma_low {
            return Err(GxError::InvalidParameter(format!(
                "volatility band requires 0 < sigma_low <= sigma_high, got ({}, {})",
                sigma_low, sigma_high
            )));
        }
        Ok(Self {
            sigma_low,
            sigma_high,
        })
    }

    pub fn sigma_low(&self) -> R {
        self.sigma_low
    }

    pub fn sigma_high(&self) -> R {
        self.sigma_high
    }

    pub fn sigma_low_sq(&self) -> R {
        self.sigma_low * self.sigma_low
    }

    pub fn sigma_high_sq(&self) -> R {
        self.sigma_high * self.sigma_high
    }

    /// Whether `h` lies in the band `[sigma_low, sigma_high]`.
    pub fn contains(&self, h: R) -> bool {
        h >= self.sigma_low && h <= self.sigma_high
    }
}

/// `G(a) = (sigma_high^2 a^+ - sigma_low^2 a^-) / 2`, the maximum of
/// `h^2 a / 2` over `h` in the band.
pub fn g_of<R: Real>(a: R, gc: &GCoefficients<R>) -> Result<R> {
    if !a.is_finite() {
        return Err(GxError::NonFinite(format!("g_of argument {}", a)));
    }
    Ok(g_of_unchecked(a, gc))
}

/// Same as [`g_of`] without the finiteness check; used in solver inner loops.
#[inline]
pub(crate) fn g_of_unchecked<R: Real>(a: R, gc: &GCoefficients<R>) -> R {
    let half = real::<R>(0.5);
    if a >= R::zero() {
        half * gc.sigma_high_sq() * a
    } else {
        half * gc.sigma_low_sq() * a
    }
}

/// Uniform spatial lattice on `[x_min, x_max]` with `n_points >= 3` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid<R: Real> {
    x_min: R,
    x_max: R,
    n_points: usize,
}

impl<R: Real> SpaceGrid<R> {
    pub fn new(x_min: R, x_max: R, n_points: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(GxError::NonFinite("space grid bounds".into()));
        }
        if x_min >= x_max {
            return Err(GxError::InvalidParameter(format!(
                "space grid requires x_min < x_max, got [{}, {}]",
                x_min, x_max
            )));
        }
        if n_points < 3 {
            return Err(GxError::InvalidParameter(format!(
                "space grid requires at least 3 points, got {}",
                n_points
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> R {
        self.x_min
    }

    pub fn x_max(&self) -> R {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> R {
        (self.x_max - self.x_min) / real::<R>((self.n_points - 1) as f64)
    }

    pub fn x(&self, j: usize) -> R {
        self.x_min + self.dx() * real::<R>(j as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = R> + '_ {
        (0..self.n_points).map(move |j| self.x(j))
    }

    /// Index of the node nearest to `x`, clamped to the lattice.
    pub fn nearest(&self, x: R) -> usize {
        let pos = (x - self.x_min) / self.dx();
        let j = pos.round().to_f64().unwrap_or(0.0).max(0.0) as usize;
        j.min(self.n_points - 1)
    }

    /// Linear interpolation of the nodal `values` at `x` (clamped to range).
    pub fn interp(&self, values: &[R], x: R) -> R {
        debug_assert_eq!(values.len(), self.n_points);
        let pos = (x - self.x_min) / self.dx();
        let pf = pos.to_f64().unwrap_or(0.0);
        if pf <= 0.0 {
            return values[0];
        }
        let last = self.n_points - 1;
        if pf >= last as f64 {
            return values[last];
        }
        let j = pf.floor() as usize;
        let w = pos - real::<R>(j as f64);
        values[j] * (R::one() - w) + values[j + 1] * w
    }
}

/// Uniform time lattice `0 = t_0 < ... < t_N = horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<R: Real> {
    horizon: R,
    n_steps: usize,
}

impl<R: Real> TimeGrid<R> {
    pub fn new(horizon: R, n_steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= R::zero() {
            return Err(GxError::InvalidParameter(format!(
                "time grid requires horizon T > 0, got {}",
                horizon
            )));
        }
        if n_steps < 1 {
            return Err(GxError::InvalidParameter(
                "time grid requires at least 1 step".into(),
            ));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> R {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> R {
        self.horizon / real::<R>(self.n_steps as f64)
    }

    pub fn t(&self, i: usize) -> R {
        self.dt() * real::<R>(i as f64)
    }
}

/// Values of a scalar function on a [`SpaceGrid`], one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<R: Real> {
    grid: SpaceGrid<R>,
    values: Vec<R>,
}

impl<R: Real> ScalarField<R> {
    pub fn new(grid: SpaceGrid<R>, values: Vec<R>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(GxError::GridMismatch(format!(
                "scalar field has {} values for a {}-node grid",
                values.len(),
                grid.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GxError::NonFinite("scalar field values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: SpaceGrid<R>, f: impl Fn(R) -> R) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SpaceGrid<R> {
        &self.grid
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn interp(&self, x: R) -> R {
        self.grid.interp(&self.values, x)
    }
}

/// Values `u(t_i, x_j)` on a time x space lattice; row `i` is the spatial
/// slice at `t_i`. The universal carrier for PDE solutions, supermartingale
/// candidates and Z-fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<R: Real> {
    time: TimeGrid<R>,
    space: SpaceGrid<R>,
    rows: Vec<Vec<R>>,
}

impl<R: Real> SpaceTimeField<R> {
    pub fn new(time: TimeGrid<R>, space: SpaceGrid<R>, rows: Vec<Vec<R>>) -> Result<Self> {
        if rows.len() != time.n_steps() + 1 {
            return Err(GxError::GridMismatch(format!(
                "space-time field has {} rows for {} time nodes",
                rows.len(),
                time.n_steps() + 1
            )));
        }
        for row in &rows {
            if row.len() != space.n_points() {
                return Err(GxError::GridMismatch(format!(
                    "space-time field row has {} values for a {}-node grid",
                    row.len(),
                    space.n_points()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GxError::NonFinite("space-time field values".into()));
            }
        }
        Ok(Self { time, space, rows })
    }

    pub fn sample(time: TimeGrid<R>, space: SpaceGrid<R>, f: impl Fn(R, R) -> R) -> Result<Self> {
        let rows = (0..=time.n_steps())
            .map(|i| space.nodes().map(|x| f(time.t(i), x)).collect())
            .collect();
        Self::new(time, space, rows)
    }

    pub fn time(&self) -> &TimeGrid<R> {
        &self.time
    }

    pub fn space(&self) -> &SpaceGrid<R> {
        &self.space
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.rows[i]
    }

    pub fn at(&self, i: usize, j: usize) -> R {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<R>] {
        &self.rows
    }

    /// Spatial slice at time node `i` as a [`ScalarField`].
    pub fn slice(&self, i: usize) -> ScalarField<R> {
        ScalarField {
            grid: self.space,
            values: self.rows[i].clone(),
        }
    }

    /// Linear interpolation in space at time node `i`.
    pub fn interp_x(&self, i: usize, x: R) -> R {
        self.space.interp(&self.rows[i], x)
    }

    pub fn sup_norm(&self) -> R {
        self.rows
            .iter()
            .flatten()
            .fold(R::zero(), |m, &v| m.max(v.abs()))
    }

    /// Sup over all nodes of `self - other`.
    pub fn sup_diff(&self, other: &Self) -> Result<R> {
        self.require_same_grids(other)?;
        let mut m = R::neg_infinity();
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (&x, &y) in a.iter().zip(b) {
                m = m.max(x - y);
            }
        }
        Ok(m)
    }

    pub fn require_same_grids(&self, other: &Self) -> Result<()> {
        if self.time != other.time || self.space != other.space {
            return Err(GxError::GridMismatch(
                "space-time fields live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Centered second difference in space at `(i, j)`, with ghost nodes by
    /// linear extrapolation (zero at the boundary columns).
    pub fn second_diff(&self, i: usize, j: usize) -> R {
        let m = self.space.n_points();
        if j == 0 || j == m - 1 {
            return R::zero();
        }
        let dx = self.space.dx();
        let row = &self.rows[i];
        (row[j + 1] - row[j] * real::<R>(2.0) + row[j - 1]) / (dx * dx)
    }
}

/// Which driver of a [`GeneratorSpec`] to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// `g`, the `dt`-term driver.
    G,
    /// `f`, the `d<B>`-term driver.
    F,
}

/// Named parametric form for a driver `(t, x, y, z) -> real`. Forms are a
/// closed registry so configs stay serializable and runs reproducible; the
/// table escape hatch interpolates piecewise-linearly in one argument.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionForm<R: Real> {
    Zero,
    /// `a*y + b*z + c`
    Affine { a: R, b: R, c: R },
    /// `mu * |z|`
    AbsZ { mu: R },
    /// Piecewise-linear table in `y` or `z` (constant extrapolation).
    Table {
        var: TableVar,
        abscissae: Vec<R>,
        ordinates: Vec<R>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableVar {
    Y,
    Z,
}

impl<R: Real> FunctionForm<R> {
    pub fn eval(&self, _t: R, _x: R, y: R, z: R) -> R {
        match self {
            FunctionForm::Zero => R::zero(),
            FunctionForm::Affine { a, b, c } => *a * y + *b * z + *c,
            FunctionForm::AbsZ { mu } => *mu * z.abs(),
            FunctionForm::Table {
                var,
                abscissae,
                ordinates,
            } => {
                let v = match var {
                    TableVar::Y => y,
                    TableVar::Z => z,
                };
                interp_table(abscissae, ordinates, v)
            }
        }
    }

    /// True Lipschitz constant of the form in `(y, z)`.
    pub fn lipschitz(&self) -> R {
        match self {
            FunctionForm::Zero => R::zero(),
            FunctionForm::Affine { a, b, .. } => a.abs().max(b.abs()),
            FunctionForm::AbsZ { mu } => mu.abs(),
            FunctionForm::Table {
                abscissae,
                ordinates,
                ..
            } => max_slope(abscissae, ordinates),
        }
    }
}

fn interp_table<R: Real>(xs: &[R], ys: &[R], v: R) -> R {
    debug_assert!(xs.len() == ys.len() && xs.len() >= 2);
    if v <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if v >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&x| x <= v) - 1;
    let w = (v - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] * (R::one() - w) + ys[k + 1] * w
}

fn max_slope<R: Real>(xs: &[R], ys: &[R]) -> R {
    xs.windows(2)
        .zip(ys.windows(2))
        .fold(R::zero(), |m, (xw, yw)| {
            m.max(((yw[1] - yw[0]) / (xw[1] - xw[0])).abs())
        })
}

/// The drivers `g` (dt term) and optional `f` (d<B> term) of a G-BSDE,
/// with a declared Lipschitz constant dominating both forms.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec<R: Real> {
    form: FunctionForm<R>,
    lipschitz: R,
    f_form: Option<FunctionForm<R>>,
}

impl<R: Real> GeneratorSpec<R> {
    pub fn new(form: FunctionForm<R>, lipschitz: R, f_form: Option<FunctionForm<R>>) -> Result<Self> {
        if lipschitz < R::zero() || !lipschitz.is_finite() {
            return Err(GxError::InvalidParameter(
                "declared Lipschitz constant must be finite and nonnegative".into(),
            ));
        }
        let mut required = form.lipschitz();
        if let Some(f) = &f_form {
            required = required.max(f.lipschitz());
        }
        if lipschitz < required {
            return Err(GxError::InvalidParameter(format!(
                "declared Lipschitz constant {} below true constant {}",
                lipschitz, required
            )));
        }
        Ok(Self {
            form,
            lipschitz,
            f_form,
        })
    }

    /// Driver identically zero (also zero `f`), L = 0.
    pub fn zero() -> Self {
        Self {
            form: FunctionForm::Zero,
            lipschitz: R::zero(),
            f_form: None,
        }
    }

    pub fn form(&self) -> &FunctionForm<R> {
        &self.form
    }

    pub fn f_form(&self) -> Option<&FunctionForm<R>> {
        self.f_form.as_ref()
    }

    pub fn lipschitz(&self) -> R {
        self.lipschitz
    }

    pub fn has_f(&self) -> bool {
        self.f_form.is_some()
    }
}

/// Evaluate the named driver of `gen` at `(t, x, y, z)`. Pure and
/// deterministic; `which = F` requires an `f` form to be present.
pub fn generator_eval<R: Real>(
    gen: &GeneratorSpec<R>,
    which: Driver,
    t: R,
    x: R,
    y: R,
    z: R,
) -> Result<R> {
    match which {
        Driver::G => Ok(gen.form.eval(t, x, y, z)),
        Driver::F => gen
            .f_form
            .as_ref()
            .map(|f| f.eval(t, x, y, z))
            .ok_or_else(|| GxError::InvalidParameter("driver f requested but absent".into())),
    }
}

/// Named form for a coefficient function of `(t, x)`; Lipschitz in `x` by
/// construction for every registry entry.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefFn<R: Real> {
    Constant(R),
    /// `alpha + beta * x`
    Linear { alpha: R, beta: R },
    /// Piecewise-linear table in `x` (constant extrapolation).
    Table { abscissae: Vec<R>, ordinates: Vec<R> },
}

impl<R: Real> CoefFn<R> {
    pub fn eval(&self, _t: R, x: R) -> R {
        match self {
            CoefFn::Constant(c) => *c,
            CoefFn::Linear { alpha, beta } => *alpha + *beta * x,
            CoefFn::Table {
                abscissae,
                ordinates,
            } => interp_table(abscissae, ordinates, x),
        }
    }

    pub fn lipschitz(&self) -> R {
        match self {
            CoefFn::Constant(_) => R::zero(),
            CoefFn::Linear { beta, .. } => beta.abs(),
            CoefFn::Table {
                abscissae,
                ordinates,
            } => max_slope(abscissae, ordinates),
        }
    }
}

/// The coefficients `b`, `h`, `sigma` of the forward SDE
/// `dX = b dt + h d<B> + sigma dB`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec<R: Real> {
    pub b: CoefFn<R>,
    pub h: CoefFn<R>,
    pub sigma: CoefFn<R>,
}

impl<R: Real> CoefficientSpec<R> {
    /// `b = h = 0`, `sigma = 1`: the canonical G-Brownian setting.
    pub fn canonical() -> Self {
        Self {
            b: CoefFn::Constant(R::zero()),
            h: CoefFn::Constant(R::zero()),
            sigma: CoefFn::Constant(R::one()),
        }
    }

    pub fn lipschitz(&self) -> R {
        self.b
            .lipschitz()
            .max(self.h.lipschitz())
            .max(self.sigma.lipschitz())
    }
}
