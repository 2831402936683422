//! Markovian G-BSDE solution via the nonlinear Feynman-Kac correspondence:
//! the value field solves the terminal PDE and `Z = sigma * Du`; the
//! decreasing third component K is extracted pathwise as an Ito residual.

use crate::core::{
    CoefficientSpec, GCoefficients, GeneratorSpec, ScalarField, SpaceGrid, SpaceTimeField,
    TimeGrid,
};
use crate::error::{GxError, Result};
use crate::pde::{solve_terminal_pde, z_field, PdeProblem};
use crate::real::{real, Real};
use crate::scenario::ScenarioPath;

/// Value and Z fields of a Markovian G-BSDE: `Y_s = u(s, X_s)`,
/// `Z(t, x) = sigma(t, x) Du(t, x)` (one-sided differences at the boundary;
/// the two outermost columns are unreliable).
#[derive(Debug, Clone)]
pub struct GBsdeSolution<R: Real> {
    pub u: SpaceTimeField<R>,
    pub z: SpaceTimeField<R>,
}

/// Solve the Markovian G-BSDE with terminal data `xi = terminal(X_T)`.
pub fn solve_gbsde<R: Real>(
    coeffs: &CoefficientSpec<R>,
    gen: &GeneratorSpec<R>,
    gc: &GCoefficients<R>,
    terminal: ScalarField<R>,
    time: TimeGrid<R>,
    space: SpaceGrid<R>,
) -> Result<GBsdeSolution<R>> {
    let p = PdeProblem::new(*gc, coeffs.clone(), gen.clone(), terminal, time, space)?;
    let u = solve_terminal_pde(&p)?;
    let z = z_field(&u, coeffs);
    Ok(GBsdeSolution { u, z })
}

/// Discrete K series along one path plus its largest positive increment.
#[derive(Debug, Clone)]
pub struct PathwiseK<R: Real> {
    pub k: Vec<R>,
    pub max_positive_increment: R,
}

/// Extract `K_t = Y_t - Y_0 + int g ds + int f d<B> - int Z dB` along a path
/// (left-point Ito sums). For a true solution K is decreasing with `K_0 = 0`
/// and the positive increments stay within discretization tolerance.
pub fn pathwise_k<R: Real>(
    sol: &GBsdeSolution<R>,
    gen: &GeneratorSpec<R>,
    path: &ScenarioPath<R>,
) -> Result<PathwiseK<R>> {
    let time = sol.u.time();
    if path.time.n_steps() != time.n_steps()
        || (path.time.horizon() - time.horizon()).abs() > time.dt() * real::<R>(1e-9)
    {
        return Err(GxError::GridMismatch(
            "path time grid does not match the solution".into(),
        ));
    }
    let n = time.n_steps();
    let dt = time.dt();
    let y0 = sol.u.interp_x(0, path.x[0]);
    let mut k = Vec::with_capacity(n + 1);
    k.push(R::zero());
    let mut integral = R::zero(); // int g ds + int f d<B> - int Z dB
    let mut max_pos = R::zero();
    for i in 0..n {
        let t = time.t(i);
        let xi = path.x[i];
        let yi = sol.u.interp_x(i, xi);
        let zi = sol.z.interp_x(i, xi);
        integral = integral + gen.form().eval(t, xi, yi, zi) * dt;
        if let Some(f) = gen.f_form() {
            integral = integral + f.eval(t, xi, yi, zi) * (path.qv[i + 1] - path.qv[i]);
        }
        integral = integral - zi * (path.b[i + 1] - path.b[i]);
        let y_next = sol.u.interp_x(i + 1, path.x[i + 1]);
        let k_next = y_next - y0 + integral;
        max_pos = max_pos.max(k_next - k[i]);
        k.push(k_next);
    }
    Ok(PathwiseK {
        k,
        max_positive_increment: max_pos,
    })
}

/// Outcome of the ordered-pair comparison test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComparisonVerdict {
    Pass,
    Fail,
    /// Input ordering precondition not satisfied; the test says nothing.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport<R: Real> {
    pub verdict: ComparisonVerdict,
    /// Largest violation of `u1 >= u2 - tol` over all nodes (0 when none).
    pub worst_violation: R,
    pub tol: R,
}

/// Comparison-theorem check: terminal1 >= terminal2 and g1 >= g2 must give
/// ordered solutions. Ordering of the inputs is verified first on the grid
/// (and on a lattice of (y, z) arguments for the drivers); failure there is
/// inconclusive, not a fail.
pub fn comparison_check<R: Real>(
    p1: &PdeProblem<'_, R>,
    p2: &PdeProblem<'_, R>,
) -> Result<ComparisonReport<R>> {
    let tol = real::<R>(1e-8) + real::<R>(1e-3);
    if p1.space != p2.space || p1.time != p2.time {
        return Err(GxError::GridMismatch(
            "comparison requires matching grids".into(),
        ));
    }
    // precondition: terminal ordering on the grid
    let ordered_terminal = p1
        .terminal
        .values()
        .iter()
        .zip(p2.terminal.values())
        .all(|(a, b)| a >= b);
    // precondition: driver ordering on a sample lattice
    let mut ordered_gen = true;
    let probes: Vec<R> = (-4..=4).map(|k| real::<R>(k as f64)).collect();
    'outer: for i in 0..=4 {
        let t = p1.time.horizon() * real::<R>(i as f64 / 4.0);
        for x in p1.space.nodes().step_by((p1.space.n_points() / 8).max(1)) {
            for &y in &probes {
                for &z in &probes {
                    if p1.gen.form().eval(t, x, y, z) < p2.gen.form().eval(t, x, y, z) {
                        ordered_gen = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    if !ordered_terminal || !ordered_gen {
        return Ok(ComparisonReport {
            verdict: ComparisonVerdict::Inconclusive,
            worst_violation: R::zero(),
            tol,
        });
    }
    let u1 = solve_terminal_pde(p1)?;
    let u2 = solve_terminal_pde(p2)?;
    let worst = u2.sup_diff(&u1)?.max(R::zero());
    Ok(ComparisonReport {
        verdict: if worst <= tol {
            ComparisonVerdict::Pass
        } else {
            ComparisonVerdict::Fail
        },
        worst_violation: worst,
        tol,
    })
}
