//! Supermartingale verification: the re-solve-and-compare check (solve the
//! terminal problem on [s, t1] from the candidate's own slice and demand the
//! candidate dominates the solution), its equivalence with the supersolution
//! residual check, and the sublinear-axiom suite for expectation estimators.
//!
//! A finite battery of time pairs is never conclusive; reports say "no
//! violation found at this resolution", not "proved".

use rayon::prelude::*;

use crate::core::{CoefficientSpec, GCoefficients, GeneratorSpec, SpaceTimeField, TimeGrid};
use crate::error::{GxError, Result};
use crate::pde::{solve_terminal_pde, supersolution_residual, PdeProblem};
use crate::real::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of one (s, t1) re-solve: `violation = sup (v - u)^+` over the
/// slice at s, `margin` the slack `u - v` at the node nearest x = 0.
#[derive(Debug, Clone, Copy)]
pub struct PairMargin<R: Real> {
    pub s: R,
    pub t1: R,
    pub violation: R,
    pub margin: R,
}

#[derive(Debug, Clone)]
pub struct SupermartingaleReport<R: Real> {
    pub pairs: Vec<PairMargin<R>>,
    pub worst_violation: R,
    pub tol: R,
    pub verdict: Verdict,
}

/// All dyadic pairs `(i T/8, j T/8)` with `i < j`.
pub fn default_pairs<R: Real>(time: &TimeGrid<R>) -> Vec<(R, R)> {
    let eighth = time.horizon() / real::<R>(8.0);
    let mut out = Vec::new();
    for i in 0..8u32 {
        for j in (i + 1)..=8 {
            out.push((eighth * real::<R>(i as f64), eighth * real::<R>(j as f64)));
        }
    }
    out
}

/// Default verification tolerance `1e-3 (1 + ||u||)`.
pub fn default_tol<R: Real>(u: &SpaceTimeField<R>) -> R {
    real::<R>(1e-3) * (R::one() + u.sup_norm())
}

/// For each pair (s, t1), snapped to the candidate's time lattice, solve the
/// terminal problem on [s, t1] from the candidate's slice at t1 and compare
/// against the candidate's slice at s. Passes iff the worst positive
/// excursion of (solution - candidate) stays below `tol`.
///
/// Nodes within `6 sigma_high sqrt(t1 - s)` of the domain edges are excluded
/// from the comparison: the truncation boundary (zero-curvature ghost nodes)
/// pollutes the re-solve there and says nothing about the candidate.
pub fn check_supermartingale<R: Real>(
    u: &SpaceTimeField<R>,
    gen: &GeneratorSpec<R>,
    coeffs: &CoefficientSpec<R>,
    gc: &GCoefficients<R>,
    pairs: &[(R, R)],
    tol: R,
) -> Result<SupermartingaleReport<R>> {
    if pairs.is_empty() {
        return Err(GxError::InvalidParameter("empty pair list".into()));
    }
    let time = *u.time();
    let space = *u.space();
    let dt = time.dt();
    let j0 = space.nearest(R::zero());

    // snap once, validate, then run the independent solves concurrently
    let mut snapped = Vec::with_capacity(pairs.len());
    for &(s, t1) in pairs {
        let i_s = snap(&time, s)?;
        let i_t = snap(&time, t1)?;
        if i_s >= i_t {
            return Err(GxError::InvalidParameter(format!(
                "pair ({}, {}) does not satisfy s < t1 on the lattice",
                s, t1
            )));
        }
        snapped.push((i_s, i_t));
    }

    let results: Vec<PairMargin<R>> = snapped
        .par_iter()
        .map(|&(i_s, i_t)| {
            let steps = i_t - i_s;
            let sub_time = TimeGrid::new(dt * real::<R>(steps as f64), steps)?;
            let mut p = PdeProblem::new(
                *gc,
                coeffs.clone(),
                gen.clone(),
                u.slice(i_t),
                sub_time,
                space,
            )?;
            p.t_offset = time.t(i_s);
            let v = solve_terminal_pde(&p)?;
            let margin = real::<R>(6.0) * gc.sigma_high() * sub_time.horizon().sqrt();
            let j_lo = space.nearest(space.x_min() + margin);
            let j_hi = space.nearest(space.x_max() - margin);
            if j_lo >= j_hi {
                return Err(GxError::OutsideMargin(format!(
                    "pair span {} needs margin {} on each side; the domain is too narrow",
                    sub_time.horizon(),
                    margin
                )));
            }
            let mut violation = R::zero();
            for j in j_lo..=j_hi {
                violation = violation.max(v.at(0, j) - u.at(i_s, j));
            }
            Ok(PairMargin {
                s: time.t(i_s),
                t1: time.t(i_t),
                violation,
                margin: u.at(i_s, j0) - v.at(0, j0),
            })
        })
        .collect::<Result<_>>()?;

    let worst_violation = results
        .iter()
        .fold(R::zero(), |m, p| m.max(p.violation));
    Ok(SupermartingaleReport {
        pairs: results,
        worst_violation,
        tol,
        verdict: if worst_violation <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}

fn snap<R: Real>(time: &TimeGrid<R>, t: R) -> Result<usize> {
    if t < -time.dt() * real::<R>(0.5) || t > time.horizon() + time.dt() * real::<R>(0.5) {
        return Err(GxError::InvalidParameter(format!(
            "time {} outside [0, {}]",
            t,
            time.horizon()
        )));
    }
    let i = (t / time.dt()).round().to_f64().unwrap_or(0.0).max(0.0) as usize;
    Ok(i.min(time.n_steps()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceVerdict {
    BothPass,
    BothFail,
    /// The two checks disagree but both margins sit inside the 2x-tolerance
    /// band: no conclusion at this resolution.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport<R: Real> {
    pub supermartingale: SupermartingaleReport<R>,
    pub residual_violation: R,
    pub tol: R,
    pub verdict: EquivalenceVerdict,
}

/// Run both directions — the pairwise re-solve check and the pointwise
/// supersolution residual — and demand agreeing verdicts. Disagreement with
/// both margins inside the 2x tolerance band is indeterminate; disagreement
/// outside it is an error (the two checks contradict each other).
pub fn check_equivalence<R: Real>(
    u: &SpaceTimeField<R>,
    gen: &GeneratorSpec<R>,
    coeffs: &CoefficientSpec<R>,
    gc: &GCoefficients<R>,
) -> Result<EquivalenceReport<R>> {
    let tol = default_tol(u);
    let pairs = default_pairs(u.time());
    let sm = check_supermartingale(u, gen, coeffs, gc, &pairs, tol)?;
    let (_, residual_violation) = supersolution_residual(u, gc, coeffs, gen)?;
    let res_pass = residual_violation <= tol;
    let two = real::<R>(2.0);
    let verdict = match (sm.verdict, res_pass) {
        (Verdict::Pass, true) => EquivalenceVerdict::BothPass,
        (Verdict::Fail, false) => EquivalenceVerdict::BothFail,
        _ => {
            if sm.worst_violation <= two * tol && residual_violation <= two * tol {
                EquivalenceVerdict::Indeterminate
            } else {
                return Err(GxError::Precondition(format!(
                    "verdicts disagree outside the tolerance band: re-solve violation {}, residual violation {}, tol {}",
                    sm.worst_violation, residual_violation, tol
                )));
            }
        }
    };
    Ok(EquivalenceReport {
        supermartingale: sm,
        residual_violation,
        tol,
        verdict,
    })
}

/// One named payoff for the axiom suite.
pub struct Payoff<R: Real> {
    pub name: String,
    pub f: Box<dyn Fn(R) -> R + Sync>,
}

impl<R: Real> Payoff<R> {
    pub fn new(name: &str, f: impl Fn(R) -> R + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

/// An upper-expectation estimator handle: returns `(value, tolerance)` for a
/// payoff, where the tolerance is whatever slack the estimator grants itself
/// (3 stderr for Monte Carlo, scheme tolerance for the PDE route).
pub trait UpperExpectation<R: Real> {
    fn estimate(&self, phi: &(dyn Fn(R) -> R + Sync)) -> Result<(R, R)>;
}

impl<R: Real, F> UpperExpectation<R> for F
where
    F: Fn(&(dyn Fn(R) -> R + Sync)) -> Result<(R, R)>,
{
    fn estimate(&self, phi: &(dyn Fn(R) -> R + Sync)) -> Result<(R, R)> {
        self(phi)
    }
}

#[derive(Debug, Clone)]
pub struct AxiomCheck<R: Real> {
    pub axiom: &'static str,
    pub detail: String,
    pub lhs: R,
    pub rhs: R,
    pub tol: R,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct AxiomReport<R: Real> {
    pub checks: Vec<AxiomCheck<R>>,
    pub all_pass: bool,
}

/// Check the four sublinear-expectation axioms on the payoff registry:
/// (a) monotonicity for pointwise-ordered pairs, (b) constant preservation,
/// (c) sub-additivity, (d) positive homogeneity. Ordering of payoffs is
/// probed on a lattice of +-6 around zero.
pub fn axiom_suite<R: Real>(
    est: &dyn UpperExpectation<R>,
    payoffs: &[Payoff<R>],
) -> Result<AxiomReport<R>> {
    if payoffs.len() < 2 {
        return Err(GxError::InvalidParameter(
            "axiom suite needs at least two payoffs".into(),
        ));
    }
    let mut checks: Vec<AxiomCheck<R>> = Vec::new();
    let probe: Vec<R> = (-60..=60).map(|k| real::<R>(k as f64 * 0.1)).collect();
    let dominates = |f: &Payoff<R>, g: &Payoff<R>| probe.iter().all(|&x| (f.f)(x) >= (g.f)(x));

    let values: Vec<(R, R)> = payoffs
        .iter()
        .map(|p| est.estimate(p.f.as_ref()))
        .collect::<Result<_>>()?;

    // (a) monotonicity
    for (i, pi) in payoffs.iter().enumerate() {
        for (j, pj) in payoffs.iter().enumerate() {
            if i != j && dominates(pi, pj) {
                let (vi, ti) = values[i];
                let (vj, tj) = values[j];
                let tol = ti + tj;
                checks.push(AxiomCheck {
                    axiom: "monotonicity",
                    detail: format!("{} >= {}", pi.name, pj.name),
                    lhs: vi,
                    rhs: vj,
                    tol,
                    pass: vi >= vj - tol,
                });
            }
        }
    }

    // (b) constant preservation, and translation by a constant
    for c in [R::zero(), R::one(), real::<R>(-2.5)] {
        let (v, tol) = est.estimate(&move |_x: R| c)?;
        checks.push(AxiomCheck {
            axiom: "constant",
            detail: format!("E[{}] = {}", c, c),
            lhs: v,
            rhs: c,
            tol,
            pass: (v - c).abs() <= tol,
        });
    }
    {
        let p0 = &payoffs[0];
        let c = real::<R>(1.0);
        let f = p0.f.as_ref();
        let (shifted, t1) = est.estimate(&move |x: R| f(x) + c)?;
        let (base, t0) = values[0];
        let tol = t0 + t1;
        checks.push(AxiomCheck {
            axiom: "constant",
            detail: format!("E[{} + 1] = E[{}] + 1", p0.name, p0.name),
            lhs: shifted,
            rhs: base + c,
            tol,
            pass: (shifted - (base + c)).abs() <= tol,
        });
    }

    // (c) sub-additivity over all payoff pairs
    for (i, pi) in payoffs.iter().enumerate() {
        for (j, pj) in payoffs.iter().enumerate().skip(i + 1) {
            let fi = pi.f.as_ref();
            let fj = pj.f.as_ref();
            let (sum, ts) = est.estimate(&move |x: R| fi(x) + fj(x))?;
            let (vi, ti) = values[i];
            let (vj, tj) = values[j];
            let tol = ts + ti + tj;
            checks.push(AxiomCheck {
                axiom: "sub-additivity",
                detail: format!("E[{} + {}] <= E[{}] + E[{}]", pi.name, pj.name, pi.name, pj.name),
                lhs: sum,
                rhs: vi + vj,
                tol,
                pass: sum <= vi + vj + tol,
            });
        }
    }

    // (d) positive homogeneity
    for lam in [real::<R>(2.0), real::<R>(0.5)] {
        for (i, p) in payoffs.iter().enumerate() {
            let f = p.f.as_ref();
            let (scaled, ts) = est.estimate(&move |x: R| lam * f(x))?;
            let (v, tv) = values[i];
            let tol = ts + lam * tv;
            checks.push(AxiomCheck {
                axiom: "homogeneity",
                detail: format!("E[{} {}] = {} E[{}]", lam, p.name, lam, p.name),
                lhs: scaled,
                rhs: lam * v,
                tol,
                pass: (scaled - lam * v).abs() <= tol,
            });
        }
    }

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AxiomReport { checks, all_pass })
}
