//! Steady states by monotone iteration.
//!
//! The scalar workhorse is [`solve_single`], which finds the positive solution
//! of `op[s] + s·G(x, s) = 0` for a growth rate `G` strictly decreasing in `s`.
//! Everything else (semi-trivial states, the limiting chain, the coupled pair)
//! is built from repeated scalar solves.

use rayon::prelude::*;
use serde::Serialize;

use crate::dispersal::{BoundaryMode, DispersalOperator, KernelSpec};
use crate::error::{Error, Result};
use crate::grid::{competitive_leq_tol, Field, StatePair};
use crate::reaction::{f_plus, ReactionModel};
use crate::spectral::{mu0, spectral_bound};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Max-norm residual required of every returned state.
    pub tol: f64,
    /// Bracket width for the spectral precondition.
    pub spectral_tol: f64,
    /// Cap on Gauss–Seidel sweeps per scalar solve.
    pub max_sweeps: usize,
    /// Cap on outer iterations (limiting chain, coupled pair).
    pub max_outer: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            tol: 1e-10,
            spectral_tol: 1e-10,
            max_sweeps: 100_000,
            max_outer: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub state: Field,
    /// `‖op[s] + s·G(s)‖∞`
    pub residual: f64,
    pub iterations: usize,
    /// Verified lower and upper solutions enclosing the state.
    pub bracket: Option<(Field, Field)>,
    /// False when the spectral precondition fails and the zero state is returned.
    pub positive: bool,
    /// Principal bound of `op + G(x, 0)`.
    pub principal: f64,
}

/// Residual `op[s] + s·G(x, s)`.
fn scalar_residual(op: &DispersalOperator, growth: &dyn Fn(usize, f64) -> (f64, f64), s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    op.apply_into(s, &mut out);
    for (i, r) in out.iter_mut().enumerate() {
        *r += s[i] * growth(i, s[i]).0;
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a: f64, x| a.max(x.abs()))
}

/// Largest root in `(0, hi]` of `h(t) = t·(G(t) + δ) + r`, given `h(hi) <= 0`.
/// Newton from the right, safeguarded by bisection.
fn node_root(h: impl Fn(f64) -> (f64, f64), hi: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = hi;
    let mut t = hi;
    for _ in 0..200 {
        let (val, slope) = h(t);
        if val == 0.0 {
            return t;
        }
        if val > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - val / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs() || hi - lo <= f64::MIN_POSITIVE {
            return next;
        }
        t = next;
    }
    t
}

/// Positive solution of `op[s] + s·G(x_i, s) = 0`.
///
/// `growth(i, s)` returns `(G, ∂G/∂s)` at node `i`; `bound` is a level above
/// which `G < 0`. If the principal bound of `op + G(x, 0)` is not positive the
/// zero state is returned with `positive = false`.
pub fn solve_single(
    op: &DispersalOperator,
    growth: &dyn Fn(usize, f64) -> (f64, f64),
    bound: f64,
    opts: &SteadyOptions,
) -> Result<SteadyResult> {
    let grid = op.grid().clone();
    let n = grid.len();
    let g0 = Field::new(grid.clone(), (0..n).map(|i| growth(i, 0.0).0).collect())?;
    let spec = spectral_bound(op, &g0, opts.spectral_tol)?;
    // The certified lower bound must be positive; a bracket straddling zero is treated as neutral.
    if spec.lower <= 0.0 {
        return Ok(SteadyResult {
            state: Field::zeros(grid),
            residual: 0.0,
            iterations: 0,
            bracket: None,
            positive: false,
            principal: spec.lambda1,
        });
    }

    // Upper solution: a constant at or above `bound` with nonpositive residual.
    let mut level = bound.max(1e-8);
    let upper = loop {
        let s = vec![level; n];
        if scalar_residual(op, growth, &s).iter().all(|&r| r <= 0.0) {
            break s;
        }
        level *= 2.0;
        if level > 1e12 * bound.max(1.0) {
            return Err(Error::Hypothesis("no constant upper solution found".into()));
        }
    };

    // Lower solution ε·φ₁: (Aφ)_i >= lower·φ_i, so it suffices that
    // lower + G(εφ_i) - G(0) >= 0 at every node.
    let phi = spec.eigenfunction.values();
    let mut eps = level;
    let mut lower_ok = false;
    for _ in 0..200 {
        if (0..n).all(|i| spec.lower + growth(i, eps * phi[i]).0 - growth(i, 0.0).0 >= 0.0) {
            lower_ok = true;
            break;
        }
        eps *= 0.5;
    }
    if !lower_ok {
        return Err(Error::Hypothesis("no lower solution of the form ε·φ₁ found".into()));
    }
    let lower: Vec<f64> = phi.iter().map(|p| eps * p).collect();

    let mut s = upper.clone();
    let m = op.matrix();
    let mut iterations = 0;
    let mut residual = max_abs(&scalar_residual(op, growth, &s));
    let newton_switch = 1e-4;
    while residual > opts.tol {
        // Nonlinear Gauss–Seidel sweep; from an upper solution every update lowers s_i.
        for i in 0..n {
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    r += m[(i, j)] * s[j];
                }
            }
            let delta = m[(i, i)];
            let h = |t: f64| {
                let (gv, gs) = growth(i, t);
                (t * (gv + delta) + r, gv + delta + t * gs)
            };
            s[i] = node_root(h, s[i]);
        }
        iterations += 1;
        residual = max_abs(&scalar_residual(op, growth, &s));
        if residual > opts.tol && (residual < newton_switch || iterations % 64 == 0) {
            if let Some((next, res)) = newton_polish(op, growth, &s, residual, opts.tol) {
                s = next;
                residual = res;
            }
        }
        if iterations >= opts.max_sweeps && residual > opts.tol {
            return Err(Error::NoConvergence {
                what: "single-species monotone iteration",
                iterations,
                last: residual,
            });
        }
    }

    Ok(SteadyResult {
        state: Field::new(grid.clone(), s)?,
        residual,
        iterations,
        bracket: Some((Field::from_raw(grid.clone(), lower), Field::from_raw(grid, upper))),
        positive: true,
        principal: spec.lambda1,
    })
}

/// Newton steps on `op[s] + s·G(s) = 0`; returns the improved state only if the
/// residual drops and positivity holds.
fn newton_polish(
    op: &DispersalOperator,
    growth: &dyn Fn(usize, f64) -> (f64, f64),
    start: &[f64],
    start_res: f64,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = start.len();
    let mut s = start.to_vec();
    let mut res = start_res;
    let mut improved = false;
    for _ in 0..12 {
        let r = scalar_residual(op, growth, &s);
        let mut jac = op.matrix().clone();
        for i in 0..n {
            let (gv, gs) = growth(i, s[i]);
            jac[(i, i)] += gv + s[i] * gs;
        }
        let rhs = nalgebra::DVector::from_iterator(n, r.iter().map(|x| -x));
        let step = jac.lu().solve(&rhs)?;
        let next: Vec<f64> = s.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        if next.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            break;
        }
        let next_res = max_abs(&scalar_residual(op, growth, &next));
        if next_res >= res {
            break;
        }
        s = next;
        res = next_res;
        improved = true;
        if res <= tol {
            break;
        }
    }
    improved.then_some((s, res))
}

/// Semi-trivial state θ_d of `d·K[u] + u f(x, u, 0) = 0`; `k_op` carries the rate d.
pub fn solve_theta(k_op: &DispersalOperator, model: &dyn ReactionModel, opts: &SteadyOptions) -> Result<SteadyResult> {
    let x = k_op.grid().nodes().to_vec();
    let growth = move |i: usize, s: f64| (model.f(x[i], s, 0.0), model.f_u(x[i], s, 0.0));
    solve_single(k_op, &growth, model.bound(), opts)
}

/// Semi-trivial state η_D of `D·P[v] + v g(x, 0, v) = 0`; `p_op` carries the rate D.
pub fn solve_eta(p_op: &DispersalOperator, model: &dyn ReactionModel, opts: &SteadyOptions) -> Result<SteadyResult> {
    let x = p_op.grid().nodes().to_vec();
    let growth = move |i: usize, s: f64| (model.g(x[i], 0.0, s), model.g_v(x[i], 0.0, s));
    solve_single(p_op, &growth, model.bound(), opts)
}

/// u-equation at frozen v: `d·K[u] + u f(x, u, v) = 0`.
fn solve_u_given_v(
    k_op: &DispersalOperator,
    model: &dyn ReactionModel,
    v: &[f64],
    opts: &SteadyOptions,
) -> Result<SteadyResult> {
    let x = k_op.grid().nodes();
    let growth = |i: usize, s: f64| (model.f(x[i], s, v[i]), model.f_u(x[i], s, v[i]));
    solve_single(k_op, &growth, model.bound(), opts)
}

/// v-equation at frozen u: `D·P[v] + v g(x, u, v) = 0`.
fn solve_v_given_u(
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    u: &[f64],
    opts: &SteadyOptions,
) -> Result<SteadyResult> {
    let x = p_op.grid().nodes();
    let growth = |i: usize, s: f64| (model.g(x[i], u[i], s), model.g_v(x[i], u[i], s));
    solve_single(p_op, &growth, model.bound(), opts)
}

/// `F₊(x_i, v_i)` on the grid.
pub fn clamp_profile(model: &dyn ReactionModel, v: &Field) -> Result<Field> {
    let values = v
        .grid()
        .nodes()
        .iter()
        .zip(v.values())
        .map(|(&x, &vi)| f_plus(model, x, vi))
        .collect::<Result<Vec<_>>>()?;
    Field::new(v.grid().clone(), values)
}

/// Residual of the reduced limiting equation `D·P[v] + v g(x, F₊(x, v), v)`.
pub fn limit_residual(p_op: &DispersalOperator, model: &dyn ReactionModel, v: &Field) -> Result<Field> {
    let mut out = p_op.apply(v)?;
    let fp = clamp_profile(model, v)?;
    let x = v.grid().nodes();
    for (i, r) in out.values_mut().iter_mut().enumerate() {
        let vi = v.values()[i];
        *r += vi * model.g(x[i], fp.values()[i], vi);
    }
    Ok(out)
}

/// One step of the limiting chain: the positive solution of
/// `D·P[v] + v g(x, F₊(x, prev), v) = 0`.
fn chain_step(
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    prev: &Field,
    opts: &SteadyOptions,
) -> Result<SteadyResult> {
    let fp = clamp_profile(model, prev)?;
    let x = p_op.grid().nodes();
    let fpv = fp.values();
    let growth = |i: usize, s: f64| (model.g(x[i], fpv[i], s), model.g_v(x[i], fpv[i], s));
    solve_single(p_op, &growth, model.bound(), opts)
}

/// Solution of the d → 0 limiting system by the monotone chain V₁ < V₂ < … < η_D.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    /// `μ0`; the chain is run only when it is positive.
    pub mu0: f64,
    pub eta: SteadyResult,
    /// V₁, V₂, … (empty when `mu0 <= 0`).
    pub chain: Vec<Field>,
    /// `V₀ = lim V_k` (zero when `mu0 <= 0`).
    pub v0: Field,
    /// `U₀ = F₊(x, V₀)`.
    pub u0: Field,
    /// Residual of the reduced equation at V₀.
    pub residual: f64,
    pub positive: bool,
}

/// Runs the chain `V_k` solving `D·P[v] + v g(x, F₊(x, V_{k-1}), v) = 0` with
/// `F₊(x, V₀) := F₊(x, 0)`, asserting `V_{k-1} <= V_k <= η_D` at every step.
pub fn monotone_iterate_v(
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    opts: &SteadyOptions,
) -> Result<LimitSolution> {
    let grid = p_op.grid().clone();
    let eta = solve_eta(p_op, model, opts)?;
    let mu0 = mu0(p_op, model, opts.spectral_tol)?;
    if mu0 <= 0.0 {
        let zero = Field::zeros(grid.clone());
        let u0 = clamp_profile(model, &zero)?;
        return Ok(LimitSolution {
            mu0,
            eta,
            chain: Vec::new(),
            v0: zero,
            u0,
            residual: 0.0,
            positive: false,
        });
    }
    let chain_tol = 100.0 * opts.tol;
    let mut chain: Vec<Field> = Vec::new();
    let mut prev = Field::zeros(grid.clone());
    for _ in 0..opts.max_outer {
        let next = chain_step(p_op, model, &prev, opts)?;
        if !next.positive {
            return Err(Error::ChainViolation(format!(
                "chain step lost positivity after {} steps",
                chain.len()
            )));
        }
        let v = next.state;
        if !prev.leq(&v, chain_tol)? {
            return Err(Error::ChainViolation(format!("V_{} not above V_{}", chain.len() + 1, chain.len())));
        }
        if !v.leq(&eta.state, chain_tol)? {
            return Err(Error::ChainViolation(format!("V_{} exceeds η_D", chain.len() + 1)));
        }
        let step = v.dist_inf(&prev)?;
        chain.push(v.clone());
        if step <= opts.tol {
            let residual = limit_residual(p_op, model, &v)?.norm_inf();
            if residual <= opts.tol {
                let u0 = clamp_profile(model, &v)?;
                return Ok(LimitSolution {
                    mu0,
                    eta,
                    chain,
                    v0: v,
                    u0,
                    residual,
                    positive: true,
                });
            }
        }
        prev = v;
    }
    Err(Error::NoConvergence {
        what: "limiting chain",
        iterations: chain.len(),
        last: chain
            .len()
            .checked_sub(2)
            .map(|k| chain[k].dist_inf(&chain[k + 1]).unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN),
    })
}

/// Limits of the limiting-chain map iterated from below (V₁ upward) and from above (η_D downward).
#[derive(Debug, Clone)]
pub struct TwoSidedProbe {
    pub from_below: Field,
    pub from_above: Field,
    pub below_steps: usize,
    pub above_steps: usize,
    pub gap: f64,
}

/// Uniqueness probe for the reduced limiting equation.
pub fn two_sided_probe(
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    opts: &SteadyOptions,
) -> Result<TwoSidedProbe> {
    let below = monotone_iterate_v(p_op, model, opts)?;
    if !below.positive {
        return Err(Error::Hypothesis("μ0 <= 0: the limiting equation has no positive solution".into()));
    }
    let chain_tol = 100.0 * opts.tol;
    let mut prev = below.eta.state.clone();
    let mut above_steps = 0;
    let from_above = loop {
        let next = chain_step(p_op, model, &prev, opts)?.state;
        above_steps += 1;
        if !next.leq(&prev, chain_tol)? {
            return Err(Error::ChainViolation(format!("downward chain increased at step {above_steps}")));
        }
        let step = next.dist_inf(&prev)?;
        if step <= opts.tol && limit_residual(p_op, model, &next)?.norm_inf() <= opts.tol {
            break next;
        }
        if above_steps >= opts.max_outer {
            return Err(Error::NoConvergence {
                what: "downward limiting chain",
                iterations: above_steps,
                last: step,
            });
        }
        prev = next;
    };
    let gap = from_above.dist_inf(&below.v0)?;
    Ok(TwoSidedProbe {
        from_below: below.v0,
        from_above,
        below_steps: below.chain.len(),
        above_steps,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    StrictlyBelow,
    Equal,
    Violation,
}

/// Orders a lower and an upper solution of the reduced limiting equation.
///
/// `sub` must satisfy `D·P[v] + v g(x, F₊(x, v), v) >= -tol` and `sup` the
/// reverse inequality; otherwise the inputs are rejected.
pub fn check_comparison(
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    sub: &Field,
    sup: &Field,
    tol: f64,
) -> Result<Ordering> {
    sub.check_same_grid(sup)?;
    let rs = limit_residual(p_op, model, sub)?;
    if rs.min() < -tol {
        return Err(Error::NotOrderedSolution(format!(
            "lower solution residual reaches {}",
            rs.min()
        )));
    }
    let ru = limit_residual(p_op, model, sup)?;
    if ru.max() > tol {
        return Err(Error::NotOrderedSolution(format!(
            "upper solution residual reaches {}",
            ru.max()
        )));
    }
    let diff = sup - sub;
    Ok(if diff.norm_inf() <= tol {
        Ordering::Equal
    } else if diff.min() > 0.0 {
        Ordering::StrictlyBelow
    } else {
        Ordering::Violation
    })
}

/// Residual of the coupled stationary system, `max(‖dK[u] + u f‖∞, ‖DP[v] + v g‖∞)`.
pub fn pair_residual(
    k_op: &DispersalOperator,
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    s: &StatePair,
) -> Result<f64> {
    let x = s.grid().nodes();
    let (u, v) = (s.u.values(), s.v.values());
    let ku = k_op.apply(&s.u)?;
    let pv = p_op.apply(&s.v)?;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        worst = worst
            .max((ku.values()[i] + u[i] * model.f(x[i], u[i], v[i])).abs())
            .max((pv.values()[i] + v[i] * model.g(x[i], u[i], v[i])).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    /// Both sequences reach the same positive pair.
    Unique,
    /// The sequences stop at different states, at least one positive.
    Distinct,
    /// Neither limit is positive: one species excludes the other.
    NoPositive,
}

#[derive(Debug, Clone)]
pub struct PairSolution {
    pub kind: PairKind,
    /// Limit of the sequence started at (θ_d, 0), the top of the competitive order.
    pub from_theta: StatePair,
    /// Limit of the sequence started at (0, η_D), the bottom.
    pub from_eta: StatePair,
    pub iterations: usize,
    /// Worst stationary residual of the two limits.
    pub residual: f64,
}

impl PairSolution {
    /// The positive steady state when it is unique.
    pub fn pair(&self) -> Option<&StatePair> {
        (self.kind == PairKind::Unique).then_some(&self.from_theta)
    }
}

fn is_positive(s: &StatePair) -> bool {
    s.u.min() > 0.0 && s.v.min() > 0.0
}

/// Coupled stationary problem by alternating scalar solves from both
/// semi-trivial corners. `k_op` carries rate d, `p_op` rate D.
///
/// The top sequence moves down in the competitive order, the bottom one up,
/// and the top stays above the bottom at every step.
pub fn solve_pair(
    k_op: &DispersalOperator,
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    opts: &SteadyOptions,
) -> Result<PairSolution> {
    let theta = solve_theta(k_op, model, opts)?;
    let eta = solve_eta(p_op, model, opts)?;
    if !theta.positive || !eta.positive {
        return Err(Error::Hypothesis("a semi-trivial steady state does not exist".into()));
    }
    let floor = 1e-8 * model.bound();
    let order_tol = 100.0 * opts.tol;

    let mut top = StatePair::new(theta.state.clone(), Field::zeros(theta.state.grid().clone()))?;
    let mut bottom = StatePair::new(Field::zeros(eta.state.grid().clone()), eta.state.clone())?;
    let (mut top_done, mut bottom_done) = (false, false);
    let mut iterations = 0;
    while !(top_done && bottom_done) {
        if iterations >= opts.max_outer {
            return Err(Error::NoConvergence {
                what: "coupled steady-state iteration",
                iterations,
                last: top.dist_inf(&bottom)?,
            });
        }
        iterations += 1;
        if !top_done {
            let v = solve_v_given_u(p_op, model, top.u.values(), opts)?.state;
            let u = solve_u_given_v(k_op, model, v.values(), opts)?.state;
            let next = StatePair::new(u, v)?;
            if !competitive_leq_tol(&next, &top, order_tol)? {
                return Err(Error::ChainViolation("top sequence moved up in the competitive order".into()));
            }
            let step = next.dist_inf(&top)?;
            top = next;
            top_done = step <= opts.tol && pair_residual(k_op, p_op, model, &top)? <= opts.tol;
        }
        if !bottom_done {
            let u = solve_u_given_v(k_op, model, bottom.v.values(), opts)?.state;
            let v = solve_v_given_u(p_op, model, u.values(), opts)?.state;
            let next = StatePair::new(u, v)?;
            if !competitive_leq_tol(&bottom, &next, order_tol)? {
                return Err(Error::ChainViolation("bottom sequence moved down in the competitive order".into()));
            }
            let step = next.dist_inf(&bottom)?;
            bottom = next;
            bottom_done = step <= opts.tol && pair_residual(k_op, p_op, model, &bottom)? <= opts.tol;
        }
        if !competitive_leq_tol(&bottom, &top, order_tol)? {
            return Err(Error::ChainViolation("bottom sequence overtook the top sequence".into()));
        }
    }

    let residual = pair_residual(k_op, p_op, model, &top)?.max(pair_residual(k_op, p_op, model, &bottom)?);
    let kind = match (is_positive_above(&top, floor), is_positive_above(&bottom, floor)) {
        (false, false) => PairKind::NoPositive,
        _ if top.dist_inf(&bottom)? <= 10.0 * opts.tol && is_positive(&top) => PairKind::Unique,
        _ => PairKind::Distinct,
    };
    Ok(PairSolution {
        kind,
        from_theta: top,
        from_eta: bottom,
        iterations,
        residual,
    })
}

fn is_positive_above(s: &StatePair, floor: f64) -> bool {
    s.u.min() > floor && s.v.min() > floor
}

/// Two-sided bounds `(T - C_lo·r_lo(d))₊ < S_d < T + C_up·r_up(d)` fitted over a range of d.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichCertificate {
    pub d_values: Vec<f64>,
    /// `max_x (S_d - T)₊`
    pub upper_gap: Vec<f64>,
    /// `max_x (T - S_d)₊`
    pub lower_gap: Vec<f64>,
    /// `min_x (S_d - (T - C_lo r_lo)₊)` with the fitted constant.
    pub lower_margin: Vec<f64>,
    /// `min_x (T + C_up r_up - S_d)` with the fitted constant.
    pub upper_margin: Vec<f64>,
    /// Smallest admissible `(C_lo, C_up)` over the sampled d.
    pub fitted_constants: (f64, f64),
    /// Log-log slopes of `(lower_gap, upper_gap)` against d; `None` when a gap
    /// vanishes at some d.
    pub fitted_exponents: (Option<f64>, Option<f64>),
}

impl SandwichCertificate {
    pub fn holds(&self) -> bool {
        self.lower_margin.iter().chain(&self.upper_margin).all(|&m| m >= 0.0)
    }
}

/// Least-squares slope of `log y` against `log d`. Needs every `y > 0` and at least two points.
pub fn loglog_slope(d: &[f64], y: &[f64]) -> Option<f64> {
    if d.len() < 2 || y.iter().any(|&v| !(v > 1e-300)) {
        return None;
    }
    let lx: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fits the sandwich constants for `solutions[k]` (at `d_values[k]`) around `target`.
pub fn fit_sandwich(
    d_values: &[f64],
    target: &[Field],
    solutions: &[Field],
    lower_rate: impl Fn(f64) -> f64,
    upper_rate: impl Fn(f64) -> f64,
) -> Result<SandwichCertificate> {
    let mut upper_gap = Vec::new();
    let mut lower_gap = Vec::new();
    let mut c_lo: f64 = 0.0;
    let mut c_up: f64 = 0.0;
    // absolute slack so that exactly matching profiles keep nonnegative margins under rounding
    let slack = 1e-14;
    for ((&d, t), s) in d_values.iter().zip(target).zip(solutions) {
        t.check_same_grid(s)?;
        let up = t.values().iter().zip(s.values()).map(|(a, b)| (b - a).max(0.0)).fold(0.0, f64::max);
        let lo = t.values().iter().zip(s.values()).map(|(a, b)| (a - b).max(0.0)).fold(0.0, f64::max);
        upper_gap.push(up);
        lower_gap.push(lo);
        c_up = c_up.max((up + slack) / upper_rate(d));
        c_lo = c_lo.max((lo + slack) / lower_rate(d));
    }
    let mut lower_margin = Vec::new();
    let mut upper_margin = Vec::new();
    for ((&d, t), s) in d_values.iter().zip(target).zip(solutions) {
        let (rl, ru) = (lower_rate(d), upper_rate(d));
        lower_margin.push(
            t.values()
                .iter()
                .zip(s.values())
                .map(|(a, b)| b - (a - c_lo * rl).max(0.0))
                .fold(f64::INFINITY, f64::min),
        );
        upper_margin.push(
            t.values()
                .iter()
                .zip(s.values())
                .map(|(a, b)| a + c_up * ru - b)
                .fold(f64::INFINITY, f64::min),
        );
    }
    Ok(SandwichCertificate {
        d_values: d_values.to_vec(),
        fitted_exponents: (loglog_slope(d_values, &lower_gap), loglog_slope(d_values, &upper_gap)),
        upper_gap,
        lower_gap,
        lower_margin,
        upper_margin,
        fitted_constants: (c_lo, c_up),
    })
}

/// θ_d against `F₊(x, 0)`: `(F₊ - C d)₊ < θ_d < F₊ + C √d`.
pub fn theta_sandwich(
    kernel: &KernelSpec,
    mode: BoundaryMode,
    grid: &std::sync::Arc<crate::grid::Grid>,
    model: &dyn ReactionModel,
    d_list: &[f64],
    opts: &SteadyOptions,
) -> Result<SandwichCertificate> {
    let target = clamp_profile(model, &Field::zeros(grid.clone()))?;
    let thetas = d_list
        .par_iter()
        .map(|&d| {
            let op = DispersalOperator::assemble(kernel, grid, mode, d)?;
            let r = solve_theta(&op, model, opts)?;
            if !r.positive {
                return Err(Error::Hypothesis(format!("θ_d does not exist at d = {d}")));
            }
            Ok(r.state)
        })
        .collect::<Result<Vec<_>>>()?;
    fit_sandwich(d_list, &vec![target; d_list.len()], &thetas, |d| d, f64::sqrt)
}

/// Behavior of the positive pair (u_d, v_d) as d → 0.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    /// `(U₀ - C₂ d)₊ < u_d < U₀ + C₂ √d`
    pub u: SandwichCertificate,
    /// `(V₀ - C₃ √d)₊ < v_d < V₀ + C₃ d`
    pub v: SandwichCertificate,
    /// `‖u_d - F₊(·, v_d)‖∞`
    pub u_clamp_dev: Vec<f64>,
    pub u_clamp_exponent: Option<f64>,
    /// `‖v_d - V₀‖∞`
    pub v_dev: Vec<f64>,
    pub v_dev_exponent: Option<f64>,
    /// Stationary residual at each d.
    pub residuals: Vec<f64>,
}

/// Runs [`solve_pair`] along `d_list` and compares with the limiting solution.
/// Vacuous (an error) when no positive pair is found at some d.
pub fn asymptotic_sandwich(
    k_kernel: &KernelSpec,
    k_mode: BoundaryMode,
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    d_list: &[f64],
    opts: &SteadyOptions,
) -> Result<AsymptoticReport> {
    let limit = monotone_iterate_v(p_op, model, opts)?;
    if !limit.positive {
        return Err(Error::Hypothesis("μ0 <= 0: no positive limiting profile".into()));
    }
    let grid = p_op.grid();
    let pairs = d_list
        .par_iter()
        .map(|&d| {
            let k_op = DispersalOperator::assemble(k_kernel, grid, k_mode, d)?;
            let sol = solve_pair(&k_op, p_op, model, opts)?;
            match sol.pair() {
                Some(p) => Ok((p.clone(), sol.residual)),
                None => Err(Error::Hypothesis(format!("no unique positive pair at d = {d}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let us: Vec<Field> = pairs.iter().map(|(p, _)| p.u.clone()).collect();
    let vs: Vec<Field> = pairs.iter().map(|(p, _)| p.v.clone()).collect();
    let k = d_list.len();
    let u = fit_sandwich(d_list, &vec![limit.u0.clone(); k], &us, |d| d, f64::sqrt)?;
    let v = fit_sandwich(d_list, &vec![limit.v0.clone(); k], &vs, f64::sqrt, |d| d)?;
    let u_clamp_dev = pairs
        .iter()
        .map(|(p, _)| p.u.dist_inf(&clamp_profile(model, &p.v)?))
        .collect::<Result<Vec<_>>>()?;
    let v_dev = vs.iter().map(|v| v.dist_inf(&limit.v0)).collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticReport {
        u_clamp_exponent: loglog_slope(d_list, &u_clamp_dev),
        v_dev_exponent: loglog_slope(d_list, &v_dev),
        u,
        v,
        u_clamp_dev,
        v_dev,
        residuals: pairs.iter().map(|(_, r)| *r).collect(),
    })
}
