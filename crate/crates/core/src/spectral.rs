//! Principal spectral bound of `A = rate·K + diag(γ)` and the stability indicators.
//!
//! `A` is Metzler, so `A + sI` is entrywise nonnegative for a large enough
//! shift and the principal bound is a real eigenvalue with a positive
//! eigenvector. For any positive test vector φ the Collatz–Wielandt quotients
//! satisfy `min (Aφ)/φ <= λ1 <= max (Aφ)/φ`; the solver stops when this
//! bracket is narrower than the tolerance, so every returned value carries
//! its own certificate.
//!
//! Iteration runs in two phases. Shifted power iteration handles well
//! separated spectra cheaply. When it stalls, Wielandt inverse iteration
//! takes over with `σ` strictly above the current upper bound: `σI - A` is
//! then a nonsingular M-matrix, its inverse is nonnegative, and positivity
//! of the iterate is kept.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dispersal::DispersalOperator;
use crate::error::{Error, Result};
use crate::grid::{same_grid, Field};
use crate::reaction::{f_plus, ReactionModel};

/// Default bracket width for [`spectral_bound`].
pub const DEFAULT_TOL: f64 = 1e-10;

const POWER_STEPS: usize = 300;
const INVERSE_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda1: f64,
    /// Positive, max-normalized principal eigenvector.
    pub eigenfunction: Field,
    pub iterations: usize,
    /// `‖Aφ - λ1 φ‖∞ / ‖φ‖∞`
    pub residual: f64,
    /// Collatz–Wielandt bracket `(min (Aφ)/φ, max (Aφ)/φ)` for the returned φ.
    pub lower: f64,
    pub upper: f64,
}

impl SpectralResult {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

fn system_matrix(op: &DispersalOperator, gamma: &Field) -> Result<DMatrix<f64>> {
    if !same_grid(op.grid(), gamma.grid()) {
        return Err(Error::GridMismatch("operator and potential differ in grid".into()));
    }
    let mut a = op.matrix().clone();
    for (i, g) in gamma.values().iter().enumerate() {
        a[(i, i)] += g;
    }
    Ok(a)
}

/// Collatz–Wielandt quotients of `a` at a strictly positive `phi`.
fn quotient_bounds(a: &DMatrix<f64>, phi: &DVector<f64>) -> (f64, f64, DVector<f64>) {
    let aphi = a * phi;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (num, den) in aphi.iter().zip(phi.iter()) {
        let q = num / den;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    (lo, hi, aphi)
}

fn normalize_positive(v: &mut DVector<f64>) -> bool {
    let m = v.max();
    if !(m.is_finite() && m > 0.0) {
        return false;
    }
    *v /= m;
    // rounding can leave tiny negative entries where the true vector is positive
    let floor = f64::MIN_POSITIVE;
    v.iter_mut().for_each(|x| *x = x.max(floor));
    true
}

/// Principal spectral bound of `op + diag(gamma)`, certified to within `tol`.
pub fn spectral_bound(op: &DispersalOperator, gamma: &Field, tol: f64) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let a = system_matrix(op, gamma)?;
    let n = a.nrows();
    let shift = (0..n)
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;

    let mut phi = DVector::from_element(n, 1.0);
    let mut iterations = 0;
    let (mut lo, mut hi, mut aphi) = quotient_bounds(&a, &phi);

    let finish = |phi: DVector<f64>, lo: f64, hi: f64, aphi: &DVector<f64>, iterations| {
        let lambda1 = 0.5 * (lo + hi);
        let residual = (aphi - &phi * lambda1).amax() / phi.amax();
        SpectralResult {
            lambda1,
            eigenfunction: Field::from_raw(gamma.grid().clone(), phi.iter().copied().collect()),
            iterations,
            residual,
            lower: lo,
            upper: hi,
        }
    };

    // Phase 1: power iteration on A + sI.
    let mut last_gap = hi - lo;
    let mut stall = 0;
    while iterations < POWER_STEPS && hi - lo > tol {
        let mut next = &aphi + &phi * shift;
        if !normalize_positive(&mut next) {
            break;
        }
        phi = next;
        iterations += 1;
        (lo, hi, aphi) = quotient_bounds(&a, &phi);
        let gap = hi - lo;
        if gap > 0.98 * last_gap {
            stall += 1;
            if stall >= 5 {
                break;
            }
        } else {
            stall = 0;
        }
        last_gap = gap;
    }
    if hi - lo <= tol {
        return Ok(finish(phi, lo, hi, &aphi, iterations));
    }

    // Phase 2: Wielandt inverse iteration with σ just above the upper bound.
    let scale = 1.0 + hi.abs();
    for _ in 0..INVERSE_STEPS {
        let sigma = hi + (0.5 * (hi - lo)).max(1e-12 * scale);
        let mut m = -a.clone();
        for i in 0..n {
            m[(i, i)] += sigma;
        }
        let lu = m.lu();
        let Some(mut next) = lu.solve(&phi) else {
            break;
        };
        if !normalize_positive(&mut next) {
            break;
        }
        phi = next;
        iterations += 1;
        let (l, h, ap) = quotient_bounds(&a, &phi);
        // Both quotients bound λ1 for any positive φ; keep the tightest.
        (lo, hi, aphi) = (l, h, ap);
        if hi - lo <= tol {
            return Ok(finish(phi, lo, hi, &aphi, iterations));
        }
    }
    Err(Error::NoConvergence {
        what: "principal eigenvalue iteration",
        iterations,
        last: hi - lo,
    })
}

/// `(min (Aφ)/φ, max (Aφ)/φ)` for `A = op + diag(gamma)` and a positive `phi`.
pub fn cw_bounds(op: &DispersalOperator, gamma: &Field, phi: &Field) -> Result<(f64, f64)> {
    phi.check_same_grid(gamma)?;
    if let Some(i) = phi.values().iter().position(|&p| !(p > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "test function must be positive, entry {i} is {}",
            phi.values()[i]
        )));
    }
    let a = system_matrix(op, gamma)?;
    let p = DVector::from_column_slice(phi.values());
    let (lo, hi, _) = quotient_bounds(&a, &p);
    Ok((lo, hi))
}

/// One row of a small-rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallRateRow {
    pub d: f64,
    pub lambda1: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// `|λ1(d) - max γ|` where the max is over grid nodes.
    pub gap: f64,
    /// `gap <= 2d`
    pub within_bound: bool,
}

/// `λ1(d)` for `d·K + γ` along `d_list`, compared with `max γ`.
///
/// `op` fixes the kernel and boundary mode; its rate is replaced by each `d`.
pub fn small_d_limit_check(
    op: &DispersalOperator,
    gamma: &Field,
    d_list: &[f64],
    tol: f64,
) -> Result<Vec<SmallRateRow>> {
    let max_gamma = gamma.max();
    d_list
        .iter()
        .map(|&d| {
            let scaled = DispersalOperator::assemble(op.kernel(), op.grid(), op.mode(), d)?;
            let r = spectral_bound(&scaled, gamma, tol)?;
            let gap = (r.lambda1 - max_gamma).abs();
            Ok(SmallRateRow {
                d,
                lambda1: r.lambda1,
                lower: r.lower,
                upper: r.upper,
                iterations: r.iterations,
                gap,
                within_bound: gap <= 2.0 * d,
            })
        })
        .collect()
}

/// Invasion indicators at the semi-trivial states and their small-d limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorSet {
    /// Principal bound of `D·P + g(x, θ_d, 0)`.
    pub mu_theta: f64,
    /// Principal bound of `d·K + f(x, 0, η_D)`.
    pub nu_eta: f64,
    /// Principal bound of `D·P + g(x, F₊(x, 0), 0)`.
    pub mu0: f64,
    /// `max_x f(x, 0, η_D)`.
    pub nu0: f64,
}

/// Pointwise potential `x_i ↦ h(x_i, s_i)`.
pub(crate) fn potential(
    s: &Field,
    h: impl Fn(f64, f64) -> f64,
) -> Field {
    let x = s.grid().nodes();
    Field::from_raw(
        s.grid().clone(),
        s.values().iter().zip(x).map(|(&si, &xi)| h(xi, si)).collect(),
    )
}

/// `g(x, F₊(x, 0), 0)` on the grid.
pub fn mu0_potential(model: &dyn ReactionModel, grid_field: &Field) -> Result<Field> {
    let values = grid_field
        .grid()
        .nodes()
        .iter()
        .map(|&x| Ok(model.g(x, f_plus(model, x, 0.0)?, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    Field::new(grid_field.grid().clone(), values)
}

/// `μ0`, the principal bound of `D·P + g(x, F₊(x, 0), 0)`; independent of `d`.
pub fn mu0(d_op_v: &DispersalOperator, model: &dyn ReactionModel, tol: f64) -> Result<f64> {
    let zero = Field::zeros(d_op_v.grid().clone());
    Ok(spectral_bound(d_op_v, &mu0_potential(model, &zero)?, tol)?.lambda1)
}

/// `ν_D^0 = max_x f(x, 0, η_D)`; independent of `d`.
pub fn nu0(model: &dyn ReactionModel, eta_d: &Field) -> f64 {
    potential(eta_d, |x, e| model.f(x, 0.0, e)).max()
}

/// Computes the four indicators. `k_op` is `d·K`, `p_op` is `D·P`.
pub fn indicators(
    k_op: &DispersalOperator,
    p_op: &DispersalOperator,
    model: &dyn ReactionModel,
    theta_d: &Field,
    eta_d: &Field,
    tol: f64,
) -> Result<IndicatorSet> {
    let mu_theta = spectral_bound(p_op, &potential(theta_d, |x, t| model.g(x, t, 0.0)), tol)?.lambda1;
    let nu_eta = spectral_bound(k_op, &potential(eta_d, |x, e| model.f(x, 0.0, e)), tol)?.lambda1;
    Ok(IndicatorSet {
        mu_theta,
        nu_eta,
        mu0: mu0(p_op, model, tol)?,
        nu0: nu0(model, eta_d),
    })
}
