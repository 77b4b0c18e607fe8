//! Reaction terms `f(x, u, v)`, `g(x, u, v)`, the implicit root `u = F(x, v)` of
//! `f(x, u, v) = 0`, and lattice audits of the structural assumptions.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Growth rates of a two-species competition system with analytic partials.
pub trait ReactionModel: Debug + Send + Sync {
    fn f(&self, x: f64, u: f64, v: f64) -> f64;
    fn g(&self, x: f64, u: f64, v: f64) -> f64;
    fn f_u(&self, x: f64, u: f64, v: f64) -> f64;
    fn f_v(&self, x: f64, u: f64, v: f64) -> f64;
    fn g_u(&self, x: f64, u: f64, v: f64) -> f64;
    fn g_v(&self, x: f64, u: f64, v: f64) -> f64;

    /// Box bound M: `f(x, u, v) < 0` for `u >= M` and `g(x, u, v) < 0` for `v >= M`.
    fn bound(&self) -> f64;

    /// Root `F(x, v)` of `u ↦ f(x, u, v)`, searched on `[-M, M]` by bisection.
    fn solve_f(&self, x: f64, v: f64) -> Result<f64> {
        bisect_decreasing(|u| self.f(x, u, v), -self.bound(), self.bound())
            .ok_or(Error::NotBracketed { x, v })
    }
}

/// Root of a decreasing function on `[lo, hi]`, or `None` if there is no sign change.
fn bisect_decreasing(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (h_lo, h_hi) = (h(lo), h(hi));
    if h_lo < 0.0 || h_hi > 0.0 {
        return None;
    }
    if h_lo == 0.0 {
        return Some(lo);
    }
    if h_hi == 0.0 {
        return Some(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * (1.0 + mid.abs()) || mid == lo || mid == hi {
            return Some(mid);
        }
        let hm = h(mid);
        if hm == 0.0 {
            return Some(mid);
        }
        if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Spatial resource distribution `m(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum ResourceProfile {
    Constant { value: f64 },
    /// `intercept + slope · x`
    Linear { intercept: f64, slope: f64, a: f64, b: f64 },
    /// `mean + amplitude · sin(2π · frequency · x)`
    Sinusoidal { mean: f64, amplitude: f64, frequency: f64 },
}

impl ResourceProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ResourceProfile::Constant { value } => value,
            ResourceProfile::Linear { intercept, slope, .. } => intercept + slope * x,
            ResourceProfile::Sinusoidal {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * frequency * x).sin(),
        }
    }

    /// Upper bound of the profile over its domain.
    pub fn sup(&self) -> f64 {
        match *self {
            ResourceProfile::Constant { value } => value,
            ResourceProfile::Linear { intercept, slope, a, b } => {
                (intercept + slope * a).max(intercept + slope * b)
            }
            ResourceProfile::Sinusoidal { mean, amplitude, .. } => mean + amplitude.abs(),
        }
    }
}

/// Parameters of `f = m(x) - u - c v`, `g = m(x) - b u - v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterraParams {
    pub m: ResourceProfile,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LotkaVolterra {
    params: LotkaVolterraParams,
    bound: f64,
}

impl LotkaVolterra {
    pub fn new(params: LotkaVolterraParams) -> Result<LotkaVolterra> {
        let LotkaVolterraParams { b, c, .. } = params;
        if !(b.is_finite() && c.is_finite() && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "competition coefficients must be positive, got b = {b}, c = {c}"
            )));
        }
        Ok(LotkaVolterra {
            params,
            bound: params.m.sup().max(0.0) + 1.0,
        })
    }

    /// Like [`LotkaVolterra::new`] but rejects `bc >= 1` (strong competition).
    pub fn weak_competition(params: LotkaVolterraParams) -> Result<LotkaVolterra> {
        if params.b * params.c >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "weak competition requires bc < 1, got bc = {}",
                params.b * params.c
            )));
        }
        LotkaVolterra::new(params)
    }

    pub fn params(&self) -> &LotkaVolterraParams {
        &self.params
    }
}

/// Builds the Lotka–Volterra competition model.
pub fn lv_model(params: LotkaVolterraParams) -> Result<LotkaVolterra> {
    LotkaVolterra::new(params)
}

impl ReactionModel for LotkaVolterra {
    fn f(&self, x: f64, u: f64, v: f64) -> f64 {
        self.params.m.eval(x) - u - self.params.c * v
    }

    fn g(&self, x: f64, u: f64, v: f64) -> f64 {
        self.params.m.eval(x) - self.params.b * u - v
    }

    fn f_u(&self, _: f64, _: f64, _: f64) -> f64 {
        -1.0
    }

    fn f_v(&self, _: f64, _: f64, _: f64) -> f64 {
        -self.params.c
    }

    fn g_u(&self, _: f64, _: f64, _: f64) -> f64 {
        -self.params.b
    }

    fn g_v(&self, _: f64, _: f64, _: f64) -> f64 {
        -1.0
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn solve_f(&self, x: f64, v: f64) -> Result<f64> {
        Ok(self.params.m.eval(x) - self.params.c * v)
    }
}

/// Competition with cubic self-limitation:
/// `f = m(x) - u - u³/3 - c v`, `g = m(x) - b u - v - v³/3`.
///
/// `F(x, v)` has no closed form, which exercises the bisection path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCompetition {
    params: LotkaVolterraParams,
    bound: f64,
}

impl CubicCompetition {
    pub fn new(params: LotkaVolterraParams) -> Result<CubicCompetition> {
        let lv = LotkaVolterra::new(params)?;
        Ok(CubicCompetition {
            params,
            bound: lv.bound,
        })
    }
}

impl ReactionModel for CubicCompetition {
    fn f(&self, x: f64, u: f64, v: f64) -> f64 {
        self.params.m.eval(x) - u - u * u * u / 3.0 - self.params.c * v
    }

    fn g(&self, x: f64, u: f64, v: f64) -> f64 {
        self.params.m.eval(x) - self.params.b * u - v - v * v * v / 3.0
    }

    fn f_u(&self, _: f64, u: f64, _: f64) -> f64 {
        -1.0 - u * u
    }

    fn f_v(&self, _: f64, _: f64, _: f64) -> f64 {
        -self.params.c
    }

    fn g_u(&self, _: f64, _: f64, _: f64) -> f64 {
        -self.params.b
    }

    fn g_v(&self, _: f64, _: f64, v: f64) -> f64 {
        -1.0 - v * v
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// `F(x, v)`: the root of `f(x, ·, v) = 0`, possibly negative.
pub fn solve_f(model: &dyn ReactionModel, x: f64, v: f64) -> Result<f64> {
    model.solve_f(x, v)
}

/// `F₊(x, v) = max(0, F(x, v))`.
pub fn f_plus(model: &dyn ReactionModel, x: f64, v: f64) -> Result<f64> {
    // f decreasing in u: F <= 0 exactly when f(x, 0, v) <= 0.
    if model.f(x, 0.0, v) <= 0.0 {
        return Ok(0.0);
    }
    Ok(model.solve_f(x, v)?.max(0.0))
}

/// `g(x, F₊(x, v), v)`, the growth rate of v when u sits at its d → 0 profile.
pub fn g_composite(model: &dyn ReactionModel, x: f64, v: f64) -> Result<f64> {
    Ok(model.g(x, f_plus(model, x, v)?, v))
}

/// Worst margins of the structural inequalities over a sampling lattice.
/// A positive margin means the inequality held at every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub bound: f64,
    /// `min(-f_u, -g_v)`
    pub a2_margin: f64,
    /// `min(-f_v, -g_u)`
    pub a3_margin: f64,
    /// `min(-f(x, M, v), -g(x, u, M))`
    pub a4_margin: f64,
    /// `min(f_u g_v - f_v g_u)`
    pub a5_margin: f64,
    /// Smallest observed slope `-Δ g_composite / Δv` on `[0, M]`.
    pub sigma1: f64,
    /// Largest relative mismatch between analytic partials and central differences.
    pub partials_fd_error: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.a2_margin > 0.0
            && self.a3_margin > 0.0
            && self.a4_margin > 0.0
            && self.a5_margin > 0.0
            && self.sigma1 > 0.0
            && self.partials_fd_error < 1e-5
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.a2_margin <= 0.0 {
            out.push("f_u < 0, g_v < 0");
        }
        if self.a3_margin <= 0.0 {
            out.push("f_v < 0, g_u < 0");
        }
        if self.a4_margin <= 0.0 {
            out.push("f(x, M, v) < 0, g(x, u, M) < 0");
        }
        if self.a5_margin <= 0.0 {
            out.push("f_v g_u < f_u g_v");
        }
        if self.sigma1 <= 0.0 {
            out.push("g(x, F+(x, v), v) strictly decreasing");
        }
        if self.partials_fd_error >= 1e-5 {
            out.push("analytic partials match finite differences");
        }
        out
    }
}

fn lattice(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let n = n.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Samples the sign conditions on `Ω̄ × [0, M + 1]²` with `samples` points per axis.
/// Violations are reported through negative margins, never as errors.
pub fn audit_assumptions(model: &dyn ReactionModel, grid: &Grid, samples: usize) -> AuditReport {
    let samples = samples.max(2);
    let m = model.bound();
    let xs = lattice(grid.a(), grid.b(), samples);
    let box_axis = lattice(0.0, m + 1.0, samples);

    let mut a2 = f64::INFINITY;
    let mut a3 = f64::INFINITY;
    let mut a5 = f64::INFINITY;
    let mut fd_err: f64 = 0.0;
    let eps = 1e-6;
    let rel = |exact: f64, approx: f64| (exact - approx).abs() / (1.0 + exact.abs());
    for x in xs.clone() {
        for u in box_axis.clone() {
            for v in box_axis.clone() {
                let (fu, fv) = (model.f_u(x, u, v), model.f_v(x, u, v));
                let (gu, gv) = (model.g_u(x, u, v), model.g_v(x, u, v));
                a2 = a2.min(-fu).min(-gv);
                a3 = a3.min(-fv).min(-gu);
                a5 = a5.min(fu * gv - fv * gu);

                let cd = |h: &dyn Fn(f64) -> f64, z: f64| (h(z + eps) - h(z - eps)) / (2.0 * eps);
                fd_err = fd_err
                    .max(rel(fu, cd(&|s| model.f(x, s, v), u)))
                    .max(rel(fv, cd(&|s| model.f(x, u, s), v)))
                    .max(rel(gu, cd(&|s| model.g(x, s, v), u)))
                    .max(rel(gv, cd(&|s| model.g(x, u, s), v)));
            }
        }
    }

    let mut a4 = f64::INFINITY;
    for x in xs.clone() {
        for w in box_axis.clone() {
            a4 = a4.min(-model.f(x, m, w)).min(-model.g(x, w, m));
        }
    }

    let sigma1 = decrement_slope(model, xs, m, samples * 4).unwrap_or(f64::NEG_INFINITY);

    AuditReport {
        samples,
        bound: m,
        a2_margin: a2,
        a3_margin: a3,
        a4_margin: a4,
        a5_margin: a5,
        sigma1,
        partials_fd_error: fd_err,
    }
}

/// Smallest `-(g_c(v₁) - g_c(v₀)) / (v₁ - v₀)` over consecutive lattice points
/// in `[0, m1]`, where `g_c` is [`g_composite`].
fn decrement_slope(
    model: &dyn ReactionModel,
    xs: impl Iterator<Item = f64>,
    m1: f64,
    nv: usize,
) -> Result<f64> {
    let vs: Vec<f64> = lattice(0.0, m1, nv).collect();
    let mut sigma = f64::INFINITY;
    for x in xs {
        let gs = vs
            .iter()
            .map(|&v| g_composite(model, x, v))
            .collect::<Result<Vec<_>>>()?;
        for k in 1..vs.len() {
            sigma = sigma.min(-(gs[k] - gs[k - 1]) / (vs[k] - vs[k - 1]));
        }
    }
    Ok(sigma)
}
