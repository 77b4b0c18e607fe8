//! Explicit time integration of the competition system.

use serde::{Deserialize, Serialize};

use crate::dispersal::DispersalOperator;
use crate::error::{Error, Result};
use crate::grid::{competitive_leq_tol, Field, StatePair};
use crate::reaction::ReactionModel;

/// Dispersal operators (already scaled by d and D) together with the reaction terms.
#[derive(Debug, Clone, Copy)]
pub struct System<'a> {
    pub k_op: &'a DispersalOperator,
    pub p_op: &'a DispersalOperator,
    pub model: &'a dyn ReactionModel,
}

impl<'a> System<'a> {
    pub fn new(k_op: &'a DispersalOperator, p_op: &'a DispersalOperator, model: &'a dyn ReactionModel) -> Result<Self> {
        if !crate::grid::same_grid(k_op.grid(), p_op.grid()) {
            return Err(Error::GridMismatch("dispersal operators live on different grids".into()));
        }
        Ok(System { k_op, p_op, model })
    }

    /// Right-hand side `(dK[u] + u f, DP[v] + v g)`.
    pub fn rhs(&self, s: &StatePair) -> (Vec<f64>, Vec<f64>) {
        let x = self.k_op.grid().nodes();
        let (u, v) = (s.u.values(), s.v.values());
        let mut du = vec![0.0; u.len()];
        let mut dv = vec![0.0; v.len()];
        self.k_op.apply_into(u, &mut du);
        self.p_op.apply_into(v, &mut dv);
        for i in 0..x.len() {
            du[i] += u[i] * self.model.f(x[i], u[i], v[i]);
            dv[i] += v[i] * self.model.g(x[i], u[i], v[i]);
        }
        (du, dv)
    }

    /// `‖du/dt‖∞ + ‖dv/dt‖∞`
    pub fn rhs_norm(&self, s: &StatePair) -> f64 {
        let (du, dv) = self.rhs(s);
        let m = |w: &[f64]| w.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
        m(&du) + m(&dv)
    }

    /// `0.9 / (d κ_d + D κ_D + Λ)`, with Λ sampled on a lattice of the box `[0, M]²` at every node.
    pub fn dt_max(&self) -> f64 {
        let big_m = self.model.bound();
        let lattice = 40;
        let mut lambda: f64 = 0.0;
        for &x in self.k_op.grid().nodes() {
            for i in 0..=lattice {
                let u = big_m * i as f64 / lattice as f64;
                for j in 0..=lattice {
                    let v = big_m * j as f64 / lattice as f64;
                    let m = self.model;
                    lambda = lambda
                        .max(m.f(x, u, v).abs() + big_m * m.f_u(x, u, v).abs())
                        .max(m.g(x, u, v).abs() + big_m * m.g_v(x, u, v).abs());
                }
            }
        }
        0.9 / (self.k_op.rate() * self.k_op.kappa() + self.p_op.rate() * self.p_op.kappa() + lambda)
    }
}

fn euler(sys: &System, s: &StatePair, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let (du, dv) = sys.rhs(s);
    let u = s.u.values().iter().zip(&du).map(|(a, b)| a + dt * b).collect();
    let v = s.v.values().iter().zip(&dv).map(|(a, b)| a + dt * b).collect();
    (u, v)
}

fn clip(w: &mut [f64], what: &str) -> Result<()> {
    for x in w.iter_mut() {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("{what} after time step")));
        }
        if *x < 0.0 {
            if *x < -1e-14 {
                return Err(Error::BlowUp(format!("{what} reached {x}")));
            }
            *x = 0.0;
        }
    }
    Ok(())
}

/// One forward Euler step. `dt_max` is the stability bound of `sys`.
pub fn step(sys: &System, state: &StatePair, dt: f64, dt_max: f64) -> Result<StatePair> {
    if !(dt > 0.0) || dt > dt_max {
        return Err(Error::TimeStepTooLarge { dt, dt_max });
    }
    let (mut u, mut v) = euler(sys, state, dt);
    clip(&mut u, "u")?;
    clip(&mut v, "v")?;
    let grid = state.grid().clone();
    StatePair::new(Field::new(grid.clone(), u)?, Field::new(grid, v)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Time step; `None` uses the stability bound itself.
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Stop once `‖du/dt‖∞ + ‖dv/dt‖∞` falls below this.
    pub convergence_eps: f64,
    /// Record a time-series row every this many steps.
    pub snapshot_stride: usize,
    /// Positivity floor and extinction ceiling, relative to M.
    pub floor_rel: f64,
    /// Max-norm distance from a semi-trivial profile accepted for an exclusion outcome.
    pub winner_tol: f64,
    /// A state above `blowup_factor · M` aborts the run.
    pub blowup_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: None,
            t_max: 2000.0,
            convergence_eps: 1e-10,
            snapshot_stride: 100,
            floor_rel: 1e-8,
            winner_tol: 1e-6,
            blowup_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Coexistence,
    UExcludesV,
    VExcludesU,
    Extinction,
    Undecided,
}

impl OutcomeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeKind::Coexistence => "coexistence",
            OutcomeKind::UExcludesV => "u-excludes-v",
            OutcomeKind::VExcludesU => "v-excludes-u",
            OutcomeKind::Extinction => "extinction",
            OutcomeKind::Undecided => "undecided",
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub terminal: StatePair,
    /// Time at which the convergence test first passed; `None` if it never did.
    pub time_to_converge: Option<f64>,
}

/// Steady states the terminal state is compared with.
#[derive(Debug, Clone)]
pub struct References {
    pub theta: Field,
    pub eta: Field,
    pub pair: Option<StatePair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub v_min: f64,
    pub rhs_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub outcome: Outcome,
    pub series: Vec<SeriesRow>,
    pub steps: usize,
    pub dt: f64,
}

fn row(t: f64, s: &StatePair, rhs_norm: f64) -> SeriesRow {
    SeriesRow {
        t,
        u_max: s.u.max(),
        v_max: s.v.max(),
        u_min: s.u.min(),
        v_min: s.v.min(),
        rhs_norm,
    }
}

/// Labels a terminal state.
pub fn classify_terminal(
    terminal: &StatePair,
    converged: bool,
    refs: &References,
    bound: f64,
    config: &SimConfig,
) -> Result<OutcomeKind> {
    if !converged {
        return Ok(OutcomeKind::Undecided);
    }
    let level = config.floor_rel * bound;
    let (u, v) = (&terminal.u, &terminal.v);
    Ok(if u.min() > level && v.min() > level {
        match &refs.pair {
            Some(p) if p.dist_inf(terminal)? > config.winner_tol => OutcomeKind::Undecided,
            _ => OutcomeKind::Coexistence,
        }
    } else if u.max() < level && v.max() < level {
        OutcomeKind::Extinction
    } else if v.max() < level && u.dist_inf(&refs.theta)? <= config.winner_tol {
        OutcomeKind::UExcludesV
    } else if u.max() < level && v.dist_inf(&refs.eta)? <= config.winner_tol {
        OutcomeKind::VExcludesU
    } else {
        OutcomeKind::Undecided
    })
}

/// Integrates until the right-hand side is below `convergence_eps` or `t_max` is reached.
pub fn simulate(sys: &System, initial: &StatePair, refs: &References, config: &SimConfig) -> Result<Trajectory> {
    let dt_max = sys.dt_max();
    let dt = config.dt.unwrap_or(dt_max);
    if !(dt > 0.0) || dt > dt_max {
        return Err(Error::TimeStepTooLarge { dt, dt_max });
    }
    if !(config.t_max > 0.0) || !(config.convergence_eps > 0.0) || config.snapshot_stride == 0 {
        return Err(Error::InvalidParameter("t_max, convergence_eps and snapshot_stride must be positive".into()));
    }
    let bound = sys.model.bound();
    let ceiling = config.blowup_factor * bound;
    let mut s = initial.clone();
    let mut t = 0.0;
    let mut steps = 0;
    let mut series = Vec::new();
    let mut converged = None;
    loop {
        let r = sys.rhs_norm(&s);
        if steps % config.snapshot_stride == 0 {
            series.push(row(t, &s, r));
        }
        if r <= config.convergence_eps {
            converged = Some(t);
            break;
        }
        if t >= config.t_max {
            break;
        }
        s = step(sys, &s, dt, dt_max)?;
        steps += 1;
        t = steps as f64 * dt;
        if s.u.max() > ceiling || s.v.max() > ceiling {
            return Err(Error::BlowUp(format!("state exceeded {ceiling} at t = {t}")));
        }
    }
    if series.last().map(|r| r.t) != Some(t) {
        series.push(row(t, &s, sys.rhs_norm(&s)));
    }
    let kind = classify_terminal(&s, converged.is_some(), refs, bound, config)?;
    Ok(Trajectory {
        outcome: Outcome {
            kind,
            terminal: s,
            time_to_converge: converged,
        },
        series,
        steps,
        dt,
    })
}

/// Steps two states side by side and reports whether `s1 <= s2` in the
/// competitive order survives every step. `dt` is not checked against the
/// stability bound, so the check can also be used as a negative control.
pub fn order_preservation_check(sys: &System, s1: &StatePair, s2: &StatePair, dt: f64, steps: usize) -> Result<bool> {
    let tol = 1e-13 * sys.model.bound();
    if !competitive_leq_tol(s1, s2, 0.0)? {
        return Err(Error::InvalidParameter("initial states are not ordered".into()));
    }
    let grid = s1.grid().clone();
    let mut a = s1.clone();
    let mut b = s2.clone();
    for _ in 0..steps {
        let (ua, va) = euler(sys, &a, dt);
        let (ub, vb) = euler(sys, &b, dt);
        if ua.iter().chain(&va).chain(&ub).chain(&vb).any(|x| !x.is_finite()) {
            return Ok(false);
        }
        a = StatePair::new(Field::from_raw(grid.clone(), ua), Field::from_raw(grid.clone(), va))?;
        b = StatePair::new(Field::from_raw(grid.clone(), ub), Field::from_raw(grid.clone(), vb))?;
        if !competitive_leq_tol(&a, &b, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersal::{BoundaryMode, KernelSpec};
    use crate::grid::Grid;
    use crate::reaction::{lv_model, LotkaVolterra, LotkaVolterraParams, ResourceProfile};
    use crate::spectral::spectral_bound;
    use crate::steady::{solve_eta, solve_theta, SteadyOptions};
    use std::sync::Arc;

    fn lv(b: f64, c: f64) -> LotkaVolterra {
        lv_model(LotkaVolterraParams {
            m: ResourceProfile::Constant { value: 1.0 },
            b,
            c,
        })
        .unwrap()
    }

    fn ops(n: usize, d: f64, big_d: f64, mode: BoundaryMode) -> (Arc<Grid>, DispersalOperator, DispersalOperator) {
        let g = Grid::new(0.0, 1.0, n).unwrap();
        let k = KernelSpec::gaussian(0.1);
        (
            g.clone(),
            DispersalOperator::assemble(&k, &g, mode, d).unwrap(),
            DispersalOperator::assemble(&k, &g, mode, big_d).unwrap(),
        )
    }

    fn refs(sys: &System) -> References {
        let o = SteadyOptions::default();
        References {
            theta: solve_theta(sys.k_op, sys.model, &o).unwrap().state,
            eta: solve_eta(sys.p_op, sys.model, &o).unwrap().state,
            pair: None,
        }
    }

    #[test]
    fn stationary_states_are_fixed() {
        let (g, k, p) = ops(30, 0.05, 0.1, BoundaryMode::NoFlux);
        let model = lv(0.5, 0.5);
        let sys = System::new(&k, &p, &model).unwrap();
        let dtm = sys.dt_max();
        let third = Field::constant(g.clone(), 2.0 / 3.0);
        let s = StatePair::new(third.clone(), third).unwrap();
        assert!(step(&sys, &s, dtm, dtm).unwrap().dist_inf(&s).unwrap() < 1e-12);
        let z = StatePair::new(Field::zeros(g.clone()), Field::zeros(g.clone())).unwrap();
        assert_eq!(step(&sys, &z, dtm, dtm).unwrap().dist_inf(&z).unwrap(), 0.0);
        let r = refs(&sys);
        let semi = StatePair::new(r.theta.clone(), Field::zeros(g)).unwrap();
        assert!(step(&sys, &semi, dtm, dtm).unwrap().dist_inf(&semi).unwrap() < 1e-10 * dtm + 1e-15);
    }

    #[test]
    fn rejects_large_steps() {
        let (g, k, p) = ops(20, 0.05, 0.1, BoundaryMode::NoFlux);
        let model = lv(0.5, 0.5);
        let sys = System::new(&k, &p, &model).unwrap();
        let s = StatePair::new(Field::constant(g.clone(), 0.5), Field::constant(g, 0.5)).unwrap();
        let dtm = sys.dt_max();
        assert!(matches!(step(&sys, &s, 2.0 * dtm, dtm), Err(Error::TimeStepTooLarge { .. })));
    }

    #[test]
    fn trichotomy_examples() {
        let cases = [
            (0.5, 0.5, 0.05, OutcomeKind::Coexistence),
            (0.5, 1.5, 0.01, OutcomeKind::VExcludesU),
            (1.5, 0.5, 0.01, OutcomeKind::UExcludesV),
        ];
        for (b, c, d, expected) in cases {
            let (g, k, p) = ops(40, d, 0.1, BoundaryMode::NoFlux);
            let model = lv(b, c);
            let sys = System::new(&k, &p, &model).unwrap();
            let init = StatePair::new(Field::constant(g.clone(), 0.1), Field::constant(g, 0.9)).unwrap();
            let tr = simulate(&sys, &init, &refs(&sys), &SimConfig::default()).unwrap();
            assert_eq!(tr.outcome.kind, expected, "b={b} c={c}");
            let (ut, vt) = match expected {
                OutcomeKind::Coexistence => (2.0 / 3.0, 2.0 / 3.0),
                OutcomeKind::VExcludesU => (0.0, 1.0),
                _ => (1.0, 0.0),
            };
            let term = &tr.outcome.terminal;
            assert!(term.u.values().iter().all(|x| (x - ut).abs() < 1e-6));
            assert!(term.v.values().iter().all(|x| (x - vt).abs() < 1e-6));
        }
    }

    #[test]
    fn order_is_kept_under_the_bound_and_lost_far_above_it() {
        let (g, k, p) = ops(20, 0.05, 0.1, BoundaryMode::NoFlux);
        let model = lv(0.5, 0.5);
        let sys = System::new(&k, &p, &model).unwrap();
        let dtm = sys.dt_max();
        let big_m = model.bound();
        let lo = StatePair::new(Field::constant(g.clone(), 0.9 * big_m), Field::constant(g.clone(), 0.1)).unwrap();
        let hi = StatePair::new(Field::constant(g.clone(), 0.95 * big_m), Field::constant(g, 0.05)).unwrap();
        assert!(order_preservation_check(&sys, &lo, &hi, dtm, 2000).unwrap());
        assert!(order_preservation_check(&sys, &lo, &lo, dtm, 100).unwrap());
        assert!(!order_preservation_check(&sys, &lo, &hi, 10.0 * dtm, 5).unwrap());
    }

    #[test]
    fn invasion_rate_follows_principal_bound() {
        // a small v perturbation of (θ_d, 0) grows like exp(μ t)
        let (g, k, p) = ops(30, 0.01, 0.1, BoundaryMode::Lethal);
        let model = lv(0.5, 0.5);
        let sys = System::new(&k, &p, &model).unwrap();
        let r = refs(&sys);
        let gamma = Field::new(
            g.clone(),
            g.nodes().iter().zip(r.theta.values()).map(|(&x, &t)| model.g(x, t, 0.0)).collect(),
        )
        .unwrap();
        let spec = spectral_bound(&p, &gamma, 1e-12).unwrap();
        let eps = 1e-9;
        let mut s = StatePair::new(r.theta.clone(), eps * &spec.eigenfunction).unwrap();
        let dt = 0.5 * sys.dt_max();
        let steps = (2.0 / dt) as usize;
        for _ in 0..steps {
            s = step(&sys, &s, dt, sys.dt_max()).unwrap();
        }
        let t = steps as f64 * dt;
        let observed = (s.v.max() / eps).ln() / t;
        assert!(spec.lambda1 > 0.0);
        assert!((observed - spec.lambda1).abs() < 0.05 * spec.lambda1.abs() + 0.02);
    }
}
