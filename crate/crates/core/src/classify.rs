//! Outcome prediction from the invasion indicators, and its check against simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate, OutcomeKind, References, System};
use crate::error::{Error, Result};
use crate::grid::{Field, StatePair};
use crate::reaction::audit_assumptions;
use crate::scenario::{Assembled, Scenario};
use crate::spectral::{indicators, IndicatorSet};
use crate::steady::{solve_eta, solve_pair, solve_theta, two_sided_probe, PairKind};

/// Which alternative of the trichotomy the indicator signs select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `μ0 > 0`, `ν0 > 0`: a unique positive state attracts.
    Coexistence,
    /// `μ0 > 0`, `ν0 < 0`: `(0, η_D)` attracts.
    VWins,
    /// `μ0 < 0`: `(θ_d, 0)` attracts.
    UWins,
    /// An indicator lies in the dead-band.
    Undecided,
}

impl Branch {
    pub fn outcome(&self) -> OutcomeKind {
        match self {
            Branch::Coexistence => OutcomeKind::Coexistence,
            Branch::VWins => OutcomeKind::VExcludesU,
            Branch::UWins => OutcomeKind::UExcludesV,
            Branch::Undecided => OutcomeKind::Undecided,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Branch::Coexistence => "i",
            Branch::VWins => "ii",
            Branch::UWins => "iii",
            Branch::Undecided => "undecided",
        }
    }
}

/// Branch from the indicator signs alone.
pub fn branch_from_indicators(mu0: f64, nu0: f64, dead_band: f64) -> Branch {
    if mu0.abs() <= dead_band {
        Branch::Undecided
    } else if mu0 < 0.0 {
        Branch::UWins
    } else if nu0.abs() <= dead_band {
        Branch::Undecided
    } else if nu0 < 0.0 {
        Branch::VWins
    } else {
        Branch::Coexistence
    }
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub indicators: IndicatorSet,
    pub strict_kernel: bool,
    pub branch: Branch,
    pub predicted: OutcomeKind,
    pub warnings: Vec<String>,
    pub theta: Field,
    pub eta: Field,
    pub theta_residual: f64,
    pub eta_residual: f64,
}

fn predict(scenario: &Scenario, a: &Assembled) -> Result<Prediction> {
    let model = a.model.as_ref();
    let audit = audit_assumptions(model, &a.grid, scenario.tolerances.audit_samples);
    if !audit.passed() {
        return Err(Error::Hypothesis(format!(
            "structural assumptions fail: {}",
            audit.failures().join(", ")
        )));
    }
    let opts = scenario.steady_options();
    let theta = solve_theta(&a.k_op, model, &opts)?;
    let eta = solve_eta(&a.p_op, model, &opts)?;
    if !theta.positive {
        return Err(Error::Hypothesis("θ_d does not exist: principal bound of dK + f(x, 0, 0) is not positive".into()));
    }
    if !eta.positive {
        return Err(Error::Hypothesis("η_D does not exist: principal bound of DP + g(x, 0, 0) is not positive".into()));
    }
    let ind = indicators(&a.k_op, &a.p_op, model, &theta.state, &eta.state, opts.spectral_tol)?;
    let strict_kernel = a.k_op.strict_positive() && a.p_op.strict_positive();
    let branch = branch_from_indicators(ind.mu0, ind.nu0, scenario.tolerances.dead_band);
    let mut warnings = Vec::new();
    if branch == Branch::Coexistence && !strict_kernel {
        warnings.push("hypothesis unmet: kernel is not strictly positive on the domain".to_string());
    }
    if branch == Branch::Undecided {
        warnings.push(format!("neutral indicators: mu0 = {:e}, nu0 = {:e}", ind.mu0, ind.nu0));
    }
    Ok(Prediction {
        indicators: ind,
        strict_kernel,
        branch,
        predicted: branch.outcome(),
        warnings,
        theta_residual: theta.residual,
        eta_residual: eta.residual,
        theta: theta.state,
        eta: eta.state,
    })
}

/// Predicted branch. Uses the indicators only; nothing here runs the dynamics.
pub fn classify(scenario: &Scenario) -> Result<Prediction> {
    predict(scenario, &scenario.assemble()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Label of the initial state: `random-<k>`, `near-u` or `near-v`.
    pub label: String,
    pub kind: OutcomeKind,
    pub time_to_converge: Option<f64>,
    pub steps: usize,
    pub rhs_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub kind: PairKind,
    pub residual: f64,
    /// Distance between the limits of the two bracketing sequences.
    pub bracket_gap: f64,
    /// Distance between the two limits of the reduced limiting equation.
    pub probe_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub prediction: Prediction,
    pub runs: Vec<RunSummary>,
    /// Common outcome of every run, `Undecided` when they differ.
    pub observed: OutcomeKind,
    pub agreement: bool,
    pub pair: Option<PairSummary>,
    pub unique_pair: Option<StatePair>,
    pub terminals: Vec<StatePair>,
    pub notes: Vec<String>,
}

/// Initial states: `trials` random profiles uniform in `[0.05 M, 0.95 M]` per
/// node, then one state near each semi-trivial corner.
pub fn initial_states(
    trials: usize,
    seed: u64,
    bound: f64,
    theta: &Field,
    eta: &Field,
) -> Result<Vec<(String, StatePair)>> {
    let grid = theta.grid().clone();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(0.05 * bound..0.95 * bound)).collect() };
    let mut out = Vec::with_capacity(trials + 2);
    for k in 0..trials {
        let u = draw(&mut rng);
        let v = draw(&mut rng);
        out.push((
            format!("random-{k}"),
            StatePair::new(Field::new(grid.clone(), u)?, Field::new(grid.clone(), v)?)?,
        ));
    }
    let small = Field::constant(grid.clone(), 1e-3 * bound);
    out.push(("near-u".into(), StatePair::new(theta.clone(), small.clone())?));
    out.push(("near-v".into(), StatePair::new(small, eta.clone())?));
    Ok(out)
}

/// Prediction plus `trials` simulations from independent random initial states
/// and the two perturbed semi-trivial corners.
pub fn verify(scenario: &Scenario, trials: usize) -> Result<ClassificationReport> {
    let a = scenario.assemble()?;
    let prediction = predict(scenario, &a)?;
    let model = a.model.as_ref();
    let opts = scenario.steady_options();
    let mut notes = prediction.warnings.clone();

    let (pair, unique_pair) = if prediction.branch == Branch::Coexistence {
        match solve_pair(&a.k_op, &a.p_op, model, &opts) {
            Ok(sol) => {
                let probe_gap = match two_sided_probe(&a.p_op, model, &opts) {
                    Ok(p) => Some(p.gap),
                    Err(e) => {
                        notes.push(format!("limiting probe failed: {e}"));
                        None
                    }
                };
                let summary = PairSummary {
                    kind: sol.kind,
                    residual: sol.residual,
                    bracket_gap: sol.from_theta.dist_inf(&sol.from_eta)?,
                    probe_gap,
                };
                (Some(summary), sol.pair().cloned())
            }
            Err(e) => {
                notes.push(format!("pair solve failed: {e}"));
                (None, None)
            }
        }
    } else {
        (None, None)
    };

    let refs = References {
        theta: prediction.theta.clone(),
        eta: prediction.eta.clone(),
        pair: unique_pair.clone(),
    };
    let sys = System::new(&a.k_op, &a.p_op, model)?;
    let starts = initial_states(trials, scenario.verify.seed, model.bound(), &prediction.theta, &prediction.eta)?;
    let results = starts
        .par_iter()
        .map(|(label, init)| {
            let tr = simulate(&sys, init, &refs, &scenario.simulation)?;
            let rhs = tr.series.last().map(|r| r.rhs_norm).unwrap_or(f64::NAN);
            Ok((
                RunSummary {
                    label: label.clone(),
                    kind: tr.outcome.kind,
                    time_to_converge: tr.outcome.time_to_converge,
                    steps: tr.steps,
                    rhs_norm: rhs,
                },
                tr.outcome.terminal,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, terminals): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let observed = match runs.first() {
        Some(r) if runs.iter().all(|s| s.kind == r.kind) => r.kind,
        _ => OutcomeKind::Undecided,
    };
    let undecided = runs.iter().filter(|r| r.kind == OutcomeKind::Undecided).count();
    if undecided > 0 {
        notes.push(format!("{undecided} run(s) ended undecided"));
    }
    let agreement = prediction.predicted != OutcomeKind::Undecided && runs.iter().all(|r| r.kind == prediction.predicted);
    if !agreement && prediction.predicted != OutcomeKind::Undecided {
        notes.push(format!(
            "d = {} may lie outside the small-d regime; a sweep over d locates the threshold",
            scenario.rates.d
        ));
    }
    Ok(ClassificationReport {
        prediction,
        runs,
        observed,
        agreement,
        pair,
        unique_pair,
        terminals,
        notes,
    })
}

/// Parameter axes of a sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, Default)]
pub struct SweepAxes {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub big_d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub mu0: Option<f64>,
    pub nu0: Option<f64>,
    pub predicted: Option<Branch>,
    pub observed: Option<OutcomeKind>,
    pub agreement: Option<bool>,
    pub error: Option<String>,
}

fn axis(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of `classify` (and `verify` when `trials` is given).
/// Errors are recorded per cell.
pub fn sweep(base: &Scenario, axes: &SweepAxes, trials: Option<usize>) -> Vec<SweepRow> {
    let mut cells = Vec::new();
    for &b in &axis(&axes.b, base.reaction.b) {
        for &c in &axis(&axes.c, base.reaction.c) {
            for &d in &axis(&axes.d, base.rates.d) {
                for &big_d in &axis(&axes.big_d, base.rates.big_d) {
                    cells.push((b, c, d, big_d));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(b, c, d, big_d)| {
            let mut s = base.clone();
            s.reaction.b = b;
            s.reaction.c = c;
            s.rates.d = d;
            s.rates.big_d = big_d;
            let mut row = SweepRow {
                b,
                c,
                d,
                big_d,
                mu0: None,
                nu0: None,
                predicted: None,
                observed: None,
                agreement: None,
                error: None,
            };
            let result = match trials {
                Some(t) => verify(&s, t).map(|r| {
                    row.observed = Some(r.observed);
                    row.agreement = Some(r.agreement);
                    r.prediction
                }),
                None => classify(&s),
            };
            match result {
                Ok(p) => {
                    row.mu0 = Some(p.indicators.mu0);
                    row.nu0 = Some(p.indicators.nu0);
                    row.predicted = Some(p.branch);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}
