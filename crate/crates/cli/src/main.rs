use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nonlocal_competition::classify::{self, Branch, SweepAxes};
use nonlocal_competition::dynamics::{simulate, References, System};
use nonlocal_competition::reaction::audit_assumptions;
use nonlocal_competition::scenario::Scenario;
use nonlocal_competition::spectral::indicators;
use nonlocal_competition::steady::{monotone_iterate_v, solve_eta, solve_pair, solve_theta, two_sided_probe};
use nonlocal_competition::Error;

const EXIT_DISAGREE: u8 = 2;
const EXIT_HYPOTHESIS: u8 = 3;

#[derive(Parser)]
#[command(name = "nlcomp", version, about = "Two-species competition with nonlocal dispersal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV tables and the summary.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions on the reaction terms.
    Audit(Common),
    /// Principal bounds and invasion indicators.
    Spectral(Common),
    /// Semi-trivial states and the coupled positive state.
    Steady(Common),
    /// Limiting profile as d → 0 by the monotone chain.
    Limit(Common),
    /// One trajectory from a random positive initial state.
    Simulate(Common),
    /// Predicted outcome from the indicators.
    Classify(Common),
    /// Prediction checked against simulations.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of random trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Classification over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        c: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        d: Vec<f64>,
        #[arg(long = "big-d", value_delimiter = ',')]
        big_d: Vec<f64>,
        /// Also simulate each cell with this many random trials.
        #[arg(long)]
        verify: Option<usize>,
    },
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Output {
    dir: PathBuf,
    summary: String,
}

impl Output {
    fn new(dir: &Path) -> Result<Output> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            summary: String::new(),
        })
    }

    fn table(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn line(&mut self, s: impl AsRef<str>) {
        println!("{}", s.as_ref());
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }

    fn finish(self, name: &str) -> Result<()> {
        fs::write(self.dir.join(name), self.summary)?;
        Ok(())
    }
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        s.verify.seed = seed;
    }
    Ok(s)
}

fn profile_rows(x: &[f64], cols: &[&[f64]]) -> Vec<Vec<String>> {
    (0..x.len())
        .map(|i| std::iter::once(num(x[i])).chain(cols.iter().map(|c| num(c[i]))).collect())
        .collect()
}

fn audit(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let a = s.assemble()?;
    let r = audit_assumptions(a.model.as_ref(), &a.grid, s.tolerances.audit_samples);
    let mut out = Output::new(&common.out)?;
    let rows = [
        ("bound", r.bound),
        ("a2_margin", r.a2_margin),
        ("a3_margin", r.a3_margin),
        ("a4_margin", r.a4_margin),
        ("a5_margin", r.a5_margin),
        ("sigma1", r.sigma1),
        ("partials_fd_error", r.partials_fd_error),
    ];
    out.table("audit.csv", &["quantity", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), num(*v)]))?;
    for (k, v) in rows {
        out.line(format!("{k:<18} {v:.6e}"));
    }
    let code = if r.passed() {
        out.line("audit passed");
        0
    } else {
        out.line(format!("audit failed: {}", r.failures().join(", ")));
        EXIT_HYPOTHESIS
    };
    out.finish("audit.txt")?;
    Ok(code)
}

fn spectral(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let a = s.assemble()?;
    let opts = s.steady_options();
    let model = a.model.as_ref();
    let theta = solve_theta(&a.k_op, model, &opts)?;
    let eta = solve_eta(&a.p_op, model, &opts)?;
    let mut out = Output::new(&common.out)?;
    let mut rows = vec![
        ("lambda1_u_at_zero", theta.principal),
        ("lambda1_v_at_zero", eta.principal),
    ];
    if theta.positive && eta.positive {
        let ind = indicators(&a.k_op, &a.p_op, model, &theta.state, &eta.state, opts.spectral_tol)?;
        rows.extend([
            ("mu_theta", ind.mu_theta),
            ("nu_eta", ind.nu_eta),
            ("mu0", ind.mu0),
            ("nu0", ind.nu0),
        ]);
    }
    out.table("spectral.csv", &["quantity", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), num(*v)]))?;
    for (k, v) in &rows {
        out.line(format!("{k:<18} {v:.10e}"));
    }
    let code = if theta.positive && eta.positive {
        0
    } else {
        out.line("a semi-trivial state does not exist");
        EXIT_HYPOTHESIS
    };
    out.finish("spectral.txt")?;
    Ok(code)
}

fn steady(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let a = s.assemble()?;
    let opts = s.steady_options();
    let model = a.model.as_ref();
    let theta = solve_theta(&a.k_op, model, &opts)?;
    let eta = solve_eta(&a.p_op, model, &opts)?;
    let mut out = Output::new(&common.out)?;
    out.line(format!("theta: positive={} residual={:.3e} max={:.10e}", theta.positive, theta.residual, theta.state.max()));
    out.line(format!("eta:   positive={} residual={:.3e} max={:.10e}", eta.positive, eta.residual, eta.state.max()));
    if !(theta.positive && eta.positive) {
        out.table(
            "steady.csv",
            &["x", "theta", "eta"],
            profile_rows(a.grid.nodes(), &[theta.state.values(), eta.state.values()]),
        )?;
        out.finish("steady.txt")?;
        return Ok(EXIT_HYPOTHESIS);
    }
    let pair = solve_pair(&a.k_op, &a.p_op, model, &opts)?;
    out.line(format!(
        "pair: kind={:?} iterations={} residual={:.3e} bracket_gap={:.3e}",
        pair.kind,
        pair.iterations,
        pair.residual,
        pair.from_theta.dist_inf(&pair.from_eta)?
    ));
    out.table(
        "steady.csv",
        &["x", "theta", "eta", "u_upper", "v_upper", "u_lower", "v_lower"],
        profile_rows(
            a.grid.nodes(),
            &[
                theta.state.values(),
                eta.state.values(),
                pair.from_theta.u.values(),
                pair.from_theta.v.values(),
                pair.from_eta.u.values(),
                pair.from_eta.v.values(),
            ],
        ),
    )?;
    out.finish("steady.txt")?;
    Ok(0)
}

fn limit(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let a = s.assemble()?;
    let opts = s.steady_options();
    let model = a.model.as_ref();
    let sol = monotone_iterate_v(&a.p_op, model, &opts)?;
    let mut out = Output::new(&common.out)?;
    out.line(format!("mu0 = {:.10e}", sol.mu0));
    if !sol.positive {
        out.line("mu0 <= 0: no positive limiting profile");
        out.finish("limit.txt")?;
        return Ok(EXIT_HYPOTHESIS);
    }
    let probe = two_sided_probe(&a.p_op, model, &opts)?;
    out.line(format!(
        "chain: {} steps, residual {:.3e}; probe gap {:.3e} ({} downward steps)",
        sol.chain.len(),
        sol.residual,
        probe.gap,
        probe.above_steps
    ));
    let mut prev: Option<&nonlocal_competition::grid::Field> = None;
    let mut chain_rows = Vec::new();
    for (k, v) in sol.chain.iter().enumerate() {
        let step = match prev {
            Some(p) => v.dist_inf(p)?,
            None => v.norm_inf(),
        };
        chain_rows.push(vec![(k + 1).to_string(), num(v.min()), num(v.max()), num(step)]);
        prev = Some(v);
    }
    out.table("chain.csv", &["k", "v_min", "v_max", "step"], chain_rows)?;
    out.table(
        "limit.csv",
        &["x", "v0", "u0", "eta", "v_from_above"],
        profile_rows(
            a.grid.nodes(),
            &[sol.v0.values(), sol.u0.values(), sol.eta.state.values(), probe.from_above.values()],
        ),
    )?;
    out.finish("limit.txt")?;
    Ok(0)
}

fn simulate_cmd(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let a = s.assemble()?;
    let opts = s.steady_options();
    let model = a.model.as_ref();
    let theta = solve_theta(&a.k_op, model, &opts)?;
    let eta = solve_eta(&a.p_op, model, &opts)?;
    let starts = classify::initial_states(1, s.verify.seed, model.bound(), &theta.state, &eta.state)?;
    let sys = System::new(&a.k_op, &a.p_op, model)?;
    let refs = References {
        theta: theta.state,
        eta: eta.state,
        pair: None,
    };
    let tr = simulate(&sys, &starts[0].1, &refs, &s.simulation)?;
    let mut out = Output::new(&common.out)?;
    out.table(
        "series.csv",
        &["t", "u_max", "v_max", "u_min", "v_min", "rhs_norm"],
        tr.series
            .iter()
            .map(|r| vec![num(r.t), num(r.u_max), num(r.v_max), num(r.u_min), num(r.v_min), num(r.rhs_norm)]),
    )?;
    let term = &tr.outcome.terminal;
    out.table(
        "terminal.csv",
        &["x", "u", "v"],
        profile_rows(a.grid.nodes(), &[term.u.values(), term.v.values()]),
    )?;
    out.line(format!(
        "outcome: {} after {} steps (dt = {:.3e}, converged at {})",
        tr.outcome.kind,
        tr.steps,
        tr.dt,
        tr.outcome
            .time_to_converge
            .map(|t| format!("t = {t:.3}"))
            .unwrap_or_else(|| "never".into())
    ));
    out.finish("simulate.txt")?;
    Ok(0)
}

fn branch_name(b: Branch) -> String {
    format!("{} ({})", b.label(), b.outcome())
}

fn classify_cmd(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let p = classify::classify(&s)?;
    let mut out = Output::new(&common.out)?;
    let ind = p.indicators;
    out.table(
        "classify.csv",
        &["mu_theta", "nu_eta", "mu0", "nu0", "strict_kernel", "branch", "predicted"],
        [vec![
            num(ind.mu_theta),
            num(ind.nu_eta),
            num(ind.mu0),
            num(ind.nu0),
            p.strict_kernel.to_string(),
            p.branch.label().to_string(),
            p.predicted.to_string(),
        ]],
    )?;
    out.line(format!("mu0 = {:.10e}, nu0 = {:.10e}", ind.mu0, ind.nu0));
    out.line(format!("branch {}", branch_name(p.branch)));
    for w in &p.warnings {
        out.line(format!("warning: {w}"));
    }
    out.finish("classify.txt")?;
    Ok(0)
}

fn verify_cmd(common: &Common, trials: Option<usize>) -> Result<u8> {
    let s = load(common)?;
    let r = classify::verify(&s, trials.unwrap_or(s.verify.trials))?;
    let mut out = Output::new(&common.out)?;
    out.table(
        "runs.csv",
        &["label", "outcome", "time_to_converge", "steps", "rhs_norm"],
        r.runs.iter().map(|run| {
            vec![
                run.label.clone(),
                run.kind.to_string(),
                opt_num(run.time_to_converge),
                run.steps.to_string(),
                num(run.rhs_norm),
            ]
        }),
    )?;
    let mut text = String::new();
    let _ = write!(
        text,
        "predicted {} | observed {} | agreement {}",
        branch_name(r.prediction.branch),
        r.observed,
        r.agreement
    );
    out.line(text);
    if let Some(pair) = &r.pair {
        out.line(format!(
            "pair: {:?}, residual {:.3e}, bracket gap {:.3e}, limiting probe gap {}",
            pair.kind,
            pair.residual,
            pair.bracket_gap,
            pair.probe_gap.map(|g| format!("{g:.3e}")).unwrap_or_else(|| "n/a".into())
        ));
    }
    for n in &r.notes {
        out.line(format!("note: {n}"));
    }
    out.finish("verify.txt")?;
    Ok(if r.agreement { 0 } else { EXIT_DISAGREE })
}

fn sweep_cmd(common: &Common, axes: SweepAxes, verify: Option<usize>) -> Result<u8> {
    let s = load(common)?;
    let rows = classify::sweep(&s, &axes, verify);
    let mut out = Output::new(&common.out)?;
    out.table(
        "sweep.csv",
        &["b", "c", "d", "D", "mu0", "nu0", "predicted", "observed", "agreement", "error"],
        rows.iter().map(|r| {
            vec![
                num(r.b),
                num(r.c),
                num(r.d),
                num(r.big_d),
                opt_num(r.mu0),
                opt_num(r.nu0),
                r.predicted.map(|b| b.label().to_string()).unwrap_or_default(),
                r.observed.map(|o| o.to_string()).unwrap_or_default(),
                r.agreement.map(|a| a.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    let disagreements = rows.iter().filter(|r| r.agreement == Some(false)).count();
    out.line(format!("{} cells, {errors} errors, {disagreements} disagreements", rows.len()));
    out.finish("sweep.txt")?;
    Ok(if disagreements > 0 { EXIT_DISAGREE } else { 0 })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Audit(c) => audit(&c),
        Command::Spectral(c) => spectral(&c),
        Command::Steady(c) => steady(&c),
        Command::Limit(c) => limit(&c),
        Command::Simulate(c) => simulate_cmd(&c),
        Command::Classify(c) => classify_cmd(&c),
        Command::Verify { common, trials } => verify_cmd(&common, trials),
        Command::Sweep {
            common,
            b,
            c,
            d,
            big_d,
            verify,
        } => sweep_cmd(&common, SweepAxes { b, c, d, big_d }, verify),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let hypothesis = matches!(e.downcast_ref::<Error>(), Some(Error::Hypothesis(_)));
            ExitCode::from(if hypothesis { EXIT_HYPOTHESIS } else { 1 })
        }
    }
}
