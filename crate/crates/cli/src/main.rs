//! Command-line runner: model validation, occupation/return computation,
//! asymptotic verification, oracle cross-checks and Monte Carlo runs.
//!
//! Exit codes: 0 success, 1 tolerance failure, 2 input error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use firstret_core::asymptotics::{
    self, empirical_density_at_origin, gaussian_density_at_origin, halving_ladder,
    smoothness_check, stable_density_at_origin, stable_scale_from_tail, theorem_report,
    NormingPlan,
};
use firstret_core::lattice::{classify, Family, StepLaw, WalkClass};
use firstret_core::occupation::{
    auto_grid, clean_horizon, occupation_aliased, occupation_exact, occupation_total, Caps,
    GridSpec, OccupationSeq,
};
use firstret_core::oracle::{exact_enumeration, simulate_walks, taboo_dp, wilson_interval, Z99};
use firstret_core::rational::{format_rational, Prob};
use firstret_core::renewal::{estimate_return_prob, invert_renewal};
use firstret_core::report::{
    self, ComputeSummary, Interval, OracleRow, OracleSummary, RunMeta, SimulateSummary,
    VerifySummary,
};
use firstret_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "firstret",
    version,
    about = "First-return-time distributions of lattice random walks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model-file utilities
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Compute the occupation sequence, the first-return distribution and
    /// the escape probability; writes u.csv, p.csv, summary.json
    Compute(ComputeArgs),
    /// Check the first-return asymptotics against the model constants;
    /// writes report.json and plot.csv
    Verify(VerifyArgs),
    /// Cross-check enumeration, taboo table, renewal chain and Monte
    /// Carlo on one model; writes oracle.json
    Oracle(OracleArgs),
    /// Monte Carlo estimates only; writes mc.csv and mc.json
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Parse and classify a model file
    Validate(ModelValidateArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// keep the exactness of the model file
    Auto,
    /// require exact rational probabilities
    Rational,
    /// force floating-point arithmetic
    Float,
}

#[derive(Args)]
struct CommonArgs {
    /// Model file (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Arithmetic mode
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    /// Output directory
    #[arg(long, default_value = "firstret-out")]
    out: PathBuf,
    /// Tolerance overrides as key=value (keys: ratio, constant, guard,
    /// alias, neg); repeatable
    #[arg(long = "tolerance", value_name = "KEY=VALUE")]
    tolerance: Vec<String>,
}

#[derive(Args)]
struct ModelValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Horizon N (compute u_1..u_N, p_1..p_N)
    #[arg(long = "n-max")]
    n_max: usize,
    /// Grid: "auto", a single size, or comma-separated per-dimension sizes
    #[arg(long, default_value = "auto")]
    grid: String,
    /// Force the aliased grid method even when the exact kernel fits
    #[arg(long, default_value_t = false)]
    force_aliased: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "n-max")]
    n_max: usize,
    #[arg(long, default_value = "auto")]
    grid: String,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Horizon for the exact chains (kept small by the oracle cost caps)
    #[arg(long = "n-max")]
    n_max: usize,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Master seed for reproducible sampling
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "n-max")]
    n_max: usize,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Tunable thresholds with their defaults.
struct Tolerances {
    /// relative gap allowed on the accelerated p_n/u_n limit
    ratio: f64,
    /// relative gap allowed on the accelerated C_n u_n constant
    constant: f64,
    /// ladder cleanliness guard (relative certified bound or alias gap)
    guard: f64,
    /// certified alias bound requested from auto grids
    alias: f64,
    /// negativity tolerance of the renewal inversion
    neg: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ratio: 0.02,
            constant: 0.03,
            guard: 0.005,
            alias: 1e-12,
            neg: 1e-9,
        }
    }
}

impl Tolerances {
    fn parse(overrides: &[String]) -> Result<Self> {
        let mut t = Tolerances::default();
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::OutOfRange(format!("tolerance override '{item}' is not key=value"))
            })?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::OutOfRange(format!("bad tolerance value in '{item}'")))?;
            match key.trim() {
                "ratio" => t.ratio = v,
                "constant" => t.constant = v,
                "guard" => t.guard = v,
                "alias" => t.alias = v,
                "neg" => t.neg = v,
                other => {
                    return Err(Error::OutOfRange(format!(
                        "unknown tolerance key '{other}' (expected ratio|constant|guard|alias|neg)"
                    )))
                }
            }
        }
        Ok(t)
    }
}

fn load_law(common: &CommonArgs) -> Result<StepLaw> {
    let law = StepLaw::from_json_file(&common.model)?;
    match common.mode {
        Mode::Auto => Ok(law),
        Mode::Float => Ok(law.to_float()),
        Mode::Rational => {
            if law.is_rational() {
                Ok(law)
            } else {
                Err(Error::ModelFile(
                    "rational mode requested but the model carries float probabilities".into(),
                ))
            }
        }
    }
}

fn mode_name(law: &StepLaw) -> &'static str {
    if law.is_rational() {
        "rational"
    } else {
        "float"
    }
}

/// Plan + class for any validated law. Drifted finite-atoms laws get the
/// finite-variance plan (their transience comes from the drift).
fn plan_and_class(law: &StepLaw) -> Result<(NormingPlan, WalkClass)> {
    let plan = match law.family() {
        Family::FiniteAtoms => NormingPlan::finite_variance(law.dim()),
        Family::SymmetricPowerTail { alpha } => {
            let scale = stable_scale_from_tail(*alpha)?;
            NormingPlan::new(vec![*alpha], vec![scale.sigma])?
        }
    };
    let cls = classify(law, &plan)?;
    Ok((plan, cls))
}

fn parse_grid(law: &StepLaw, spec: &str, n_max: usize, caps: &Caps, alias_target: f64) -> Result<GridSpec> {
    if spec == "auto" {
        return match law.family() {
            Family::FiniteAtoms => auto_grid(law, n_max, alias_target, caps),
            // The certified power-tail bound cannot reach tiny targets;
            // default to a megapoint grid and let the clean-horizon guard
            // pick the usable range.
            Family::SymmetricPowerTail { .. } => GridSpec::uniform(1, 1 << 20),
        };
    }
    let dims: std::result::Result<Vec<usize>, _> =
        spec.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let dims = dims.map_err(|_| {
        Error::OutOfRange(format!("grid '{spec}' is not 'auto' or comma-separated sizes"))
    })?;
    let dims = if dims.len() == 1 {
        vec![dims[0]; law.dim()]
    } else {
        dims
    };
    GridSpec::new(dims)
}

fn meta_for(law: &StepLaw, method: &str, n_max: usize, grid: Option<&GridSpec>, seed: Option<u64>) -> RunMeta {
    RunMeta {
        tool_version: firstret_core::VERSION.to_string(),
        model_fingerprint: law.fingerprint().to_string(),
        mode: mode_name(law).to_string(),
        method: method.to_string(),
        n_max,
        grid: grid.map(|g| g.dims().to_vec()),
        seed,
    }
}

fn cmd_model_validate(args: &ModelValidateArgs) -> Result<ExitCode> {
    let law = load_law(&args.common)?;
    let (plan, cls) = plan_and_class(&law)?;
    println!("model: {}", args.common.model.display());
    println!("fingerprint: {}", law.fingerprint());
    println!("dim: {}", law.dim());
    println!("mode: {}", mode_name(&law));
    println!("aperiodic: {}", cls.aperiodic);
    println!("drift-free: {}", cls.drift_free);
    println!("transient: {}", cls.transient);
    println!("eta: {}", plan.eta());
    if let Some(mu) = &cls.mean {
        println!("mean: {mu:?}");
    }
    if let Some(b) = &cls.covariance {
        println!("covariance: {b:?}");
    }
    match cls.lattice_index {
        Some(ix) => println!("difference-lattice index: {ix}"),
        None => println!("difference-lattice index: infinite (degenerate support)"),
    }
    match cls.return_period {
        Some(rho) => println!("return period: {rho}"),
        None => println!("return period: none (the walk never returns)"),
    }
    if !cls.aperiodic {
        println!("hint: the walk is periodic; mix in a hold step (lazify) to make it aperiodic");
    }
    Ok(ExitCode::SUCCESS)
}

/// Method auto-selection for `compute`: the exact rational kernel when
/// digit growth keeps it affordable, then exact float convolution when
/// the box fits, else the aliased grid.
fn compute_occupation(
    law: &StepLaw,
    n_max: usize,
    grid_arg: &str,
    force_aliased: bool,
    caps: &Caps,
    tol: &Tolerances,
) -> Result<(OccupationSeq, Option<GridSpec>, String)> {
    let explicit_grid = grid_arg != "auto";
    if law.support_radius().is_some() && !force_aliased && !explicit_grid {
        if firstret_core::occupation::rational_conv_cost(law, n_max)
            .map(|c| c <= caps.rational_cost)
            .unwrap_or(false)
        {
            let u = occupation_exact(law, n_max, caps)?;
            let tag = u.method().as_str().to_string();
            return Ok((u, None, tag));
        }
        let box_len: u64 = law
            .support_radius()
            .unwrap()
            .iter()
            .map(|&r| 2 * (r.max(1) as u64) * n_max as u64 + 1)
            .product();
        let atoms = law.atoms_f64().len() as u64;
        if box_len * 16 <= caps.memory_bytes && box_len * (n_max as u64) * atoms < 4_000_000_000 {
            let u = occupation_exact(&law.to_float(), n_max, caps)?;
            return Ok((u, None, "convolution".into()));
        }
    }
    let grid = parse_grid(law, grid_arg, n_max, caps, tol.alias)?;
    let target = match law.family() {
        Family::FiniteAtoms if !explicit_grid => Some(tol.alias),
        _ => None,
    };
    let u = occupation_aliased(law, n_max, &grid, caps, target)?;
    Ok((u, Some(grid), "aliased-dft".into()))
}

fn cmd_compute(args: &ComputeArgs) -> Result<ExitCode> {
    if args.n_max < 1 {
        return Err(Error::HorizonTooShort("horizon must be >= 1".into()));
    }
    let tol = Tolerances::parse(&args.common.tolerance)?;
    let caps = Caps::from_env();
    let law = load_law(&args.common)?;
    let (plan, cls) = plan_and_class(&law)?;
    let (u, grid, method) = compute_occupation(&law, args.n_max, &args.grid, args.force_aliased, &caps, &tol)?;
    let p_seq = invert_renewal(&u, tol.neg)?;
    let total = occupation_total(&u, Some(&plan), None, &cls)?;
    let est = estimate_return_prob(&total);
    let meta = meta_for(&law, &method, args.n_max, grid.as_ref(), None);
    let summary = ComputeSummary {
        meta: meta.clone(),
        p: est.p,
        p_interval: Interval { lo: est.lo, hi: est.hi },
        defect: 1.0 - est.p,
        u_partial: total.partial,
        u_tail: total.tail,
        u_total: total.total,
        u_bound: total.bound,
        alias_bound_at_horizon: u.error(args.n_max),
    };
    let out = &args.common.out;
    report::write_text(&out.join("u.csv"), &report::occupation_csv(&u, &meta))?;
    report::write_text(&out.join("p.csv"), &report::return_csv(&p_seq, &meta))?;
    report::write_text(&out.join("summary.json"), &report::to_json(&summary))?;
    println!(
        "p = {:.6} (defect {:.6}); U = {:.6} = {:.6} + tail {:.6}; outputs in {}",
        est.p,
        1.0 - est.p,
        total.total,
        total.partial,
        total.tail,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    if args.n_max < 8 {
        return Err(Error::HorizonTooShort(
            "verification needs a horizon of at least 8".into(),
        ));
    }
    let tol = Tolerances::parse(&args.common.tolerance)?;
    let caps = Caps::from_env();
    let law = load_law(&args.common)?;
    let (plan, cls) = plan_and_class(&law)?;
    if let Some(reason) = asymptotics::Verdicts::from_class(&cls).failed_hypothesis(plan.eta()) {
        eprintln!("refused: hypothesis not met: {reason}");
        return Ok(ExitCode::from(2));
    }

    let grid = parse_grid(&law, &args.grid, args.n_max, &caps, tol.alias)?;
    let u = occupation_aliased(&law, args.n_max, &grid, &caps, None)?;
    // Heavy-tailed laws get an empirical alias guard from a half-grid run;
    // bounded-support laws rely on the certified bounds.
    let companion = match law.family() {
        Family::SymmetricPowerTail { .. } => {
            Some(occupation_aliased(&law, args.n_max, &grid.halved()?, &caps, None)?)
        }
        Family::FiniteAtoms => None,
    };
    let top = clean_horizon(&u, companion.as_ref(), tol.guard);
    let rho = cls.return_period.unwrap_or(1);
    let ladder = halving_ladder(top, 8, rho);
    if ladder.len() < 3 {
        return Err(Error::HorizonTooShort(format!(
            "clean horizon {top} leaves fewer than 3 ladder points (guard {})",
            tol.guard
        )));
    }

    let density = empirical_density_at_origin(&u, &plan, cls.lattice_index.unwrap_or(1), &ladder)?;
    let total = occupation_total(&u, Some(&plan), Some(density.value), &cls)?;
    let est = estimate_return_prob(&total);
    let p_seq = invert_renewal(&u, tol.neg)?;

    let mut notes = Vec::new();
    let g0_model = match law.family() {
        Family::FiniteAtoms => {
            let b = cls
                .covariance
                .clone()
                .ok_or_else(|| Error::UnsupportedFamily("missing covariance".into()))?;
            Some(gaussian_density_at_origin(&b)?)
        }
        Family::SymmetricPowerTail { alpha } => {
            let scale = stable_scale_from_tail(*alpha)?;
            notes.push(format!("stable scale convention: {}", scale.formula));
            Some(stable_density_at_origin(*alpha, scale.sigma)?)
        }
    };

    let rep = theorem_report(&p_seq, &u, &est, &plan, &cls, g0_model, &ladder, notes)?;
    let smooth = smoothness_check(&p_seq, (top / 2, top));
    let pass_ratio = rep.ratio_gap <= tol.ratio;
    let pass_constant = rep.g0_gap.map(|g| g <= tol.constant).unwrap_or(false);
    let pass = pass_ratio && pass_constant;
    let meta = meta_for(&law, "aliased-dft", args.n_max, Some(&grid), None);
    let summary = VerifySummary {
        meta: meta.clone(),
        tolerance_ratio: tol.ratio,
        tolerance_constant: tol.constant,
        ladder_guard: tol.guard,
        clean_horizon: top,
        pass_ratio,
        pass_constant,
        pass,
        smoothness: smooth,
        report: rep,
    };
    let out = &args.common.out;
    report::write_text(&out.join("report.json"), &report::to_json(&summary))?;
    report::write_text(&out.join("plot.csv"), &report::plot_csv(&summary.report, &meta))?;
    println!(
        "ratio limit {:.6} vs target {:.6} (gap {:.3}%), constant {:.6} vs model {} (gap {}%); {}",
        summary.report.ratio_limit,
        summary.report.target_ratio,
        100.0 * summary.report.ratio_gap,
        summary.report.g0_empirical,
        summary
            .report
            .g0_model
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into()),
        summary
            .report
            .g0_gap
            .map(|v| format!("{:.3}", 100.0 * v))
            .unwrap_or_else(|| "-".into()),
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn prob_string(p: &Prob) -> String {
    match p {
        Prob::Exact(r) => format_rational(r),
        Prob::Float(x) => report::fmt17(*x),
    }
}

fn cmd_oracle(args: &OracleArgs) -> Result<ExitCode> {
    if args.n_max < 1 {
        return Err(Error::HorizonTooShort("horizon must be >= 1".into()));
    }
    let caps = Caps::from_env();
    let law = load_law(&args.common)?;
    let n = args.n_max;

    // Exact chains. The taboo table and the convolution kernel obey the
    // rational cost caps and refuse oversized runs.
    let taboo = taboo_dp(&law, n, &caps)?;
    let u = occupation_exact(&law, n, &caps)?;
    let p_seq = invert_renewal(&u, 1e-9)?;
    let atoms = law.atoms_f64().len() as u128;
    let enum_max = (1..=n)
        .take_while(|&m| atoms.checked_pow(m as u32).map(|c| c <= caps.enum_cost).unwrap_or(false))
        .last()
        .unwrap_or(0);

    let mc = simulate_walks(&law, n, args.trials, args.seed)?;

    let mut rows = Vec::new();
    let mut exact_ok = true;
    let mut contained = 0usize;
    let mut contain_total = 0usize;
    for m in 1..=n {
        let enum_vals = if m <= enum_max {
            Some(exact_enumeration(&law, m, &caps)?)
        } else {
            None
        };
        for quantity in ["u", "p"] {
            let (renewal_exact, renewal_f64, taboo_exact, taboo_f64) = if quantity == "u" {
                (u.exact().map(|e| e[m].clone()), u.value(m), None, None)
            } else {
                (
                    p_seq.exact().map(|e| e[m].clone()),
                    p_seq.value(m),
                    taboo.return_mass.exact().map(|e| e[m].clone()),
                    Some(taboo.return_mass.value(m)),
                )
            };
            let enum_val = enum_vals.as_ref().map(|(uu, pp)| if quantity == "u" { uu } else { pp });
            let mut agree = true;
            if let (Some(re), Some(te)) = (&renewal_exact, &taboo_exact) {
                agree &= re == te;
            } else if let Some(tf) = taboo_f64 {
                agree &= (tf - renewal_f64).abs() <= 1e-12;
            }
            if let Some(ev) = enum_val {
                match (ev, &renewal_exact) {
                    (Prob::Exact(e), Some(re)) => agree &= e == re,
                    _ => agree &= (ev.to_f64() - renewal_f64).abs() <= 1e-12,
                }
            }
            exact_ok &= agree;
            let (lo, hi) = if quantity == "u" {
                mc.u_interval(m)
            } else {
                mc.p_interval(m)
            };
            let est = if quantity == "u" { mc.u_hat(m) } else { mc.p_hat(m) };
            let inside = renewal_f64 >= lo && renewal_f64 <= hi;
            contained += inside as usize;
            contain_total += 1;
            rows.push(OracleRow {
                n: m,
                quantity: quantity.to_string(),
                enumeration: enum_val.map(prob_string),
                taboo: if quantity == "p" {
                    Some(
                        taboo
                            .return_mass
                            .exact()
                            .map(|e| format_rational(&e[m]))
                            .unwrap_or_else(|| report::fmt17(taboo.return_mass.value(m))),
                    )
                } else {
                    None
                },
                renewal: Some(
                    u.exact()
                        .map(|_| {
                            if quantity == "u" {
                                format_rational(&u.exact().unwrap()[m])
                            } else {
                                format_rational(&p_seq.exact().unwrap()[m])
                            }
                        })
                        .unwrap_or_else(|| report::fmt17(renewal_f64)),
                ),
                exact_agree: agree,
                value: renewal_f64,
                mc_estimate: Some(est),
                mc_interval: Some(Interval { lo, hi }),
                mc_contains: Some(inside),
            });
        }
    }
    let containment = contained as f64 / contain_total as f64;
    let mc_pass = containment >= 0.95;
    let pass = exact_ok && mc_pass;
    let meta = meta_for(&law, u.method().as_str(), n, None, Some(args.seed));
    let summary = OracleSummary {
        meta,
        trials: args.trials,
        interval_method: "wilson-99".into(),
        exact_chains_agree: exact_ok,
        mc_containment: containment,
        mc_pass,
        pass,
        rows,
    };
    report::write_text(&args.common.out.join("oracle.json"), &report::to_json(&summary))?;
    println!(
        "exact chains agree: {exact_ok}; MC containment {:.1}% ({} of {}); {}",
        100.0 * containment,
        contained,
        contain_total,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    if args.n_max < 1 {
        return Err(Error::HorizonTooShort("horizon must be >= 1".into()));
    }
    let law = load_law(&args.common)?;
    let mc = simulate_walks(&law, args.n_max, args.trials, args.seed)?;
    let meta = meta_for(&law, "monte-carlo", args.n_max, None, Some(args.seed));
    let summary = SimulateSummary {
        meta: meta.clone(),
        trials: args.trials,
        interval_method: "wilson-99".into(),
        n_max: args.n_max,
    };
    let out = &args.common.out;
    report::write_text(&out.join("mc.csv"), &report::mc_csv(&mc, &meta))?;
    report::write_text(&out.join("mc.json"), &report::to_json(&summary))?;
    let (lo, hi) = wilson_interval(mc.zero_hits[args.n_max.min(mc.n_max)], mc.trials, Z99);
    println!(
        "{} trials done; u_hat({}) = {:.3e} [{:.3e}, {:.3e}]; outputs in {}",
        mc.trials,
        args.n_max,
        mc.u_hat(args.n_max),
        lo,
        hi,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Model { command } => match command {
            ModelCommand::Validate(args) => cmd_model_validate(args),
        },
        Command::Compute(args) => cmd_compute(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
