//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sudest_core::designs::{self, mub_prime, sic_povm, verify_2design_with_tol, DesignReport, VectorSet};
use sudest_core::estimate::{mse_experiment, ExperimentConfig, MleOptions, MseReport, StateFamily, Strategy};
use sudest_core::qfi::{self, optimal_cn};
use sudest_core::sud::gell_mann_basis;

use crate::args::{
    ApproxArgs, Cli, Command, DesignAction, DesignKind, MeasurementKind, QfiArgs, SimulateArgs, StateKind,
    StrategyKind, VerifyArgs,
};
use crate::config::{pick, require, resolve_common, Common, FileConfig};
use crate::output::{self, num, Provenance, RunRecord};
use crate::{plot, usage, verify, Status};

/// Defaults for `approx`; `--state approx` without `--m` also uses the
/// Chernoff sample size at these values.
const DEFAULT_EPSILON: f64 = 0.5;
const DEFAULT_Q: f64 = 0.95;

struct Context {
    common: Common,
    file: FileConfig,
    json: bool,
    started: Instant,
}

impl Context {
    fn echo(&self, command: &str, config: &Value) {
        let mut shown = config.clone();
        if let Value::Object(map) = &mut shown {
            map.insert("seed".into(), json!(self.common.seed));
            map.insert("threads".into(), json!(self.common.threads));
            map.insert("dense_cap".into(), json!(self.common.dense_cap));
            map.insert("out_dir".into(), json!(self.common.out_dir));
        }
        eprintln!("sudest {command}: resolved config {shown}");
        if self.common.seed_from_entropy {
            eprintln!("sudest {command}: seed {} drawn from entropy", self.common.seed);
        }
    }

    fn record<'a, T: Serialize>(&self, command: &'a str, config: &Value, result: &'a T) -> RunRecord<'a, T> {
        RunRecord {
            version: sudest_core::VERSION,
            command,
            seed: self.common.seed,
            config: self.full_config(config),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            result,
        }
    }

    fn full_config(&self, config: &Value) -> Value {
        json!({
            "command": config,
            "seed": self.common.seed,
            "seed_from_entropy": self.common.seed_from_entropy,
            "threads": self.common.threads,
            "dense_cap": self.common.dense_cap,
            "out_dir": self.common.out_dir,
        })
    }

    fn provenance(&self, command: &str, config: &Value) -> Provenance {
        Provenance {
            command: command.into(),
            seed: self.common.seed,
            config: json!({ "command": config, "dense_cap": self.common.dense_cap }),
        }
    }

    fn print_json<T: Serialize>(&self, value: &T) -> anyhow::Result<()> {
        println!("{}", serde_json::to_string_pretty(value)?);
        Ok(())
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut global = cli.global.clone();
    if matches!(cli.command, Command::Verify(_)) && global.seed.is_none() && file.seed.is_none() {
        global.seed = Some(verify::DEFAULT_SEED);
    }
    let common = resolve_common(&global, &file);
    let ctx = Context {
        common,
        file,
        json: cli.global.json,
        started: Instant::now(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.common.threads)
        .build()
        .map_err(|e| anyhow::anyhow!("cannot start worker pool: {e}"))?;
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &Context, command: Command) -> anyhow::Result<Status> {
    match command {
        Command::Design { action } => match action {
            DesignAction::Build { kind, d, out } => design_build(ctx, kind, d, out.as_deref()),
            DesignAction::Check { file, tol } => design_check(ctx, &file, tol),
        },
        Command::Qfi(args) => qfi_cmd(ctx, args),
        Command::Approx(args) => approx(ctx, args),
        Command::Simulate(args) => simulate(ctx, args),
        Command::Verify(args) => verify_cmd(ctx, args),
    }
}

fn dimension(flag: Option<usize>, file: Option<usize>) -> anyhow::Result<usize> {
    let d = pick(flag, file, 2);
    require(d >= 2, format!("--d must be at least 2, got {d}"))?;
    Ok(d)
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Success
    } else {
        Status::Failed
    }
}

#[derive(Serialize)]
struct BuiltDesign {
    kind: DesignKind,
    d: usize,
    /// One row per vector, entries `[re, im]`.
    vectors: Vec<Vec<[f64; 2]>>,
    /// Present for MUBs: each basis as its own list of rows.
    bases: Option<Vec<Vec<Vec<[f64; 2]>>>>,
    report: DesignReport,
}

fn design_build(ctx: &Context, kind: Option<DesignKind>, d: Option<usize>, out: Option<&Path>) -> anyhow::Result<Status> {
    let kind = pick(kind, ctx.file.kind, DesignKind::Mub);
    let d = dimension(d, ctx.file.d)?;
    let tol = pick(None, ctx.file.tol, designs::DEFAULT_DESIGN_TOL);
    let config = json!({ "kind": kind, "d": d, "tol": tol });
    ctx.echo("design build", &config);
    let (set, bases) = match kind {
        DesignKind::Mub => {
            let bases = mub_prime(d)?;
            let rows = bases
                .iter()
                .map(|b| b.iter().map(designs::vector_to_pairs).collect())
                .collect();
            (VectorSet::from_bases(&bases)?, Some(rows))
        }
        DesignKind::Sic => (sic_povm(d)?, None),
    };
    let report = verify_2design_with_tol(&set, tol);
    let built = BuiltDesign {
        kind,
        d,
        vectors: set.to_rows(),
        bases,
        report,
    };
    if let Some(path) = out {
        output::write_json(path, &ctx.record("design build", &config, &built))?;
    }
    ctx.print_json(&built)?;
    Ok(status(report.is_design))
}

#[derive(Serialize)]
struct CheckedDesign {
    d: usize,
    count: usize,
    report: DesignReport,
}

fn read_vector_set(path: &Path) -> anyhow::Result<VectorSet> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{} is not JSON: {e}", path.display())))?;
    // Accept a bare list, a `design build` result, or a run record wrapping one.
    let rows = match &value {
        Value::Array(_) => value.clone(),
        Value::Object(map) => map
            .get("vectors")
            .or_else(|| map.get("result").and_then(|r| r.get("vectors")))
            .cloned()
            .ok_or_else(|| usage(format!("{}: object has no \"vectors\" key", path.display())))?,
        _ => return Err(usage(format!("{}: expected a list of vectors", path.display()))),
    };
    let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(rows)
        .map_err(|e| usage(format!("{}: vectors must be lists of [re, im] pairs: {e}", path.display())))?;
    VectorSet::from_rows(&rows).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn design_check(ctx: &Context, path: &Path, tol: Option<f64>) -> anyhow::Result<Status> {
    let tol = pick(tol, ctx.file.tol, designs::DEFAULT_DESIGN_TOL);
    require(tol.is_finite() && tol >= 0.0, "--tol must be a non-negative number")?;
    let config = json!({ "file": path, "tol": tol });
    ctx.echo("design check", &config);
    let set = read_vector_set(path)?;
    let checked = CheckedDesign {
        d: set.dim(),
        count: set.len(),
        report: verify_2design_with_tol(&set, tol),
    };
    if ctx.json {
        ctx.print_json(&checked)?;
    } else {
        println!(
            "{} vectors in C^{}: Hilbert-Schmidt distance {:.3e} (tol {:.1e}) -> {}",
            checked.count,
            checked.d,
            checked.report.hs_distance,
            tol,
            if checked.report.is_design { "2-design" } else { "not a 2-design" }
        );
    }
    Ok(status(checked.report.is_design))
}

fn state_family(kind: StateKind, d: usize, m: Option<usize>) -> anyhow::Result<StateFamily> {
    Ok(match kind {
        StateKind::Mub => StateFamily::Mub,
        StateKind::Sic => StateFamily::Sic,
        StateKind::Product => StateFamily::Product,
        StateKind::Approx => {
            let m = match m {
                Some(m) => m,
                None => designs::chernoff_sample_size(d, DEFAULT_EPSILON, DEFAULT_Q)?,
            };
            require(m >= 1, "--m must be at least 1")?;
            StateFamily::Approx { m }
        }
    })
}

#[derive(Serialize)]
struct QfiResult {
    d: usize,
    n: usize,
    state: StateKind,
    m: Option<usize>,
    qfi: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    /// `null` when the QFI is singular.
    tr_inverse: Value,
    bound: f64,
    defect: f64,
}

fn qfi_cmd(ctx: &Context, args: QfiArgs) -> anyhow::Result<Status> {
    let d = dimension(args.d, ctx.file.d)?;
    let n = pick(args.n, ctx.file.single_n()?, 1);
    require(n >= 1, "--n must be at least 1")?;
    let kind = pick(args.state, ctx.file.state, StateKind::Mub);
    let family = state_family(kind, d, args.m.or(ctx.file.m))?;
    let m = match family {
        StateFamily::Approx { m } => Some(m),
        _ => None,
    };
    let config = json!({ "d": d, "n": n, "state": kind, "m": m });
    ctx.echo("qfi", &config);

    let state = sudest_core::estimate::build_state(d, n, family, ctx.common.seed)?;
    let basis = gell_mann_basis(d)?;
    let h = qfi::qfi_pure_state(&state, basis.generators())?;
    let tr_inv = h.trace_inverse().unwrap_or(f64::INFINITY);
    let result = QfiResult {
        d,
        n,
        state: kind,
        m,
        qfi: h.to_rows(),
        eigenvalues: h.eigenvalues().iter().copied().collect(),
        tr_inverse: output::finite_or_null(tr_inv),
        bound: optimal_cn(d, n),
        defect: qfi::attainability_defect(&state.reduced_moments().rho1, basis.generators()),
    };
    if let Some(path) = &args.out {
        output::write_json(path, &ctx.record("qfi", &config, &result))?;
    }
    if ctx.json {
        ctx.print_json(&result)?;
    } else {
        println!("QFI H (d={d}, n={n}, state={kind:?}):");
        for row in &result.qfi {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.6}")).collect();
            println!("  {}", cells.join(" "));
        }
        println!("Tr H^-1   {}", num(tr_inv));
        println!("bound     {}", num(result.bound));
        println!("defect    {:.3e}", result.defect);
    }
    Ok(Status::Success)
}

fn approx(ctx: &Context, args: ApproxArgs) -> anyhow::Result<Status> {
    let d = dimension(args.d, ctx.file.d)?;
    let n = pick(args.n, ctx.file.single_n()?, 2);
    let epsilon = pick(args.epsilon, ctx.file.epsilon, DEFAULT_EPSILON);
    let q = pick(args.q, ctx.file.q, DEFAULT_Q);
    let repeats = pick(args.repeats, ctx.file.repeats, 200);
    require(n >= 1, "--n must be at least 1")?;
    require(repeats >= 1, "--repeats must be at least 1")?;
    let config = json!({ "d": d, "n": n, "epsilon": epsilon, "q": q, "repeats": repeats });
    ctx.echo("approx", &config);

    let report = qfi::concentration_experiment(d, n, epsilon, q, repeats, ctx.common.seed)?;
    eprintln!("sudest approx: m = {}", report.m);

    let p = d * d - 1;
    let mut header: Vec<String> = ["repeat", "m", "epsilon", "q", "n"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=p).map(|k| format!("ratio_{k}")));
    header.extend(["max_deviation".to_string(), "violated".to_string()]);
    let rows: Vec<Vec<String>> = report
        .draws
        .iter()
        .map(|draw| {
            let mut row = vec![
                draw.repeat.to_string(),
                report.m.to_string(),
                num(epsilon),
                num(q),
                n.to_string(),
            ];
            row.extend(draw.eigenvalue_ratios.iter().map(|&r| num(r)));
            row.push(num(draw.max_deviation));
            row.push(draw.violated.to_string());
            row
        })
        .collect();

    let dir = &ctx.common.out_dir;
    output::ensure_dir(dir)?;
    let (json_path, csv_path, svg_path) = output::paths(dir, "approx");
    let prov = ctx.provenance("approx", &config);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    output::write_csv(&csv_path, &prov, &header_refs, &rows)?;
    let deviations: Vec<f64> = report.draws.iter().map(|d| d.max_deviation).collect();
    let svg = plot::histogram(
        &format!("max relative QFI deviation, d={d}, n={n}, m={}", report.m),
        "max |eigenvalue ratio - 1|",
        &deviations,
        30,
        Some((format!("epsilon = {epsilon}"), epsilon)),
    )?;
    output::write_svg(&svg_path, &prov, &svg)?;
    output::write_json(&json_path, &ctx.record("approx", &config, &report))?;

    let summary = json!({
        "d": d,
        "n": n,
        "epsilon": epsilon,
        "q": q,
        "m": report.m,
        "repeats": repeats,
        "violations": report.violations,
        "violation_fraction": report.violation_fraction,
        "passes": report.passes(),
        "files": [json_path, csv_path, svg_path],
    });
    if ctx.json {
        ctx.print_json(&summary)?;
    } else {
        println!("m = {}", report.m);
        println!(
            "violations: {}/{} = {} (target <= {:.4})",
            report.violations,
            repeats,
            num(report.violation_fraction),
            1.0 - q
        );
        println!("wrote {}, {}, {}", csv_path.display(), json_path.display(), svg_path.display());
    }
    Ok(status(report.passes()))
}

/// Per-`n` seed, so every copy count gets independent draws.
fn seed_for_n(master: u64, n: usize) -> u64 {
    master ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Serialize)]
struct SimulateRow {
    seed: u64,
    warnings: usize,
    scaled: f64,
    report: MseReport,
}

fn simulate(ctx: &Context, args: SimulateArgs) -> anyhow::Result<Status> {
    let d = dimension(args.d, ctx.file.d)?;
    let ns = args
        .n
        .or_else(|| ctx.file.n.clone().map(|c| c.into_vec()))
        .unwrap_or_else(|| vec![1, 2, 3, 4]);
    require(!ns.is_empty() && ns.iter().all(|&n| n >= 1), "--n needs copy counts >= 1")?;
    let big_n = pick(args.repetitions, ctx.file.repetitions, 5000);
    let trials = pick(args.trials, ctx.file.trials, 200);
    require(big_n >= 1 && trials >= 1, "--repetitions and --trials must be positive")?;
    let kind = pick(args.state, ctx.file.state, StateKind::Mub);
    let family = state_family(kind, d, args.m.or(ctx.file.m))?;
    let strategy_kind = pick(args.strategy, ctx.file.strategy, StrategyKind::Oracle);
    let measurement = pick(args.measurement, ctx.file.measurement, MeasurementKind::Optimal);
    let strategy = match (measurement, strategy_kind) {
        (MeasurementKind::Optimal, StrategyKind::Oracle) => Strategy::Optimal,
        (MeasurementKind::Optimal, StrategyKind::TwoStep) => Strategy::TwoStep,
        (MeasurementKind::Optimal, StrategyKind::Locc) => Strategy::Locc,
        (MeasurementKind::Random, StrategyKind::Oracle) => Strategy::Random,
        (MeasurementKind::Random, other) => {
            return Err(usage(format!("--measurement random cannot be combined with --strategy {other:?}")))
        }
    };
    let m = match family {
        StateFamily::Approx { m } => Some(m),
        _ => None,
    };
    let config = json!({
        "d": d, "n": ns, "repetitions": big_n, "trials": trials, "state": kind, "m": m,
        "strategy": strategy_kind, "measurement": measurement,
    });
    ctx.echo("simulate", &config);

    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let mut cfg = ExperimentConfig::new(d, n, big_n, trials);
        cfg.family = family;
        cfg.strategy = strategy;
        cfg.seed = seed_for_n(ctx.common.seed, n);
        cfg.dense_cap = ctx.common.dense_cap;
        cfg.mle = MleOptions::default();
        let outcome = mse_experiment(&cfg)?;
        let warnings = outcome.trials.iter().map(|t| t.warnings.len()).sum();
        if warnings > 0 {
            eprintln!("sudest simulate: n={n}: {warnings} trial warnings");
        }
        eprintln!(
            "sudest simulate: n={n}: N*TrMSE/bound = {:.4} ({} excluded)",
            outcome.report.ratio, outcome.report.excluded
        );
        rows.push(SimulateRow {
            seed: cfg.seed,
            warnings,
            scaled: outcome.report.scaled(),
            report: outcome.report,
        });
    }

    let header = [
        "d",
        "n",
        "repetitions",
        "trials",
        "excluded",
        "state",
        "strategy",
        "measurement",
        "seed",
        "trace_mse",
        "n_times_trace",
        "scaled",
        "bound",
        "ratio",
    ];
    let label = |v: Value| v.as_str().unwrap_or_default().to_string();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.report.d.to_string(),
                r.report.n.to_string(),
                r.report.big_n.to_string(),
                r.report.trials.to_string(),
                r.report.excluded.to_string(),
                label(json!(kind)),
                label(json!(strategy_kind)),
                label(json!(measurement)),
                r.seed.to_string(),
                num(r.report.trace_mse),
                num(r.report.n_times_trace),
                num(r.scaled),
                num(r.report.bound),
                num(r.report.ratio),
            ]
        })
        .collect();

    let dir = &ctx.common.out_dir;
    output::ensure_dir(dir)?;
    let (json_path, csv_path, svg_path) = output::paths(dir, "simulate");
    let prov = ctx.provenance("simulate", &config);
    output::write_csv(&csv_path, &prov, &header, &csv_rows)?;
    let factor = if measurement == MeasurementKind::Random { 2.0 } else { 1.0 };
    let constant = factor * (d * (d + 1) * (d + 1) * (d - 1)) as f64 / 4.0;
    let svg = plot::line_chart(
        &format!("N Tr MSE n(n+d), d={d}, N={big_n}"),
        "n",
        "N Tr MSE n(n+d)",
        &[(
            format!("{strategy_kind:?}/{measurement:?}").to_lowercase(),
            rows.iter().map(|r| (r.report.n as f64, r.scaled)).collect(),
        )],
        Some((format!("bound constant {}", num(constant)), constant)),
    )?;
    output::write_svg(&svg_path, &prov, &svg)?;
    output::write_json(&json_path, &ctx.record("simulate", &config, &rows))?;

    if ctx.json {
        ctx.print_json(&json!({ "rows": rows, "files": [json_path, csv_path, svg_path] }))?;
    } else {
        println!("{:>3} {:>12} {:>12} {:>10} {:>8}", "n", "N*TrMSE", "scaled", "bound", "ratio");
        for r in &rows {
            println!(
                "{:>3} {:>12.5} {:>12.5} {:>10.5} {:>8.4}",
                r.report.n, r.report.n_times_trace, r.scaled, r.report.bound, r.report.ratio
            );
        }
        println!("wrote {}, {}, {}", csv_path.display(), json_path.display(), svg_path.display());
    }
    Ok(Status::Success)
}

fn verify_cmd(ctx: &Context, args: VerifyArgs) -> anyhow::Result<Status> {
    if args.list {
        for (id, title) in verify::CHECKS {
            println!("{:>2}  {id:<20} {title}", verify::criterion_of(id).unwrap_or(0));
        }
        return Ok(Status::Success);
    }
    for id in args.only.iter().chain(&args.perturb) {
        if verify::criterion_of(id).is_none() {
            return Err(usage(format!("unknown check `{id}`; see `sudest verify --list`")));
        }
    }
    let ids: Vec<&str> = if args.only.is_empty() {
        verify::all_ids()
    } else {
        args.only.iter().map(String::as_str).collect()
    };
    let config = json!({ "only": ids, "perturb": args.perturb });
    ctx.echo("verify", &config);
    let options = verify::VerifyOptions {
        seed: ctx.common.seed,
        perturb: args.perturb.clone(),
    };
    let results = verify::run_suite(&ids, &options)?;
    let passed = results.iter().all(|r| r.passed);
    if ctx.json {
        ctx.print_json(&ctx.record("verify", &config, &json!({ "passed": passed, "checks": results })))?;
    } else {
        for r in &results {
            println!(
                "criterion {:>2}  {:<20} {}  {:>7.2}s  {}",
                r.criterion,
                r.id,
                if r.passed { "PASS" } else { "FAIL" },
                r.seconds,
                r.title
            );
            for a in r.assertions.iter().filter(|a| !r.passed || !a.passed()) {
                println!(
                    "      {} {}: {} in [{}, {}]",
                    if a.passed() { "ok " } else { "BAD" },
                    a.label,
                    num(a.value),
                    num(a.lo),
                    num(a.hi)
                );
            }
            if let Some(e) = &r.error {
                println!("      error: {e}");
            }
        }
        let failed = results.iter().filter(|r| !r.passed).count();
        println!("{} of {} checks passed", results.len() - failed, results.len());
    }
    Ok(status(passed))
}
