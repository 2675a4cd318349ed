//! The identity suite behind `sudest verify` and the acceptance tests.
//!
//! Each check evaluates a list of assertions `lo ≤ value ≤ hi`. Expected
//! values are written out from their closed forms here rather than taken from
//! the library functions under test.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use sudest_core::dense::{self, DEFAULT_DENSE_CAP};
use sudest_core::designs::{chernoff_sample_size, mub_prime, sample_approx_design, sic_povm, VectorSet};
use sudest_core::estimate::{self, ExperimentConfig, StateFamily, Strategy};
use sudest_core::linalg::{self, c64, rng_stream, CMatrix, CVector};
use sudest_core::measurement::{
    self, classical_fisher, locc_protocol, optimal_povm, random_measurement_fi, random_measurement_pair, DensePovm,
    OutcomeStatistics, Povm,
};
use sudest_core::qfi::{self, FisherMatrix};
use sudest_core::states::{from_approx_design, from_design, product_baseline, random_state, StructuredState};
use sudest_core::sud::{gell_mann_basis, Chart};

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub label: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Assertion {
    pub fn passed(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub criterion: usize,
    pub title: String,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Check ids whose first assertion is replaced by NaN (test hook).
    pub perturb: Vec<String>,
}

/// Seed used when none is given; the suite is a regression check, so its
/// statistical assertions run on fixed draws by default.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub const CHECKS: [(&str, &str); 11] = [
    ("optimal_qfi", "2-design inputs reach H = 4n(n+d)/(d(d+1))·1"),
    ("bound", "Tr H⁻¹ equals the bound and the constructed POVM attains the QFI"),
    ("strictness", "non-design inputs stay above the bound; equality iff two-copy average matches"),
    ("dense_oracle", "overlap engine agrees with full-space computation"),
    ("mse_scaling", "MLE with the attaining POVM: N·TrMSE near the bound, 1/(N n²) law"),
    ("separable", "independent uses give Tr H⁻¹ = Θ(1/n)"),
    ("random_measurement", "Y-pairing identity and Haar-averaged FI = QFI/2"),
    ("locc", "LOCC protocol averages to the optimal QFI and meets the MSE window"),
    ("approx_design", "approximate designs concentrate around the optimum"),
    ("injectivity", "transition amplitude has modulus one only on the phase orbit"),
    ("determinism", "experiments are bit-reproducible under a fixed seed"),
];

pub fn criterion_of(id: &str) -> Option<usize> {
    CHECKS.iter().position(|(c, _)| *c == id).map(|i| i + 1)
}

struct Collector {
    assertions: Vec<Assertion>,
    notes: Vec<String>,
}

impl Collector {
    fn new() -> Self {
        Collector {
            assertions: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn range(&mut self, label: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.assertions.push(Assertion {
            label: label.into(),
            value,
            lo,
            hi,
        });
    }

    fn at_most(&mut self, label: impl Into<String>, value: f64, hi: f64) {
        self.range(label, value, f64::NEG_INFINITY, hi);
    }

    fn at_least(&mut self, label: impl Into<String>, value: f64, lo: f64) {
        self.range(label, value, lo, f64::INFINITY);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

type CheckFn = fn(&VerifyOptions, &mut Collector) -> anyhow::Result<()>;

fn check_fn(id: &str) -> Option<CheckFn> {
    Some(match id {
        "optimal_qfi" => check_optimal_qfi,
        "bound" => check_bound,
        "strictness" => check_strictness,
        "dense_oracle" => check_dense_oracle,
        "mse_scaling" => check_mse_scaling,
        "separable" => check_separable,
        "random_measurement" => check_random_measurement,
        "locc" => check_locc,
        "approx_design" => check_approx_design,
        "injectivity" => check_injectivity,
        "determinism" => check_determinism,
        _ => return None,
    })
}

pub fn run_check(id: &str, options: &VerifyOptions) -> anyhow::Result<CheckResult> {
    let f = check_fn(id).ok_or_else(|| anyhow::anyhow!("unknown check `{id}`"))?;
    let criterion = criterion_of(id).expect("listed");
    let start = Instant::now();
    let mut c = Collector::new();
    let error = f(options, &mut c).err().map(|e| format!("{e:#}"));
    if options.perturb.iter().any(|p| p == id) {
        match c.assertions.first_mut() {
            Some(a) => a.value = f64::NAN,
            None => c.range("perturbation", f64::NAN, 0.0, 0.0),
        }
        c.note("perturbed by request");
    }
    let passed = error.is_none() && !c.assertions.is_empty() && c.assertions.iter().all(Assertion::passed);
    Ok(CheckResult {
        id: id.to_string(),
        criterion,
        title: CHECKS[criterion - 1].1.to_string(),
        passed,
        assertions: c.assertions,
        notes: c.notes,
        error,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_suite(ids: &[&str], options: &VerifyOptions) -> anyhow::Result<Vec<CheckResult>> {
    ids.iter().map(|id| run_check(id, options)).collect()
}

pub fn all_ids() -> Vec<&'static str> {
    CHECKS.iter().map(|(id, _)| *id).collect()
}

fn design_states(d: usize, n: usize) -> anyhow::Result<Vec<(&'static str, StructuredState)>> {
    Ok(vec![
        ("mub", from_design(&VectorSet::from_bases(&mub_prime(d)?)?, n)?),
        ("sic", from_design(&sic_povm(d)?, n)?),
    ])
}

fn closed_form_qfi(d: usize, n: usize) -> f64 {
    let (d, n) = (d as f64, n as f64);
    4.0 * n * (n + d) / (d * (d + 1.0))
}

fn closed_form_bound(d: usize, n: usize) -> f64 {
    let (d, n) = (d as f64, n as f64);
    d * (d + 1.0) * (d + 1.0) * (d - 1.0) / (4.0 * n * (n + d))
}

fn scaled_identity(p: usize, v: f64) -> FisherMatrix {
    FisherMatrix::new(DMatrix::identity(p, p) * v)
}

fn check_optimal_qfi(_: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for d in [2, 3] {
        let gens = gell_mann_basis(d)?;
        for n in 1..=8 {
            for (name, s) in design_states(d, n)? {
                let h = qfi::qfi_pure_state(&s, gens.generators())?;
                let dist = h.frobenius_distance(&scaled_identity(d * d - 1, closed_form_qfi(d, n)));
                if dist >= worst {
                    worst = dist;
                    worst_case = format!("{name} d={d} n={n}");
                }
            }
        }
    }
    c.note(format!("largest deviation at {worst_case}: {worst:.2e}"));
    c.at_most("max Frobenius distance to closed form", worst, 1e-10);
    let s = &design_states(2, 2)?[0].1;
    let h = qfi::qfi_pure_state(s, gell_mann_basis(2)?.generators())?;
    c.at_most("d=2 n=2 diagonal − 16/3", (h.matrix()[(0, 0)] - 16.0 / 3.0).abs(), 1e-10);
    Ok(())
}

fn check_bound(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let mut worst_tr: f64 = 0.0;
    let mut worst_fi: f64 = 0.0;
    let mut rng = rng_stream(opts.seed, 2);
    for d in [2, 3] {
        let chart = Chart::gell_mann(d)?;
        let p = d * d - 1;
        for n in 1..=8 {
            for (_, s) in design_states(d, n)? {
                let h = qfi::qfi_pure_state(&s, chart.basis().generators())?;
                worst_tr = worst_tr.max((h.trace_inverse()? - closed_form_bound(d, n)).abs());
                let origin = vec![0.0; p];
                let povm = Povm::Optimal(optimal_povm(&s, &chart, &origin)?);
                let fi = measurement::fisher_information(&povm, &s, &chart, &origin)?;
                worst_fi = worst_fi.max(fi.frobenius_distance(&h));
            }
        }
        // Away from the origin, with a random reference point.
        let reference = linalg::haar_unitary(d, &mut rng);
        let shifted = Chart::with_reference(gell_mann_basis(d)?, reference)?;
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
        for (_, s) in design_states(d, 3)? {
            let povm = optimal_povm(&s, &shifted, &theta)?;
            let h = povm.qfi().clone();
            let fi = measurement::fisher_information(&Povm::Optimal(povm), &s, &shifted, &theta)?;
            worst_fi = worst_fi.max(fi.frobenius_distance(&h));
        }
    }
    c.at_most("max |Tr H⁻¹ − d(d+1)²(d−1)/(4n(n+d))|", worst_tr, 1e-10);
    let gens = gell_mann_basis(2)?;
    let t1 = qfi::qfi_pure_state(&design_states(2, 1)?[0].1, gens.generators())?.trace_inverse()?;
    let t2 = qfi::qfi_pure_state(&design_states(2, 2)?[0].1, gens.generators())?.trace_inverse()?;
    c.at_most("|Tr H⁻¹ − 1.5| at d=2 n=1", (t1 - 1.5).abs(), 1e-10);
    c.at_most("|Tr H⁻¹ − 0.5625| at d=2 n=2", (t2 - 0.5625).abs(), 1e-10);
    c.at_most("max Frobenius |FI(POVM) − QFI|", worst_fi, 1e-8);
    Ok(())
}

fn check_strictness(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let (d, n) = (2usize, 3usize);
    let gens = gell_mann_basis(d)?;
    let bound = closed_form_bound(d, n);
    let swap = linalg::swap_operator(d);
    let target = (linalg::identity(d * d) + swap) / c64((d * (d + 1)) as f64, 0.0);
    let mut rng = rng_stream(opts.seed, 3);
    let mut inputs = Vec::new();
    for k in 0..200 {
        let branches = 1 + k % 6;
        let labels = 1 + (k % 4) as u64;
        inputs.push(random_state(d, n, branches, labels, &mut rng)?);
    }
    // Rotated designs are designs again: they must sit exactly on the bound.
    for k in 0..20 {
        let v = linalg::haar_unitary(d, &mut rng);
        let base = &design_states(d, n)?[k % 2].1;
        inputs.push(base.rotated(&v)?);
    }
    let mut min_gap = f64::INFINITY;
    let mut mismatches = 0usize;
    let mut on_bound = 0usize;
    for s in &inputs {
        let h = qfi::qfi_pure_state(s, gens.generators())?;
        let tr = h.trace_inverse().unwrap_or(f64::INFINITY);
        let gap = tr - bound;
        min_gap = min_gap.min(gap);
        let rho2 = s.reduced_moments().rho2()?.clone();
        let matches = (rho2 - &target).norm() <= 1e-8;
        let tight = gap <= 1e-9;
        on_bound += tight as usize;
        mismatches += (matches != tight) as usize;
    }
    c.note(format!("{} inputs, {on_bound} on the bound", inputs.len()));
    c.at_least("min(Tr H⁻¹ − bound)", min_gap, -1e-9);
    c.at_most("inputs where tightness and two-copy match disagree", mismatches as f64, 0.0);
    c.at_least("inputs on the bound (non-vacuous iff)", on_bound as f64, 1.0);
    Ok(())
}

/// Outcome statistics of the completed rank-one POVM `{|m⟩⟨m|} ∪ {1 − Σ}`.
fn completed_statistics(vectors: &CMatrix, model: &dense::DenseModel) -> OutcomeStatistics {
    let (mut probs, mut dprobs) = model.rank_one_statistics(vectors);
    let p = model.dpsi.len();
    let residual = 1.0 - probs.iter().sum::<f64>();
    let dres: Vec<f64> = (0..p).map(|g| -dprobs.iter().map(|r| r[g]).sum::<f64>()).collect();
    probs.push(residual);
    dprobs.push(dres);
    OutcomeStatistics { probs, dprobs }
}

fn check_dense_oracle(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let d = 2;
    let basis = gell_mann_basis(d)?;
    let mut rng = rng_stream(opts.seed, 4);
    let (mut dq, mut dp, mut df) = (0.0f64, 0.0f64, 0.0f64);
    for n in 1..=3 {
        for _ in 0..20 {
            // Generic state: QFI only.
            let g = random_state(d, n, 4, 3, &mut rng)?;
            let chart = Chart::with_reference(basis.clone(), linalg::haar_unitary(d, &mut rng))?;
            let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-0.6..0.6)).collect();
            let structured = qfi::qfi_pure_state(&g, &chart.tangent_at(&theta)?)?;
            let model = dense::model_at(&g, &chart, &theta, DEFAULT_DENSE_CAP)?;
            let oracle = FisherMatrix::new(model.l_matrix().map(|z| z.re));
            dq = dq.max(structured.frobenius_distance(&oracle));

            // Attainable, non-design state: POVM probabilities and FI.
            let m = rng.random_range(1..=3);
            let s = from_approx_design(&sample_approx_design(d, m, &mut rng)?, n)?;
            let built_at: Vec<f64> = (0..3).map(|_| rng.random_range(-0.4..0.4)).collect();
            let eval_at: Vec<f64> = built_at.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
            let povm = optimal_povm(&s, &chart, &built_at)?;
            let vectors = povm.dense_vectors(&s, &chart, DEFAULT_DENSE_CAP)?;
            let model = dense::model_at(&s, &chart, &eval_at, DEFAULT_DENSE_CAP)?;
            let oracle_stats = completed_statistics(&vectors, &model);
            let wrapped = Povm::Optimal(povm);
            let probs = wrapped.probabilities(&s, &chart, &eval_at)?;
            for (a, b) in probs.iter().zip(&oracle_stats.probs) {
                dp = dp.max((a - b).abs());
            }
            let fi = measurement::fisher_information(&wrapped, &s, &chart, &eval_at)?;
            df = df.max(fi.frobenius_distance(&classical_fisher(&oracle_stats)));
        }
    }
    c.at_most("max |p_structured − p_dense|", dp, 1e-10);
    c.at_most("max ‖QFI_structured − QFI_dense‖", dq, 1e-10);
    c.at_most("max ‖FI_structured − FI_dense‖", df, 1e-10);
    Ok(())
}

fn mse_config(n: usize, seed: u64, family: StateFamily, strategy: Strategy) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(2, n, 5000, 200);
    cfg.family = family;
    cfg.strategy = strategy;
    cfg.seed = seed;
    cfg
}

fn check_mse_scaling(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut scaled = Vec::new();
    for n in 1..=4 {
        let cfg = mse_config(n, opts.seed.wrapping_add(500 + n as u64), StateFamily::Mub, Strategy::Optimal);
        let r = estimate::mse_experiment(&cfg)?.report;
        c.note(format!(
            "n={n}: N·TrMSE={:.4} bound={:.4} ratio={:.3} excluded={}",
            r.n_times_trace, r.bound, r.ratio, r.excluded
        ));
        if n <= 3 {
            c.range(format!("ratio at n={n}"), r.ratio, 0.85, 1.20);
        }
        c.at_most(format!("excluded trials at n={n} (≤1%)"), r.excluded as f64, 2.0);
        scaled.push(r.scaled());
    }
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    c.at_most("max/min of N·TrMSE·n(n+d), n=1..4", max / min, 1.3);
    c.at_most("runtime (s)", start.elapsed().as_secs_f64(), 300.0);
    Ok(())
}

/// Applies `op` to tensor slot `slot` of a vector on `(C^k)^{⊗slots}`.
fn apply_on_slot(v: &CVector, op: &CMatrix, slot: usize, slots: usize) -> CVector {
    let k = op.nrows();
    let right = k.pow((slots - slot - 1) as u32);
    let left = k.pow(slot as u32);
    let mut out = CVector::zeros(v.len());
    for l in 0..left {
        for r in 0..right {
            for i in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..k {
                    acc += op[(i, j)] * v[(l * k + j) * right + r];
                }
                out[(l * k + i) * right + r] = acc;
            }
        }
    }
    out
}

fn check_separable(_: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let d = 2;
    let gens = gell_mann_basis(d)?;
    let single = from_design(&VectorSet::from_bases(&mub_prime(d)?)?, 1)?;
    let mut values = Vec::new();
    for n in 1..=8 {
        let h = qfi::qfi_independent_uses(&single, n, gens.generators())?;
        values.push(n as f64 * h.trace_inverse()?);
    }
    // Dense oracle for the product over uses, n ≤ 3.
    let psi1 = dense::to_dense(&single, DEFAULT_DENSE_CAP)?;
    let lifted: Vec<CMatrix> = gens.generators().iter().map(|t| dense::lift(t, single.ancilla_dim())).collect();
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let psi = (1..n).fold(psi1.clone(), |acc, _| linalg::kron_vec(&acc, &psi1));
        let gpsi: Vec<CVector> = lifted
            .iter()
            .map(|g| (0..n).fold(CVector::zeros(psi.len()), |acc, s| acc + apply_on_slot(&psi, g, s, n)))
            .collect();
        let p = gpsi.len();
        let h = DMatrix::from_fn(p, p, |a, b| {
            4.0 * (gpsi[a].dotc(&gpsi[b]) - gpsi[a].dotc(&psi) * psi.dotc(&gpsi[b])).re
        });
        let additive = qfi::qfi_independent_uses(&single, n, gens.generators())?;
        worst = worst.max(additive.frobenius_distance(&FisherMatrix::new(h)));
    }
    c.at_most("‖additive QFI − dense QFI‖ over n ≤ 3", worst, 1e-10);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    c.note(format!("n·TrH⁻¹ over n=1..8: {values:.4?}"));
    c.range("min n·TrH⁻¹", min, 0.5, 5.0);
    c.range("max n·TrH⁻¹", max, 0.5, 5.0);
    // Against the entangled inputs, whose n·TrH⁻¹ decays like 1/n.
    let ratio = |n: usize| values[n - 1] / (n as f64 * closed_form_bound(d, n));
    c.at_least("growth of separable/entangled Tr H⁻¹ ratio, n=1→8", ratio(8) / ratio(1), 3.0);

    let tau = CVector::from_vec(vec![c64(1.0 / 2f64.sqrt(), 0.0), c64(0.5, 0.5)]);
    let prod = product_baseline(&tau, 4)?;
    let hp = qfi::qfi_pure_state(&prod, gens.generators())?;
    c.note(format!(
        "|τ⟩^⊗n alone has QFI rank {} of 3 (Tr H⁻¹ = ∞); trace/n = {:.4}",
        hp.eigenvalues().iter().filter(|&&e| e > 1e-9).count(),
        hp.trace() / 4.0
    ));
    Ok(())
}

fn check_random_measurement(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let chart = Chart::gell_mann(2)?;
    let origin = [0.0; 3];
    let mut rng = rng_stream(opts.seed, 7);
    let mut worst_pair: f64 = 0.0;
    for n in 1..=2 {
        let s = &design_states(2, n)?[0].1;
        let model = dense::model_at(s, &chart, &origin, DEFAULT_DENSE_CAP)?;
        let h = FisherMatrix::new(DMatrix::identity(3, 3) * closed_form_qfi(2, n));
        for _ in 0..20 {
            let u = linalg::haar_unitary(model.psi.len(), &mut rng);
            let pair = random_measurement_pair(&u, s, &chart, &origin, DEFAULT_DENSE_CAP)?;
            let f1 = classical_fisher(&pair.first.statistics_on(&model));
            let f2 = classical_fisher(&pair.second.statistics_on(&model));
            worst_pair = worst_pair.max(FisherMatrix::new(f1.matrix() + f2.matrix()).frobenius_distance(&h));
        }
        let mc = random_measurement_fi(s, &chart, &origin, 10_000, opts.seed.wrapping_add(70 + n as u64), DEFAULT_DENSE_CAP)?;
        let half = closed_form_qfi(2, n) / 2.0;
        let mut z: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { half } else { 0.0 };
                z = z.max((mc.mean.matrix()[(i, j)] - expected).abs() / mc.standard_error[(i, j)]);
            }
        }
        c.at_most(format!("max |MC mean − QFI/2| / SE at n={n}"), z, 3.0);
        if n == 1 {
            c.note(format!("Monte-Carlo Tr FI⁻¹ at n=1: {:.4}", mc.mean.trace_inverse()?));
            let u = linalg::haar_unitary(model.psi.len(), &mut rng);
            let pair = random_measurement_pair(&u, s, &chart, &origin, DEFAULT_DENSE_CAP)?;
            let mix = DensePovm::mixture(&[(0.5, &pair.first), (0.5, &pair.second)])?;
            let fi = classical_fisher(&mix.statistics_on(&model));
            c.at_most("|Tr FI⁻¹ − 3.0| (balanced pair, d=2 n=1)", (fi.trace_inverse()? - 3.0).abs(), 1e-8);
        }
    }
    c.at_most("max ‖FI(B) + FI(YB) − QFI‖ over 20 bases, n=1,2", worst_pair, 1e-8);
    Ok(())
}

fn check_locc(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let chart = Chart::gell_mann(2)?;
    let bases = mub_prime(2)?;
    let (mut worst_q, mut worst_f) = (0.0f64, 0.0f64);
    for n in 2..=8 {
        let plan = locc_protocol(&bases, n, &chart, &[0.0; 3])?;
        if plan.branches.len() != 6 {
            anyhow::bail!("expected 6 outcomes for Alice, got {}", plan.branches.len());
        }
        let mut avg = DMatrix::zeros(3, 3);
        for b in &plan.branches {
            avg += qfi::qfi_pure_state(&b.state, chart.basis().generators())?.into_matrix() * b.probability;
        }
        let target = scaled_identity(3, closed_form_qfi(2, n));
        worst_q = worst_q.max(FisherMatrix::new(avg).frobenius_distance(&target));
        worst_f = worst_f.max(plan.averaged_fi.frobenius_distance(&target));
    }
    c.at_most("max ‖Σ p_bk H^{[bk]} − H_opt‖, n=2..8", worst_q, 1e-10);
    c.at_most("max ‖averaged FI of Bob's POVMs − H_opt‖, n=2..8", worst_f, 1e-8);
    // Alice's six outcomes are equally likely; at n = 1 Bob's conditional
    // states are not attainable, so only their QFI is reported.
    let mut tr1 = 0.0;
    for b in 0..bases.len() {
        for k in 0..2 {
            tr1 += qfi::qfi_of_conditional_state(&bases, b, k, 1, chart.basis().generators())?.trace() / 6.0;
        }
    }
    c.note(format!(
        "n=1: conditional states are single pure qubits, averaged QFI trace {tr1:.4} < {:.4}",
        3.0 * closed_form_qfi(2, 1)
    ));
    for n in [2, 3] {
        let cfg = mse_config(n, opts.seed.wrapping_add(800 + n as u64), StateFamily::Mub, Strategy::Locc);
        let r = estimate::mse_experiment(&cfg)?.report;
        c.range(format!("end-to-end LOCC ratio at n={n}"), r.ratio, 0.85, 1.20);
    }
    Ok(())
}

fn check_approx_design(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let (d, eps, q) = (2usize, 0.5f64, 0.95f64);
    let dd = d as f64;
    let independent = (4.0 * (dd + 1.0) * LN_2 / (eps * eps) * (2.0 * (dd * dd - 1.0) / (1.0 - q)).ln()).ceil();
    let m = chernoff_sample_size(d, eps, q)?;
    c.range("m from the library", m as f64, independent, independent);
    c.range("m recomputed", independent, 160.0, 160.0);
    let report = qfi::concentration_experiment(d, 2, eps, q, 200, opts.seed.wrapping_add(9))?;
    c.note(format!(
        "{} of {} repetitions violate the ±ε sandwich at n=2",
        report.violations, report.repeats
    ));
    c.at_most("violation fraction", report.violation_fraction, 1.0 - q);
    for n in [1, 3] {
        let (mean, se) = qfi::haar_mean_h_n(d, n, 20_000, opts.seed.wrapping_add(90 + n as u64))?;
        let target = closed_form_qfi(d, n);
        let mut z: f64 = 0.0;
        for i in 0..mean.nrows() {
            for j in 0..mean.ncols() {
                let expected = if i == j { target } else { 0.0 };
                let diff = (mean[(i, j)] - expected).abs();
                z = z.max(if se[(i, j)] > 0.0 { diff / se[(i, j)] } else if diff < 1e-12 { 0.0 } else { f64::INFINITY });
            }
        }
        c.at_most(format!("max |mean h_n − H⁰| / SE at n={n}"), z, 3.0);
    }
    Ok(())
}

fn check_injectivity(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let d = 2;
    let chart = Chart::gell_mann(d)?;
    let mut rng = rng_stream(opts.seed, 10);
    let approx = sample_approx_design(d, 3, &mut rng)?;
    let mut states = Vec::new();
    for n in [2, 3] {
        states.push(design_states(d, n)?.remove(0).1);
        states.push(from_approx_design(&approx, n)?);
    }
    let mut on_orbit: f64 = 0.0;
    let mut off_orbit = f64::INFINITY;
    for s in &states {
        for _ in 0..10 {
            let phase = c64(0.0, rng.random_range(0.0..2.0 * PI)).exp();
            on_orbit = on_orbit.max(s.injectivity_margin(&(linalg::identity(d) * phase))?);
        }
        for _ in 0..100 {
            let dir = linalg::random_unit_vector(3, &mut rng);
            let r = rng.random_range(0.1..1.0);
            let theta: Vec<f64> = dir.iter().map(|z| z.re).collect();
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            let theta: Vec<f64> = theta.iter().map(|x| x * r / norm).collect();
            let phase = c64(0.0, rng.random_range(0.0..2.0 * PI)).exp();
            let u = chart.unitary_at(&theta)? * phase;
            off_orbit = off_orbit.min(s.injectivity_margin(&u)?);
        }
    }
    c.at_most("max margin at phase·1", on_orbit, 1e-12);
    c.at_least("min margin at chart distance ∈ [0.1, 1]", off_orbit, 1e-6);
    Ok(())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

fn fingerprint<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string(value)?)
}

fn check_determinism(opts: &VerifyOptions, c: &mut Collector) -> anyhow::Result<()> {
    let mut differing = 0usize;
    let mut runs = 0usize;
    for strategy in [Strategy::Optimal, Strategy::TwoStep, Strategy::Random, Strategy::Locc] {
        let mut cfg = ExperimentConfig::new(2, 2, 600, 12);
        cfg.strategy = strategy;
        cfg.seed = opts.seed.wrapping_add(1100);
        let a = in_pool(1, || estimate::mse_experiment(&cfg))??;
        let b = in_pool(4, || estimate::mse_experiment(&cfg))??;
        let same = fingerprint(&a.report)? == fingerprint(&b.report)? && fingerprint(&a.trials)? == fingerprint(&b.trials)?;
        differing += (!same) as usize;
        runs += 1;
    }
    let conc = |t| in_pool(t, || qfi::concentration_experiment(2, 2, 0.5, 0.95, 16, opts.seed.wrapping_add(1200)));
    differing += (fingerprint(&conc(1)??)? != fingerprint(&conc(3)??)?) as usize;
    runs += 1;
    let chart = Chart::gell_mann(2)?;
    let s = &design_states(2, 1)?[0].1;
    let rm = |t| in_pool(t, || random_measurement_fi(s, &chart, &[0.0; 3], 64, opts.seed.wrapping_add(1300), DEFAULT_DENSE_CAP));
    let (a, b) = (rm(1)??, rm(4)??);
    differing += (a.mean.matrix().iter().zip(b.mean.matrix().iter()).any(|(x, y)| x.to_bits() != y.to_bits())) as usize;
    runs += 1;
    c.note(format!("{runs} experiment kinds rerun under 1 and several threads"));
    c.at_most("runs with differing output", differing as f64, 0.0);
    Ok(())
}
