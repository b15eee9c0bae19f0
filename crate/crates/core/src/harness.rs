//! Seeded instance suites, configuration, and report emission for the
//! `verify`, `convergence`, `density` and `bv` commands.
//!
//! Every run is a pure function of the configuration and the seed. Instances
//! run on a worker pool and are collected in id order, so the emitted files
//! are byte-identical across runs and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    base_case_bound, continuous_bound, distance_bound, equidistant_bound, implicit_bound, iterative_step_report,
    kobayashi_bound, lipschitz_certificate, main_bound, wellposedness_modulus, wellposedness_stability, AllowanceCheck,
    BoundReport, Comparison, LipschitzReport,
};
use crate::bv::{
    c1_var_check, jordan_decompose, norm_equivalence_check, shift_estimate_check, BVStep, RealBV, SampledC1,
};
use crate::density::{
    abc_slack, concentration_bound, concentration_profile, density_direct, density_forward, forward_visit,
    mass_profile, Axis,
};
use crate::error::{Error, Result};
use crate::euler::{anchored_pair, euler_solution, solve_scheme, Discretization, EulerSolution};
use crate::grid::{fmt_f64, ExtendedStep, Partition, StepFunction};
use crate::operators::{AccretiveOperator, GraphPair, LinearOperator, Shifted, SignGraph};
use crate::space::{NormKind, NormedSpace, State};

/// Slack tolerance shared by every bound check.
pub const SLACK_TOLERANCE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub verify: VerifyConfig,
    pub convergence: ConvergenceConfig,
    pub density: DensityConfig,
    pub bv: BvConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Scalar,
    Diagonal,
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Number of random instances; ignored when `instance` is nonempty.
    pub instances: usize,
    pub max_steps: usize,
    pub max_dim: usize,
    pub operators: Vec<OperatorKind>,
    pub norms: Vec<NormKind>,
    /// Declared `ω` for linear operators, bypassing the `|π|ω ≤ 0.9` clamp.
    pub omega_override: Option<f64>,
    pub continuous_samples: usize,
    pub tolerance: f64,
    pub wellposedness: bool,
    pub wellposedness_level: u32,
    /// Explicit instances, e.g. a failure dump.
    pub instance: Vec<InstanceSpec>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            instances: 100,
            max_steps: 32,
            max_dim: 3,
            operators: vec![OperatorKind::Scalar, OperatorKind::Diagonal, OperatorKind::Sign],
            norms: NormKind::ALL.to_vec(),
            omega_override: None,
            continuous_samples: 50,
            tolerance: SLACK_TOLERANCE,
            wellposedness: true,
            wellposedness_level: 10,
            instance: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub k_min: u32,
    pub k_max: u32,
    pub reference_level: u32,
    pub bound_slope: f64,
    pub bound_slope_tolerance: f64,
    pub study: Vec<StudySpec>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            k_min: 4,
            k_max: 10,
            reference_level: 12,
            bound_slope: 0.5,
            bound_slope_tolerance: 0.02,
            study: vec![StudySpec::sign_graph(), StudySpec::linear()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub cases: usize,
    pub max_steps: usize,
    pub concentration_points: usize,
    pub heatmap_rows: usize,
    pub heatmap_cols: usize,
    pub abc_triples: usize,
    pub tolerance: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            cases: 50,
            max_steps: 32,
            concentration_points: 50,
            heatmap_rows: 16,
            heatmap_cols: 24,
            abc_triples: 100_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvConfig {
    pub shift_cases: usize,
    pub property_cases: usize,
    pub c1_samples: usize,
}

impl Default for BvConfig {
    fn default() -> Self {
        BvConfig {
            shift_cases: 1000,
            property_cases: 200,
            c1_samples: 10_000,
        }
    }
}

/// Seed, output directory and worker count of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; `None` lets the pool decide.
    pub jobs: Option<usize>,
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// instance specifications

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// `A = diag(d)`, declared of type `omega`.
    Linear { diagonal: Vec<f64>, omega: f64 },
    /// Componentwise sign graph plus a constant shift.
    Sign { shift: Vec<f64> },
}

impl OperatorSpec {
    pub fn build(&self, space: &NormedSpace) -> Result<Arc<dyn AccretiveOperator>> {
        match self {
            OperatorSpec::Linear { diagonal, omega } => {
                Ok(Arc::new(LinearOperator::diagonal(diagonal, *omega, space)?))
            }
            OperatorSpec::Sign { shift } => {
                let base: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(space.dim));
                if shift.iter().all(|c| *c == 0.0) {
                    Ok(base)
                } else {
                    Ok(Arc::new(Shifted::new(base, state(shift))?))
                }
            }
        }
    }

    pub fn omega(&self) -> f64 {
        match self {
            OperatorSpec::Linear { omega, .. } => *omega,
            OperatorSpec::Sign { .. } => 0.0,
        }
    }
}

/// A step function `values[k]` on `[times[k], times[k + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl StepSpec {
    pub fn constant(horizon: f64, value: Vec<f64>) -> Self {
        StepSpec {
            times: vec![0.0, horizon],
            values: vec![value],
        }
    }

    pub fn build(&self) -> Result<StepFunction> {
        StepFunction::new(Partition::new(self.times.clone())?, self.values.iter().map(|v| state(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PairSpec {
    fn from_pair(p: &GraphPair) -> Self {
        PairSpec {
            u: p.u.iter().copied().collect(),
            v: p.v.iter().copied().collect(),
        }
    }

    pub fn build(&self) -> GraphPair {
        GraphPair::new(state(&self.u), state(&self.v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonFunction {
    pub label: String,
    pub step: StepSpec,
}

/// One certification instance: two Euler schemes for the same operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub id: usize,
    pub norm: NormKind,
    pub dim: usize,
    pub horizon: f64,
    pub operator: OperatorSpec,
    pub partition: Vec<f64>,
    pub partition_hat: Vec<f64>,
    pub forcing: StepSpec,
    pub forcing_hat: StepSpec,
    pub initial: Vec<f64>,
    pub initial_hat: Vec<f64>,
    pub pairs: Vec<PairSpec>,
    pub g: Vec<ComparisonFunction>,
}

fn state(v: &[f64]) -> State {
    State::from_column_slice(v)
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-r..r)).collect()
}

fn random_partition_times(rng: &mut ChaCha8Rng, horizon: f64, n: usize) -> Vec<f64> {
    if rng.gen_bool(0.3) {
        return Partition::uniform(horizon, n).expect("n >= 1").times().to_vec();
    }
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut times = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for x in &w[..n - 1] {
        acc += x;
        times.push(horizon * acc / total);
    }
    times.push(horizon);
    times
}

fn random_step(rng: &mut ChaCha8Rng, horizon: f64, dim: usize, max_jumps: usize) -> StepSpec {
    let jumps = rng.gen_range(0..=max_jumps);
    let mut breaks: Vec<f64> = (0..jumps).map(|_| rng.gen_range(0.0..horizon)).filter(|t| *t > 0.0).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut times = vec![0.0];
    times.extend(breaks);
    times.push(horizon);
    let values = (0..times.len() - 1).map(|_| random_vec(rng, dim, 2.0)).collect();
    StepSpec { times, values }
}

fn sparsify(rng: &mut ChaCha8Rng, v: &mut [f64]) {
    for x in v.iter_mut() {
        if rng.gen_bool(0.3) {
            *x = 0.0;
        }
    }
}

/// Draws instance `id` of the random suite.
pub fn generate_instance(cfg: &VerifyConfig, seed: u64, id: usize) -> Result<InstanceSpec> {
    if cfg.operators.is_empty() || cfg.norms.is_empty() || cfg.max_steps == 0 || cfg.max_dim == 0 {
        return Err(Error::Config("verify needs operators, norms, max_steps >= 1 and max_dim >= 1".into()));
    }
    let mut rng = rng_for(seed, id as u64);
    let kind = cfg.operators[id % cfg.operators.len()];
    let norm = cfg.norms[(id / cfg.operators.len()) % cfg.norms.len()];
    let dim = match kind {
        OperatorKind::Scalar => 1,
        _ => rng.gen_range(1..=cfg.max_dim),
    };
    let horizon = rng.gen_range(0.5..2.0);
    let n = rng.gen_range(1..=cfg.max_steps);
    let nh = rng.gen_range(1..=cfg.max_steps);
    let partition = random_partition_times(&mut rng, horizon, n);
    let partition_hat = random_partition_times(&mut rng, horizon, nh);
    let mesh = Partition::new(partition.clone())?
        .mesh()
        .max(Partition::new(partition_hat.clone())?.mesh());
    let operator = match kind {
        OperatorKind::Scalar | OperatorKind::Diagonal => {
            let declared = *[-1.0, 0.0, 1.0].choose(&mut rng).expect("nonempty");
            let omega = match cfg.omega_override {
                Some(w) => w,
                None => f64::min(declared, 0.9 / mesh),
            };
            let diagonal = (0..dim).map(|_| -omega + rng.gen_range(0.0..3.0)).collect();
            OperatorSpec::Linear { diagonal, omega }
        }
        OperatorKind::Sign => {
            let shift = if rng.gen_bool(0.5) {
                vec![0.0; dim]
            } else {
                random_vec(&mut rng, dim, 1.5)
            };
            OperatorSpec::Sign { shift }
        }
    };
    let forcing = random_step(&mut rng, horizon, dim, 8);
    let forcing_hat = if rng.gen_bool(0.5) {
        forcing.clone()
    } else {
        random_step(&mut rng, horizon, dim, 8)
    };
    let mut initial = random_vec(&mut rng, dim, 2.0);
    let mut initial_hat = random_vec(&mut rng, dim, 2.0);
    let mut u_rand = random_vec(&mut rng, dim, 2.0);
    if kind == OperatorKind::Sign {
        sparsify(&mut rng, &mut initial);
        sparsify(&mut rng, &mut initial_hat);
        sparsify(&mut rng, &mut u_rand);
    }
    let target = random_vec(&mut rng, dim, 2.0);
    let space = NormedSpace::new(dim, norm)?;
    let op = operator.build(&space)?;
    let f0 = forcing.values[0].clone();
    let anchors = [
        (vec![0.0; dim], vec![0.0; dim]),
        (initial.clone(), f0),
        (u_rand, target),
    ];
    let pairs = anchors
        .iter()
        .map(|(u, t)| {
            anchored_pair(op.as_ref(), &state(u), &state(t))
                .map(|p| PairSpec::from_pair(&p))
                .ok_or(Error::UnsupportedOperator)
        })
        .collect::<Result<Vec<_>>>()?;
    let g = vec![
        ComparisonFunction {
            label: "zero".into(),
            step: StepSpec::constant(horizon, vec![0.0; dim]),
        },
        ComparisonFunction {
            label: "forcing".into(),
            step: forcing.clone(),
        },
        ComparisonFunction {
            label: "random".into(),
            step: random_step(&mut rng, horizon, dim, 8),
        },
    ];
    Ok(InstanceSpec {
        id,
        norm,
        dim,
        horizon,
        operator,
        partition,
        partition_hat,
        forcing,
        forcing_hat,
        initial,
        initial_hat,
        pairs,
        g,
    })
}

// ---------------------------------------------------------------------------
// verify

/// Digest of one bound evaluation inside an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub bound: String,
    pub solution: Option<String>,
    pub pair: Option<usize>,
    pub g: Option<String>,
    pub count: usize,
    pub min_slack: f64,
    pub argmin_i: Option<usize>,
    pub argmin_j: Option<usize>,
    pub pass: bool,
}

impl BoundRow {
    fn new(rep: &BoundReport, solution: Option<&str>, pair: Option<usize>, g: Option<&str>, tol: f64) -> Self {
        let s = rep.summary();
        BoundRow {
            bound: rep.name.clone(),
            solution: solution.map(String::from),
            pair,
            g: g.map(String::from),
            count: s.count,
            min_slack: s.min_slack,
            argmin_i: s.argmin_i,
            argmin_j: s.argmin_j,
            pass: rep.passes(tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceOutcome {
    pub id: usize,
    pub operator: String,
    pub norm: NormKind,
    pub dim: usize,
    pub steps: usize,
    pub steps_hat: usize,
    pub omega: f64,
    pub pass: bool,
    pub error: Option<String>,
    pub min_slack: f64,
    pub kobayashi_applicable: bool,
    pub kobayashi_dominates: Option<bool>,
    pub bounds: Vec<BoundRow>,
}

struct Solved {
    space: NormedSpace,
    sol: EulerSolution,
    hat: EulerSolution,
    uni: EulerSolution,
    uni_hat: EulerSolution,
    pairs: Vec<GraphPair>,
    g: Vec<(String, StepFunction)>,
}

fn solve_instance(spec: &InstanceSpec) -> Result<Solved> {
    let space = NormedSpace::new(spec.dim, spec.norm)?;
    let op = spec.operator.build(&space)?;
    let f = spec.forcing.build()?;
    let fh = spec.forcing_hat.build()?;
    let p = Arc::new(Partition::new(spec.partition.clone())?);
    let q = Arc::new(Partition::new(spec.partition_hat.clone())?);
    let (u0, uh0) = (state(&spec.initial), state(&spec.initial_hat));
    space.check(&u0)?;
    space.check(&uh0)?;
    let sol = solve_scheme(op.as_ref(), &Discretization::projected(p.clone(), &f, u0.clone())?)?;
    let hat = solve_scheme(op.as_ref(), &Discretization::projected(q, &fh, uh0.clone())?)?;
    let uniform = Arc::new(Partition::uniform(spec.horizon, p.len())?);
    let uni = solve_scheme(op.as_ref(), &Discretization::projected(uniform.clone(), &f, u0)?)?;
    let uni_hat = solve_scheme(op.as_ref(), &Discretization::projected(uniform, &fh, uh0)?)?;
    let pairs = spec.pairs.iter().map(PairSpec::build).collect();
    let g = spec
        .g
        .iter()
        .map(|c| Ok((c.label.clone(), c.step.build()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Solved {
        space,
        sol,
        hat,
        uni,
        uni_hat,
        pairs,
        g,
    })
}

fn run_bounds(spec: &InstanceSpec, cfg: &VerifyConfig, s: &Solved) -> Result<(Vec<BoundRow>, bool, Option<bool>)> {
    let omega = spec.operator.omega();
    let tol = cfg.tolerance;
    let space = &s.space;
    let cmp = Comparison::new(&s.sol, &s.hat, omega, space)?;
    let uni = Comparison::new(&s.uni, &s.uni_hat, omega, space)?;
    let mut rows = vec![BoundRow::new(&iterative_step_report(&cmp)?, None, None, None, tol)];
    let kob_ok = cmp.max_mesh() * omega <= 0.5;
    let mut dominates = if kob_ok { Some(true) } else { None };
    for (k, pair) in s.pairs.iter().enumerate() {
        for (label, sol) in [("theta", &s.sol), ("theta_hat", &s.hat)] {
            rows.push(BoundRow::new(&base_case_bound(sol, omega, pair, space)?, Some(label), Some(k), None, tol));
        }
        rows.push(BoundRow::new(&equidistant_bound(&uni, pair)?, None, Some(k), None, tol));
        if kob_ok {
            let kob = kobayashi_bound(&cmp, pair)?;
            rows.push(BoundRow::new(&kob.report, None, Some(k), None, tol));
            if let Some(d) = dominates.as_mut() {
                *d &= kob.dominates;
            }
        }
        for (label, g) in &s.g {
            let gl = Some(label.as_str());
            rows.push(BoundRow::new(&main_bound(&cmp, pair, g)?, None, Some(k), gl, tol));
            let gt = ExtendedStep::new(pair.v.clone(), g.clone())?;
            rows.push(BoundRow::new(&implicit_bound(&cmp, pair, &gt)?, None, Some(k), gl, tol));
            rows.push(BoundRow::new(
                &continuous_bound(&cmp, pair, g, cfg.continuous_samples)?,
                None,
                Some(k),
                gl,
                tol,
            ));
            rows.push(BoundRow::new(&distance_bound(&cmp, pair, g)?, None, Some(k), gl, tol));
        }
    }
    Ok((rows, kob_ok, dominates))
}

/// Runs every bound on one instance; errors become part of the outcome.
pub fn evaluate_instance(spec: &InstanceSpec, cfg: &VerifyConfig) -> InstanceOutcome {
    let omega = spec.operator.omega();
    let operator = match &spec.operator {
        OperatorSpec::Linear { .. } if spec.dim == 1 => "scalar",
        OperatorSpec::Linear { .. } => "diagonal",
        OperatorSpec::Sign { .. } => "sign",
    }
    .to_string();
    let mut out = InstanceOutcome {
        id: spec.id,
        operator,
        norm: spec.norm,
        dim: spec.dim,
        steps: spec.partition.len().saturating_sub(1),
        steps_hat: spec.partition_hat.len().saturating_sub(1),
        omega,
        pass: false,
        error: None,
        min_slack: f64::NAN,
        kobayashi_applicable: false,
        kobayashi_dominates: None,
        bounds: Vec::new(),
    };
    match solve_instance(spec).and_then(|s| run_bounds(spec, cfg, &s)) {
        Ok((rows, kob_ok, dom)) => {
            out.min_slack = rows.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min);
            let dom_ok = !(kob_ok && omega >= 0.0) || dom == Some(true);
            out.pass = rows.iter().all(|r| r.pass) && dom_ok;
            out.kobayashi_applicable = kob_ok;
            out.kobayashi_dominates = dom;
            out.bounds = rows;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// One modulus, stability or Lipschitz check on a library instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellposednessRow {
    pub case: String,
    pub check: String,
    pub t: f64,
    pub t_hat: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub allowance: f64,
    pub quadrature_error: f64,
    pub slack: f64,
    pub pass: bool,
}

impl WellposednessRow {
    fn from_check(case: &str, check: &str, t: f64, t_hat: f64, c: &AllowanceCheck, tol: f64) -> Self {
        WellposednessRow {
            case: case.into(),
            check: check.into(),
            t,
            t_hat,
            lhs: c.lhs,
            rhs: c.rhs,
            allowance: c.allowance,
            quadrature_error: c.quadrature_error,
            slack: c.slack,
            pass: c.slack >= -tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzRow {
    pub case: String,
    #[serde(flatten)]
    pub report: LipschitzReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellposednessReport {
    pub level: u32,
    pub modulus_min_slack: f64,
    pub stability_min_slack: f64,
    pub rows: Vec<WellposednessRow>,
    pub lipschitz: Vec<LipschitzRow>,
    pub pass: bool,
}

/// A fixed problem `u' + Au ∋ f` from the operator library.
struct LibraryCase {
    name: &'static str,
    op: Arc<dyn AccretiveOperator>,
    space: NormedSpace,
    f: StepFunction,
    u0: State,
    /// Second initial value and forcing for the stability estimate.
    u0_hat: State,
    f_hat: StepFunction,
    /// Equilibria `(û, v̂)` for the modulus estimate.
    anchors: Vec<GraphPair>,
}

fn s(x: f64) -> State {
    State::from_element(1, x)
}

fn library_cases() -> Result<Vec<LibraryCase>> {
    let l2 = NormedSpace::new(1, NormKind::L2)?;
    let sign: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(1));
    let switch = StepFunction::from_breaks(2.0, &[1.0], vec![s(1.0), s(-1.0)])?;
    let zero2 = StepFunction::constant(Partition::uniform(2.0, 1)?, s(0.0));
    let one1 = StepFunction::constant(Partition::uniform(1.0, 1)?, s(1.0));
    let zero1 = StepFunction::constant(Partition::uniform(1.0, 1)?, s(0.0));
    let mut cases = vec![
        LibraryCase {
            name: "sign_free_decay",
            op: sign.clone(),
            space: l2,
            f: zero2.clone(),
            u0: s(1.0),
            u0_hat: s(0.5),
            f_hat: zero2.clone(),
            anchors: vec![GraphPair::new(s(0.0), s(0.0))],
        },
        LibraryCase {
            name: "sign_switching_forcing",
            op: sign.clone(),
            space: l2,
            f: switch.clone(),
            u0: s(1.0 / 3.0),
            u0_hat: s(1.0),
            f_hat: StepFunction::from_breaks(2.0, &[0.5], vec![s(0.5), s(-0.25)])?,
            anchors: vec![GraphPair::new(s(0.0), s(0.0)), GraphPair::new(s(1.0 / 3.0), s(1.0))],
        },
        LibraryCase {
            name: "sign_absorbed_forcing",
            op: sign,
            space: l2,
            f: StepFunction::constant(Partition::uniform(2.0, 1)?, s(0.5)),
            u0: s(0.0),
            u0_hat: s(-0.75),
            f_hat: zero2,
            anchors: vec![GraphPair::new(s(0.0), s(0.5))],
        },
        LibraryCase {
            name: "linear_decay",
            op: Arc::new(LinearOperator::scalar(1.0, 0.0)?),
            space: l2,
            f: zero1.clone(),
            u0: s(1.0),
            u0_hat: s(0.25),
            f_hat: zero1.clone(),
            anchors: vec![GraphPair::new(s(0.0), s(0.0))],
        },
        LibraryCase {
            name: "linear_relaxation",
            op: Arc::new(LinearOperator::scalar(1.0, 0.0)?),
            space: l2,
            f: one1.clone(),
            u0: s(0.0),
            u0_hat: s(2.0),
            f_hat: StepFunction::from_breaks(1.0, &[0.5], vec![s(1.0), s(0.0)])?,
            anchors: vec![GraphPair::new(s(1.0), s(1.0)), GraphPair::new(s(0.0), s(0.0))],
        },
        LibraryCase {
            name: "linear_growth",
            op: Arc::new(LinearOperator::scalar(-1.0, 1.0)?),
            space: l2,
            f: zero1.clone(),
            u0: s(1.0),
            u0_hat: s(0.5),
            f_hat: zero1,
            anchors: vec![GraphPair::new(s(0.0), s(0.0))],
        },
    ];
    for norm in NormKind::ALL {
        let sp = NormedSpace::new(2, norm)?;
        let base: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(2));
        let shift = State::from_vec(vec![0.25, -0.5]);
        let f = StepFunction::from_breaks(
            1.5,
            &[0.6],
            vec![State::from_vec(vec![0.5, 1.0]), State::from_vec(vec![-1.0, 0.0])],
        )?;
        cases.push(LibraryCase {
            name: match norm {
                NormKind::L1 => "shifted_sign_l1",
                NormKind::L2 => "shifted_sign_l2",
                NormKind::LInf => "shifted_sign_linf",
            },
            op: Arc::new(Shifted::new(base, shift.clone())?),
            space: sp,
            f: f.clone(),
            u0: State::from_vec(vec![1.0, 0.0]),
            u0_hat: State::from_vec(vec![0.0, -0.5]),
            f_hat: StepFunction::constant(Partition::uniform(1.5, 1)?, State::from_vec(vec![0.25, -0.5])),
            anchors: vec![GraphPair::new(State::zeros(2), shift)],
        });
    }
    Ok(cases)
}

/// Modulus, stability and Lipschitz checks on the library instances.
pub fn wellposedness_suite(level: u32, tol: f64) -> Result<WellposednessReport> {
    let k_min = level.saturating_sub(6).max(1);
    let mut rows = Vec::new();
    let mut lipschitz = Vec::new();
    for case in library_cases()? {
        let sp = &case.space;
        let omega = case.op.omega();
        let study = euler_solution(case.op.as_ref(), &case.f, &case.u0, k_min, level, sp)?;
        let study_hat = euler_solution(case.op.as_ref(), &case.f_hat, &case.u0_hat, k_min, level, sp)?;
        let u = &study.finest().trajectory;
        let uh = &study_hat.finest().trajectory;
        let gap = study.finest_gap();
        let gap_hat = study_hat.finest_gap();
        let times: Vec<f64> = crate::bounds::sample_times(case.f.partition().horizon(), 11);
        for pair in &case.anchors {
            for &t in &times {
                for &th in &times {
                    let c = wellposedness_modulus(u, &case.f, pair, omega, t, th, 2.0 * gap, sp)?;
                    rows.push(WellposednessRow::from_check(case.name, "modulus", t, th, &c, tol));
                }
            }
        }
        for &t in &times {
            let c = wellposedness_stability(u, uh, &case.f, &case.f_hat, omega, t, 2.0 * (gap + gap_hat), 4, sp)?;
            rows.push(WellposednessRow::from_check(case.name, "stability", t, t, &c, tol));
        }
        lipschitz.push(LipschitzRow {
            case: case.name.into(),
            report: lipschitz_certificate(case.op.clone(), &case.f, &case.u0, level, sp)?,
        });
    }
    let min_of = |check: &str| {
        rows.iter()
            .filter(|r| r.check == check)
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    };
    let pass = rows.iter().all(|r| r.pass) && lipschitz.iter().all(|l| l.report.pass);
    Ok(WellposednessReport {
        level,
        modulus_min_slack: min_of("modulus"),
        stability_min_slack: min_of("stability"),
        rows,
        lipschitz,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTotals {
    pub bound: String,
    pub evaluations: usize,
    pub min_slack: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub seed: u64,
    pub instances: usize,
    pub passed: usize,
    pub failed: Vec<usize>,
    pub errors: Vec<usize>,
    pub tolerance: f64,
    pub min_slack: f64,
    pub totals: Vec<BoundTotals>,
    pub outcomes: Vec<InstanceOutcome>,
    pub wellposedness: Option<WellposednessReport>,
    pub pass: bool,
}

/// Instances of a verify run: explicit ones from the config, else the random suite.
pub fn verify_instances(cfg: &VerifyConfig, seed: u64) -> Result<Vec<InstanceSpec>> {
    if !cfg.instance.is_empty() {
        return Ok(cfg.instance.clone());
    }
    (0..cfg.instances).map(|id| generate_instance(cfg, seed, id)).collect()
}

pub fn run_verify(cfg: &Config, seed: u64, jobs: Option<usize>) -> Result<(VerifyReport, Vec<InstanceSpec>)> {
    let vc = &cfg.verify;
    let specs = verify_instances(vc, seed)?;
    let outcomes: Vec<InstanceOutcome> =
        with_pool(jobs, || specs.par_iter().map(|s| evaluate_instance(s, vc)).collect())?;
    let wellposedness = if vc.wellposedness {
        Some(wellposedness_suite(vc.wellposedness_level, 1e-6)?)
    } else {
        None
    };
    let mut names: Vec<String> = Vec::new();
    for o in &outcomes {
        for r in &o.bounds {
            if !names.contains(&r.bound) {
                names.push(r.bound.clone());
            }
        }
    }
    let totals = names
        .into_iter()
        .map(|name| {
            let rows: Vec<&BoundRow> = outcomes.iter().flat_map(|o| &o.bounds).filter(|r| r.bound == name).collect();
            BoundTotals {
                evaluations: rows.iter().map(|r| r.count).sum(),
                min_slack: rows.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min),
                failures: rows.iter().filter(|r| !r.pass).count(),
                bound: name,
            }
        })
        .collect();
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    let errors: Vec<usize> = outcomes.iter().filter(|o| o.error.is_some()).map(|o| o.id).collect();
    let min_slack = outcomes
        .iter()
        .filter(|o| o.error.is_none())
        .map(|o| o.min_slack)
        .fold(f64::INFINITY, f64::min);
    let pass = failed.is_empty() && wellposedness.as_ref().is_none_or(|w| w.pass);
    let report = VerifyReport {
        command: "verify",
        seed,
        instances: outcomes.len(),
        passed: outcomes.len() - failed.len(),
        failed,
        errors,
        tolerance: vc.tolerance,
        min_slack,
        totals,
        outcomes,
        wellposedness,
        pass,
    };
    Ok((report, specs))
}

fn opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `report.json`, `verify_slacks.csv`, `wellposedness.csv` and one
/// replayable TOML file per failing instance.
pub fn cmd_verify(cfg: &Config, opts: &RunOptions) -> Result<VerifyReport> {
    let (report, specs) = run_verify(cfg, opts.seed, opts.jobs)?;
    create_out(&opts.out)?;
    write_json(&opts.out.join("report.json"), &report)?;
    let mut w = csv::Writer::from_path(opts.out.join("verify_slacks.csv"))?;
    w.write_record(["instance", "bound", "solution", "pair", "g", "count", "min_slack", "argmin_i", "argmin_j", "pass"])?;
    for o in &report.outcomes {
        for r in &o.bounds {
            w.write_record([
                o.id.to_string(),
                r.bound.clone(),
                r.solution.clone().unwrap_or_default(),
                opt_usize(r.pair),
                r.g.clone().unwrap_or_default(),
                r.count.to_string(),
                fmt_f64(r.min_slack),
                opt_usize(r.argmin_i),
                opt_usize(r.argmin_j),
                r.pass.to_string(),
            ])?;
        }
    }
    w.flush()?;
    if let Some(wp) = &report.wellposedness {
        let mut w = csv::Writer::from_path(opts.out.join("wellposedness.csv"))?;
        w.write_record(["case", "check", "t", "t_hat", "lhs", "rhs", "allowance", "quadrature_error", "slack"])?;
        for r in &wp.rows {
            w.write_record([
                r.case.clone(),
                r.check.clone(),
                fmt_f64(r.t),
                fmt_f64(r.t_hat),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.allowance),
                fmt_f64(r.quadrature_error),
                fmt_f64(r.slack),
            ])?;
        }
        w.flush()?;
    }
    let failing: Vec<&InstanceSpec> = specs.iter().filter(|s| report.failed.contains(&s.id)).collect();
    if !failing.is_empty() {
        let dir = opts.out.join("failures");
        fs::create_dir_all(&dir)?;
        for spec in failing {
            let dump = Config {
                seed: opts.seed,
                verify: VerifyConfig {
                    instance: vec![spec.clone()],
                    wellposedness: false,
                    ..cfg.verify.clone()
                },
                ..Config::default()
            };
            fs::write(dir.join(format!("instance_{:04}.toml", spec.id)), dump.to_toml_string()?)?;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// convergence

/// A refinement study against a fine reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub name: String,
    pub norm: NormKind,
    pub dim: usize,
    pub operator: OperatorSpec,
    pub forcing: StepSpec,
    pub initial: Vec<f64>,
    pub pair: PairSpec,
    pub g: StepSpec,
    pub min_error_slope: f64,
}

impl StudySpec {
    /// Sign graph driven by `1_{[0,1)} - 1_{[1,2]}`.
    pub fn sign_graph() -> Self {
        StudySpec {
            name: "sign_graph".into(),
            norm: NormKind::L2,
            dim: 1,
            operator: OperatorSpec::Sign { shift: vec![0.0] },
            forcing: StepSpec {
                times: vec![0.0, 1.0, 2.0],
                values: vec![vec![1.0], vec![-1.0]],
            },
            initial: vec![1.0 / 3.0],
            pair: PairSpec {
                u: vec![1.0 / 3.0],
                v: vec![1.0],
            },
            g: StepSpec {
                times: vec![0.0, 1.0, 2.0],
                values: vec![vec![1.0], vec![-1.0]],
            },
            min_error_slope: 0.5,
        }
    }

    /// `u' + u = 1`, `u(0) = 0`.
    pub fn linear() -> Self {
        StudySpec {
            name: "linear_smooth".into(),
            norm: NormKind::L2,
            dim: 1,
            operator: OperatorSpec::Linear {
                diagonal: vec![1.0],
                omega: 0.0,
            },
            forcing: StepSpec::constant(1.0, vec![1.0]),
            initial: vec![0.0],
            pair: PairSpec {
                u: vec![0.0],
                v: vec![0.0],
            },
            g: StepSpec::constant(1.0, vec![1.0]),
            min_error_slope: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub steps: usize,
    pub mesh: f64,
    pub error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
    pub error_slope: f64,
    pub bound_slope: f64,
    pub min_error_slope: f64,
    pub bound_dominates: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub command: &'static str,
    pub seed: u64,
    pub reference_level: u32,
    pub studies: Vec<StudyReport>,
    pub pass: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn solve_level(op: &dyn AccretiveOperator, f: &StepFunction, u0: &State, level: u32) -> Result<EulerSolution> {
    let p = Arc::new(Partition::uniform(f.partition().horizon(), 1usize << level)?);
    solve_scheme(op, &Discretization::projected(p, f, u0.clone())?)
}

pub fn run_study(study: &StudySpec, cc: &ConvergenceConfig) -> Result<StudyReport> {
    if !(cc.k_min < cc.k_max && cc.k_max < cc.reference_level && cc.reference_level <= 16) {
        return Err(Error::Config(format!(
            "need k_min < k_max < reference_level <= 16, got {} {} {}",
            cc.k_min, cc.k_max, cc.reference_level
        )));
    }
    let space = NormedSpace::new(study.dim, study.norm)?;
    let op = study.operator.build(&space)?;
    let f = study.forcing.build()?;
    let g = study.g.build()?;
    let u0 = state(&study.initial);
    let pair = study.pair.build();
    let reference = solve_level(op.as_ref(), &f, &u0, cc.reference_level)?;
    let omega = op.omega();
    let rows = (cc.k_min..=cc.k_max)
        .into_par_iter()
        .map(|k| {
            let sol = solve_level(op.as_ref(), &f, &u0, k)?;
            let error = sol.trajectory.sup_distance(&reference.trajectory, &space)?;
            let bound = crate::bounds::distance_rhs(&sol, &reference, omega, &pair, &g, &space)?;
            Ok(ConvergenceRow {
                level: k,
                steps: sol.partition().len(),
                mesh: sol.partition().mesh(),
                error,
                bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mesh: Vec<f64> = rows.iter().map(|r| r.mesh).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.bound).collect();
    let error_slope = loglog_slope(&mesh, &errs);
    let bound_slope = loglog_slope(&mesh, &bounds);
    let bound_dominates = rows.iter().all(|r| r.error <= r.bound + SLACK_TOLERANCE);
    let pass = error_slope >= study.min_error_slope
        && (bound_slope - cc.bound_slope).abs() <= cc.bound_slope_tolerance
        && bound_dominates;
    Ok(StudyReport {
        name: study.name.clone(),
        rows,
        error_slope,
        bound_slope,
        min_error_slope: study.min_error_slope,
        bound_dominates,
        pass,
    })
}

pub fn run_convergence(cfg: &Config, seed: u64, jobs: Option<usize>) -> Result<ConvergenceReport> {
    let cc = &cfg.convergence;
    let studies = with_pool(jobs, || {
        cc.study
            .iter()
            .map(|s| run_study(s, cc))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ConvergenceReport {
        command: "convergence",
        seed,
        reference_level: cc.reference_level,
        pass: studies.iter().all(|s| s.pass),
        studies,
    })
}

/// Writes `report.json` and `convergence_<study>.csv`.
pub fn cmd_convergence(cfg: &Config, opts: &RunOptions) -> Result<ConvergenceReport> {
    let report = run_convergence(cfg, opts.seed, opts.jobs)?;
    create_out(&opts.out)?;
    write_json(&opts.out.join("report.json"), &report)?;
    for s in &report.studies {
        let mut w = csv::Writer::from_path(opts.out.join(format!("convergence_{}.csv", s.name)))?;
        w.write_record(["level", "steps", "mesh", "error", "bound"])?;
        for r in &s.rows {
            w.write_record([
                r.level.to_string(),
                r.steps.to_string(),
                fmt_f64(r.mesh),
                fmt_f64(r.error),
                fmt_f64(r.bound),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// density

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCase {
    pub case: usize,
    pub steps: usize,
    pub steps_hat: usize,
    /// `max |forward - direct|` over all `(i, j)` and interior cells.
    pub oracle_error: f64,
    /// Worst deviation of a marginal from its indicator.
    pub marginal_error: f64,
    /// Smallest margin of `t_i ∨ t̂_j ≤ mass ≤ t_i + t̂_j`.
    pub mass_slack: f64,
    /// Smallest margin of the concentration estimate over all `(i, j)` and `t`.
    pub concentration_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub command: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub cases: Vec<DensityCase>,
    pub max_oracle_error: f64,
    pub max_marginal_error: f64,
    pub min_mass_slack: f64,
    pub min_concentration_slack: f64,
    pub abc_triples: usize,
    pub abc_min_slack: f64,
    pub heatmap_steps: (usize, usize),
    pub heatmap_total_mass: f64,
    pub pass: bool,
}

fn random_partition(rng: &mut ChaCha8Rng, horizon: f64, max_steps: usize) -> Result<Partition> {
    let n = rng.gen_range(1..=max_steps);
    Partition::new(random_partition_times(rng, horizon, n))
}

/// Oracle, marginal, mass and concentration checks for every `(i, j)`.
pub fn density_case(case: usize, p: &Arc<Partition>, q: &Arc<Partition>, points: usize) -> Result<DensityCase> {
    let mut out = DensityCase {
        case,
        steps: p.len(),
        steps_hat: q.len(),
        oracle_error: 0.0,
        marginal_error: 0.0,
        mass_slack: f64::INFINITY,
        concentration_slack: f64::INFINITY,
    };
    let ts = crate::bounds::sample_times(p.horizon(), points.max(2));
    let mut failure = None;
    forward_visit(p, q, p.len(), q.len(), |g| {
        let (i, j) = g.indices();
        match density_direct(p, q, i, j) {
            Ok(d) => {
                let fwd = g.cells().view((1, 1), (p.len(), q.len()));
                let e = (fwd - &d).abs().max();
                out.oracle_error = out.oracle_error.max(e);
            }
            Err(e) => failure = Some(e),
        }
        let (ti, tj) = (p.time(i), q.time(j));
        out.marginal_error = out
            .marginal_error
            .max(mass_profile(g, Axis::Row).indicator_error(ti))
            .max(mass_profile(g, Axis::Column).indicator_error(tj));
        let m = g.total_mass();
        out.mass_slack = out.mass_slack.min(m - ti.max(tj)).min(ti + tj - m);
        for &t in &ts {
            let slack = concentration_bound(p, q, i, j, t) - concentration_profile(g, t);
            out.concentration_slack = out.concentration_slack.min(slack);
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn run_density(cfg: &Config, seed: u64, jobs: Option<usize>) -> Result<(DensityReport, crate::density::DensityGrid)> {
    let dc = &cfg.density;
    if dc.max_steps > 128 || dc.heatmap_rows > 128 || dc.heatmap_cols > 128 {
        return Err(Error::Config("density grids are capped at 128 steps per axis".into()));
    }
    if dc.max_steps == 0 || dc.heatmap_rows == 0 || dc.heatmap_cols == 0 {
        return Err(Error::Config("density grids need at least one step".into()));
    }
    let cases = with_pool(jobs, || {
        (0..dc.cases)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_for(seed, c as u64);
                let horizon = rng.gen_range(0.5..2.0);
                let p = Arc::new(random_partition(&mut rng, horizon, dc.max_steps)?);
                let q = Arc::new(random_partition(&mut rng, horizon, dc.max_steps)?);
                density_case(c, &p, &q, dc.concentration_points)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rng = rng_for(seed, u64::MAX);
    let mut abc_min = f64::INFINITY;
    for _ in 0..dc.abc_triples {
        let draw = |rng: &mut ChaCha8Rng| 10.0 - rng.gen_range(0.0..10.0);
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        abc_min = abc_min.min(abc_slack(a, b, c)?);
    }
    let mut rng = rng_for(seed, u64::MAX - 1);
    let p = Arc::new(Partition::new(random_partition_times(&mut rng, 1.0, dc.heatmap_rows))?);
    let q = Arc::new(Partition::new(random_partition_times(&mut rng, 1.0, dc.heatmap_cols))?);
    let heat = density_forward(&p, &q, p.len(), q.len())?;
    let fold_max = |f: fn(&DensityCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    let fold_min = |f: fn(&DensityCase) -> f64| cases.iter().map(f).fold(f64::INFINITY, f64::min);
    let max_oracle_error = fold_max(|c| c.oracle_error);
    let max_marginal_error = fold_max(|c| c.marginal_error);
    let min_mass_slack = fold_min(|c| c.mass_slack);
    let min_concentration_slack = fold_min(|c| c.concentration_slack);
    let tol = dc.tolerance;
    let pass = max_oracle_error <= tol
        && max_marginal_error <= tol
        && min_mass_slack >= -tol
        && min_concentration_slack >= -tol
        && abc_min >= -1e-12;
    let report = DensityReport {
        command: "density",
        seed,
        tolerance: tol,
        cases,
        max_oracle_error,
        max_marginal_error,
        min_mass_slack,
        min_concentration_slack,
        abc_triples: dc.abc_triples,
        abc_min_slack: abc_min,
        heatmap_steps: (p.len(), q.len()),
        heatmap_total_mass: heat.total_mass(),
        pass,
    };
    Ok((report, heat))
}

/// Writes `report.json`, `density_cases.csv`, `density_heatmap.csv`,
/// `density_marginals.csv` and `density_kappa.csv`.
pub fn cmd_density(cfg: &Config, opts: &RunOptions) -> Result<DensityReport> {
    let (report, heat) = run_density(cfg, opts.seed, opts.jobs)?;
    create_out(&opts.out)?;
    write_json(&opts.out.join("report.json"), &report)?;
    let mut w = csv::Writer::from_path(opts.out.join("density_cases.csv"))?;
    w.write_record([
        "case",
        "steps",
        "steps_hat",
        "oracle_error",
        "marginal_error",
        "mass_slack",
        "concentration_slack",
    ])?;
    for c in &report.cases {
        w.write_record([
            c.case.to_string(),
            c.steps.to_string(),
            c.steps_hat.to_string(),
            fmt_f64(c.oracle_error),
            fmt_f64(c.marginal_error),
            fmt_f64(c.mass_slack),
            fmt_f64(c.concentration_slack),
        ])?;
    }
    w.flush()?;
    heat.write_csv(fs::File::create(opts.out.join("density_heatmap.csv"))?)?;
    let mut w = csv::Writer::from_path(opts.out.join("density_marginals.csv"))?;
    w.write_record(["axis", "start", "end", "mass"])?;
    for axis in [Axis::Row, Axis::Column] {
        let m = mass_profile(&heat, axis);
        let label = match axis {
            Axis::Row => "row",
            Axis::Column => "column",
        };
        for k in 0..m.values.len() {
            w.write_record([label.to_string(), fmt_f64(m.starts[k]), fmt_f64(m.ends[k]), fmt_f64(m.values[k])])?;
        }
    }
    w.flush()?;
    let (i, j) = heat.indices();
    let mut w = csv::Writer::from_path(opts.out.join("density_kappa.csv"))?;
    w.write_record(["t", "kappa", "bound"])?;
    for t in crate::bounds::sample_times(heat.rows().horizon(), cfg.density.concentration_points.max(2)) {
        w.write_record([
            fmt_f64(t),
            fmt_f64(concentration_profile(&heat, t)),
            fmt_f64(concentration_bound(heat.rows(), heat.cols(), i, j, t)),
        ])?;
    }
    w.flush()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// bv

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvReport {
    pub command: &'static str,
    pub seed: u64,
    pub shift_cases: usize,
    /// `max (lhs - rhs)` of the shift estimate.
    pub shift_max_excess: f64,
    pub shift_equality_case: (f64, f64),
    pub property_cases: usize,
    pub ess_var_le_pointwise: bool,
    pub ess_var_point_invariant: bool,
    pub triangle_max_excess: f64,
    pub norm_equivalence_holds: bool,
    pub jordan_monotone: bool,
    pub jordan_max_reconstruction_error: f64,
    pub c1_samples: usize,
    pub c1_variation: f64,
    pub c1_integral: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub case: usize,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
}

fn random_bv(rng: &mut ChaCha8Rng, dim: usize) -> Result<BVStep> {
    let a = rng.gen_range(-1.0..1.0);
    let b = a + rng.gen_range(0.2..3.0);
    let n = rng.gen_range(1..=8);
    let mut inner: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(a..b)).filter(|t| *t > a).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    let mut breaks = vec![a];
    breaks.extend(inner);
    breaks.push(b);
    let values = (0..breaks.len() - 1).map(|_| state(&random_vec(rng, dim, 2.0))).collect();
    let end = state(&random_vec(rng, dim, 2.0));
    BVStep::new(breaks, values, end)
}

fn with_random_points(rng: &mut ChaCha8Rng, f: BVStep) -> Result<BVStep> {
    let mut f = f;
    for _ in 0..rng.gen_range(0..3) {
        let t = rng.gen_range(f.a()..f.b());
        let v = state(&random_vec(rng, f.dim(), 3.0));
        f = f.with_point(t, v)?;
    }
    Ok(f)
}

pub fn run_bv(cfg: &Config, seed: u64, jobs: Option<usize>) -> Result<(BvReport, Vec<ShiftRow>)> {
    let bc = &cfg.bv;
    let shifts = with_pool(jobs, || {
        (0..bc.shift_cases)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_for(seed, c as u64);
                let dim = rng.gen_range(1..=3);
                let norm = NormKind::ALL[c % 3];
                let space = NormedSpace::new(dim, norm)?;
                let f = random_bv(&mut rng, dim)?;
                let f = with_random_points(&mut rng, f)?;
                let h = rng.gen_range(0.0..1.0) * (f.b() - f.a());
                let h = if h > 0.0 { h } else { 0.5 * (f.b() - f.a()) };
                let r = shift_estimate_check(&f, h, &space)?;
                Ok(ShiftRow {
                    case: c,
                    h,
                    lhs: r.lhs,
                    rhs: r.rhs,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let scalar = NormedSpace::new(1, NormKind::L2)?;
    let indicator = BVStep::scalar(vec![0.0, 0.5, 1.0], &[0.0, 1.0], 1.0)?;
    let eq = shift_estimate_check(&indicator, 0.25, &scalar)?;

    let mut rng = rng_for(seed, u64::MAX);
    let mut ess_le = true;
    let mut invariant = true;
    let mut triangle: f64 = f64::NEG_INFINITY;
    let mut sandwich = true;
    let mut monotone = true;
    let mut recon: f64 = 0.0;
    for c in 0..bc.property_cases {
        let dim = rng.gen_range(1..=3);
        let space = NormedSpace::new(dim, NormKind::ALL[c % 3])?;
        let f = random_bv(&mut rng, dim)?;
        let fp = with_random_points(&mut rng, f.clone())?;
        ess_le &= fp.ess_var(&space) <= fp.pointwise_var(&space) + 1e-12;
        invariant &= fp.ess_var(&space) == f.ess_var(&space);
        let mut g = random_bv(&mut rng, dim)?;
        if g.a() != f.a() || g.b() != f.b() {
            let mut breaks: Vec<f64> = g
                .breaks()
                .iter()
                .map(|t| f.a() + (t - g.a()) / (g.b() - g.a()) * (f.b() - f.a()))
                .collect();
            breaks[0] = f.a();
            *breaks.last_mut().expect("two breaks") = f.b();
            g = BVStep::new(breaks, g.values().to_vec(), g.end_value().clone())?;
        }
        let sum = fp.add(&g)?;
        triangle = triangle.max(sum.pointwise_var(&space) - fp.pointwise_var(&space) - g.pointwise_var(&space));
        sandwich &= norm_equivalence_check(&fp, &space).holds(1e-12);
        let real = random_bv(&mut rng, 1)?;
        let real = with_random_points(&mut rng, real)?;
        let j = jordan_decompose(RealBV::Step(&real))?;
        monotone &= j.monotone();
        recon = recon.max(j.reconstruction_error());
        let amp = rng.gen_range(0.5..2.0);
        let freq = rng.gen_range(1.0..4.0);
        let smooth = SampledC1::from_fn(
            0.0,
            1.0,
            257,
            |t| amp * (freq * std::f64::consts::TAU * t).sin(),
            |t| amp * freq * std::f64::consts::TAU * (freq * std::f64::consts::TAU * t).cos(),
        )?;
        let j = jordan_decompose(RealBV::Sampled(&smooth))?;
        monotone &= j.monotone();
        recon = recon.max(j.reconstruction_error());
    }
    let tau = std::f64::consts::TAU;
    let sine = SampledC1::from_fn(0.0, 1.0, bc.c1_samples.max(2), |t| (tau * t).sin(), |t| tau * (tau * t).cos())?;
    let (c1_variation, c1_integral) = c1_var_check(&sine);
    let shift_max_excess = shifts.iter().map(|r| r.lhs - r.rhs).fold(f64::NEG_INFINITY, f64::max);
    let pass = shift_max_excess <= 1e-12
        && eq.lhs == eq.rhs
        && ess_le
        && invariant
        && triangle <= 1e-12
        && sandwich
        && monotone
        && recon <= 1e-12
        && (c1_variation - c1_integral).abs() <= 1e-4
        && (c1_variation - 4.0).abs() <= 1e-4;
    let report = BvReport {
        command: "bv",
        seed,
        shift_cases: shifts.len(),
        shift_max_excess,
        shift_equality_case: (eq.lhs, eq.rhs),
        property_cases: bc.property_cases,
        ess_var_le_pointwise: ess_le,
        ess_var_point_invariant: invariant,
        triangle_max_excess: triangle,
        norm_equivalence_holds: sandwich,
        jordan_monotone: monotone,
        jordan_max_reconstruction_error: recon,
        c1_samples: sine.len(),
        c1_variation,
        c1_integral,
        pass,
    };
    Ok((report, shifts))
}

/// Writes `report.json` and `bv_shift.csv`.
pub fn cmd_bv(cfg: &Config, opts: &RunOptions) -> Result<BvReport> {
    let (report, shifts) = run_bv(cfg, opts.seed, opts.jobs)?;
    create_out(&opts.out)?;
    write_json(&opts.out.join("report.json"), &report)?;
    let mut w = csv::Writer::from_path(opts.out.join("bv_shift.csv"))?;
    w.write_record(["case", "h", "lhs", "rhs"])?;
    for r in &shifts {
        w.write_record([r.case.to_string(), fmt_f64(r.h), fmt_f64(r.lhs), fmt_f64(r.rhs)])?;
    }
    w.flush()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = Config::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(Config::from_toml_str("").unwrap(), cfg);
        assert!(Config::from_toml_str("[verify]\nbogus = 1").is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = VerifyConfig::default();
        let a = generate_instance(&cfg, 7, 3).unwrap();
        assert_eq!(a, generate_instance(&cfg, 7, 3).unwrap());
        assert_ne!(a, generate_instance(&cfg, 8, 3).unwrap());
        assert!(a.pairs.len() >= 3 && a.g.len() >= 2);
    }

    #[test]
    fn generated_instances_respect_the_clamp() {
        let cfg = VerifyConfig::default();
        for id in 0..30 {
            let spec = generate_instance(&cfg, 1, id).unwrap();
            let p = Partition::new(spec.partition.clone()).unwrap();
            let q = Partition::new(spec.partition_hat.clone()).unwrap();
            assert!(p.mesh().max(q.mesh()) * spec.operator.omega() <= 0.9 + 1e-12);
        }
    }

    #[test]
    fn instance_spec_round_trips_through_toml() {
        let spec = generate_instance(&VerifyConfig::default(), 3, 5).unwrap();
        let cfg = Config {
            verify: VerifyConfig {
                instance: vec![spec],
                ..VerifyConfig::default()
            },
            ..Config::default()
        };
        let back = Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.sqrt()).collect();
        assert!((loglog_slope(&x, &y) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_cell_density_case() {
        let p = Arc::new(Partition::uniform(2.0, 1).unwrap());
        let c = density_case(0, &p, &p, 10).unwrap();
        assert!(c.oracle_error == 0.0 && c.marginal_error <= 1e-15);
        let g = density_forward(&p, &p, 1, 1).unwrap();
        assert_eq!(g.get(0, 0), 0.5);
    }
}
