//! Bound evaluators. Each compares the exact difference `a_{i,j}` (or its
//! continuous-time analogue) with an explicit right-hand side and records the
//! slack `rhs - lhs`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::density::{cell_pair_integrals, recursion_weights, sqrt_term, weighted_integrals_all};
use crate::error::{Error, Result};
use crate::euler::{difference_matrix, solve_scheme, Discretization, EulerSolution};
use crate::grid::{fmt_f64, ExtendedStep, Partition, PiecewiseAffine, StepFunction};
use crate::operators::{generalized_norm, AccretiveOperator, GeneralizedNormOptions, GraphPair, Shifted};
use crate::space::{NormedSpace, State};

/// Default tolerance on slacks.
pub const SLACK_TOL: f64 = 1e-9;

/// `φ(x) = -log(1 - x)/x`, `φ(0) = 1`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x < 1.0) {
        return Err(Error::Domain(format!("phi needs x < 1, got {x}")));
    }
    if x.abs() > 1e-4 {
        Ok(-(-x).ln_1p() / x)
    } else {
        Ok(1.0 + x * (0.5 + x * (1.0 / 3.0 + x * (0.25 + x * 0.2))))
    }
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// One bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub t_hat: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl BoundRecord {
    pub fn new(i: usize, j: usize, t: f64, t_hat: f64, lhs: f64, rhs: f64) -> Self {
        BoundRecord {
            i,
            j,
            t,
            t_hat,
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }
}

/// Records of one evaluator plus the location of the smallest slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub records: Vec<BoundRecord>,
    pub min_slack: f64,
    pub argmin: Option<usize>,
}

/// Serializable digest of a [`BoundReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub name: String,
    pub count: usize,
    pub min_slack: f64,
    pub argmin_i: Option<usize>,
    pub argmin_j: Option<usize>,
    pub max_lhs: f64,
    pub max_rhs: f64,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, records: Vec<BoundRecord>) -> Self {
        let mut min_slack = f64::INFINITY;
        let mut argmin = None;
        for (k, r) in records.iter().enumerate() {
            if r.slack < min_slack || r.slack.is_nan() {
                min_slack = r.slack;
                argmin = Some(k);
                if r.slack.is_nan() {
                    break;
                }
            }
        }
        BoundReport {
            name: name.into(),
            records,
            min_slack,
            argmin,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.min_slack >= -tol
    }

    pub fn worst(&self) -> Option<&BoundRecord> {
        self.argmin.map(|k| &self.records[k])
    }

    pub fn summary(&self) -> BoundSummary {
        let w = self.worst();
        BoundSummary {
            name: self.name.clone(),
            count: self.records.len(),
            min_slack: self.min_slack,
            argmin_i: w.map(|r| r.i),
            argmin_j: w.map(|r| r.j),
            max_lhs: self.records.iter().map(|r| r.lhs).fold(0.0, f64::max),
            max_rhs: self.records.iter().map(|r| r.rhs).fold(0.0, f64::max),
        }
    }

    /// Rows `i,j,t,t_hat,lhs,rhs,slack`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["i", "j", "t", "t_hat", "lhs", "rhs", "slack"])?;
        for r in &self.records {
            wtr.write_record([
                r.i.to_string(),
                r.j.to_string(),
                fmt_f64(r.t),
                fmt_f64(r.t_hat),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.slack),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Two Euler solutions on the same horizon, with `a_{i,j}` precomputed.
#[derive(Debug, Clone)]
pub struct Comparison<'a> {
    pub sol: &'a EulerSolution,
    pub hat: &'a EulerSolution,
    pub omega: f64,
    pub space: &'a NormedSpace,
    pub a: DMatrix<f64>,
}

impl<'a> Comparison<'a> {
    pub fn new(sol: &'a EulerSolution, hat: &'a EulerSolution, omega: f64, space: &'a NormedSpace) -> Result<Self> {
        let (t, th) = (sol.partition().horizon(), hat.partition().horizon());
        if (t - th).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::HorizonMismatch(t, th));
        }
        space.check(sol.node(0))?;
        space.check(hat.node(0))?;
        Ok(Comparison {
            sol,
            hat,
            omega,
            space,
            a: difference_matrix(sol, hat, space),
        })
    }

    fn p(&self) -> &Partition {
        self.sol.partition()
    }

    fn q(&self) -> &Partition {
        self.hat.partition()
    }

    pub fn horizon(&self) -> f64 {
        self.p().horizon()
    }

    /// `|π_θ| ∨ |π_θ̂|`.
    pub fn max_mesh(&self) -> f64 {
        self.p().mesh().max(self.q().mesh())
    }

    fn require(&self, limit: f64, strict: bool) -> Result<()> {
        let x = self.max_mesh() * self.omega;
        if (strict && x >= limit) || (!strict && x > limit) {
            return Err(Error::StepSizeCondition {
                step: self.max_mesh(),
                omega: self.omega,
                limit,
            });
        }
        Ok(())
    }

    /// `exp(φ((|π_θ| ∨ |π_θ̂|)ω) · s · ω⁺)`.
    fn growth(&self, s: f64) -> Result<f64> {
        Ok((phi(self.max_mesh() * self.omega)? * s * pos(self.omega)).exp())
    }

    fn check_pair(&self, pair: &GraphPair) -> Result<()> {
        self.space.check(&pair.u)?;
        self.space.check(&pair.v)
    }

    fn initial_terms(&self, pair: &GraphPair) -> f64 {
        self.space.dist(self.sol.node(0), &pair.u) + self.space.dist(self.hat.node(0), &pair.u)
    }
}

/// Slack of the one-step inequality at `(i, j)`, `i < N`, `j < N̂`.
pub fn iterative_step_check(cmp: &Comparison, i: usize, j: usize) -> Result<f64> {
    let (p, q) = (cmp.p(), cmp.q());
    if i >= p.len() || j >= q.len() {
        return Err(Error::IndexOutOfRange(format!("({i}, {j})")));
    }
    let (h, hh) = (p.step(i), q.step(j));
    let [w1, w2, w3, _] = recursion_weights(h, hh);
    let m = h.min(hh);
    let a = &cmp.a;
    let lhs = (1.0 - m * cmp.omega) * a[(i + 1, j + 1)];
    let x = cmp.sol.node(i + 1) - cmp.hat.node(j + 1);
    let y = &cmp.sol.disc.forcing().values()[i] - &cmp.hat.disc.forcing().values()[j];
    let rhs = w1 * a[(i + 1, j)] + w2 * a[(i, j + 1)] + w3 * a[(i, j)] + m * cmp.space.bracket_unchecked(&x, &y);
    Ok(rhs - lhs)
}

/// [`iterative_step_check`] over every `(i, j)`.
pub fn iterative_step_report(cmp: &Comparison) -> Result<BoundReport> {
    let (p, q) = (cmp.p(), cmp.q());
    let mut records = Vec::with_capacity(p.len() * q.len());
    for i in 0..p.len() {
        for j in 0..q.len() {
            let slack = iterative_step_check(cmp, i, j)?;
            let lhs = (1.0 - p.step(i).min(q.step(j)) * cmp.omega) * cmp.a[(i + 1, j + 1)];
            records.push(BoundRecord::new(i + 1, j + 1, p.time(i + 1), q.time(j + 1), lhs, lhs + slack));
        }
    }
    Ok(BoundReport::new("iterative_step", records))
}

/// Right-hand sides of the comparison with the constant solution `u` of
/// `u' + Au ∋ v`, for every node of `sol`.
pub fn base_case_rhs(sol: &EulerSolution, omega: f64, pair: &GraphPair, space: &NormedSpace) -> Result<Vec<f64>> {
    let p = sol.partition();
    if p.mesh() * omega >= 1.0 {
        return Err(Error::StepSizeCondition {
            step: p.mesh(),
            omega,
            limit: 1.0,
        });
    }
    let c = phi(p.mesh() * omega)? * omega;
    let f = sol.disc.forcing().values();
    let beta: Vec<f64> = (0..p.len())
        .map(|k| space.bracket_unchecked(&(sol.node(k + 1) - &pair.u), &(&f[k] - &pair.v)))
        .collect();
    let d0 = space.dist(sol.node(0), &pair.u);
    Ok((0..=p.len())
        .map(|i| {
            let ti = p.time(i);
            let integral: f64 = (0..i)
                .map(|k| p.step(k) * (c * (ti - p.time(k))).exp() * beta[k])
                .sum();
            (c * ti).exp() * d0 + integral
        })
        .collect())
}

/// `‖u_θ(t_i) - u‖` against the induction-base estimate, for every `i`.
pub fn base_case_bound(sol: &EulerSolution, omega: f64, pair: &GraphPair, space: &NormedSpace) -> Result<BoundReport> {
    let rhs = base_case_rhs(sol, omega, pair, space)?;
    let p = sol.partition();
    let records = rhs
        .iter()
        .enumerate()
        .map(|(i, r)| BoundRecord::new(i, 0, p.time(i), 0.0, space.dist(sol.node(i), &pair.u), *r))
        .collect();
    Ok(BoundReport::new("base_case", records))
}

/// Estimate for two schemes on one uniform grid, with exponentials in `ω`
/// (not `ω⁺`); for `ω < 0` this is the sharper form.
pub fn equidistant_bound(cmp: &Comparison, pair: &GraphPair) -> Result<BoundReport> {
    cmp.check_pair(pair)?;
    let (p, q) = (cmp.p(), cmp.q());
    if p.times() != q.times() {
        return Err(Error::GridMismatch("both schemes must share one partition".into()));
    }
    let n = p.len();
    let h = p.horizon() / n as f64;
    if p.steps().iter().any(|s| (s - h).abs() > 1e-12 * h.max(1.0)) {
        return Err(Error::GridMismatch("partition is not uniform".into()));
    }
    if !((n as f64) > p.horizon() * cmp.omega) {
        return Err(Error::StepSizeCondition {
            step: h,
            omega: cmp.omega,
            limit: 1.0,
        });
    }
    let c = phi(p.mesh() * cmp.omega)? * cmp.omega;
    let space = cmp.space;
    let (u, uh) = (cmp.sol.nodes(), cmp.hat.nodes());
    let (f, fh) = (cmp.sol.disc.forcing().values(), cmp.hat.disc.forcing().values());
    let beta: Vec<f64> = (0..n)
        .map(|k| space.bracket_unchecked(&(&u[k + 1] - &pair.u), &(&f[k] - &pair.v)))
        .collect();
    let beta_h: Vec<f64> = (0..n)
        .map(|k| space.bracket_unchecked(&(&uh[k + 1] - &pair.u), &(&fh[k] - &pair.v)))
        .collect();
    let d0 = space.dist(&u[0], &pair.u);
    let dh0 = space.dist(&uh[0], &pair.u);
    let mut records = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            let (ti, tj) = (p.time(i), q.time(j));
            let mut rhs = (c * ti).exp() * d0 + (c * tj).exp() * dh0;
            // (t_i - t̂_j)⁺ = t_{i-j}
            for k in 0..i.saturating_sub(j) {
                rhs += h * (c * (ti - p.time(k))).exp() * beta[k];
            }
            for k in 0..j.saturating_sub(i) {
                rhs += h * (c * (tj - q.time(k))).exp() * beta_h[k];
            }
            let m = i.min(j);
            let (s, sh) = (i - m, j - m);
            let tm = p.time(m);
            for k in 0..m {
                let x = &u[k + 1 + s] - &uh[k + 1 + sh];
                let y = &f[k + s] - &fh[k + sh];
                rhs += h * (c * (tm - p.time(k))).exp() * space.bracket_unchecked(&x, &y);
            }
            records.push(BoundRecord::new(i, j, ti, tj, cmp.a[(i, j)], rhs));
        }
    }
    Ok(BoundReport::new("equidistant", records))
}

/// Estimate through the density double integral, with `g̃ = v` on `[-1, 0)`.
pub fn implicit_bound(cmp: &Comparison, pair: &GraphPair, gtilde: &ExtendedStep) -> Result<BoundReport> {
    cmp.check_pair(pair)?;
    cmp.require(1.0, true)?;
    if gtilde.left != pair.v {
        return Err(Error::Domain("the extension of g on [-1, 0) must equal v".into()));
    }
    let (p, q) = (cmp.p(), cmp.q());
    let space = cmp.space;
    let ints = cell_pair_integrals(p, q, gtilde, space)?;
    let w = weighted_integrals_all(p, q, &ints);
    let lf = cmp.sol.disc.forcing().l1_distance_profile(&gtilde.body, space)?;
    let lfh = cmp.hat.disc.forcing().l1_distance_profile(&gtilde.body, space)?;
    let init = cmp.initial_terms(pair);
    let mut records = Vec::with_capacity((p.len() + 1) * (q.len() + 1));
    for i in 0..=p.len() {
        for j in 0..=q.len() {
            let (ti, tj) = (p.time(i), q.time(j));
            let inner = init + lf.integral_to(ti) + lfh.integral_to(tj) + w[(i, j)];
            records.push(BoundRecord::new(i, j, ti, tj, cmp.a[(i, j)], cmp.growth(ti + tj)? * inner));
        }
    }
    Ok(BoundReport::new("implicit", records))
}

/// `essVar(g) + ‖g(0+) - v‖`.
fn extended_variation(g: &StepFunction, v: &State, space: &NormedSpace) -> f64 {
    g.jump_variation(space) + space.dist(g.first(), v)
}

/// Right-hand sides of the explicit estimate for all `(i, j)`.
pub fn main_rhs(cmp: &Comparison, pair: &GraphPair, g: &StepFunction) -> Result<DMatrix<f64>> {
    cmp.check_pair(pair)?;
    cmp.require(1.0, true)?;
    let (p, q) = (cmp.p(), cmp.q());
    let space = cmp.space;
    let lf = cmp.sol.disc.forcing().l1_distance_profile(g, space)?;
    let lfh = cmp.hat.disc.forcing().l1_distance_profile(g, space)?;
    let var = extended_variation(g, &pair.v, space);
    let init = cmp.initial_terms(pair);
    let mut out = DMatrix::zeros(p.len() + 1, q.len() + 1);
    for i in 0..=p.len() {
        for j in 0..=q.len() {
            let (ti, tj) = (p.time(i), q.time(j));
            let inner = init + lf.integral_to(ti) + lfh.integral_to(tj) + sqrt_term(p, q, i, j) * var;
            out[(i, j)] = cmp.growth(ti + tj)? * inner;
        }
    }
    Ok(out)
}

fn matrix_report(name: &str, cmp: &Comparison, rhs: &DMatrix<f64>) -> BoundReport {
    let (p, q) = (cmp.p(), cmp.q());
    let mut records = Vec::with_capacity(rhs.len());
    for i in 0..rhs.nrows() {
        for j in 0..rhs.ncols() {
            records.push(BoundRecord::new(i, j, p.time(i), q.time(j), cmp.a[(i, j)], rhs[(i, j)]));
        }
    }
    BoundReport::new(name, records)
}

/// The explicit estimate with `√((t_i - t̂_j)² + |π_θ|t_i + |π_θ̂|t̂_j)`.
pub fn main_bound(cmp: &Comparison, pair: &GraphPair, g: &StepFunction) -> Result<BoundReport> {
    let rhs = main_rhs(cmp, pair, g)?;
    Ok(matrix_report("main", cmp, &rhs))
}

fn zero_forcing(horizon: f64, dim: usize) -> Result<StepFunction> {
    Ok(StepFunction::constant(Partition::uniform(horizon, 1)?, State::zeros(dim)))
}

/// Outcome of the classical estimate with `exp(2(t_i + t̂_j)ω⁺)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KobayashiReport {
    pub report: BoundReport,
    /// Whether the classical right-hand side dominates the explicit one with `g = 0` everywhere.
    pub dominates: bool,
    /// `min (rhs_classical - rhs_explicit)`.
    pub min_margin: f64,
}

pub fn kobayashi_bound(cmp: &Comparison, pair: &GraphPair) -> Result<KobayashiReport> {
    cmp.check_pair(pair)?;
    cmp.require(0.5, false)?;
    let (p, q) = (cmp.p(), cmp.q());
    let space = cmp.space;
    let t = cmp.horizon();
    let ff = cmp.sol.disc.forcing().l1_norm(space, t) + cmp.hat.disc.forcing().l1_norm(space, t);
    let init = cmp.initial_terms(pair);
    let nv = space.norm_unchecked(&pair.v);
    let mut rhs = DMatrix::zeros(p.len() + 1, q.len() + 1);
    for i in 0..=p.len() {
        for j in 0..=q.len() {
            let (ti, tj) = (p.time(i), q.time(j));
            let e = (2.0 * (ti + tj) * pos(cmp.omega)).exp();
            rhs[(i, j)] = e * (init + ff + sqrt_term(p, q, i, j) * nv);
        }
    }
    let reference = main_rhs(cmp, pair, &zero_forcing(t, space.dim)?)?;
    let min_margin = (&rhs - &reference).iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = reference.iter().cloned().fold(1.0, f64::max);
    Ok(KobayashiReport {
        report: matrix_report("kobayashi", cmp, &rhs),
        dominates: min_margin >= -1e-12 * scale,
        min_margin,
    })
}

/// `n` equally spaced points of `[0, T]` with exact end points.
pub fn sample_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k + 1 == n {
                horizon
            } else {
                horizon * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Off-grid estimate `‖u_θ(t) - u_θ̂(t̂)‖` on an `n × n` grid of `(t, t̂)`.
pub fn continuous_bound(cmp: &Comparison, pair: &GraphPair, g: &StepFunction, n: usize) -> Result<BoundReport> {
    cmp.check_pair(pair)?;
    cmp.require(1.0, true)?;
    if n < 2 {
        return Err(Error::Domain("need at least two sample times".into()));
    }
    let (p, q) = (cmp.p(), cmp.q());
    let space = cmp.space;
    let lf = cmp.sol.disc.forcing().l1_distance_profile(g, space)?;
    let lfh = cmp.hat.disc.forcing().l1_distance_profile(g, space)?;
    let var = extended_variation(g, &pair.v, space);
    let init = cmp.initial_terms(pair);
    let (mp, mq) = (p.mesh(), q.mesh());
    let times = sample_times(cmp.horizon(), n);
    let us: Vec<State> = times.iter().map(|&t| cmp.sol.trajectory.eval(t)).collect();
    let uhs: Vec<State> = times.iter().map(|&t| cmp.hat.trajectory.eval(t)).collect();
    let mut records = Vec::with_capacity(n * n);
    for (a, &t) in times.iter().enumerate() {
        for (b, &th) in times.iter().enumerate() {
            let (ct, cth) = (p.ceiling_at(t), q.ceiling_at(th));
            let root = (((t - th).abs() + mp + mq).powi(2) + mp * t + mq * th).sqrt();
            let inner = init + lf.integral_to(ct) + lfh.integral_to(cth) + root * var;
            let rhs = cmp.growth(ct + cth)? * inner;
            records.push(BoundRecord::new(a, b, t, th, space.dist(&us[a], &uhs[b]), rhs));
        }
    }
    Ok(BoundReport::new("continuous", records))
}

/// Right-hand side of the sup-norm distance estimate.
pub fn distance_rhs(
    sol: &EulerSolution,
    hat: &EulerSolution,
    omega: f64,
    pair: &GraphPair,
    g: &StepFunction,
    space: &NormedSpace,
) -> Result<f64> {
    let cmp = Comparison::new(sol, hat, omega, space)?;
    distance_rhs_of(&cmp, pair, g)
}

fn distance_rhs_of(cmp: &Comparison, pair: &GraphPair, g: &StepFunction) -> Result<f64> {
    cmp.check_pair(pair)?;
    cmp.require(1.0, true)?;
    let space = cmp.space;
    let t = cmp.horizon();
    let (mp, mq) = (cmp.p().mesh(), cmp.q().mesh());
    let l1 = cmp.sol.disc.forcing().l1_distance(g, space, t)? + cmp.hat.disc.forcing().l1_distance(g, space, t)?;
    let root = distance_sqrt_term(mp, mq, t);
    let var = extended_variation(g, &pair.v, space);
    Ok(cmp.growth(2.0 * t)? * (cmp.initial_terms(pair) + l1 + root * var))
}

/// `√((|π_θ| + |π_θ̂|)² + |π_θ|T + |π_θ̂|T)`.
pub fn distance_sqrt_term(mesh: f64, mesh_hat: f64, horizon: f64) -> f64 {
    ((mesh + mesh_hat).powi(2) + (mesh + mesh_hat) * horizon).sqrt()
}

/// `‖u_θ - u_θ̂‖_C` (exact, attained at a node of the common refinement) against its estimate.
pub fn distance_bound(cmp: &Comparison, pair: &GraphPair, g: &StepFunction) -> Result<BoundReport> {
    let rhs = distance_rhs_of(cmp, pair, g)?;
    let lhs = cmp.sol.trajectory.sup_distance(&cmp.hat.trajectory, cmp.space)?;
    let t = cmp.horizon();
    Ok(BoundReport::new(
        "distance",
        vec![BoundRecord::new(cmp.p().len(), cmp.q().len(), t, t, lhs, rhs)],
    ))
}

/// A single estimate evaluated on an approximate Euler solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllowanceCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Discretization allowance added to the right-hand side.
    pub allowance: f64,
    /// Quadrature error estimate, zero when the right-hand side is exact.
    pub quadrature_error: f64,
    /// `rhs + allowance + quadrature_error - lhs`.
    pub slack: f64,
}

impl AllowanceCheck {
    fn new(lhs: f64, rhs: f64, allowance: f64, quadrature_error: f64) -> Self {
        AllowanceCheck {
            lhs,
            rhs,
            allowance,
            quadrature_error,
            slack: rhs + allowance + quadrature_error - lhs,
        }
    }
}

/// `∫_a^b e^{τω} dτ`.
fn exp_integral(a: f64, b: f64, omega: f64) -> f64 {
    if omega == 0.0 {
        b - a
    } else {
        (a * omega).exp() * ((b - a) * omega).exp_m1() / omega
    }
}

/// `∫_0^{t∨t̂} e^{τω} ‖f_v̂(t - τ) - f_v̂(t̂ - τ)‖ dτ`, exact for step `f`,
/// where `f_v̂ = v̂` on negative times.
pub fn shifted_forcing_integral(
    f: &StepFunction,
    v_hat: &State,
    t: f64,
    t_hat: f64,
    omega: f64,
    space: &NormedSpace,
) -> f64 {
    let top = t.max(t_hat);
    if top <= 0.0 {
        return 0.0;
    }
    let mut cuts = vec![0.0, top];
    for &s in f.partition().times() {
        for base in [t, t_hat] {
            let tau = base - s;
            if tau > 0.0 && tau < top {
                cuts.push(tau);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let eval = |s: f64| if s < 0.0 { v_hat } else { f.eval(s) };
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let d = space.dist(eval(t - mid), eval(t_hat - mid));
            if d == 0.0 {
                0.0
            } else {
                d * exp_integral(w[0], w[1], omega)
            }
        })
        .sum()
}

/// Modulus-of-continuity estimate for the Euler solution, checked on a
/// fine approximation `u` with the given discretization allowance.
#[allow(clippy::too_many_arguments)]
pub fn wellposedness_modulus(
    u: &PiecewiseAffine,
    f: &StepFunction,
    pair: &GraphPair,
    omega: f64,
    t: f64,
    t_hat: f64,
    allowance: f64,
    space: &NormedSpace,
) -> Result<AllowanceCheck> {
    let horizon = u.partition().horizon();
    for s in [t, t_hat] {
        if !(0.0..=horizon).contains(&s) {
            return Err(Error::Domain(format!("time {s} outside [0, {horizon}]")));
        }
    }
    let lhs = space.dist(&u.eval(t), &u.eval(t_hat));
    let init = ((t * omega).exp() + (t_hat * omega).exp()) * space.dist(u.node(0), &pair.u);
    let rhs = init + shifted_forcing_integral(f, &pair.v, t, t_hat, omega, space);
    Ok(AllowanceCheck::new(lhs, rhs, allowance, 0.0))
}

/// Stability estimate `‖u(t) - û(t)‖ ≤ e^{tω}‖u⁰ - û⁰‖ + ∫_0^t e^{(t-s)ω}[u(s) - û(s), f(s) - f̂(s)] ds`.
///
/// The integral is a midpoint rule with `subdivisions` points per piece of
/// the common refinement; the reported quadrature error is the change when
/// the rule is doubled.
#[allow(clippy::too_many_arguments)]
pub fn wellposedness_stability(
    u: &PiecewiseAffine,
    u_hat: &PiecewiseAffine,
    f: &StepFunction,
    f_hat: &StepFunction,
    omega: f64,
    t: f64,
    allowance: f64,
    subdivisions: usize,
    space: &NormedSpace,
) -> Result<AllowanceCheck> {
    let horizon = u.partition().horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    let mut cuts: Vec<f64> = [u.partition(), u_hat.partition(), f.partition(), f_hat.partition()]
        .iter()
        .flat_map(|p| p.times().iter().copied())
        .filter(|&s| s < t)
        .collect();
    cuts.push(t);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let integrate = |m: usize| -> f64 {
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let y = f.eval(0.5 * (a + b)) - f_hat.eval(0.5 * (a + b));
            let dx = (b - a) / m as f64;
            for k in 0..m {
                let s = a + (k as f64 + 0.5) * dx;
                let x = u.eval(s) - u_hat.eval(s);
                acc += dx * ((t - s) * omega).exp() * space.bracket_unchecked(&x, &y);
            }
        }
        acc
    };
    let m = subdivisions.max(1);
    let coarse = integrate(m);
    let fine = integrate(2 * m);
    let lhs = space.dist(&u.eval(t), &u_hat.eval(t));
    let rhs = (t * omega).exp() * space.dist(u.node(0), u_hat.node(0)) + fine;
    Ok(AllowanceCheck::new(lhs, rhs, allowance, (fine - coarse).abs()))
}

/// Measured Lipschitz constant of a dyadic Euler approximation against the
/// certificate `e^{Tω⁺}(|u⁰|_{A - f(0+)} + essVar(f))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub certificate: f64,
    pub measured: f64,
    /// Growth of the scheme constant over the continuous one at this mesh.
    pub allowance: f64,
    pub generalized_norm: f64,
    pub generalized_norm_exact: bool,
    pub ess_var: f64,
    pub level: u32,
    pub pass: bool,
}

pub fn lipschitz_certificate(
    op: Arc<dyn AccretiveOperator>,
    f: &StepFunction,
    u0: &State,
    level: u32,
    space: &NormedSpace,
) -> Result<LipschitzReport> {
    if op.value_set(u0).is_none() {
        return Err(Error::UnsupportedOperator);
    }
    let horizon = f.partition().horizon();
    let omega = op.omega();
    let wp = pos(omega);
    let shifted = Shifted::new(op.clone(), -f.first())?;
    let est = generalized_norm(&shifted, u0, space, &GeneralizedNormOptions::default())?;
    let gn = match est.exact {
        Some(x) => x,
        None => est.value + est.spread,
    };
    let ess_var = f.jump_variation(space);
    let certificate = (horizon * wp).exp() * (gn + ess_var);
    let p = Arc::new(Partition::uniform(horizon, 1usize << level)?);
    let h = p.mesh();
    let sol = solve_scheme(op.as_ref(), &Discretization::projected(p, f, u0.clone())?)?;
    let measured = sol.trajectory.max_slope(space);
    let allowance = certificate * (((phi(h * wp)? - 1.0) * horizon * wp).exp() - 1.0);
    let pass = measured <= certificate * (1.0 + 1e-6) + allowance;
    Ok(LipschitzReport {
        certificate,
        measured,
        allowance,
        generalized_norm: gn,
        generalized_norm_exact: est.exact.is_some(),
        ess_var,
        level,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::euler_solution;
    use crate::operators::{LinearOperator, SignGraph};
    use crate::space::NormKind;
    use approx::assert_abs_diff_eq;

    fn v1(x: f64) -> State {
        State::from_element(1, x)
    }

    fn s1() -> NormedSpace {
        NormedSpace::new(1, NormKind::L2).unwrap()
    }

    fn solve(op: &dyn AccretiveOperator, p: Partition, f: StepFunction, u0: f64) -> EulerSolution {
        let d = Discretization::projected(Arc::new(p), &f, v1(u0)).unwrap();
        solve_scheme(op, &d).unwrap()
    }

    fn zero(t: f64) -> StepFunction {
        StepFunction::constant(Partition::uniform(t, 1).unwrap(), v1(0.0))
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(phi(0.5).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(phi(-1.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(phi(1.0).is_err());
        for x in [1e-4f64, -1e-4] {
            let series = 1.0 + x * (0.5 + x * (1.0 / 3.0 + x * (0.25 + x * 0.2)));
            let log = -(-x).ln_1p() / x;
            assert!((series - log).abs() <= 1e-14);
        }
        let xs: Vec<f64> = (0..=180).map(|k| -0.9 + 0.01 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| phi(x).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        assert!(phi(0.5).unwrap() <= 2.0);
    }

    #[test]
    fn linear_example_main_and_distance() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let s = solve(&a, Partition::uniform(1.0, 2).unwrap(), zero(1.0), 1.0);
        let h = solve(&a, Partition::uniform(1.0, 4).unwrap(), zero(1.0), 1.0);
        let space = s1();
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        let pair = GraphPair::new(v1(0.0), v1(0.0));
        let rep = main_bound(&cmp, &pair, &zero(1.0)).unwrap();
        let r = rep.records.iter().find(|r| r.i == 2 && r.j == 4).unwrap();
        assert_abs_diff_eq!(r.rhs, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.lhs, 0.034844, epsilon = 1e-6);
        assert!(rep.passes(SLACK_TOL));
        let d = distance_bound(&cmp, &pair, &zero(1.0)).unwrap();
        assert_abs_diff_eq!(d.records[0].rhs, 2.0, epsilon = 1e-15);
        assert!(d.passes(SLACK_TOL));
    }

    #[test]
    fn base_case_examples() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let s = solve(&a, Partition::uniform(1.0, 2).unwrap(), zero(1.0), 1.0);
        let rep = base_case_bound(&s, 0.0, &GraphPair::new(v1(0.0), v1(0.0)), &s1()).unwrap();
        assert_eq!(rep.records[0].slack, 0.0);
        let last = &rep.records[2];
        assert_abs_diff_eq!(last.lhs, 4.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(last.rhs, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(last.slack, 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn iterative_step_examples() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let f = StepFunction::from_breaks(1.0, &[0.4], vec![v1(1.0), v1(-0.5)]).unwrap();
        let s = solve(&a, Partition::new(vec![0.0, 0.3, 0.35, 1.0]).unwrap(), f.clone(), 1.0);
        let h = solve(&a, Partition::uniform(1.0, 5).unwrap(), f, 0.2);
        let space = s1();
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        assert!(iterative_step_report(&cmp).unwrap().passes(1e-10));
        // equal steps: weights reduce to a_{i,j} + h·bracket
        let same = solve(&a, Partition::uniform(1.0, 5).unwrap(), zero(1.0), 0.7);
        let cmp = Comparison::new(&h, &same, 0.0, &space).unwrap();
        let x = h.node(2) - same.node(2);
        let y = &h.disc.forcing().values()[1] - &same.disc.forcing().values()[1];
        let expect = cmp.a[(1, 1)] + 0.2 * space.bracket(&x, &y).unwrap() - cmp.a[(2, 2)];
        assert_abs_diff_eq!(iterative_step_check(&cmp, 1, 1).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn equidistant_examples() {
        let a = LinearOperator::scalar(2.0, 0.0).unwrap();
        let p = Partition::uniform(1.0, 8).unwrap();
        let f = StepFunction::from_breaks(1.0, &[0.3], vec![v1(1.0), v1(-1.0)]).unwrap();
        let fs = StepFunction::from_breaks(1.0, &[0.55], vec![v1(0.5), v1(2.0)]).unwrap();
        let s = solve(&a, p.clone(), f.clone(), 1.0);
        let h = solve(&a, p.clone(), fs, -0.4);
        let space = s1();
        let pair = GraphPair::new(v1(0.5), v1(1.0));
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        let rep = equidistant_bound(&cmp, &pair).unwrap();
        assert!(rep.passes(1e-10));
        // j = 0 is the base case plus ‖û⁰ - u‖
        let base = base_case_rhs(&s, 0.0, &pair, &space).unwrap();
        for r in rep.records.iter().filter(|r| r.j == 0) {
            assert_abs_diff_eq!(r.rhs, base[r.i] + 0.9, epsilon = 1e-12);
        }
        let twin = solve(&a, p, f, 1.0);
        let cmp = Comparison::new(&s, &twin, 0.0, &space).unwrap();
        let rep = equidistant_bound(&cmp, &pair).unwrap();
        assert!(rep.records.iter().filter(|r| r.i == r.j).all(|r| r.lhs == 0.0));
        let other = solve(&a, Partition::uniform(1.0, 4).unwrap(), zero(1.0), 1.0);
        let cmp = Comparison::new(&s, &other, 0.0, &space).unwrap();
        assert!(matches!(equidistant_bound(&cmp, &pair), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn implicit_and_kobayashi_equilibrium() {
        let a = SignGraph::new(1);
        let space = s1();
        let f = StepFunction::constant(Partition::uniform(1.0, 1).unwrap(), v1(0.4));
        let s = solve(&a, Partition::uniform(1.0, 3).unwrap(), f.clone(), 0.0);
        let h = solve(&a, Partition::uniform(1.0, 5).unwrap(), f.clone(), 0.0);
        let pair = GraphPair::new(v1(0.0), v1(0.4));
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        let g = ExtendedStep::new(v1(0.4), f.clone()).unwrap();
        let rep = implicit_bound(&cmp, &pair, &g).unwrap();
        assert!(rep.records.iter().all(|r| r.lhs == 0.0 && r.rhs.abs() < 1e-15));
        let bad = ExtendedStep::new(v1(0.0), f).unwrap();
        assert!(implicit_bound(&cmp, &pair, &bad).is_err());
        let k = kobayashi_bound(&cmp, &GraphPair::new(v1(0.0), v1(0.0))).unwrap();
        assert!(k.report.passes(SLACK_TOL));
        assert!(k.dominates);
    }

    #[test]
    fn kobayashi_without_growth() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let space = s1();
        let f = StepFunction::from_breaks(1.0, &[0.5], vec![v1(1.0), v1(-2.0)]).unwrap();
        let s = solve(&a, Partition::uniform(1.0, 4).unwrap(), f.clone(), 1.0);
        let h = solve(&a, Partition::uniform(1.0, 3).unwrap(), f.clone(), 0.5);
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        let pair = GraphPair::new(v1(1.0), v1(1.0));
        let k = kobayashi_bound(&cmp, &pair).unwrap();
        let l1 = s.disc.forcing().l1_norm(&space, 1.0) + h.disc.forcing().l1_norm(&space, 1.0);
        let r = &k.report.records[0];
        assert_abs_diff_eq!(r.rhs, 0.5 + l1, epsilon = 1e-14);
        assert!(k.dominates);
    }

    #[test]
    fn continuous_at_origin_and_nodes() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let space = s1();
        let s = solve(&a, Partition::uniform(1.0, 7).unwrap(), zero(1.0), 1.0);
        let h = solve(&a, Partition::uniform(1.0, 5).unwrap(), zero(1.0), 0.8);
        let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
        let pair = GraphPair::new(v1(0.0), v1(0.0));
        let rep = continuous_bound(&cmp, &pair, &zero(1.0), 50).unwrap();
        assert_abs_diff_eq!(rep.records[0].lhs, 0.2, epsilon = 1e-15);
        assert!(rep.passes(SLACK_TOL));
        assert_eq!(rep.records.len(), 2500);
    }

    #[test]
    fn rhs_monotone_in_initial_distance() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let space = s1();
        let g = StepFunction::from_breaks(1.0, &[0.25], vec![v1(0.3), v1(0.0)]).unwrap();
        let h = solve(&a, Partition::uniform(1.0, 4).unwrap(), zero(1.0), 0.0);
        let mut prev: Option<DMatrix<f64>> = None;
        for u0 in [0.0, 0.5, 1.0, 2.0] {
            let s = solve(&a, Partition::uniform(1.0, 3).unwrap(), zero(1.0), u0);
            let cmp = Comparison::new(&s, &h, 0.0, &space).unwrap();
            let rhs = main_rhs(&cmp, &GraphPair::new(v1(0.0), v1(0.0)), &g).unwrap();
            if let Some(p) = &prev {
                assert!(rhs.iter().zip(p.iter()).all(|(x, y)| x >= y));
            }
            prev = Some(rhs);
        }
    }

    #[test]
    fn modulus_examples() {
        let a: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(1));
        let space = s1();
        let study = euler_solution(a.as_ref(), &zero(2.0), &v1(1.0), 4, 10, &space).unwrap();
        let u = &study.finest().trajectory;
        let pair = GraphPair::new(v1(0.0), v1(0.0));
        let c = wellposedness_modulus(u, &zero(2.0), &pair, 0.0, 0.0, 2.0, 0.0, &space).unwrap();
        assert_abs_diff_eq!(c.lhs, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.rhs, 2.0, epsilon = 1e-15);
        let c = wellposedness_modulus(u, &zero(2.0), &pair, 0.0, 0.7, 0.7, 0.0, &space).unwrap();
        assert_eq!(c.lhs, 0.0);
    }

    #[test]
    fn shifted_integral_exact() {
        let space = s1();
        let f = StepFunction::from_breaks(1.0, &[0.5], vec![v1(0.0), v1(1.0)]).unwrap();
        // t = 1, t̂ = 0.75: integrand ‖f(1-τ) - f_v̂(0.75-τ)‖ with v̂ = 0
        // τ ∈ [0,0.25): 1 vs 1 → 0; [0.25,0.5): 1 vs 0 → 1; [0.5,0.75): 0 vs 0; [0.75,1): 0 vs 0
        let got = shifted_forcing_integral(&f, &v1(0.0), 1.0, 0.75, 0.0, &space);
        assert_abs_diff_eq!(got, 0.25, epsilon = 1e-15);
        let got = shifted_forcing_integral(&f, &v1(0.0), 1.0, 0.75, 1.0, &space);
        assert_abs_diff_eq!(got, 0.5f64.exp() - 0.25f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn stability_linear() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let space = s1();
        let f = StepFunction::from_breaks(1.0, &[0.5], vec![v1(1.0), v1(0.0)]).unwrap();
        let u = euler_solution(&a, &f, &v1(1.0), 10, 10, &space).unwrap();
        let uh = euler_solution(&a, &f, &v1(0.25), 10, 10, &space).unwrap();
        for t in [0.0, 0.3, 1.0] {
            let c = wellposedness_stability(
                &u.finest().trajectory,
                &uh.finest().trajectory,
                &f,
                &f,
                0.0,
                t,
                0.0,
                2,
                &space,
            )
            .unwrap();
            assert_abs_diff_eq!(c.rhs, 0.75, epsilon = 1e-15);
            assert!(c.lhs <= 0.75 * (-t).exp() + 1e-3);
            assert!(c.slack >= 0.0);
        }
    }

    #[test]
    fn lipschitz_examples() {
        let space = s1();
        let sign: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(1));
        let r = lipschitz_certificate(sign.clone(), &zero(2.0), &v1(1.0), 8, &space).unwrap();
        assert_eq!(r.certificate, 1.0);
        assert_abs_diff_eq!(r.measured, 1.0, epsilon = 1e-12);
        assert!(r.pass);
        let half = StepFunction::constant(Partition::uniform(2.0, 1).unwrap(), v1(0.5));
        let r = lipschitz_certificate(sign, &half, &v1(0.0), 8, &space).unwrap();
        assert_eq!(r.certificate, 0.0);
        assert_eq!(r.measured, 0.0);
        assert!(r.pass);
    }
}
