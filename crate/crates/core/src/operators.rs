//! Quasi-accretive operators, represented through their resolvents.
//!
//! The Euler scheme only ever applies `J_λ = (I + λA)^{-1}`, so an operator
//! here is a resolvent plus its accretivity type `ω`. Multivalued graphs such as
//! the subdifferential of `|·|` still have single-valued resolvents.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{NormKind, NormedSpace, State};

/// Explicit description of a value set `Ax`.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueSet {
    Point(State),
    /// Coordinatewise intervals `[lo_k, hi_k]`.
    Box { lo: State, hi: State },
    Empty,
}

impl ValueSet {
    /// Whether `v` lies in the set, up to `tol` per coordinate.
    pub fn contains(&self, v: &State, tol: f64) -> bool {
        match self {
            ValueSet::Point(p) => p.iter().zip(v.iter()).all(|(a, b)| (a - b).abs() <= tol),
            ValueSet::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ValueSet::Empty => false,
        }
    }

    /// Nearest point of the set to `v` in every `ℓp` norm (coordinatewise clamp).
    pub fn nearest(&self, v: &State) -> Option<State> {
        match self {
            ValueSet::Point(p) => Some(p.clone()),
            ValueSet::Box { lo, hi } => Some(State::from_iterator(
                v.len(),
                v.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(x, (l, h))| x.clamp(*l, *h)),
            )),
            ValueSet::Empty => None,
        }
    }

    pub fn shifted(self, shift: &State) -> ValueSet {
        match self {
            ValueSet::Point(p) => ValueSet::Point(p + shift),
            ValueSet::Box { lo, hi } => ValueSet::Box {
                lo: lo + shift,
                hi: hi + shift,
            },
            ValueSet::Empty => ValueSet::Empty,
        }
    }
}

/// The set norm `⦀B⦀ = inf_{x∈B} ‖x‖`; `+∞` for the empty set.
pub fn set_norm(set: &ValueSet, space: &NormedSpace) -> f64 {
    match set.nearest(&space.zero()) {
        Some(p) => space.norm_unchecked(&p),
        None => f64::INFINITY,
    }
}

/// A graph pair `(u, v)` with `v ∈ Au`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub u: State,
    pub v: State,
}

impl GraphPair {
    pub fn new(u: State, v: State) -> Self {
        GraphPair { u, v }
    }
}

/// An operator `A ⊆ X × X` accretive of type `ω`, given by its resolvent.
pub trait AccretiveOperator: Send + Sync + std::fmt::Debug {
    fn omega(&self) -> f64;

    fn dim(&self) -> usize;

    /// `J_λ x = (I + λA)^{-1} x`. Only required for `λ > 0` with `λω < 1`.
    fn resolve(&self, lambda: f64, x: &State) -> Result<State>;

    /// Explicit `Ax`, when the operator can describe it.
    fn value_set(&self, _x: &State) -> Option<ValueSet> {
        None
    }

    fn domain_contains(&self, _x: &State) -> bool {
        true
    }

    /// Closed-form `|x|_A` when derivable.
    fn generalized_norm_exact(&self, _x: &State, _space: &NormedSpace) -> Option<f64> {
        None
    }

    fn name(&self) -> String;
}

/// Guards the admissible resolvent parameters.
pub fn check_step(lambda: f64, omega: f64) -> Result<()> {
    if !(lambda > 0.0) || lambda * omega >= 1.0 {
        return Err(Error::StepSizeCondition {
            step: lambda,
            omega,
            limit: 1.0,
        });
    }
    Ok(())
}

/// Checks `J_λ(u + λv) = u` within `tol`, i.e. `(u, v)` lies on the graph.
pub fn fixed_point_residual(
    op: &dyn AccretiveOperator,
    pair: &GraphPair,
    lambda: f64,
    space: &NormedSpace,
) -> Result<f64> {
    let x = &pair.u + &pair.v * lambda;
    let back = op.resolve(lambda, &x)?;
    Ok(space.dist(&back, &pair.u))
}

/// `u ↦ Mu` for a square matrix `M`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
    omega: f64,
}

impl LinearOperator {
    /// Builds the operator and samples the accretivity inequality in `space`.
    pub fn new(matrix: DMatrix<f64>, omega: f64, space: &NormedSpace) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                got: matrix.nrows(),
            });
        }
        let op = LinearOperator { matrix, omega };
        op.verify_accretive(space, 256, 0x5eed)?;
        Ok(op)
    }

    pub fn scalar(a: f64, omega: f64) -> Result<Self> {
        let space = NormedSpace::new(1, NormKind::L2)?;
        LinearOperator::new(DMatrix::from_element(1, 1, a), omega, &space)
    }

    pub fn diagonal(diag: &[f64], omega: f64, space: &NormedSpace) -> Result<Self> {
        let d = State::from_column_slice(diag);
        LinearOperator::new(DMatrix::from_diagonal(&d), omega, space)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// For linear maps the sample check reduces to `[d, Md] + ω‖d‖ ≥ 0`.
    fn verify_accretive(&self, space: &NormedSpace, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = space.dim;
        let mut worst = f64::INFINITY;
        let mut probe = |d: State| {
            let md = &self.matrix * &d;
            let val = space.bracket_unchecked(&d, &md) + self.omega * space.norm_unchecked(&d);
            let scale = space.norm_unchecked(&d).max(1e-300);
            worst = worst.min(val / scale);
        };
        for k in 0..n {
            for sgn in [1.0, -1.0] {
                let mut e = State::zeros(n);
                e[k] = sgn;
                probe(e);
            }
        }
        for _ in 0..samples {
            probe(State::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)));
        }
        if worst < -1e-10 {
            return Err(Error::NotAccretive(format!(
                "[d, Md] + ω‖d‖ reaches {worst:.3e}·‖d‖ for ω = {}",
                self.omega
            )));
        }
        Ok(())
    }
}

impl AccretiveOperator for LinearOperator {
    fn omega(&self) -> f64 {
        self.omega
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn resolve(&self, lambda: f64, x: &State) -> Result<State> {
        check_step(lambda, self.omega)?;
        let n = self.dim();
        if n == 1 {
            let denom = 1.0 + lambda * self.matrix[(0, 0)];
            if denom == 0.0 {
                return Err(Error::ResolventFailure("I + λa is singular".into()));
            }
            return Ok(x / denom);
        }
        let system = DMatrix::identity(n, n) + &self.matrix * lambda;
        system
            .lu()
            .solve(x)
            .ok_or_else(|| Error::ResolventFailure("I + λa is singular".into()))
    }

    fn value_set(&self, x: &State) -> Option<ValueSet> {
        Some(ValueSet::Point(&self.matrix * x))
    }

    fn generalized_norm_exact(&self, x: &State, space: &NormedSpace) -> Option<f64> {
        Some(space.norm_unchecked(&(&self.matrix * x)))
    }

    fn name(&self) -> String {
        let n = self.dim();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == 0.0));
        if is_diag {
            let d: Vec<String> = (0..n).map(|i| format!("{}", self.matrix[(i, i)])).collect();
            format!("linear diag({})", d.join(", "))
        } else {
            format!("linear {n}x{n}")
        }
    }
}

/// Componentwise subdifferential of `|·|`: `(Au)_k = sign(u_k)`, `[-1, 1]` at zero.
/// Its resolvent is soft thresholding.
#[derive(Debug, Clone)]
pub struct SignGraph {
    dim: usize,
}

impl SignGraph {
    pub fn new(dim: usize) -> Self {
        SignGraph { dim }
    }
}

/// `sign(x)·max(|x| - λ, 0)`.
#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

impl AccretiveOperator for SignGraph {
    fn omega(&self) -> f64 {
        0.0
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn resolve(&self, lambda: f64, x: &State) -> Result<State> {
        check_step(lambda, 0.0)?;
        Ok(x.map(|c| soft_threshold(c, lambda)))
    }

    fn value_set(&self, x: &State) -> Option<ValueSet> {
        let lo = x.map(|c| if c == 0.0 { -1.0 } else { c.signum() });
        let hi = x.map(|c| if c == 0.0 { 1.0 } else { c.signum() });
        Some(ValueSet::Box { lo, hi })
    }

    fn generalized_norm_exact(&self, x: &State, space: &NormedSpace) -> Option<f64> {
        self.value_set(x).map(|s| set_norm(&s, space))
    }

    fn name(&self) -> String {
        format!("sign graph (dim {})", self.dim)
    }
}

/// `A + c = {(u, v + c) : (u, v) ∈ A}`.
#[derive(Debug, Clone)]
pub struct Shifted {
    inner: Arc<dyn AccretiveOperator>,
    shift: State,
}

impl Shifted {
    pub fn new(inner: Arc<dyn AccretiveOperator>, shift: State) -> Result<Self> {
        if shift.len() != inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: inner.dim(),
                got: shift.len(),
            });
        }
        Ok(Shifted { inner, shift })
    }
}

impl AccretiveOperator for Shifted {
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn resolve(&self, lambda: f64, x: &State) -> Result<State> {
        // x ∈ u + λ(Au + c)  ⇔  x - λc ∈ u + λAu
        self.inner.resolve(lambda, &(x - &self.shift * lambda))
    }

    fn value_set(&self, x: &State) -> Option<ValueSet> {
        self.inner.value_set(x).map(|s| s.shifted(&self.shift))
    }

    fn domain_contains(&self, x: &State) -> bool {
        self.inner.domain_contains(x)
    }

    fn generalized_norm_exact(&self, x: &State, space: &NormedSpace) -> Option<f64> {
        if self.inner.generalized_norm_exact(x, space).is_some() {
            self.value_set(x).map(|s| set_norm(&s, space))
        } else {
            None
        }
    }

    fn name(&self) -> String {
        let c: Vec<String> = self.shift.iter().map(|x| format!("{x}")).collect();
        format!("{} + ({})", self.inner.name(), c.join(", "))
    }
}

/// Parameters of the sampled `|x|_A` estimator.
#[derive(Debug, Clone)]
pub struct GeneralizedNormOptions {
    /// Decreasing positive radii.
    pub radii: Vec<f64>,
    pub samples_per_ball: usize,
    pub seed: u64,
}

impl Default for GeneralizedNormOptions {
    fn default() -> Self {
        GeneralizedNormOptions {
            radii: (1..=20).map(|k| 0.5_f64.powi(k)).collect(),
            samples_per_ball: 64,
            seed: 0x6e6f726d,
        }
    }
}

/// Sampled estimate of `|x|_A = sup_{r>0} inf_{x̂ ∈ B(x,r)} ⦀Ax̂⦀`. Approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedNormEstimate {
    /// Running supremum of the per-radius sampled infima.
    pub value: f64,
    /// Variation of the per-radius estimates over the smaller half of the radii.
    pub spread: f64,
    /// Per-radius sampled infima.
    pub per_radius: Vec<f64>,
    /// Closed form, when the operator provides one.
    pub exact: Option<f64>,
}

impl GeneralizedNormEstimate {
    /// The exact value if known, else the sampled one.
    pub fn best(&self) -> f64 {
        self.exact.unwrap_or(self.value)
    }
}

pub fn generalized_norm(
    op: &dyn AccretiveOperator,
    x: &State,
    space: &NormedSpace,
    opts: &GeneralizedNormOptions,
) -> Result<GeneralizedNormEstimate> {
    space.check(x)?;
    if op.value_set(x).is_none() {
        return Err(Error::UnsupportedOperator);
    }
    if opts.radii.is_empty() || opts.radii.windows(2).any(|w| !(w[1] < w[0])) || opts.radii[0] <= 0.0 {
        return Err(Error::Domain("radii must be positive and strictly decreasing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = space.dim;
    let set_norm_at = |p: &State| -> Result<f64> {
        let s = op.value_set(p).ok_or(Error::UnsupportedOperator)?;
        Ok(set_norm(&s, space))
    };
    let mut per_radius = Vec::with_capacity(opts.radii.len());
    for &r in &opts.radii {
        let mut best = set_norm_at(x)?;
        for k in 0..n {
            for sgn in [1.0, -1.0] {
                let mut p = x.clone();
                p[k] += sgn * r;
                best = best.min(set_norm_at(&p)?);
            }
        }
        let extra = opts.samples_per_ball.saturating_sub(2 * n + 1);
        for _ in 0..extra {
            let dir = State::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let nd = space.norm_unchecked(&dir);
            if nd == 0.0 {
                continue;
            }
            let scale = r * rng.gen_range(0.0..=1.0) / nd;
            best = best.min(set_norm_at(&(x + dir * scale))?);
        }
        per_radius.push(best);
    }
    let value = per_radius.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = &per_radius[per_radius.len() / 2..];
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if hi.is_finite() && lo.is_finite() { hi - lo } else { 0.0 };
    Ok(GeneralizedNormEstimate {
        value,
        spread,
        per_radius,
        exact: op.generalized_norm_exact(x, space),
    })
}

/// Samples `count` random points `x` and checks `(1 - λω)‖J_λx - J_λy‖ ≤ ‖x - y‖ + tol`;
/// returns the worst excess.
pub fn resolvent_contraction_excess(
    op: &dyn AccretiveOperator,
    space: &NormedSpace,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.dim;
    let omega = op.omega();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let lambda_max = if omega > 0.0 { 0.999 / omega } else { 4.0 };
        let lambda = rng.gen_range(1e-3..lambda_max.min(4.0));
        let x = State::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let y = State::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let jx = op.resolve(lambda, &x)?;
        let jy = op.resolve(lambda, &y)?;
        let lhs = (1.0 - lambda * omega) * space.dist(&jx, &jy);
        worst = worst.max(lhs - space.dist(&x, &y));
    }
    Ok(worst)
}
