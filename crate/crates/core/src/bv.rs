//! Functions of bounded variation on a compact interval `[a, b]`.
//!
//! A [`BVStep`] is right-continuous on `[a, b)` with an explicit value at
//! `b`; finitely many point values may be overridden, which changes the
//! pointwise variation but not the essential one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Partition, StepFunction};
use crate::space::{NormedSpace, State};

#[derive(Debug, Clone, PartialEq)]
pub struct BVStep {
    breaks: Vec<f64>,
    values: Vec<State>,
    end_value: State,
    points: Vec<(f64, State)>,
}

fn check_breaks(breaks: &[f64]) -> Result<()> {
    if breaks.len() < 2 {
        return Err(Error::InvalidPartition("need at least two break points".into()));
    }
    if !breaks.iter().all(|t| t.is_finite()) || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidPartition("break points must increase strictly".into()));
    }
    Ok(())
}

impl BVStep {
    /// Value `values[k]` on `[breaks[k], breaks[k + 1])` and `end_value` at `b`.
    pub fn new(breaks: Vec<f64>, values: Vec<State>, end_value: State) -> Result<Self> {
        check_breaks(&breaks)?;
        if values.len() + 1 != breaks.len() {
            return Err(Error::InvalidPartition(format!(
                "{} values for {} intervals",
                values.len(),
                breaks.len() - 1
            )));
        }
        let dim = end_value.len();
        if let Some(v) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        Ok(BVStep {
            breaks,
            values,
            end_value,
            points: Vec::new(),
        })
    }

    /// Real-valued step function.
    pub fn scalar(breaks: Vec<f64>, values: &[f64], end_value: f64) -> Result<Self> {
        BVStep::new(
            breaks,
            values.iter().map(|&x| State::from_element(1, x)).collect(),
            State::from_element(1, end_value),
        )
    }

    /// The same function with `f(t) = value` at the single point `t`.
    pub fn with_point(mut self, t: f64, value: State) -> Result<Self> {
        if !(self.a()..=self.b()).contains(&t) {
            return Err(Error::Domain(format!("point {t} outside [{}, {}]", self.a(), self.b())));
        }
        if value.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: value.len(),
            });
        }
        if t == self.b() {
            self.end_value = value;
            return Ok(self);
        }
        self.points.retain(|(s, _)| *s != t);
        self.points.push((t, value));
        self.points.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.breaks[0]
    }

    pub fn b(&self) -> f64 {
        *self.breaks.last().expect("two breaks")
    }

    pub fn dim(&self) -> usize {
        self.end_value.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    pub fn end_value(&self) -> &State {
        &self.end_value
    }

    fn interval(&self, t: f64) -> usize {
        let k = self.breaks.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.values.len() - 1)
    }

    /// Point evaluation on `[a, b]`.
    pub fn eval(&self, t: f64) -> Result<&State> {
        if !(self.a()..=self.b()).contains(&t) {
            return Err(Error::Domain(format!("{t} outside [{}, {}]", self.a(), self.b())));
        }
        if t == self.b() {
            return Ok(&self.end_value);
        }
        if let Some((_, v)) = self.points.iter().find(|(s, _)| *s == t) {
            return Ok(v);
        }
        Ok(&self.values[self.interval(t)])
    }

    /// `f(t+)` for `t ∈ [a, b)`.
    pub fn right_limit(&self, t: f64) -> Result<&State> {
        if !(self.a()..self.b()).contains(&t) {
            return Err(Error::Domain(format!("right limit needs t in [{}, {})", self.a(), self.b())));
        }
        Ok(&self.values[self.interval(t)])
    }

    /// Values in the order they are visited from `a` to `b`, with the
    /// probe time of each.
    fn events(&self) -> Vec<(f64, &State)> {
        let mut out = Vec::new();
        let mut pts = self.points.iter().peekable();
        for (k, v) in self.values.iter().enumerate() {
            let (lo, hi) = (self.breaks[k], self.breaks[k + 1]);
            let mut left = lo;
            match pts.peek() {
                Some((s, pv)) if *s == lo => {
                    out.push((lo, pv));
                    pts.next();
                }
                _ => out.push((lo, v)),
            }
            while let Some((s, pv)) = pts.peek() {
                if *s >= hi {
                    break;
                }
                out.push((0.5 * (left + s), v));
                out.push((*s, pv));
                left = *s;
                pts.next();
            }
            out.push((0.5 * (left + hi), v));
        }
        out.push((self.b(), &self.end_value));
        out
    }

    /// `Var(f)`: supremum of jump sums over all partitions of `[a, b]`.
    pub fn pointwise_var(&self, space: &NormedSpace) -> f64 {
        self.events().windows(2).fold(0.0, |acc, w| acc + space.dist(w[0].1, w[1].1))
    }

    /// Variation of the right-continuous representative.
    pub fn ess_var(&self, space: &NormedSpace) -> f64 {
        self.values.windows(2).fold(0.0, |acc, w| acc + space.dist(&w[0], &w[1]))
    }

    pub fn l1_norm(&self, space: &NormedSpace) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| (self.breaks[k + 1] - self.breaks[k]) * space.norm_unchecked(v))
            .sum()
    }

    /// `‖f‖_{L¹} + essVar(f)`.
    pub fn bv_norm(&self, space: &NormedSpace) -> f64 {
        self.l1_norm(space) + self.ess_var(space)
    }

    /// Pointwise sum on the common refinement; both must share `[a, b]`.
    pub fn add(&self, other: &BVStep) -> Result<BVStep> {
        if self.a() != other.a() || self.b() != other.b() {
            return Err(Error::GridMismatch("functions live on different intervals".into()));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut breaks: Vec<f64> = self.breaks.iter().chain(other.breaks.iter()).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks
            .windows(2)
            .map(|w| &self.values[self.interval(w[0])] + &other.values[other.interval(w[0])])
            .collect();
        let mut sum = BVStep::new(breaks, values, &self.end_value + &other.end_value)?;
        let mut times: Vec<f64> = self.points.iter().chain(other.points.iter()).map(|p| p.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        for t in times {
            let v = self.eval(t)? + other.eval(t)?;
            sum = sum.with_point(t, v)?;
        }
        Ok(sum)
    }
}

/// `∫_a^{b-h} ‖f(τ + h) - f(τ)‖ dτ` and `h·essVar(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftEstimate {
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl ShiftEstimate {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

pub fn shift_estimate_check(f: &BVStep, h: f64, space: &NormedSpace) -> Result<ShiftEstimate> {
    let (a, b) = (f.a(), f.b());
    if !(h > 0.0 && h < b - a) {
        return Err(Error::Domain(format!("shift {h} must lie in (0, {})", b - a)));
    }
    let end = b - h;
    let mut cuts: Vec<f64> = f
        .breaks
        .iter()
        .flat_map(|&s| [s, s - h])
        .filter(|&s| s > a && s < end)
        .collect();
    cuts.push(a);
    cuts.push(end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let lhs = cuts
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            let d = space.dist(&f.values[f.interval(m + h)], &f.values[f.interval(m)]);
            if d == 0.0 {
                0.0
            } else {
                (w[1] - w[0]) * d
            }
        })
        .sum();
    Ok(ShiftEstimate {
        h,
        lhs,
        rhs: h * f.ess_var(space),
    })
}

/// `‖f‖_BV/(b - a + 1) ≤ ‖f(a+)‖ + essVar(f) ≤ (2 ∨ 1/(b - a))‖f‖_BV`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

impl NormEquivalence {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower <= self.middle + tol && self.middle <= self.upper + tol
    }
}

pub fn norm_equivalence_check(f: &BVStep, space: &NormedSpace) -> NormEquivalence {
    let len = f.b() - f.a();
    let bv = f.bv_norm(space);
    let var = f.ess_var(space);
    NormEquivalence {
        lower: bv / (len + 1.0),
        middle: space.norm_unchecked(&f.values[0]) + var,
        upper: 2f64.max(1.0 / len) * bv,
    }
}

/// Uniform samples of a smooth real function and its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledC1 {
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl SampledC1 {
    pub fn new(a: f64, b: f64, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
        }
        if values.len() < 2 || values.len() != derivatives.len() {
            return Err(Error::Domain("need at least two samples of f and f'".into()));
        }
        Ok(SampledC1 {
            a,
            b,
            values,
            derivatives,
        })
    }

    /// `n` samples at `a + (b - a)k/(n - 1)`.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain("need at least two samples".into()));
        }
        let ts = Self::grid(a, b, n);
        SampledC1::new(a, b, ts.iter().map(|&t| f(t)).collect(), ts.iter().map(|&t| df(t)).collect())
    }

    /// Doubles the number of intervals, starting from `n`, until two
    /// successive variation sums differ by less than `tol` or `max_n`
    /// samples are reached.
    pub fn refined(
        a: f64,
        b: f64,
        n: usize,
        max_n: usize,
        tol: f64,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mut cur = SampledC1::from_fn(a, b, n.max(2), &f, &df)?;
        loop {
            let m = 2 * (cur.len() - 1) + 1;
            if m > max_n {
                return Ok(cur);
            }
            let next = SampledC1::from_fn(a, b, m, &f, &df)?;
            let done = (next.variation() - cur.variation()).abs() < tol;
            cur = next;
            if done {
                return Ok(cur);
            }
        }
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        let mut ts: Vec<f64> = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
        ts[n - 1] = b;
        ts
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        Self::grid(self.a, self.b, self.len())
    }

    /// Jump sum over the sample grid.
    pub fn variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Trapezoid rule for `∫|f'|`.
    pub fn abs_derivative_integral(&self) -> f64 {
        let h = (self.b - self.a) / (self.len() - 1) as f64;
        self.derivatives
            .windows(2)
            .map(|w| 0.5 * h * (w[0].abs() + w[1].abs()))
            .sum()
    }
}

/// `(Var f, ∫|f'|)` for a sampled `C¹` function.
pub fn c1_var_check(f: &SampledC1) -> (f64, f64) {
    (f.variation(), f.abs_derivative_integral())
}

/// Probe times with `f = f₊ - f₋`, `f₋(t) = Var(f|[a,t])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JordanDecomposition {
    pub times: Vec<f64>,
    pub f: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl JordanDecomposition {
    fn from_samples(times: Vec<f64>, f: Vec<f64>) -> Self {
        let mut minus = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        for (k, x) in f.iter().enumerate() {
            if k > 0 {
                acc += (x - f[k - 1]).abs();
            }
            minus.push(acc);
        }
        let plus = f.iter().zip(&minus).map(|(x, m)| x + m).collect();
        JordanDecomposition { times, f, plus, minus }
    }

    /// Both components are nondecreasing along the probe times, up to
    /// rounding relative to their magnitude.
    pub fn monotone(&self) -> bool {
        let up = |v: &[f64]| {
            let tol = 1e-12 * v.iter().fold(1.0, |m: f64, x| m.max(x.abs()));
            v.windows(2).all(|w| w[1] >= w[0] - tol)
        };
        up(&self.plus) && up(&self.minus)
    }

    /// `max |f₊ - f₋ - f|`.
    pub fn reconstruction_error(&self) -> f64 {
        self.plus
            .iter()
            .zip(&self.minus)
            .zip(&self.f)
            .map(|((p, m), x)| (p - m - x).abs())
            .fold(0.0, f64::max)
    }
}

/// Input to [`jordan_decompose`].
#[derive(Debug, Clone, Copy)]
pub enum RealBV<'a> {
    Step(&'a BVStep),
    Sampled(&'a SampledC1),
}

pub fn jordan_decompose(f: RealBV<'_>) -> Result<JordanDecomposition> {
    match f {
        RealBV::Step(s) => {
            if s.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: s.dim(),
                });
            }
            let (times, vals) = s.events().into_iter().map(|(t, v)| (t, v[0])).unzip();
            Ok(JordanDecomposition::from_samples(times, vals))
        }
        RealBV::Sampled(c) => Ok(JordanDecomposition::from_samples(c.times(), c.values.clone())),
    }
}

/// A general `BV` comparison function replaced by its left-endpoint step
/// projection on a uniform partition of `[0, T]`.
#[derive(Debug, Clone)]
pub struct ProjectedBV {
    pub step: StepFunction,
    /// Jump variation of the projection; never exceeds `Var(g)`.
    pub step_variation: f64,
    /// `|π|·Var(g)`, an upper bound on `‖g - step‖_{L¹(0,T)}`.
    pub l1_error_bound: f64,
}

/// Projects `g` onto `n` uniform steps. `variation` must bound `Var(g|[0,T])`.
pub fn project_bv(
    horizon: f64,
    n: usize,
    g: impl Fn(f64) -> State,
    variation: f64,
    space: &NormedSpace,
) -> Result<ProjectedBV> {
    if !(variation >= 0.0) || !variation.is_finite() {
        return Err(Error::Domain(format!("variation bound must be finite and nonnegative, got {variation}")));
    }
    let p = Partition::uniform(horizon, n)?;
    let values = (0..p.len()).map(|i| g(p.time(i))).collect();
    let mesh = p.mesh();
    let step = StepFunction::new(p, values)?;
    let step_variation = step.jump_variation(space);
    Ok(ProjectedBV { step, step_variation, l1_error_bound: mesh * variation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormKind;
    use approx::assert_abs_diff_eq;

    fn s1() -> NormedSpace {
        NormedSpace::new(1, NormKind::L2).unwrap()
    }

    fn indicator() -> BVStep {
        BVStep::scalar(vec![0.0, 0.5, 1.0], &[0.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn variations() {
        let s = s1();
        assert_eq!(indicator().pointwise_var(&s), 1.0);
        assert_eq!(indicator().ess_var(&s), 1.0);
        let c = BVStep::scalar(vec![0.0, 1.0], &[2.0], 2.0).unwrap();
        assert_eq!(c.pointwise_var(&s), 0.0);
        assert_eq!(c.ess_var(&s), 0.0);
        let f = BVStep::scalar(vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], &[0.0, 1.0, -1.0], -1.0).unwrap();
        assert_eq!(f.pointwise_var(&s), 3.0);
        let g = indicator().with_point(0.25, State::from_element(1, 5.0)).unwrap();
        assert_eq!(g.ess_var(&s), 1.0);
        assert_eq!(g.pointwise_var(&s), 11.0);
        let e = indicator().with_point(1.0, State::from_element(1, 0.0)).unwrap();
        assert_eq!(e.pointwise_var(&s), 2.0);
        assert_eq!(e.ess_var(&s), 1.0);
    }

    #[test]
    fn right_limits() {
        let f = indicator().with_point(0.5, State::from_element(1, 7.0)).unwrap();
        assert_eq!(f.right_limit(0.5).unwrap()[0], 1.0);
        assert_eq!(f.eval(0.5).unwrap()[0], 7.0);
        assert_eq!(f.right_limit(0.0).unwrap()[0], 0.0);
        assert_eq!(f.right_limit(0.7).unwrap()[0], 1.0);
        assert!(f.right_limit(1.0).is_err());
    }

    #[test]
    fn shift_examples() {
        let s = s1();
        let r = shift_estimate_check(&indicator(), 0.25, &s).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.25, 0.25));
        let c = BVStep::scalar(vec![0.0, 1.0], &[2.0], 2.0).unwrap();
        assert_eq!(shift_estimate_check(&c, 0.3, &s).unwrap().lhs, 0.0);
        assert!(shift_estimate_check(&c, 1.0, &s).is_err());
        assert!(shift_estimate_check(&c, 0.0, &s).is_err());
    }

    #[test]
    fn norm_equivalence_examples() {
        let s = s1();
        let r = norm_equivalence_check(&indicator(), &s);
        assert_eq!((r.lower, r.middle, r.upper), (0.75, 1.0, 3.0));
        let c = BVStep::scalar(vec![0.0, 1.0], &[-3.0], -3.0).unwrap();
        let r = norm_equivalence_check(&c, &s);
        assert_eq!((r.lower, r.middle, r.upper), (1.5, 3.0, 6.0));
        let z = BVStep::scalar(vec![0.0, 1.0], &[0.0], 0.0).unwrap();
        let r = norm_equivalence_check(&z, &s);
        assert_eq!((r.lower, r.middle, r.upper), (0.0, 0.0, 0.0));
    }

    #[test]
    fn jordan_examples() {
        let c = SampledC1::from_fn(0.0, 1.0, 101, |t| (t - 0.5).abs(), |t| (t - 0.5).signum()).unwrap();
        let j = jordan_decompose(RealBV::Sampled(&c)).unwrap();
        assert!(j.monotone());
        for (t, m) in j.times.iter().zip(&j.minus) {
            assert_abs_diff_eq!(*m, *t, epsilon = 1e-12);
        }
        assert!(j.reconstruction_error() <= 1e-12);
        let up = BVStep::scalar(vec![0.0, 0.2, 0.6, 1.0], &[1.0, 1.5, 4.0], 4.5).unwrap();
        let j = jordan_decompose(RealBV::Step(&up)).unwrap();
        for k in 0..j.f.len() {
            assert_eq!(j.minus[k], j.f[k] - 1.0);
            assert_eq!(j.plus[k], 2.0 * j.f[k] - 1.0);
        }
        let flat = BVStep::scalar(vec![0.0, 1.0], &[2.0], 2.0).unwrap();
        let j = jordan_decompose(RealBV::Step(&flat)).unwrap();
        assert!(j.minus.iter().all(|&m| m == 0.0));
        assert!(j.plus.iter().all(|&p| p == 2.0));
        let v = BVStep::new(vec![0.0, 1.0], vec![State::zeros(2)], State::zeros(2)).unwrap();
        assert!(jordan_decompose(RealBV::Step(&v)).is_err());
    }

    #[test]
    fn c1_examples() {
        let id = SampledC1::from_fn(0.0, 1.0, 11, |t| t, |_| 1.0).unwrap();
        let (v, i) = c1_var_check(&id);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i, 1.0, epsilon = 1e-15);
        let c = SampledC1::from_fn(0.0, 1.0, 11, |_| 3.0, |_| 0.0).unwrap();
        assert_eq!(c1_var_check(&c), (0.0, 0.0));
        let tau = std::f64::consts::TAU;
        let s = SampledC1::from_fn(0.0, 1.0, 10_000, |t| (tau * t).sin(), |t| tau * (tau * t).cos()).unwrap();
        let (v, i) = c1_var_check(&s);
        assert!((v - 4.0).abs() < 1e-4 && (i - 4.0).abs() < 1e-4 && (v - i).abs() < 1e-4);
        let r = SampledC1::refined(0.0, 1.0, 11, 1 << 20, 1e-6, |t| (tau * t).sin(), |t| tau * (tau * t).cos()).unwrap();
        assert!((r.variation() - 4.0).abs() < 1e-5);
    }

    #[test]
    fn sum_of_steps() {
        let s = s1();
        let g = indicator();
        let h = BVStep::scalar(vec![0.0, 0.25, 1.0], &[1.0, -1.0], -1.0).unwrap();
        let sum = g.add(&h).unwrap();
        assert_eq!(sum.breaks(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(sum.eval(0.6).unwrap()[0], 0.0);
        assert!(sum.pointwise_var(&s) <= g.pointwise_var(&s) + h.pointwise_var(&s));
    }

    #[test]
    fn projection_error_within_bound() {
        let tau = 2.0 * std::f64::consts::PI;
        let g = |t: f64| State::from_element(1, (tau * t).sin());
        let pr = project_bv(1.0, 200, g, 4.0, &s1()).unwrap();
        assert_abs_diff_eq!(pr.l1_error_bound, 0.02, epsilon = 1e-15);
        assert!(pr.step_variation <= 4.0 + 1e-12 && pr.step_variation > 3.9);
        let m = 200_000;
        let err: f64 = (0..m)
            .map(|k| {
                let t = (k as f64 + 0.5) / m as f64;
                ((tau * t).sin() - pr.step.eval(t)[0]).abs() / m as f64
            })
            .fold(0.0, |a, b| a + b);
        assert!(err <= pr.l1_error_bound);
        assert!(project_bv(1.0, 4, g, f64::NAN, &s1()).is_err());
    }
}
