//! Time grids on `[0, T]` and the functions that live on them.
//!
//! Grid nodes are stored once and never re-derived by accumulation, so all
//! interval lookups compare against the exact stored values. Intervals are
//! half-open, `[t_i, t_{i+1})`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::space::{NormedSpace, State};

/// A partition `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least two nodes".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPartition(format!(
                "first node must be 0, got {}",
                times[0]
            )));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition(format!(
                "nodes not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidPartition("non-finite node".into()));
        }
        Ok(Partition { times })
    }

    /// `N + 1` equally spaced nodes on `[0, T]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidPartition(format!(
                "uniform grid needs N >= 1 and T > 0 (got N = {n}, T = {horizon})"
            )));
        }
        let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        times[n] = horizon;
        Partition::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Number of intervals `N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `h_i = t_{i+1} - t_i`.
    #[inline]
    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Mesh size `|π| = max h_i`.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index `i` with `s ∈ [t_i, t_{i+1})`, if `s ∈ [0, T)`.
    pub fn interval_index(&self, s: f64) -> Option<usize> {
        if !(s >= 0.0 && s < self.horizon()) {
            return None;
        }
        // number of nodes <= s, minus one
        let k = self.times.partition_point(|&t| t <= s);
        Some(k - 1)
    }

    /// `⌊s⌋_π`: the left node of the interval containing `s`, or `s` itself off `[0, T)`.
    pub fn floor_at(&self, s: f64) -> f64 {
        match self.interval_index(s) {
            Some(i) => self.times[i],
            None => s,
        }
    }

    /// `⌈s⌉_π`: the right node of the interval containing `s`, or `s` itself off `[0, T)`.
    pub fn ceiling_at(&self, s: f64) -> f64 {
        match self.interval_index(s) {
            Some(i) => self.times[i + 1],
            None => s,
        }
    }

    /// Common refinement: the sorted union of both node sets.
    pub fn refine(&self, other: &Partition) -> Result<Partition> {
        check_horizons(self, other)?;
        let (a, b) = (&self.times, &other.times);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(&x), Some(&y)) if y < x => {
                    j += 1;
                    y
                }
                (Some(&x), Some(_)) => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            out.push(next);
        }
        // both end at the (tolerance-equal) horizon; keep the receiver's value
        let horizon = self.horizon();
        while out.len() >= 2 && out[out.len() - 1] > horizon {
            out.pop();
        }
        if *out.last().unwrap() != horizon {
            out.pop();
            out.push(horizon);
        }
        Partition::new(out)
    }

    /// Writes `index,t` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "t"])?;
        for (i, t) in self.times.iter().enumerate() {
            wtr.write_record([i.to_string(), fmt_f64(*t)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_horizons(p: &Partition, q: &Partition) -> Result<()> {
    let (a, b) = (p.horizon(), q.horizon());
    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(Error::HorizonMismatch(a, b));
    }
    Ok(())
}

/// Shortest round-trip decimal form, used in every CSV export.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A step function adapted to a partition: value `v_i` on `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    partition: Arc<Partition>,
    values: Vec<State>,
}

impl StepFunction {
    pub fn new(partition: impl Into<Arc<Partition>>, values: Vec<State>) -> Result<Self> {
        let partition = partition.into();
        if values.len() != partition.len() {
            return Err(Error::InvalidPartition(format!(
                "step function has {} values for {} intervals",
                values.len(),
                partition.len()
            )));
        }
        if let Some(first) = values.first() {
            let n = first.len();
            if let Some(bad) = values.iter().find(|v| v.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: bad.len(),
                });
            }
        }
        Ok(StepFunction { partition, values })
    }

    pub fn constant(partition: impl Into<Arc<Partition>>, value: State) -> Self {
        let partition = partition.into();
        let values = vec![value; partition.len()];
        StepFunction { partition, values }
    }

    /// Step function on `[0, T]` that jumps at the given interior times.
    ///
    /// `values[k]` holds on the `k`-th piece; `breaks` must be strictly
    /// increasing inside `(0, T)` and `values.len() == breaks.len() + 1`.
    pub fn from_breaks(horizon: f64, breaks: &[f64], values: Vec<State>) -> Result<Self> {
        let mut times = Vec::with_capacity(breaks.len() + 2);
        times.push(0.0);
        times.extend_from_slice(breaks);
        times.push(horizon);
        StepFunction::new(Partition::new(times)?, values)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn partition_arc(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Value at `s`. Points at or beyond `T` return the last value, points
    /// before 0 the first one.
    pub fn eval(&self, s: f64) -> &State {
        match self.partition.interval_index(s) {
            Some(i) => &self.values[i],
            None if s < 0.0 => &self.values[0],
            None => &self.values[self.values.len() - 1],
        }
    }

    /// `f(0+)`.
    pub fn first(&self) -> &State {
        &self.values[0]
    }

    /// Sum of jump norms, the essential variation of the right-continuous representative.
    pub fn jump_variation(&self, space: &NormedSpace) -> f64 {
        self.values
            .windows(2)
            .fold(0.0, |acc, w| acc + space.dist(&w[1], &w[0]))
    }

    /// `∫_0^upto ‖f(τ)‖ dτ`.
    pub fn l1_norm(&self, space: &NormedSpace, upto: f64) -> f64 {
        let p = &self.partition;
        (0..p.len())
            .map(|i| {
                let (a, b) = (p.time(i), p.time(i + 1).min(upto));
                if b > a {
                    (b - a) * space.norm_unchecked(&self.values[i])
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Breakpoints of `‖f - g‖` together with the cumulative integral
    /// `∫_0^{s_k} ‖f - g‖` at every node of the common refinement.
    pub fn l1_distance_profile(&self, other: &StepFunction, space: &NormedSpace) -> Result<L1Profile> {
        let merged = self.partition.refine(&other.partition)?;
        let mut cumulative = Vec::with_capacity(merged.times.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..merged.len() {
            let (a, b) = (merged.time(k), merged.time(k + 1));
            acc += (b - a) * space.dist(self.eval(a), other.eval(a));
            cumulative.push(acc);
        }
        Ok(L1Profile {
            nodes: merged.times,
            cumulative,
        })
    }

    /// `∫_0^upto ‖f(τ) - g(τ)‖ dτ`, exact on the common refinement.
    pub fn l1_distance(&self, other: &StepFunction, space: &NormedSpace, upto: f64) -> Result<f64> {
        Ok(self.l1_distance_profile(other, space)?.integral_to(upto))
    }

    /// Interval averages of `self` over the cells of `target` (conditional expectation).
    pub fn project(&self, target: impl Into<Arc<Partition>>) -> Result<StepFunction> {
        let target = target.into();
        let merged = self.partition.refine(&target)?;
        let dim = self.dim();
        let mut values = vec![State::zeros(dim); target.len()];
        for k in 0..merged.len() {
            let (a, b) = (merged.time(k), merged.time(k + 1));
            let cell = target
                .interval_index(a)
                .expect("refinement node inside [0, T)");
            values[cell] += self.eval(a) * (b - a);
        }
        for (i, v) in values.iter_mut().enumerate() {
            *v /= target.step(i);
        }
        Ok(StepFunction {
            partition: target,
            values,
        })
    }

    /// Rows `t_start,t_end,x0,x1,…`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t_start".to_string(), "t_end".to_string()];
        header.extend((0..self.dim()).map(|k| format!("x{k}")));
        wtr.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row = vec![fmt_f64(self.partition.time(i)), fmt_f64(self.partition.time(i + 1))];
            row.extend(v.iter().map(|c| fmt_f64(*c)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Cumulative integral of a piecewise-constant nonnegative integrand.
#[derive(Debug, Clone)]
pub struct L1Profile {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl L1Profile {
    /// `∫_0^upto`, linear inside a piece.
    pub fn integral_to(&self, upto: f64) -> f64 {
        if upto <= 0.0 {
            return 0.0;
        }
        let last = self.nodes.len() - 1;
        if upto >= self.nodes[last] {
            return self.cumulative[last];
        }
        let k = self.nodes.partition_point(|&t| t <= upto) - 1;
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let rate = (self.cumulative[k + 1] - self.cumulative[k]) / (b - a);
        self.cumulative[k] + rate * (upto - a)
    }

    pub fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }
}

/// A step function on `[0, T]` extended by a constant on `[-1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedStep {
    pub left: State,
    pub body: StepFunction,
}

impl ExtendedStep {
    pub fn new(left: State, body: StepFunction) -> Result<Self> {
        if left.len() != body.dim() {
            return Err(Error::DimensionMismatch {
                expected: body.dim(),
                got: left.len(),
            });
        }
        Ok(ExtendedStep { left, body })
    }

    pub fn eval(&self, s: f64) -> &State {
        if s < 0.0 {
            &self.left
        } else {
            self.body.eval(s)
        }
    }

    /// Pieces of `[-1, T]` on which the function is constant, as `(start, end, value)`.
    pub fn pieces(&self) -> Vec<(f64, f64, &State)> {
        let p = self.body.partition();
        let mut out = Vec::with_capacity(p.len() + 1);
        out.push((-1.0, 0.0, &self.left));
        for i in 0..p.len() {
            out.push((p.time(i), p.time(i + 1), &self.body.values()[i]));
        }
        out
    }

    /// Essential variation on `[-1, T]`: jumps of the body plus `‖g(0+) - left‖`.
    pub fn ess_var(&self, space: &NormedSpace) -> f64 {
        self.body.jump_variation(space) + space.dist(self.body.first(), &self.left)
    }
}

/// A continuous function, affine between the nodes of its partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    partition: Arc<Partition>,
    nodes: Vec<State>,
}

impl PiecewiseAffine {
    pub fn new(partition: impl Into<Arc<Partition>>, nodes: Vec<State>) -> Result<Self> {
        let partition = partition.into();
        if nodes.len() != partition.len() + 1 {
            return Err(Error::InvalidPartition(format!(
                "{} node values for {} nodes",
                nodes.len(),
                partition.len() + 1
            )));
        }
        Ok(PiecewiseAffine { partition, nodes })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn partition_arc(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn nodes(&self) -> &[State] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &State {
        &self.nodes[i]
    }

    /// Linear interpolation; clamps to the end values outside `[0, T]`.
    pub fn eval(&self, t: f64) -> State {
        let p = &self.partition;
        if t <= 0.0 {
            return self.nodes[0].clone();
        }
        match p.interval_index(t) {
            Some(i) => {
                let (a, b) = (p.time(i), p.time(i + 1));
                let w = (t - a) / (b - a);
                &self.nodes[i] * (1.0 - w) + &self.nodes[i + 1] * w
            }
            None => self.nodes[self.nodes.len() - 1].clone(),
        }
    }

    /// `sup_t ‖self(t) - other(t)‖`. Exact: the difference is affine on the
    /// common refinement and the norm is convex, so the sup sits on a node.
    pub fn sup_distance(&self, other: &PiecewiseAffine, space: &NormedSpace) -> Result<f64> {
        let merged = self.partition.refine(&other.partition)?;
        Ok(merged
            .times()
            .iter()
            .map(|&t| space.dist(&self.eval(t), &other.eval(t)))
            .fold(0.0, f64::max))
    }

    /// Largest node slope `max_i ‖u_{i+1} - u_i‖ / h_i`.
    pub fn max_slope(&self, space: &NormedSpace) -> f64 {
        (0..self.partition.len())
            .map(|i| space.dist(&self.nodes[i + 1], &self.nodes[i]) / self.partition.step(i))
            .fold(0.0, f64::max)
    }

    /// Rows `t,x0,x1,…`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let dim = self.nodes[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|k| format!("x{k}")));
        wtr.write_record(&header)?;
        for (t, v) in self.partition.times().iter().zip(&self.nodes) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(v.iter().map(|c| fmt_f64(*c)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
