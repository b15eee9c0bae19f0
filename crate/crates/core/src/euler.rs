//! The implicit Euler scheme `(u_{i+1} - u_i)/h_i + A u_{i+1} ∋ f_i` and dyadic
//! refinement studies.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Partition, PiecewiseAffine, StepFunction};
use crate::operators::{AccretiveOperator, GraphPair};
use crate::space::{NormedSpace, State};

/// A discretization `θ = (π_θ, f_θ, u_θ⁰)` with `f_θ` adapted to `π_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    forcing: StepFunction,
    initial: State,
}

impl Discretization {
    pub fn new(forcing: StepFunction, initial: State) -> Result<Self> {
        if forcing.dim() != initial.len() {
            return Err(Error::DimensionMismatch {
                expected: forcing.dim(),
                got: initial.len(),
            });
        }
        Ok(Discretization { forcing, initial })
    }

    /// Projects an arbitrary step forcing onto `partition` by interval averaging.
    pub fn projected(partition: impl Into<Arc<Partition>>, forcing: &StepFunction, initial: State) -> Result<Self> {
        Discretization::new(forcing.project(partition)?, initial)
    }

    pub fn partition(&self) -> &Partition {
        self.forcing.partition()
    }

    pub fn partition_arc(&self) -> &Arc<Partition> {
        self.forcing.partition_arc()
    }

    pub fn forcing(&self) -> &StepFunction {
        &self.forcing
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }
}

/// Node values of `(E_θ)` together with the discretization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerSolution {
    pub disc: Discretization,
    pub trajectory: PiecewiseAffine,
}

impl EulerSolution {
    pub fn partition(&self) -> &Partition {
        self.disc.partition()
    }

    pub fn node(&self, i: usize) -> &State {
        self.trajectory.node(i)
    }

    pub fn nodes(&self) -> &[State] {
        self.trajectory.nodes()
    }

    /// `max_i ‖u_{i+1} - J_{h_i}(u_i + h_i f_i)‖`.
    pub fn scheme_residual(&self, op: &dyn AccretiveOperator, space: &NormedSpace) -> Result<f64> {
        let p = self.partition();
        let f = self.disc.forcing().values();
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let h = p.step(i);
            let next = op.resolve(h, &(self.node(i) + &f[i] * h))?;
            worst = worst.max(space.dist(&next, self.node(i + 1)));
        }
        Ok(worst)
    }
}

/// Runs the recursion `u_{i+1} = J_{h_i}(u_i + h_i f_θ(t_i))`.
pub fn solve_scheme(op: &dyn AccretiveOperator, disc: &Discretization) -> Result<EulerSolution> {
    let p = disc.partition();
    if disc.initial().len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: disc.initial().len(),
        });
    }
    let omega = op.omega();
    if p.mesh() * omega >= 1.0 {
        return Err(Error::StepSizeCondition {
            step: p.mesh(),
            omega,
            limit: 1.0,
        });
    }
    let f = disc.forcing().values();
    let mut nodes = Vec::with_capacity(p.len() + 1);
    nodes.push(disc.initial().clone());
    for i in 0..p.len() {
        let h = p.step(i);
        let x = &nodes[i] + &f[i] * h;
        nodes.push(op.resolve(h, &x)?);
    }
    Ok(EulerSolution {
        disc: disc.clone(),
        trajectory: PiecewiseAffine::new(disc.partition_arc().clone(), nodes)?,
    })
}

/// `a_{i,j} = ‖u_θ(t_i) - u_θ̂(t̂_j)‖` as an `(N+1) × (N̂+1)` matrix.
pub fn difference_matrix(sol: &EulerSolution, hat: &EulerSolution, space: &NormedSpace) -> DMatrix<f64> {
    let (a, b) = (sol.nodes(), hat.nodes());
    DMatrix::from_fn(a.len(), b.len(), |i, j| space.dist(&a[i], &b[j]))
}

/// One row of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub level: u32,
    pub steps: usize,
    pub mesh: f64,
    /// `‖u_k - u_{k+1}‖_C`; absent on the finest level.
    pub gap_to_next: Option<f64>,
    /// Distance-bound right-hand side for the pair `(u_k, u_{k+1})` with `g = f`.
    pub gap_bound: Option<f64>,
}

/// Dyadic approximation of the Euler solution with its Cauchy table.
#[derive(Debug, Clone)]
pub struct RefinementStudy {
    pub levels: Vec<RefinementLevel>,
    pub solutions: Vec<EulerSolution>,
}

impl RefinementStudy {
    pub fn finest(&self) -> &EulerSolution {
        self.solutions.last().expect("at least one level")
    }

    /// Gap between the two finest levels.
    pub fn finest_gap(&self) -> f64 {
        let n = self.levels.len();
        if n < 2 {
            return 0.0;
        }
        self.levels[n - 2].gap_to_next.unwrap_or(0.0)
    }

    /// Whether the gaps are non-increasing from `from_level` on, up to `tol`.
    pub fn gaps_decrease_from(&self, from_level: u32, tol: f64) -> bool {
        let gaps: Vec<f64> = self
            .levels
            .iter()
            .filter(|l| l.level >= from_level)
            .filter_map(|l| l.gap_to_next)
            .collect();
        gaps.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// A graph pair `(u⁰, v)` with `v ∈ Au⁰` closest to `target`, if `A` exposes `Au⁰`.
pub fn anchored_pair(op: &dyn AccretiveOperator, u0: &State, target: &State) -> Option<GraphPair> {
    let set = op.value_set(u0)?;
    let v = set.nearest(target)?;
    Some(GraphPair::new(u0.clone(), v))
}

/// Solves on uniform meshes `N = 2^k`, `k_min ≤ k ≤ k_max`, with `f` projected
/// onto every mesh, and tabulates consecutive sup-norm gaps.
pub fn euler_solution(
    op: &dyn AccretiveOperator,
    f: &StepFunction,
    u0: &State,
    k_min: u32,
    k_max: u32,
    space: &NormedSpace,
) -> Result<RefinementStudy> {
    if k_min > k_max || k_max > 24 {
        return Err(Error::Domain(format!("invalid level range {k_min}..={k_max}")));
    }
    let horizon = f.partition().horizon();
    let omega = op.omega();
    if omega * horizon / f64::from(1u32 << k_min) >= 1.0 {
        return Err(Error::StepSizeCondition {
            step: horizon / f64::from(1u32 << k_min),
            omega,
            limit: 1.0,
        });
    }
    let mut solutions = Vec::new();
    for k in k_min..=k_max {
        let p = Arc::new(Partition::uniform(horizon, 1usize << k)?);
        let disc = Discretization::projected(p, f, u0.clone())?;
        solutions.push(solve_scheme(op, &disc)?);
    }
    let pair = anchored_pair(op, u0, f.first());
    let mut levels = Vec::new();
    for (idx, k) in (k_min..=k_max).enumerate() {
        let sol = &solutions[idx];
        let (gap, bound) = match solutions.get(idx + 1) {
            Some(next) => {
                let gap = sol.trajectory.sup_distance(&next.trajectory, space)?;
                let bound = match &pair {
                    Some(pair) => Some(crate::bounds::distance_rhs(sol, next, omega, pair, f, space)?),
                    None => None,
                };
                (Some(gap), bound)
            }
            None => (None, None),
        };
        levels.push(RefinementLevel {
            level: k,
            steps: sol.partition().len(),
            mesh: sol.partition().mesh(),
            gap_to_next: gap,
            gap_bound: bound,
        });
    }
    Ok(RefinementStudy { levels, solutions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{LinearOperator, SignGraph};
    use crate::space::NormKind;
    use approx::assert_abs_diff_eq;

    fn s1() -> NormedSpace {
        NormedSpace::new(1, NormKind::L2).unwrap()
    }

    fn v1(x: f64) -> State {
        State::from_element(1, x)
    }

    fn disc(t: f64, n: usize, f: f64, u0: f64) -> Discretization {
        let p = Partition::uniform(t, n).unwrap();
        Discretization::new(StepFunction::constant(p, v1(f)), v1(u0)).unwrap()
    }

    #[test]
    fn linear_nodes() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let sol = solve_scheme(&a, &disc(1.0, 2, 0.0, 1.0)).unwrap();
        let n: Vec<f64> = sol.nodes().iter().map(|x| x[0]).collect();
        assert_eq!(n[0], 1.0);
        assert_abs_diff_eq!(n[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n[2], 4.0 / 9.0, epsilon = 1e-15);
        assert!(sol.scheme_residual(&a, &s1()).unwrap() < 1e-10);
    }

    #[test]
    fn sign_graph_nodes() {
        let a = SignGraph::new(1);
        let sol = solve_scheme(&a, &disc(1.2, 3, 0.0, 1.0)).unwrap();
        let expect = [1.0, 0.6, 0.2, 0.0];
        for (x, e) in sol.nodes().iter().zip(expect) {
            assert_abs_diff_eq!(x[0], e, epsilon = 1e-15);
        }
    }

    #[test]
    fn equilibrium_is_constant() {
        let a = SignGraph::new(1);
        let sol = solve_scheme(&a, &disc(2.0, 7, 0.0, 0.0)).unwrap();
        assert!(sol.nodes().iter().all(|x| x[0] == 0.0));
        let shifted = LinearOperator::scalar(2.0, 0.0).unwrap();
        // (u, 0) with f ≡ 2u is an equilibrium of u' + 2u = f
        let sol = solve_scheme(&shifted, &disc(1.0, 5, 3.0, 1.5)).unwrap();
        for x in sol.nodes() {
            assert_abs_diff_eq!(x[0], 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn step_condition_is_enforced() {
        let a = LinearOperator::scalar(-2.0, 2.0).unwrap();
        assert!(matches!(
            solve_scheme(&a, &disc(1.0, 2, 0.0, 1.0)),
            Err(Error::StepSizeCondition { .. })
        ));
    }

    #[test]
    fn difference_matrix_example() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let s = solve_scheme(&a, &disc(1.0, 2, 0.0, 1.0)).unwrap();
        let h = solve_scheme(&a, &disc(1.0, 4, 0.0, 1.0)).unwrap();
        let m = difference_matrix(&s, &h, &s1());
        assert_eq!(m.shape(), (3, 5));
        assert_abs_diff_eq!(m[(2, 4)], (4.0 / 9.0 - 0.8f64.powi(4)).abs(), epsilon = 1e-15);
        assert_abs_diff_eq!(m[(2, 4)], 0.034844, epsilon = 1e-6);
        assert_eq!(m[(0, 0)], 0.0);
        let back = difference_matrix(&h, &s, &s1());
        assert_eq!(back, m.transpose());
        let own = difference_matrix(&s, &s, &s1());
        assert!((0..3).all(|i| own[(i, i)] == 0.0));
    }

    #[test]
    fn contraction_towards_equilibrium() {
        for norm in NormKind::ALL {
            let space = NormedSpace::new(2, norm).unwrap();
            let a = LinearOperator::diagonal(&[1.0, 0.0], 0.0, &space).unwrap();
            let p = Partition::uniform(3.0, 9).unwrap();
            let d = Discretization::new(
                StepFunction::constant(p, State::zeros(2)),
                State::from_column_slice(&[2.0, -1.0]),
            )
            .unwrap();
            let sol = solve_scheme(&a, &d).unwrap();
            let eq = State::from_column_slice(&[0.0, 5.0]);
            let dists: Vec<f64> = sol.nodes().iter().map(|x| space.dist(x, &eq)).collect();
            assert!(dists.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
    }

    #[test]
    fn linear_refinement_gaps_shrink() {
        let a = LinearOperator::scalar(1.0, 0.0).unwrap();
        let f = StepFunction::constant(Partition::uniform(1.0, 1).unwrap(), v1(0.0));
        let study = euler_solution(&a, &f, &v1(1.0), 1, 9, &s1()).unwrap();
        assert!(study.gaps_decrease_from(3, 0.0));
        assert!(study.finest_gap() < 1e-3);
        for l in &study.levels {
            if let (Some(g), Some(b)) = (l.gap_to_next, l.gap_bound) {
                assert!(g <= b);
            }
        }
    }

    #[test]
    fn equilibrium_refinement_has_zero_gaps() {
        let a = SignGraph::new(1);
        let f = StepFunction::constant(Partition::uniform(1.0, 1).unwrap(), v1(0.3));
        let study = euler_solution(&a, &f, &v1(0.0), 0, 6, &s1()).unwrap();
        assert!(study.levels.iter().filter_map(|l| l.gap_to_next).all(|g| g == 0.0));
    }

    #[test]
    fn sign_graph_matches_exact_solution() {
        let a = SignGraph::new(1);
        let f = StepFunction::constant(Partition::uniform(2.0, 1).unwrap(), v1(0.0));
        let k_max = 10;
        let study = euler_solution(&a, &f, &v1(1.0), 2, k_max, &s1()).unwrap();
        let fine = &study.finest().trajectory;
        let err = (0..=4000)
            .map(|m| {
                let t = 2.0 * f64::from(m) / 4000.0;
                (fine.eval(t)[0] - (1.0 - t).max(0.0)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 2.0 * 0.5f64.powi(k_max as i32), "{err}");
    }
}
