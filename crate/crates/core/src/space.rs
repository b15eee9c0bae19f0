//! Finite-dimensional normed state spaces.
//!
//! States are plain `nalgebra` column vectors. A [`NormedSpace`] carries the
//! dimension and the choice of `p ∈ {1, 2, ∞}`; every norm-dependent quantity
//! (norms, brackets, accretivity samples) goes through it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of the state space.
pub type State = DVector<f64>;

/// Relative tolerance deciding membership in the `ℓ∞` argmax set.
const ARGMAX_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    #[serde(alias = "inf", alias = "max")]
    LInf,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::L1, NormKind::L2, NormKind::LInf];

    pub fn label(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::LInf => "linf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormedSpace {
    pub dim: usize,
    pub norm: NormKind,
}

/// Result of the difference-quotient evaluation of the bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientEstimate {
    /// Quotient at the smallest step.
    pub value: f64,
    /// Quotients at the probed steps, largest step first.
    pub quotients: [f64; 3],
    /// Whether the quotients decrease, up to rounding, as the step shrinks.
    pub monotone: bool,
}

/// Outcome of sampling the accretivity inequality on a finite set of graph pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccretivityReport {
    pub omega: f64,
    pub pairs: usize,
    pub combinations: usize,
    /// Minimum of `[u - û, v - v̂] + ω‖u - û‖` over distinct pairs (`+∞` if fewer than two pairs).
    pub min_value: f64,
    /// Set when `min_value < -1e-10`.
    pub violation: bool,
}

impl NormedSpace {
    pub fn new(dim: usize, norm: NormKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("state dimension must be at least 1".into()));
        }
        Ok(NormedSpace { dim, norm })
    }

    pub fn zero(&self) -> State {
        State::zeros(self.dim)
    }

    pub fn check(&self, x: &State) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `‖x‖` without a dimension check. Callers inside the crate guarantee sizes.
    #[inline]
    pub fn norm_unchecked(&self, x: &State) -> f64 {
        match self.norm {
            NormKind::L1 => x.iter().map(|c| c.abs()).sum(),
            NormKind::L2 => x.norm(),
            NormKind::LInf => x.iter().fold(0.0_f64, |m, c| m.max(c.abs())),
        }
    }

    pub fn norm(&self, x: &State) -> Result<f64> {
        self.check(x)?;
        Ok(self.norm_unchecked(x))
    }

    /// `‖x - y‖`.
    #[inline]
    pub fn dist(&self, x: &State, y: &State) -> f64 {
        self.norm_unchecked(&(x - y))
    }

    /// The bracket `[u, v] = inf_{λ>0} (‖u + λv‖ - ‖u‖) / λ`, i.e. the right
    /// directional derivative of the norm at `u` in direction `v`.
    pub fn bracket(&self, u: &State, v: &State) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.bracket_unchecked(u, v))
    }

    pub fn bracket_unchecked(&self, u: &State, v: &State) -> f64 {
        match self.norm {
            NormKind::L2 => {
                let nu = u.norm();
                if nu == 0.0 {
                    v.norm()
                } else {
                    u.dot(v) / nu
                }
            }
            NormKind::L1 => u
                .iter()
                .zip(v.iter())
                .map(|(&ui, &vi)| if ui == 0.0 { vi.abs() } else { ui.signum() * vi })
                .sum(),
            NormKind::LInf => {
                let nu = self.norm_unchecked(u);
                if nu == 0.0 {
                    return self.norm_unchecked(v);
                }
                let cutoff = nu * (1.0 - ARGMAX_REL_TOL);
                u.iter()
                    .zip(v.iter())
                    .filter(|(ui, _)| ui.abs() >= cutoff)
                    .map(|(ui, vi)| ui.signum() * vi)
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Difference quotient `(‖u + λv‖ - ‖u‖) / λ`.
    pub fn bracket_quotient(&self, u: &State, v: &State, lambda: f64) -> f64 {
        let w = u + v * lambda;
        (self.norm_unchecked(&w) - self.norm_unchecked(u)) / lambda
    }

    /// Numeric bracket from the quotient at `λ ∈ {1e-5, 1e-6, 1e-7}`.
    pub fn bracket_numeric(&self, u: &State, v: &State) -> Result<QuotientEstimate> {
        self.check(u)?;
        self.check(v)?;
        let quotients = [1e-5, 1e-6, 1e-7].map(|l| self.bracket_quotient(u, v, l));
        let tol = 4.0 * f64::EPSILON * self.norm_unchecked(u) / 1e-7 + 1e-12;
        let monotone = quotients[1] <= quotients[0] + tol && quotients[2] <= quotients[1] + tol;
        Ok(QuotientEstimate {
            value: quotients[2],
            quotients,
            monotone,
        })
    }

    /// Minimum of `[u - û, v - v̂] + ω‖u - û‖` over all ordered pairs of the sample.
    pub fn check_accretive_sample(
        &self,
        omega: f64,
        pairs: &[(State, State)],
    ) -> Result<AccretivityReport> {
        for (u, v) in pairs {
            self.check(u)?;
            self.check(v)?;
        }
        let mut min_value = f64::INFINITY;
        let mut combinations = 0;
        for (a, (u, v)) in pairs.iter().enumerate() {
            for (b, (uh, vh)) in pairs.iter().enumerate() {
                if a == b {
                    continue;
                }
                let du = u - uh;
                let dv = v - vh;
                let value = self.bracket_unchecked(&du, &dv) + omega * self.norm_unchecked(&du);
                min_value = min_value.min(value);
                combinations += 1;
            }
        }
        Ok(AccretivityReport {
            omega,
            pairs: pairs.len(),
            combinations,
            min_value,
            violation: min_value < -1e-10,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(dim: usize, norm: NormKind) -> NormedSpace {
        NormedSpace::new(dim, norm).unwrap()
    }

    fn v(xs: &[f64]) -> State {
        State::from_column_slice(xs)
    }

    #[test]
    fn norms() {
        assert_eq!(s(2, NormKind::L2).norm(&v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(s(2, NormKind::LInf).norm(&v(&[1.0, -2.0])).unwrap(), 2.0);
        assert_eq!(s(2, NormKind::L1).norm(&v(&[1.0, -2.0])).unwrap(), 3.0);
    }

    #[test]
    fn dimension_mismatch() {
        let err = s(3, NormKind::L2).norm(&v(&[1.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, got: 1 });
        assert!(s(2, NormKind::L1).bracket(&v(&[1.0, 2.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn bracket_examples() {
        let b = s(2, NormKind::LInf).bracket(&v(&[1.0, 0.5]), &v(&[2.0, -3.0])).unwrap();
        assert_eq!(b, 2.0);
        let b = s(3, NormKind::L1)
            .bracket(&v(&[1.0, -1.0, 0.0]), &v(&[1.0, 2.0, -3.0]))
            .unwrap();
        assert_eq!(b, 2.0);
        let b = s(2, NormKind::L2).bracket(&v(&[3.0, 4.0]), &v(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(b, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn bracket_at_zero_is_norm() {
        for norm in NormKind::ALL {
            let sp = s(3, norm);
            let w = v(&[0.5, -2.0, 1.0]);
            assert_eq!(sp.bracket(&sp.zero(), &w).unwrap(), sp.norm(&w).unwrap());
        }
    }

    #[test]
    fn linf_ties_take_the_max() {
        let sp = s(2, NormKind::LInf);
        let b = sp.bracket(&v(&[1.0, -1.0]), &v(&[0.5, -3.0])).unwrap();
        assert_eq!(b, 3.0);
    }

    #[test]
    fn accretive_samples() {
        let sp = s(1, NormKind::L2);
        // identity
        let pairs: Vec<_> = [-2.0, 0.3, 1.5].iter().map(|&x| (v(&[x]), v(&[x]))).collect();
        let r = sp.check_accretive_sample(0.0, &pairs).unwrap();
        assert!(r.min_value >= 0.0 && !r.violation);
        // sign graph
        let pairs = vec![(v(&[1.0]), v(&[1.0])), (v(&[-1.0]), v(&[-1.0]))];
        let r = sp.check_accretive_sample(0.0, &pairs).unwrap();
        assert_eq!(r.min_value, 2.0);
        // u -> -u with omega = 1
        let pairs: Vec<_> = [-2.0, 0.3, 1.5].iter().map(|&x| (v(&[x]), v(&[-x]))).collect();
        let r = sp.check_accretive_sample(1.0, &pairs).unwrap();
        assert!(r.min_value.abs() < 1e-12 && !r.violation);
        let r = sp.check_accretive_sample(0.0, &pairs).unwrap();
        assert!(r.violation);
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, n)
    }

    fn norm_strategy() -> impl Strategy<Value = NormKind> {
        prop_oneof![Just(NormKind::L1), Just(NormKind::L2), Just(NormKind::LInf)]
    }

    proptest! {
        #[test]
        fn norm_axioms(norm in norm_strategy(), x in vec_strategy(4), y in vec_strategy(4), a in -3.0..3.0f64) {
            let sp = s(4, norm);
            let (x, y) = (v(&x), v(&y));
            let nx = sp.norm(&x).unwrap();
            prop_assert!(nx >= 0.0);
            prop_assert!(sp.norm(&(&x + &y)).unwrap() <= nx + sp.norm(&y).unwrap() + 1e-12);
            prop_assert!((sp.norm(&(&x * a)).unwrap() - a.abs() * nx).abs() <= 1e-12 * (1.0 + nx));
            prop_assert_eq!(sp.norm(&sp.zero()).unwrap(), 0.0);
        }

        #[test]
        fn bracket_properties(norm in norm_strategy(), u in vec_strategy(3), x in vec_strategy(3), y in vec_strategy(3), a in 0.0..4.0f64) {
            let sp = s(3, norm);
            let (u, x, y) = (v(&u), v(&x), v(&y));
            let bx = sp.bracket(&u, &x).unwrap();
            prop_assert!(bx.abs() <= sp.norm(&x).unwrap() + 1e-12);
            let bxy = sp.bracket(&u, &(&x + &y)).unwrap();
            prop_assert!(bxy <= bx + sp.bracket(&u, &y).unwrap() + 1e-12);
            let bax = sp.bracket(&u, &(&x * a)).unwrap();
            prop_assert!((bax - a * bx).abs() <= 1e-12 * (1.0 + bx.abs() * a));
        }

        #[test]
        fn bracket_matches_quotient(norm in norm_strategy(), u in vec_strategy(3), w in vec_strategy(3)) {
            let sp = s(3, norm);
            let (u, w) = (v(&u), v(&w));
            prop_assume!(sp.norm(&u).unwrap() >= 0.1);
            let q = sp.bracket_quotient(&u, &w, 1e-7);
            let b = sp.bracket(&u, &w).unwrap();
            let curvature = 1e-7 * sp.norm(&w).unwrap().powi(2) / sp.norm(&u).unwrap();
            prop_assert!((q - b).abs() <= 1e-6 + curvature, "closed {} vs quotient {}", b, q);
            let est = sp.bracket_numeric(&u, &w).unwrap();
            prop_assert!(est.monotone);
        }
    }
}
