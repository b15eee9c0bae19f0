//! The comparison density `ρ^{i,j}` on `[-1, T]²`.
//!
//! `ρ^{i,j}` is piecewise constant on the product cells of the two partitions,
//! where each partition is extended by the strip `[-1, 0)`. Cell index `-1`
//! denotes that strip throughout this module.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, ExtendedStep, Partition};
use crate::space::NormedSpace;

/// Start and width of cell `k ∈ {-1, 0, …, N-1}`.
fn cell(p: &Partition, k: isize) -> (f64, f64) {
    if k < 0 {
        (-1.0, 1.0)
    } else {
        let k = k as usize;
        (p.time(k), p.step(k))
    }
}

/// `h_k`, zero outside `0..N`.
fn step_or_zero(p: &Partition, k: usize) -> f64 {
    if k < p.len() {
        p.step(k)
    } else {
        0.0
    }
}

/// The three recursion weights `((1 - ĥ/h)⁺, (1 - h/ĥ)⁺, (h∧ĥ)/(h∨ĥ))` and `1/(h∨ĥ)`.
pub fn recursion_weights(h: f64, hh: f64) -> [f64; 4] {
    let hi = h.max(hh);
    [
        (1.0 - hh / h).max(0.0),
        (1.0 - h / hh).max(0.0),
        h.min(hh) / hi,
        1.0 / hi,
    ]
}

/// Cell densities of `ρ^{i,j}`; storage index `k + 1` for cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    rows: Arc<Partition>,
    cols: Arc<Partition>,
    i: usize,
    j: usize,
    cells: DMatrix<f64>,
}

impl DensityGrid {
    fn zeros(rows: Arc<Partition>, cols: Arc<Partition>, i: usize, j: usize) -> Self {
        let cells = DMatrix::zeros(rows.len() + 1, cols.len() + 1);
        DensityGrid { rows, cols, i, j, cells }
    }

    pub fn rows(&self) -> &Partition {
        &self.rows
    }

    pub fn cols(&self) -> &Partition {
        &self.cols
    }

    pub fn indices(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    /// Density on cell `(k, l)`, `k, l ≥ -1`.
    pub fn get(&self, k: isize, l: isize) -> f64 {
        self.cells[((k + 1) as usize, (l + 1) as usize)]
    }

    /// Raw storage, shifted by one in both indices.
    pub fn cells(&self) -> &DMatrix<f64> {
        &self.cells
    }

    /// `∫∫ ρ^{i,j}` over `[-1, T]²`.
    pub fn total_mass(&self) -> f64 {
        let mut acc = 0.0;
        for k in -1..self.rows.len() as isize {
            for l in -1..self.cols.len() as isize {
                acc += self.get(k, l) * cell(&self.rows, k).1 * cell(&self.cols, l).1;
            }
        }
        acc
    }

    /// Mass on `[0, T]²`.
    pub fn interior_mass(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.rows.len() {
            for l in 0..self.cols.len() {
                acc += self.cells[(k + 1, l + 1)] * self.rows.step(k) * self.cols.step(l);
            }
        }
        acc
    }

    /// Heatmap rows `t,t_end,t_hat,t_hat_end,density` for every nonzero cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "t_end", "t_hat", "t_hat_end", "density"])?;
        for k in -1..self.rows.len() as isize {
            for l in -1..self.cols.len() as isize {
                let d = self.get(k, l);
                if d != 0.0 {
                    let (a, wa) = cell(&self.rows, k);
                    let (b, wb) = cell(&self.cols, l);
                    wtr.write_record([
                        fmt_f64(a),
                        fmt_f64(a + wa),
                        fmt_f64(b),
                        fmt_f64(b + wb),
                        fmt_f64(d),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_indices(rows: &Partition, cols: &Partition, i: usize, j: usize) -> Result<()> {
    if i > rows.len() || j > cols.len() {
        return Err(Error::IndexOutOfRange(format!(
            "(i, j) = ({i}, {j}) for N = {}, N̂ = {}",
            rows.len(),
            cols.len()
        )));
    }
    Ok(())
}

fn check_horizons(rows: &Partition, cols: &Partition) -> Result<()> {
    if (rows.horizon() - cols.horizon()).abs() > 1e-12 * rows.horizon().max(1.0) {
        return Err(Error::HorizonMismatch(rows.horizon(), cols.horizon()));
    }
    Ok(())
}

/// Runs the forward recursion for all `(i', j') ≤ (i_max, j_max)` in row-major
/// order, handing every grid to `visit`.
pub fn forward_visit<F>(
    rows: &Arc<Partition>,
    cols: &Arc<Partition>,
    i_max: usize,
    j_max: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&DensityGrid),
{
    check_horizons(rows, cols)?;
    check_indices(rows, cols, i_max, j_max)?;
    let mut prev: Vec<DensityGrid> = Vec::with_capacity(j_max + 1);
    for jj in 0..=j_max {
        let mut g = DensityGrid::zeros(rows.clone(), cols.clone(), 0, jj);
        for l in 0..jj {
            g.cells[(0, l + 1)] = 1.0;
        }
        visit(&g);
        prev.push(g);
    }
    for ii in 1..=i_max {
        let mut cur: Vec<DensityGrid> = Vec::with_capacity(j_max + 1);
        let mut g0 = DensityGrid::zeros(rows.clone(), cols.clone(), ii, 0);
        for k in 0..ii {
            g0.cells[(k + 1, 0)] = 1.0;
        }
        visit(&g0);
        cur.push(g0);
        let h = rows.step(ii - 1);
        for jj in 1..=j_max {
            let hh = cols.step(jj - 1);
            let [w_left, w_down, w_diag, w_cell] = recursion_weights(h, hh);
            // ρ^{ii,jj} from ρ^{ii,jj-1}, ρ^{ii-1,jj}, ρ^{ii-1,jj-1}
            let mut cells = &cur[jj - 1].cells * w_left;
            if w_down != 0.0 {
                cells += &prev[jj].cells * w_down;
            }
            cells += &prev[jj - 1].cells * w_diag;
            cells[(ii, jj)] += w_cell;
            let g = DensityGrid {
                rows: rows.clone(),
                cols: cols.clone(),
                i: ii,
                j: jj,
                cells,
            };
            visit(&g);
            cur.push(g);
        }
        prev = cur;
    }
    Ok(())
}

/// `ρ^{i,j}` by the forward recursion from the strip base cases.
pub fn density_forward(rows: &Arc<Partition>, cols: &Arc<Partition>, i: usize, j: usize) -> Result<DensityGrid> {
    let mut out = None;
    forward_visit(rows, cols, i, j, |g| {
        if g.indices() == (i, j) {
            out = Some(g.clone());
        }
    })?;
    Ok(out.expect("target grid visited"))
}

/// Interior cells of `ρ^{i,j}` by the backward recursion in `(k, l)`.
///
/// Entry `(k, l)` of the result is the density on `[t_k, t_{k+1}) × [t̂_l, t̂_{l+1})`.
/// Step sizes and densities indexed past the partition end count as zero.
pub fn density_direct(rows: &Partition, cols: &Partition, i: usize, j: usize) -> Result<DMatrix<f64>> {
    check_horizons(rows, cols)?;
    check_indices(rows, cols, i, j)?;
    let (n, nh) = (rows.len(), cols.len());
    let mut r = DMatrix::<f64>::zeros(n + 1, nh + 1);
    for k in (0..n).rev() {
        for l in (0..nh).rev() {
            let (h_k, hh_l) = (rows.step(k), cols.step(l));
            let (h_k1, hh_l1) = (step_or_zero(rows, k + 1), step_or_zero(cols, l + 1));
            let delta = if i == k + 1 && j == l + 1 { 1.0 } else { 0.0 };
            let acc = (h_k - hh_l1).max(0.0) * r[(k, l + 1)]
                + (hh_l - h_k1).max(0.0) * r[(k + 1, l)]
                + h_k1.min(hh_l1) * r[(k + 1, l + 1)]
                + delta;
            r[(k, l)] = acc / h_k.max(hh_l);
        }
    }
    Ok(r.rows(0, n).columns(0, nh).into_owned())
}

/// Marginal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// `τ ↦ ∫ ρ(τ, τ̂) dτ̂`.
    Row,
    /// `τ̂ ↦ ∫ ρ(τ, τ̂) dτ`.
    Column,
}

/// A marginal integral, constant on each cell `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassProfile {
    pub axis: Axis,
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    pub values: Vec<f64>,
}

impl MassProfile {
    /// Worst deviation from `1_{[0, t_end)}` on the nonnegative cells.
    pub fn indicator_error(&self, t_end: f64) -> f64 {
        self.starts
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| **s >= 0.0)
            .map(|(s, v)| (v - if *s < t_end { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Value on the strip `[-1, 0)`.
    pub fn strip(&self) -> f64 {
        self.values[0]
    }
}

pub fn mass_profile(g: &DensityGrid, axis: Axis) -> MassProfile {
    let (along, across) = match axis {
        Axis::Row => (&g.rows, &g.cols),
        Axis::Column => (&g.cols, &g.rows),
    };
    let mut starts = Vec::with_capacity(along.len() + 1);
    let mut ends = Vec::with_capacity(along.len() + 1);
    let mut values = Vec::with_capacity(along.len() + 1);
    for k in -1..along.len() as isize {
        let (a, w) = cell(along, k);
        let mut acc = 0.0;
        for l in -1..across.len() as isize {
            let d = match axis {
                Axis::Row => g.get(k, l),
                Axis::Column => g.get(l, k),
            };
            acc += d * cell(across, l).1;
        }
        starts.push(a);
        ends.push(a + w);
        values.push(acc);
    }
    MassProfile {
        axis,
        starts,
        ends,
        values,
    }
}

/// Split of a cell `[a, a + w)` at `t`: `(|[a, a+w) ∩ (-∞, t)|, |[a, a+w) ∩ [t, ∞)|)`.
fn split(a: f64, w: f64, t: f64) -> (f64, f64) {
    let below = (t - a).clamp(0.0, w);
    (below, w - below)
}

/// `κ_{i,j}(t)`: mass of `ρ^{i,j}` on `([-1, t) × [t, T]) ∪ ([t, T] × [-1, t))`.
pub fn concentration_profile(g: &DensityGrid, t: f64) -> f64 {
    let rows: Vec<(f64, f64)> = (-1..g.rows.len() as isize)
        .map(|k| {
            let (a, w) = cell(&g.rows, k);
            split(a, w, t)
        })
        .collect();
    let cols: Vec<(f64, f64)> = (-1..g.cols.len() as isize)
        .map(|l| {
            let (a, w) = cell(&g.cols, l);
            split(a, w, t)
        })
        .collect();
    let mut acc = 0.0;
    for (rk, (rb, ra)) in rows.iter().enumerate() {
        for (cl, (cb, ca)) in cols.iter().enumerate() {
            let d = g.cells[(rk, cl)];
            if d != 0.0 {
                acc += d * (rb * ca + ra * cb);
            }
        }
    }
    acc
}

/// `√((t_i - t̂_j)² + |π|(t_i ∧ (t_i - t)⁺) + |π̂|(t̂_j ∧ (t̂_j - t)⁺))`.
pub fn concentration_bound(rows: &Partition, cols: &Partition, i: usize, j: usize, t: f64) -> f64 {
    let (ti, tj) = (rows.time(i), cols.time(j));
    let a = ti.min((ti - t).max(0.0));
    let b = tj.min((tj - t).max(0.0));
    ((ti - tj).powi(2) + rows.mesh() * a + cols.mesh() * b).sqrt()
}

/// `√((t_i - t̂_j)² + |π| t_i + |π̂| t̂_j)`.
pub fn sqrt_term(rows: &Partition, cols: &Partition, i: usize, j: usize) -> f64 {
    concentration_bound(rows, cols, i, j, 0.0)
}

/// `√((a - b)² + ac) - (a + b - 2ab/c)` for `a, b, c > 0`.
pub fn abc_slack(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("abc inequality needs positive inputs, got ({a}, {b}, {c})")));
    }
    Ok(((a - b).powi(2) + a * c).sqrt() - (a + b - 2.0 * a * b / c))
}

/// `a + b - 2ab/c ≤ √((a - b)² + ac)` with tolerance `1e-12`.
pub fn abc_inequality(a: f64, b: f64, c: f64) -> Result<bool> {
    Ok(abc_slack(a, b, c)? >= -1e-12)
}

/// Overlap lengths of the cells `-1..N` of `p` with the pieces of `g`.
fn overlaps(p: &Partition, pieces: &[(f64, f64, &crate::space::State)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p.len() + 1, pieces.len());
    for k in -1..p.len() as isize {
        let (a, w) = cell(p, k);
        let b = a + w;
        for (q, (s, e, _)) in pieces.iter().enumerate() {
            let len = b.min(*e) - a.max(*s);
            if len > 0.0 {
                m[((k + 1) as usize, q)] = len;
            }
        }
    }
    m
}

/// `I_{k,l} = ∫_{cell k} ∫_{cell l} ‖g(τ) - g(τ̂)‖ dτ̂ dτ` for all cell pairs, exactly.
pub fn cell_pair_integrals(
    rows: &Partition,
    cols: &Partition,
    gfun: &ExtendedStep,
    space: &NormedSpace,
) -> Result<DMatrix<f64>> {
    check_horizons(rows, cols)?;
    check_horizons(rows, gfun.body.partition())?;
    let pieces = gfun.pieces();
    let np = pieces.len();
    let dist = DMatrix::from_fn(np, np, |a, b| space.dist(pieces[a].2, pieces[b].2));
    let or = overlaps(rows, &pieces);
    let oc = overlaps(cols, &pieces);
    Ok(&or * dist * oc.transpose())
}

/// `∫∫ ρ^{i,j}(τ, τ̂) ‖g(τ) - g(τ̂)‖ dτ̂ dτ`.
pub fn weighted_double_integral(g: &DensityGrid, gfun: &ExtendedStep, space: &NormedSpace) -> Result<f64> {
    let ints = cell_pair_integrals(&g.rows, &g.cols, gfun, space)?;
    Ok(g.cells.component_mul(&ints).sum())
}

/// The double integral for every `(i, j)` at once.
///
/// The integral is linear in `ρ`, so it obeys the same recursion as the
/// density with the cell indicator replaced by its cell integral.
pub fn weighted_integrals_all(rows: &Partition, cols: &Partition, cell_ints: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, nh) = (rows.len(), cols.len());
    let mut w = DMatrix::zeros(n + 1, nh + 1);
    for i in 1..=n {
        w[(i, 0)] = w[(i - 1, 0)] + cell_ints[(i, 0)];
    }
    for j in 1..=nh {
        w[(0, j)] = w[(0, j - 1)] + cell_ints[(0, j)];
    }
    for i in 1..=n {
        for j in 1..=nh {
            let [a, b, c, d] = recursion_weights(rows.step(i - 1), cols.step(j - 1));
            w[(i, j)] = a * w[(i, j - 1)] + b * w[(i - 1, j)] + c * w[(i - 1, j - 1)] + d * cell_ints[(i, j)];
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StepFunction;
    use crate::space::{NormKind, State};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn part(ts: &[f64]) -> Arc<Partition> {
        Arc::new(Partition::new(ts.to_vec()).unwrap())
    }

    fn random_partition(rng: &mut ChaCha8Rng, t: f64, n: usize) -> Arc<Partition> {
        let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..t)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut times = vec![0.0];
        for c in cuts {
            if c > *times.last().unwrap() + 1e-6 && c < t - 1e-6 {
                times.push(c);
            }
        }
        times.push(t);
        Arc::new(Partition::new(times).unwrap())
    }

    #[test]
    fn single_cell() {
        let p = part(&[0.0, 2.0]);
        let g = density_forward(&p, &p, 1, 1).unwrap();
        assert_eq!(g.get(0, 0), 0.5);
        assert_eq!(g.get(-1, 0), 0.0);
        assert_eq!(g.get(0, -1), 0.0);
        assert_eq!(g.get(-1, -1), 0.0);
        let d = density_direct(&p, &p, 1, 1).unwrap();
        assert_eq!(d[(0, 0)], 0.5);
    }

    #[test]
    fn base_cases() {
        let p = part(&[0.0, 0.3, 0.5, 1.0]);
        let q = part(&[0.0, 0.25, 1.0]);
        let g = density_forward(&p, &q, 2, 0).unwrap();
        for k in 0..3 {
            assert_eq!(g.get(k, -1), if k < 2 { 1.0 } else { 0.0 });
            for l in 0..2 {
                assert_eq!(g.get(k, l), 0.0);
            }
        }
        let z = density_forward(&p, &q, 0, 0).unwrap();
        assert!(z.cells().iter().all(|x| *x == 0.0));
        assert!(density_forward(&p, &q, 4, 0).is_err());
        assert!(density_direct(&p, &q, 0, 3).is_err());
    }

    #[test]
    fn uniform_two_by_two() {
        let p = Arc::new(Partition::uniform(1.0, 2).unwrap());
        let f = density_forward(&p, &p, 2, 2).unwrap();
        let d = density_direct(&p, &p, 2, 2).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                assert_abs_diff_eq!(f.get(k as isize, l as isize), d[(k, l)], epsilon = 1e-12);
            }
        }
        // equal steps: ρ^{i+1,j+1} = ρ^{i,j} + cell/h, so the diagonal carries 1/h
        assert_abs_diff_eq!(d[(0, 0)], 2.0, epsilon = 1e-15);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn support_of_direct() {
        let p = part(&[0.0, 0.2, 0.7, 1.0]);
        let q = part(&[0.0, 0.5, 0.6, 0.9, 1.0]);
        let d = density_direct(&p, &q, 2, 3).unwrap();
        for k in 0..3 {
            for l in 0..4 {
                if k >= 2 || l >= 3 {
                    assert_eq!(d[(k, l)], 0.0);
                }
            }
        }
    }

    #[test]
    fn forward_equals_direct_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t = rng.gen_range(0.5..2.0);
            let n = rng.gen_range(1..12);
            let p = random_partition(&mut rng, t, n);
            let n = rng.gen_range(1..12);
            let q = random_partition(&mut rng, t, n);
            forward_visit(&p, &q, p.len(), q.len(), |g| {
                let (i, j) = g.indices();
                let d = density_direct(&p, &q, i, j).unwrap();
                for k in 0..p.len() {
                    for l in 0..q.len() {
                        assert!((g.get(k as isize, l as isize) - d[(k, l)]).abs() <= 1e-10);
                    }
                }
            })
            .unwrap();
        }
    }

    #[test]
    fn marginals_and_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = random_partition(&mut rng, 1.5, 9);
            let q = random_partition(&mut rng, 1.5, 6);
            forward_visit(&p, &q, p.len(), q.len(), |g| {
                let (i, j) = g.indices();
                let (ti, tj) = (p.time(i), q.time(j));
                let row = mass_profile(g, Axis::Row);
                let col = mass_profile(g, Axis::Column);
                assert!(row.indicator_error(ti) <= 1e-10);
                assert!(col.indicator_error(tj) <= 1e-10);
                assert!(row.strip() <= tj + 1e-10);
                assert!(col.strip() <= ti + 1e-10);
                let m = g.total_mass();
                assert!(m >= ti.max(tj) - 1e-10 && m <= ti + tj + 1e-10);
                assert!(g.interior_mass() <= ti.min(tj) + 1e-10);
                assert!(g.cells().iter().all(|x| *x >= 0.0));
                assert_eq!(g.get(-1, -1), 0.0);
            })
            .unwrap();
        }
    }

    #[test]
    fn kappa_examples() {
        let p = part(&[0.0, 1.0]);
        let g = density_forward(&p, &p, 1, 1).unwrap();
        let k = concentration_profile(&g, 0.5);
        assert_abs_diff_eq!(k, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(concentration_bound(&p, &p, 1, 1, 0.5), 1.0, epsilon = 1e-15);
        assert_eq!(concentration_profile(&g, 1.0), 0.0);
        let q = part(&[0.0, 0.4, 1.0]);
        let g = density_forward(&q, &p, 2, 0).unwrap();
        assert_abs_diff_eq!(concentration_profile(&g, 0.0), 1.0, epsilon = 1e-15);
        let g = density_forward(&q, &p, 1, 0).unwrap();
        assert_abs_diff_eq!(concentration_profile(&g, 0.0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn abc() {
        assert!(abc_inequality(1.0, 1.0, 4.0).unwrap());
        assert_abs_diff_eq!(abc_slack(1.0, 1.0, 4.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(abc_inequality(1.0, 1e6, 1.0).unwrap());
        assert!(abc_inequality(3.0, 3.0, 12.0).unwrap());
        assert!(abc_slack(0.0, 1.0, 1.0).is_err());
        assert!(abc_slack(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn double_integral_examples() {
        let space = NormedSpace::new(1, NormKind::L2).unwrap();
        let p = part(&[0.0, 1.0]);
        let g = density_forward(&p, &p, 1, 1).unwrap();
        let body = StepFunction::constant(p.clone(), State::from_element(1, 0.0));
        let gfun = ExtendedStep::new(State::from_element(1, 3.0), body.clone()).unwrap();
        assert_eq!(weighted_double_integral(&g, &gfun, &space).unwrap(), 0.0);
        let flat = ExtendedStep::new(State::from_element(1, 0.0), body).unwrap();
        let q = part(&[0.0, 0.3, 1.0]);
        let g = density_forward(&q, &p, 2, 1).unwrap();
        assert_eq!(weighted_double_integral(&g, &flat, &space).unwrap(), 0.0);
    }

    #[test]
    fn recursion_of_integrals_matches_grids() {
        let space = NormedSpace::new(2, NormKind::L1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = random_partition(&mut rng, 1.0, 7);
            let q = random_partition(&mut rng, 1.0, 5);
            let breaks = [0.13, 0.5, 0.77];
            let vals: Vec<State> = (0..4)
                .map(|_| State::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let body = StepFunction::from_breaks(1.0, &breaks, vals).unwrap();
            let gfun = ExtendedStep::new(State::from_column_slice(&[0.5, -0.2]), body).unwrap();
            let ints = cell_pair_integrals(&p, &q, &gfun, &space).unwrap();
            let all = weighted_integrals_all(&p, &q, &ints);
            forward_visit(&p, &q, p.len(), q.len(), |g| {
                let (i, j) = g.indices();
                let direct = weighted_double_integral(g, &gfun, &space).unwrap();
                assert!((direct - all[(i, j)]).abs() <= 1e-12 * (1.0 + direct));
                let bound = sqrt_term(&p, &q, i, j) * gfun.ess_var(&space);
                assert!(direct <= bound + 1e-10);
            })
            .unwrap();
        }
    }

    #[test]
    fn heatmap_single_row() {
        let p = part(&[0.0, 2.0]);
        let g = density_forward(&p, &p, 1, 1).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with(",0.5"));
    }
}
