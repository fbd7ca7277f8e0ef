//! Independent reference computations: central finite differences, grid
//! minimization and exhaustive combinatorial proxes.
//!
//! Nothing here shares a code path with the operators it checks. In
//! particular the rank oracle carries its own one-sided Jacobi SVD instead of
//! going through [`crate::Real::svd`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{PlirlsError, Result};
use crate::extended::ExtReal;
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// One axis of a uniform grid `lo, lo + step, …, ≤ hi`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        GridSpec { lo, hi, step }
    }

    fn count(&self) -> Result<usize> {
        if !(self.step > 0.0) || !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(PlirlsError::invalid(
                "grid",
                format!("empty or malformed axis [{}, {}] step {}", self.lo, self.hi, self.step),
            ));
        }
        Ok(((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1)
    }

    fn at(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.step
    }
}

/// Result of a grid search.
#[derive(Debug, Clone)]
pub struct GridMinimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Another grid point more than two steps away attains the minimum to
    /// within `1e-9·(1+|value|)`: the grid cannot separate the minimizers.
    pub ambiguous: bool,
}

fn grid_search(axes: &[GridSpec], mut fun: impl FnMut(&[f64]) -> f64) -> Result<GridMinimum> {
    if axes.is_empty() || axes.len() > 3 {
        return Err(PlirlsError::invalid("grid", "grid oracles support 1 to 3 dimensions"));
    }
    let counts = axes.iter().map(GridSpec::count).collect::<Result<Vec<_>>>()?;
    let total: usize = counts.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut point = vec![0.0; axes.len()];
    let mut best = (f64::INFINITY, usize::MAX);
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..axes.len()).rev() {
            point[d] = axes[d].at(rem % counts[d]);
            rem /= counts[d];
        }
        let v = fun(&point);
        if v < best.0 {
            best = (v, flat);
        }
        values.push(v);
    }
    if best.1 == usize::MAX {
        return Err(PlirlsError::Numerical("objective is +inf on the whole grid".into()));
    }
    let index_of = |flat: usize| {
        let mut rem = flat;
        let mut idx = vec![0usize; axes.len()];
        for d in (0..axes.len()).rev() {
            idx[d] = rem % counts[d];
            rem /= counts[d];
        }
        idx
    };
    let best_idx = index_of(best.1);
    let tol = 1e-9 * (1.0 + best.0.abs());
    let ambiguous = values.iter().enumerate().any(|(flat, &v)| {
        v <= best.0 + tol && {
            let idx = index_of(flat);
            idx.iter().zip(&best_idx).any(|(a, b)| a.abs_diff(*b) > 2)
        }
    });
    let point = best_idx.iter().zip(axes).map(|(&j, ax)| ax.at(j)).collect();
    Ok(GridMinimum {
        point,
        value: best.0,
        ambiguous,
    })
}

/// Central-difference gradient with per-coordinate step `step·max(1, |xⱼ|)`.
pub fn fd_gradient<T: Real>(
    fun: impl Fn(ArrayView1<'_, T>) -> T,
    x: ArrayView1<'_, T>,
    step: T,
) -> Result<Array1<T>> {
    if !(step > T::zero()) {
        return Err(PlirlsError::invalid("step", "must be positive"));
    }
    let mut probe = x.to_owned();
    let mut grad = Array1::zeros(x.len());
    let two = T::lit(2.0);
    for j in 0..x.len() {
        let h = step * T::one().max(x[j].abs());
        probe[j] = x[j] + h;
        let fp = fun(probe.view());
        probe[j] = x[j] - h;
        let fm = fun(probe.view());
        probe[j] = x[j];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(PlirlsError::NonFinite {
                what: "finite-difference evaluation",
                iteration: j,
            });
        }
        grad[j] = (fp - fm) / (two * h);
    }
    Ok(grad)
}

/// Grid argmin of `term(z) + (c/2)‖z − u‖²` for dimension ≤ 3.
pub fn prox_bruteforce(
    term: &dyn Fn(&[f64]) -> f64,
    u: &[f64],
    c: f64,
    grid: &[GridSpec],
) -> Result<GridMinimum> {
    if grid.len() != u.len() {
        return Err(PlirlsError::DimensionMismatch {
            what: "prox grid",
            expected: u.len(),
            found: grid.len(),
        });
    }
    grid_search(grid, |z| {
        let q: f64 = z.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
        term(z) + 0.5 * c * q
    })
}

/// Dense grid minimum of the smoothed objective for `n ≤ 2`.
pub fn grid_minimize_f<T: Real>(
    spec: &ProblemSpec<T>,
    bounds: &[(f64, f64)],
    step: f64,
) -> Result<(Array1<T>, ExtReal<T>)> {
    if spec.dim() > 2 || bounds.len() != spec.dim() {
        return Err(PlirlsError::invalid(
            "bounds",
            format!("grid minimization needs 1 or 2 dimensions matching the problem (n = {})", spec.dim()),
        ));
    }
    let axes: Vec<GridSpec> = bounds.iter().map(|&(lo, hi)| GridSpec::new(lo, hi, step)).collect();
    let mut buf = Array1::zeros(spec.dim());
    let best = grid_search(&axes, |z| {
        for (b, &v) in buf.iter_mut().zip(z) {
            *b = T::lit(v);
        }
        spec.smoothed_objective(buf.view())
            .map(|f| f.to_float().as_f64())
            .unwrap_or(f64::INFINITY)
    })?;
    let x = Array1::from_iter(best.point.iter().map(|&v| T::lit(v)));
    let value = spec.smoothed_objective(x.view())?;
    Ok((x, value))
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1u32 << n)).map(move |mask| (0..n).filter(|j| mask & (1 << j) != 0).collect())
}

/// Exhaustive prox of `λ‖·‖₀` over all supports (n ≤ 16). Ties go to the
/// smaller support.
pub fn bruteforce_l0(u: ArrayView1<'_, f64>, lambda: f64, c: f64) -> Array1<f64> {
    let n = u.len();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for s in subsets(n) {
        let dropped: f64 = (0..n).filter(|j| !s.contains(j)).map(|j| u[j] * u[j]).sum();
        let cost = lambda * s.len() as f64 + 0.5 * c * dropped;
        let better = match &best {
            None => true,
            Some((bc, bl, _)) => cost < *bc || (cost == *bc && s.len() < *bl),
        };
        if better {
            best = Some((cost, s.len(), s));
        }
    }
    let support = best.map(|b| b.2).unwrap_or_default();
    Array1::from_shape_fn(n, |j| if support.contains(&j) { u[j] } else { 0.0 })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive projection onto `{‖x‖₀ ≤ k}` over all size-`k` supports, in
/// lexicographic order (first minimizer wins).
pub fn bruteforce_sparsity(u: ArrayView1<'_, f64>, k: usize) -> Array1<f64> {
    let n = u.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in combinations(n, k.min(n)) {
        let dropped: f64 = (0..n).filter(|j| !s.contains(j)).map(|j| u[j] * u[j]).sum();
        if best.as_ref().is_none_or(|(b, _)| dropped < *b) {
            best = Some((dropped, s));
        }
    }
    let support = best.map(|b| b.1).unwrap_or_default();
    Array1::from_shape_fn(n, |j| if support.contains(&j) { u[j] } else { 0.0 })
}

/// One-sided Jacobi SVD for `m ≥ n`: returns the columns `U·diag(σ)` (so
/// `A = W Vᵀ`) and `V`.
fn jacobi_svd(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w.column(p).iter().map(|x| x * x).sum();
                let beta: f64 = w.column(q).iter().map(|x| x * x).sum();
                let gamma: f64 = w.column(p).iter().zip(w.column(q).iter()).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-16 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..m {
                    let (x, y) = (w[[i, p]], w[[i, q]]);
                    w[[i, p]] = cs * x - sn * y;
                    w[[i, q]] = sn * x + cs * y;
                }
                for i in 0..n {
                    let (x, y) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = cs * x - sn * y;
                    v[[i, q]] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (w, v)
}

/// Exhaustive prox of `λ·rank(·)`: evaluates every Eckart–Young truncation
/// and keeps the cheapest (ties go to the lower rank).
pub fn bruteforce_rank(m: ArrayView2<'_, f64>, lambda: f64, c: f64) -> Array2<f64> {
    let transpose = m.nrows() < m.ncols();
    let a = if transpose { m.t().to_owned() } else { m.to_owned() };
    let (w, v) = jacobi_svd(&a);
    let n = a.ncols();
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|j| (w.column(j).iter().map(|x| x * x).sum::<f64>(), j))
        .collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let mut best = (f64::INFINITY, 0usize);
    for r in 0..=n {
        let tail: f64 = order[r..].iter().map(|(s2, _)| s2).sum();
        let cost = lambda * r as f64 + 0.5 * c * tail;
        if cost < best.0 {
            best = (cost, r);
        }
    }
    let mut out = Array2::zeros(a.dim());
    for &(_, j) in &order[..best.1] {
        for i in 0..a.nrows() {
            for l in 0..n {
                out[[i, l]] += w[[i, j]] * v[[l, j]];
            }
        }
    }
    if transpose {
        out.t().to_owned()
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fd_gradient_examples() {
        let x = array![0.3, -1.2, 2.5];
        let g = fd_gradient(|z: ArrayView1<'_, f64>| 0.5 * z.dot(&z), x.view(), 1e-5).unwrap();
        for (a, b) in g.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let g0 = fd_gradient(|_: ArrayView1<'_, f64>| 4.0, x.view(), 1e-5).unwrap();
        assert!(g0.iter().all(|v| *v == 0.0));
        assert!(fd_gradient(|_: ArrayView1<'_, f64>| f64::NAN, x.view(), 1e-5).is_err());
    }

    #[test]
    fn prox_bruteforce_examples() {
        let grid = [GridSpec::new(-4.0, 4.0, 1e-3)];
        let l0 = |z: &[f64]| if z[0] != 0.0 { 1.0 } else { 0.0 };
        // f(0) + (c/2)u² = 4 versus λ = 1: keep u.
        let r = prox_bruteforce(&l0, &[2.0], 2.0, &grid).unwrap();
        assert!((r.point[0] - 2.0).abs() < 1e-9);
        let r = prox_bruteforce(&|z: &[f64]| z[0].abs(), &[3.0], 1.0, &grid).unwrap();
        assert!((r.point[0] - 2.0).abs() < 1e-9);
        assert!(!r.ambiguous);

        let flat = prox_bruteforce(&|_: &[f64]| 0.0, &[0.0], 0.0, &grid).unwrap();
        assert!(flat.ambiguous);
    }

    #[test]
    fn rank_oracle_diag() {
        let m = array![[3.0, 0.0], [0.0, 0.5]];
        let x = bruteforce_rank(m.view(), 1.0, 2.0);
        assert!((x[[0, 0]] - 3.0).abs() < 1e-14);
        assert!(x[[1, 1]].abs() < 1e-14 && x[[0, 1]].abs() < 1e-14);
    }

    #[test]
    fn jacobi_reconstructs_wide_matrix() {
        let m = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]];
        let x = bruteforce_rank(m.view(), 1e-9, 1.0);
        for (a, b) in x.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_grid_rejected() {
        assert!(prox_bruteforce(&|_: &[f64]| 0.0, &[0.0], 1.0, &[GridSpec::new(1.0, 0.0, 0.1)]).is_err());
    }
}
