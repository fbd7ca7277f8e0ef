//! Closed-form proximal maps and projections.
//!
//! Conventions: `prox_c^f(y) = argmin_z f(z) + (c/2)‖z − y‖²`. Set-valued
//! maps (ℓ0, sparsity projection, rank) return one element of the argmin set,
//! always the sparser / lower-rank one, and raise [`ProxResult::tie_broken`]
//! when the input sat on a boundary where several minimizers exist.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{PlirlsError, Result};
use crate::scalar::Real;

/// Largest matrix side accepted by the SVD-based operators.
pub const MAX_SVD_DIM: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult<P> {
    pub point: P,
    pub tie_broken: bool,
}

impl<P> ProxResult<P> {
    pub fn unique(point: P) -> Self {
        ProxResult {
            point,
            tie_broken: false,
        }
    }

    pub fn map<Q>(self, f: impl FnOnce(P) -> Q) -> ProxResult<Q> {
        ProxResult {
            point: f(self.point),
            tie_broken: self.tie_broken,
        }
    }
}

fn check_positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(PlirlsError::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_nonnegative<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(PlirlsError::invalid(name, format!("must be nonnegative and finite, got {v}")))
    }
}

fn check_svd_shape(rows: usize, cols: usize) -> Result<()> {
    if rows.max(cols) > MAX_SVD_DIM {
        return Err(PlirlsError::invalid(
            "matrix",
            format!("{rows}x{cols} exceeds the {MAX_SVD_DIM}x{MAX_SVD_DIM} SVD limit"),
        ));
    }
    Ok(())
}

#[inline]
fn soft<T: Real>(v: T, t: T) -> T {
    v.signum() * (v.abs() - t).max(T::zero())
}

/// Entrywise `sign(u)·max(|u| − threshold, 0)`: the prox of `λ‖·‖₁` with
/// `threshold = λ/c`.
pub fn soft_threshold<T: Real>(u: ArrayView1<'_, T>, threshold: T) -> Result<Array1<T>> {
    check_nonnegative("threshold", threshold)?;
    Ok(u.mapv(|v| if v == T::zero() { v } else { soft(v, threshold) }))
}

/// Prox of `λ‖·‖₀` with modulus `c`: hard thresholding at `√(2λ/c)`.
pub fn hard_threshold_l0<T: Real>(
    u: ArrayView1<'_, T>,
    lambda: T,
    c: T,
) -> Result<ProxResult<Array1<T>>> {
    check_positive("lambda", lambda)?;
    check_positive("c", c)?;
    let threshold = (T::lit(2.0) * lambda / c).sqrt();
    let mut tie_broken = false;
    let point = u.mapv(|v| {
        let a = v.abs();
        if a > threshold {
            v
        } else {
            if a == threshold {
                tie_broken = true;
            }
            T::zero()
        }
    });
    Ok(ProxResult { point, tie_broken })
}

/// Euclidean projection onto `{x : ‖x‖₀ ≤ k}`: keep the `k` largest
/// magnitudes, breaking equal magnitudes in favour of the lowest index.
pub fn project_sparsity<T: Real>(u: ArrayView1<'_, T>, k: usize) -> Result<ProxResult<Array1<T>>> {
    let n = u.len();
    if k > n {
        return Err(PlirlsError::invalid("k", format!("k = {k} exceeds dimension {n}")));
    }
    if k == n {
        return Ok(ProxResult::unique(u.to_owned()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps lower indices first among equal magnitudes.
    order.sort_by(|&a, &b| {
        u[b].abs()
            .partial_cmp(&u[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut point = Array1::zeros(n);
    for &j in &order[..k] {
        point[j] = u[j];
    }
    let tie_broken = k > 0 && {
        let kth = u[order[k - 1]].abs();
        kth > T::zero() && u[order[k]].abs() == kth
    };
    Ok(ProxResult { point, tie_broken })
}

/// Euclidean projection onto the ℓ1 ball of the given radius (sorted
/// threshold construction).
pub fn project_l1_ball<T: Real>(u: ArrayView1<'_, T>, radius: T) -> Result<Array1<T>> {
    check_positive("radius", radius)?;
    let l1: T = u.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return Ok(u.to_owned());
    }
    let mut mags: Vec<T> = u.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / T::from_usize(j + 1).unwrap();
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    Ok(u.mapv(|v| soft(v, theta)))
}

/// Prox of `‖·‖_*` (singular value soft thresholding).
pub fn svt_nuclear<T: Real>(m: ArrayView2<'_, T>, threshold: T) -> Result<Array2<T>> {
    check_nonnegative("threshold", threshold)?;
    let (rows, cols) = m.dim();
    check_svd_shape(rows, cols)?;
    let svd = T::svd(m)?;
    let shrunk = svd.singular_values.mapv(|s| (s - threshold).max(T::zero()));
    Ok(svd.recompose(&shrunk))
}

/// Prox of `λ·rank(·)` with modulus `c`: hard thresholding of the singular
/// values at `√(2λ/c)` followed by reassembly.
pub fn rank_prox<T: Real>(m: ArrayView2<'_, T>, lambda: T, c: T) -> Result<ProxResult<Array2<T>>> {
    check_positive("lambda", lambda)?;
    check_positive("c", c)?;
    let (rows, cols) = m.dim();
    check_svd_shape(rows, cols)?;
    let svd = T::svd(m)?;
    let kept = hard_threshold_l0(svd.singular_values.view(), lambda, c)?;
    let tie_broken = kept.tie_broken;
    Ok(ProxResult {
        point: svd.recompose(&kept.point),
        tie_broken,
    })
}

/// Entrywise clamp onto `[lower, upper]`.
pub fn project_box<T: Real>(
    u: ArrayView1<'_, T>,
    lower: ArrayView1<'_, T>,
    upper: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    if lower.len() != u.len() || upper.len() != u.len() {
        return Err(PlirlsError::DimensionMismatch {
            what: "box bounds",
            expected: u.len(),
            found: if lower.len() != u.len() { lower.len() } else { upper.len() },
        });
    }
    if let Some(j) = (0..u.len()).find(|&j| !(lower[j] <= upper[j])) {
        return Err(PlirlsError::invalid(
            "bounds",
            format!("lower[{j}] = {} exceeds upper[{j}] = {}", lower[j], upper[j]),
        ));
    }
    Ok(Array1::from_shape_fn(u.len(), |j| u[j].max(lower[j]).min(upper[j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{
        bruteforce_l0, bruteforce_rank, bruteforce_sparsity, prox_bruteforce, GridSpec,
    };
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| {
            let v: f64 = StandardNormal.sample(rng);
            2.0 * v
        })
    }

    #[test]
    fn soft_threshold_examples() {
        // Grid oracle: scalar argmin of |z| + ½(z − u)² over step 1e-3.
        let grid = GridSpec::new(-4.0, 4.0, 1e-3);
        let expected: Vec<f64> = [3.0, -0.5, 0.0]
            .iter()
            .map(|&u| {
                prox_bruteforce(&|z: &[f64]| z[0].abs(), &[u], 1.0, &[grid]).unwrap().point[0]
            })
            .collect();
        assert!((expected[0] - 2.0).abs() < 1e-9 && expected[1].abs() < 1e-9 && expected[2].abs() < 1e-9);

        let out = soft_threshold(array![3.0, -0.5, 0.0].view(), 1.0).unwrap();
        assert_eq!(out, array![2.0, 0.0, 0.0]);
        let u = array![1.5, -2.0, 0.25];
        assert_eq!(soft_threshold(u.view(), 0.0).unwrap(), u);
        assert_eq!(soft_threshold(Array1::<f64>::zeros(3).view(), 1.0).unwrap(), Array1::<f64>::zeros(3));
        assert!(soft_threshold(u.view(), -1.0).is_err());
    }

    #[test]
    fn hard_threshold_examples() {
        let r = hard_threshold_l0(array![2.0, 0.5].view(), 1.0, 2.0).unwrap();
        assert_eq!(r.point, array![2.0, 0.0]);
        assert!(!r.tie_broken);

        let r = hard_threshold_l0(array![1.0].view(), 1.0, 2.0).unwrap();
        assert_eq!(r.point, array![0.0]);
        assert!(r.tie_broken);

        let r = hard_threshold_l0(array![0.0].view(), 1.0, 2.0).unwrap();
        assert_eq!(r.point, array![0.0]);
        assert!(!r.tie_broken);

        assert!(hard_threshold_l0(array![1.0].view(), 0.0, 2.0).is_err());
        assert!(hard_threshold_l0(array![1.0].view(), 1.0, -2.0).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let u = array![3.0, 1.0, 2.0];
        let oracle = bruteforce_sparsity(u.view(), 2);
        let r = project_sparsity(u.view(), 2).unwrap();
        assert_eq!(oracle, array![3.0, 0.0, 2.0]);
        assert_eq!(r.point, oracle);
        assert_eq!(project_sparsity(u.view(), 3).unwrap().point, u);
        assert_eq!(project_sparsity(u.view(), 0).unwrap().point, Array1::<f64>::zeros(3));
        assert!(project_sparsity(u.view(), 4).is_err());

        let tie = project_sparsity(array![1.0, -1.0, 0.5].view(), 1).unwrap();
        assert_eq!(tie.point, array![1.0, 0.0, 0.0]);
        assert!(tie.tie_broken);
    }

    #[test]
    fn l1_ball_examples() {
        let grid = [GridSpec::new(-2.5, 2.5, 1e-2), GridSpec::new(-2.5, 2.5, 1e-2)];
        let ind = |z: &[f64]| if z[0].abs() + z[1].abs() <= 1.0 + 1e-12 { 0.0 } else { f64::INFINITY };
        let o1 = prox_bruteforce(&ind, &[2.0, 0.0], 1.0, &grid).unwrap().point;
        let o2 = prox_bruteforce(&ind, &[1.0, 1.0], 1.0, &grid).unwrap().point;
        assert!((o1[0] - 1.0).abs() < 1e-9 && o1[1].abs() < 1e-9);
        assert!((o2[0] - 0.5).abs() < 1e-9 && (o2[1] - 0.5).abs() < 1e-9);

        assert_eq!(project_l1_ball(array![2.0, 0.0].view(), 1.0).unwrap(), array![1.0, 0.0]);
        assert_eq!(project_l1_ball(array![1.0, 1.0].view(), 1.0).unwrap(), array![0.5, 0.5]);
        let inside = array![0.2, -0.3];
        assert_eq!(project_l1_ball(inside.view(), 1.0).unwrap(), inside);
    }

    #[test]
    fn svt_and_rank_examples() {
        let m = array![[3.0f64, 0.0], [0.0, 0.5]];
        let svt = svt_nuclear(m.view(), 1.0).unwrap();
        // Diagonal case reduces to soft thresholding of the diagonal.
        let diag = soft_threshold(array![3.0, 0.5].view(), 1.0).unwrap();
        assert!((svt[[0, 0]] - diag[0]).abs() < 1e-12);
        assert!((svt[[1, 1]] - diag[1]).abs() < 1e-12);
        assert!(svt[[0, 1]].abs() < 1e-12 && svt[[1, 0]].abs() < 1e-12);

        let id = svt_nuclear(m.view(), 0.0).unwrap();
        for (a, b) in id.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(svt_nuclear(Array2::<f64>::zeros((2, 3)).view(), 1.0).unwrap(), Array2::<f64>::zeros((2, 3)));

        let oracle = bruteforce_rank(m.view(), 1.0, 2.0);
        let r = rank_prox(m.view(), 1.0, 2.0).unwrap();
        assert!((oracle[[0, 0]] - 3.0).abs() < 1e-12 && oracle[[1, 1]].abs() < 1e-12);
        for (a, b) in r.point.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = rank_prox(Array2::<f64>::zeros((3, 3)).view(), 1.0, 2.0).unwrap();
        assert_eq!(zero.point, Array2::<f64>::zeros((3, 3)));
        let keep = rank_prox(m.view(), 0.01, 2.0).unwrap();
        for (a, b) in keep.point.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_size_limit() {
        let big = Array2::<f64>::zeros((1001, 1));
        assert!(svt_nuclear(big.view(), 1.0).is_err());
        assert!(rank_prox(big.view(), 1.0, 1.0).is_err());
    }

    #[test]
    fn box_examples() {
        let lo = array![0.0];
        let hi = array![1.0];
        assert_eq!(project_box(array![0.3].view(), lo.view(), hi.view()).unwrap(), array![0.3]);
        assert_eq!(project_box(array![5.0].view(), lo.view(), hi.view()).unwrap(), array![1.0]);
        assert_eq!(project_box(array![-2.0].view(), lo.view(), hi.view()).unwrap(), array![0.0]);
        assert!(project_box(array![0.0].view(), hi.view(), lo.view()).is_err());
    }

    #[test]
    fn combinatorial_oracles_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = 1 + trial % 6;
            let u = rand_vec(n, &mut rng);
            let lambda = 0.1 + (trial as f64 % 7.0) * 0.3;
            let c = 0.5 + (trial as f64 % 5.0);
            let r = hard_threshold_l0(u.view(), lambda, c).unwrap();
            assert_eq!(r.point, bruteforce_l0(u.view(), lambda, c));
            let k = trial % (n + 1);
            assert_eq!(project_sparsity(u.view(), k).unwrap().point, bruteforce_sparsity(u.view(), k));
        }
    }

    #[test]
    fn rank_prox_on_diagonal_matches_hard_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rand_vec(4, &mut rng).mapv(f64::abs);
            let m = Array2::from_diag(&d);
            let r = rank_prox(m.view(), 0.7, 1.3).unwrap();
            let h = hard_threshold_l0(d.view(), 0.7, 1.3).unwrap();
            let embedded = Array2::from_diag(&h.point);
            for (a, b) in r.point.iter().zip(embedded.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn prox_objective(term: impl Fn(&Array1<f64>) -> f64, z: &Array1<f64>, u: &Array1<f64>, c: f64) -> f64 {
        term(z) + 0.5 * c * (z - u).mapv(|v| v * v).sum()
    }

    type Penalty = Box<dyn Fn(&Array1<f64>) -> f64>;

    #[test]
    fn prox_optimality_under_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let c = 1.7;
        let lambda = 0.8;
        for _ in 0..20 {
            let u = rand_vec(5, &mut rng);
            let cases: Vec<(Penalty, Array1<f64>)> = vec![
                (
                    Box::new(move |z: &Array1<f64>| lambda * z.mapv(f64::abs).sum()),
                    soft_threshold(u.view(), lambda / c).unwrap(),
                ),
                (
                    Box::new(move |z: &Array1<f64>| lambda * z.iter().filter(|v| **v != 0.0).count() as f64),
                    hard_threshold_l0(u.view(), lambda, c).unwrap().point,
                ),
                (
                    Box::new(|z: &Array1<f64>| if z.iter().filter(|v| **v != 0.0).count() <= 2 { 0.0 } else { f64::INFINITY }),
                    project_sparsity(u.view(), 2).unwrap().point,
                ),
                (
                    Box::new(|z: &Array1<f64>| if z.mapv(f64::abs).sum() <= 1.0 + 1e-12 { 0.0 } else { f64::INFINITY }),
                    project_l1_ball(u.view(), 1.0).unwrap(),
                ),
            ];
            for (term, z) in &cases {
                let best = prox_objective(term, z, &u, c);
                for _ in 0..1000 {
                    let scale: f64 = if rng.random::<bool>() { 1e-3 } else { 1.0 };
                    let dz = rand_vec(5, &mut rng) * scale;
                    let mut zp = z + &dz;
                    // Random sparsification so that ℓ0-type terms see competitive points.
                    if rng.random::<f64>() < 0.5 {
                        let j = rng.random_range(0..5);
                        zp[j] = 0.0;
                    }
                    assert!(best <= prox_objective(term, &zp, &u, c) + 1e-9);
                }
            }
        }
    }

    use rand::Rng;

    proptest! {
        #[test]
        fn convex_proxes_are_nonexpansive(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = rand_vec(6, &mut rng);
            let v = rand_vec(6, &mut rng);
            let d = (&u - &v).mapv(|x| x * x).sum().sqrt();
            let lo = Array1::from_elem(6, -0.5);
            let hi = Array1::from_elem(6, 0.7);
            let pairs = [
                (soft_threshold(u.view(), 0.4).unwrap(), soft_threshold(v.view(), 0.4).unwrap()),
                (project_l1_ball(u.view(), 1.3).unwrap(), project_l1_ball(v.view(), 1.3).unwrap()),
                (project_box(u.view(), lo.view(), hi.view()).unwrap(), project_box(v.view(), lo.view(), hi.view()).unwrap()),
            ];
            for (pu, pv) in pairs.iter() {
                prop_assert!((pu - pv).mapv(|x| x * x).sum().sqrt() <= d + 1e-12);
            }
            let mu = u.into_shape_with_order((2, 3)).unwrap();
            let mv = v.into_shape_with_order((2, 3)).unwrap();
            let su = svt_nuclear(mu.view(), 0.6).unwrap();
            let sv = svt_nuclear(mv.view(), 0.6).unwrap();
            prop_assert!((&su - &sv).mapv(|x| x * x).sum().sqrt() <= d + 1e-10);
        }

        #[test]
        fn prox_idempotent_on_output(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = rand_vec(5, &mut rng);
            let z = hard_threshold_l0(u.view(), 0.5, 1.0).unwrap().point;
            prop_assert_eq!(hard_threshold_l0(z.view(), 0.5, 1.0).unwrap().point, z.clone());
            let s = project_sparsity(u.view(), 3).unwrap().point;
            prop_assert_eq!(project_sparsity(s.view(), 3).unwrap().point, s.clone());
            let b = project_l1_ball(u.view(), 2.0).unwrap();
            let bb = project_l1_ball(b.view(), 2.0).unwrap();
            prop_assert!((&b - &bb).mapv(f64::abs).sum() < 1e-12);
        }
    }
}
