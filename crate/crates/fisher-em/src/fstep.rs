//! F-step: scatter matrices, the Fisher criterion and the sequential
//! orthonormal-discriminant-vector (ODV) estimation of the orientation `U`,
//! plus the n x n Gram-matrix path for the n << p regime.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, SoftPartition};

/// A generalized eigenvalue below this is treated as numerically zero rank of
/// the between matrix (eigenvalues of `(S_B, S)` lie in `[0, 1]`).
const RANK_TOL: f64 = 1e-12;

/// Total covariance `S = (1/n) sum_i (y_i - ybar)(y_i - ybar)^t`.
pub fn total_cov(data: &Dataset) -> Result<DMatrix<f64>> {
    if data.n() < 2 {
        return Err(Error::InvalidData(
            "total covariance needs at least 2 observations".into(),
        ));
    }
    let n = data.n();
    let p = data.p();
    let y = data.matrix();
    let mut mean = DVector::zeros(p);
    for i in 0..n {
        mean += y.row(i).transpose();
    }
    mean /= n as f64;
    let mut centered = y.clone();
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] -= mean[j];
        }
    }
    Ok(centered.transpose() * &centered / n as f64)
}

/// Soft between-covariance `S_B = (1/n) sum_k n_k (m_k - ybar)(m_k - ybar)^t`
/// with soft means `m_k = (1/n_k) sum_i t_ik y_i`.
pub fn soft_between_cov(data: &Dataset, t: &SoftPartition) -> Result<DMatrix<f64>> {
    if t.n() != data.n() {
        return Err(Error::InvalidDimensions(format!(
            "partition has n={}, data has n={}",
            t.n(),
            data.n()
        )));
    }
    let (n, p, kk) = (data.n(), data.p(), t.k());
    let counts = t.counts();
    for k in 0..kk {
        if counts[k] < 1e-8 {
            return Err(Error::DegenerateGroup {
                group: k,
                count: counts[k],
            });
        }
    }
    let y = data.matrix();
    let mut ybar = DVector::zeros(p);
    for i in 0..n {
        ybar += y.row(i).transpose();
    }
    ybar /= n as f64;
    // soft means: (T^t Y) row k divided by n_k
    let means = t.matrix().transpose() * y; // K x p
    let mut sb = DMatrix::zeros(p, p);
    for k in 0..kk {
        let diff = means.row(k).transpose() / counts[k] - &ybar;
        sb.ger(counts[k] / n as f64, &diff, &diff, 1.0);
    }
    Ok(linalg::symmetrize(&sb))
}

/// Fisher criterion `trace((U^t S U)^{-1} U^t S_B U)`.
pub fn fisher_criterion(u: &DMatrix<f64>, s: &DMatrix<f64>, sb: &DMatrix<f64>) -> Result<f64> {
    let a = u.transpose() * s * u;
    let b = u.transpose() * sb * u;
    let lu = a.lu();
    let solved = lu
        .solve(&b)
        .ok_or_else(|| Error::NonFinite("U^t S U is singular".into()))?;
    Ok(solved.trace())
}

/// Leading generalized eigenpair of the reduced problem in the complement of
/// the already chosen axes.
fn next_axis(
    s: &DMatrix<f64>,
    sb: &DMatrix<f64>,
    chosen: &[DVector<f64>],
) -> Result<(DVector<f64>, f64)> {
    let p = s.nrows();
    if chosen.is_empty() {
        return linalg::leading_gen_eigvec(sb, s);
    }
    let basis = linalg::orthonormal_complement(chosen, p);
    let s_r = linalg::symmetrize(&(basis.transpose() * s * &basis));
    let sb_r = linalg::symmetrize(&(basis.transpose() * sb * &basis));
    let (w, lambda) = linalg::leading_gen_eigvec(&sb_r, &s_r)?;
    let mut u = &basis * w;
    let norm = u.norm();
    if !(norm > 0.0) {
        return Err(Error::NonFinite("deflated axis collapsed".into()));
    }
    u /= norm;
    Ok((u, lambda))
}

/// Sequential ODV estimate of the orthonormal discriminative orientation:
/// the first axis is the leading generalized eigenvector of `(S_B, S)`; each
/// following axis maximizes the same ratio restricted to the orthogonal
/// complement of the axes found so far.
pub fn fisher_axes(s: &DMatrix<f64>, sb: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if d == 0 || d >= p {
        return Err(Error::InvalidDimensions(format!(
            "fisher_axes requires 1 <= d < p, got d={d}, p={p}"
        )));
    }
    let mut axes: Vec<DVector<f64>> = Vec::with_capacity(d);
    for r in 0..d {
        let (u, lambda) = next_axis(s, sb, &axes)?;
        if lambda <= RANK_TOL {
            return Err(Error::RankDeficient {
                requested: d,
                available: r,
            });
        }
        axes.push(u);
    }
    Ok(DMatrix::from_columns(&axes))
}

/// Numerical rank of the between matrix relative to the total matrix: the
/// number of generalized eigenvalues of `(S_B, S)` above the rank tolerance.
pub(crate) fn discriminative_rank(s: &DMatrix<f64>, sb: &DMatrix<f64>, d_max: usize) -> usize {
    let mut axes: Vec<DVector<f64>> = Vec::new();
    for _ in 0..d_max {
        match next_axis(s, sb, &axes) {
            Ok((u, lambda)) if lambda > RANK_TOL => axes.push(u),
            _ => break,
        }
    }
    axes.len()
}

/// Gram-matrix variant of [`fisher_axes`] for n < p.
///
/// The problem is solved in the n-dimensional coefficient space of the
/// centered data (representer form `u = Ybar^t h`); the identity ridge of the
/// direct path pulls back to a `lambda * G` term there. Deflation constrains
/// each new axis to be orthogonal to the previous ones in the observation
/// space, i.e. orthogonal to `G h_j` in coefficient space. The returned
/// columns are re-orthonormalized; `U^t U = I` holds within 1e-8.
pub fn kernel_fisher_axes(data: &Dataset, t: &SoftPartition, d: usize) -> Result<DMatrix<f64>> {
    let (n, p) = (data.n(), data.p());
    if d == 0 || d >= p || d >= n {
        return Err(Error::InvalidDimensions(format!(
            "kernel_fisher_axes requires 1 <= d < min(n, p), got d={d}, n={n}, p={p}"
        )));
    }
    if t.n() != n {
        return Err(Error::InvalidDimensions("partition/data size mismatch".into()));
    }
    let counts = t.counts();
    for k in 0..t.k() {
        if counts[k] < 1e-8 {
            return Err(Error::DegenerateGroup {
                group: k,
                count: counts[k],
            });
        }
    }

    let y = data.matrix();
    let mut ybar = DVector::zeros(p);
    for i in 0..n {
        ybar += y.row(i).transpose();
    }
    ybar /= n as f64;
    let mut centered = y.clone();
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] -= ybar[j];
        }
    }
    let gram = linalg::symmetrize(&(&centered * centered.transpose())); // n x n

    // reduced eigenbasis of G: drop the numerical null space
    let eig = gram.clone().symmetric_eigen();
    let gmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(gmax > 0.0) {
        return Err(Error::InvalidData("centered data is identically zero".into()));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > gmax * 1e-12)
        .collect();
    let r = keep.len();
    if r == 0 {
        return Err(Error::InvalidData("Gram matrix has no positive eigenvalues".into()));
    }
    let q = DMatrix::from_fn(n, r, |i, j| eig.eigenvectors[(i, keep[j])]);
    let gvals = DVector::from_fn(r, |j, _| eig.eigenvalues[keep[j]]);

    // ridge policy of the direct path, expressed through the Gram spectrum:
    // S has eigenvalues gvals/n (plus p - r zeros)
    let tr_s = gram.trace() / n as f64;
    let smin = gvals.iter().cloned().fold(f64::INFINITY, f64::min) / n as f64;
    let smax = gvals.iter().cloned().fold(0.0, f64::max) / n as f64;
    let lambda = if r < p || smin <= 0.0 || smax / smin > 1e12 {
        1e-8 * tr_s / p as f64
    } else {
        0.0
    };

    // total matrix in coefficient coordinates: diag(g^2)/n + lambda diag(g)
    let st = DMatrix::from_diagonal(&DVector::from_fn(r, |j, _| {
        gvals[j] * gvals[j] / n as f64 + lambda * gvals[j]
    }));
    // between matrix: sum_k (n_k/n) c_k c_k^t with c_k = Q^t G (t_k / n_k)
    let mut sbt = DMatrix::zeros(r, r);
    for k in 0..t.k() {
        let a = DVector::from_fn(n, |i, _| t.matrix()[(i, k)] / counts[k]);
        let qa = q.transpose() * &a;
        let c = DVector::from_fn(r, |j, _| gvals[j] * qa[j]);
        sbt.ger(counts[k] / n as f64, &c, &c, 1.0);
    }
    let sbt = linalg::symmetrize(&sbt);

    let mut hs: Vec<DVector<f64>> = Vec::with_capacity(d);
    for step in 0..d {
        let (h, lambda_r) = if hs.is_empty() {
            linalg::leading_gen_eigvec_definite(&sbt, &st)?
        } else {
            // observation-space orthogonality u ⊥ u_j  <=>  h ⊥ diag(g) h_j
            let mut constraints: Vec<DVector<f64>> = Vec::with_capacity(hs.len());
            for h_prev in &hs {
                let mut g = DVector::from_fn(r, |j, _| gvals[j] * h_prev[j]);
                for c in &constraints {
                    let dot = c.dot(&g);
                    g.axpy(-dot, c, 1.0);
                }
                let norm = g.norm();
                if norm > 1e-300 {
                    constraints.push(g / norm);
                }
            }
            let basis = linalg::orthonormal_complement(&constraints, r);
            let s_r = linalg::symmetrize(&(basis.transpose() * &st * &basis));
            let sb_r = linalg::symmetrize(&(basis.transpose() * &sbt * &basis));
            let (w, lam) = linalg::leading_gen_eigvec_definite(&sb_r, &s_r)?;
            (&basis * w, lam)
        };
        if lambda_r <= RANK_TOL {
            return Err(Error::RankDeficient {
                requested: d,
                available: step,
            });
        }
        hs.push(h);
    }

    // map back to the observation space and re-orthonormalize column by column
    let h = {
        let cols: Vec<DVector<f64>> = hs.iter().map(|c| &q * c).collect();
        DMatrix::from_columns(&cols)
    };
    let mut u = centered.transpose() * h; // p x d
    linalg::orthonormalize_columns(&mut u)?;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn dataset(rows: &[Vec<f64>]) -> Dataset {
        Dataset::from_rows(rows, None).unwrap()
    }

    #[test]
    fn total_cov_of_two_points() {
        let data = dataset(&[vec![0.0, 0.0], vec![2.0, 0.0]]);
        let s = total_cov(&data).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(s, expected, epsilon = 1e-14);
    }

    #[test]
    fn total_cov_is_order_invariant() {
        let rows = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, -2.0]];
        let mut rev = rows.clone();
        rev.reverse();
        let s1 = total_cov(&dataset(&rows)).unwrap();
        let s2 = total_cov(&dataset(&rev)).unwrap();
        assert_relative_eq!(s1, s2, epsilon = 1e-14);
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
        Dataset::new(
            DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>() * 4.0 - 2.0),
            None,
        )
        .unwrap()
    }

    fn random_partition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> SoftPartition {
        let mut t = DMatrix::zeros(n, k);
        for i in 0..n {
            let mut row: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            for (j, x) in row.iter().enumerate() {
                t[(i, j)] = *x;
            }
        }
        SoftPartition::new(t).unwrap()
    }

    /// S = S_W + S_B with the n_k-normalized soft means.
    #[test]
    fn scatter_decomposition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(&mut rng, 40, 4);
        let t = random_partition(&mut rng, 40, 3);
        let s = total_cov(&data).unwrap();
        let sb = soft_between_cov(&data, &t).unwrap();
        let moments = crate::mstep::soft_moments(&data, &t).unwrap();
        let sw = moments.pooled_cov();
        assert_relative_eq!(&s, &(sw + &sb), epsilon = 1e-10);
    }

    #[test]
    fn single_group_between_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_data(&mut rng, 10, 3);
        let t = SoftPartition::new(DMatrix::from_element(10, 1, 1.0)).unwrap();
        let sb = soft_between_cov(&data, &t).unwrap();
        assert!(sb.abs().max() < 1e-12);
    }

    #[test]
    fn uniform_partition_between_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_data(&mut rng, 25, 4);
        let t = SoftPartition::new(DMatrix::from_element(25, 3, 1.0 / 3.0)).unwrap();
        let sb = soft_between_cov(&data, &t).unwrap();
        assert!(sb.abs().max() < 1e-12, "max {}", sb.abs().max());
    }

    #[test]
    fn hard_partition_reduces_to_classical_between() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let data = random_data(&mut rng, n, 3);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let t = SoftPartition::from_labels(&labels, 2).unwrap();
        let sb = soft_between_cov(&data, &t).unwrap();

        // classical supervised between-scatter
        let y = data.matrix();
        let mut ybar = DVector::zeros(3);
        for i in 0..n {
            ybar += y.row(i).transpose();
        }
        ybar /= n as f64;
        let mut expected = DMatrix::zeros(3, 3);
        for class in 0..2 {
            let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            let mut m = DVector::zeros(3);
            for &i in &idx {
                m += y.row(i).transpose();
            }
            m /= idx.len() as f64;
            let diff = m - &ybar;
            expected += (idx.len() as f64 / n as f64) * &diff * diff.transpose();
        }
        assert_relative_eq!(sb, expected, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_group_is_reported() {
        let data = dataset(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let t = SoftPartition::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        match soft_between_cov(&data, &t) {
            Err(Error::DegenerateGroup { group, .. }) => assert_eq!(group, 1),
            other => panic!("expected degenerate group, got {other:?}"),
        }
    }

    #[test]
    fn criterion_zero_between_is_zero() {
        let s = DMatrix::identity(3, 3);
        let sb = DMatrix::zeros(3, 3);
        let u = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_relative_eq!(fisher_criterion(&u, &s, &sb).unwrap(), 0.0);
    }

    #[test]
    fn criterion_full_orthogonal_is_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() - 0.5);
        let sb = &b * b.transpose();
        // a random orthogonal U via QR of a random matrix
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() - 0.5);
        let u = a.qr().q();
        let s = DMatrix::identity(3, 3);
        assert_relative_eq!(
            fisher_criterion(&u, &s, &sb).unwrap(),
            sb.trace(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn axes_for_identity_total_are_leading_eigenvectors() {
        let s = DMatrix::identity(4, 4);
        let sb = DMatrix::from_diagonal(&DVector::from_column_slice(&[5.0, 2.0, 0.0, 0.0]));
        let u = fisher_axes(&s, &sb, 2).unwrap();
        assert_relative_eq!(u[(0, 0)].abs(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(u[(1, 1)].abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_group_axis_matches_dense_generalized_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen::<f64>() - 0.5);
            let s = &a * a.transpose() + DMatrix::identity(4, 4) * 0.2;
            let b = DVector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
            let sb = &b * b.transpose(); // rank 1: K = 2
            let u = fisher_axes(&s, &sb, 1).unwrap();
            // dense oracle: eig of S^-1 SB via direct inversion
            let m = s.clone().try_inverse().unwrap() * &sb;
            let eig = m.symmetric_eigen(); // wrong for non-symmetric; use power iteration instead
            let _ = eig;
            let mut v = DVector::from_element(4, 0.5);
            for _ in 0..500 {
                v = &m * v;
                v /= v.norm();
            }
            let cos = v.dot(&u.column(0).into_owned()).abs();
            assert!(cos > 1.0 - 1e-8, "cos = {cos}");
        }
    }

    #[test]
    fn returned_axes_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.gen::<f64>() - 0.5);
            let s = &a * a.transpose() + DMatrix::identity(5, 5) * 0.1;
            let b = DMatrix::from_fn(5, 3, |_, _| rng.gen::<f64>() - 0.5);
            let sb = &b * b.transpose();
            let u = fisher_axes(&s, &sb, 3).unwrap();
            let gram = u.transpose() * &u;
            assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_between_errors() {
        let s = DMatrix::identity(4, 4);
        let b = DVector::from_column_slice(&[1.0, 2.0, 0.0, 0.0]);
        let sb = &b * b.transpose(); // rank 1
        match fisher_axes(&s, &sb, 3) {
            Err(Error::RankDeficient { available, .. }) => assert_eq!(available, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert_eq!(discriminative_rank(&s, &sb, 3), 1);
    }

    #[test]
    fn kernel_axes_stay_in_row_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = random_data(&mut rng, 3, 5);
        let t = SoftPartition::from_labels(&[0, 0, 1], 2).unwrap();
        let u = kernel_fisher_axes(&data, &t, 1).unwrap();
        // projector onto the row space of the centered data
        let y = data.matrix();
        let mut ybar = DVector::zeros(5);
        for i in 0..3 {
            ybar += y.row(i).transpose();
        }
        ybar /= 3.0;
        let mut c = y.clone();
        for i in 0..3 {
            for j in 0..5 {
                c[(i, j)] -= ybar[j];
            }
        }
        let g = &c * c.transpose();
        let ginv = g.pseudo_inverse(1e-10).unwrap();
        let proj = c.transpose() * ginv * &c;
        let out = (&u - proj * &u).norm();
        assert!(out < 1e-8, "component outside row space: {out}");
    }

    #[test]
    fn kernel_single_group_reports_rank_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let data = random_data(&mut rng, 4, 6);
        let t = SoftPartition::new(DMatrix::from_element(4, 1, 1.0)).unwrap();
        match kernel_fisher_axes(&data, &t, 1) {
            Err(Error::RankDeficient { available, .. }) => assert_eq!(available, 0),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
