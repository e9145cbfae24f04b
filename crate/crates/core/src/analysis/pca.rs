use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `k × D`, orthonormal rows.
    pub components: Tensor<f64>,
    /// `V × k`: the centered rows expressed in the component basis.
    pub projections: Tensor<f64>,
    /// Share of total variance per component, nonincreasing.
    pub explained_variance_ratio: Vec<f64>,
}

/// One-sided Jacobi orthogonalization of the columns of `cols`, applying the
/// same rotations to an identity of matching width. Returns the rotated
/// columns (mutually orthogonal) and the accumulated rotation, also stored
/// column by column.
fn jacobi_columns(cols: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols.len();
    let mut rot: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut *cols, &mut rot[..]] {
                    let (lo, hi) = m.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (a, b) = (*x, *y);
                        *x = c * a - s * b;
                        *y = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    rot
}

/// Flips `v` (and `paired`) so that the entry of largest magnitude is
/// positive; ties go to the lowest index.
fn fix_sign(v: &mut [f64], paired: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        paired.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-`k` principal components of the rows of `matrix` (`V × D`).
pub fn pca<T: Scalar>(matrix: &Tensor<T>, k: usize) -> Result<PcaResult> {
    let (v, d) = match matrix.shape() {
        &[v, d] => (v, d),
        s => return Err(Error::shape("pca", format!("expected a matrix, got {s:?}"))),
    };
    if v < 2 {
        return Err(Error::InvalidArgument(format!("pca needs at least 2 rows, got {v}")));
    }
    if k == 0 || k > v.min(d) {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {}]", v.min(d))));
    }
    let data: Vec<f64> = matrix.data().iter().map(|&x| Scalar::to_f64(x)).collect();
    let mut centered = data.clone();
    for j in 0..d {
        let mean = (0..v).map(|i| data[i * d + j]).sum::<f64>() / v as f64;
        for i in 0..v {
            centered[i * d + j] -= mean;
        }
    }
    let total: f64 = centered.iter().map(|x| x * x).sum();
    if !total.is_finite() {
        return Err(Error::NonFinite("pca input".into()));
    }
    if total == 0.0 {
        return Err(Error::InvalidArgument(
            "all rows are identical; principal directions are undefined".into(),
        ));
    }

    // (singular value, component in R^D, projection in R^V), sorted by value
    let mut triples: Vec<(f64, Vec<f64>, Vec<f64>)> = if v <= d {
        // columns of Aᵀ: one per row of A
        let mut cols: Vec<Vec<f64>> = (0..v).map(|i| centered[i * d..(i + 1) * d].to_vec()).collect();
        let rot = jacobi_columns(&mut cols);
        cols.into_iter()
            .enumerate()
            .map(|(c, col)| {
                let sigma = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                let proj: Vec<f64> = rot[c].iter().map(|x| x * sigma).collect();
                (sigma, col, proj)
            })
            .collect()
    } else {
        let mut cols: Vec<Vec<f64>> = (0..d).map(|j| (0..v).map(|i| centered[i * d + j]).collect()).collect();
        let rot = jacobi_columns(&mut cols);
        cols.into_iter()
            .enumerate()
            .map(|(c, col)| {
                let sigma = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                let comp = rot[c].clone();
                (sigma, comp, col)
            })
            .collect()
    };
    triples.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut components = Vec::with_capacity(k * d);
    let mut projections = vec![0.0; v * k];
    let mut ratios = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (c, (sigma, mut comp, mut proj)) in triples.into_iter().take(k).enumerate() {
        if sigma <= 1e-12 * total.sqrt() {
            // no variance left: any unit vector orthogonal to the earlier ones
            comp = orthogonal_unit(&basis, d);
            proj = vec![0.0; v];
        } else if v <= d {
            comp.iter_mut().for_each(|x| *x /= sigma);
        }
        fix_sign(&mut comp, &mut proj);
        for (i, p) in proj.iter().enumerate() {
            projections[i * k + c] = *p;
        }
        ratios.push(sigma * sigma / total);
        components.extend_from_slice(&comp);
        basis.push(comp);
    }
    Ok(PcaResult {
        components: Tensor::new(vec![k, d], components)?,
        projections: Tensor::new(vec![v, k], projections)?,
        explained_variance_ratio: ratios,
    })
}

fn orthogonal_unit(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    for e in 0..d {
        let mut u: Vec<f64> = (0..d).map(|j| f64::from(u8::from(j == e))).collect();
        for b in basis {
            let dot: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            u.iter_mut().for_each(|x| *x /= norm);
            return u;
        }
    }
    unreachable!("fewer than d basis vectors always leave a free direction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    fn random_matrix(rng: &mut SeededRng, v: usize, d: usize) -> Tensor<f64> {
        Tensor::from_fn(&[v, d], |_| rng.uniform_f64(-1.0, 1.0))
    }

    fn centered(m: &Tensor<f64>) -> DMatrix<f64> {
        let (v, d) = (m.shape()[0], m.shape()[1]);
        let a = DMatrix::from_row_slice(v, d, m.data());
        let mean = a.row_mean();
        DMatrix::from_fn(v, d, |i, j| a[(i, j)] - mean[j])
    }

    #[test]
    fn points_on_a_line() {
        let dir = [0.3, -1.2, 0.5, 2.0];
        let m = Tensor::from_fn(&[5, 4], |ix| (ix / 4) as f64 * 1.7 * dir[ix % 4] + 0.25);
        let r = pca(&m, 2).unwrap();
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        assert!(r.explained_variance_ratio[1].abs() < 1e-9);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (c, x) in r.components.data()[..4].iter().zip(dir) {
            assert!((c - x / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_cross() {
        let m = Tensor::new(vec![4, 2], vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
        let r = pca(&m, 2).unwrap();
        for x in &r.explained_variance_ratio {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_covariance_eigendecomposition() {
        let mut rng = SeededRng::new(5, Stream::Custom(1));
        for (v, d) in [(6, 4), (4, 6), (10, 3)] {
            let m = random_matrix(&mut rng, v, d);
            let r = pca(&m, 2).unwrap();
            let a = centered(&m);
            let eig = SymmetricEigen::new(a.transpose() * &a);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let total: f64 = eig.eigenvalues.iter().sum();
            for (c, &oc) in order.iter().take(2).enumerate() {
                let mut w: Vec<f64> = eig.eigenvectors.column(oc).iter().copied().collect();
                let mut proj: Vec<f64> = (0..v).map(|i| (0..d).map(|j| a[(i, j)] * w[j]).sum()).collect();
                fix_sign(&mut w, &mut proj);
                for (x, y) in r.components.data()[c * d..(c + 1) * d].iter().zip(&w) {
                    assert!((x - y).abs() < 1e-8, "component {c}: {x} vs {y}");
                }
                for (i, p) in proj.iter().enumerate() {
                    assert!((r.projections.at(&[i, c]) - p).abs() < 1e-8);
                }
                assert!((r.explained_variance_ratio[c] - eig.eigenvalues[oc] / total).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn top_component_beats_random_directions() {
        let mut rng = SeededRng::new(8, Stream::Custom(2));
        let m = random_matrix(&mut rng, 10, 7);
        let r = pca(&m, 1).unwrap();
        let a = centered(&m);
        let residual = |u: &[f64]| -> f64 {
            let mut err = 0.0;
            for i in 0..10 {
                let row: Vec<f64> = (0..7).map(|j| a[(i, j)]).collect();
                let p: f64 = row.iter().zip(u).map(|(x, y)| x * y).sum();
                err += row.iter().zip(u).map(|(x, y)| (x - p * y).powi(2)).sum::<f64>();
            }
            err / 10.0
        };
        let best = residual(&r.components.data()[..7]);
        for _ in 0..100 {
            let mut u: Vec<f64> = (0..7).map(|_| rng.uniform_f64(-1.0, 1.0)).collect();
            let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            u.iter_mut().for_each(|x| *x /= n);
            assert!(best <= residual(&u) + 1e-12);
        }
    }

    #[test]
    fn fifty_random_matrices_are_well_formed() {
        let mut rng = SeededRng::new(13, Stream::Custom(3));
        for t in 0..50 {
            let (v, d) = (2 + t % 9, 2 + (t * 7) % 11);
            let k = 2.min(v.min(d));
            let r = pca(&random_matrix(&mut rng, v, d), k).unwrap();
            let c = r.components.data();
            for a in 0..k {
                for b in 0..k {
                    let dot: f64 = (0..d).map(|j| c[a * d + j] * c[b * d + j]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-6);
                }
            }
            let ev = &r.explained_variance_ratio;
            assert!(ev.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            assert!(ev.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
            assert!(ev.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = SeededRng::new(21, Stream::Custom(4));
        let m = random_matrix(&mut rng, 10, 30);
        let negated = m.map(|x| -x);
        let (a, b) = (pca(&m, 2).unwrap(), pca(&negated, 2).unwrap());
        for (x, y) in a.components.data().iter().zip(b.components.data()) {
            assert!((x - y).abs() < 1e-10);
        }
        for r in [&a, &b] {
            for c in 0..2 {
                let row = &r.components.data()[c * 30..(c + 1) * 30];
                let top = row
                    .iter()
                    .copied()
                    .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                assert!(top > 0.0);
            }
        }
    }

    #[test]
    fn rank_one_still_yields_orthonormal_pair() {
        let m = Tensor::new(vec![3, 3], vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 3.0, 6.0, 9.0]).unwrap();
        let r = pca(&m, 2).unwrap();
        let c = r.components.data();
        let dot: f64 = (0..3).map(|j| c[j] * c[3 + j]).sum();
        assert!(dot.abs() < 1e-9);
        assert!((c[3..].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64);
        assert!(pca(&m, 3).is_err());
        assert!(pca(&m, 0).is_err());
        assert!(pca(&Tensor::<f64>::from_fn(&[1, 4], |i| i as f64), 1).is_err());
        assert!(pca(&Tensor::<f64>::from_fn(&[3, 2], |_| 1.0), 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projections_reconstruct_centered_data(v in 2usize..8, d in 2usize..8, seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed, Stream::Custom(5));
            let m = random_matrix(&mut rng, v, d);
            let k = v.min(d).min(2);
            let r = pca(&m, k).unwrap();
            let a = centered(&m);
            for i in 0..v {
                for c in 0..k {
                    let want: f64 = (0..d).map(|j| a[(i, j)] * r.components.at(&[c, j])).sum();
                    prop_assert!((r.projections.at(&[i, c]) - want).abs() < 1e-9);
                }
            }
        }
    }
}
