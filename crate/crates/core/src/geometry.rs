//! Spectral and per-layer analysis of endpoint weight differences:
//! singular-value spectra, cumulative explained variance, and the fraction
//! of total squared change attributable to each layer.

use crate::arith::{ArithError, LayerMap, LayerSlot};
use crate::store::{Checkpoint, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("tensor {name} has {ndim} dimensions, expected 2")]
    NotTwoDim { name: String, ndim: usize },
    #[error("tensor {name} contains non-finite entries")]
    NonFinite { name: String },
    #[error("top_k {top_k} out of range 0..={rank}")]
    TopKOutOfRange { top_k: usize, rank: usize },
    #[error(transparent)]
    Layer(#[from] ArithError),
}

/// Descending singular values of a matrix. `rank` is the numerical rank:
/// the count of values above `1e-12 * sigma_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// Fraction of total squared change per layer. Tensors outside the layer
/// map are excluded from the per-layer breakdown but still count toward
/// `total_sq`; their names are listed in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub per_layer_fraction: Vec<f64>,
    pub per_layer_sq: Vec<f64>,
    pub total_sq: f64,
    pub excluded: Vec<String>,
}

// One-sided Jacobi: rotate column pairs of the working matrix until all
// pairwise inner products vanish; singular values are the column norms.
// Off-diagonal convergence threshold is 1e-10 relative.
const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 60;

// Index loops run over two columns of the same slice at once, so the
// iterator form does not apply.
#[allow(clippy::needless_range_loop)]
fn one_sided_jacobi(columns: &mut [Vec<f64>]) {
    let n = columns.len();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..columns[p].len() {
                    let x = columns[p][i];
                    let y = columns[q][i];
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..columns[p].len() {
                    let x = columns[p][i];
                    let y = columns[q][i];
                    columns[p][i] = c * x - s * y;
                    columns[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Singular values of a 2-D tensor, descending. The working matrix is
/// transposed when needed so Jacobi runs on the smaller dimension; the
/// spectrum is invariant to transposition.
pub fn svd_spectrum(tensor: &Tensor) -> Result<Spectrum, GeomError> {
    if tensor.shape.len() != 2 {
        return Err(GeomError::NotTwoDim {
            name: tensor.name.clone(),
            ndim: tensor.shape.len(),
        });
    }
    let rows = tensor.shape[0];
    let cols = tensor.shape[1];
    let values = tensor.to_f64_vec();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite {
            name: tensor.name.clone(),
        });
    }
    Ok(spectrum_of(rows, cols, &values))
}

/// Spectrum of a row-major `rows x cols` matrix.
pub fn spectrum_of(rows: usize, cols: usize, values: &[f64]) -> Spectrum {
    assert_eq!(values.len(), rows * cols, "matrix buffer size mismatch");
    // Column-major working copy on the smaller dimension.
    let mut columns: Vec<Vec<f64>> = if cols <= rows {
        (0..cols)
            .map(|j| (0..rows).map(|i| values[i * cols + j]).collect())
            .collect()
    } else {
        (0..rows)
            .map(|i| (0..cols).map(|j| values[i * cols + j]).collect())
            .collect()
    };
    one_sided_jacobi(&mut columns);
    let mut sigmas: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = sigmas.first().copied().unwrap_or(0.0) * 1e-12;
    let rank = sigmas.iter().filter(|&&s| s > threshold && s > 0.0).count();
    Spectrum {
        singular_values: sigmas,
        rank,
    }
}

/// Fraction of squared spectral mass in the top `top_k` values. Zero for
/// an all-zero spectrum.
pub fn cumulative_variance(spectrum: &Spectrum, top_k: usize) -> Result<f64, GeomError> {
    if top_k > spectrum.rank {
        return Err(GeomError::TopKOutOfRange {
            top_k,
            rank: spectrum.rank,
        });
    }
    let total: f64 = spectrum.singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let head: f64 = spectrum.singular_values[..top_k]
        .iter()
        .map(|s| s * s)
        .sum();
    Ok(head / total)
}

/// Per-layer share of the total squared delta. Every layer-mapped tensor
/// contributes to its layer; NonLayer tensors are reported in `excluded`.
pub fn layer_variance_ratio(
    delta: &Checkpoint,
    map: &LayerMap,
) -> Result<VarianceProfile, GeomError> {
    let mut per_layer_sq = vec![0.0f64; map.layer_count];
    let mut excluded = Vec::new();
    let mut total_sq = 0.0f64;
    for tensor in delta.iter() {
        let sq: f64 = tensor.to_f64_vec().iter().map(|v| v * v).sum();
        total_sq += sq;
        match map.slot(&tensor.name)? {
            LayerSlot::Layer(idx) => per_layer_sq[idx] += sq,
            LayerSlot::NonLayer => excluded.push(tensor.name.clone()),
        }
    }
    let per_layer_fraction = per_layer_sq
        .iter()
        .map(|&sq| if total_sq == 0.0 { 0.0 } else { sq / total_sq })
        .collect();
    Ok(VarianceProfile {
        per_layer_fraction,
        per_layer_sq,
        total_sq,
        excluded,
    })
}

/// Flatten a >2-D tensor to 2-D by merging all but the leading dimension.
/// 2-D tensors pass through unchanged.
pub fn as_matrix_shape(shape: &[usize]) -> Option<(usize, usize)> {
    match shape.len() {
        0 | 1 => None,
        2 => Some((shape[0], shape[1])),
        _ => Some((shape[0], shape[1..].iter().product())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::NonLayerPolicy;

    fn matrix(name: &str, rows: usize, cols: usize, values: &[f32]) -> Tensor {
        Tensor::from_f32(name, vec![rows, cols], values)
    }

    // Test-side oracle: eigenvalues of the Gram matrix M^T M via cyclic
    // two-sided Jacobi on the symmetric Gram matrix, independent of the
    // one-sided column implementation.
    fn gram_eigen_oracle(rows: usize, cols: usize, values: &[f64]) -> Vec<f64> {
        let n = cols.min(rows);
        // Gram on the smaller side.
        let at = |i: usize, j: usize| values[i * cols + j];
        let mut g = vec![0.0f64; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut sum = 0.0;
                if cols <= rows {
                    for i in 0..rows {
                        sum += at(i, a) * at(i, b);
                    }
                } else {
                    for j in 0..cols {
                        sum += at(a, j) * at(b, j);
                    }
                }
                g[a * n + b] = sum;
            }
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += g[i * n + j].abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let gij = g[i * n + j];
                    if gij.abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (g[j * n + j] - g[i * n + i]) / gij;
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for k in 0..n {
                        let gik = g[i * n + k];
                        let gjk = g[j * n + k];
                        g[i * n + k] = c * gik - s * gjk;
                        g[j * n + k] = s * gik + c * gjk;
                    }
                    for k in 0..n {
                        let gki = g[k * n + i];
                        let gkj = g[k * n + j];
                        g[k * n + i] = c * gki - s * gkj;
                        g[k * n + j] = s * gki + c * gkj;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| g[i * n + i].max(0.0).sqrt()).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eig
    }

    #[test]
    fn rank_one_outer_product() {
        // u = [1,2,1] (norm sqrt(6)), v = [1,1] scaled so |u||v| = 6.
        let u = [1.0f64, 2.0, 1.0];
        let v = [6.0 / (6.0f64).sqrt() / (2.0f64).sqrt(); 2];
        let mut values = Vec::new();
        for &ui in &u {
            for &vj in &v {
                values.push((ui * vj) as f32);
            }
        }
        let t = matrix("d", 3, 2, &values);
        let s = svd_spectrum(&t).unwrap();
        assert!((s.singular_values[0] - 6.0).abs() < 1e-5);
        assert!(s.singular_values[1].abs() < 1e-5);
        assert_eq!(s.rank, 1);
    }

    #[test]
    fn diagonal_matrix_spectrum() {
        let t = matrix("d", 2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let s = svd_spectrum(&t).unwrap();
        assert!((s.singular_values[0] - 4.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_matrices_match_gram_oracle() {
        // Simple deterministic LCG so the fixture is reproducible.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for trial in 0..20 {
            let rows = 2 + (trial % 3);
            let cols = 2 + (trial % 4);
            let values: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
            let got = spectrum_of(rows, cols, &values);
            let want = gram_eigen_oracle(rows, cols, &values);
            for (g, w) in got.singular_values.iter().zip(want.iter()) {
                assert!(
                    (g - w).abs() <= 1e-8 * w.max(1.0),
                    "trial {trial}: {g} vs {w}"
                );
            }
        }
    }

    #[test]
    fn spectrum_invariant_to_transpose() {
        let values = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let a = spectrum_of(2, 3, &values);
        let transposed = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = spectrum_of(3, 2, &transposed);
        for (x, y) in a.singular_values.iter().zip(b.singular_values.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn svd_rejects_non_2d_and_non_finite() {
        let t = Tensor::from_f32("v", vec![4], &[1.0; 4]);
        assert!(matches!(svd_spectrum(&t), Err(GeomError::NotTwoDim { .. })));
        let t = matrix("m", 1, 2, &[f32::NAN, 1.0]);
        assert!(matches!(svd_spectrum(&t), Err(GeomError::NonFinite { .. })));
    }

    #[test]
    fn cumulative_variance_cases() {
        let s = Spectrum {
            singular_values: vec![2.0, 1.0],
            rank: 2,
        };
        assert_eq!(cumulative_variance(&s, 2).unwrap(), 1.0);
        assert!((cumulative_variance(&s, 1).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(cumulative_variance(&s, 0).unwrap(), 0.0);
        assert!(matches!(
            cumulative_variance(&s, 3),
            Err(GeomError::TopKOutOfRange { .. })
        ));

        let rank1 = Spectrum {
            singular_values: vec![6.0, 0.0],
            rank: 1,
        };
        assert_eq!(cumulative_variance(&rank1, 1).unwrap(), 1.0);

        let zero = Spectrum {
            singular_values: vec![0.0],
            rank: 0,
        };
        assert_eq!(cumulative_variance(&zero, 0).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_variance_nondecreasing() {
        let s = Spectrum {
            singular_values: vec![5.0, 3.0, 2.0, 1.0, 0.5],
            rank: 5,
        };
        let mut prev = 0.0;
        for k in 0..=5 {
            let v = cumulative_variance(&s, k).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(prev, 1.0);
    }

    fn layered_delta(per_layer: &[&[f32]]) -> (Checkpoint, LayerMap) {
        let mut c = Checkpoint::new();
        for (l, vals) in per_layer.iter().enumerate() {
            c.insert(Tensor::from_f32(
                format!("layers.{l}.weight"),
                vec![vals.len()],
                vals,
            ))
            .unwrap();
        }
        let map = LayerMap::new(
            r"layers\.(\d+)\.",
            per_layer.len(),
            NonLayerPolicy::FromBase,
        )
        .unwrap();
        (c, map)
    }

    #[test]
    fn uniform_64_layer_profile() {
        let values = [0.5f32, -0.5, 0.25, -0.25];
        let per_layer: Vec<&[f32]> = (0..64).map(|_| &values[..]).collect();
        let (delta, map) = layered_delta(&per_layer);
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        for f in &profile.per_layer_fraction {
            assert_eq!(*f, 1.0 / 64.0, "uniform baseline is 1.5625% per layer");
        }
    }

    #[test]
    fn concentrated_and_weighted_profiles() {
        let (delta, map) = layered_delta(&[&[2.0], &[0.0], &[0.0]]);
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        assert_eq!(profile.per_layer_fraction, vec![1.0, 0.0, 0.0]);

        // Squared sums 1 and 3 -> fractions [0.25, 0.75].
        let (delta, map) = layered_delta(&[&[1.0], &[1.0, 1.0, 1.0]]);
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        assert!((profile.per_layer_fraction[0] - 0.25).abs() < 1e-15);
        assert!((profile.per_layer_fraction[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fractions_sum_to_one_when_fully_mapped() {
        let (delta, map) = layered_delta(&[&[0.1, 0.2], &[0.3], &[0.4, 0.5, 0.6]]);
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        let sum: f64 = profile.per_layer_fraction.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(profile.excluded.is_empty());
    }

    #[test]
    fn non_layer_tensors_are_reported() {
        let (mut delta, map) = layered_delta(&[&[1.0], &[1.0]]);
        delta
            .insert(Tensor::from_f32("embed", vec![1], &[3.0]))
            .unwrap();
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        assert_eq!(profile.excluded, vec!["embed".to_string()]);
        // Fractions are relative to the grand total including excluded mass.
        let sum: f64 = profile.per_layer_fraction.iter().sum();
        assert!(sum < 1.0);
        assert!((profile.total_sq - 11.0).abs() < 1e-12);
    }

    #[test]
    fn profile_is_permutation_equivariant() {
        let (delta, map) = layered_delta(&[&[1.0], &[2.0], &[3.0]]);
        let profile = layer_variance_ratio(&delta, &map).unwrap();
        // Relabel layers 0,1,2 -> 2,0,1 by renaming tensors.
        let mut relabeled = Checkpoint::new();
        let perm = [2usize, 0, 1];
        for (l, t) in delta.iter().enumerate() {
            relabeled
                .insert(Tensor::from_f32(
                    format!("layers.{}.weight", perm[l]),
                    t.shape.clone(),
                    &t.to_f32_vec(),
                ))
                .unwrap();
        }
        let relabeled_profile = layer_variance_ratio(&relabeled, &map).unwrap();
        for (l, &p) in perm.iter().enumerate() {
            assert_eq!(
                profile.per_layer_fraction[l],
                relabeled_profile.per_layer_fraction[p]
            );
        }
    }

    #[test]
    fn matrix_shape_flattening() {
        assert_eq!(as_matrix_shape(&[3, 4]), Some((3, 4)));
        assert_eq!(as_matrix_shape(&[2, 3, 4]), Some((2, 12)));
        assert_eq!(as_matrix_shape(&[5]), None);
    }
}
