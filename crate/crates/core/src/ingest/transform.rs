use ndarray::Axis;
use rayon::prelude::*;

use super::genotype::GenotypeMatrix;
use crate::error::{Error, Result};

/// Replaces each missing call by the mean of the observed calls in that SNP.
pub fn impute_missing(g: &GenotypeMatrix) -> Result<GenotypeMatrix> {
    let mut values = g.values().clone();
    for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
        let (sum, n) = col
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
        if n == col.len() {
            continue;
        }
        if n == 0 {
            return Err(Error::NoObservedValues(g.snps()[j].id.clone()));
        }
        let mean = sum / n as f64;
        col.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = mean);
    }
    Ok(g.with_values(values, g.is_standardized()))
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub matrix: GenotypeMatrix,
    /// SNPs removed because their column had zero variance.
    pub dropped: Vec<String>,
}

/// Centres every column and scales it to unit Euclidean norm
/// (Σ_i x_ij² = 1). Zero-variance columns are dropped and reported.
pub fn standardize(g: &GenotypeMatrix) -> Result<Standardized> {
    let missing = g.n_missing();
    if missing > 0 {
        return Err(Error::MissingValues(missing));
    }
    let cols: Vec<Option<Vec<f64>>> = (0..g.n_snps())
        .into_par_iter()
        .map(|j| standardize_column(g.column(j)))
        .collect();

    let keep: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_some())
        .map(|(j, _)| j)
        .collect();
    let dropped = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_none())
        .map(|(j, _)| g.snps()[j].id.clone())
        .collect::<Vec<_>>();
    if keep.is_empty() {
        return Err(Error::AllFiltered);
    }

    let mut selected = g.select_snps(&keep);
    let n = g.n_subjects();
    let mut data = Vec::with_capacity(n * keep.len());
    for c in cols.into_iter().flatten() {
        data.extend(c);
    }
    let values = ndarray::Array2::from_shape_vec(ndarray::ShapeBuilder::f((n, keep.len())), data)
        .expect("shape");
    selected = selected.with_values(values, true);
    Ok(Standardized {
        matrix: selected,
        dropped,
    })
}

/// Centred, unit-norm copy of `x`, or `None` when `x` is constant.
pub fn standardize_column(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    // second pass removes the rounding left in the first mean
    let resid = c.iter().sum::<f64>() / n;
    c.iter_mut().for_each(|v| *v -= resid);
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if norm <= 1e-12 * scale {
        return None;
    }
    c.iter_mut().for_each(|v| *v /= norm);
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::genotype::{Chromosome, SnpInfo};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gm(values: Array2<f64>) -> GenotypeMatrix {
        let (n, p) = values.dim();
        let snps = (0..p)
            .map(|j| SnpInfo {
                id: format!("rs{j}"),
                chromosome: Chromosome::Autosome(1),
                position: j as u64 + 1,
            })
            .collect();
        GenotypeMatrix::new(values, snps, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
    }

    #[test]
    fn imputes_observed_mean() {
        let g = gm(array![[0.0, 1.0], [2.0, 1.0], [f64::NAN, 2.0]]);
        let out = impute_missing(&g).unwrap();
        assert_eq!(out.column(0), &[0.0, 2.0, 1.0]);
        assert_eq!(out.column(1), g.column(1));
        assert_eq!(out.n_missing(), 0);

        let empty = gm(array![[f64::NAN], [f64::NAN]]);
        assert!(matches!(impute_missing(&empty), Err(Error::NoObservedValues(_))));
    }

    #[test]
    fn imputed_columns_keep_observed_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Array2::from_shape_fn((20, 10), |_| rng.gen_range(0..3) as f64);
        for _ in 0..20 {
            let (i, j) = (rng.gen_range(0..20), rng.gen_range(0..10));
            a[[i, j]] = f64::NAN;
        }
        let g = gm(a.clone());
        let out = impute_missing(&g).unwrap();
        for j in 0..10 {
            let obs: Vec<f64> = a.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
            let obs_mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let full_mean = out.column(j).iter().sum::<f64>() / 20.0;
            assert!((obs_mean - full_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizes_to_unit_norm() {
        let g = gm(array![[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]);
        let s = standardize(&g).unwrap();
        assert_eq!(s.dropped, vec!["rs1".to_string()]);
        let c = s.matrix.column(0);
        let h = 1.0 / 2f64.sqrt();
        assert!((c[0] + h).abs() < 1e-15 && c[1].abs() < 1e-15 && (c[2] - h).abs() < 1e-15);
        assert!(s.matrix.is_standardized());
    }

    #[test]
    fn standardize_rejects_missing() {
        let g = gm(array![[0.0], [f64::NAN]]);
        assert!(matches!(standardize(&g), Err(Error::MissingValues(1))));
    }

    #[test]
    fn random_columns_are_centred_unit_norm_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((37, 25), |_| rng.gen_range(0..3) as f64);
        let s = standardize(&gm(a)).unwrap().matrix;
        for j in 0..s.n_snps() {
            let c = s.column(j);
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let ss: f64 = c.iter().map(|v| v * v).sum();
            assert!(mean.abs() < 1e-12);
            assert!((ss - 1.0).abs() < 1e-12);
        }
        let twice = standardize(&s).unwrap().matrix;
        let diff = (twice.values() - s.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }
}
