use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::genome::SimulationSpec;
use crate::error::{Error, Result};
use crate::ingest::GenotypeMatrix;
use crate::pathmap::PathwayAnnotation;
use crate::rng::{rng_for, stream};

/// Subtracts each column's mean.
pub fn center_columns(y: &mut Array2<f64>) {
    for mut c in y.axis_iter_mut(Axis(1)) {
        let m = c.mean().unwrap_or(0.0);
        c.mapv_inplace(|v| v - m);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPhenotype {
    /// N × Q, column-centred.
    pub y: Array2<f64>,
    /// True genotype loadings over the columns of the genotype matrix, unit norm.
    pub b_star: Vec<f64>,
    /// True trait loadings, unit norm.
    pub a_star: Vec<f64>,
    /// Genotype columns carrying an effect, ascending.
    pub causal_snps: Vec<usize>,
    /// √N · X b*: the latent genetic factor on the unit-variance scale.
    pub factor: Vec<f64>,
}

/// Y = √N·X b* a*ᵀ + E with E ~ N(0, σ²), then column-centred.
///
/// X is the standardized genotype matrix, so √N·X has unit-variance columns
/// and σ is on the same scale as a single genotype.
pub fn plant_rank1_phenotype(
    g: &GenotypeMatrix,
    annotation: &PathwayAnnotation,
    spec: &SimulationSpec,
) -> Result<PlantedPhenotype> {
    if !g.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let index = g.snp_index();
    let mut rng = rng_for(spec.seed, stream::PHENOTYPE, 0);
    let mut causal = Vec::new();
    for &l in &spec.causal_pathways {
        let p = annotation
            .pathways()
            .get(l)
            .ok_or_else(|| Error::InvalidParameter(format!("causal pathway {l} does not exist")))?;
        if spec.causal_snps_per_pathway > p.snps.len() {
            return Err(Error::InvalidParameter(format!(
                "{} causal SNPs requested but pathway `{}` has {}",
                spec.causal_snps_per_pathway,
                p.name,
                p.snps.len()
            )));
        }
        for &j in p.snps.choose_multiple(&mut rng, spec.causal_snps_per_pathway) {
            let id = &annotation.snps()[j].id;
            let col = *index.get(id.as_str()).ok_or_else(|| Error::UnknownSnp(id.clone()))?;
            causal.push(col);
        }
    }
    causal.sort_unstable();
    causal.dedup();
    if causal.is_empty() {
        return Err(Error::InvalidParameter("no causal SNPs".into()));
    }
    let mag = 1.0 / (causal.len() as f64).sqrt();
    let mut b_star = vec![0.0; g.n_snps()];
    for &j in &causal {
        b_star[j] = if rng.gen::<bool>() { mag } else { -mag };
    }
    let q = spec.n_traits;
    let mut a_star: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
    let an = a_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    a_star.iter_mut().for_each(|v| *v /= an);

    let n = g.n_subjects();
    let scale = (n as f64).sqrt();
    let mut factor = vec![0.0; n];
    for &j in &causal {
        for (f, x) in factor.iter_mut().zip(g.column(j)) {
            *f += scale * b_star[j] * x;
        }
    }
    let mut noise = rng_for(spec.seed, stream::PHENOTYPE, 1);
    let mut y = Array2::from_shape_fn((n, q), |(i, k)| factor[i] * a_star[k]);
    if spec.sigma > 0.0 {
        y.mapv_inplace(|v| v + spec.sigma * noise.sample::<f64, _>(StandardNormal));
    }
    center_columns(&mut y);
    Ok(PlantedPhenotype {
        y,
        b_star,
        a_star,
        causal_snps: causal,
        factor,
    })
}

/// Independent standard-normal traits, column-centred.
pub fn null_phenotype(n: usize, q: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, stream::PHENOTYPE, 2);
    let mut y = Array2::from_shape_fn((n, q), |_| rng.sample(StandardNormal));
    center_columns(&mut y);
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::standardize;
    use crate::simulate::SimulatedGenome;

    fn setup(sigma: f64) -> (GenotypeMatrix, PathwayAnnotation, SimulationSpec) {
        let spec = SimulationSpec {
            n_subjects: 120,
            n_snps: 400,
            n_pathways: 5,
            pathway_size_min: 30,
            pathway_size_max: 60,
            n_traits: 8,
            causal_snps_per_pathway: 10,
            causal_pathways: vec![1],
            sigma,
            ..Default::default()
        };
        let genome = SimulatedGenome::generate(&spec).unwrap();
        let (a, _) = genome.annotate(10_000).unwrap();
        let g = standardize(&genome.genotypes).unwrap().matrix;
        (g, a, spec)
    }

    #[test]
    fn noiseless_phenotype_is_rank_one_and_sparse() {
        let (g, a, spec) = setup(0.0);
        let p = plant_rank1_phenotype(&g, &a, &spec).unwrap();
        // rank one: every 2x2 minor vanishes
        let y = &p.y;
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 1..y.nrows() {
            for k in 1..y.ncols() {
                let minor = y[[0, 0]] * y[[i, k]] - y[[0, k]] * y[[i, 0]];
                assert!(minor.abs() < 1e-10 * scale * scale);
            }
        }
        let causal_ids: Vec<&str> = a.pathways()[1].snps.iter().map(|&j| a.snps()[j].id.as_str()).collect();
        for (j, s) in g.snps().iter().enumerate() {
            if !causal_ids.contains(&s.id.as_str()) {
                assert_eq!(p.b_star[j], 0.0);
            }
        }
        let bn: f64 = p.b_star.iter().map(|v| v * v).sum();
        assert!((bn - 1.0).abs() < 1e-12);
        assert_eq!(p.causal_snps.len(), 10);
    }

    #[test]
    fn noise_has_requested_sd() {
        let (g, a, mut spec) = setup(0.7);
        spec.n_traits = 900;
        let p = plant_rank1_phenotype(&g, &a, &spec).unwrap();
        let mut resid = p.y.clone();
        for i in 0..resid.nrows() {
            for k in 0..resid.ncols() {
                resid[[i, k]] -= p.factor[i] * p.a_star[k];
            }
        }
        center_columns(&mut resid);
        let n = resid.len() as f64;
        let sd = (resid.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((sd / 0.7 - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn null_phenotype_is_centred_and_reproducible() {
        let y = null_phenotype(1000, 5, 3);
        for c in y.columns() {
            assert!(c.sum().abs() < 1e-10);
            let sd = (c.iter().map(|v| v * v).sum::<f64>() / 999.0).sqrt();
            assert!((sd - 1.0).abs() < 0.05);
        }
        assert_eq!(null_phenotype(1000, 5, 3), y);
    }
}
