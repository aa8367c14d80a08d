#![allow(dead_code)]

use std::ops::Range;

use ndarray::{Array1, Array2};
use psrrr::pathmap::ExpandedDesign;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gaussian columns, centred and scaled to unit Euclidean norm.
pub fn unit_columns(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let mut x = Array2::zeros((n, p));
    for mut c in x.columns_mut() {
        let v = gaussian(rng, n);
        let m = v.iter().sum::<f64>() / n as f64;
        let s = v.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt();
        c.iter_mut().zip(&v).for_each(|(d, x)| *d = (x - m) / s);
    }
    x
}

pub struct Instance {
    pub design: ExpandedDesign,
    pub weights: Vec<f64>,
    /// z = Y a for a random Y and fixed unit a.
    pub z: Vec<f64>,
    pub blocks: Vec<Range<usize>>,
}

/// Random groups over `p` unit-norm columns; with `overlap` some columns
/// appear in two groups.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, max_groups: usize, max_cols: usize, q: usize, overlap: bool) -> Instance {
    let l = rng.gen_range(1..=max_groups);
    // one spare column per group for the optional overlap
    let cap = (max_cols / l).saturating_sub(1).max(1);
    let sizes: Vec<usize> = (0..l).map(|_| rng.gen_range(1..=cap)).collect();
    let p = sizes.iter().sum::<usize>();
    let x = unit_columns(rng, n, p);
    let mut groups = Vec::new();
    let mut start = 0;
    for &s in &sizes {
        let mut g: Vec<usize> = (start..start + s).collect();
        if overlap && rng.gen_bool(0.5) {
            let extra = rng.gen_range(0..p);
            if !g.contains(&extra) {
                g.push(extra);
            }
        }
        groups.push(g);
        start += s;
    }
    let weights = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
    let y = Array2::from_shape_fn((n, q), |_| rng.sample::<f64, _>(StandardNormal));
    let a: Vec<f64> = {
        let v = gaussian(rng, q);
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / s).collect()
    };
    let z: Vec<f64> = (0..n).map(|i| (0..q).map(|k| y[[i, k]] * a[k]).sum()).collect();
    let mut blocks = Vec::new();
    let mut off = 0;
    for g in &groups {
        blocks.push(off..off + g.len());
        off += g.len();
    }
    let design = ExpandedDesign::from_groups(x, &groups).unwrap();
    Instance { design, weights, z, blocks }
}

/// N × P* matrix with one column per expanded coefficient.
pub fn dense(design: &ExpandedDesign) -> Array2<f64> {
    let mut x = Array2::zeros((design.n_rows(), design.n_cols()));
    for k in 0..design.n_cols() {
        x.column_mut(k).iter_mut().zip(design.col(k)).for_each(|(d, s)| *d = *s);
    }
    x
}

fn mat_vec(x: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    (0..x.nrows()).map(|i| (0..x.ncols()).map(|k| x[[i, k]] * b[k]).sum()).collect()
}

fn mat_t_vec(x: &Array2<f64>, r: &[f64]) -> Vec<f64> {
    (0..x.ncols()).map(|k| (0..x.nrows()).map(|i| x[[i, k]] * r[i]).sum()).collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ½‖z − Xb‖² + λ Σ w_l ‖b_l‖, evaluated from the dense matrix.
pub fn reference_objective(x: &Array2<f64>, blocks: &[Range<usize>], z: &[f64], b: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let xb = mat_vec(x, b);
    let rss: f64 = z.iter().zip(&xb).map(|(a, c)| (a - c).powi(2)).sum();
    0.5 * rss + lambda * blocks.iter().zip(w).map(|(r, wl)| wl * l2(&b[r.clone()])).sum::<f64>()
}

/// Accelerated proximal gradient with adaptive restart, run to stationarity.
pub fn proximal_gradient(x: &Array2<f64>, blocks: &[Range<usize>], z: &[f64], lambda: f64, w: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let gram = x.t().dot(x);
    let xtz = x.t().dot(&ndarray::ArrayView1::from(z));
    // largest eigenvalue of XᵀX by power iteration
    let mut v = Array1::from_elem(p, 1.0);
    let mut lip = 0.0;
    for _ in 0..500 {
        let u = gram.dot(&v);
        lip = u.dot(&u).sqrt();
        if lip == 0.0 {
            return vec![0.0; p];
        }
        v = u / lip;
    }
    let step = 1.0 / (lip * 1.001);
    let prox = |u: &mut Array1<f64>| {
        for (r, wl) in blocks.iter().zip(w) {
            let mut s = u.slice_mut(ndarray::s![r.clone()]);
            let nrm = s.dot(&s).sqrt();
            let shrink = if nrm > 0.0 { (1.0 - step * lambda * wl / nrm).max(0.0) } else { 0.0 };
            s *= shrink;
        }
    };
    let mut b = Array1::<f64>::zeros(p);
    let mut yk = b.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = &xtz - &gram.dot(&yk);
        let mut next = &yk + &(step * &g);
        prox(&mut next);
        let diff = &next - &b;
        let change = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        // gradient-based momentum restart
        if (&yk - &next).dot(&diff) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = &next + &(((t - 1.0) / t_next) * &diff);
        b = next;
        t = t_next;
        if change < 1e-14 {
            break;
        }
    }
    b.to_vec()
}

pub fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// One-sample Kolmogorov-Smirnov test against U(0,1): (D, asymptotic p).
pub fn ks_uniform(sample: &[f64]) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    // Stephens' small-sample correction to the Kolmogorov tail
    let t = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp()
        })
        .sum();
    (d, p.clamp(0.0, 1.0))
}

pub mod fixtures {
    use ndarray::Array2;
    use psrrr::ingest::{standardize, Chromosome, GenotypeMatrix, SnpInfo};
    use psrrr::pathmap::{expand_design, ExpandedDesign, Pathway, PathwayAnnotation};
    use psrrr::ranking::SubsampleRecord;
    use rand::Rng;

    pub struct Attribution {
        pub genotypes: GenotypeMatrix,
        pub annotation: PathwayAnnotation,
        pub design: ExpandedDesign,
        pub y: Array2<f64>,
    }

    /// rs1 lies between APOE and TOMM40 and maps to both. Pathway A holds
    /// TOMM40 only, pathway B holds APOE; both contain rs1. The traits are
    /// driven by rs1 alone.
    pub fn attribution(seed: u64) -> Attribution {
        let mut rng = super::rng(seed);
        let n = 80;
        let snp = |id: &str, pos| SnpInfo {
            id: id.to_string(),
            chromosome: Chromosome::Autosome(19),
            position: pos,
        };
        let snps = vec![snp("rs1", 1000), snp("rs2", 3000), snp("rs3", 5000), snp("rs4", 9000)];
        let snp_genes = vec![
            vec!["APOE".to_string(), "TOMM40".to_string()],
            vec!["TOMM40".to_string()],
            vec!["APOE".to_string()],
            vec!["GENEB".to_string()],
        ];
        let pathways = vec![
            Pathway {
                name: "A".into(),
                genes: vec!["TOMM40".into()],
                snps: vec![0, 1],
            },
            Pathway {
                name: "B".into(),
                genes: vec!["APOE".into(), "GENEB".into()],
                snps: vec![0, 2, 3],
            },
        ];
        let values = Array2::from_shape_fn((n, 4), |_| rng.gen_range(0..3) as f64);
        let raw = GenotypeMatrix::new(values, snps.clone(), (0..n).map(|i| format!("s{i}")).collect()).unwrap();
        let genotypes = standardize(&raw).unwrap().matrix;
        let annotation = PathwayAnnotation::new(snps, snp_genes, pathways).unwrap();
        let design = expand_design(&genotypes, &annotation).unwrap();
        let a = [0.6, 0.8, 0.0];
        let causal = genotypes.column(0).to_vec();
        let y = Array2::from_shape_fn((n, 3), |(i, k)| {
            (n as f64).sqrt() * causal[i] * a[k] + 0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        Attribution {
            genotypes,
            annotation,
            design,
            y,
        }
    }

    pub fn record(b: usize, rows: Vec<usize>, selected: Vec<usize>, annotation: &PathwayAnnotation) -> SubsampleRecord {
        SubsampleRecord {
            b,
            rows_sha256: String::new(),
            n_rows: rows.len(),
            rows,
            pathways: selected.iter().map(|&l| annotation.pathways()[l].name.clone()).collect(),
            block_norms: vec![1.0; selected.len()],
            selected,
            lambda: 0.0,
            lambda_max: 0.0,
            converged: true,
            n_candidate_snps: 0,
            snps: Vec::new(),
            snp_index: Vec::new(),
            genes: Vec::new(),
            lambda_snp: 0.0,
        }
    }
}
