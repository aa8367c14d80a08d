use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::tsv::TsvWriter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub r#fn: usize,
}

impl Confusion {
    fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.r#fn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.r#fn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub folds: Vec<Confusion>,
    pub overall: Confusion,
}

impl ValidationReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    pub fn sensitivity(&self) -> f64 {
        self.overall.sensitivity()
    }

    pub fn specificity(&self) -> f64 {
        self.overall.specificity()
    }

    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["fold", "n", "tp", "tn", "fp", "fn", "accuracy", "sensitivity", "specificity"]);
        let rows = self
            .folds
            .iter()
            .enumerate()
            .map(|(k, c)| (k.to_string(), c))
            .chain(std::iter::once(("all".to_string(), &self.overall)));
        for (name, c) in rows {
            w.row([
                name,
                c.total().to_string(),
                c.tp.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                c.r#fn.to_string(),
                c.accuracy().to_string(),
                c.sensitivity().to_string(),
                c.specificity().to_string(),
            ]);
        }
        w.into_string()
    }
}

/// Class means and pooled per-dimension variances.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    mean_pos: Vec<f64>,
    mean_neg: Vec<f64>,
    var: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn fit(y: ArrayView2<f64>, labels: &[bool], rows: &[usize]) -> Self {
        let q = y.ncols();
        let mut sums = [vec![0.0; q], vec![0.0; q]];
        let mut n = [0usize; 2];
        for &i in rows {
            let c = usize::from(labels[i]);
            n[c] += 1;
            sums[c].iter_mut().zip(y.row(i)).for_each(|(s, v)| *s += v);
        }
        let means: Vec<Vec<f64>> = (0..2)
            .map(|c| sums[c].iter().map(|s| s / n[c].max(1) as f64).collect())
            .collect();
        let mut var = vec![0.0; q];
        for &i in rows {
            let m = &means[usize::from(labels[i])];
            for ((v, x), mu) in var.iter_mut().zip(y.row(i)).zip(m) {
                *v += (x - mu).powi(2);
            }
        }
        let dof = rows.len().saturating_sub(2).max(1) as f64;
        var.iter_mut().for_each(|v| *v /= dof);
        let mean_v = var.iter().sum::<f64>() / q.max(1) as f64;
        let floor = (1e-9 * mean_v).max(f64::MIN_POSITIVE);
        var.iter_mut().for_each(|v| *v = v.max(floor));
        DiagonalGaussian {
            mean_neg: means[0].clone(),
            mean_pos: means[1].clone(),
            var,
        }
    }

    /// Log-density ratio, positive class over negative, with equal priors.
    pub fn score(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        x.into_iter()
            .zip(&self.var)
            .zip(self.mean_pos.iter().zip(&self.mean_neg))
            .map(|((x, v), (mp, mn))| ((x - mn).powi(2) - (x - mp).powi(2)) / (2.0 * v))
            .sum()
    }

    pub fn predict(&self, x: impl IntoIterator<Item = f64>) -> bool {
        self.score(x) > 0.0
    }
}

/// Stratified fold index per subject.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut out = vec![0; labels.len()];
    for (c, class) in [false, true].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng_for(seed, stream::FOLDS, c as u64));
        for (k, i) in idx.into_iter().enumerate() {
            out[i] = k % folds;
        }
    }
    out
}

/// k-fold cross-validated accuracy of a diagonal-covariance Gaussian
/// classifier. `labels` marks the positive class.
pub fn validate_signature(
    y: ArrayView2<f64>,
    labels: &[bool],
    folds: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if labels.len() != y.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} subjects",
            labels.len(),
            y.nrows()
        )));
    }
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    for class in [true, false] {
        let n = labels.iter().filter(|&&l| l == class).count();
        if n < folds {
            return Err(Error::GroupTooSmall {
                group: if class { "positive" } else { "negative" }.to_string(),
                n,
                min: folds,
            });
        }
    }
    let assign = stratified_folds(labels, folds, seed);
    let mut report = ValidationReport {
        folds: vec![Confusion { tp: 0, tn: 0, fp: 0, r#fn: 0 }; folds],
        overall: Confusion { tp: 0, tn: 0, fp: 0, r#fn: 0 },
    };
    for k in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != k).collect();
        let model = DiagonalGaussian::fit(y, labels, &train);
        for i in (0..labels.len()).filter(|&i| assign[i] == k) {
            let p = model.predict(y.row(i).iter().copied());
            report.folds[k].add(labels[i], p);
            report.overall.add(labels[i], p);
        }
    }
    Ok(report)
}
