use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::traits::TraitMatrix;
use crate::error::{Error, Result};
use crate::ingest::{Covariate, CovariateTable};
use crate::pathmap::dot;
use crate::tsv::TsvWriter;

/// Thin QR of a small dense design, kept as plain column vectors.
struct Qr {
    q: Vec<Vec<f64>>,
    r_inv: DMatrix<f64>,
}

impl Qr {
    fn new(x: DMatrix<f64>, what: &str) -> Result<Self> {
        let p = x.ncols();
        let qr = x.qr();
        let r = qr.r();
        let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient(format!("{what} design has collinear columns")));
        }
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient(format!("{what} design is singular")))?;
        let qm = qr.q();
        let q = (0..p).map(|j| qm.column(j).iter().copied().collect()).collect();
        Ok(Qr { q, r_inv })
    }

    fn qty(&self, y: &[f64]) -> Vec<f64> {
        self.q.iter().map(|c| dot(c, y)).collect()
    }

    fn residual(&self, y: &[f64], qty: &[f64]) -> Vec<f64> {
        let mut r = y.to_vec();
        for (c, &w) in self.q.iter().zip(qty) {
            r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= w * ci);
        }
        r
    }
}

/// Upper tail of F(1, ν) at `f`.
pub fn f1_sf(f: f64, df: f64) -> f64 {
    if f.is_nan() {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + f)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncovaResult {
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    /// Residual degrees of freedom, n_a + n_b − 4.
    pub df: usize,
    pub threshold: f64,
    pub f_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Traits with p below the Bonferroni threshold, ascending.
    pub selected: Vec<usize>,
}

impl AncovaResult {
    pub fn to_tsv(&self, names: &[String]) -> String {
        let mut w = TsvWriter::new(&["trait_index", "trait", "f_stat", "p_value", "selected"]);
        for (k, name) in names.iter().enumerate() {
            w.row([
                k.to_string(),
                name.clone(),
                self.f_stats[k].to_string(),
                format!("{:e}", self.p_values[k]),
                (self.p_values[k] < self.threshold).to_string(),
            ]);
        }
        w.comment(&format!(
            "groups={}:{}\tn={}:{}\tthreshold={:e}\tselected={}",
            self.group_a,
            self.group_b,
            self.n_a,
            self.n_b,
            self.threshold,
            self.selected.len()
        ));
        w.into_string()
    }
}

/// Per trait, regresses the slope on [1, 1{group = a}, sex, age] over the
/// two contrast groups and tests the group coefficient (F with 1 and n − 4
/// degrees of freedom). Traits with p < α/Q* are selected.
pub fn ancova_filter(
    slopes: &TraitMatrix,
    covariates: &CovariateTable,
    group_a: &str,
    group_b: &str,
    alpha: f64,
) -> Result<AncovaResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if group_a == group_b {
        return Err(Error::InvalidParameter("the two contrast groups must differ".into()));
    }
    let cov = covariates.align(&slopes.subject_ids)?;
    let rows: Vec<usize> = (0..cov.len())
        .filter(|&i| cov[i].group == group_a || cov[i].group == group_b)
        .collect();
    let n_a = rows.iter().filter(|&&i| cov[i].group == group_a).count();
    let n_b = rows.len() - n_a;
    for (g, n) in [(group_a, n_a), (group_b, n_b)] {
        if n < 2 {
            return Err(Error::GroupTooSmall {
                group: g.to_string(),
                n,
                min: 2,
            });
        }
    }
    let n = rows.len();
    if n <= 4 {
        return Err(Error::SingularFit(format!("{n} subjects leave no residual degrees of freedom")));
    }
    let x = DMatrix::from_fn(n, 4, |i, j| {
        let c: &Covariate = cov[rows[i]];
        match j {
            0 => 1.0,
            1 => f64::from(u8::from(c.group == group_a)),
            2 => f64::from(c.sex),
            _ => c.age,
        }
    });
    let qr = Qr::new(x, "ANCOVA")?;
    let c11: f64 = (0..4).map(|j| qr.r_inv[(1, j)].powi(2)).sum();
    let df = n - 4;
    let q_star = slopes.trait_names.len();
    let threshold = alpha / q_star.max(1) as f64;

    let stats: Vec<(f64, f64)> = (0..q_star)
        .into_par_iter()
        .map(|k| {
            let col = slopes.values.column(k);
            let y: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
            let qty = qr.qty(&y);
            let beta1: f64 = (0..4).map(|j| qr.r_inv[(1, j)] * qty[j]).sum();
            let r = qr.residual(&y, &qty);
            let sigma2 = dot(&r, &r) / df as f64;
            let f = beta1 * beta1 / (sigma2 * c11);
            (f, f1_sf(f, df as f64))
        })
        .collect();
    let selected = (0..q_star).filter(|&k| stats[k].1 < threshold).collect();
    Ok(AncovaResult {
        group_a: group_a.to_string(),
        group_b: group_b.to_string(),
        n_a,
        n_b,
        df,
        threshold,
        f_stats: stats.iter().map(|s| s.0).collect(),
        p_values: stats.iter().map(|s| s.1).collect(),
        selected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeMatrix {
    /// N × Q, residualised and column-centred.
    pub matrix: TraitMatrix,
    /// Index of each column among the original Q* traits.
    pub selected: Vec<usize>,
}

impl PhenotypeMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.matrix.values
    }
}

/// Replaces each selected trait by its residual on [1, sex, age] over all
/// subjects, then centres it.
pub fn residualize(slopes: &TraitMatrix, selected: &[usize], covariates: &CovariateTable) -> Result<PhenotypeMatrix> {
    if let Some(&k) = selected.iter().find(|&&k| k >= slopes.trait_names.len()) {
        return Err(Error::Dimension(format!("trait index {k} out of range")));
    }
    let cov = covariates.align(&slopes.subject_ids)?;
    let n = cov.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => f64::from(cov[i].sex),
        _ => cov[i].age,
    });
    let qr = Qr::new(x, "residualisation")?;
    let cols: Vec<Vec<f64>> = selected
        .par_iter()
        .map(|&k| {
            let y: Vec<f64> = slopes.values.column(k).to_vec();
            let mut r = qr.residual(&y, &qr.qty(&y));
            let m = r.iter().sum::<f64>() / n as f64;
            r.iter_mut().for_each(|v| *v -= m);
            r
        })
        .collect();
    let mut values = Array2::zeros((n, selected.len()));
    for (mut dst, src) in values.axis_iter_mut(Axis(1)).zip(&cols) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = *s);
    }
    let names = selected.iter().map(|&k| slopes.trait_names[k].clone()).collect();
    Ok(PhenotypeMatrix {
        matrix: TraitMatrix::new(slopes.subject_ids.clone(), names, values)?,
        selected: selected.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_tail_matches_tables() {
        // 5% critical values of F(1, ν) from standard tables
        for (f, df) in [(4.964_603, 10.0), (161.447_6, 1.0), (3.841_459, 1e7)] {
            assert!((f1_sf(f, df) - 0.05).abs() < 2e-6, "F({f}; 1, {df})");
        }
        assert_eq!(f1_sf(0.0, 5.0), 1.0);
        assert_eq!(f1_sf(f64::INFINITY, 5.0), 0.0);
    }

    fn covs(n: usize) -> CovariateTable {
        CovariateTable::new(
            (0..n)
                .map(|i| Covariate {
                    subject_id: format!("s{i}"),
                    age: 60.0 + (i * 7 % 13) as f64,
                    sex: (i % 2) as u8,
                    group: ["AD", "CN", "MCI"][i % 3].to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_projection_and_orthogonality() {
        let c = covs(30);
        let ids: Vec<String> = (0..30).map(|i| format!("s{i}")).collect();
        let mut v = Array2::zeros((30, 2));
        for i in 0..30 {
            let r = &c.rows()[i];
            v[[i, 0]] = 3.0 * r.age;
            v[[i, 1]] = ((i * 31 % 17) as f64).sin();
        }
        let m = TraitMatrix::new(ids, vec!["a".into(), "b".into()], v).unwrap();
        let p = residualize(&m, &[0, 1], &c).unwrap();
        assert!(p.values().column(0).iter().all(|x| x.abs() < 1e-10));
        let age: Vec<f64> = c.rows().iter().map(|r| r.age).collect();
        let sex: Vec<f64> = c.rows().iter().map(|r| f64::from(r.sex)).collect();
        let r1 = p.values().column(1).to_vec();
        assert!(dot(&r1, &age).abs() < 1e-10 && dot(&r1, &sex).abs() < 1e-10);
        assert!(r1.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let rows = (0..6)
            .map(|i| Covariate {
                subject_id: format!("s{i}"),
                age: 70.0,
                sex: 1,
                group: "AD".into(),
            })
            .collect();
        let c = CovariateTable::new(rows).unwrap();
        let m = TraitMatrix::new((0..6).map(|i| format!("s{i}")).collect(), vec!["t".into()], Array2::zeros((6, 1)))
            .unwrap();
        assert!(matches!(residualize(&m, &[0], &c), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn small_group_is_rejected() {
        let c = covs(30);
        let m = TraitMatrix::new((0..30).map(|i| format!("s{i}")).collect(), vec!["t".into()], Array2::zeros((30, 1)))
            .unwrap();
        assert!(matches!(
            ancova_filter(&m, &c, "AD", "XX", 0.05),
            Err(Error::GroupTooSmall { n: 0, .. })
        ));
    }
}
