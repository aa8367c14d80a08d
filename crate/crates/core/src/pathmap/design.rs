use std::ops::Range;

use ndarray::{Array2, ShapeBuilder};

use super::annotation::PathwayAnnotation;
use crate::error::{Error, Result};
use crate::ingest::{standardize_column, GenotypeMatrix};

/// Overlap-expanded design `X = [X_1, ..., X_L]`.
///
/// Shared SNPs are stored once; the P* expanded columns index into that
/// compact matrix, so an expanded column is the source column itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedDesign {
    x: Array2<f64>,
    source: Vec<usize>,
    offsets: Vec<usize>,
    /// Column of the genotype matrix behind each compact column.
    genotype_col: Vec<usize>,
}

impl ExpandedDesign {
    /// Design over explicit column groups of `x` (N × P, column norms ≤ 1).
    pub fn from_groups(x: Array2<f64>, groups: &[Vec<usize>]) -> Result<Self> {
        let p = x.ncols();
        for (k, c) in x.columns().into_iter().enumerate() {
            let ss: f64 = c.iter().map(|v| v * v).sum();
            if !(ss <= 1.0 + 1e-8) {
                return Err(Error::Dimension(format!("column {k} has squared norm {ss} > 1")));
            }
        }
        let mut source = Vec::new();
        let mut offsets = vec![0];
        for (l, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidParameter(format!("group {l} is empty")));
            }
            if let Some(&j) = g.iter().find(|&&j| j >= p) {
                return Err(Error::Dimension(format!("group {l} references column {j} of {p}")));
            }
            source.extend_from_slice(g);
            offsets.push(source.len());
        }
        let mut x = x;
        if !x.t().is_standard_layout() {
            let mut f = Array2::zeros(x.dim().f());
            f.assign(&x);
            x = f;
        }
        Ok(ExpandedDesign {
            x,
            source,
            offsets,
            genotype_col: (0..p).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    /// P* = Σ S_l.
    pub fn n_cols(&self) -> usize {
        self.source.len()
    }

    pub fn block(&self, l: usize) -> Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Expanded column `k`.
    pub fn col(&self, k: usize) -> &[f64] {
        self.compact_col(self.source[k])
    }

    pub fn compact(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn compact_col(&self, c: usize) -> &[f64] {
        self.x.column(c).to_slice().expect("column-major design")
    }

    /// Compact column behind each expanded column.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    /// Genotype-matrix column behind compact column `c`.
    pub fn genotype_col(&self, c: usize) -> usize {
        self.genotype_col[c]
    }

    /// (pathway, genotype column) for every expanded column.
    pub fn column_map(&self) -> Vec<(usize, usize)> {
        (0..self.n_groups())
            .flat_map(|l| self.block(l).map(move |k| (l, k)))
            .map(|(l, k)| (l, self.genotype_col[self.source[k]]))
            .collect()
    }

    /// X b for an expanded coefficient vector.
    pub fn mul(&self, b: &[f64]) -> Vec<f64> {
        let mut compact = vec![0.0; self.x.ncols()];
        for (k, &v) in b.iter().enumerate() {
            compact[self.source[k]] += v;
        }
        let mut out = vec![0.0; self.n_rows()];
        for (c, &v) in compact.iter().enumerate() {
            if v != 0.0 {
                axpy(v, self.compact_col(c), &mut out);
            }
        }
        out
    }

    /// The same design on a subset of rows, with every column re-centred and
    /// rescaled to unit norm on that subset. Columns that become constant are
    /// zeroed.
    pub fn restrict_rows(&self, rows: &[usize]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * self.x.ncols());
        let mut buf = vec![0.0; n];
        for c in 0..self.x.ncols() {
            let col = self.compact_col(c);
            for (slot, &i) in buf.iter_mut().zip(rows) {
                *slot = col[i];
            }
            match standardize_column(&buf) {
                Some(s) => data.extend(s),
                None => data.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        ExpandedDesign {
            x: Array2::from_shape_vec((n, self.x.ncols()).f(), data).expect("shape"),
            source: self.source.clone(),
            offsets: self.offsets.clone(),
            genotype_col: self.genotype_col.clone(),
        }
    }
}

/// Builds the expanded design from a standardized genotype matrix. SNPs are
/// matched by identifier, so `g` may have been filtered after annotation.
pub fn expand_design(g: &GenotypeMatrix, annotation: &PathwayAnnotation) -> Result<ExpandedDesign> {
    if !g.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let index = g.snp_index();
    let universe = annotation.snps();
    let mut compact_of = vec![usize::MAX; universe.len()];
    let mut genotype_col = Vec::new();
    let mut source = Vec::with_capacity(annotation.n_expanded());
    let mut offsets = vec![0];
    for p in annotation.pathways() {
        for &j in &p.snps {
            if compact_of[j] == usize::MAX {
                let id = universe[j].id.as_str();
                let col = *index.get(id).ok_or_else(|| Error::UnknownSnp(id.to_string()))?;
                compact_of[j] = genotype_col.len();
                genotype_col.push(col);
            }
            source.push(compact_of[j]);
        }
        offsets.push(source.len());
    }
    let n = g.n_subjects();
    let mut data = Vec::with_capacity(n * genotype_col.len());
    for &c in &genotype_col {
        data.extend_from_slice(g.column(c));
    }
    Ok(ExpandedDesign {
        x: Array2::from_shape_vec((n, genotype_col.len()).f(), data).expect("shape"),
        source,
        offsets,
        genotype_col,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
