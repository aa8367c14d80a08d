use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv::{self, TsvWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Chromosome {
    Autosome(u8),
    X,
    Y,
    MT,
}

impl Chromosome {
    pub fn is_autosome(self) -> bool {
        matches!(self, Chromosome::Autosome(_))
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t
            .strip_prefix("chr")
            .or_else(|| t.strip_prefix("CHR"))
            .unwrap_or(t);
        match t {
            "X" | "x" => Ok(Chromosome::X),
            "Y" | "y" => Ok(Chromosome::Y),
            "MT" | "mt" | "M" => Ok(Chromosome::MT),
            _ => match t.parse::<u8>() {
                Ok(n @ 1..=22) => Ok(Chromosome::Autosome(n)),
                _ => Err(Error::UnknownChromosome(s.to_string())),
            },
        }
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chromosome::Autosome(n) => write!(f, "{n}"),
            Chromosome::X => f.write_str("X"),
            Chromosome::Y => f.write_str("Y"),
            Chromosome::MT => f.write_str("MT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnpInfo {
    pub id: String,
    pub chromosome: Chromosome,
    /// 1-based base-pair position.
    pub position: u64,
}

/// Subjects × SNPs minor-allele counts. Missing calls are stored as NaN.
///
/// Storage is column-major so that per-SNP columns are contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    values: Array2<f64>,
    snps: Vec<SnpInfo>,
    subject_ids: Vec<String>,
    standardized: bool,
}

impl GenotypeMatrix {
    pub fn new(values: Array2<f64>, snps: Vec<SnpInfo>, subject_ids: Vec<String>) -> Result<Self> {
        let (n, p) = values.dim();
        if n != subject_ids.len() || p != snps.len() {
            return Err(Error::Dimension(format!(
                "matrix is {n}x{p} but there are {} subjects and {} SNPs",
                subject_ids.len(),
                snps.len()
            )));
        }
        check_unique(subject_ids.iter())?;
        check_unique(snps.iter().map(|s| &s.id))?;
        Ok(GenotypeMatrix {
            values: to_column_major(values),
            snps,
            subject_ids,
            standardized: false,
        })
    }

    pub(crate) fn with_values(&self, values: Array2<f64>, standardized: bool) -> Self {
        GenotypeMatrix {
            values: to_column_major(values),
            snps: self.snps.clone(),
            subject_ids: self.subject_ids.clone(),
            standardized,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn snps(&self) -> &[SnpInfo] {
        &self.snps
    }

    pub fn snp_ids(&self) -> impl Iterator<Item = &str> {
        self.snps.iter().map(|s| s.id.as_str())
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.values
            .column(j)
            .to_slice()
            .expect("genotype storage is column-major")
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.values[[i, j]].is_nan()
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Keeps the listed SNP columns, in the given order.
    pub fn select_snps(&self, cols: &[usize]) -> Self {
        let n = self.n_subjects();
        let mut data = Vec::with_capacity(n * cols.len());
        for &j in cols {
            data.extend_from_slice(self.column(j));
        }
        GenotypeMatrix {
            values: Array2::from_shape_vec((n, cols.len()).f(), data).expect("shape"),
            snps: cols.iter().map(|&j| self.snps[j].clone()).collect(),
            subject_ids: self.subject_ids.clone(),
            standardized: self.standardized,
        }
    }

    pub fn snp_index(&self) -> HashMap<&str, usize> {
        self.snps
            .iter()
            .enumerate()
            .map(|(j, s)| (s.id.as_str(), j))
            .collect()
    }
}

pub(crate) fn to_column_major(a: Array2<f64>) -> Array2<f64> {
    if a.t().is_standard_layout() {
        a
    } else {
        let mut out = Array2::zeros(a.dim().f());
        out.assign(&a);
        out
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Reads the SNP metadata table: `snp_id`, `chromosome`, `position`.
pub fn parse_snp_metadata(path: &Path) -> Result<Vec<SnpInfo>> {
    let table = tsv::read_table(path, "snp_id")?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        if fields.len() < 3 {
            return Err(table.err(*line, format!("expected 3 columns, found {}", fields.len())));
        }
        let chromosome: Chromosome = fields[1].parse()?;
        let position = fields[2]
            .parse::<u64>()
            .ok()
            .filter(|&p| p >= 1)
            .ok_or_else(|| table.err(*line, format!("invalid position `{}`", fields[2])))?;
        out.push(SnpInfo {
            id: fields[0].clone(),
            chromosome,
            position,
        });
    }
    check_unique(out.iter().map(|s| &s.id))?;
    Ok(out)
}

/// Reads a genotype table (header of SNP ids, then `subject_id` followed by
/// one `{0,1,2,NA}` call per SNP) and attaches positions from the metadata
/// table.
pub fn parse_genotypes(genotype_file: &Path, snp_metadata_file: &Path) -> Result<GenotypeMatrix> {
    let meta = parse_snp_metadata(snp_metadata_file)?;
    let by_id: HashMap<&str, &SnpInfo> = meta.iter().map(|s| (s.id.as_str(), s)).collect();

    let table = tsv::read_table(genotype_file, "subject_id")?;
    let mut header = table
        .header
        .clone()
        .ok_or_else(|| table.err(1, "missing header row of SNP ids"))?;
    let width = table.rows.first().map(|(_, f)| f.len());
    // The header may or may not name the subject column.
    let names_subject = header
        .first()
        .is_some_and(|h| h.eq_ignore_ascii_case("subject_id"));
    if names_subject || width == Some(header.len()) {
        header.remove(0);
    }
    let p = header.len();

    let mut snps = Vec::with_capacity(p);
    for id in &header {
        let info = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownSnp(id.clone()))?;
        snps.push((*info).clone());
    }
    check_unique(snps.iter().map(|s| &s.id))?;

    let n = table.rows.len();
    let mut values = Array2::<f64>::zeros((n, p).f());
    let mut subjects = Vec::with_capacity(n);
    for (i, (line, fields)) in table.rows.iter().enumerate() {
        if fields.len() != p + 1 {
            return Err(table.err(
                *line,
                format!("expected {} fields (subject + {p} SNPs), found {}", p + 1, fields.len()),
            ));
        }
        subjects.push(fields[0].clone());
        for (j, f) in fields[1..].iter().enumerate() {
            values[[i, j]] = match f.as_str() {
                "0" => 0.0,
                "1" => 1.0,
                "2" => 2.0,
                "NA" | "na" | "." => f64::NAN,
                other => {
                    return Err(table.err(*line, format!("invalid genotype `{other}` for SNP {}", header[j])))
                }
            };
        }
    }
    GenotypeMatrix::new(values, snps, subjects)
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        v.to_string()
    }
}

pub fn genotypes_to_tsv(g: &GenotypeMatrix) -> String {
    let mut header = vec!["subject_id"];
    header.extend(g.snp_ids());
    let mut w = TsvWriter::new(&header);
    for (i, s) in g.subject_ids().iter().enumerate() {
        let row = g.values.row(i);
        w.row(std::iter::once(s.clone()).chain(row.iter().map(|&v| format_value(v))));
    }
    w.into_string()
}

pub fn write_genotypes(g: &GenotypeMatrix, path: &Path) -> Result<()> {
    tsv::write_file(path, genotypes_to_tsv(g).as_bytes())
}

pub fn write_snp_metadata(snps: &[SnpInfo], path: &Path) -> Result<()> {
    let mut w = TsvWriter::new(&["snp_id", "chromosome", "position"]);
    for s in snps {
        w.row([s.id.clone(), s.chromosome.to_string(), s.position.to_string()]);
    }
    w.write_to(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    const META: &str = "snp_id\tchromosome\tposition\nrs1\t1\t100\nrs2\tchr2\t200\n";

    #[test]
    fn parses_small_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.tsv", META);
        let g = write(dir.path(), "g.tsv", "#subject_id\trs1\trs2\ns1\t0\t1\ns2\t2\t2\ns3\t1\t0\n");
        let gm = parse_genotypes(&g, &m).unwrap();
        assert_eq!(gm.values().dim(), (3, 2));
        assert_eq!(gm.n_missing(), 0);
        assert_eq!(gm.column(0), &[0.0, 2.0, 1.0]);
        assert_eq!(gm.snps()[1].chromosome, Chromosome::Autosome(2));
        assert!(!gm.is_standardized());
    }

    #[test]
    fn header_without_subject_label_and_na() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.tsv", META);
        let g = write(dir.path(), "g.tsv", "#rs1\trs2\ns1\t0\tNA\ns2\t2\t2\n");
        let gm = parse_genotypes(&g, &m).unwrap();
        assert_eq!(gm.n_missing(), 1);
        assert!(gm.is_missing(0, 1));
    }

    #[test]
    fn malformed_rows_and_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.tsv", META);
        let g = write(dir.path(), "g.tsv", "#subject_id\trs1\trs2\ns1\t0\ns2\t2\t2\n");
        assert!(matches!(parse_genotypes(&g, &m), Err(Error::Parse { .. })));

        let g = write(dir.path(), "g2.tsv", "#subject_id\trs1\trs1\ns1\t0\t1\n");
        assert!(matches!(parse_genotypes(&g, &m), Err(Error::DuplicateId(_))));

        let g = write(dir.path(), "g3.tsv", "#subject_id\trs1\trs2\ns1\t0\t3\n");
        assert!(matches!(parse_genotypes(&g, &m), Err(Error::Parse { .. })));

        let bad = write(dir.path(), "m2.tsv", "snp_id\tchromosome\tposition\nrs1\t23\t5\n");
        assert!(matches!(parse_snp_metadata(&bad), Err(Error::UnknownChromosome(_))));
    }

    #[test]
    fn chromosome_tokens() {
        assert_eq!("22".parse::<Chromosome>().unwrap(), Chromosome::Autosome(22));
        assert_eq!("chrX".parse::<Chromosome>().unwrap(), Chromosome::X);
        assert_eq!("MT".parse::<Chromosome>().unwrap(), Chromosome::MT);
        assert!("0".parse::<Chromosome>().is_err());
        assert!("chr7".parse::<Chromosome>().unwrap().is_autosome());
    }
}
