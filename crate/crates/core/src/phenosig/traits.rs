use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tsv::{self, TsvWriter};

const LONG_MAGIC: &[u8; 8] = b"PSRLONG1";
const MAT_MAGIC: &[u8; 8] = b"PSRMAT01";

/// Per-subject repeated measurements of Q* traits.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalTable {
    subject_ids: Vec<String>,
    trait_names: Vec<String>,
    /// Per subject: (visit time in months, Q* values).
    visits: Vec<Vec<(f64, Vec<f64>)>>,
}

impl LongitudinalTable {
    /// Rows are (subject, time, values); subjects keep first-seen order.
    pub fn from_rows(trait_names: Vec<String>, rows: Vec<(String, f64, Vec<f64>)>) -> Result<Self> {
        let q = trait_names.len();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut subject_ids = Vec::new();
        let mut visits: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
        for (s, t, v) in rows {
            if v.len() != q {
                return Err(Error::Dimension(format!(
                    "subject {s} at t = {t}: {} values for {q} traits",
                    v.len()
                )));
            }
            if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("subject {s}: non-finite entry at t = {t}")));
            }
            let i = *index.entry(s.clone()).or_insert_with(|| {
                subject_ids.push(s);
                visits.push(Vec::new());
                visits.len() - 1
            });
            visits[i].push((t, v));
        }
        let times_of = |v: &[(f64, Vec<f64>)]| {
            let mut t: Vec<f64> = v.iter().map(|(t, _)| *t).collect();
            t.sort_by(f64::total_cmp);
            t
        };
        if let Some(first) = visits.first() {
            let reference = times_of(first);
            for (i, v) in visits.iter().enumerate().skip(1) {
                if times_of(v) != reference {
                    return Err(Error::InvalidParameter(format!(
                        "subject {} has visit times {:?}, expected {:?}",
                        subject_ids[i],
                        times_of(v),
                        reference
                    )));
                }
            }
        }
        Ok(LongitudinalTable {
            subject_ids,
            trait_names,
            visits,
        })
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn trait_names(&self) -> &[String] {
        &self.trait_names
    }

    pub fn n_traits(&self) -> usize {
        self.trait_names.len()
    }

    pub fn visits(&self, i: usize) -> &[(f64, Vec<f64>)] {
        &self.visits[i]
    }

    pub fn to_tsv(&self) -> String {
        let mut header = vec!["subject_id", "visit_months"];
        header.extend(self.trait_names.iter().map(String::as_str));
        let mut w = TsvWriter::new(&header);
        for (s, v) in self.subject_ids.iter().zip(&self.visits) {
            for (t, vals) in v {
                w.row(std::iter::once(s.clone()).chain(std::iter::once(t.to_string())).chain(vals.iter().map(|x| x.to_string())));
            }
        }
        w.into_string()
    }

    /// Binary layout: magic, u64 rows, u64 Q*, Q* names, then per row the
    /// subject id, an f64 time and Q* f64 values. Strings are u32-length
    /// prefixed; numbers little-endian.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = LONG_MAGIC.to_vec();
        let n_rows: usize = self.visits.iter().map(Vec::len).sum();
        out.extend((n_rows as u64).to_le_bytes());
        out.extend((self.n_traits() as u64).to_le_bytes());
        self.trait_names.iter().for_each(|n| put_str(&mut out, n));
        for (s, v) in self.subject_ids.iter().zip(&self.visits) {
            for (t, vals) in v {
                put_str(&mut out, s);
                out.extend(t.to_le_bytes());
                vals.iter().for_each(|x| out.extend(x.to_le_bytes()));
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8], file: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, file, LONG_MAGIC)?;
        let n_rows = r.u64()? as usize;
        let q = r.u64()? as usize;
        let names = (0..q).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let s = r.string()?;
            let t = r.f64()?;
            let v = (0..q).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            rows.push((s, t, v));
        }
        LongitudinalTable::from_rows(names, rows)
    }

    /// Reads either the binary form (recognised by its magic) or long TSV.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file = path.display().to_string();
        if bytes.starts_with(LONG_MAGIC) {
            return Self::from_binary(&bytes, &file);
        }
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(&file, 0, "not UTF-8 text"))?;
        let table = tsv::parse_table(&text, &file, "subject_id");
        let header = table.header.clone().ok_or_else(|| table.err(1, "missing header"))?;
        if header.len() < 3 {
            return Err(table.err(1, "need subject_id, visit_months and at least one trait"));
        }
        let names = header[2..].to_vec();
        let mut rows = Vec::with_capacity(table.rows.len());
        for (line, f) in &table.rows {
            if f.len() != header.len() {
                return Err(table.err(*line, format!("expected {} fields, found {}", header.len(), f.len())));
            }
            let t = tsv::parse_f64(&table, *line, &f[1], "visit time")?;
            let v = f[2..]
                .iter()
                .map(|x| tsv::parse_f64(&table, *line, x, "trait value"))
                .collect::<Result<Vec<_>>>()?;
            rows.push((f[0].clone(), t, v));
        }
        Self::from_rows(names, rows)
    }
}

/// Subjects × traits matrix with labels. Used for slopes and for the
/// final phenotype.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitMatrix {
    pub subject_ids: Vec<String>,
    pub trait_names: Vec<String>,
    pub values: Array2<f64>,
}

impl TraitMatrix {
    pub fn new(subject_ids: Vec<String>, trait_names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (subject_ids.len(), trait_names.len()) {
            return Err(Error::Dimension(format!(
                "values are {:?} for {} subjects and {} traits",
                values.dim(),
                subject_ids.len(),
                trait_names.len()
            )));
        }
        Ok(TraitMatrix {
            subject_ids,
            trait_names,
            values,
        })
    }

    /// Rows reordered to `subjects`.
    pub fn align<S: AsRef<str>>(&self, subjects: &[S]) -> Result<Self> {
        let idx: HashMap<&str, usize> = self.subject_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = subjects
            .iter()
            .map(|s| idx.get(s.as_ref()).copied().ok_or_else(|| Error::UnknownSubject(s.as_ref().to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(TraitMatrix {
            subject_ids: subjects.iter().map(|s| s.as_ref().to_string()).collect(),
            trait_names: self.trait_names.clone(),
            values: self.values.select(ndarray::Axis(0), &rows),
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut header = vec!["subject_id"];
        header.extend(self.trait_names.iter().map(String::as_str));
        let mut w = TsvWriter::new(&header);
        for (s, row) in self.subject_ids.iter().zip(self.values.rows()) {
            w.row(std::iter::once(s.clone()).chain(row.iter().map(|x| format!("{x:e}"))));
        }
        w.into_string()
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = MAT_MAGIC.to_vec();
        out.extend((self.subject_ids.len() as u64).to_le_bytes());
        out.extend((self.trait_names.len() as u64).to_le_bytes());
        self.subject_ids.iter().for_each(|s| put_str(&mut out, s));
        self.trait_names.iter().for_each(|s| put_str(&mut out, s));
        self.values.iter().for_each(|x| out.extend(x.to_le_bytes()));
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file = path.display().to_string();
        if bytes.starts_with(MAT_MAGIC) {
            let mut r = Reader::new(&bytes, &file, MAT_MAGIC)?;
            let n = r.u64()? as usize;
            let q = r.u64()? as usize;
            let subjects = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
            let names = (0..q).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
            let data = (0..n * q).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let values = Array2::from_shape_vec((n, q), data).expect("shape");
            return TraitMatrix::new(subjects, names, values);
        }
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(&file, 0, "not UTF-8 text"))?;
        let table = tsv::parse_table(&text, &file, "subject_id");
        let header = table.header.clone().ok_or_else(|| table.err(1, "missing header"))?;
        let q = header.len().saturating_sub(1);
        let mut subjects = Vec::new();
        let mut data = Vec::new();
        for (line, f) in &table.rows {
            if f.len() != q + 1 {
                return Err(table.err(*line, format!("expected {} fields, found {}", q + 1, f.len())));
            }
            subjects.push(f[0].clone());
            for x in &f[1..] {
                data.push(tsv::parse_f64(&table, *line, x, "value")?);
            }
        }
        let values = Array2::from_shape_vec((subjects.len(), q), data).expect("shape");
        TraitMatrix::new(subjects, header[1..].to_vec(), values)
    }
}

/// Least-squares slope of each trait on visit time, per subject.
pub fn fit_slopes(table: &LongitudinalTable) -> Result<TraitMatrix> {
    let n = table.subject_ids.len();
    let q = table.n_traits();
    let mut values = Array2::zeros((n, q));
    for (i, visits) in table.visits.iter().enumerate() {
        let m = visits.len() as f64;
        let tbar = visits.iter().map(|(t, _)| t).sum::<f64>() / m;
        let stt: f64 = visits.iter().map(|(t, _)| (t - tbar).powi(2)).sum();
        if !(stt > 0.0) {
            return Err(Error::SingularFit(format!(
                "subject {} has a single distinct visit time",
                table.subject_ids[i]
            )));
        }
        // sorting by time makes the sums independent of visit order
        let mut order: Vec<&(f64, Vec<f64>)> = visits.iter().collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for k in 0..q {
            let ybar = order.iter().map(|(_, v)| v[k]).sum::<f64>() / m;
            let sty: f64 = order.iter().map(|(t, v)| (t - tbar) * (v[k] - ybar)).sum();
            values[[i, k]] = sty / stt;
        }
    }
    TraitMatrix::new(table.subject_ids.clone(), table.trait_names.clone(), values)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], file: &'a str, magic: &[u8; 8]) -> Result<Self> {
        if !bytes.starts_with(magic) {
            return Err(Error::parse(file, 0, "bad magic header"));
        }
        Ok(Reader { bytes, pos: 8, file })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse(self.file, 0, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::parse(self.file, 0, "invalid UTF-8 string"))
    }
}
