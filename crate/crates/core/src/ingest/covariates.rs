use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv::{self, TsvWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub subject_id: String,
    pub age: f64,
    /// 0/1 encoding.
    pub sex: u8,
    pub group: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    rows: Vec<Covariate>,
    index: HashMap<String, usize>,
}

impl CovariateTable {
    pub fn new(rows: Vec<Covariate>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.sex > 1 {
                return Err(Error::InvalidParameter(format!(
                    "subject {}: sex must be 0 or 1",
                    r.subject_id
                )));
            }
            if index.insert(r.subject_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.subject_id.clone()));
            }
        }
        Ok(CovariateTable { rows, index })
    }

    pub fn rows(&self) -> &[Covariate] {
        &self.rows
    }

    pub fn get(&self, subject: &str) -> Option<&Covariate> {
        self.index.get(subject).map(|&i| &self.rows[i])
    }

    /// Covariate rows in the order of `subjects`; every subject must exist.
    pub fn align<'a, S: AsRef<str>>(&'a self, subjects: &[S]) -> Result<Vec<&'a Covariate>> {
        subjects
            .iter()
            .map(|s| {
                self.get(s.as_ref())
                    .ok_or_else(|| Error::UnknownSubject(s.as_ref().to_string()))
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["subject_id", "age", "sex", "group"]);
        for r in &self.rows {
            w.row([r.subject_id.clone(), r.age.to_string(), r.sex.to_string(), r.group.clone()]);
        }
        w.into_string()
    }
}

pub fn parse_covariates(path: &Path) -> Result<CovariateTable> {
    let table = tsv::read_table(path, "subject_id")?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, f) in &table.rows {
        if f.len() < 4 {
            return Err(table.err(*line, format!("expected 4 columns, found {}", f.len())));
        }
        let age = tsv::parse_f64(&table, *line, &f[1], "age")?;
        let sex = match f[2].as_str() {
            "0" => 0,
            "1" => 1,
            other => return Err(table.err(*line, format!("sex must be 0 or 1, found `{other}`"))),
        };
        rows.push(Covariate {
            subject_id: f[0].clone(),
            age,
            sex,
            group: f[3].clone(),
        });
    }
    CovariateTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_align() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        std::fs::write(&p, "subject_id\tage\tsex\tgroup\na\t70.5\t0\tAD\nb\t66\t1\tCN\n").unwrap();
        let t = parse_covariates(&p).unwrap();
        assert_eq!(t.rows().len(), 2);
        let al = t.align(&["b", "a"]).unwrap();
        assert_eq!(al[0].group, "CN");
        assert!(matches!(t.align(&["zz"]), Err(Error::UnknownSubject(_))));

        std::fs::write(&p, "subject_id\tage\tsex\tgroup\na\t70\t2\tAD\n").unwrap();
        assert!(parse_covariates(&p).is_err());
    }
}
