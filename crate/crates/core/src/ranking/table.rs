use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv::{self, TsvWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub rank: usize,
    pub id: String,
    /// Selection frequency over the subsamples.
    pub pi: f64,
    pub count: usize,
    pub size: usize,
    pub detail: String,
}

/// Entities ordered by descending selection frequency, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub kind: String,
    pub n_subsamples: usize,
    pub entries: Vec<RankingEntry>,
}

impl RankingTable {
    /// `items` holds (id, selection count, size, detail) per entity.
    pub fn from_counts(kind: &str, n_subsamples: usize, items: Vec<(String, usize, usize, String)>) -> Self {
        let b = n_subsamples.max(1) as f64;
        let mut entries: Vec<RankingEntry> = items
            .into_iter()
            .map(|(id, count, size, detail)| RankingEntry {
                rank: 0,
                id,
                pi: count as f64 / b,
                count,
                size,
                detail,
            })
            .collect();
        entries.sort_by(|x, y| match y.count.cmp(&x.count) {
            Ordering::Equal => x.id.cmp(&y.id),
            o => o,
        });
        entries.iter_mut().enumerate().for_each(|(i, e)| e.rank = i + 1);
        RankingTable {
            kind: kind.to_string(),
            n_subsamples,
            entries,
        }
    }

    pub fn get(&self, id: &str) -> Option<&RankingEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["rank", "id", "pi", "count", "size", "detail"]);
        for e in &self.entries {
            w.row([
                e.rank.to_string(),
                e.id.clone(),
                e.pi.to_string(),
                e.count.to_string(),
                e.size.to_string(),
                if e.detail.is_empty() { "-".to_string() } else { e.detail.clone() },
            ]);
        }
        w.comment(&format!("kind={}\tsubsamples={}", self.kind, self.n_subsamples));
        w.into_string()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let table = tsv::read_table(path, "rank")?;
        let mut entries = Vec::with_capacity(table.rows.len());
        for (line, f) in &table.rows {
            if f.len() < 5 {
                return Err(table.err(*line, "expected rank, id, pi, count, size"));
            }
            let int = |s: &str, what: &str| {
                s.parse::<usize>()
                    .map_err(|_| table.err(*line, format!("invalid {what} `{s}`")))
            };
            entries.push(RankingEntry {
                rank: int(&f[0], "rank")?,
                id: f[1].clone(),
                pi: tsv::parse_f64(&table, *line, &f[2], "pi")?,
                count: int(&f[3], "count")?,
                size: int(&f[4], "size")?,
                detail: f.get(5).filter(|d| *d != "-").cloned().unwrap_or_default(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta = text
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("#kind="))
            .unwrap_or("");
        let mut parts = meta.split("\tsubsamples=");
        let kind = parts.next().unwrap_or("").to_string();
        let n_subsamples = parts.next().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
        Ok(RankingTable {
            kind,
            n_subsamples,
            entries,
        })
    }
}
