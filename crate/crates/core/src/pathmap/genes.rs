use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Chromosome;
use crate::tsv::{self, TsvWriter};

/// Gene symbols are compared case-insensitively; this is the canonical key.
pub fn gene_key(symbol: &str) -> String {
    symbol.trim().to_ascii_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneLocation {
    pub symbol: String,
    pub chromosome: Chromosome,
    pub start: u64,
    pub end: u64,
}

impl GeneLocation {
    pub fn new(symbol: &str, chromosome: Chromosome, start: u64, end: u64) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidGeneInterval {
                symbol: symbol.to_string(),
                start,
                end,
            });
        }
        Ok(GeneLocation {
            symbol: gene_key(symbol),
            chromosome,
            start,
            end,
        })
    }
}

pub fn parse_gene_locations(path: &Path) -> Result<Vec<GeneLocation>> {
    let table = tsv::read_table(path, "gene_symbol")?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, f) in &table.rows {
        if f.len() < 4 {
            return Err(table.err(*line, format!("expected 4 columns, found {}", f.len())));
        }
        let chromosome: Chromosome = f[1].parse()?;
        let coord = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| table.err(*line, format!("invalid {what} `{s}`")))
        };
        out.push(GeneLocation::new(&f[0], chromosome, coord(&f[2], "start_bp")?, coord(&f[3], "end_bp")?)?);
    }
    Ok(out)
}

pub fn gene_locations_to_tsv(genes: &[GeneLocation]) -> String {
    let mut w = TsvWriter::new(&["gene_symbol", "chromosome", "start_bp", "end_bp"]);
    for g in genes {
        w.row([g.symbol.clone(), g.chromosome.to_string(), g.start.to_string(), g.end.to_string()]);
    }
    w.into_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    /// Canonical symbols, duplicates removed, file order kept.
    pub genes: Vec<String>,
}

/// Parses GMT text: `name<TAB>description<TAB>gene<TAB>gene...` per line.
pub fn parse_gmt_str(text: &str, file: &str) -> Result<Vec<GeneSet>> {
    let mut sets: Vec<GeneSet> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default().trim().to_string();
        let description = fields
            .next()
            .ok_or_else(|| Error::parse(file, i + 1, "gene set needs a name and a description"))?
            .trim()
            .to_string();
        if name.is_empty() {
            return Err(Error::parse(file, i + 1, "empty gene-set name"));
        }
        if sets.iter().any(|s| s.name == name) {
            return Err(Error::DuplicateId(name));
        }
        let mut genes: Vec<String> = Vec::new();
        for g in fields.map(gene_key).filter(|g| !g.is_empty()) {
            if !genes.contains(&g) {
                genes.push(g);
            }
        }
        sets.push(GeneSet {
            name,
            description,
            genes,
        });
    }
    if sets.is_empty() {
        return Err(Error::EmptyGeneSets);
    }
    Ok(sets)
}

pub fn parse_gmt(path: &Path) -> Result<Vec<GeneSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gmt_str(&text, &path.display().to_string())
}

pub fn gene_sets_to_gmt(sets: &[GeneSet]) -> String {
    let mut out = String::new();
    for s in sets {
        out.push_str(&s.name);
        out.push('\t');
        out.push_str(&s.description);
        for g in &s.genes {
            out.push('\t');
            out.push_str(g);
        }
        out.push('\n');
    }
    out
}
