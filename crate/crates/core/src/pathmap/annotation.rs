use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::genes::{gene_key, GeneSet};
use super::snpgene::SnpGeneMap;
use crate::error::{Error, Result};
use crate::ingest::SnpInfo;
use crate::tsv::{self, TsvWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub name: String,
    /// Member genes as listed in the gene-set file.
    pub genes: Vec<String>,
    /// Indices into the annotation's SNP universe, ordered by (chromosome, position).
    pub snps: Vec<usize>,
}

/// L possibly overlapping SNP groups plus their penalty weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayAnnotation {
    snps: Vec<SnpInfo>,
    snp_genes: Vec<Vec<String>>,
    pathways: Vec<Pathway>,
    weights: Vec<f64>,
}

impl PathwayAnnotation {
    /// Builds an annotation over a SNP universe. Weights start at √S_l.
    pub fn new(snps: Vec<SnpInfo>, snp_genes: Vec<Vec<String>>, pathways: Vec<Pathway>) -> Result<Self> {
        if snp_genes.len() != snps.len() {
            return Err(Error::Dimension(format!(
                "{} SNPs but {} SNP-gene lists",
                snps.len(),
                snp_genes.len()
            )));
        }
        let mut names = HashSet::new();
        for p in &pathways {
            if !names.insert(p.name.as_str()) {
                return Err(Error::DuplicateId(p.name.clone()));
            }
            if p.snps.is_empty() {
                return Err(Error::InvalidParameter(format!("pathway `{}` has no SNPs", p.name)));
            }
            if let Some(&j) = p.snps.iter().find(|&&j| j >= snps.len()) {
                return Err(Error::Dimension(format!("pathway `{}` references SNP index {j}", p.name)));
            }
            if p.snps.iter().collect::<HashSet<_>>().len() != p.snps.len() {
                return Err(Error::InvalidParameter(format!("pathway `{}` lists a SNP twice", p.name)));
            }
        }
        let mut a = PathwayAnnotation {
            snps,
            snp_genes,
            pathways,
            weights: Vec::new(),
        };
        a.weights = init_weights(&a);
        Ok(a)
    }

    pub fn n_pathways(&self) -> usize {
        self.pathways.len()
    }

    pub fn pathways(&self) -> &[Pathway] {
        &self.pathways
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pathways.iter().map(|p| p.name.as_str())
    }

    pub fn snps(&self) -> &[SnpInfo] {
        &self.snps
    }

    pub fn genes_of_snp(&self, j: usize) -> &[String] {
        &self.snp_genes[j]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pathways.iter().map(|p| p.snps.len()).collect()
    }

    /// Total number of expanded columns, Σ S_l.
    pub fn n_expanded(&self) -> usize {
        self.pathways.iter().map(|p| p.snps.len()).sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.pathways.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} pathways",
                w.len(),
                self.pathways.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!("weight {bad} is not positive")));
        }
        self.weights = w;
        Ok(())
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        self.set_weights(w)?;
        Ok(self)
    }

    /// Keeps only the listed pathways; the groups themselves are untouched.
    pub fn retain(&self, keep: &[usize]) -> Self {
        PathwayAnnotation {
            snps: self.snps.clone(),
            snp_genes: self.snp_genes.clone(),
            pathways: keep.iter().map(|&l| self.pathways[l].clone()).collect(),
            weights: keep.iter().map(|&l| self.weights[l]).collect(),
        }
    }

    pub fn pathway_index(&self, name: &str) -> Option<usize> {
        self.pathways.iter().position(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let a: PathwayAnnotation =
            serde_json::from_str(text).map_err(|e| Error::parse(file, e.line(), e.to_string()))?;
        let w = a.weights.clone();
        PathwayAnnotation::new(a.snps, a.snp_genes, a.pathways)?.with_weights(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tsv::write_file(path, self.to_json().as_bytes())
    }
}

/// w_l = √S_l.
pub fn init_weights(annotation: &PathwayAnnotation) -> Vec<f64> {
    annotation
        .pathways
        .iter()
        .map(|p| (p.snps.len() as f64).sqrt())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    /// (pathway, genes with a location, SNPs) for every retained pathway.
    pub pathways: Vec<(String, usize, usize)>,
    pub excluded: Vec<String>,
    /// Pathways whose located genes capture no genotyped SNP.
    pub dropped_empty: Vec<String>,
    pub unmapped_genes: Vec<String>,
    pub unmapped_snps: Vec<String>,
}

impl MappingReport {
    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["pathway", "n_genes_matched", "n_snps"]);
        for (name, g, s) in &self.pathways {
            w.row([name.clone(), g.to_string(), s.to_string()]);
        }
        for name in &self.dropped_empty {
            w.comment(&format!("dropped_no_snps\t{name}"));
        }
        for name in &self.excluded {
            w.comment(&format!("excluded\t{name}"));
        }
        w.into_string()
    }
}

/// Assigns to each pathway every SNP mapped to any of its genes.
///
/// `map` must have been built over `snps`. Pathways named in `exclude` are
/// skipped; pathways that end up with no SNPs are dropped and reported.
pub fn map_genes_to_pathways(
    gene_sets: &[GeneSet],
    map: &SnpGeneMap,
    snps: &[SnpInfo],
    exclude: &[String],
) -> Result<(PathwayAnnotation, MappingReport)> {
    if gene_sets.is_empty() {
        return Err(Error::EmptyGeneSets);
    }
    if map.n_snps() != snps.len() {
        return Err(Error::Dimension(format!(
            "SNP-gene map covers {} SNPs, annotation universe has {}",
            map.n_snps(),
            snps.len()
        )));
    }
    let exclude: HashSet<&str> = exclude.iter().map(String::as_str).collect();
    let mut report = MappingReport {
        pathways: Vec::new(),
        excluded: Vec::new(),
        dropped_empty: Vec::new(),
        unmapped_genes: Vec::new(),
        unmapped_snps: map.unmapped_snps().into_iter().map(|j| snps[j].id.clone()).collect(),
    };
    let mut unmapped_genes = HashSet::new();
    let mut pathways = Vec::new();
    for set in gene_sets {
        if exclude.contains(set.name.as_str()) {
            report.excluded.push(set.name.clone());
            continue;
        }
        let mut members = Vec::new();
        let mut located = 0;
        let genes: Vec<String> = set.genes.iter().map(|g| gene_key(g)).collect();
        for g in &genes {
            match map.snps_of(g) {
                Some(s) => {
                    located += 1;
                    members.extend_from_slice(s);
                }
                None => {
                    unmapped_genes.insert(g.clone());
                }
            }
        }
        if located == 0 && !set.genes.is_empty() {
            return Err(Error::PathwayGenesAbsent(set.name.clone()));
        }
        members.sort_unstable_by_key(|&j| (snps[j].chromosome, snps[j].position, j));
        members.dedup();
        if members.is_empty() {
            log::info!("pathway `{}` maps no SNPs; dropped", set.name);
            report.dropped_empty.push(set.name.clone());
            continue;
        }
        report.pathways.push((set.name.clone(), located, members.len()));
        pathways.push(Pathway {
            name: set.name.clone(),
            genes,
            snps: members,
        });
    }
    if pathways.is_empty() {
        return Err(Error::EmptyGeneSets);
    }
    let mut unmapped_genes: Vec<String> = unmapped_genes.into_iter().collect();
    unmapped_genes.sort();
    if !unmapped_genes.is_empty() {
        log::info!("{} gene-set symbols have no location", unmapped_genes.len());
    }
    report.unmapped_genes = unmapped_genes;
    let snp_genes = (0..snps.len()).map(|j| map.genes_of(j).to_vec()).collect();
    let annotation = PathwayAnnotation::new(snps.to_vec(), snp_genes, pathways)?;
    Ok((annotation, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// value -> number of entities with that value
    pub counts: BTreeMap<usize, usize>,
}

impl Distribution {
    fn of(values: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        let (mut n, mut sum) = (0usize, 0usize);
        for v in values {
            *counts.entry(v).or_insert(0) += 1;
            n += 1;
            sum += v;
        }
        Distribution {
            min: counts.keys().next().copied().unwrap_or(0),
            max: counts.keys().next_back().copied().unwrap_or(0),
            mean: if n == 0 { 0.0 } else { sum as f64 / n as f64 },
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingStats {
    pub pathway_sizes: Distribution,
    /// Number of pathways per annotated SNP.
    pub snp_overlap: Distribution,
}

impl MappingStats {
    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["statistic", "value", "count"]);
        for (label, d) in [("pathway_size", &self.pathway_sizes), ("snp_overlap", &self.snp_overlap)] {
            w.comment(&format!("{label}\tmin={}\tmax={}\tmean={}", d.min, d.max, d.mean));
            for (v, c) in &d.counts {
                w.row([label.to_string(), v.to_string(), c.to_string()]);
            }
        }
        w.into_string()
    }
}

pub fn mapping_stats(annotation: &PathwayAnnotation) -> MappingStats {
    let mut per_snp: HashMap<usize, usize> = HashMap::new();
    for p in annotation.pathways() {
        for &j in &p.snps {
            *per_snp.entry(j).or_insert(0) += 1;
        }
    }
    MappingStats {
        pathway_sizes: Distribution::of(annotation.sizes()),
        snp_overlap: Distribution::of(per_snp.into_values()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Chromosome;
    use crate::pathmap::{map_snps_to_genes, GeneLocation};

    fn snps(n: usize) -> Vec<SnpInfo> {
        (0..n)
            .map(|j| SnpInfo {
                id: format!("rs{j}"),
                chromosome: Chromosome::Autosome(1),
                position: 1000 * (j as u64 + 1),
            })
            .collect()
    }

    fn set(name: &str, genes: &[&str]) -> GeneSet {
        GeneSet {
            name: name.into(),
            description: String::new(),
            genes: genes.iter().map(|g| g.to_string()).collect(),
        }
    }

    #[test]
    fn union_of_gene_snps_with_overlap() {
        let s = snps(8);
        // g1 covers SNPs at 3000 and 6000 only when the window is 0
        let genes = vec![
            GeneLocation::new("g1", Chromosome::Autosome(1), 3000, 3000).unwrap(),
            GeneLocation::new("g1", Chromosome::Autosome(1), 6000, 6000).unwrap(),
            GeneLocation::new("g2", Chromosome::Autosome(1), 7000, 8000).unwrap(),
            GeneLocation::new("g3", Chromosome::Autosome(2), 7000, 8000).unwrap(),
        ];
        let m = map_snps_to_genes(&s, &genes, 0);
        let sets = vec![
            set("A", &["G1"]),
            set("B", &["g1", "g2", "nowhere"]),
            set("C", &["g3"]),
            set("D", &["g2"]),
        ];
        let (a, rep) = map_genes_to_pathways(&sets, &m, &s, &["D".to_string()]).unwrap();
        assert_eq!(a.names().collect::<Vec<_>>(), vec!["A", "B"]);
        assert_eq!(a.pathways()[0].snps, vec![2, 5]);
        assert_eq!(a.pathways()[1].snps, vec![2, 5, 6, 7]);
        assert_eq!(a.sizes(), vec![2, 4]);
        assert_eq!(a.n_expanded(), 6);
        assert_eq!(rep.dropped_empty, vec!["C"]);
        assert_eq!(rep.excluded, vec!["D"]);
        assert_eq!(rep.unmapped_genes, vec!["NOWHERE"]);
        assert_eq!(rep.pathways[1], ("B".to_string(), 2, 4));
        assert!((a.weights()[1] - 2.0).abs() < 1e-15);
        assert_eq!(a.weights()[0], 2f64.sqrt());

        let bad = vec![set("Z", &["absent1", "absent2"])];
        assert!(matches!(
            map_genes_to_pathways(&bad, &m, &s, &[]),
            Err(Error::PathwayGenesAbsent(_))
        ));
    }

    #[test]
    fn stats_match_recount() {
        let s = snps(10);
        let p = |name: &str, v: Vec<usize>| Pathway {
            name: name.into(),
            genes: vec![],
            snps: v,
        };
        let a = PathwayAnnotation::new(
            s,
            vec![vec![]; 10],
            vec![p("a", (0..10).collect())],
        )
        .unwrap();
        let st = mapping_stats(&a);
        assert_eq!((st.pathway_sizes.min, st.pathway_sizes.max), (10, 10));
        assert_eq!(st.snp_overlap.counts, BTreeMap::from([(1, 10)]));

        let a = PathwayAnnotation::new(
            snps(10),
            vec![vec![]; 10],
            vec![p("a", vec![0, 1, 2]), p("b", vec![2, 3]), p("c", vec![2, 3, 9])],
        )
        .unwrap();
        let st = mapping_stats(&a);
        assert_eq!(st.snp_overlap.counts, BTreeMap::from([(1, 3), (2, 1), (3, 1)]));
        assert!((st.snp_overlap.mean - 8.0 / 5.0).abs() < 1e-15);
        assert!((st.pathway_sizes.mean - 8.0 / 3.0).abs() < 1e-15);
        assert!(st.to_tsv().contains("snp_overlap\t3\t1"));
    }

    #[test]
    fn json_round_trip_keeps_weights() {
        let a = PathwayAnnotation::new(
            snps(3),
            vec![vec!["G".into()], vec![], vec![]],
            vec![Pathway {
                name: "p".into(),
                genes: vec!["G".into()],
                snps: vec![0, 2],
            }],
        )
        .unwrap()
        .with_weights(vec![0.25])
        .unwrap();
        assert_eq!(PathwayAnnotation::from_json(&a.to_json(), "x").unwrap(), a);
        assert!(a.clone().with_weights(vec![0.0]).is_err());
    }
}
