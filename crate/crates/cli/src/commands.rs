use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use psrrr::ingest::{
    impute_missing, parse_covariates, parse_genotypes, parse_snp_metadata, qc_filter, standardize, write_genotypes,
    write_snp_metadata, Covariate, CovariateTable, GenotypeMatrix, QcTag,
};
use psrrr::pathmap::{
    expand_design, gene_locations_to_tsv, gene_sets_to_gmt, map_genes_to_pathways, map_snps_to_genes, mapping_stats,
    parse_gene_locations, parse_gmt, ExpandedDesign, PathwayAnnotation,
};
use psrrr::phenosig::{ancova_filter, fit_slopes, residualize, validate_signature, LongitudinalTable, TraitMatrix};
use psrrr::psrrr::{fit_rank1, read_weights, tune_weights};
use psrrr::ranking::{
    enrichment_test, rank_pathways, rank_snps_genes, records_to_jsonl, rows_hash, subsample_rows, RankingTable,
    SubsampleRecord,
};
use psrrr::rng::{rng_for, stream};
use psrrr::simulate::{center_columns, plant_rank1_phenotype, SimulatedGenome};
use psrrr::tsv::{write_file, TsvWriter};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::config::{RunConfig, Stage};
use crate::error::CliError;
use crate::manifest::{run_stage, StageOutput};

type CmdResult = Result<(), CliError>;

fn write(dir: &Path, name: &str, text: impl AsRef<[u8]>) -> Result<String, CliError> {
    write_file(&dir.join(name), text.as_ref())?;
    Ok(name.to_string())
}

pub fn cmd_simulate(cfg: &RunConfig, force: bool) -> CmdResult {
    let seed = cfg.seed.expect("validated");
    let spec = cfg.simulate.spec(seed);
    run_stage(cfg, Stage::Simulate, force, |dir| {
        let genome = SimulatedGenome::generate(&spec)?;
        let (annotation, _) = genome.annotate(cfg.map.window_bp)?;
        let g = standardize(&genome.genotypes)?.matrix;
        let planted = plant_rank1_phenotype(&g, &annotation, &spec)?;
        let subjects = genome.genotypes.subject_ids().to_vec();
        let n = subjects.len();

        // disease status follows the genetic factor: top tertile affected
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| planted.factor[i].total_cmp(&planted.factor[j]).then(i.cmp(&j)));
        let mut group = vec!["MCI"; n];
        for (r, &i) in order.iter().enumerate() {
            if 3 * r < n {
                group[i] = "CN";
            } else if 3 * r >= 2 * n {
                group[i] = "AD";
            }
        }
        let mut rng = rng_for(seed, stream::PHENOTYPE, 3);
        let covariates = CovariateTable::new(
            subjects
                .iter()
                .zip(&group)
                .map(|(s, g)| Covariate {
                    subject_id: s.clone(),
                    age: (rng.gen_range(600..850) as f64) / 10.0,
                    sex: rng.gen_range(0..2),
                    group: g.to_string(),
                })
                .collect(),
        )?;

        let trait_names: Vec<String> = (0..spec.n_traits).map(|k| format!("trait{:03}", k + 1)).collect();
        let phenotype = TraitMatrix::new(subjects.clone(), trait_names.clone(), planted.y.clone())?;
        // each trait moves linearly from a random baseline at rate Y[i, q]
        let mut rng = rng_for(seed, stream::PHENOTYPE, 4);
        let mut rows = Vec::with_capacity(n * cfg.simulate.visits.len());
        for (i, s) in subjects.iter().enumerate() {
            let base: Vec<f64> = (0..spec.n_traits).map(|_| rng.sample(StandardNormal)).collect();
            for &t in &cfg.simulate.visits {
                let v = base.iter().zip(planted.y.row(i)).map(|(b, y)| b + y * t).collect();
                rows.push((s.clone(), t, v));
            }
        }
        let longitudinal = LongitudinalTable::from_rows(trait_names, rows)?;

        let causal_names: Vec<String> = spec
            .causal_pathways
            .iter()
            .map(|&l| annotation.pathways()[l].name.clone())
            .collect();
        let targets = pick_targets(&genome.gene_sets, &causal_names[0], cfg.simulate.n_targets);

        let mut files = Vec::new();
        write_genotypes(&genome.genotypes, &dir.join("genotypes.tsv"))?;
        files.push("genotypes.tsv".to_string());
        write_snp_metadata(genome.genotypes.snps(), &dir.join("snps.tsv"))?;
        files.push("snps.tsv".to_string());
        files.push(write(dir, "genes.tsv", gene_locations_to_tsv(&genome.genes))?);
        files.push(write(dir, "pathways.gmt", gene_sets_to_gmt(&genome.gene_sets))?);
        files.push(write(dir, "covariates.tsv", covariates.to_tsv())?);
        files.push(write(dir, "longitudinal.tsv", longitudinal.to_tsv())?);
        files.push(write(dir, "phenotype.tsv", phenotype.to_tsv())?);
        files.push(write(dir, "targets.txt", targets.join("\n") + "\n")?);
        let snp_ids: Vec<&str> = genome.genotypes.snp_ids().collect();
        let truth = json!({
            "spec": spec,
            "causal_pathways": causal_names,
            "causal_snps": planted.causal_snps.iter().map(|&j| snp_ids[j]).collect::<Vec<_>>(),
            "b_star": planted.causal_snps.iter().map(|&j| planted.b_star[j]).collect::<Vec<_>>(),
            "a_star": planted.a_star,
            "targets": targets,
        });
        files.push(write(dir, "truth.json", serde_json::to_string_pretty(&truth).expect("json") + "\n")?);
        Ok(StageOutput {
            files,
            summary: json!({
                "n_subjects": n,
                "n_snps": genome.genotypes.n_snps(),
                "n_pathways": genome.gene_sets.len(),
                "n_traits": spec.n_traits,
                "causal_pathways": truth["causal_pathways"],
            }),
            converged: true,
        })
    })
}

/// Genes of `pathway` found in no other gene set, topped up with shared
/// ones when there are too few.
fn pick_targets(sets: &[psrrr::pathmap::GeneSet], pathway: &str, k: usize) -> Vec<String> {
    let Some(own) = sets.iter().find(|s| s.name == pathway) else {
        return Vec::new();
    };
    let elsewhere: HashSet<&str> = sets
        .iter()
        .filter(|s| s.name != pathway)
        .flat_map(|s| s.genes.iter().map(String::as_str))
        .collect();
    let (mut exclusive, shared): (Vec<&String>, Vec<&String>) =
        own.genes.iter().partition(|g| !elsewhere.contains(g.as_str()));
    exclusive.extend(shared);
    exclusive.into_iter().take(k).cloned().collect()
}

pub fn cmd_qc(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Qc, force, |dir| {
        let g = parse_genotypes(&cfg.genotypes(), &cfg.snps())?;
        let (kept, report) = qc_filter(&g, &cfg.qc_thresholds())?;
        write_genotypes(&kept, &dir.join("genotypes.tsv"))?;
        write_snp_metadata(kept.snps(), &dir.join("snps.tsv"))?;
        let report_file = write(dir, "qc_report.tsv", report.to_tsv())?;
        let removed = |t| report.removed_by(t).len();
        Ok(StageOutput {
            files: vec!["genotypes.tsv".into(), "snps.tsv".into(), report_file],
            summary: json!({
                "n_subjects": g.n_subjects(),
                "n_input": report.n_input(),
                "n_retained": report.n_retained(),
                "removed_non_autosomal": removed(QcTag::NonAutosomal),
                "removed_call_rate": removed(QcTag::CallRate),
                "removed_hwe": removed(QcTag::Hwe),
                "removed_maf": removed(QcTag::Maf),
            }),
            converged: true,
        })
    })
}

pub fn cmd_map(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Map, force, |dir| {
        let snps = parse_snp_metadata(&cfg.stage_dir(Stage::Qc).join("snps.tsv"))?;
        let genes = parse_gene_locations(&cfg.genes())?;
        let sets = parse_gmt(&cfg.gene_sets())?;
        let map = map_snps_to_genes(&snps, &genes, cfg.map.window_bp);
        let (annotation, report) = map_genes_to_pathways(&sets, &map, &snps, &cfg.map.exclude)?;
        annotation.save(&dir.join("annotation.json"))?;
        let stats = mapping_stats(&annotation);
        let files = vec![
            "annotation.json".to_string(),
            write(dir, "mapping_report.tsv", report.to_tsv())?,
            write(dir, "mapping_stats.tsv", stats.to_tsv())?,
        ];
        Ok(StageOutput {
            files,
            summary: json!({
                "n_pathways": annotation.n_pathways(),
                "n_expanded_columns": annotation.n_expanded(),
                "excluded": report.excluded,
                "dropped_empty": report.dropped_empty,
                "n_unmapped_genes": report.unmapped_genes.len(),
                "n_unmapped_snps": report.unmapped_snps.len(),
            }),
            converged: true,
        })
    })
}

pub fn cmd_phenotype(cfg: &RunConfig, force: bool) -> CmdResult {
    let p = &cfg.phenotype;
    run_stage(cfg, Stage::Phenotype, force, |dir| {
        let table = LongitudinalTable::read(&cfg.longitudinal())?;
        let covariates = parse_covariates(&cfg.covariates())?;
        let slopes = fit_slopes(&table)?;
        let ancova = ancova_filter(&slopes, &covariates, &p.group_a, &p.group_b, p.alpha)?;
        let mut files = vec![
            write(dir, "slopes.tsv", slopes.to_tsv())?,
            write(dir, "ancova.tsv", ancova.to_tsv(&slopes.trait_names))?,
        ];
        if ancova.selected.is_empty() {
            return Err(CliError::Data(format!(
                "no trait differs between `{}` and `{}` at the corrected level {:.3e}",
                p.group_a, p.group_b, ancova.threshold
            )));
        }
        let phenotype = residualize(&slopes, &ancova.selected, &covariates)?;
        files.push(write(dir, "phenotype.tsv", phenotype.matrix.to_tsv())?);

        let cov = covariates.align(&slopes.subject_ids)?;
        let rows: Vec<usize> = (0..cov.len())
            .filter(|&i| cov[i].group == p.group_a || cov[i].group == p.group_b)
            .collect();
        let labels: Vec<bool> = rows.iter().map(|&i| cov[i].group == p.group_a).collect();
        let y = phenotype.values().select(Axis(0), &rows);
        let report = validate_signature(y.view(), &labels, p.folds, cfg.seed.unwrap_or_default())?;
        files.push(write(dir, "validation.tsv", report.to_tsv())?);
        Ok(StageOutput {
            files,
            summary: json!({
                "n_subjects": slopes.subject_ids.len(),
                "n_traits": slopes.trait_names.len(),
                "n_selected": ancova.selected.len(),
                "threshold": ancova.threshold,
                "accuracy": report.accuracy(),
                "sensitivity": report.sensitivity(),
                "specificity": report.specificity(),
            }),
            converged: true,
        })
    })
}

/// Standardized genotypes, annotation, expanded design and centred traits,
/// with subjects in genotype order.
struct Problem {
    genotypes: GenotypeMatrix,
    annotation: PathwayAnnotation,
    design: ExpandedDesign,
    y: Array2<f64>,
    trait_names: Vec<String>,
}

impl Problem {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let qc = cfg.stage_dir(Stage::Qc);
        let raw = parse_genotypes(&qc.join("genotypes.tsv"), &qc.join("snps.tsv"))?;
        let std = standardize(&impute_missing(&raw)?)?;
        if !std.dropped.is_empty() {
            log::warn!("{} constant SNPs dropped after imputation", std.dropped.len());
        }
        let genotypes = std.matrix;
        let annotation = PathwayAnnotation::load(&cfg.stage_dir(Stage::Map).join("annotation.json"))?;
        let design = expand_design(&genotypes, &annotation)?;
        let traits = TraitMatrix::read(&cfg.phenotype())?.align(genotypes.subject_ids())?;
        let mut y = traits.values;
        center_columns(&mut y);
        Ok(Problem {
            genotypes,
            annotation,
            design,
            y,
            trait_names: traits.trait_names,
        })
    }

    fn weights(&self, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
        Ok(match &cfg.inputs.weights {
            Some(p) => read_weights(p, &self.annotation)?,
            None => self.annotation.weights().to_vec(),
        })
    }
}

pub fn cmd_tune(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Tune, force, |dir| {
        let pb = Problem::load(cfg)?;
        let state = tune_weights(pb.y.view(), &pb.design, pb.annotation.weights(), &cfg.tune_options())?;
        let files = vec![
            write(dir, "weights.tsv", state.to_tsv(&pb.annotation))?,
            write(dir, "tune.json", state.to_json() + "\n")?,
        ];
        Ok(StageOutput {
            files,
            summary: json!({
                "iterations": state.tau,
                "sum_abs_d": state.sum_abs_d(),
                "fits_per_iter": state.fits_per_iter,
                "converged": state.converged,
            }),
            converged: state.converged,
        })
    })
}

pub fn cmd_fit(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Fit, force, |dir| {
        let pb = Problem::load(cfg)?;
        let weights = pb.weights(cfg)?;
        let fit = fit_rank1(pb.y.view(), &pb.design, &weights, &cfg.fit_options())?;
        let names: Vec<&str> = pb.annotation.names().collect();

        let mut order = fit.selected.clone();
        order.sort_by(|&a, &b| fit.block_norms[b].total_cmp(&fit.block_norms[a]).then(a.cmp(&b)));
        let mut sel = TsvWriter::new(&["pathway", "block_norm", "weight", "size"]);
        for &l in &order {
            sel.row([
                names[l].to_string(),
                fit.block_norms[l].to_string(),
                weights[l].to_string(),
                pb.annotation.pathways()[l].snps.len().to_string(),
            ]);
        }
        let mut a = TsvWriter::new(&["trait", "loading"]);
        for (t, v) in pb.trait_names.iter().zip(&fit.pair.a) {
            a.row([t.clone(), v.to_string()]);
        }
        // per-SNP loadings, summed over the pathways that share the SNP
        let mut per_snp = vec![0.0; pb.genotypes.n_snps()];
        for (k, &c) in pb.design.source().iter().enumerate() {
            per_snp[pb.design.genotype_col(c)] += fit.pair.b[k];
        }
        let mut b = TsvWriter::new(&["snp_id", "loading"]);
        for (id, v) in pb.genotypes.snp_ids().zip(&per_snp).filter(|(_, v)| **v != 0.0) {
            b.row([id.to_string(), v.to_string()]);
        }
        let files = vec![
            write(dir, "selected.tsv", sel.into_string())?,
            write(dir, "trait_loadings.tsv", a.into_string())?,
            write(dir, "snp_loadings.tsv", b.into_string())?,
            write(dir, "fit.json", serde_json::to_string_pretty(&fit).expect("json") + "\n")?,
        ];
        let converged = fit.converged && fit.solver_converged;
        Ok(StageOutput {
            files,
            summary: json!({
                "selected": order.iter().map(|&l| names[l]).collect::<Vec<_>>(),
                "lambda": fit.lambda,
                "lambda_max": fit.lambda_max,
                "gamma": fit.gamma,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "solver_converged": fit.solver_converged,
            }),
            converged,
        })
    })
}

pub fn cmd_rank(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Rank, force, |dir| {
        let pb = Problem::load(cfg)?;
        let weights = pb.weights(cfg)?;
        let ranking = rank_pathways(pb.y.view(), &pb.design, &pb.annotation, &weights, &cfg.rank_options())?;
        if ranking.all_empty {
            return Err(psrrr::Error::NoSelections.into());
        }
        let files = vec![
            write(dir, "pathways.tsv", ranking.table.to_tsv())?,
            write(dir, "subsamples.jsonl", records_to_jsonl(&ranking.records))?,
        ];
        Ok(StageOutput {
            files,
            summary: json!({
                "subsamples": ranking.records.len(),
                "empty_subsamples": ranking.records.iter().filter(|r| r.pathways.is_empty()).count(),
                "top": top(&ranking.table, 5),
                "all_converged": ranking.all_converged,
            }),
            converged: ranking.all_converged,
        })
    })
}

fn top(table: &RankingTable, k: usize) -> Vec<serde_json::Value> {
    table
        .entries
        .iter()
        .take(k)
        .map(|e| json!({"rank": e.rank, "id": e.id, "pi": e.pi}))
        .collect()
}

/// Rebuilds the row sets and selections that the JSON form leaves out,
/// checking each row set against its recorded hash.
fn read_records(path: &Path, cfg: &RunConfig, n: usize, annotation: &PathwayAnnotation) -> Result<Vec<SubsampleRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let seed = cfg.seed.expect("validated");
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut rec: SubsampleRecord = serde_json::from_str(line)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            rec.rows = subsample_rows(n, cfg.rank.fraction, seed, rec.b)?;
            if rows_hash(&rec.rows) != rec.rows_sha256 {
                return Err(CliError::Config(vec![format!(
                    "subsample {} of {} was drawn with a different seed, fraction or sample size; rerun `psrrr rank`",
                    rec.b,
                    path.display()
                )]));
            }
            rec.selected = rec
                .pathways
                .iter()
                .map(|name| {
                    annotation
                        .pathway_index(name)
                        .ok_or_else(|| CliError::Data(format!("subsample {}: unknown pathway `{name}`", rec.b)))
                })
                .collect::<Result<_, _>>()?;
            Ok(rec)
        })
        .collect()
}

pub fn cmd_snprank(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Snprank, force, |dir| {
        let pb = Problem::load(cfg)?;
        let path = cfg.stage_dir(Stage::Rank).join("subsamples.jsonl");
        let records = read_records(&path, cfg, pb.y.nrows(), &pb.annotation)?;
        let ranking = rank_snps_genes(&records, pb.y.view(), &pb.design, &pb.annotation, &cfg.snp_rank_options())?;
        let files = vec![
            write(dir, "snps.tsv", ranking.snps.to_tsv())?,
            write(dir, "genes.tsv", ranking.genes.to_tsv())?,
            write(dir, "subsamples.jsonl", records_to_jsonl(&ranking.records))?,
        ];
        Ok(StageOutput {
            files,
            summary: json!({
                "subsamples": ranking.records.len(),
                "top_snps": top(&ranking.snps, 5),
                "top_genes": top(&ranking.genes, 5),
                "all_empty": ranking.all_empty,
            }),
            converged: true,
        })
    })
}

pub fn cmd_enrich(cfg: &RunConfig, force: bool) -> CmdResult {
    run_stage(cfg, Stage::Enrich, force, |dir| {
        let table = RankingTable::read(&cfg.stage_dir(Stage::Rank).join("pathways.tsv"))?;
        let annotation = PathwayAnnotation::load(&cfg.stage_dir(Stage::Map).join("annotation.json"))?;
        let path = cfg.targets();
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let targets: Vec<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .map(str::to_string)
            .collect();
        let result = enrichment_test(&table, &annotation, &targets, cfg.enrich.n_perm, cfg.seed.expect("validated"))?;
        let files = vec![write(
            dir,
            "enrichment.json",
            serde_json::to_string_pretty(&result).expect("json") + "\n",
        )?];
        Ok(StageOutput {
            files,
            summary: json!({
                "score": result.score,
                "p_value": result.p_value,
                "n_targets": result.targets_used.len(),
                "n_dropped": result.dropped.len(),
            }),
            converged: true,
        })
    })
}
