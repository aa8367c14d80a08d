use std::path::{Path, PathBuf};

use psrrr::ingest::QcThresholds;
use psrrr::psrrr::{FitOptions, TuneOptions};
use psrrr::ranking::{RankOptions, SnpRankOptions};
use psrrr::simulate::SimulationSpec;
use psrrr::solver::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run needs. Every field has a default, so an empty file is a
/// valid configuration that runs on the output of `psrrr simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required by every stochastic command.
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out: PathBuf,
    /// Treat solver non-convergence as an error (exit code 4).
    pub fatal_nonconvergence: bool,
    pub inputs: Inputs,
    pub qc: QcSection,
    pub map: MapSection,
    pub phenotype: PhenotypeSection,
    pub solver: SolverSection,
    pub fit: FitSection,
    pub tune: TuneSection,
    pub rank: RankSection,
    pub enrich: EnrichSection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            workers: 0,
            out: PathBuf::from("psrrr-out"),
            fatal_nonconvergence: false,
            inputs: Inputs::default(),
            qc: QcSection::default(),
            map: MapSection::default(),
            phenotype: PhenotypeSection::default(),
            solver: SolverSection::default(),
            fit: FitSection::default(),
            tune: TuneSection::default(),
            rank: RankSection::default(),
            enrich: EnrichSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// External input files. Unset paths fall back to the files written by
/// `psrrr simulate` under the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub genotypes: Option<PathBuf>,
    pub snps: Option<PathBuf>,
    pub genes: Option<PathBuf>,
    pub gene_sets: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub longitudinal: Option<PathBuf>,
    /// Ready-made phenotype matrix; when unset the phenotype stage output is used.
    pub phenotype: Option<PathBuf>,
    /// Pathway weights table (e.g. from `psrrr tune`); when unset w_l = √S_l.
    pub weights: Option<PathBuf>,
    /// Target gene symbols for the enrichment test.
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcSection {
    pub call_rate_min: f64,
    pub hwe_p_min: f64,
    pub maf_min: f64,
    pub autosomes_only: bool,
}

impl Default for QcSection {
    fn default() -> Self {
        let t = QcThresholds::default();
        QcSection {
            call_rate_min: t.call_rate_min,
            hwe_p_min: t.hwe_p_min,
            maf_min: t.maf_min,
            autosomes_only: t.autosomes_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub window_bp: u64,
    /// Pathway names left out of the annotation.
    pub exclude: Vec<String>,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            window_bp: 10_000,
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhenotypeSection {
    pub group_a: String,
    pub group_b: String,
    /// Family-wise level, divided by the number of traits.
    pub alpha: f64,
    pub folds: usize,
}

impl Default for PhenotypeSection {
    fn default() -> Self {
        PhenotypeSection {
            group_a: "AD".into(),
            group_b: "CN".into(),
            alpha: 0.05,
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub refresh_every: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        SolverSection {
            tol: s.tol,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            refresh_every: s.refresh_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// λ = γ·λ_max.
    pub gamma: f64,
    pub tol: f64,
    pub max_alt: usize,
    pub screen: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitOptions::default();
        FitSection {
            gamma: f.gamma,
            tol: f.tol,
            max_alt: f.max_alt,
            screen: f.screen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub eta: f64,
    pub epsilon: f64,
    /// Defaults to 50·L.
    pub fits_per_iter: Option<usize>,
    pub max_iter: usize,
    pub max_bisect: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        let t = TuneOptions::default();
        TuneSection {
            eta: t.eta,
            epsilon: t.epsilon,
            fits_per_iter: t.fits_per_iter,
            max_iter: t.max_iter,
            max_bisect: t.max_bisect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    /// B, the number of subsamples.
    pub subsamples: usize,
    pub fraction: f64,
    /// γ of the second-level SNP lasso.
    pub gamma_lasso: f64,
}

impl Default for RankSection {
    fn default() -> Self {
        RankSection {
            subsamples: 1000,
            fraction: 0.5,
            gamma_lasso: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichSection {
    pub n_perm: usize,
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection { n_perm: 100_000 }
    }
}

/// Synthetic data set; the seed is the run's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_subjects: usize,
    pub n_snps: usize,
    pub n_pathways: usize,
    pub pathway_size_min: usize,
    pub pathway_size_max: usize,
    pub overlap_rate: f64,
    pub snps_per_gene: usize,
    pub maf_min: f64,
    pub maf_max: f64,
    pub ld_block: usize,
    pub ld_rho: f64,
    pub causal_pathways: Vec<usize>,
    pub causal_snps_per_pathway: usize,
    pub sigma: f64,
    pub n_traits: usize,
    /// Visit times in months for the longitudinal table.
    pub visits: Vec<f64>,
    /// Target genes written for the enrichment test, taken from the first
    /// causal pathway.
    pub n_targets: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SimulationSpec::default();
        SimulateSection {
            n_subjects: s.n_subjects,
            n_snps: s.n_snps,
            n_pathways: s.n_pathways,
            pathway_size_min: s.pathway_size_min,
            pathway_size_max: s.pathway_size_max,
            overlap_rate: s.overlap_rate,
            snps_per_gene: s.snps_per_gene,
            maf_min: s.maf_min,
            maf_max: s.maf_max,
            ld_block: s.ld_block,
            ld_rho: s.ld_rho,
            causal_pathways: s.causal_pathways,
            causal_snps_per_pathway: s.causal_snps_per_pathway,
            sigma: s.sigma,
            n_traits: s.n_traits,
            visits: vec![0.0, 12.0, 24.0],
            n_targets: 3,
        }
    }
}

impl SimulateSection {
    pub fn spec(&self, seed: u64) -> SimulationSpec {
        SimulationSpec {
            n_subjects: self.n_subjects,
            n_snps: self.n_snps,
            n_pathways: self.n_pathways,
            pathway_size_min: self.pathway_size_min,
            pathway_size_max: self.pathway_size_max,
            pathway_sizes: None,
            overlap_rate: self.overlap_rate,
            snps_per_gene: self.snps_per_gene,
            maf_min: self.maf_min,
            maf_max: self.maf_max,
            ld_block: self.ld_block,
            ld_rho: self.ld_rho,
            causal_pathways: self.causal_pathways.clone(),
            causal_snps_per_pathway: self.causal_snps_per_pathway,
            sigma: self.sigma,
            n_traits: self.n_traits,
            seed,
        }
    }
}

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Qc,
    Map,
    Phenotype,
    Tune,
    Fit,
    Rank,
    Snprank,
    Enrich,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Qc => "qc",
            Stage::Map => "map",
            Stage::Phenotype => "phenotype",
            Stage::Tune => "tune",
            Stage::Fit => "fit",
            Stage::Rank => "rank",
            Stage::Snprank => "snprank",
            Stage::Enrich => "enrich",
        }
    }

    pub fn needs_seed(self) -> bool {
        matches!(
            self,
            Stage::Simulate | Stage::Tune | Stage::Rank | Stage::Snprank | Stage::Enrich
        )
    }

    /// Top-level config keys whose values shape this stage's artifacts.
    pub fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Simulate => &["seed", "simulate"],
            Stage::Qc => &["qc"],
            Stage::Map => &["map"],
            Stage::Phenotype => &["seed", "phenotype"],
            Stage::Tune => &["seed", "solver", "tune"],
            Stage::Fit => &["solver", "fit"],
            Stage::Rank | Stage::Snprank => &["seed", "solver", "fit", "rank"],
            Stage::Enrich => &["seed", "enrich"],
        }
    }
}

impl RunConfig {
    /// Reads an optional TOML file and applies `key=value` overrides, where
    /// keys are dotted paths such as `fit.gamma`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", p.display())]))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?
            }
            None => toml::Table::new(),
        };
        let mut errors = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut table, o) {
                errors.push(e);
            }
        }
        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    fn from_simulation(&self, file: &str) -> PathBuf {
        self.stage_dir(Stage::Simulate).join(file)
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    pub fn genotypes(&self) -> PathBuf {
        self.inputs.genotypes.clone().unwrap_or_else(|| self.from_simulation("genotypes.tsv"))
    }

    pub fn snps(&self) -> PathBuf {
        self.inputs.snps.clone().unwrap_or_else(|| self.from_simulation("snps.tsv"))
    }

    pub fn genes(&self) -> PathBuf {
        self.inputs.genes.clone().unwrap_or_else(|| self.from_simulation("genes.tsv"))
    }

    pub fn gene_sets(&self) -> PathBuf {
        self.inputs.gene_sets.clone().unwrap_or_else(|| self.from_simulation("pathways.gmt"))
    }

    pub fn covariates(&self) -> PathBuf {
        self.inputs.covariates.clone().unwrap_or_else(|| self.from_simulation("covariates.tsv"))
    }

    pub fn longitudinal(&self) -> PathBuf {
        self.inputs
            .longitudinal
            .clone()
            .unwrap_or_else(|| self.from_simulation("longitudinal.tsv"))
    }

    pub fn phenotype(&self) -> PathBuf {
        self.inputs
            .phenotype
            .clone()
            .unwrap_or_else(|| self.stage_dir(Stage::Phenotype).join("phenotype.tsv"))
    }

    pub fn targets(&self) -> PathBuf {
        self.inputs.targets.clone().unwrap_or_else(|| self.from_simulation("targets.txt"))
    }

    /// Files a stage reads that no other stage of this tool writes.
    pub fn external_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let mut v = match stage {
            Stage::Simulate => vec![],
            Stage::Qc => vec![self.genotypes(), self.snps()],
            Stage::Map => vec![self.genes(), self.gene_sets()],
            Stage::Phenotype => vec![self.longitudinal(), self.covariates()],
            Stage::Tune | Stage::Fit | Stage::Rank | Stage::Snprank => {
                self.inputs.phenotype.iter().cloned().collect()
            }
            Stage::Enrich => vec![self.targets()],
        };
        if matches!(stage, Stage::Fit | Stage::Rank | Stage::Snprank) {
            v.extend(self.inputs.weights.iter().cloned());
        }
        v
    }

    /// Every file a stage reads, in a fixed order.
    pub fn stage_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let qc = self.stage_dir(Stage::Qc);
        let ann = self.stage_dir(Stage::Map).join("annotation.json");
        let mut v = match stage {
            Stage::Simulate | Stage::Qc | Stage::Phenotype => vec![],
            Stage::Map => vec![qc.join("snps.tsv")],
            Stage::Tune | Stage::Fit | Stage::Rank | Stage::Snprank => {
                vec![qc.join("genotypes.tsv"), qc.join("snps.tsv"), ann.clone(), self.phenotype()]
            }
            Stage::Enrich => vec![self.stage_dir(Stage::Rank).join("pathways.tsv"), ann],
        };
        if stage == Stage::Snprank {
            v.push(self.stage_dir(Stage::Rank).join("subsamples.jsonl"));
        }
        for p in self.external_inputs(stage) {
            if !v.contains(&p) {
                v.push(p);
            }
        }
        v
    }

    /// Every violation, not just the first.
    pub fn validate(&self, stages: &[Stage]) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let open_unit = |x: f64| x > 0.0 && x < 1.0;

        check(unit(self.qc.call_rate_min), format!("qc.call_rate_min must lie in [0,1], got {}", self.qc.call_rate_min));
        check(unit(self.qc.hwe_p_min), format!("qc.hwe_p_min must lie in [0,1], got {}", self.qc.hwe_p_min));
        check(
            (0.0..=0.5).contains(&self.qc.maf_min),
            format!("qc.maf_min must lie in [0,0.5], got {}", self.qc.maf_min),
        );

        let ph = &self.phenotype;
        check(open_unit(ph.alpha), format!("phenotype.alpha must lie in (0,1), got {}", ph.alpha));
        check(ph.folds >= 2, format!("phenotype.folds must be >= 2, got {}", ph.folds));
        check(ph.group_a != ph.group_b, "phenotype.group_a and group_b must differ".into());

        let s = &self.solver;
        check(s.tol > 0.0, format!("solver.tol must be > 0, got {}", s.tol));
        check(s.max_outer >= 1, "solver.max_outer must be >= 1".into());
        check(s.max_inner >= 1, "solver.max_inner must be >= 1".into());
        check(s.refresh_every >= 1, "solver.refresh_every must be >= 1".into());

        let f = &self.fit;
        check(open_unit(f.gamma), format!("fit.gamma must lie in (0,1), got {}", f.gamma));
        check(f.tol > 0.0, format!("fit.tol must be > 0, got {}", f.tol));
        check(f.max_alt >= 1, "fit.max_alt must be >= 1".into());
        check(f.screen > 0.0, format!("fit.screen must be > 0, got {}", f.screen));

        let t = &self.tune;
        check(open_unit(t.eta), format!("tune.eta must lie in (0,1), got {}", t.eta));
        check(t.epsilon > 0.0, format!("tune.epsilon must be > 0, got {}", t.epsilon));
        check(t.fits_per_iter != Some(0), "tune.fits_per_iter must be >= 1".into());
        check(t.max_bisect >= 1, "tune.max_bisect must be >= 1".into());

        let r = &self.rank;
        check(r.subsamples >= 1, "rank.subsamples must be >= 1".into());
        check(open_unit(r.fraction), format!("rank.fraction must lie in (0,1), got {}", r.fraction));
        check(open_unit(r.gamma_lasso), format!("rank.gamma_lasso must lie in (0,1), got {}", r.gamma_lasso));

        check(self.enrich.n_perm >= 1, "enrich.n_perm must be >= 1".into());

        if stages.contains(&Stage::Simulate) {
            if let Err(e) = self.simulate.spec(0).validate() {
                let msg = e.to_string();
                let msg = msg.strip_prefix("invalid parameter: ").unwrap_or(&msg);
                errs.extend(msg.split("; ").map(|m| format!("simulate: {m}")));
            }
            if self.simulate.visits.len() < 2 {
                errs.push("simulate.visits needs at least two visit times".into());
            }
        }
        if self.seed.is_none() {
            for st in stages.iter().filter(|s| s.needs_seed()) {
                errs.push(format!("`{}` needs a seed (--seed or `seed` in the config)", st.name()));
            }
        }
        for st in stages {
            for p in self.external_inputs(*st) {
                if !p.is_file() {
                    errs.push(format!("{}: input file {} does not exist", st.name(), p.display()));
                }
            }
        }
        errs
    }

    pub fn qc_thresholds(&self) -> QcThresholds {
        QcThresholds {
            call_rate_min: self.qc.call_rate_min,
            hwe_p_min: self.qc.hwe_p_min,
            maf_min: self.qc.maf_min,
            autosomes_only: self.qc.autosomes_only,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_outer: self.solver.max_outer,
            max_inner: self.solver.max_inner,
            refresh_every: self.solver.refresh_every,
            trace: false,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            gamma: self.fit.gamma,
            tol: self.fit.tol,
            max_alt: self.fit.max_alt,
            screen: self.fit.screen,
            solver: self.solver_options(),
        }
    }

    pub fn tune_options(&self) -> TuneOptions {
        TuneOptions {
            eta: self.tune.eta,
            epsilon: self.tune.epsilon,
            fits_per_iter: self.tune.fits_per_iter,
            max_iter: self.tune.max_iter,
            max_bisect: self.tune.max_bisect,
            seed: self.seed.unwrap_or_default(),
            solver: self.solver_options(),
        }
    }

    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            n_subsamples: self.rank.subsamples,
            fraction: self.rank.fraction,
            seed: self.seed.unwrap_or_default(),
            fit: self.fit_options(),
        }
    }

    pub fn snp_rank_options(&self) -> SnpRankOptions {
        SnpRankOptions {
            gamma: self.rank.gamma_lasso,
            tol: self.fit.tol,
            max_alt: self.fit.max_alt,
            solver: self.solver_options(),
        }
    }
}

/// Sets a dotted key in `table`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` is malformed"));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override `{key}`: `{p}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
