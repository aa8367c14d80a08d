mod common;

use ndarray::Array2;
use proptest::prelude::*;
use psrrr::ingest::{
    hwe_pvalue, qc_filter, standardize, Chromosome, Covariate, CovariateTable, GenotypeMatrix, QcThresholds, SnpInfo,
};
use psrrr::pathmap::{expand_design, map_snps_to_genes, GeneLocation, Pathway, PathwayAnnotation};
use psrrr::phenosig::{ancova_filter, fit_slopes, residualize, validate_signature, LongitudinalTable, TraitMatrix};
use psrrr::psrrr::{fit_rank1, update_weights, FitOptions};
use psrrr::ranking::RankingTable;

fn genotype_matrix(values: Array2<f64>) -> GenotypeMatrix {
    let (n, p) = values.dim();
    let snps = (0..p)
        .map(|j| SnpInfo {
            id: format!("rs{j}"),
            chromosome: Chromosome::Autosome(1 + (j % 3) as u8),
            position: 100 * (j as u64 + 1),
        })
        .collect();
    GenotypeMatrix::new(values, snps, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
}

fn genotypes(n: usize, p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop_oneof![8 => (0u8..3).prop_map(f64::from), 1 => Just(f64::NAN)], n * p)
        .prop_map(move |v| Array2::from_shape_vec((n, p), v).unwrap())
}

proptest! {
    #[test]
    fn hwe_is_symmetric_in_homozygotes(a in 0usize..500, h in 0usize..500, b in 0usize..500) {
        prop_assert_eq!(hwe_pvalue(a, h, b), hwe_pvalue(b, h, a));
        let p = hwe_pvalue(a, h, b);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn qc_is_idempotent_and_retained_snps_pass(values in genotypes(60, 12)) {
        let g = genotype_matrix(values);
        let t = QcThresholds::default();
        if let Ok((kept, _)) = qc_filter(&g, &t) {
            let (again, report) = qc_filter(&kept, &t).unwrap();
            prop_assert_eq!(again.snp_ids().collect::<Vec<_>>(), kept.snp_ids().collect::<Vec<_>>());
            for j in 0..kept.n_snps() {
                let col = kept.column(j);
                let obs: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
                let counts = [0.0, 1.0, 2.0].map(|k| obs.iter().filter(|&&v| v == k).count());
                let freq = (counts[1] + 2 * counts[2]) as f64 / (2 * obs.len()) as f64;
                prop_assert!(obs.len() as f64 / col.len() as f64 >= 0.95);
                prop_assert!(freq.min(1.0 - freq) >= 0.1);
                prop_assert!(hwe_pvalue(counts[2], counts[1], counts[0]) >= 5e-7);
                prop_assert!(report.snps[j].retained());
            }
        }
    }

    #[test]
    fn standardize_is_idempotent(values in prop::collection::vec(0u8..3, 30 * 8)) {
        let a = Array2::from_shape_vec((30, 8), values.into_iter().map(f64::from).collect()).unwrap();
        if let Ok(s) = standardize(&genotype_matrix(a)) {
            let twice = standardize(&s.matrix).unwrap();
            prop_assert!(twice.dropped.is_empty());
            let diff = (twice.matrix.values() - s.matrix.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(diff < 1e-12);
        }
    }

    #[test]
    fn window_mapping_matches_interval_rule(
        positions in prop::collection::vec((1u8..3, 0u64..50_000), 1..40),
        genes in prop::collection::vec((1u8..3, 0u64..50_000, 0u64..5_000), 1..10),
        window in 0u64..8_000,
    ) {
        let snps: Vec<SnpInfo> = positions
            .iter()
            .enumerate()
            .map(|(j, &(c, p))| SnpInfo { id: format!("rs{j}"), chromosome: Chromosome::Autosome(c), position: p })
            .collect();
        let locs: Vec<GeneLocation> = genes
            .iter()
            .enumerate()
            .map(|(k, &(c, s, len))| GeneLocation::new(&format!("G{k}"), Chromosome::Autosome(c), s, s + len).unwrap())
            .collect();
        let map = map_snps_to_genes(&snps, &locs, window);
        for (j, s) in snps.iter().enumerate() {
            for g in &locs {
                let inside = s.chromosome == g.chromosome
                    && s.position + window >= g.start
                    && s.position <= g.end + window;
                let listed = map.genes_of(j).contains(&g.symbol);
                prop_assert_eq!(inside, listed);
                let reverse = map.snps_of(&g.symbol).is_some_and(|v| v.contains(&j));
                prop_assert_eq!(listed, reverse);
            }
        }
        // input order of the gene file does not matter
        let mut rev = locs.clone();
        rev.reverse();
        let map2 = map_snps_to_genes(&snps, &rev, window);
        for j in 0..snps.len() {
            let mut a = map.genes_of(j).to_vec();
            let mut b = map2.genes_of(j).to_vec();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn expansion_duplicates_shared_columns(memberships in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 10)) {
        // memberships[j][l]: SNP j belongs to pathway l
        let p = memberships.len();
        let snps: Vec<SnpInfo> = (0..p)
            .map(|j| SnpInfo { id: format!("rs{j}"), chromosome: Chromosome::Autosome(1), position: 10 * (j as u64 + 1) })
            .collect();
        let pathways: Vec<Pathway> = (0..4)
            .filter_map(|l| {
                let s: Vec<usize> = (0..p).filter(|&j| memberships[j][l]).collect();
                (!s.is_empty()).then(|| Pathway { name: format!("P{l}"), genes: vec![], snps: s })
            })
            .collect();
        prop_assume!(!pathways.is_empty());
        let ann = PathwayAnnotation::new(snps.clone(), vec![vec![]; p], pathways).unwrap();
        let mut r = common::rng(p as u64);
        let x = common::unit_columns(&mut r, 20, p);
        let g = GenotypeMatrix::new(x, snps, (0..20).map(|i| format!("s{i}")).collect()).unwrap();
        let g = standardize(&g).unwrap().matrix;
        let d = expand_design(&g, &ann).unwrap();
        for j in 0..p {
            let k = ann.pathways().iter().filter(|pw| pw.snps.contains(&j)).count();
            let cols = (0..d.n_cols()).filter(|&c| d.col(c) == g.column(j)).count();
            prop_assert_eq!(cols, k);
        }
        // dropping a pathway leaves the other groups untouched
        let keep: Vec<usize> = (1..ann.n_pathways()).collect();
        let sub = ann.retain(&keep);
        let ds = expand_design(&g, &sub).unwrap();
        for (new, &old) in keep.iter().enumerate() {
            let a: Vec<&[f64]> = ds.block(new).map(|c| ds.col(c)).collect();
            let b: Vec<&[f64]> = d.block(old).map(|c| d.col(c)).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn ranking_ignores_input_order(counts in prop::collection::vec(0usize..20, 1..30), seed in any::<u64>()) {
        let items: Vec<(String, usize, usize, String)> =
            counts.iter().enumerate().map(|(i, &c)| (format!("id{i:03}"), c, 1, String::new())).collect();
        let mut shuffled = items.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut common::rng(seed));
        let a = RankingTable::from_counts("x", 20, items);
        let b = RankingTable::from_counts("x", 20, shuffled);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.entries.windows(2).all(|w| w[0].pi > w[1].pi || (w[0].pi == w[1].pi && w[0].id < w[1].id)));
    }

    #[test]
    fn weight_update_factor_bounds(d in -1.0f64..1.0, eta in 0.05f64..0.99, l in 2usize..50) {
        let dl = d / l as f64;
        let w = update_weights(&vec![1.0; l], &vec![dl; l], eta);
        let f = w[0];
        let l2 = (l * l) as f64;
        prop_assert!(f > 0.0);
        if dl < 0.0 {
            prop_assert!(f >= eta - 1e-12 && f <= 1.0);
        } else {
            prop_assert!(f >= 1.0 && f <= 1.0 + (1.0 - eta) * l2 * dl * dl + 1e-12);
        }
    }
}

fn covariates(n: usize, seed: u64) -> CovariateTable {
    use rand::Rng;
    let mut r = common::rng(seed);
    CovariateTable::new(
        (0..n)
            .map(|i| Covariate {
                subject_id: format!("s{i}"),
                age: r.gen_range(55.0..90.0),
                sex: r.gen_range(0..2),
                group: ["AD", "CN", "MCI"][i % 3].to_string(),
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn slopes_ignore_visit_order(seed in any::<u64>(), order in Just([24.0, 6.0, 12.0]).prop_shuffle()) {
        let mut r = common::rng(seed);
        let names = vec!["t0".to_string(), "t1".to_string()];
        let noise: Vec<Vec<f64>> = (0..5).map(|_| common::gaussian(&mut r, 6)).collect();
        let rows = |times: &[f64]| -> Vec<(String, f64, Vec<f64>)> {
            let mut out = Vec::new();
            for (i, nz) in noise.iter().enumerate() {
                for &t in times {
                    let k = [6.0, 12.0, 24.0].iter().position(|&x| x == t).unwrap();
                    out.push((format!("s{i}"), t, vec![nz[2 * k], nz[2 * k + 1]]));
                }
            }
            out
        };
        let a = fit_slopes(&LongitudinalTable::from_rows(names.clone(), rows(&[6.0, 12.0, 24.0])).unwrap()).unwrap();
        let b = fit_slopes(&LongitudinalTable::from_rows(names, rows(&order)).unwrap()).unwrap();
        let diff = (&a.values - &b.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn ancova_is_scale_free_and_residuals_are_orthogonal(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let n = 45;
        let cov = covariates(n, seed);
        let mut r = common::rng(seed ^ 1);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let v = Array2::from_shape_vec((n, 3), common::gaussian(&mut r, n * 3)).unwrap();
        let m = TraitMatrix::new(ids.clone(), vec!["a".into(), "b".into(), "c".into()], v.clone()).unwrap();
        let m2 = TraitMatrix::new(ids, m.trait_names.clone(), v.mapv(|x| scale * x + shift)).unwrap();
        let p1 = ancova_filter(&m, &cov, "AD", "CN", 0.05).unwrap();
        let p2 = ancova_filter(&m2, &cov, "AD", "CN", 0.05).unwrap();
        for (a, b) in p1.p_values.iter().zip(&p2.p_values) {
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300).max(*b) + 1e-12);
        }
        let res = residualize(&m, &[0, 1, 2], &cov).unwrap();
        let age: Vec<f64> = cov.rows().iter().map(|c| c.age).collect();
        let sex: Vec<f64> = cov.rows().iter().map(|c| f64::from(c.sex)).collect();
        for k in 0..3 {
            let col = res.values().column(k).to_vec();
            prop_assert!(col.iter().sum::<f64>().abs() < 1e-10);
            prop_assert!(common::corr(&col, &age).abs() < 1e-10);
            prop_assert!(common::corr(&col, &sex).abs() < 1e-10);
        }
    }

    #[test]
    fn classifier_validation_is_deterministic(seed in any::<u64>(), fold_seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let y = Array2::from_shape_vec((40, 4), common::gaussian(&mut r, 160)).unwrap();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let a = validate_signature(y.view(), &labels, 10, fold_seed).unwrap();
        let b = validate_signature(y.view(), &labels, 10, fold_seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fitted_loadings_are_unit_and_sign_symmetric(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let inst = common::random_instance(&mut r, 30, 4, 30, 1, false);
        let y = Array2::from_shape_vec((30, 4), common::gaussian(&mut r, 120)).unwrap();
        let fit = fit_rank1(y.view(), &inst.design, &inst.weights, &FitOptions::default()).unwrap();
        let na: f64 = fit.pair.a.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((na - 1.0).abs() < 1e-10);
        if !fit.is_empty() {
            let nb: f64 = fit.pair.b.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((nb - 1.0).abs() < 1e-10);
            for l in 0..inst.design.n_groups() {
                let zero = fit.pair.b[inst.design.block(l)].iter().all(|&v| v == 0.0);
                prop_assert_eq!(zero, !fit.selected.contains(&l));
            }
        }
        // negated traits flip the pair but not the fitted values X b aᵀ
        let neg = y.mapv(|v| -v);
        let fit2 = fit_rank1(neg.view(), &inst.design, &inst.weights, &FitOptions::default()).unwrap();
        prop_assert_eq!(&fit.selected, &fit2.selected);
        let xb1 = inst.design.mul(&fit.pair.b);
        let xb2 = inst.design.mul(&fit2.pair.b);
        for i in 0..30 {
            for k in 0..4 {
                let f1 = xb1[i] * fit.pair.a[k];
                let f2 = -xb2[i] * fit2.pair.a[k];
                prop_assert!((f1 - f2).abs() < 1e-6);
            }
        }
    }
}
