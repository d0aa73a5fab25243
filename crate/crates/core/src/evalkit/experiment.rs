//! Grid experiment driver: reconstruction modes × instrument modes ×
//! instrument sources × citation-noise fractions × seeds, each cell a
//! full train/eval run emitting one result row.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{stream, synth_sentences, SyntheticData};
use crate::data::EmbeddingStore;
use crate::discover::{build_graph, infer_articles, Corpus, CorpusEntry, DiscoverConfig};
use crate::error::{Error, Result};
use crate::evalkit::metrics::{metrics, MetricReport};
use crate::numcore::matrix::euclidean;
use crate::par;
use crate::reconstruct::{IvMode, ReconMode};
use crate::trainer::{predict_pairs, train, TrainConfig};

/// Where each case's instrument articles come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvSource {
    /// Citations as given in the data.
    Oracle,
    /// Five articles drawn uniformly per case.
    Random5,
    /// Articles inferred from sentence vectors via the bipartite graph.
    Discovery,
}

impl IvSource {
    pub const ALL: [IvSource; 3] = [IvSource::Oracle, IvSource::Random5, IvSource::Discovery];

    pub fn as_str(self) -> &'static str {
        match self {
            IvSource::Oracle => "oracle",
            IvSource::Random5 => "random5",
            IvSource::Discovery => "discovery",
        }
    }
}

impl FromStr for IvSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(IvSource::Oracle),
            "random5" => Ok(IvSource::Random5),
            "discovery" => Ok(IvSource::Discovery),
            other => Err(Error::Config(format!("unknown instrument source {other}"))),
        }
    }
}

/// Grid axes plus the base training configuration. The per-cell seed
/// overrides `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub modes: Vec<ReconMode>,
    pub iv_modes: Vec<IvMode>,
    pub iv_sources: Vec<IvSource>,
    /// Fractions of citations replaced with random articles.
    pub iv_noise: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Adds a wall-clock column; leave off for byte-stable artifacts.
    pub include_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            modes: vec![ReconMode::Full],
            iv_modes: vec![IvMode::Shared],
            iv_sources: vec![IvSource::Oracle],
            iv_noise: vec![0.0],
            seeds: vec![0],
            train: TrainConfig::default(),
            include_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("modes", self.modes.is_empty()),
            ("iv_modes", self.iv_modes.is_empty()),
            ("iv_sources", self.iv_sources.is_empty()),
            ("iv_noise", self.iv_noise.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("{name} must be nonempty")));
            }
        }
        for f in &self.iv_noise {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::Config(format!("noise fraction {f} outside [0, 1]")));
            }
        }
        self.train.validate()
    }
}

/// Replaces each citation with a uniformly random article with
/// probability `fraction`. Zero is an exact no-op.
pub fn apply_iv_noise(
    store: &EmbeddingStore,
    fraction: f64,
    seed: u64,
) -> Result<EmbeddingStore> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "noise fraction {fraction} outside [0, 1]"
        )));
    }
    let mut out = store.clone();
    if fraction == 0.0 {
        return Ok(out);
    }
    let articles: Vec<String> = store.article_ids().map(str::to_owned).collect();
    if articles.is_empty() {
        return Err(Error::Input("store has no articles".into()));
    }
    let mut rng = stream(seed, 14);
    use rand::Rng;
    let ids: Vec<String> = store.case_ids().map(str::to_owned).collect();
    for id in ids {
        let cited = store.citations(&id);
        if cited.is_empty() {
            continue;
        }
        let replaced: Vec<String> = cited
            .iter()
            .map(|a| {
                if rng.random_range(0.0..1.0) < fraction {
                    articles[rng.random_range(0..articles.len())].clone()
                } else {
                    a.clone()
                }
            })
            .collect();
        out.set_citations(id, replaced)?;
    }
    Ok(out)
}

fn nearest_article(store: &EmbeddingStore, v: &[f64]) -> Option<String> {
    store
        .article_ids()
        .map(|id| (id, euclidean(store.article(id).unwrap(), v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(id, _)| id.to_owned())
}

/// Rewrites every cited case's citation list according to `source`.
pub fn apply_iv_source(
    store: &EmbeddingStore,
    source: IvSource,
    seed: u64,
) -> Result<EmbeddingStore> {
    match source {
        IvSource::Oracle => Ok(store.clone()),
        IvSource::Random5 => {
            let articles: Vec<String> = store.article_ids().map(str::to_owned).collect();
            if articles.is_empty() {
                return Err(Error::Input("store has no articles".into()));
            }
            let k = articles.len().min(5);
            let mut rng = stream(seed, 15);
            let mut out = store.clone();
            let ids: Vec<String> = store.case_ids().map(str::to_owned).collect();
            for id in ids {
                if store.citations(&id).is_empty() {
                    continue;
                }
                let picked: Vec<String> = rand::seq::index::sample(&mut rng, articles.len(), k)
                    .iter()
                    .map(|i| articles[i].clone())
                    .collect();
                out.set_citations(id, picked)?;
            }
            Ok(out)
        }
        IvSource::Discovery => {
            let sentences = synth_sentences(store, 3, 0.3, seed);
            let mut corpus = Corpus::new();
            for (id, sents) in &sentences {
                let cited = store.citations(id).to_vec();
                if !cited.is_empty() {
                    corpus.insert(
                        id.clone(),
                        CorpusEntry {
                            sentences: sents.clone(),
                            cited,
                        },
                    );
                }
            }
            if corpus.is_empty() {
                return Err(Error::Input("no cited cases with sentences".into()));
            }
            let total: usize = corpus.values().map(|e| e.sentences.len()).sum();
            let c = store.len_articles().min(total);
            let graph = build_graph(&corpus, c, &DiscoverConfig { seed, ..Default::default() })?;
            let mut out = store.clone();
            for (id, sents) in &sentences {
                if store.citations(id).is_empty() {
                    continue;
                }
                let inferred = infer_articles(sents, &graph)?;
                let cites: Vec<String> = if inferred.is_empty() {
                    let case = store.case(id).expect("sentences imply a case");
                    nearest_article(store, case).into_iter().collect()
                } else {
                    inferred.into_iter().collect()
                };
                out.set_citations(id.clone(), cites)?;
            }
            Ok(out)
        }
    }
}

/// One grid cell's configuration and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: ReconMode,
    pub iv_mode: IvMode,
    pub iv_source: IvSource,
    pub iv_noise: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub final_iv_loss: f64,
    pub final_match_loss: f64,
    pub seconds: Option<f64>,
}

/// Mean and sample standard deviation over seeds for one
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: ReconMode,
    pub iv_mode: IvMode,
    pub iv_source: IvSource,
    pub iv_noise: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub include_timing: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultTable {
    /// Tab-separated rows in a fixed column order. The wall-clock
    /// column appears only when timing was requested.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "mode\tiv_mode\tiv_source\tiv_noise\tseed\taccuracy\tmacro_precision\tmacro_recall\tmacro_f1\tfinal_iv_loss\tfinal_match_loss",
        );
        if self.include_timing {
            out.push_str("\tseconds");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.mode.as_str(),
                r.iv_mode.as_str(),
                r.iv_source.as_str(),
                r.iv_noise,
                r.seed,
                r.accuracy,
                r.macro_precision,
                r.macro_recall,
                r.macro_f1,
                r.final_iv_loss,
                r.final_match_loss,
            ));
            if self.include_timing {
                out.push_str(&format!("\t{}", r.seconds.unwrap_or(0.0)));
            }
            out.push('\n');
        }
        out
    }

    /// Aggregates rows over seeds, preserving first-seen configuration
    /// order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<(ReconMode, IvMode, IvSource, f64)> = Vec::new();
        for r in &self.rows {
            let key = (r.mode, r.iv_mode, r.iv_source, r.iv_noise);
            if !order.contains(&key) {
                order.push(key);
            }
        }
        order
            .into_iter()
            .map(|(mode, iv_mode, iv_source, iv_noise)| {
                let cell: Vec<&ResultRow> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        r.mode == mode
                            && r.iv_mode == iv_mode
                            && r.iv_source == iv_source
                            && r.iv_noise == iv_noise
                    })
                    .collect();
                let accs: Vec<f64> = cell.iter().map(|r| r.accuracy).collect();
                let f1s: Vec<f64> = cell.iter().map(|r| r.macro_f1).collect();
                let (mean_accuracy, std_accuracy) = mean_std(&accs);
                let (mean_macro_f1, std_macro_f1) = mean_std(&f1s);
                SummaryRow {
                    mode,
                    iv_mode,
                    iv_source,
                    iv_noise,
                    runs: cell.len(),
                    mean_accuracy,
                    std_accuracy,
                    mean_macro_f1,
                    std_macro_f1,
                }
            })
            .collect()
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from(
            "mode\tiv_mode\tiv_source\tiv_noise\truns\tmean_accuracy\tstd_accuracy\tmean_macro_f1\tstd_macro_f1\n",
        );
        for s in self.summary() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                s.mode.as_str(),
                s.iv_mode.as_str(),
                s.iv_source.as_str(),
                s.iv_noise,
                s.runs,
                s.mean_accuracy,
                s.std_accuracy,
                s.mean_macro_f1,
                s.std_macro_f1,
            ));
        }
        out
    }
}

/// Trains and scores one cell.
pub fn run_cell(
    data: &SyntheticData,
    base: &TrainConfig,
    mode: ReconMode,
    iv_mode: IvMode,
    iv_source: IvSource,
    iv_noise: f64,
    seed: u64,
    include_timing: bool,
) -> Result<(ResultRow, MetricReport)> {
    let started = Instant::now();
    let sourced = apply_iv_source(&data.store, iv_source, seed)?;
    let store = apply_iv_noise(&sourced, iv_noise, seed)?;
    let config = TrainConfig {
        mode,
        iv_mode,
        seed,
        ..base.clone()
    };
    let outcome = train(&data.train, &data.valid, &store, &config, None)?;
    let predicted = predict_pairs(&data.test, &store, &outcome.model, mode, iv_mode)?;
    let truth: Vec<usize> = data.test.iter().map(|p| p.z).collect();
    let report = metrics(&predicted, &truth, config.z_classes)?;
    let last = outcome.history.iterations.last();
    let row = ResultRow {
        mode,
        iv_mode,
        iv_source,
        iv_noise,
        seed,
        accuracy: report.accuracy,
        macro_precision: report.macro_precision,
        macro_recall: report.macro_recall,
        macro_f1: report.macro_f1,
        final_iv_loss: last.map_or(0.0, |r| r.train_iv_loss),
        final_match_loss: last.map_or(0.0, |r| r.train_match_loss),
        seconds: include_timing.then(|| started.elapsed().as_secs_f64()),
    };
    Ok((row, report))
}

/// Runs the full grid in a fixed cell order (modes, then instrument
/// modes, sources, noise fractions, seeds innermost).
pub fn run_experiment(config: &ExperimentConfig, data: &SyntheticData) -> Result<ResultTable> {
    config.validate()?;
    let mut cells = Vec::new();
    for &mode in &config.modes {
        for &iv_mode in &config.iv_modes {
            for &iv_source in &config.iv_sources {
                for &iv_noise in &config.iv_noise {
                    for &seed in &config.seeds {
                        cells.push((mode, iv_mode, iv_source, iv_noise, seed));
                    }
                }
            }
        }
    }
    let rows = par::map(&cells, |&(mode, iv_mode, iv_source, iv_noise, seed)| {
        run_cell(
            data,
            &config.train,
            mode,
            iv_mode,
            iv_source,
            iv_noise,
            seed,
            config.include_timing,
        )
        .map(|(row, _)| row)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable {
        rows,
        include_timing: config.include_timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic, SyntheticSpec};

    fn tiny_data(seed: u64) -> SyntheticData {
        generate_synthetic(&SyntheticSpec {
            d: 8,
            num_articles: 6,
            num_cases: 50,
            train_pairs: 40,
            valid_pairs: 12,
            test_pairs: 12,
            noise_scale: 0.1,
            confounder_scale: 0.8,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            iterations: 2,
            head_hidden: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_noise_oracle_cell_equals_a_plain_run() {
        let data = tiny_data(1);
        let config = ExperimentConfig {
            train: tiny_train(),
            ..Default::default()
        };
        let table = run_experiment(&config, &data).unwrap();
        assert_eq!(table.rows.len(), 1);

        let train_cfg = TrainConfig {
            seed: 0,
            ..tiny_train()
        };
        let outcome = train(&data.train, &data.valid, &data.store, &train_cfg, None).unwrap();
        let predicted =
            predict_pairs(&data.test, &data.store, &outcome.model, ReconMode::Full, IvMode::Shared)
                .unwrap();
        let truth: Vec<usize> = data.test.iter().map(|p| p.z).collect();
        let want = metrics(&predicted, &truth, 3).unwrap();
        assert_eq!(table.rows[0].accuracy.to_bits(), want.accuracy.to_bits());
        assert_eq!(
            table.rows[0].macro_f1.to_bits(),
            want.macro_f1.to_bits()
        );
    }

    #[test]
    fn four_modes_give_four_rows_per_seed() {
        let data = tiny_data(2);
        let config = ExperimentConfig {
            modes: ReconMode::ALL.to_vec(),
            seeds: vec![0, 1],
            train: tiny_train(),
            ..Default::default()
        };
        let table = run_experiment(&config, &data).unwrap();
        assert_eq!(table.rows.len(), 8);
        for mode in ReconMode::ALL {
            assert_eq!(table.rows.iter().filter(|r| r.mode == mode).count(), 2);
        }
    }

    #[test]
    fn identical_runs_emit_identical_tables() {
        let data = tiny_data(3);
        let config = ExperimentConfig {
            iv_noise: vec![0.0, 1.0],
            seeds: vec![4, 5],
            train: tiny_train(),
            ..Default::default()
        };
        let a = run_experiment(&config, &data).unwrap();
        let b = run_experiment(&config, &data).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_eq!(a.summary_tsv(), b.summary_tsv());
    }

    #[test]
    fn noise_zero_is_identity_and_noise_one_replaces_from_the_article_set() {
        let data = tiny_data(4);
        let clean = apply_iv_noise(&data.store, 0.0, 7).unwrap();
        for id in data.store.case_ids() {
            assert_eq!(clean.citations(id), data.store.citations(id));
        }
        let noisy = apply_iv_noise(&data.store, 1.0, 7).unwrap();
        let articles: Vec<&str> = data.store.article_ids().collect();
        let mut changed = 0;
        for id in data.store.case_ids() {
            for a in noisy.citations(id) {
                assert!(articles.contains(&a.as_str()));
            }
            if noisy.citations(id) != data.store.citations(id) {
                changed += 1;
            }
        }
        assert!(changed > data.store.len_cases() / 2);
        assert!(matches!(
            apply_iv_noise(&data.store, 1.5, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn random5_source_draws_five_distinct_articles() {
        let data = tiny_data(5);
        let store = apply_iv_source(&data.store, IvSource::Random5, 11).unwrap();
        for id in store.case_ids() {
            if data.store.citations(id).is_empty() {
                continue;
            }
            let cites = store.citations(id);
            assert_eq!(cites.len(), 5);
            let distinct: std::collections::BTreeSet<&String> = cites.iter().collect();
            assert_eq!(distinct.len(), 5);
        }
    }

    #[test]
    fn discovery_source_yields_citations_for_every_cited_case() {
        let data = tiny_data(6);
        let store = apply_iv_source(&data.store, IvSource::Discovery, 13).unwrap();
        for id in store.case_ids() {
            if !data.store.citations(id).is_empty() {
                assert!(!store.citations(id).is_empty(), "case {id} lost citations");
            }
        }
    }

    #[test]
    fn summary_aggregates_over_seeds() {
        let rows = vec![
            ResultRow {
                mode: ReconMode::Full,
                iv_mode: IvMode::Shared,
                iv_source: IvSource::Oracle,
                iv_noise: 0.0,
                seed: 0,
                accuracy: 0.5,
                macro_precision: 0.5,
                macro_recall: 0.5,
                macro_f1: 0.4,
                final_iv_loss: 1.0,
                final_match_loss: 1.0,
                seconds: None,
            },
            ResultRow {
                seed: 1,
                accuracy: 0.7,
                macro_f1: 0.6,
                ..ResultRow {
                    mode: ReconMode::Full,
                    iv_mode: IvMode::Shared,
                    iv_source: IvSource::Oracle,
                    iv_noise: 0.0,
                    seed: 0,
                    accuracy: 0.0,
                    macro_precision: 0.5,
                    macro_recall: 0.5,
                    macro_f1: 0.0,
                    final_iv_loss: 1.0,
                    final_match_loss: 1.0,
                    seconds: None,
                }
            },
        ];
        let table = ResultTable {
            rows,
            include_timing: false,
        };
        let summary = table.summary();
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].runs, 2);
        assert!((summary[0].mean_accuracy - 0.6).abs() < 1e-12);
        // Sample standard deviation of {0.5, 0.7}.
        assert!((summary[0].std_accuracy - (0.02f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_axes_are_rejected() {
        let config = ExperimentConfig {
            seeds: vec![],
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }
}
