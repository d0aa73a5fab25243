//! Seeded synthetic corpora with a planted causal structure.
//!
//! Article vectors are drawn first; each case embedding is a hidden
//! linear map applied to the mean of its cited articles (the
//! law-related part) plus an independent confounder and noise (the
//! law-unrelated part). Pair labels come from a planted rule mixing
//! standardized law-part and confounder-part dot products, binned at
//! empirical quantiles into balanced classes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CasePair, EmbeddingStore};
use crate::error::{Error, Result};
use crate::numcore::matrix::{dot, DenseMatrix};

/// Default weight of the law-part term in the planted label rule; the
/// confounder term gets the complement.
pub const LAW_RULE_WEIGHT: f64 = 0.8;

/// Cited articles per synthetic case.
pub const CITATIONS_PER_CASE: usize = 2;

/// Classes in the planted labels.
pub const SYNTHETIC_CLASSES: usize = 3;

/// Shape of a synthetic corpus. Fully determines it together with the
/// hidden generator constants above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub d: usize,
    pub num_articles: usize,
    pub num_cases: usize,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub test_pairs: usize,
    pub noise_scale: f64,
    pub confounder_scale: f64,
    /// Share of the planted label rule carried by the law parts; the
    /// confounder parts carry the complement.
    pub law_rule_weight: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 16,
            num_articles: 8,
            num_cases: 300,
            train_pairs: 400,
            valid_pairs: 100,
            test_pairs: 100,
            noise_scale: 0.1,
            confounder_scale: 1.0,
            law_rule_weight: LAW_RULE_WEIGHT,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (what, n) in [
            ("d", self.d),
            ("num_articles", self.num_articles),
            ("num_cases", self.num_cases),
            ("train_pairs", self.train_pairs),
            ("valid_pairs", self.valid_pairs),
            ("test_pairs", self.test_pairs),
        ] {
            if n < 1 {
                return Err(Error::Config(format!("{what} must be >= 1")));
            }
        }
        if self.num_articles < CITATIONS_PER_CASE {
            return Err(Error::Config(format!(
                "num_articles must be >= {CITATIONS_PER_CASE}"
            )));
        }
        if self.noise_scale < 0.0 || self.confounder_scale < 0.0 {
            return Err(Error::Config("scales must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.law_rule_weight) {
            return Err(Error::Config(format!(
                "law_rule_weight {} outside [0, 1]",
                self.law_rule_weight
            )));
        }
        Ok(())
    }
}

/// Hidden decomposition of each synthetic case: the law-related part
/// (map applied to the article combination) and everything else
/// (confounder plus noise).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub law: BTreeMap<String, Vec<f64>>,
    pub other: BTreeMap<String, Vec<f64>>,
}

/// A generated corpus with its splits and hidden decomposition.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    pub train: Vec<CasePair>,
    pub valid: Vec<CasePair>,
    pub test: Vec<CasePair>,
    pub truth: GroundTruth,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Independent generator stream derived from a run seed. Distinct
/// stream numbers decorrelate the draws without touching the seed.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn standardized(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// The planted pair score: standardized law-part dot products and
/// standardized confounder-part dot products, mixed `law_weight` to
/// `1 - law_weight`.
pub fn planted_scores(law_dots: &[f64], conf_dots: &[f64], law_weight: f64) -> Vec<f64> {
    let zl = standardized(law_dots);
    let zc = standardized(conf_dots);
    zl.iter()
        .zip(&zc)
        .map(|(l, c)| law_weight * l + (1.0 - law_weight) * c)
        .collect()
}

/// Bins scores at empirical quantiles into `classes` balanced labels.
pub fn quantile_labels(scores: &[f64], classes: usize) -> Vec<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let cuts: Vec<f64> = (1..classes).map(|k| sorted[k * n / classes]).collect();
    scores
        .iter()
        .map(|s| cuts.iter().take_while(|c| s >= c).count())
        .collect()
}

/// Generates a corpus from `spec`. Identical specs give identical
/// output; only the seed needs to change to change the data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.d;
    let id_width = |n: usize| (n.max(2) - 1).to_string().len();
    let aw = id_width(spec.num_articles);
    let cw = id_width(spec.num_cases);

    let mut store = EmbeddingStore::new(d);
    let mut art_rng = stream(spec.seed, 1);
    let mut articles = Vec::with_capacity(spec.num_articles);
    for m in 0..spec.num_articles {
        let v = normal_vec(&mut art_rng, d, 1.0);
        store.insert_article(format!("A{m:0aw$}"), v.clone())?;
        articles.push(v);
    }

    let mut map_rng = stream(spec.seed, 2);
    let scale = (2.0 / d as f64).sqrt();
    let hidden_map = DenseMatrix::from_fn(d, d, |_, _| {
        scale * map_rng.sample::<f64, _>(StandardNormal)
    });

    let mut case_rng = stream(spec.seed, 3);
    let mut truth = GroundTruth {
        law: BTreeMap::new(),
        other: BTreeMap::new(),
    };
    let mut case_ids = Vec::with_capacity(spec.num_cases);
    for i in 0..spec.num_cases {
        let id = format!("C{i:0cw$}");
        let mut picked: Vec<usize> = Vec::with_capacity(CITATIONS_PER_CASE);
        while picked.len() < CITATIONS_PER_CASE {
            let k = case_rng.random_range(0..spec.num_articles);
            if !picked.contains(&k) {
                picked.push(k);
            }
        }
        picked.sort_unstable();
        let mut combo = vec![0.0; d];
        for k in &picked {
            for (c, a) in combo.iter_mut().zip(&articles[*k]) {
                *c += a;
            }
        }
        for c in &mut combo {
            *c /= CITATIONS_PER_CASE as f64;
        }
        let law = hidden_map.matvec(&combo)?;
        let conf = normal_vec(&mut case_rng, d, spec.confounder_scale);
        let noise = normal_vec(&mut case_rng, d, spec.noise_scale);
        let other: Vec<f64> = conf.iter().zip(&noise).map(|(c, n)| c + n).collect();
        let emb: Vec<f64> = law.iter().zip(&other).map(|(l, o)| l + o).collect();

        store.insert_case(id.clone(), emb)?;
        store.set_citations(
            id.clone(),
            picked.iter().map(|k| format!("A{k:0aw$}")).collect(),
        )?;
        // The label rule reads the confounder before noise is added.
        truth.law.insert(id.clone(), law);
        truth.other.insert(id.clone(), other);
        case_ids.push((id, conf));
    }

    let mut pair_rng = stream(spec.seed, 4);
    let total = spec.train_pairs + spec.valid_pairs + spec.test_pairs;
    let mut endpoints = Vec::with_capacity(total);
    let mut law_dots = Vec::with_capacity(total);
    let mut conf_dots = Vec::with_capacity(total);
    for _ in 0..total {
        let i = pair_rng.random_range(0..spec.num_cases);
        let mut j = pair_rng.random_range(0..spec.num_cases);
        while j == i {
            j = pair_rng.random_range(0..spec.num_cases);
        }
        let (xi, ci) = &case_ids[i];
        let (yj, cj) = &case_ids[j];
        law_dots.push(dot(&truth.law[xi], &truth.law[yj]));
        conf_dots.push(dot(ci, cj));
        endpoints.push((xi.clone(), yj.clone()));
    }
    let scores = planted_scores(&law_dots, &conf_dots, spec.law_rule_weight);
    let labels = quantile_labels(&scores, SYNTHETIC_CLASSES);
    let mut pairs: Vec<CasePair> = endpoints
        .into_iter()
        .zip(labels)
        .map(|((x_id, y_id), z)| CasePair { x_id, y_id, z })
        .collect();

    let test = pairs.split_off(spec.train_pairs + spec.valid_pairs);
    let valid = pairs.split_off(spec.train_pairs);
    let train = pairs;

    Ok(SyntheticData {
        store,
        train,
        valid,
        test,
        truth,
    })
}

/// Synthetic sentence vectors for discovery experiments: for every
/// cited article of a case, one sentence near that article's vector,
/// jittered by `jitter` times standard normal noise.
pub fn synth_sentences(
    store: &EmbeddingStore,
    per_article: usize,
    jitter: f64,
    seed: u64,
) -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut rng = stream(seed, 9);
    let d = store.dimension();
    let mut out = BTreeMap::new();
    for id in store.case_ids() {
        let mut sentences = Vec::new();
        for a in store.citations(id) {
            let base = store.article(a).expect("validated citation");
            for _ in 0..per_article {
                let noise = normal_vec(&mut rng, d, jitter);
                sentences.push(base.iter().zip(&noise).map(|(b, n)| b + n).collect());
            }
        }
        if !sentences.is_empty() {
            out.insert(id.to_string(), sentences);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::matrix::norm_sq;

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let spec = SyntheticSpec {
            num_cases: 40,
            train_pairs: 30,
            valid_pairs: 10,
            test_pairs: 10,
            seed: 7,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.truth.law, b.truth.law);
        for id in a.store.case_ids() {
            let u = a.store.case(id).unwrap();
            let v = b.store.case(id).unwrap();
            assert_eq!(u, v);
        }

        let other = generate_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        let changed = a
            .store
            .case_ids()
            .any(|id| a.store.case(id) != other.store.case(id));
        assert!(changed);
    }

    #[test]
    fn noiseless_cases_have_zero_residual_truth() {
        let spec = SyntheticSpec {
            num_cases: 20,
            train_pairs: 10,
            valid_pairs: 5,
            test_pairs: 5,
            noise_scale: 0.0,
            confounder_scale: 0.0,
            seed: 3,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        for (id, other) in &data.truth.other {
            assert_eq!(norm_sq(other), 0.0, "case {id}");
            let emb = data.store.case(id).unwrap();
            assert_eq!(emb, data.truth.law[id].as_slice());
        }
    }

    #[test]
    fn labels_are_balanced_and_splits_sized() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic(&spec).unwrap();
        assert_eq!(data.train.len(), 400);
        assert_eq!(data.valid.len(), 100);
        assert_eq!(data.test.len(), 100);
        let mut counts = [0usize; 3];
        for p in data.train.iter().chain(&data.valid).chain(&data.test) {
            counts[p.z] += 1;
        }
        let total = 600.0;
        for c in counts {
            let frac = c as f64 / total;
            assert!((frac - 1.0 / 3.0).abs() < 0.02, "class fraction {frac}");
        }
    }

    #[test]
    fn quantile_labels_split_evenly() {
        let scores: Vec<f64> = (0..90).map(|i| i as f64).collect();
        let labels = quantile_labels(&scores, 3);
        assert_eq!(labels.iter().filter(|z| **z == 0).count(), 30);
        assert_eq!(labels.iter().filter(|z| **z == 1).count(), 30);
        assert_eq!(labels.iter().filter(|z| **z == 2).count(), 30);
        assert!(labels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn oracle_on_ground_truth_recovers_labels() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic(&spec).unwrap();

        // Oracle: rebuild the score from ground-truth parts,
        // standardize and cut on the train split only, then classify
        // the test split.
        let dots = |pairs: &[CasePair]| -> (Vec<f64>, Vec<f64>) {
            let law = pairs
                .iter()
                .map(|p| dot(&data.truth.law[&p.x_id], &data.truth.law[&p.y_id]))
                .collect();
            let oth = pairs
                .iter()
                .map(|p| dot(&data.truth.other[&p.x_id], &data.truth.other[&p.y_id]))
                .collect();
            (law, oth)
        };
        let (tr_law, tr_oth) = dots(&data.train);
        let n = tr_law.len() as f64;
        let stats = |xs: &[f64]| {
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            (mean, sd.max(1e-12))
        };
        let (ml, sl) = stats(&tr_law);
        let (mo, so) = stats(&tr_oth);
        let w = spec.law_rule_weight;
        let score = |l: f64, o: f64| w * (l - ml) / sl + (1.0 - w) * (o - mo) / so;
        let mut train_scores: Vec<f64> = tr_law
            .iter()
            .zip(&tr_oth)
            .map(|(l, o)| score(*l, *o))
            .collect();
        train_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let c1 = train_scores[train_scores.len() / 3];
        let c2 = train_scores[2 * train_scores.len() / 3];

        let (te_law, te_oth) = dots(&data.test);
        let mut correct = 0usize;
        for (k, p) in data.test.iter().enumerate() {
            let s = score(te_law[k], te_oth[k]);
            let pred = if s < c1 {
                0
            } else if s < c2 {
                1
            } else {
                2
            };
            if pred == p.z {
                correct += 1;
            }
        }
        let acc = correct as f64 / data.test.len() as f64;
        assert!(acc > 0.9, "oracle accuracy {acc}");
    }

    #[test]
    fn sentences_follow_cited_articles() {
        let spec = SyntheticSpec {
            num_cases: 10,
            train_pairs: 5,
            valid_pairs: 2,
            test_pairs: 2,
            seed: 5,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let sents = synth_sentences(&data.store, 2, 0.0, 11);
        for (id, ss) in &sents {
            assert_eq!(ss.len(), 2 * data.store.citations(id).len());
            for s in ss {
                let hit = data
                    .store
                    .citations(id)
                    .iter()
                    .any(|a| data.store.article(a).unwrap() == s.as_slice());
                assert!(hit, "sentence of {id} does not sit on a cited article");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = SyntheticSpec {
            num_cases: 0,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
        let bad = SyntheticSpec {
            noise_scale: -0.5,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
    }
}
