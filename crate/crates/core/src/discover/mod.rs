//! Bipartite article–cluster graphs built from cited sentence corpora,
//! article inference for uncited text, and citation-based pruning.
//!
//! Inference runs five steps: measure each sentence's distance to
//! every cluster, assign it to its nearest cluster plus every cluster
//! within a radius proportional to that nearest distance, cap each
//! cluster at the closest `k_prime` assigned sentences (ties broken by
//! sentence ordinal), collect the edge articles of each surviving
//! sentence's clusters, and return the union.

pub mod kmeans;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::matrix::euclidean;
use kmeans::kmeans;

/// One pre-encoded sentence of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub case_id: String,
    pub ordinal: usize,
    pub vector: Vec<f64>,
}

/// Sentences and citations of one corpus case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusEntry {
    pub sentences: Vec<Vec<f64>>,
    pub cited: Vec<String>,
}

pub type Corpus = BTreeMap<String, CorpusEntry>;

/// Knobs for graph construction and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoverConfig {
    /// Per-cluster sentence cap during inference.
    pub k_prime: usize,
    /// Minimum witnessing sentences for an edge.
    pub support: usize,
    /// Assignment radius as a multiple of the nearest-centroid
    /// distance.
    pub radius_scale: f64,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl Default for DiscoverConfig {
    fn default() -> Self {
        DiscoverConfig {
            k_prime: 5,
            support: 1,
            radius_scale: 1.25,
            kmeans_iters: 50,
            kmeans_tol: 1e-6,
            seed: 0,
        }
    }
}

impl DiscoverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..=15).contains(&self.k_prime) {
            return Err(Error::Config(format!(
                "per-cluster cap {} outside [3, 15]",
                self.k_prime
            )));
        }
        if self.support < 1 {
            return Err(Error::Config("edge support must be at least 1".into()));
        }
        if !(self.radius_scale > 0.0) {
            return Err(Error::Config("radius scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub id: usize,
    pub centroid: Vec<f64>,
}

/// Article–cluster graph with the inference knobs it was built under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub clusters: Vec<ClusterNode>,
    pub articles: Vec<String>,
    /// (article-id, cluster-id) pairs.
    pub edges: BTreeSet<(String, usize)>,
    pub radius_scale: f64,
    pub k_prime: usize,
    pub support: usize,
}

impl BipartiteGraph {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_scale > 0.0) {
            return Err(Error::Config("radius scale must be positive".into()));
        }
        if self.k_prime < 1 {
            return Err(Error::Config("per-cluster cap must be at least 1".into()));
        }
        let d = self.dimension();
        if self.clusters.iter().any(|c| c.centroid.len() != d) {
            return Err(Error::Shape("centroids have mixed dimensions".into()));
        }
        let cluster_ids: BTreeSet<usize> = self.clusters.iter().map(|c| c.id).collect();
        if cluster_ids.len() != self.clusters.len() {
            return Err(Error::Reference("duplicate cluster id".into()));
        }
        let articles: BTreeSet<&str> = self.articles.iter().map(|a| a.as_str()).collect();
        for (a, u) in &self.edges {
            if !articles.contains(a.as_str()) {
                return Err(Error::Reference(format!("edge references unknown article {a}")));
            }
            if !cluster_ids.contains(u) {
                return Err(Error::Reference(format!("edge references unknown cluster {u}")));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.centroid.len())
    }

    /// Articles with an edge into `cluster`.
    pub fn cluster_articles(&self, cluster: usize) -> impl Iterator<Item = &str> {
        self.edges
            .iter()
            .filter(move |(_, u)| *u == cluster)
            .map(|(a, _)| a.as_str())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let graph: BipartiteGraph = serde_json::from_reader(r)?;
        graph.validate()?;
        Ok(graph)
    }
}

/// Clusters all corpus sentences and links each article to the
/// clusters where at least `support` sentences of its citing cases
/// land. Clusters that attract no edge are dropped.
pub fn build_graph(corpus: &Corpus, c: usize, config: &DiscoverConfig) -> Result<BipartiteGraph> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Input("no records".into()));
    }
    let mut points = Vec::new();
    let mut point_cases = Vec::new();
    for (case_id, entry) in corpus {
        if entry.cited.is_empty() {
            return Err(Error::Input(format!("case {case_id} has no citations")));
        }
        for s in &entry.sentences {
            points.push(s.clone());
            point_cases.push(case_id.as_str());
        }
    }
    if c > points.len() {
        return Err(Error::Config(format!(
            "cluster count {c} exceeds {} sentences",
            points.len()
        )));
    }
    let km = kmeans(&points, c, config.seed, config.kmeans_iters, config.kmeans_tol)?;

    // Edge support: sentences of citing cases per (article, cluster).
    let mut witness: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for (cid, assigned) in point_cases.iter().zip(&km.assignments) {
        for a in &corpus[*cid].cited {
            *witness.entry((a.clone(), *assigned)).or_insert(0) += 1;
        }
    }
    let edges: BTreeSet<(String, usize)> = witness
        .into_iter()
        .filter(|(_, count)| *count >= config.support)
        .map(|(edge, _)| edge)
        .collect();

    let linked: BTreeSet<usize> = edges.iter().map(|(_, u)| *u).collect();
    let clusters = km
        .centroids
        .into_iter()
        .enumerate()
        .filter(|(id, _)| linked.contains(id))
        .map(|(id, centroid)| ClusterNode { id, centroid })
        .collect();
    let articles: BTreeSet<String> = corpus
        .values()
        .flat_map(|e| e.cited.iter().cloned())
        .collect();

    let graph = BipartiteGraph {
        clusters,
        articles: articles.into_iter().collect(),
        edges,
        radius_scale: config.radius_scale,
        k_prime: config.k_prime,
        support: config.support,
    };
    graph.validate()?;
    Ok(graph)
}

/// Infers article ids for an uncited sentence list via the five-step
/// procedure. An edgeless graph yields the empty set.
pub fn infer_articles(
    sentences: &[Vec<f64>],
    graph: &BipartiteGraph,
) -> Result<BTreeSet<String>> {
    if sentences.is_empty() {
        return Err(Error::Input("no sentences to infer from".into()));
    }
    if graph.clusters.is_empty() {
        return Ok(BTreeSet::new());
    }
    let d = graph.dimension();
    for (i, s) in sentences.iter().enumerate() {
        if s.len() != d {
            return Err(Error::Shape(format!(
                "sentence {i} has dimension {}, graph expects {d}",
                s.len()
            )));
        }
    }

    // Steps 1–2: multi-assignment within the radius, nearest always in.
    let mut assigned: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        let dists: Vec<f64> = graph
            .clusters
            .iter()
            .map(|c| euclidean(s, &c.centroid))
            .collect();
        let dmin = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let r = graph.radius_scale * dmin;
        for (c, dist) in graph.clusters.iter().zip(&dists) {
            if *dist <= r {
                assigned.entry(c.id).or_default().push((*dist, i));
            }
        }
    }

    // Step 3: keep the k_prime closest per cluster, ties by ordinal.
    // Steps 4–5: union the edge articles over surviving assignments.
    let mut union = BTreeSet::new();
    for (cluster, mut members) in assigned {
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        members.truncate(graph.k_prime);
        if !members.is_empty() {
            union.extend(graph.cluster_articles(cluster).map(str::to_owned));
        }
    }
    Ok(union)
}

/// Removes article nodes outside `cited` together with their edges.
/// Clusters stay, possibly edgeless.
pub fn prune_graph(graph: &BipartiteGraph, cited: &BTreeSet<String>) -> BipartiteGraph {
    BipartiteGraph {
        clusters: graph.clusters.clone(),
        articles: graph
            .articles
            .iter()
            .filter(|a| cited.contains(*a))
            .cloned()
            .collect(),
        edges: graph
            .edges
            .iter()
            .filter(|(a, _)| cited.contains(a))
            .cloned()
            .collect(),
        radius_scale: graph.radius_scale,
        k_prime: graph.k_prime,
        support: graph.support,
    }
}

/// Inference entry point for one case: cited cases restrict the graph
/// to their own citations first, uncited cases use the full graph.
pub fn infer_for_case(
    sentences: &[Vec<f64>],
    graph: &BipartiteGraph,
    cited: Option<&BTreeSet<String>>,
) -> Result<BTreeSet<String>> {
    match cited {
        Some(s) => infer_articles(sentences, &prune_graph(graph, s)),
        None => infer_articles(sentences, graph),
    }
}

/// Streams sentence records from a JSON-lines file.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{}:{}: non-finite sentence vector",
                path.display(),
                lineno + 1
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_sentences(path: impl AsRef<Path>, records: &[SentenceRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
