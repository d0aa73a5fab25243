//! Embedding stores, labelled case pairs, and the line-record file
//! formats that carry them.
//!
//! Files are UTF-8 text with one JSON object per line:
//! embeddings/articles `{"id", "vec"}`, citations `{"id", "articles"}`,
//! pairs `{"x", "y", "z"}`, paragraphs `{"id", "paras"}`. The vector
//! dimension is inferred from the first record and enforced after.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, GroundTruth, SyntheticData, SyntheticSpec};

/// Id-keyed table of case and law-article vectors, citations, and
/// optional paragraph vectors. Immutable after loading.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    d: usize,
    cases: BTreeMap<String, Vec<f64>>,
    articles: BTreeMap<String, Vec<f64>>,
    citations: BTreeMap<String, Vec<String>>,
    combined: BTreeMap<String, Vec<f64>>,
    paragraphs: BTreeMap<String, Vec<Vec<f64>>>,
}

impl EmbeddingStore {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            ..Default::default()
        }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn len_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn len_articles(&self) -> usize {
        self.articles.len()
    }

    pub fn case(&self, id: &str) -> Option<&[f64]> {
        self.cases.get(id).map(|v| v.as_slice())
    }

    pub fn article(&self, id: &str) -> Option<&[f64]> {
        self.articles.get(id).map(|v| v.as_slice())
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.keys().map(|s| s.as_str())
    }

    pub fn article_ids(&self) -> impl Iterator<Item = &str> {
        self.articles.keys().map(|s| s.as_str())
    }

    /// Cited article ids; empty when the case is uncited.
    pub fn citations(&self, id: &str) -> &[String] {
        self.citations.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn is_uncited(&self, id: &str) -> bool {
        self.citations(id).is_empty() && !self.combined.contains_key(id)
    }

    pub fn paragraphs(&self, id: &str) -> Option<&[Vec<f64>]> {
        self.paragraphs.get(id).map(|v| v.as_slice())
    }

    fn check_dim(&mut self, id: &str, v: &[f64]) -> Result<()> {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Format(format!(
                "record {id}: non-finite value at component {i}"
            )));
        }
        if self.d == 0 {
            self.d = v.len();
        }
        if v.len() != self.d {
            return Err(Error::Format(format!(
                "record {id}: dimension {} disagrees with {}",
                v.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn insert_case(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let id = id.into();
        self.check_dim(&id, &v)?;
        self.cases.insert(id, v);
        Ok(())
    }

    pub fn insert_article(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let id = id.into();
        self.check_dim(&id, &v)?;
        self.articles.insert(id, v);
        Ok(())
    }

    /// Records citations; every article id must resolve.
    pub fn set_citations(&mut self, id: impl Into<String>, articles: Vec<String>) -> Result<()> {
        let id = id.into();
        for a in &articles {
            if !self.articles.contains_key(a) {
                return Err(Error::Reference(format!(
                    "citation of case {id} names unknown article {a}"
                )));
            }
        }
        self.citations.insert(id, articles);
        Ok(())
    }

    /// Precomputed combined instrument vector, overriding the mean of
    /// cited articles.
    pub fn set_combined(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let id = id.into();
        self.check_dim(&id, &v)?;
        self.combined.insert(id, v);
        Ok(())
    }

    pub fn set_paragraphs(&mut self, id: impl Into<String>, paras: Vec<Vec<f64>>) -> Result<()> {
        let id = id.into();
        for p in &paras {
            self.check_dim(&id, p)?;
        }
        self.paragraphs.insert(id, paras);
        Ok(())
    }

    /// Combined instrument vector for a case: the override when
    /// present, otherwise the mean of its cited articles' vectors.
    pub fn iv_vector(&self, id: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.combined.get(id) {
            return Ok(v.clone());
        }
        let cited = self.citations(id);
        if cited.is_empty() {
            return Err(Error::MissingIv {
                case_id: id.to_string(),
            });
        }
        let mut acc = vec![0.0; self.d];
        for a in cited {
            let v = self.article(a).ok_or_else(|| {
                Error::Reference(format!("citation of case {id} names unknown article {a}"))
            })?;
            for (s, x) in acc.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = cited.len() as f64;
        for s in &mut acc {
            *s /= n;
        }
        Ok(acc)
    }
}

/// Labelled pair of case ids; `z` is in `[0, Z-1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasePair {
    pub x_id: String,
    pub y_id: String,
    pub z: usize,
}

#[derive(Serialize, Deserialize)]
struct VecRecord {
    id: String,
    vec: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CiteRecord {
    id: String,
    articles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    x: String,
    y: String,
    z: i64,
}

#[derive(Serialize, Deserialize)]
struct ParaRecord {
    id: String,
    paras: Vec<Vec<f64>>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| {
        Error::Input(format!("cannot open {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((n + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, lineno: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| {
        Error::Format(format!("{}:{lineno}: {e}", path.display()))
    })
}

/// Loads case embeddings, article embeddings, and citations into one
/// validated store.
pub fn load_store(
    embeddings_path: impl AsRef<Path>,
    articles_path: impl AsRef<Path>,
    citations_path: impl AsRef<Path>,
) -> Result<EmbeddingStore> {
    let embeddings_path = embeddings_path.as_ref();
    let articles_path = articles_path.as_ref();
    let citations_path = citations_path.as_ref();

    let mut store = EmbeddingStore::default();
    let case_lines = read_lines(embeddings_path)?;
    if case_lines.is_empty() {
        return Err(Error::Format(format!(
            "{}: no records",
            embeddings_path.display()
        )));
    }
    for (n, line) in &case_lines {
        let rec: VecRecord = parse_line(embeddings_path, *n, line)?;
        store.insert_case(rec.id, rec.vec)?;
    }
    for (n, line) in &read_lines(articles_path)? {
        let rec: VecRecord = parse_line(articles_path, *n, line)?;
        store.insert_article(rec.id, rec.vec)?;
    }
    for (n, line) in &read_lines(citations_path)? {
        let rec: CiteRecord = parse_line(citations_path, *n, line)?;
        if !store.cases.contains_key(&rec.id) {
            return Err(Error::Reference(format!(
                "{}:{n}: citation for unknown case {}",
                citations_path.display(),
                rec.id
            )));
        }
        store.set_citations(rec.id, rec.articles)?;
    }
    Ok(store)
}

/// Loads paragraph vectors into an existing store.
pub fn load_paragraphs(path: impl AsRef<Path>, store: &mut EmbeddingStore) -> Result<()> {
    let path = path.as_ref();
    for (n, line) in &read_lines(path)? {
        let rec: ParaRecord = parse_line(path, *n, line)?;
        store.set_paragraphs(rec.id, rec.paras)?;
    }
    Ok(())
}

/// Loads labelled pairs and validates ids and labels against the store
/// and class count `z_classes`.
pub fn load_pairs(
    path: impl AsRef<Path>,
    store: &EmbeddingStore,
    z_classes: usize,
) -> Result<Vec<CasePair>> {
    let path = path.as_ref();
    if z_classes < 2 {
        return Err(Error::Config(format!("class count {z_classes} < 2")));
    }
    let mut pairs = Vec::new();
    for (n, line) in &read_lines(path)? {
        let rec: PairRecord = parse_line(path, *n, line)?;
        if rec.z < 0 || rec.z as usize >= z_classes {
            return Err(Error::Label(format!(
                "{}:{n}: label {} outside [0, {}]",
                path.display(),
                rec.z,
                z_classes - 1
            )));
        }
        for id in [&rec.x, &rec.y] {
            if store.case(id).is_none() {
                return Err(Error::Reference(format!(
                    "{}:{n}: pair references unknown case {id}",
                    path.display()
                )));
            }
        }
        pairs.push(CasePair {
            x_id: rec.x,
            y_id: rec.y,
            z: rec.z as usize,
        });
    }
    Ok(pairs)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes case embeddings in the line-record format.
pub fn save_case_embeddings(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        store.cases.iter().map(|(id, vec)| VecRecord {
            id: id.clone(),
            vec: vec.clone(),
        }),
    )
}

/// Writes article embeddings in the line-record format.
pub fn save_article_embeddings(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        store.articles.iter().map(|(id, vec)| VecRecord {
            id: id.clone(),
            vec: vec.clone(),
        }),
    )
}

/// Writes citations in the line-record format.
pub fn save_citations(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        store.citations.iter().map(|(id, articles)| CiteRecord {
            id: id.clone(),
            articles: articles.clone(),
        }),
    )
}

/// Writes labelled pairs in the line-record format.
pub fn save_pairs(path: impl AsRef<Path>, pairs: &[CasePair]) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        pairs.iter().map(|p| PairRecord {
            x: p.x_id.clone(),
            y: p.y_id.clone(),
            z: p.z as i64,
        }),
    )
}

/// Loads an id-to-vector file as a plain map, without store
/// validation. All vectors must share one dimension.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    let mut d = None;
    for (n, line) in &read_lines(path)? {
        let rec: VecRecord = parse_line(path, *n, line)?;
        match d {
            None => d = Some(rec.vec.len()),
            Some(d) if rec.vec.len() != d => {
                return Err(Error::Shape(format!(
                    "{}:{n}: vector of length {}, expected {d}",
                    path.display(),
                    rec.vec.len()
                )));
            }
            Some(_) => {}
        }
        out.insert(rec.id, rec.vec);
    }
    Ok(out)
}

/// Writes an id-to-vector map in the line-record format.
pub fn save_vectors(path: impl AsRef<Path>, map: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        map.iter().map(|(id, vec)| VecRecord {
            id: id.clone(),
            vec: vec.clone(),
        }),
    )
}

/// Loads a citations file as a plain map, without store validation.
pub fn load_citations_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (n, line) in &read_lines(path)? {
        let rec: CiteRecord = parse_line(path, *n, line)?;
        out.insert(rec.id, rec.articles);
    }
    Ok(out)
}

/// Writes a citations-grammar file from a plain map.
pub fn save_citations_map(
    path: impl AsRef<Path>,
    map: &BTreeMap<String, Vec<String>>,
) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        map.iter().map(|(id, articles)| CiteRecord {
            id: id.clone(),
            articles: articles.clone(),
        }),
    )
}
