//! Documents, pairwise labels and feature matrices.
//!
//! Text formats are tab separated with a one-line header:
//!
//! ```text
//! # pairs v1            winner<TAB>loser[<TAB>count]
//! # tuples v1           m1<TAB>m2<TAB>m3<TAB>m4<TAB>best<TAB>worst
//! # features v1 dim=D focus_dim=F
//!                       id<TAB>x_1 .. x_D[<TAB>f_1 .. f_F]
//! # documents v1        id[<TAB>text[<TAB>focus_index]]
//! ```
//!
//! Feature matrices also have a binary twin (`PRFM` magic, little endian,
//! length-prefixed ids) which [`load_features`] detects automatically.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAIRS_HEADER: &str = "# pairs v1";
const TUPLES_HEADER: &str = "# tuples v1";
const FEATURES_HEADER: &str = "# features v1";
const DOCUMENTS_HEADER: &str = "# documents v1";
const BINARY_MAGIC: &[u8; 4] = b"PRFM";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: Option<String>,
    /// Token position of the focus word, counted over whitespace tokens.
    pub focus_index: Option<usize>,
}

impl Document {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("empty document id".into()));
        }
        if let (Some(text), Some(idx)) = (&self.text, self.focus_index) {
            let n_tokens = text.split_whitespace().count();
            if idx >= n_tokens {
                return Err(Error::Invalid(format!(
                    "document {}: focus index {idx} out of range for {n_tokens} tokens",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A validated set of documents with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            d.validate()?;
            if index.insert(d.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate document id {}", d.id)));
            }
        }
        Ok(Corpus { docs, index })
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Corpus::new(
            ids.into_iter()
                .map(|id| Document {
                    id: id.into(),
                    text: None,
                    focus_index: None,
                })
                .collect(),
        )
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut docs = Vec::new();
    for (lineno, line) in read_lines(path)? {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let focus_index = match fields.get(2) {
            Some(s) if !s.is_empty() => Some(
                s.parse::<usize>()
                    .map_err(|e| Error::parse(path, lineno, format!("focus index: {e}")))?,
            ),
            _ => None,
        };
        docs.push(Document {
            id: fields[0].to_string(),
            text: fields.get(1).map(|s| s.to_string()),
            focus_index,
        });
    }
    Corpus::new(docs)
}

pub fn save_documents(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(DOCUMENTS_HEADER);
    out.push('\n');
    for d in corpus.documents() {
        out.push_str(&d.id);
        out.push('\t');
        out.push_str(d.text.as_deref().unwrap_or(""));
        out.push('\t');
        if let Some(i) = d.focus_index {
            out.push_str(&i.to_string());
        }
        out.push('\n');
    }
    write_file(path.as_ref(), out.as_bytes())
}

/// One pairwise outcome: `winner` was preferred over `loser`, `count` times.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairLabel {
    pub winner: String,
    pub loser: String,
    pub count: u32,
}

impl PairLabel {
    pub fn new(winner: impl Into<String>, loser: impl Into<String>, count: u32) -> Self {
        PairLabel {
            winner: winner.into(),
            loser: loser.into(),
            count,
        }
    }

    pub fn reversed(&self) -> Self {
        PairLabel {
            winner: self.loser.clone(),
            loser: self.winner.clone(),
            count: self.count,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.winner == self.loser {
            return Err(Error::Invalid(format!(
                "pair compares {} with itself",
                self.winner
            )));
        }
        if self.count == 0 {
            return Err(Error::Invalid(format!(
                "pair {} > {} has zero count",
                self.winner, self.loser
            )));
        }
        Ok(())
    }
}

/// A best-worst annotation over four documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleLabel {
    pub members: [String; 4],
    pub best: String,
    pub worst: String,
}

impl TupleLabel {
    pub fn validate(&self) -> Result<()> {
        if self.best == self.worst {
            return Err(Error::Invalid(format!(
                "tuple best and worst are both {}",
                self.best
            )));
        }
        for id in [&self.best, &self.worst] {
            if !self.members.contains(id) {
                return Err(Error::Invalid(format!("{id} is not a member of its tuple")));
            }
        }
        Ok(())
    }

    /// Keeps only the extreme judgement: best beats worst.
    pub fn to_pair(&self) -> PairLabel {
        PairLabel::new(self.best.clone(), self.worst.clone(), 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFormat {
    Pairs,
    Tuples,
}

impl std::str::FromStr for PairFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(PairFormat::Pairs),
            "tuples" => Ok(PairFormat::Tuples),
            other => Err(Error::Invalid(format!("unknown pair format {other:?}"))),
        }
    }
}

/// Merges identical (winner, loser) rows by summing their counts. Output keeps
/// first-occurrence order.
pub fn merge_pairs(pairs: impl IntoIterator<Item = PairLabel>) -> Vec<PairLabel> {
    let mut out: Vec<PairLabel> = Vec::new();
    let mut slot: HashMap<(String, String), usize> = HashMap::new();
    for p in pairs {
        match slot.get(&(p.winner.clone(), p.loser.clone())) {
            Some(&i) => out[i].count += p.count,
            None => {
                slot.insert((p.winner.clone(), p.loser.clone()), out.len());
                out.push(p);
            }
        }
    }
    out
}

pub fn total_count(pairs: &[PairLabel]) -> u64 {
    pairs.iter().map(|p| p.count as u64).sum()
}

pub fn load_pairs(path: impl AsRef<Path>, format: PairFormat) -> Result<Vec<PairLabel>> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (lineno, line) in read_lines(path)? {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let pair = match format {
            PairFormat::Pairs => {
                if fields.len() != 2 && fields.len() != 3 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected 2 or 3 fields, found {}", fields.len()),
                    ));
                }
                let count = match fields.get(2) {
                    Some(c) => c
                        .parse::<u32>()
                        .map_err(|e| Error::parse(path, lineno, format!("count: {e}")))?,
                    None => 1,
                };
                PairLabel::new(fields[0], fields[1], count)
            }
            PairFormat::Tuples => {
                if fields.len() != 6 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected 6 fields, found {}", fields.len()),
                    ));
                }
                let tuple = TupleLabel {
                    members: [
                        fields[0].to_string(),
                        fields[1].to_string(),
                        fields[2].to_string(),
                        fields[3].to_string(),
                    ],
                    best: fields[4].to_string(),
                    worst: fields[5].to_string(),
                };
                tuple
                    .validate()
                    .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
                tuple.to_pair()
            }
        };
        pair.validate()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(merge_pairs(pairs))
}

pub fn save_pairs(pairs: &[PairLabel], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.winner, p.loser, p.count));
    }
    write_file(path.as_ref(), out.as_bytes())
}

pub fn save_tuples(tuples: &[TupleLabel], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(TUPLES_HEADER);
    out.push('\n');
    for t in tuples {
        out.push_str(&t.members.join("\t"));
        out.push_str(&format!("\t{}\t{}\n", t.best, t.worst));
    }
    write_file(path.as_ref(), out.as_bytes())
}

/// Fails with every pair endpoint that is not in `ids`.
pub fn check_pair_ids(pairs: &[PairLabel], ids: &HashSet<&str>) -> Result<()> {
    let mut missing = BTreeSet::new();
    for p in pairs {
        for id in [&p.winner, &p.loser] {
            if !ids.contains(id.as_str()) {
                missing.insert(id.clone());
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownIds(missing.into_iter().collect()))
    }
}

/// Ids in order of first appearance across `pairs`.
pub fn pair_ids(pairs: &[PairLabel]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        for id in [&p.winner, &p.loser] {
            if seen.insert(id.as_str()) {
                out.push(id.clone());
            }
        }
    }
    out
}

/// Dense per-document feature vectors, with optional focus-word vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureMatrixRepr")]
pub struct FeatureMatrix {
    doc_ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    focus_dim: usize,
    focus_data: Option<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct FeatureMatrixRepr {
    doc_ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    focus_dim: usize,
    focus_data: Option<Vec<f64>>,
}

impl TryFrom<FeatureMatrixRepr> for FeatureMatrix {
    type Error = Error;

    fn try_from(r: FeatureMatrixRepr) -> Result<Self> {
        if r.data.len() != r.doc_ids.len() * r.dim {
            return Err(Error::Invalid(
                "feature data length does not match shape".into(),
            ));
        }
        FeatureMatrix::from_parts(r.doc_ids, r.dim, r.data, r.focus_dim, r.focus_data)
    }
}

impl FeatureMatrix {
    pub fn new(doc_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let data = flatten_rows(&doc_ids, &rows, dim, "feature")?;
        FeatureMatrix::from_parts(doc_ids, dim, data, 0, None)
    }

    pub fn with_focus(mut self, focus_rows: Vec<Vec<f64>>) -> Result<Self> {
        let focus_dim = focus_rows.first().map_or(0, Vec::len);
        let data = flatten_rows(&self.doc_ids, &focus_rows, focus_dim, "focus")?;
        if focus_dim == 0 {
            return Err(Error::Invalid("focus vectors must be non-empty".into()));
        }
        self.focus_dim = focus_dim;
        self.focus_data = Some(data);
        Ok(self)
    }

    fn from_parts(
        doc_ids: Vec<String>,
        dim: usize,
        data: Vec<f64>,
        focus_dim: usize,
        focus_data: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 && !doc_ids.is_empty() {
            return Err(Error::Invalid("feature dimension must be positive".into()));
        }
        debug_assert_eq!(data.len(), doc_ids.len() * dim);
        let mut index = HashMap::with_capacity(doc_ids.len());
        for (i, id) in doc_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate feature row for {id}")));
            }
        }
        Ok(FeatureMatrix {
            doc_ids,
            dim,
            data,
            focus_dim,
            focus_data,
            index,
        })
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn focus_dim(&self) -> Option<usize> {
        self.focus_data.as_ref().map(|_| self.focus_dim)
    }

    pub fn has_focus(&self) -> bool {
        self.focus_data.is_some()
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn focus_row(&self, i: usize) -> Option<&[f64]> {
        self.focus_data
            .as_ref()
            .map(|f| &f[i * self.focus_dim..(i + 1) * self.focus_dim])
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.row(i))
    }

    /// Row indices for `ids`, failing with the full list of ids lacking a row.
    pub fn indices_of<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let idx: Vec<usize> = ids
            .iter()
            .filter_map(|id| {
                let i = self.index_of(id.as_ref());
                if i.is_none() {
                    missing.push(id.as_ref().to_string());
                }
                i
            })
            .collect();
        if missing.is_empty() {
            Ok(idx)
        } else {
            Err(Error::UnknownIds(missing))
        }
    }

    /// Restriction to `ids`, in the given order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureMatrix> {
        let idx = self.indices_of(ids)?;
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        let mut focus = self.focus_data.as_ref().map(|_| Vec::new());
        for &i in &idx {
            data.extend_from_slice(self.row(i));
            if let (Some(f), Some(row)) = (focus.as_mut(), self.focus_row(i)) {
                f.extend_from_slice(row);
            }
        }
        FeatureMatrix::from_parts(
            idx.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            self.dim,
            data,
            self.focus_dim,
            focus,
        )
    }

    /// Rows as an `n × dim` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn focus_matrix(&self) -> Option<DMatrix<f64>> {
        self.focus_data
            .as_ref()
            .map(|f| DMatrix::from_row_slice(self.len(), self.focus_dim, f))
    }
}

fn flatten_rows(ids: &[String], rows: &[Vec<f64>], dim: usize, what: &str) -> Result<Vec<f64>> {
    if ids.len() != rows.len() {
        return Err(Error::Invalid(format!(
            "{} ids but {} {what} rows",
            ids.len(),
            rows.len()
        )));
    }
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (id, row) in ids.iter().zip(rows) {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
                context: format!("{what} row for {id}"),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite {what} value for {id}")));
        }
        data.extend_from_slice(row);
    }
    Ok(data)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_features_binary(&bytes).map_err(|msg| Error::parse(path, 0, msg))
    } else {
        parse_features_text(path, &bytes)
    }
}

fn parse_header_kv(header: &str, key: &str) -> Option<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

fn parse_features_text(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut lines = text.lines().enumerate();
    let (dim, focus_dim) = match lines.next() {
        Some((_, h)) if h.starts_with(FEATURES_HEADER) => {
            let dim = parse_header_kv(h, "dim")
                .ok_or_else(|| Error::parse(path, 1, "header is missing dim="))?;
            (dim, parse_header_kv(h, "focus_dim").unwrap_or(0))
        }
        _ => return Err(Error::parse(path, 1, "missing '# features v1' header")),
    };
    if dim == 0 {
        return Err(Error::parse(path, 1, "dim must be positive"));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut focus = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, i + 1, format!("{id}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim + focus_dim {
            return Err(Error::Dimension {
                expected: dim + focus_dim,
                got: values.len(),
                context: format!("{}:{}: row for {id}", path.display(), i + 1),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("non-finite value for {id}"),
            ));
        }
        data.extend_from_slice(&values[..dim]);
        focus.extend_from_slice(&values[dim..]);
        ids.push(id);
    }
    let focus_data = (focus_dim > 0).then_some(focus);
    FeatureMatrix::from_parts(ids, dim, data, focus_dim, focus_data)
}

pub fn save_features_text(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("{FEATURES_HEADER} dim={}", fm.dim);
    if let Some(fd) = fm.focus_dim() {
        out.push_str(&format!(" focus_dim={fd}"));
    }
    out.push('\n');
    for i in 0..fm.len() {
        out.push_str(&fm.doc_ids[i]);
        let focus = fm.focus_row(i).unwrap_or(&[]);
        for v in fm.row(i).iter().chain(focus) {
            // `{:?}` prints the shortest representation that parses back exactly.
            out.push_str(&format!("\t{v:?}"));
        }
        out.push('\n');
    }
    write_file(path.as_ref(), out.as_bytes())
}

pub fn save_features_binary(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_features_binary(fm))
}

fn encode_features_binary(fm: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + fm.data.len() * 8);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fm.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(fm.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(fm.focus_dim().unwrap_or(0) as u32).to_le_bytes());
    for i in 0..fm.len() {
        let id = fm.doc_ids[i].as_bytes();
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        let focus = fm.focus_row(i).unwrap_or(&[]);
        for v in fm.row(i).iter().chain(focus) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

fn decode_features_binary(bytes: &[u8]) -> std::result::Result<FeatureMatrix, String> {
    let mut r = bytes;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if r.len() < n {
            return Err("truncated binary feature file".to_string());
        }
        let (head, tail) = r.split_at(n);
        r = tail;
        Ok(head)
    };
    take(4)?;
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(format!("unsupported binary feature version {version}"));
    }
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let focus_dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut focus = Vec::with_capacity(n * focus_dim);
    for _ in 0..n {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = std::str::from_utf8(take(len)?).map_err(|e| e.to_string())?;
        ids.push(id.to_string());
        for k in 0..dim + focus_dim {
            let v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(format!("non-finite value for {id}"));
            }
            if k < dim {
                data.push(v);
            } else {
                focus.push(v);
            }
        }
    }
    let focus_data = (focus_dim > 0).then_some(focus);
    FeatureMatrix::from_parts(ids, dim, data, focus_dim, focus_data).map_err(|e| e.to_string())
}

/// Appends per-document auxiliary columns (e.g. token frequency statistics).
///
/// An empty table is treated as zero extra columns.
pub fn append_feature_columns(
    fm: &FeatureMatrix,
    aux: &HashMap<String, Vec<f64>>,
) -> Result<FeatureMatrix> {
    if aux.is_empty() {
        return Ok(fm.clone());
    }
    let width = aux.values().next().map_or(0, Vec::len);
    if let Some((id, v)) = aux.iter().find(|(_, v)| v.len() != width) {
        return Err(Error::Dimension {
            expected: width,
            got: v.len(),
            context: format!("auxiliary row for {id}"),
        });
    }
    let mut missing: Vec<String> = fm
        .doc_ids
        .iter()
        .filter(|id| !aux.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::UnknownIds(missing));
    }
    let dim = fm.dim + width;
    let mut data = Vec::with_capacity(fm.len() * dim);
    for (i, id) in fm.doc_ids.iter().enumerate() {
        let extra = &aux[id];
        if extra.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite auxiliary value for {id}"
            )));
        }
        data.extend_from_slice(fm.row(i));
        data.extend_from_slice(extra);
    }
    let mut out = fm.clone();
    out.dim = dim;
    out.data = data;
    out.rebuild_index();
    Ok(out)
}

/// Reads `id<TAB>v1..vk` rows into a lookup table.
pub fn load_aux_table(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let mut table = HashMap::new();
    for (lineno, line) in read_lines(path)? {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, lineno, e.to_string()))
            })
            .collect::<Result<Vec<f64>>>()?;
        table.insert(id, values);
    }
    Ok(table)
}

/// A train/test partition of document ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fraction: f64,
    pub seed: u64,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

/// Selects `round(fraction·|ids|)` training documents by a seeded shuffle and
/// keeps only the pairs whose endpoints are both selected.
pub fn subsample_split(
    ids: &[String],
    pairs: &[PairLabel],
    fraction: f64,
    seed: u64,
) -> Result<(SplitSpec, Vec<PairLabel>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Invalid(format!(
            "split fraction {fraction} outside (0, 1]"
        )));
    }
    let mut order: Vec<String> = ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_train = (fraction * order.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let test_ids: BTreeSet<String> = order.split_off(n_train).into_iter().collect();
    let train_ids: BTreeSet<String> = order.into_iter().collect();
    let train_pairs = pairs
        .iter()
        .filter(|p| train_ids.contains(&p.winner) && train_ids.contains(&p.loser))
        .cloned()
        .collect();
    Ok((
        SplitSpec {
            fraction,
            seed,
            train_ids,
            test_ids,
        },
        train_pairs,
    ))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io(path, e)))
        .collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn tuple_keeps_best_over_worst() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "t.tsv", "# tuples v1\na\tb\tc\td\ta\td\n");
        let pairs = load_pairs(&p, PairFormat::Tuples).unwrap();
        assert_eq!(pairs, vec![PairLabel::new("a", "d", 1)]);
    }

    #[test]
    fn tuple_with_same_best_and_worst_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "t.tsv", "# tuples v1\na\tb\tc\td\ta\ta\n");
        let err = load_pairs(&p, PairFormat::Tuples).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn identical_rows_merge() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "p.tsv", "# pairs v1\na\tb\na\tb\n");
        let pairs = load_pairs(&p, PairFormat::Pairs).unwrap();
        assert_eq!(pairs, vec![PairLabel::new("a", "b", 2)]);
    }

    #[test]
    fn distinct_rows_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "p.tsv", "# pairs v1\na\tb\t1\nb\tc\t1\nc\ta\t1\n");
        let pairs = load_pairs(&p, PairFormat::Pairs).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(total_count(&pairs), 3);
    }

    #[test]
    fn malformed_pair_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "p.tsv", "# pairs v1\na\tb\nonlyone\n");
        match load_pairs(&p, PairFormat::Pairs).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn features_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(
            &dir,
            "f.tsv",
            "# features v1 dim=4\na\t1\t2\t3\t4\nb\t0\t0\t0\t0\nc\t-1\t0.5\t2\t1e-3\n",
        );
        let fm = load_features(&p).unwrap();
        assert_eq!(fm.len(), 3);
        assert_eq!(fm.dim(), 4);
        assert_eq!(fm.row_by_id("c").unwrap(), &[-1.0, 0.5, 2.0, 1e-3]);
    }

    #[test]
    fn short_feature_row_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(
            &dir,
            "f.tsv",
            "# features v1 dim=4\na\t1\t2\t3\t4\nbad\t1\t2\t3\n",
        );
        let err = load_features(&p).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(err.to_string().contains("bad"), "{err}");
    }

    #[test]
    fn nan_feature_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "f.tsv", "# features v1 dim=2\na\t1\tNaN\n");
        assert!(load_features(&p).is_err());
    }

    #[test]
    fn focus_section_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..3).map(|i| format!("d{i}")).collect();
        let rows = (0..3).map(|i| vec![i as f64; 4]).collect();
        let focus = (0..3).map(|i| vec![0.25 * i as f64; 300]).collect();
        let fm = FeatureMatrix::new(ids, rows)
            .unwrap()
            .with_focus(focus)
            .unwrap();
        for name in ["f.tsv", "f.bin"] {
            let p = dir.path().join(name);
            if name.ends_with("bin") {
                save_features_binary(&fm, &p).unwrap();
            } else {
                save_features_text(&fm, &p).unwrap();
            }
            let back = load_features(&p).unwrap();
            assert_eq!(back.focus_dim(), Some(300));
            assert_eq!(back.focus_row(2).unwrap()[299], 0.5);
            assert_eq!(back, fm);
        }
    }

    #[test]
    fn aux_columns_append() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let fm = FeatureMatrix::new(ids, vec![vec![0.0; 300], vec![1.0; 300]]).unwrap();
        let aux: HashMap<String, Vec<f64>> = [
            ("a".to_string(), vec![5.0, 6.0]),
            ("b".to_string(), vec![7.0, 8.0]),
        ]
        .into();
        let out = append_feature_columns(&fm, &aux).unwrap();
        assert_eq!(out.dim(), 302);
        assert_eq!(
            &out.row_by_id("b").unwrap()[..300],
            fm.row_by_id("b").unwrap()
        );
        assert_eq!(&out.row_by_id("b").unwrap()[300..], &[7.0, 8.0]);

        let same = append_feature_columns(&fm, &HashMap::new()).unwrap();
        assert_eq!(same, fm);

        let partial: HashMap<String, Vec<f64>> = [("a".to_string(), vec![1.0])].into();
        let err = append_feature_columns(&fm, &partial).unwrap_err();
        assert!(err.to_string().contains('b'), "{err}");
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let pairs = vec![PairLabel::new("0", "1", 1), PairLabel::new("3", "4", 2)];
        let (split, train) = subsample_split(&ids, &pairs, 1.0, 3).unwrap();
        assert_eq!(train, pairs);
        assert!(split.test_ids.is_empty());
    }

    #[test]
    fn partial_fraction_membership() {
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let mut pairs = Vec::new();
        for a in 0..10 {
            for b in 0..10 {
                if a != b {
                    pairs.push(PairLabel::new(a.to_string(), b.to_string(), 1));
                }
            }
        }
        let (split, train) = subsample_split(&ids, &pairs, 0.6, 11).unwrap();
        assert_eq!(split.train_ids.len(), 6);
        assert_eq!(split.test_ids.len(), 4);
        // 6·5 ordered pairs survive
        assert_eq!(train.len(), 30);
        for p in &train {
            assert!(split.train_ids.contains(&p.winner) && split.train_ids.contains(&p.loser));
        }
        let (again, _) = subsample_split(&ids, &pairs, 0.6, 11).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn fraction_out_of_range() {
        let ids = vec!["a".to_string()];
        assert!(subsample_split(&ids, &[], 0.0, 1).is_err());
        assert!(subsample_split(&ids, &[], 1.5, 1).is_err());
    }

    #[test]
    fn corpus_rejects_duplicates_and_bad_focus() {
        assert!(Corpus::from_ids(["a", "a"]).is_err());
        let doc = Document {
            id: "x".into(),
            text: Some("two tokens".into()),
            focus_index: Some(2),
        };
        assert!(Corpus::new(vec![doc]).is_err());
    }
}
