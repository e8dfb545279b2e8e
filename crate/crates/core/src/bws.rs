//! Best-worst scaling scores and the shared [`ScoreVector`] type.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_lines, write_file, PairLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Bws,
    Gppl,
    DirectRanker,
    Stacked,
    Truth,
    External,
}

/// Per-document real-valued scores, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreVectorRepr")]
pub struct ScoreVector {
    ids: Vec<String>,
    scores: Vec<f64>,
    pub provenance: Provenance,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct ScoreVectorRepr {
    ids: Vec<String>,
    scores: Vec<f64>,
    provenance: Provenance,
}

impl TryFrom<ScoreVectorRepr> for ScoreVector {
    type Error = Error;

    fn try_from(r: ScoreVectorRepr) -> Result<Self> {
        ScoreVector::new(r.ids, r.scores, r.provenance)
    }
}

impl ScoreVector {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::Invalid(format!(
                "{} ids but {} scores",
                ids.len(),
                scores.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate score for {id}")));
            }
        }
        Ok(ScoreVector {
            ids,
            scores,
            provenance,
            index,
        })
    }

    pub fn from_entries<I, S>(entries: I, provenance: Provenance) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let (ids, scores) = entries.into_iter().map(|(i, s)| (i.into(), s)).unzip();
        ScoreVector::new(ids, scores, provenance)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.scores[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.scores.iter().copied())
    }

    /// Scores for `ids` in that order; fails with all ids that have no score.
    pub fn values_for<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<f64>> {
        let mut missing = Vec::new();
        let vals = ids
            .iter()
            .map(|id| {
                self.get(id.as_ref()).unwrap_or_else(|| {
                    missing.push(id.as_ref().to_string());
                    f64::NAN
                })
            })
            .collect();
        if missing.is_empty() {
            Ok(vals)
        } else {
            Err(Error::UnknownIds(missing))
        }
    }

    pub fn restrict<S: AsRef<str>>(&self, ids: &[S]) -> Result<ScoreVector> {
        let vals = self.values_for(ids)?;
        ScoreVector::new(
            ids.iter().map(|s| s.as_ref().to_string()).collect(),
            vals,
            self.provenance,
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreVector {
        let mut out = self.clone();
        out.scores.iter_mut().for_each(|s| *s = f(*s));
        out
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// BWS score per document: (wins − losses) / (wins + losses), counting
/// multiplicities. Documents never compared score 0.
pub fn compute_bws<S: AsRef<str>>(ids: &[S], pairs: &[PairLabel]) -> Result<ScoreVector> {
    let pos: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_ref(), i))
        .collect();
    let mut wins = vec![0u64; ids.len()];
    let mut losses = vec![0u64; ids.len()];
    let mut unknown = Vec::new();
    for p in pairs {
        match (pos.get(p.winner.as_str()), pos.get(p.loser.as_str())) {
            (Some(&w), Some(&l)) => {
                wins[w] += p.count as u64;
                losses[l] += p.count as u64;
            }
            (w, l) => {
                if w.is_none() {
                    unknown.push(p.winner.clone());
                }
                if l.is_none() {
                    unknown.push(p.loser.clone());
                }
            }
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnknownIds(unknown));
    }
    let scores = wins
        .iter()
        .zip(&losses)
        .map(|(&w, &l)| {
            let n = w + l;
            if n == 0 {
                0.0
            } else {
                (w as f64 - l as f64) / n as f64
            }
        })
        .collect();
    ScoreVector::new(
        ids.iter().map(|s| s.as_ref().to_string()).collect(),
        scores,
        Provenance::Bws,
    )
}

/// Ids by descending score, ties broken by ascending id. NaN sorts last.
pub fn rank_of(scores: &ScoreVector) -> Vec<String> {
    let mut order: Vec<(&str, f64)> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or_else(|| a.1.is_nan().cmp(&b.1.is_nan()))
            .then_with(|| a.0.cmp(b.0))
    });
    order.into_iter().map(|(id, _)| id.to_string()).collect()
}

pub fn save_scores(scores: &ScoreVector, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("# scores v1\n");
    for (id, s) in scores.iter() {
        out.push_str(&format!("{id}\t{s:?}\n"));
    }
    write_file(path.as_ref(), out.as_bytes())
}

pub fn load_scores(path: impl AsRef<Path>, provenance: Provenance) -> Result<ScoreVector> {
    let path = path.as_ref();
    let mut entries = Vec::new();
    for (lineno, line) in read_lines(path)? {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (id, score) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected id<TAB>score"))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("{e}")))?;
        entries.push((id.to_string(), score));
    }
    ScoreVector::from_entries(entries, provenance)
}
