//! Ranking quality against a gold score vector.

use std::collections::HashSet;
use std::path::Path;

use crate::bws::{rank_of, ScoreVector};
use crate::corpus::{read_lines, write_file};
use crate::error::{Error, Result};

pub const N_SEGMENTS: usize = 10;
pub const HISTOGRAM_BINS: usize = 20;
const REPORT_HEADER: &str = "# prefrank eval report v1";

fn aligned(pred: &ScoreVector, gold: &ScoreVector) -> Result<(Vec<f64>, Vec<f64>)> {
    let pred_ids: HashSet<&str> = pred.ids().iter().map(String::as_str).collect();
    let gold_ids: HashSet<&str> = gold.ids().iter().map(String::as_str).collect();
    if pred_ids != gold_ids {
        let mut diff: Vec<String> = pred_ids
            .symmetric_difference(&gold_ids)
            .map(|s| s.to_string())
            .collect();
        diff.sort();
        return Err(Error::Invalid(format!(
            "prediction and gold cover different ids: {}",
            diff.join(", ")
        )));
    }
    Ok((pred.scores().to_vec(), gold.values_for(pred.ids())?))
}

/// Average (fractional) ranks, 1-based, ascending by value.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman's ρ with average-rank tie handling. A constant input yields 0.
pub fn spearman(pred: &ScoreVector, gold: &ScoreVector) -> Result<f64> {
    let (p, g) = aligned(pred, gold)?;
    if p.len() < 2 {
        return Err(Error::Invalid(
            "Spearman needs at least two documents".into(),
        ));
    }
    Ok(spearman_values(&p, &g))
}

pub fn spearman_values(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Maps scores in [−1, 1] to [0, 1] by `(r + 1)·0.5`.
pub fn shift_scores(scores: &ScoreVector) -> Result<ScoreVector> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| !(-1.0..=1.0).contains(s)) {
        return Err(Error::Invalid(format!(
            "score {s} for {id} outside [-1, 1]"
        )));
    }
    Ok(scores.map(|r| (r + 1.0) * 0.5))
}

/// Mean normalized rank displacement per gold segment.
///
/// Documents are ordered by gold score (ties by id) and cut into
/// `n_segments` contiguous segments, the first `N mod n_segments` of which get
/// one extra document. For segment `S`:
/// `Σ_{d∈S} |pos_pred(d) − pos_gold(d)| / (N·|S|)` with 0-based positions.
pub fn mrd_segments(pred: &ScoreVector, gold: &ScoreVector, n_segments: usize) -> Result<Vec<f64>> {
    aligned(pred, gold)?;
    let n = gold.len();
    if n_segments == 0 || n < n_segments {
        return Err(Error::Invalid(format!(
            "{n} documents cannot fill {n_segments} segments"
        )));
    }
    let gold_order = rank_of(gold);
    let pred_pos: std::collections::HashMap<String, usize> = rank_of(pred)
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let base = n / n_segments;
    let extra = n % n_segments;
    let mut out = Vec::with_capacity(n_segments);
    let mut start = 0;
    for s in 0..n_segments {
        let len = base + usize::from(s < extra);
        let total: f64 = (start..start + len)
            .map(|g| (pred_pos[&gold_order[g]] as f64 - g as f64).abs())
            .sum();
        out.push(total / (n as f64 * len as f64));
        start += len;
    }
    Ok(out)
}

/// Counts of shifted scores over equal bins on [0, 1]. Scores outside
/// [−1, 1] are first divided by their largest magnitude.
pub fn score_histogram(scores: &ScoreVector, bins: usize) -> Vec<u64> {
    let max_abs = scores.scores().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let div = if max_abs > 1.0 { max_abs } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for &s in scores.scores() {
        let v = ((s / div) + 1.0) * 0.5;
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub n_test: usize,
    pub spearman: f64,
    pub mrd_per_segment: Vec<f64>,
    pub histogram: Vec<u64>,
    /// (id, predicted score, gold score)
    pub scatter: Vec<(String, f64, f64)>,
}

/// Builds the full report for `pred` against `gold`.
pub fn evaluate(
    model_id: &str,
    pred: &ScoreVector,
    gold: &ScoreVector,
    fraction: Option<f64>,
    seed: Option<u64>,
) -> Result<EvalReport> {
    let (p, g) = aligned(pred, gold)?;
    let spearman = spearman(pred, gold)?;
    let mrd = if pred.len() >= N_SEGMENTS {
        mrd_segments(pred, gold, N_SEGMENTS)?
    } else {
        mrd_segments(pred, gold, pred.len())?
    };
    Ok(EvalReport {
        model_id: model_id.to_string(),
        fraction,
        seed,
        n_test: pred.len(),
        spearman,
        mrd_per_segment: mrd,
        histogram: score_histogram(pred, HISTOGRAM_BINS),
        scatter: pred
            .ids()
            .iter()
            .cloned()
            .zip(p)
            .zip(g)
            .map(|((id, a), b)| (id, a, b))
            .collect(),
    })
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), render_report(report).as_bytes())
}

pub fn render_report(r: &EvalReport) -> String {
    let mut out = format!("{REPORT_HEADER}\nmodel_id\t{}\n", r.model_id);
    if let Some(f) = r.fraction {
        out.push_str(&format!("fraction\t{f:?}\n"));
    }
    if let Some(s) = r.seed {
        out.push_str(&format!("seed\t{s}\n"));
    }
    out.push_str(&format!(
        "n_test\t{}\nspearman\t{:?}\n",
        r.n_test, r.spearman
    ));
    out.push_str("\n[mrd]\nsegment\tmrd\n");
    for (i, v) in r.mrd_per_segment.iter().enumerate() {
        out.push_str(&format!("{i}\t{v:?}\n"));
    }
    out.push_str("\n[histogram]\nbin_lo\tbin_hi\tcount\n");
    let bins = r.histogram.len() as f64;
    for (i, c) in r.histogram.iter().enumerate() {
        out.push_str(&format!(
            "{:?}\t{:?}\t{c}\n",
            i as f64 / bins,
            (i + 1) as f64 / bins
        ));
    }
    out.push_str("\n[scatter]\nid\tpred\tgold\n");
    for (id, p, g) in &r.scatter {
        out.push_str(&format!("{id}\t{p:?}\t{g:?}\n"));
    }
    out
}

pub fn parse_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    if lines.first().map(|(_, l)| l.as_str()) != Some(REPORT_HEADER) {
        return Err(Error::parse(path, 1, "not an eval report"));
    }
    let mut r = EvalReport {
        model_id: String::new(),
        fraction: None,
        seed: None,
        n_test: 0,
        spearman: f64::NAN,
        mrd_per_segment: Vec::new(),
        histogram: Vec::new(),
        scatter: Vec::new(),
    };
    let mut section = "";
    let mut skip_columns = false;
    for (lineno, line) in lines.iter().skip(1) {
        let lineno = *lineno;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name {
                "mrd" => "mrd",
                "histogram" => "histogram",
                "scatter" => "scatter",
                other => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unknown section {other}"),
                    ))
                }
            };
            skip_columns = true;
            continue;
        }
        if skip_columns {
            skip_columns = false;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, e.to_string()))
        };
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|e| Error::parse(path, lineno, e.to_string()))
        };
        let need = |k: usize| -> Result<()> {
            if f.len() == k {
                Ok(())
            } else {
                Err(Error::parse(path, lineno, format!("expected {k} fields")))
            }
        };
        match section {
            "" => {
                need(2)?;
                match f[0] {
                    "model_id" => r.model_id = f[1].to_string(),
                    "fraction" => r.fraction = Some(num(f[1])?),
                    "seed" => r.seed = Some(int(f[1])?),
                    "n_test" => r.n_test = int(f[1])? as usize,
                    "spearman" => r.spearman = num(f[1])?,
                    other => {
                        return Err(Error::parse(path, lineno, format!("unknown field {other}")))
                    }
                }
            }
            "mrd" => {
                need(2)?;
                r.mrd_per_segment.push(num(f[1])?);
            }
            "histogram" => {
                need(3)?;
                r.histogram.push(int(f[2])?);
            }
            _ => {
                need(3)?;
                r.scatter.push((f[0].to_string(), num(f[1])?, num(f[2])?));
            }
        }
    }
    Ok(r)
}
