// SPDX-License-Identifier: Apache-2.0

//! Curriculum comparison metrics: stage-composition timelines, mean
//! symmetrized KL between timelines, Kendall τb between epoch orders,
//! Spearman correlation and the running-minimum loss ratio. Also renders
//! reports (text, JSON) and static SVG charts.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Stage};
use crate::curricula::CurriculumManifest;
use crate::segment::balanced_split;

/// Replaces zero cells before taking logs.
pub const JSD_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty input")]
    Empty,
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("{segments} segments requested for {documents} documents")]
    TooManySegments { segments: usize, documents: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("loss at index {index} is not positive ({value})")]
    NonPositiveLoss { index: usize, value: f64 },
    #[error("step at index {index} does not increase")]
    NonIncreasingStep { index: usize },
    #[error("doc_id {0} is not in the corpus")]
    UnknownDocument(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    #[default]
    Words,
    Documents,
}

/// Per-segment stage shares; each row sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTimeline {
    pub rows: Vec<[f64; Stage::COUNT]>,
}

impl CompositionTimeline {
    pub fn n_segments(&self) -> usize {
        self.rows.len()
    }
}

/// Flatten the manifest, cut it into `n_segments` contiguous pieces and
/// report each piece's word-weighted stage distribution.
pub fn composition_timeline(
    manifest: &CurriculumManifest,
    corpus: &Corpus,
    n_segments: usize,
    balance: Balance,
) -> Result<CompositionTimeline, AnalysisError> {
    let seq = manifest.flatten();
    if seq.is_empty() {
        return Err(AnalysisError::EmptyManifest);
    }
    if n_segments == 0 || n_segments > seq.len() {
        return Err(AnalysisError::TooManySegments {
            segments: n_segments,
            documents: seq.len(),
        });
    }
    let docs = seq
        .iter()
        .map(|&id| corpus.get(id).ok_or(AnalysisError::UnknownDocument(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let weights: Vec<u64> = match balance {
        Balance::Words => docs.iter().map(|d| d.word_count() as u64).collect(),
        Balance::Documents => vec![1; docs.len()],
    };
    let rows = balanced_split(&weights, n_segments)
        .into_iter()
        .map(|r| {
            let mut row = [0.0; Stage::COUNT];
            let mut total = 0u64;
            for d in &docs[r] {
                row[d.stage.index()] += d.word_count() as f64;
                total += d.word_count() as u64;
            }
            row.iter_mut().for_each(|x| *x /= total as f64);
            row
        })
        .collect();
    Ok(CompositionTimeline { rows })
}

fn smooth(row: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = row.iter().map(|&x| if x > 0.0 { x } else { JSD_EPSILON }).collect();
    let s: f64 = r.iter().sum();
    r.into_iter().map(|x| x / s).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Mean over segments of (KL(p‖q) + KL(q‖p)) / 2, in nats.
pub fn jsd_mean(a: &CompositionTimeline, b: &CompositionTimeline) -> Result<f64, AnalysisError> {
    if a.n_segments() != b.n_segments() {
        return Err(AnalysisError::Shape(format!(
            "{} vs {} segments",
            a.n_segments(),
            b.n_segments()
        )));
    }
    if a.rows.is_empty() {
        return Err(AnalysisError::Empty);
    }
    jsd_rows(&a.rows, &b.rows)
}

/// Same as [`jsd_mean`] for rows of any (equal) arity.
pub fn jsd_rows<R: AsRef<[f64]>>(a: &[R], b: &[R]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(AnalysisError::Shape(format!("{} vs {} rows", a.len(), b.len())));
    }
    let mut sum = 0.0;
    for (i, (p, q)) in a.iter().zip(b).enumerate() {
        let (p, q) = (p.as_ref(), q.as_ref());
        if p.len() != q.len() {
            return Err(AnalysisError::Shape(format!(
                "row {i}: {} vs {} categories",
                p.len(),
                q.len()
            )));
        }
        let (p, q) = (smooth(p), smooth(q));
        // both orders summed the same way so the result is exactly symmetric
        sum += (kl(&p, &q) + kl(&q, &p)) / 2.0;
    }
    Ok(sum / a.len() as f64)
}

fn check_finite(x: &[f64]) -> Result<(), AnalysisError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(AnalysisError::NonFinite(i)),
        None => Ok(()),
    }
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0].total_cmp(&w[1]) == Ordering::Equal {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions (pairs with i < j and v[i] > v[j]).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall τb of paired samples in O(n log n). `Ok(None)` when either
/// side is entirely tied (the statistic is undefined).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_finite(x)?;
    check_finite(y)?;
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tie_pairs(&xs);
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0].0.total_cmp(&w[1].0) == Ordering::Equal && w[0].1.total_cmp(&w[1].1) == Ordering::Equal {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);

    let denom_x = n0 - n1;
    let denom_y = n0 - n2;
    if denom_x == 0 || denom_y == 0 {
        return Ok(None);
    }
    // concordant − discordant over pairs untied in both
    let s = (n0 + n3) as i128 - (n1 + n2) as i128 - 2 * swaps as i128;
    Ok(Some(s as f64 / ((denom_x as f64) * (denom_y as f64)).sqrt()))
}

/// Reference τb by enumerating all pairs.
pub fn kendall_tau_b_oracle(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = x[i].total_cmp(&x[j]);
            let b = y[i].total_cmp(&y[j]);
            match (a, b) {
                (Ordering::Equal, Ordering::Equal) => {
                    tx += 1;
                    ty += 1;
                }
                (Ordering::Equal, _) => tx += 1,
                (_, Ordering::Equal) => ty += 1,
                _ if a == b => c += 1,
                _ => d += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    if n0 == tx || n0 == ty {
        return Ok(None);
    }
    Ok(Some((c - d) as f64 / (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt()))
}

/// Rank sequences for two document orders. Both lists are cut to the
/// shorter length; a document's rank is the position of its first
/// occurrence, so repeats share a rank. Positions of `a` whose document
/// does not occur in `b` are skipped.
pub fn order_ranks(a: &[u64], b: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let m = a.len().min(b.len());
    let (a, b) = (&a[..m], &b[..m]);
    let first = |list: &[u64]| {
        let mut pos = HashMap::with_capacity(list.len());
        for (i, &id) in list.iter().enumerate() {
            pos.entry(id).or_insert(i);
        }
        pos
    };
    let (pa, pb) = (first(a), first(b));
    a.iter()
        .filter_map(|id| pb.get(id).map(|&rb| (pa[id] as f64, rb as f64)))
        .unzip()
}

/// τb between two document orders (see [`order_ranks`]).
pub fn order_tau(a: &[u64], b: &[u64]) -> Result<Option<f64>, AnalysisError> {
    let (x, y) = order_ranks(a, b);
    kendall_tau_b(&x, &y)
}

/// τb for each epoch index both manifests share.
pub fn epoch_taus(a: &CurriculumManifest, b: &CurriculumManifest) -> Vec<Option<f64>> {
    a.epochs
        .par_iter()
        .zip(b.epochs.par_iter())
        .map(|(ea, eb)| order_tau(ea, eb).ok().flatten())
        .collect()
}

/// Mean of the defined entries.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Average (1-based) ranks, ties sharing their mean rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]].total_cmp(&x[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
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
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman ρ; `Ok(None)` when either series is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(AnalysisError::Shape("need at least 2 points".into()));
    }
    check_finite(x)?;
    check_finite(y)?;
    Ok(pearson(&mid_ranks(x), &mid_ranks(y)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    steps: Vec<u64>,
    losses: Vec<f64>,
}

impl LossSeries {
    pub fn new(steps: Vec<u64>, losses: Vec<f64>) -> Result<Self, AnalysisError> {
        if steps.len() != losses.len() {
            return Err(AnalysisError::Shape(format!(
                "{} steps vs {} losses",
                steps.len(),
                losses.len()
            )));
        }
        if steps.is_empty() {
            return Err(AnalysisError::Empty);
        }
        if let Some(i) = steps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(AnalysisError::NonIncreasingStep { index: i + 1 });
        }
        if let Some(i) = losses.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(AnalysisError::NonPositiveLoss {
                index: i,
                value: losses[i],
            });
        }
        Ok(LossSeries { steps, losses })
    }

    /// Losses at steps 0, 1, 2, …
    pub fn from_losses(losses: Vec<f64>) -> Result<Self, AnalysisError> {
        LossSeries::new((0..losses.len() as u64).collect(), losses)
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Loss over the minimum loss at any earlier step; the first step is 1.0.
pub fn loss_ratio(series: &LossSeries) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut best = f64::INFINITY;
    for &l in series.losses() {
        out.push(if best.is_finite() { l / best } else { 1.0 });
        best = best.min(l);
    }
    out
}

/// Read a loss log: one `step loss` pair per line, whitespace or comma
/// separated. Blank lines, `#` comments and a non-numeric header line are
/// skipped.
pub fn read_loss_log(path: impl AsRef<Path>) -> Result<LossSeries, AnalysisError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (mut steps, mut losses) = (Vec::new(), Vec::new());
    let mut seen_data = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parse_err = |message: String| AnalysisError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        match (fields[0].parse::<u64>(), fields[1].parse::<f64>()) {
            (Ok(s), Ok(l)) => {
                steps.push(s);
                losses.push(l);
                seen_data = true;
            }
            _ if !seen_data && fields[0].parse::<f64>().is_err() => continue,
            _ => return Err(parse_err(format!("cannot parse {line:?}"))),
        }
    }
    LossSeries::new(steps, losses).map_err(|e| match e {
        AnalysisError::Empty => AnalysisError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no data rows".into(),
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTimeline {
    pub name: String,
    pub timeline: CompositionTimeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsdEntry {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub a: String,
    pub b: String,
    /// `None` where τb is undefined.
    pub per_epoch: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRatioEntry {
    pub name: String,
    pub steps: Vec<u64>,
    pub losses: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanEntry {
    pub x: String,
    pub y: String,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub timelines: Vec<NamedTimeline>,
    pub jsd: Vec<JsdEntry>,
    pub tau: Vec<TauEntry>,
    pub spearman: Vec<SpearmanEntry>,
    pub loss_ratio: Vec<LossRatioEntry>,
}

/// jsd_mean over every unordered pair of timelines.
pub fn pairwise_jsd(timelines: &[NamedTimeline]) -> Result<Vec<JsdEntry>, AnalysisError> {
    let mut out = Vec::new();
    for (i, a) in timelines.iter().enumerate() {
        for b in &timelines[i + 1..] {
            let value = jsd_mean(&a.timeline, &b.timeline)
                .map_err(|e| AnalysisError::Shape(format!("{} vs {}: {e}", a.name, b.name)))?;
            out.push(JsdEntry {
                a: a.name.clone(),
                b: b.name.clone(),
                value,
            });
        }
    }
    Ok(out)
}

pub fn tau_entry(a_name: &str, a: &CurriculumManifest, b_name: &str, b: &CurriculumManifest) -> TauEntry {
    let per_epoch = epoch_taus(a, b);
    TauEntry {
        a: a_name.to_owned(),
        b: b_name.to_owned(),
        mean: mean_defined(&per_epoch),
        per_epoch,
    }
}

pub fn loss_ratio_entry(name: &str, series: &LossSeries) -> LossRatioEntry {
    LossRatioEntry {
        name: name.to_owned(),
        steps: series.steps().to_vec(),
        losses: series.losses().to_vec(),
        ratios: loss_ratio(series),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.timelines.is_empty() {
            let _ = writeln!(s, "## composition (segment shares, first / middle / last)");
            let _ = writeln!(s, "{:<16} {:>6}  {:<40}", "curriculum", "seg", "C1 C2 C3 C4 C5");
            for t in &self.timelines {
                let n = t.timeline.n_segments();
                let mut picks = vec![0, n / 2, n - 1];
                picks.dedup();
                for i in picks {
                    let row: Vec<String> = t.timeline.rows[i].iter().map(|x| format!("{x:.3}")).collect();
                    let _ = writeln!(s, "{:<16} {:>6}  {}", t.name, i, row.join(" "));
                }
            }
            let _ = writeln!(s);
        }
        if !self.jsd.is_empty() {
            let _ = writeln!(s, "## mean divergence (nats)");
            for e in &self.jsd {
                let _ = writeln!(s, "{:<16} {:<16} {:.6}", e.a, e.b, e.value);
            }
            let _ = writeln!(s);
        }
        if !self.tau.is_empty() {
            let _ = writeln!(s, "## kendall tau-b per epoch");
            for e in &self.tau {
                let per: Vec<String> = e.per_epoch.iter().map(|v| fmt_opt(*v)).collect();
                let _ = writeln!(s, "{:<16} {:<16} mean {}  [{}]", e.a, e.b, fmt_opt(e.mean), per.join(", "));
            }
            let _ = writeln!(s);
        }
        if !self.spearman.is_empty() {
            let _ = writeln!(s, "## spearman");
            for e in &self.spearman {
                let _ = writeln!(s, "{:<16} {:<16} {}", e.x, e.y, fmt_opt(e.rho));
            }
            let _ = writeln!(s);
        }
        if !self.loss_ratio.is_empty() {
            let _ = writeln!(s, "## loss ratio");
            let _ = writeln!(s, "{:<16} {:>10} {:>12} {:>10}", "series", "step", "loss", "ratio");
            for e in &self.loss_ratio {
                for ((st, l), r) in e.steps.iter().zip(&e.losses).zip(&e.ratios) {
                    let _ = writeln!(s, "{:<16} {:>10} {:>12.6} {:>10.6}", e.name, st, l, r);
                }
            }
        }
        s
    }
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn svg_open(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Stacked-area chart of stage shares along the curriculum.
pub fn svg_composition(name: &str, timeline: &CompositionTimeline) -> String {
    let (w, h, left, top, pw, ph) = (720u32, 320u32, 40.0, 30.0, 600.0, 250.0);
    let mut s = svg_open(w, h);
    let _ = writeln!(s, "<text x=\"{left}\" y=\"18\">{}</text>", escape(name));
    let n = timeline.n_segments().max(1) as f64;
    let mut lower = vec![0.0; timeline.rows.len()];
    for stage in Stage::ALL {
        let k = stage.index();
        let upper: Vec<f64> = lower.iter().zip(&timeline.rows).map(|(l, r)| l + r[k]).collect();
        let mut pts = Vec::new();
        for (i, u) in upper.iter().enumerate() {
            for x in [i as f64, i as f64 + 1.0] {
                pts.push(format!("{:.2},{:.2}", left + pw * x / n, top + ph * (1.0 - u)));
            }
        }
        for (i, l) in lower.iter().enumerate().rev() {
            for x in [i as f64 + 1.0, i as f64] {
                pts.push(format!("{:.2},{:.2}", left + pw * x / n, top + ph * (1.0 - l)));
            }
        }
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"{}\"><title>{stage}</title></polygon>", pts.join(" "), PALETTE[k]);
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{stage}</text>",
            left + pw + 15.0,
            top + 16.0 * k as f64,
            PALETTE[k],
            left + pw + 30.0,
            top + 16.0 * k as f64 + 9.0
        );
        lower = upper;
    }
    let _ = writeln!(s, "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"{left}\" y=\"{}\">segment 0</text>", top + ph + 15.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left + pw, top + ph + 15.0, timeline.n_segments());
    s.push_str("</svg>\n");
    s
}

/// Symmetric heat table of pairwise divergences.
pub fn svg_jsd_table(entries: &[JsdEntry]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for e in entries {
        for n in [e.a.as_str(), e.b.as_str()] {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    let lookup: HashMap<(&str, &str), f64> = entries
        .iter()
        .flat_map(|e| [((e.a.as_str(), e.b.as_str()), e.value), ((e.b.as_str(), e.a.as_str()), e.value)])
        .collect();
    let max = entries.iter().map(|e| e.value).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (cell, left, top) = (56.0, 120.0, 110.0);
    let size = names.len() as f64;
    let mut s = svg_open((left + cell * size + 20.0) as u32, (top + cell * size + 20.0) as u32);
    for (i, a) in names.iter().enumerate() {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, top + cell * (i as f64 + 0.6), escape(a));
        let _ = writeln!(
            s,
            "<text transform=\"translate({},{}) rotate(-60)\">{}</text>",
            left + cell * (i as f64 + 0.5),
            top - 6.0,
            escape(a)
        );
        for (j, b) in names.iter().enumerate() {
            let v = if i == j { 0.0 } else { lookup.get(&(*a, *b)).copied().unwrap_or(f64::NAN) };
            let shade = if v.is_nan() { 255 } else { (255.0 * (1.0 - v / max)).round() as u8 };
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb(255,{shade},{shade})\" stroke=\"#ccc\"/>\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                if v.is_nan() { "-".into() } else { format!("{v:.3}") }
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Loss curves (log scale not applied; raw loss against step).
pub fn svg_loss_curves(entries: &[LossRatioEntry]) -> String {
    let (w, h, left, top, pw, ph) = (720u32, 340u32, 60.0, 20.0, 520.0, 280.0);
    let mut s = svg_open(w, h);
    let steps = entries.iter().flat_map(|e| e.steps.iter().copied());
    let (smin, smax) = steps.fold((u64::MAX, 0), |(a, b), x| (a.min(x), b.max(x)));
    let losses = entries.iter().flat_map(|e| e.losses.iter().copied());
    let (lmin, lmax) = losses.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let sx = |st: u64| left + pw * (st.saturating_sub(smin)) as f64 / (smax.saturating_sub(smin)).max(1) as f64;
    let sy = |l: f64| top + ph * (1.0 - (l - lmin) / (lmax - lmin).max(f64::MIN_POSITIVE));
    let _ = writeln!(s, "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    for (k, e) in entries.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = e
            .steps
            .iter()
            .zip(&e.losses)
            .map(|(&st, &l)| format!("{:.2},{:.2}", sx(st), sy(l)))
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", pts.join(" "));
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            left + pw + 10.0,
            top + 14.0 * (k as f64 + 1.0),
            escape(&e.name)
        );
    }
    if lmin.is_finite() {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{lmax:.3}</text>", left - 4.0, top + 8.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{lmin:.3}</text>", left - 4.0, top + ph);
        let _ = writeln!(s, "<text x=\"{left}\" y=\"{}\">step {smin}</text>", top + ph + 15.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{smax}</text>", left + pw, top + ph + 15.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::curricula::{build_random, build_sorted, Direction, EpochScores, StrategySpec};
    use proptest::prelude::*;

    #[test]
    fn jsd_hand_case() {
        let v = jsd_rows(&[[0.5, 0.5]], &[[0.25, 0.75]]).unwrap();
        // scipy: (entropy(p,q) + entropy(q,p)) / 2
        assert!((v - 0.1373265360835137).abs() < 1e-15, "{v}");
        assert_eq!(jsd_rows(&[[0.3, 0.7]], &[[0.3, 0.7]]).unwrap(), 0.0);
        assert!(jsd_rows(&[vec![0.3, 0.7]], &[vec![0.3, 0.2, 0.5]]).is_err());
    }

    #[test]
    fn jsd_with_zero_cells_is_finite() {
        let v = jsd_rows(&[[1.0, 0.0]], &[[0.0, 1.0]]).unwrap();
        assert!(v.is_finite() && v > 20.0);
    }

    #[test]
    fn tau_worked_cases() {
        assert_eq!(kendall_tau_b(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), Some(0.5));
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), Some(1.0));
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert_eq!(kendall_tau_b(&[1.0], &[1.0]).unwrap(), None);
        assert!(kendall_tau_b(&[], &[]).is_err());
        assert!(kendall_tau_b(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn order_tau_rules() {
        assert_eq!(order_tau(&[3, 1, 2], &[3, 1, 2]).unwrap(), Some(1.0));
        assert_eq!(order_tau(&[3, 1, 2], &[2, 1, 3]).unwrap(), Some(-1.0));
        // longer list truncated to the shorter one
        assert_eq!(order_tau(&[1, 2, 3, 9], &[1, 2, 3]).unwrap(), Some(1.0));
        // repeats share their first-occurrence rank
        let (x, y) = order_ranks(&[1, 1, 2], &[1, 2, 2]);
        assert_eq!(x, vec![0.0, 0.0, 2.0]);
        assert_eq!(y, vec![0.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn tau_matches_oracle(pairs in prop::collection::vec((0u8..6, 0u8..6), 1..80)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let fast = kendall_tau_b(&x, &y).unwrap();
            let slow = kendall_tau_b_oracle(&x, &y).unwrap();
            match (fast, slow) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}"),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn spearman_monotone_invariance(x in prop::collection::vec(-50i32..50, 2..40), y in prop::collection::vec(-50i32..50, 2..40)) {
            let n = x.len().min(y.len());
            let x: Vec<f64> = x[..n].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = y[..n].iter().map(|&v| v as f64).collect();
            let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
            let ty: Vec<f64> = y.iter().map(|v| v * 3.0 - 7.0).collect();
            prop_assert_eq!(spearman(&x, &y).unwrap(), spearman(&tx, &ty).unwrap());
        }

        #[test]
        fn loss_ratio_bounds(losses in prop::collection::vec(0.01f64..10.0, 1..60)) {
            let s = LossSeries::from_losses(losses.clone()).unwrap();
            let r = loss_ratio(&s);
            prop_assert_eq!(r[0], 1.0);
            let global = losses.iter().copied().fold(f64::INFINITY, f64::min);
            for (i, (&ri, &l)) in r.iter().zip(&losses).enumerate().skip(1) {
                let prior = losses[..i].iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(ri, l / prior);
                prop_assert!(ri <= l / global);
            }
        }
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let close = |r: Option<f64>, want: f64| (r.unwrap() - want).abs() < 1e-12;
        assert!(close(spearman(&x, &x).unwrap(), 1.0));
        assert!(close(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0));
        assert_eq!(spearman(&x, &[2.0; 4]).unwrap(), None);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert_eq!(mid_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn loss_ratio_cases() {
        let r = loss_ratio(&LossSeries::from_losses(vec![4.0, 3.0, 5.0]).unwrap());
        assert_eq!(r[..2], [1.0, 0.75]);
        assert!((r[2] - 5.0 / 3.0).abs() < 1e-12);
        let flat = loss_ratio(&LossSeries::from_losses(vec![2.0; 5]).unwrap());
        assert!(flat.iter().all(|&x| x == 1.0));
        assert!(matches!(
            LossSeries::from_losses(vec![1.0, 0.0]),
            Err(AnalysisError::NonPositiveLoss { index: 1, .. })
        ));
        assert!(LossSeries::new(vec![1, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn loss_log_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        fs::write(&p, "step,loss\n0,4\n10,3\n# note\n20,5\n").unwrap();
        let s = read_loss_log(&p).unwrap();
        assert_eq!(s.steps(), &[0, 10, 20]);
        fs::write(&p, "0 4\n10 x\n").unwrap();
        assert!(matches!(read_loss_log(&p), Err(AnalysisError::Parse { line: 2, .. })));
    }

    fn two_stage() -> Corpus {
        let mut docs = Vec::new();
        for i in 0..10u64 {
            let stage = if i < 5 { Stage::C1 } else { Stage::C5 };
            docs.push(Document::new(i, "s", stage, &vec!["x"; 1 + i as usize % 3].join(" ")));
        }
        Corpus::new("two", docs).unwrap()
    }

    #[test]
    fn timeline_tracks_stage_order() {
        let c = two_stage();
        let v: Vec<f64> = (0..10).map(|i| -(i as f64)).collect();
        let s = EpochScores::from_static(&c, &c.doc_ids(), v).unwrap();
        let spec = StrategySpec { epochs: 1, ..StrategySpec::default() };
        let m = build_sorted(&c, &s, Direction::Descending, &spec, u64::MAX).unwrap();
        let t = composition_timeline(&m, &c, 4, Balance::Words).unwrap();
        assert_eq!(t.rows[0][0], 1.0);
        assert_eq!(t.rows[3][4], 1.0);
        for row in &t.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(t.rows.windows(2).all(|w| w[1][0] <= w[0][0]));
        assert!(matches!(
            composition_timeline(&m, &c, 11, Balance::Words),
            Err(AnalysisError::TooManySegments { .. })
        ));
    }

    #[test]
    fn doubled_manifest_repeats_rows() {
        let c = two_stage();
        let spec = StrategySpec { epochs: 1, ..StrategySpec::default() };
        let m = build_random(&c, &spec, 3, u64::MAX).unwrap();
        let mut twice = m.clone();
        twice.epochs.push(m.epochs[0].clone());
        let one = composition_timeline(&m, &c, 5, Balance::Documents).unwrap();
        let two = composition_timeline(&twice, &c, 10, Balance::Documents).unwrap();
        assert_eq!(two.rows[..5], one.rows[..]);
        assert_eq!(two.rows[5..], one.rows[..]);
    }

    #[test]
    fn reports_and_plots_render() {
        let c = two_stage();
        let spec = StrategySpec { epochs: 2, ..StrategySpec::default() };
        let a = build_random(&c, &spec, 1, u64::MAX).unwrap();
        let b = build_random(&c, &spec, 2, u64::MAX).unwrap();
        let ta = composition_timeline(&a, &c, 4, Balance::Words).unwrap();
        let tb = composition_timeline(&b, &c, 4, Balance::Words).unwrap();
        let timelines = vec![
            NamedTimeline { name: "a".into(), timeline: ta },
            NamedTimeline { name: "b".into(), timeline: tb },
        ];
        let series = LossSeries::from_losses(vec![4.0, 3.0, 5.0]).unwrap();
        let report = AnalysisReport {
            jsd: pairwise_jsd(&timelines).unwrap(),
            tau: vec![tau_entry("a", &a, "b", &b)],
            loss_ratio: vec![loss_ratio_entry("run", &series)],
            spearman: vec![],
            timelines,
        };
        let back: AnalysisReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
        let text = report.to_text();
        assert!(text.contains("kendall tau-b") && text.contains("loss ratio"));
        assert!(svg_composition("a", &report.timelines[0].timeline).starts_with("<svg"));
        assert!(svg_jsd_table(&report.jsd).contains("rect"));
        assert!(svg_loss_curves(&report.loss_ratio).contains("polyline"));
    }
}
