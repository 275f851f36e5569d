//! Offline evaluation: ranking overlap between two configurations and
//! cross-modal retrieval probes against known clusters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimilarityIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOverlapReport {
    pub config_a: String,
    pub config_b: String,
    pub k: usize,
    pub overlap_at_k: f64,
    /// Kendall tau-b over the full lists.
    pub rank_correlation: f64,
}

fn positions<'a>(rank: &'a [String], what: &str) -> Result<HashMap<&'a str, usize>> {
    let mut pos = HashMap::with_capacity(rank.len());
    for (i, id) in rank.iter().enumerate() {
        if pos.insert(id.as_str(), i).is_some() {
            return Err(Error::Universe(format!("`{id}` appears twice in {what}")));
        }
    }
    Ok(pos)
}

/// Tie-aware pairwise concordance (tau-b) between two score sequences.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} scores against {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => ties_x += 1,
                (_, 0) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_x) as f64)
        * ((concordant + discordant + ties_y) as f64))
        .sqrt();
    if denom == 0.0 {
        // Fewer than two distinguishable items: nothing can disagree.
        return Ok(1.0);
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Top-`k` overlap plus full-list rank correlation of two rankings over the
/// same ids.
pub fn ranking_overlap(
    rank_a: &[String],
    rank_b: &[String],
    k: usize,
) -> Result<RankingOverlapReport> {
    let pa = positions(rank_a, "the first ranking")?;
    let pb = positions(rank_b, "the second ranking")?;
    if pa.len() != pb.len() || pa.keys().any(|id| !pb.contains_key(id)) {
        return Err(Error::Universe(format!(
            "rankings cover different ids ({} vs {})",
            pa.len(),
            pb.len()
        )));
    }
    if k == 0 || k > rank_a.len() {
        return Err(Error::Universe(format!(
            "k = {k} outside 1..={}",
            rank_a.len()
        )));
    }
    let top_a: HashSet<&String> = rank_a[..k].iter().collect();
    let shared = rank_b[..k].iter().filter(|id| top_a.contains(id)).count();
    let x: Vec<f64> = rank_a.iter().map(|id| pa[id.as_str()] as f64).collect();
    let y: Vec<f64> = rank_a.iter().map(|id| pb[id.as_str()] as f64).collect();
    Ok(RankingOverlapReport {
        config_a: String::new(),
        config_b: String::new(),
        k,
        overlap_at_k: shared as f64 / k as f64,
        rank_correlation: kendall_tau_b(&x, &y)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub engine: String,
    pub rows: usize,
    pub clusters: usize,
    pub top1_accuracy: f64,
    /// Precision at `k5` (five, or fewer for tiny catalogs).
    pub top5_accuracy: f64,
    pub k5: usize,
    pub chance: f64,
}

fn label<'a>(labels: &'a BTreeMap<String, String>, id: &str) -> Result<&'a str> {
    labels
        .get(id)
        .map(String::as_str)
        .ok_or_else(|| Error::Label(id.to_string()))
}

/// For each row item, checks whether its nearest columns share its cluster.
pub fn retrieval_probe(
    index: &SimilarityIndex,
    labels: &BTreeMap<String, String>,
) -> Result<ProbeReport> {
    let row_labels = index
        .row_ids()
        .iter()
        .map(|id| label(labels, id))
        .collect::<Result<Vec<_>>>()?;
    let col_labels = index
        .col_ids()
        .iter()
        .map(|id| label(labels, id))
        .collect::<Result<Vec<_>>>()?;
    let (rows, cols) = (row_labels.len(), col_labels.len());
    if rows == 0 || cols == 0 {
        return Err(Error::InsufficientData(
            "probe needs a non-empty index".into(),
        ));
    }
    let k5 = cols.min(5);
    let (mut top1, mut top5) = (0.0, 0.0);
    let mut order: Vec<usize> = (0..cols).collect();
    for (i, own) in row_labels.iter().enumerate() {
        order.sort_by(|&a, &b| {
            index
                .distance(i, a)
                .total_cmp(&index.distance(i, b))
                .then_with(|| index.col_ids()[a].cmp(&index.col_ids()[b]))
        });
        if col_labels[order[0]] == *own {
            top1 += 1.0;
        }
        top5 += order[..k5]
            .iter()
            .filter(|&&j| col_labels[j] == *own)
            .count() as f64
            / k5 as f64;
    }

    let mut row_counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut col_counts: BTreeMap<&str, f64> = BTreeMap::new();
    for l in &row_labels {
        *row_counts.entry(l).or_default() += 1.0;
    }
    for l in &col_labels {
        *col_counts.entry(l).or_default() += 1.0;
    }
    let chance = row_counts
        .iter()
        .map(|(l, n)| n / rows as f64 * col_counts.get(l).copied().unwrap_or(0.0) / cols as f64)
        .sum();
    let clusters = row_counts
        .keys()
        .chain(col_counts.keys())
        .collect::<HashSet<_>>()
        .len();
    Ok(ProbeReport {
        engine: index.engine().to_string(),
        rows,
        clusters,
        top1_accuracy: top1 / rows as f64,
        top5_accuracy: top5 / rows as f64,
        k5,
        chance,
    })
}

/// Same index with every entry randomly permuted: a null model for probes.
pub fn shuffled_index(index: &SimilarityIndex, seed: u64) -> Result<SimilarityIndex> {
    let mut values: Vec<f64> = index.values().iter().copied().collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = Array2::from_shape_vec(index.values().dim(), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut info = index.build_info().clone();
    info.insert("shuffled_seed".into(), seed.to_string());
    SimilarityIndex::new(
        index.engine(),
        index.semantics(),
        index.row_ids().to_vec(),
        index.col_ids().to_vec(),
        shuffled,
        info,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub seeds: usize,
    pub mean_top1: f64,
    pub standard_error: f64,
    pub chance: f64,
    /// Whether the mean lies within three standard errors of chance.
    pub within_three_se: bool,
}

/// Probes `seeds` shuffled copies of `index` and compares the mean top-1
/// accuracy with chance.
pub fn shuffled_null(
    index: &SimilarityIndex,
    labels: &BTreeMap<String, String>,
    seeds: usize,
) -> Result<NullSummary> {
    if seeds < 2 {
        return Err(Error::InvalidParameter(
            "a null summary needs at least two seeds".into(),
        ));
    }
    let reports = (0..seeds as u64)
        .map(|s| retrieval_probe(&shuffled_index(index, s)?, labels))
        .collect::<Result<Vec<_>>>()?;
    let acc: Vec<f64> = reports.iter().map(|r| r.top1_accuracy).collect();
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let chance = reports[0].chance;
    Ok(NullSummary {
        seeds,
        mean_top1: mean,
        standard_error: se,
        chance,
        within_three_se: (mean - chance).abs() <= 3.0 * se,
    })
}

/// Left-aligned columns separated by two spaces.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let text: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", text.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

impl RankingOverlapReport {
    pub fn to_text(&self) -> String {
        aligned_table(
            &[
                "config_a",
                "config_b",
                "k",
                "overlap_at_k",
                "rank_correlation",
            ],
            &[vec![
                self.config_a.clone(),
                self.config_b.clone(),
                self.k.to_string(),
                format!("{:.4}", self.overlap_at_k),
                format!("{:.4}", self.rank_correlation),
            ]],
        )
    }
}

impl ProbeReport {
    pub fn to_text(&self) -> String {
        aligned_table(
            &["engine", "rows", "clusters", "top1", "top5", "chance"],
            &[vec![
                self.engine.clone(),
                self.rows.to_string(),
                self.clusters.to_string(),
                format!("{:.4}", self.top1_accuracy),
                format!("{:.4}", self.top5_accuracy),
                format!("{:.4}", self.chance),
            ]],
        )
    }
}
