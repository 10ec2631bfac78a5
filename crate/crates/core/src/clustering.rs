//! Cluster assignment producers: k-means and agglomerative clustering on a
//! similarity matrix, GICS passthrough, and a seeded random baseline.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{ReturnsPanel, SectorMap};
use crate::similarity::SimilarityMatrix;

/// Dated mapping ticker -> cluster label in [0, k).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub as_of: NaiveDate,
    pub method_id: String,
    pub k: usize,
    pub labels: BTreeMap<String, usize>,
}

impl ClusterAssignment {
    pub fn new(
        as_of: NaiveDate,
        method_id: &str,
        k: usize,
        labels: BTreeMap<String, usize>,
    ) -> Result<Self> {
        if let Some((t, &l)) = labels.iter().find(|(_, &l)| l >= k) {
            return Err(Error::Validation(format!("label {l} for {t} out of [0,{k})")));
        }
        Ok(Self { as_of, method_id: method_id.to_string(), k, labels })
    }

    /// Tickers in each cluster, in label order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (t, &l) in &self.labels {
            out[l].push(t.as_str());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub n_init: usize,
    pub seed: u64,
    pub linkage: Linkage,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { k: 11, max_iterations: 300, n_init: 10, seed: 0, linkage: Linkage::Average }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Validation(format!("k must be >= 2, got {}", self.k)));
        }
        if self.max_iterations < 1 || self.n_init < 1 {
            return Err(Error::Validation("max_iterations and n_init must be >= 1".into()));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct LloydResult {
    labels: Vec<usize>,
    wcss: f64,
}

fn lloyd_run(points: &[&[f64]], k: usize, max_iterations: usize, rng: &mut ChaCha8Rng) -> LloydResult {
    let n = points.len();
    let dim = points[0].len();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(points[first].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].to_vec());
        let c = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut labels = vec![0usize; n];
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut bd = sq_dist(p, &centroids[0]);
            for (c, cent) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(p, cent);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            labels[i] = best;
            wcss += bd;
        }
        (labels, wcss)
    };

    let (mut labels, mut wcss) = assign(&centroids);
    let initial_wcss = wcss;
    for _ in 0..max_iterations {
        // centroid update
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i]].iter_mut().zip(*p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            } else {
                // empty cluster: reseed with the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points[a], &centroids[labels[a]])
                            .partial_cmp(&sq_dist(points[b], &centroids[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far].to_vec();
            }
        }
        let (new_labels, new_wcss) = assign(&centroids);
        debug_assert!(new_wcss <= wcss + 1e-9 * wcss.abs().max(1.0), "WCSS increased");
        let converged = new_labels == labels;
        labels = new_labels;
        wcss = new_wcss;
        if converged {
            break;
        }
    }
    debug_assert!(wcss <= initial_wcss + 1e-9 * initial_wcss.abs().max(1.0));
    LloydResult { labels, wcss }
}

/// Lloyd's k-means on the rows of the similarity matrix, k-means++ seeding,
/// `n_init` restarts with per-restart sub-seeds; the restart with lowest
/// WCSS wins. Deterministic for fixed inputs regardless of restart order.
pub fn kmeans_cluster(sim: &SimilarityMatrix, cfg: &ClusterConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    let n = sim.n();
    if n < cfg.k {
        return Err(Error::InsufficientUniverse(format!("{n} tickers < k = {}", cfg.k)));
    }
    let points: Vec<&[f64]> = (0..n).map(|i| sim.row(i)).collect();

    let mut best: Option<LloydResult> = None;
    for restart in 0..cfg.n_init {
        let sub_seed = cfg.seed ^ (restart as u64).wrapping_mul(0x9e3779b97f4a7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let run = lloyd_run(&points, cfg.k, cfg.max_iterations, &mut rng);
        let better = match &best {
            None => true,
            Some(b) => run.wcss < b.wcss,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.unwrap();

    let labels = relabel_dense(&best.labels, cfg.k);
    let map = sim
        .tickers
        .iter()
        .cloned()
        .zip(labels)
        .collect::<BTreeMap<String, usize>>();
    ClusterAssignment::new(sim.as_of, "kmeans", cfg.k, map)
}

/// Map raw labels to a dense 0..k range ordered by first appearance, so the
/// output is invariant to centroid ordering. Unused labels stay unused.
fn relabel_dense(raw: &[usize], k: usize) -> Vec<usize> {
    let mut remap: Vec<Option<usize>> = vec![None; k];
    let mut next = 0usize;
    raw.iter()
        .map(|&l| {
            *remap[l].get_or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Agglomerative clustering on d = 1 - s, merging until exactly k clusters
/// remain. Ties break on the lexicographically smallest (min id, max id)
/// pair, where a cluster's id is the smallest original index it contains.
pub fn hierarchical_cluster(
    sim: &SimilarityMatrix,
    cfg: &ClusterConfig,
) -> Result<ClusterAssignment> {
    cfg.validate()?;
    let n = sim.n();
    if n < cfg.k {
        return Err(Error::InsufficientUniverse(format!("{n} tickers < k = {}", cfg.k)));
    }

    // dist[i][j] between active clusters, indexed by representative (= the
    // smallest member index); merging always folds j into i with i < j.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = 1.0 - sim.get(i, j);
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let mut parent: Vec<usize> = (0..n).collect();

    let mut n_clusters = n;
    let mut merges = 0usize;
    while n_clusters > cfg.k {
        // find minimal-distance active pair, ties to smallest (i, j)
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d < bd,
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two active clusters");

        // Lance-Williams update of distances to the merged cluster i∪j
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let dmi = dist[m * n + i];
            let dmj = dist[m * n + j];
            let d = match cfg.linkage {
                Linkage::Average => (ni * dmi + nj * dmj) / (ni + nj),
                Linkage::Complete => dmi.max(dmj),
                Linkage::Single => dmi.min(dmj),
            };
            dist[m * n + i] = d;
            dist[i * n + m] = d;
        }
        active[j] = false;
        size[i] += size[j];
        parent[j] = i;
        n_clusters -= 1;
        merges += 1;
    }
    debug_assert_eq!(merges, n - cfg.k);

    let find = |mut x: usize, parent: &[usize]| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    // label clusters by ascending representative index
    let mut label_of_rep: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let r = find(i, &parent);
        let next = label_of_rep.len();
        label_of_rep.entry(r).or_insert(next);
    }
    let map = sim
        .tickers
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), label_of_rep[&find(i, &parent)]))
        .collect();
    ClusterAssignment::new(sim.as_of, "hierarchical", cfg.k, map)
}

/// Passthrough of the point-in-time sector classification: sector codes at
/// `as_of`, densely re-indexed in ascending code order.
pub fn gics_cluster(
    map: &SectorMap,
    panel: &ReturnsPanel,
    as_of: NaiveDate,
) -> Result<ClusterAssignment> {
    let as_of_idx = panel
        .calendar()
        .index_of(as_of)
        .ok_or_else(|| Error::Validation(format!("{as_of} is not a trading date")))?;
    let mut coded: Vec<(String, u8)> = Vec::new();
    for (ti, t) in panel.tickers().iter().enumerate() {
        if !panel.is_member(as_of_idx, ti) {
            continue;
        }
        if let Some(code) = map.sector_at(t, as_of) {
            coded.push((t.clone(), code));
        }
    }
    if coded.is_empty() {
        return Err(Error::InsufficientUniverse(format!("no sector codes at {as_of}")));
    }
    let mut codes: Vec<u8> = coded.iter().map(|(_, c)| *c).collect();
    codes.sort_unstable();
    codes.dedup();
    let labels: BTreeMap<String, usize> = coded
        .into_iter()
        .map(|(t, c)| (t, codes.binary_search(&c).unwrap()))
        .collect();
    ClusterAssignment::new(as_of, "gics_sector_tracking", codes.len().max(1), labels)
}

/// Uniform i.i.d. label per ticker from a seeded generator.
pub fn random_cluster(
    tickers: &[String],
    k: usize,
    seed: u64,
    as_of: NaiveDate,
) -> Result<ClusterAssignment> {
    if tickers.len() < k {
        return Err(Error::InsufficientUniverse(format!(
            "{} tickers < k = {k}",
            tickers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = tickers
        .iter()
        .map(|t| (t.clone(), rng.gen_range(0..k)))
        .collect();
    ClusterAssignment::new(as_of, "random", k, labels)
}

/// Adjusted Rand index between two assignments over their common tickers.
/// 1 means identical partitions up to relabeling; 0 is chance agreement.
pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> f64 {
    let common: Vec<(&String, usize, usize)> = a
        .labels
        .iter()
        .filter_map(|(t, &la)| b.labels.get(t).map(|&lb| (t, la, lb)))
        .collect();
    let n = common.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (_, la, lb) in &common {
        *table.entry((*la, *lb)).or_insert(0) += 1;
        *rows.entry(*la).or_insert(0) += 1;
        *cols.entry(*lb).or_insert(0) += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.values().map(|&v| c2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| c2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        1.0
    } else {
        (sum_ij - expected) / (max_index - expected)
    }
}
