//! Subspace outlier-detection ensembles: projection onto masks, exact LOF and
//! kNN detectors, probability-weighted score aggregation and AUC.

use ndarray::Array2;
use rand::{seq::index, seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{input, Error, Result};
use crate::kernel::sq_dists;
use crate::lens::{LensDistribution, SubspaceMask};

/// Floor on the mean reachability distance, keeping densities finite when
/// neighborhoods consist of duplicates.
pub const MIN_REACH_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Lof,
    Knn,
}

impl Detector {
    pub fn default_k(self) -> usize {
        match self {
            Detector::Lof => 20,
            Detector::Knn => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::Lof => "lof",
            Detector::Knn => "knn",
        }
    }
}

/// Outlier scores for the test rows of a split; higher is more outlying.
#[derive(Debug, Clone, PartialEq)]
pub struct OdScores {
    pub scores: Vec<f64>,
    pub detector: Detector,
    pub k: usize,
}

/// One-class split: inlier-only training rows and a labeled test set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub train: DataMatrix,
    pub test: DataMatrix,
    /// 1 = outlier
    pub test_labels: Vec<u8>,
}

impl LabeledSplit {
    pub fn new(train: DataMatrix, test: DataMatrix, test_labels: Vec<u8>) -> Result<Self> {
        if train.nrows() == 0 {
            return input("training set is empty");
        }
        if train.ncols() != test.ncols() {
            return input("train and test widths differ");
        }
        if test_labels.len() != test.nrows() {
            return input("one label per test row is required");
        }
        Ok(Self {
            train,
            test,
            test_labels,
        })
    }

    pub fn project(&self, mask: &SubspaceMask) -> Result<LabeledSplit> {
        Ok(LabeledSplit {
            train: project(&self.train, mask)?,
            test: project(&self.test, mask)?,
            test_labels: self.test_labels.clone(),
        })
    }
}

/// Keeps the columns selected by `mask`, in their original order.
pub fn project(data: &DataMatrix, mask: &SubspaceMask) -> Result<DataMatrix> {
    if mask.width() != data.ncols() {
        return input(format!(
            "mask width {} does not match data width {}",
            mask.width(),
            data.ncols()
        ));
    }
    if mask.count_ones() == 0 {
        return input("cannot project onto an empty subspace");
    }
    Ok(data.select_columns(&mask.support()))
}

fn distances(a: &DataMatrix, b: &DataMatrix) -> Array2<f64> {
    let mut d = sq_dists(a.view(), b.view());
    d.mapv_inplace(f64::sqrt);
    d
}

fn kth_smallest(row: &[f64], k: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(row);
    let (_, v, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Distance from each test row to its k-th nearest training row.
pub fn knn_score(split: &LabeledSplit, k: usize) -> Result<OdScores> {
    let n_train = split.train.nrows();
    if k == 0 || k > n_train {
        return input(format!("kNN needs 1 ≤ k ≤ {n_train}, got {k}"));
    }
    let d = distances(&split.test, &split.train);
    let mut scratch = Vec::with_capacity(n_train);
    let scores = d
        .rows()
        .into_iter()
        .map(|r| kth_smallest(r.as_slice().expect("standard layout"), k, &mut scratch))
        .collect();
    Ok(OdScores {
        scores,
        detector: Detector::Knn,
        k,
    })
}

/// k-distance and local reachability density of every training row, with
/// neighbors drawn from the other training rows.
struct LofModel {
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

fn neighborhood(row: &[f64], k_dist: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    row.iter()
        .copied()
        .enumerate()
        .filter(move |(_, d)| *d <= k_dist)
}

fn lrd_of(row: &[f64], k_dist: f64, model_k_distance: &[f64], skip: Option<usize>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for (o, d) in neighborhood(row, k_dist) {
        if Some(o) == skip {
            continue;
        }
        sum += model_k_distance[o].max(d);
        count += 1;
    }
    1.0 / (sum / count as f64).max(MIN_REACH_DISTANCE)
}

impl LofModel {
    fn fit(train: &DataMatrix, k: usize) -> Self {
        let n = train.nrows();
        let mut d = distances(train, train);
        // exclude each point from its own neighborhood
        for i in 0..n {
            d[[i, i]] = f64::INFINITY;
        }
        let mut scratch = Vec::with_capacity(n);
        let k_distance: Vec<f64> = d
            .rows()
            .into_iter()
            .map(|r| kth_smallest(r.as_slice().expect("standard layout"), k, &mut scratch))
            .collect();
        let lrd = d
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| lrd_of(r.as_slice().expect("standard layout"), k_distance[i], &k_distance, Some(i)))
            .collect();
        Self { k_distance, lrd }
    }

    fn score(&self, row: &[f64], k: usize, scratch: &mut Vec<f64>) -> f64 {
        let k_dist = kth_smallest(row, k, scratch);
        let lrd_p = lrd_of(row, k_dist, &self.k_distance, None);
        let (mut sum, mut count) = (0.0, 0usize);
        for (o, _) in neighborhood(row, k_dist) {
            sum += self.lrd[o];
            count += 1;
        }
        sum / count as f64 / lrd_p
    }
}

/// Local outlier factor of each test row relative to the training rows.
/// Neighborhoods include every row tied at the k-distance.
pub fn lof_score(split: &LabeledSplit, k: usize) -> Result<OdScores> {
    let n_train = split.train.nrows();
    if k == 0 || k >= n_train {
        return input(format!("LOF needs 1 ≤ k < {n_train}, got {k}"));
    }
    let model = LofModel::fit(&split.train, k);
    let d = distances(&split.test, &split.train);
    let mut scratch = Vec::with_capacity(n_train);
    let scores: Vec<f64> = d
        .rows()
        .into_iter()
        .map(|r| model.score(r.as_slice().expect("standard layout"), k, &mut scratch))
        .collect();
    Ok(OdScores {
        scores,
        detector: Detector::Lof,
        k,
    })
}

pub fn detect(split: &LabeledSplit, detector: Detector, k: usize) -> Result<OdScores> {
    match detector {
        Detector::Lof => lof_score(split, k),
        Detector::Knn => knn_score(split, k),
    }
}

/// `Σᵢ pᵢ · scoreᵢ` over the lens entries, each detector fitted on the
/// projected training rows. Raw scores are combined without normalization;
/// the sum runs in mask order so entry order does not matter.
pub fn ensemble_scores(
    split: &LabeledSplit,
    lens: &LensDistribution,
    detector: Detector,
    k: usize,
) -> Result<OdScores> {
    if lens.width() != split.train.ncols() {
        return input(format!(
            "lens width {} does not match data width {}",
            lens.width(),
            split.train.ncols()
        ));
    }
    let mut entries: Vec<_> = lens.entries().iter().collect();
    entries.sort_by(|a, b| a.mask.cmp(&b.mask));
    let per_mask: Vec<Result<Vec<f64>>> = entries
        .par_iter()
        .map(|e| {
            split
                .project(&e.mask)
                .and_then(|s| detect(&s, detector, k))
                .map(|s| s.scores)
                .map_err(|source| Error::Subspace {
                    mask: e.mask.to_string(),
                    source: Box::new(source),
                })
        })
        .collect();
    let mut total = vec![0.0; split.test.nrows()];
    for (e, scores) in entries.iter().zip(per_mask) {
        for (t, s) in total.iter_mut().zip(scores?) {
            *t += e.probability * s;
        }
    }
    Ok(OdScores {
        scores: total,
        detector,
        k,
    })
}

/// Mann-Whitney AUC: the fraction of (outlier, inlier) pairs ranked
/// correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return input("scores and labels differ in length");
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return input("scores must be finite");
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return input("AUC needs both outliers and inliers");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Feature-bagging baseline: `num_subspaces` masks of uniform size in
/// `[⌊d/2⌋, d−1]` with uniformly chosen features, equal weights.
pub fn feature_bagging_lens(d: usize, num_subspaces: usize, seed: u64) -> Result<LensDistribution> {
    if d < 2 {
        return input(format!("feature bagging needs d ≥ 2, got {d}"));
    }
    if num_subspaces == 0 {
        return input("feature bagging needs at least one subspace");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = (d / 2).max(1);
    let draws = (0..num_subspaces)
        .map(|_| {
            let size = rng.random_range(low..=d - 1);
            let features = index::sample(&mut rng, d, size).into_vec();
            SubspaceMask::from_support(d, &features)
        })
        .collect::<Result<Vec<_>>>()?;
    LensDistribution::from_draws(draws)
}

/// The five feature-bagging ensemble sizes: equidistant from 50 to 500.
pub fn feature_bagging_grid() -> [usize; 5] {
    [50, 162, 275, 387, 500]
}

/// Seeded one-class split: `ratio` of the inliers train, the remaining
/// inliers and every outlier form the test set.
pub fn one_class_split(data: &DataMatrix, labels: &[u8], ratio: f64, seed: u64) -> Result<LabeledSplit> {
    if labels.len() != data.nrows() {
        return input("one label per row is required");
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return input(format!("split ratio must lie in (0, 1), got {ratio}"));
    }
    let mut inliers: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let outliers: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if inliers.len() < 5 || outliers.is_empty() {
        return input(format!(
            "one-class split needs ≥ 5 inliers and ≥ 1 outlier, got {} and {}",
            inliers.len(),
            outliers.len()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inliers.shuffle(&mut rng);
    let n_train = ((inliers.len() as f64 * ratio).floor() as usize).clamp(1, inliers.len() - 1);
    let train = data.select_rows(&inliers[..n_train]);
    let mut test_rows = inliers[n_train..].to_vec();
    test_rows.extend_from_slice(&outliers);
    let test_labels = test_rows.iter().map(|&i| labels[i]).collect();
    LabeledSplit::new(train, data.select_rows(&test_rows), test_labels)
}
