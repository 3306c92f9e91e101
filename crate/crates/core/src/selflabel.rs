//! Label generation without ground truth: labeler/student synchronization,
//! correspondence filtering, speculative registration and dense
//! rediscovery of correspondences under the speculative pose.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{describe_with_tree, dot, embed, match_features, Descriptor, DescriptorConfig, EmbeddingParams, FeatureMap};
use crate::geom::{PointCloud, Pose};
use crate::kdtree::KdTree;
use crate::real::Real;
use crate::scpcr::{Estimator, RegistrationError};
use crate::Correspondence;

#[derive(Debug, Error)]
pub enum SelfLabelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("the target feature map needs at least two rows")]
    SingleCandidate,
    #[error("every correspondence was filtered out")]
    AllFiltered,
    #[error("adaptive filtering needs a similarity map")]
    MissingMap,
    #[error("similarity map has no populated cell")]
    InsufficientData,
    #[error("pair skipped: {0}")]
    SkipPair(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("similarity map {path}: {reason}")]
    MapFile { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaConfig {
    pub lambda: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { lambda: 0.2 }
    }
}

/// `λ · labeler + (1 - λ) · student`, elementwise.
pub fn ema_update<T: Real>(
    labeler: &EmbeddingParams<T>,
    student: &EmbeddingParams<T>,
    cfg: &EmaConfig,
) -> Result<EmbeddingParams<T>, SelfLabelError> {
    if !(0.0..1.0).contains(&cfg.lambda) {
        return Err(SelfLabelError::InvalidConfig(format!("ema lambda {} outside [0, 1)", cfg.lambda)));
    }
    if !labeler.same_shape(student) {
        return Err(SelfLabelError::ShapeMismatch(format!("labeler k={} vs student k={}", labeler.k, student.k)));
    }
    let l = T::lit(cfg.lambda);
    let s = T::one() - l;
    let mix = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| l * *x + s * *y).collect::<Vec<T>>();
    Ok(EmbeddingParams { k: labeler.k, weight: mix(&labeler.weight, &student.weight), bias: mix(&labeler.bias, &student.bias) })
}

/// Ratio-test significance `1 - d_best / d_second` of each correspondence's
/// source feature, using Euclidean feature distances over all target rows.
pub fn lowe_weights<T: Real>(
    f_s: &FeatureMap<T>,
    f_t: &FeatureMap<T>,
    corr: &[Correspondence],
) -> Result<Vec<f64>, SelfLabelError> {
    if f_t.len() < 2 {
        return Err(SelfLabelError::SingleCandidate);
    }
    if f_s.dim != f_t.dim {
        return Err(SelfLabelError::ShapeMismatch(format!("feature widths {} and {}", f_s.dim, f_t.dim)));
    }
    Ok(corr
        .par_iter()
        .map(|c| {
            let a = f_s.row(c.src);
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            for j in 0..f_t.len() {
                let d: f64 = a.iter().zip(f_t.row(j)).map(|(x, y)| (*x - *y).as_f64().powi(2)).sum::<f64>().sqrt();
                if d < best {
                    second = best;
                    best = d;
                } else if d < second {
                    second = d;
                }
            }
            if second > 0.0 { 1.0 - best / second } else { 0.0 }
        })
        .collect())
}

/// Mean labeler similarity of true correspondences binned by the distances
/// of the two endpoints to their sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub bin_width: f64,
    pub bins: usize,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl Default for SimilarityMap {
    fn default() -> Self {
        Self::new(2.0, 50)
    }
}

impl SimilarityMap {
    pub fn new(bin_width: f64, bins: usize) -> Self {
        Self { bin_width, bins, sum: vec![0.0; bins * bins], count: vec![0; bins * bins] }
    }

    /// Bin index of a distance; distances past the range land in the last bin.
    pub fn bin(&self, d: f64) -> usize {
        ((d / self.bin_width).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, d1: f64, d2: f64, similarity: f64) {
        let c = self.bin(d1) * self.bins + self.bin(d2);
        self.sum[c] += similarity;
        self.count[c] += 1;
    }

    pub fn merge(&mut self, other: &SimilarityMap) {
        for c in 0..self.sum.len() {
            self.sum[c] += other.sum[c];
            self.count[c] += other.count[c];
        }
    }

    pub fn count(&self, b1: usize, b2: usize) -> u64 {
        self.count[b1 * self.bins + b2]
    }

    pub fn cell_mean(&self, b1: usize, b2: usize) -> Option<f64> {
        let c = b1 * self.bins + b2;
        (self.count[c] > 0).then(|| self.sum[c] / self.count[c] as f64)
    }

    pub fn populated(&self) -> usize {
        self.count.iter().filter(|c| **c > 0).count()
    }

    /// Mean similarity at `(d1, d2)`, falling back to the nearest populated
    /// cell in Manhattan grid distance (ties resolved row-major).
    pub fn lookup(&self, d1: f64, d2: f64) -> Option<f64> {
        let (b1, b2) = (self.bin(d1), self.bin(d2));
        if let Some(m) = self.cell_mean(b1, b2) {
            return Some(m);
        }
        let mut best: Option<(usize, f64)> = None;
        for x in 0..self.bins {
            for y in 0..self.bins {
                if let Some(m) = self.cell_mean(x, y) {
                    let d = x.abs_diff(b1) + y.abs_diff(b2);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, m));
                    }
                }
            }
        }
        best.map(|(_, m)| m)
    }

    /// CSV with header `d1_bin,d2_bin,mean_sim,count`, populated cells only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d1_bin,d2_bin,mean_sim,count\n");
        for x in 0..self.bins {
            for y in 0..self.bins {
                if let Some(m) = self.cell_mean(x, y) {
                    writeln!(out, "{x},{y},{m},{}", self.count(x, y)).expect("string write");
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("d1_bin,d2_bin,mean_sim,count") {
            return Err("missing header".into());
        }
        let mut map = Self::default();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || format!("line {}: {line:?}", n + 2);
            if f.len() != 4 {
                return Err(bad());
            }
            let x: usize = f[0].parse().map_err(|_| bad())?;
            let y: usize = f[1].parse().map_err(|_| bad())?;
            let m: f64 = f[2].parse().map_err(|_| bad())?;
            let c: u64 = f[3].parse().map_err(|_| bad())?;
            if x >= map.bins || y >= map.bins || !m.is_finite() || c == 0 {
                return Err(bad());
            }
            let i = x * map.bins + y;
            map.count[i] = c;
            map.sum[i] = m * c as f64;
        }
        Ok(map)
    }

    pub fn write(&self, path: &Path) -> Result<(), SelfLabelError> {
        fs::write(path, self.to_csv())
            .map_err(|e| SelfLabelError::MapFile { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn read(path: &Path) -> Result<Self, SelfLabelError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SelfLabelError::MapFile { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_csv(&text).map_err(|reason| SelfLabelError::MapFile { path: path.display().to_string(), reason })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    None,
    Hard,
    Adaptive,
}

impl std::str::FromStr for FilterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "hard" => Ok(Self::Hard),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(format!("unknown filter mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub mode: FilterMode,
    /// hard mode keeps pairs whose nearer endpoint is at least this far out, meters
    pub d_thresh: f64,
    /// adaptive mode keeps cells whose mean similarity exceeds this
    pub s_thresh: f64,
    pub lowe_enabled: bool,
    /// minimum ratio-test significance when the Lowe filter is on
    pub lowe_thresh: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { mode: FilterMode::Hard, d_thresh: 40.0, s_thresh: 0.6, lowe_enabled: false, lowe_thresh: 0.1 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), SelfLabelError> {
        if !(self.d_thresh >= 0.0) || !(0.0..=1.0).contains(&self.s_thresh) || !(0.0..1.0).contains(&self.lowe_thresh) {
            return Err(SelfLabelError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub kept: usize,
    pub dropped: usize,
}

/// Drops correspondences by the distances `|p|`, `|q|` of their endpoints
/// to the respective sensors.
pub fn spatial_filter<T: Real>(
    corr: &[Correspondence],
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    cfg: &FilterConfig,
    map: Option<&SimilarityMap>,
) -> Result<(Vec<Correspondence>, FilterStats), SelfLabelError> {
    if cfg.mode == FilterMode::Adaptive && map.is_none() {
        return Err(SelfLabelError::MissingMap);
    }
    if let Some(m) = map.filter(|_| cfg.mode == FilterMode::Adaptive) {
        if m.populated() == 0 {
            return Err(SelfLabelError::InsufficientData);
        }
    }
    let kept: Vec<Correspondence> = corr
        .iter()
        .filter(|c| {
            let d1 = src.points[c.src].coords.norm().as_f64();
            let d2 = dst.points[c.dst].coords.norm().as_f64();
            match cfg.mode {
                FilterMode::None => true,
                FilterMode::Hard => d1.min(d2) >= cfg.d_thresh,
                FilterMode::Adaptive => map.and_then(|m| m.lookup(d1, d2)).is_some_and(|s| s > cfg.s_thresh),
            }
        })
        .copied()
        .collect();
    let stats = FilterStats { kept: kept.len(), dropped: corr.len() - kept.len() };
    if kept.is_empty() {
        return Err(SelfLabelError::AllFiltered);
    }
    Ok((kept, stats))
}

/// Nearest-neighbour correspondences within `beta` after aligning the clouds
/// with `pose`: `C_ST` maps each source point into the target, `C_TS` maps
/// each target point back with the inverse pose and is stored as
/// `(index in target, index in source)`.
pub fn rediscover<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    pose: &Pose<T>,
    beta: f64,
) -> (Vec<Correspondence>, Vec<Correspondence>) {
    rediscover_with_trees(src, &KdTree::new(&src.points), dst, &KdTree::new(&dst.points), pose, beta)
}

pub fn rediscover_with_trees<T: Real>(
    src: &PointCloud<T>,
    src_tree: &KdTree<T>,
    dst: &PointCloud<T>,
    dst_tree: &KdTree<T>,
    pose: &Pose<T>,
    beta: f64,
) -> (Vec<Correspondence>, Vec<Correspondence>) {
    let b2 = T::lit(beta * beta);
    let one_way = |from: &PointCloud<T>, tree: &KdTree<T>, p: &Pose<T>| -> Vec<Correspondence> {
        from.points
            .par_iter()
            .enumerate()
            .filter_map(|(i, x)| {
                let (j, d2) = tree.nearest(&p.transform_point(x))?;
                (d2 <= b2).then(|| Correspondence::new(i, j))
            })
            .collect()
    };
    let c_st = one_way(src, dst_tree, pose);
    let c_ts = one_way(dst, src_tree, &pose.inverse());
    (c_st, c_ts)
}

/// A scan with its search structure and per-point descriptors.
#[derive(Debug, Clone)]
pub struct Frame<T: Real> {
    pub cloud: PointCloud<T>,
    pub tree: KdTree<T>,
    pub descriptors: Vec<Descriptor<T>>,
}

impl<T: Real> Frame<T> {
    pub fn new(cloud: PointCloud<T>, desc: &DescriptorConfig) -> Self {
        let tree = KdTree::new(&cloud.points);
        let descriptors = describe_with_tree(&cloud, &tree, desc, None);
        Self { cloud, tree, descriptors }
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// `count` evenly spaced indices out of `n` (all of them when `n <= count`).
pub fn keypoint_indices(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    (0..count).map(|i| i * n / count).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub filter: FilterConfig,
    pub estimator: Estimator,
    /// rediscovery radius, meters
    pub beta: f64,
    /// points per cloud used for labeler matching
    pub keypoints: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { filter: FilterConfig::default(), estimator: Estimator::default(), beta: 2.0, keypoints: 1024 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDiagnostics {
    pub matched: usize,
    pub after_lowe: usize,
    pub after_filter: usize,
    pub registration_inliers: usize,
    pub c_st: usize,
    pub c_ts: usize,
}

#[derive(Debug, Clone)]
pub struct LabelSet<T: Real> {
    pub c_st: Vec<Correspondence>,
    pub c_ts: Vec<Correspondence>,
    pub est_pose: Pose<T>,
    /// labeler correspondences that survived filtering, for diagnostics
    pub filtered: Vec<Correspondence>,
    pub diagnostics: LabelDiagnostics,
}

/// Labeler feature correspondences between keypoint subsets, expressed in
/// full-cloud indices.
pub fn labeler_matches<T: Real>(
    src: &Frame<T>,
    dst: &Frame<T>,
    params: &EmbeddingParams<T>,
    keypoints: usize,
) -> Result<(Vec<Correspondence>, FeatureMap<T>, FeatureMap<T>, Vec<usize>, Vec<usize>), SelfLabelError> {
    let ks = keypoint_indices(src.len(), keypoints);
    let kt = keypoint_indices(dst.len(), keypoints);
    let ds: Vec<Descriptor<T>> = ks.iter().map(|&i| src.descriptors[i]).collect();
    let dt: Vec<Descriptor<T>> = kt.iter().map(|&i| dst.descriptors[i]).collect();
    let fs = embed(&ds, params);
    let ft = embed(&dt, params);
    let local = match_features(&fs, &ft).map_err(|e| SelfLabelError::SkipPair(e.to_string()))?;
    let global = local.iter().map(|c| Correspondence { src: ks[c.src], dst: kt[c.dst], score: c.score }).collect();
    Ok((global, fs, ft, ks, kt))
}

/// Labels for one pair. Unit intervals assume the identity pose; longer
/// intervals go through matching, optional Lowe filtering, spatial
/// filtering, speculative registration and rediscovery. Never consults
/// ground truth.
pub fn generate_labels<T: Real>(
    src: &Frame<T>,
    dst: &Frame<T>,
    interval: usize,
    labeler: &EmbeddingParams<T>,
    cfg: &LabelConfig,
    map: Option<&SimilarityMap>,
) -> Result<LabelSet<T>, SelfLabelError> {
    if src.is_empty() || dst.is_empty() {
        return Err(SelfLabelError::SkipPair("empty cloud".into()));
    }
    let mut diag = LabelDiagnostics::default();
    let (pose, filtered) = if interval <= 1 {
        (Pose::identity(), Vec::new())
    } else {
        let (mut corr, fs, ft, ks, kt) = labeler_matches(src, dst, labeler, cfg.keypoints)?;
        diag.matched = corr.len();
        if cfg.filter.lowe_enabled {
            // ratio test runs on the keypoint-local feature maps
            let local: Vec<Correspondence> = corr
                .iter()
                .map(|c| {
                    let i = ks.binary_search(&c.src).expect("keypoint");
                    let j = kt.binary_search(&c.dst).expect("keypoint");
                    Correspondence::new(i, j)
                })
                .collect();
            let w = lowe_weights(&fs, &ft, &local)?;
            corr = corr.into_iter().zip(w).filter(|(_, w)| *w >= cfg.filter.lowe_thresh).map(|(c, _)| c).collect();
            if corr.is_empty() {
                return Err(SelfLabelError::SkipPair("lowe filter removed every match".into()));
            }
        }
        diag.after_lowe = corr.len();
        let (kept, _) = spatial_filter(&corr, &src.cloud, &dst.cloud, &cfg.filter, map)
            .map_err(|e| SelfLabelError::SkipPair(e.to_string()))?;
        diag.after_filter = kept.len();
        let reg = cfg
            .estimator
            .estimate(&kept, &src.cloud, &dst.cloud)
            .map_err(|e: RegistrationError| SelfLabelError::SkipPair(e.to_string()))?;
        diag.registration_inliers = reg.confidence;
        (reg.pose, kept)
    };
    let (c_st, c_ts) = rediscover_with_trees(&src.cloud, &src.tree, &dst.cloud, &dst.tree, &pose, cfg.beta);
    diag.c_st = c_st.len();
    diag.c_ts = c_ts.len();
    if c_st.is_empty() && c_ts.is_empty() {
        return Err(SelfLabelError::SkipPair("rediscovery found no correspondences".into()));
    }
    Ok(LabelSet { c_st, c_ts, est_pose: pose, filtered, diagnostics: diag })
}

/// Adds the labeler similarities of true correspondences of one pair to the
/// map: for each source keypoint, the nearest target point under the true
/// pose, if within `tolerance`.
pub fn accumulate_similarity<T: Real>(
    map: &mut SimilarityMap,
    src: &Frame<T>,
    dst: &Frame<T>,
    true_pose: &Pose<T>,
    labeler: &EmbeddingParams<T>,
    tolerance: f64,
    keypoints: usize,
) {
    let ks = keypoint_indices(src.len(), keypoints);
    let t2 = T::lit(tolerance * tolerance);
    let pairs: Vec<(usize, usize)> = ks
        .iter()
        .filter_map(|&i| {
            let (j, d2) = dst.tree.nearest(&true_pose.transform_point(&src.cloud.points[i]))?;
            (d2 <= t2).then_some((i, j))
        })
        .collect();
    if pairs.is_empty() {
        return;
    }
    let ds: Vec<Descriptor<T>> = pairs.iter().map(|&(i, _)| src.descriptors[i]).collect();
    let dt: Vec<Descriptor<T>> = pairs.iter().map(|&(_, j)| dst.descriptors[j]).collect();
    let fs = embed(&ds, labeler);
    let ft = embed(&dt, labeler);
    for (n, &(i, j)) in pairs.iter().enumerate() {
        let d1 = src.cloud.points[i].coords.norm().as_f64();
        let d2 = dst.cloud.points[j].coords.norm().as_f64();
        map.add(d1, d2, dot(fs.row(n), ft.row(n)).as_f64());
    }
}
