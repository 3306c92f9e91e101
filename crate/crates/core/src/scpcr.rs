//! Speculative registration from putative correspondences: second-order
//! spatial compatibility with spectral seeding, and a RANSAC baseline.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{fit_pose_weighted, Point3, PointCloud, Pose};
use crate::real::Real;
use crate::Correspondence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("{0} correspondences, at least {1} required")]
    TooFewCorrespondences(usize, usize),
    #[error("registration failed: best hypothesis has {0} inliers")]
    RegistrationFailed(usize),
    #[error("correspondence ({0}, {1}) indexes past the end of a cloud")]
    IndexOutOfRange(usize, usize),
    #[error("invalid registrar configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrarConfig {
    /// length-difference tolerance for pairwise compatibility, meters
    pub comp_thresh: f64,
    pub num_seeds: usize,
    pub power_iters: usize,
    /// residual below which a correspondence counts as an inlier, meters
    pub inlier_thresh: f64,
    /// larger inputs are subsampled to this many correspondences
    pub max_corrs: usize,
    /// RNG seed for subsampling
    pub seed: u64,
}

impl Default for RegistrarConfig {
    fn default() -> Self {
        Self { comp_thresh: 0.6, num_seeds: 10, power_iters: 20, inlier_thresh: 0.6, max_corrs: 1000, seed: 0 }
    }
}

impl RegistrarConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.comp_thresh > 0.0)
            || !(self.inlier_thresh > 0.0)
            || self.num_seeds == 0
            || self.power_iters == 0
            || self.max_corrs < 3
        {
            return Err(RegistrationError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Dense symmetric `n x n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix {
    pub n: usize,
    pub data: Vec<u32>,
}

impl CompatibilityMatrix {
    fn zeros(n: usize) -> Self {
        Self { n, data: vec![0; n * n] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[x * self.n + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[u32] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|x| (x + 1..self.n).all(|y| self.get(x, y) == self.get(y, x)))
    }
}

fn check_indices<T: Real>(corr: &[Correspondence], src: &PointCloud<T>, dst: &PointCloud<T>) -> Result<(), RegistrationError> {
    match corr.iter().find(|c| c.src >= src.len() || c.dst >= dst.len()) {
        Some(c) => Err(RegistrationError::IndexOutOfRange(c.src, c.dst)),
        None => Ok(()),
    }
}

/// Binary pairwise compatibility: 1 iff the source and target distances of
/// two correspondences differ by strictly less than `comp_thresh`.
pub fn first_order<T: Real>(
    corr: &[Correspondence],
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    comp_thresh: f64,
) -> Result<CompatibilityMatrix, RegistrationError> {
    if corr.len() < 2 {
        return Err(RegistrationError::TooFewCorrespondences(corr.len(), 2));
    }
    check_indices(corr, src, dst)?;
    let n = corr.len();
    let ps: Vec<Point3<T>> = corr.iter().map(|c| src.points[c.src]).collect();
    let qs: Vec<Point3<T>> = corr.iter().map(|c| dst.points[c.dst]).collect();
    let thresh = T::lit(comp_thresh);
    let mut m = CompatibilityMatrix::zeros(n);
    for x in 0..n {
        for y in x + 1..n {
            let diff = ((ps[x] - ps[y]).norm() - (qs[x] - qs[y]).norm()).abs();
            if diff < thresh {
                m.data[x * n + y] = 1;
                m.data[y * n + x] = 1;
            }
        }
    }
    Ok(m)
}

/// `M ⊙ M²`: for every compatible pair, the number of correspondences
/// compatible with both.
pub fn sc2(binary: &CompatibilityMatrix) -> CompatibilityMatrix {
    let n = binary.n;
    let words = n.div_ceil(64);
    let mut bits = vec![0u64; n * words];
    for x in 0..n {
        for (y, &v) in binary.row(x).iter().enumerate() {
            if v != 0 {
                bits[x * words + y / 64] |= 1u64 << (y % 64);
            }
        }
    }
    let mut out = CompatibilityMatrix::zeros(n);
    out.data.par_chunks_mut(n.max(1)).enumerate().for_each(|(x, row)| {
        let bx = &bits[x * words..(x + 1) * words];
        for (y, slot) in row.iter_mut().enumerate() {
            if binary.get(x, y) != 0 {
                let by = &bits[y * words..(y + 1) * words];
                *slot = bx.iter().zip(by).map(|(a, b)| (a & b).count_ones()).sum();
            }
        }
    });
    out
}

/// Leading eigenvector of a non-negative symmetric matrix by power
/// iteration from the uniform vector. Stops early once the iterate moves
/// less than `1e-12`. A zero matrix yields the uniform vector.
pub fn leading_eigenvector(m: &CompatibilityMatrix, iters: usize) -> Vec<f64> {
    let n = m.n;
    if n == 0 {
        return Vec::new();
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..iters {
        let mut w: Vec<f64> =
            (0..n).into_par_iter().map(|x| m.row(x).iter().zip(&v).map(|(&a, b)| a as f64 * b).sum()).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return v;
        }
        w.iter_mut().for_each(|a| *a /= norm);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        if delta < 1e-12 {
            break;
        }
    }
    v
}

/// Estimated pose with the inlier mask over the input correspondences and
/// the inlier count as confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration<T: Real> {
    pub pose: Pose<T>,
    pub inliers: Vec<bool>,
    pub confidence: usize,
}

fn inlier_mask<T: Real>(pose: &Pose<T>, ps: &[Point3<T>], qs: &[Point3<T>], thresh: T) -> (Vec<bool>, usize) {
    let t2 = thresh * thresh;
    let mask: Vec<bool> = ps.iter().zip(qs).map(|(p, q)| (pose.transform_point(p) - q).norm_squared() < t2).collect();
    let count = mask.iter().filter(|b| **b).count();
    (mask, count)
}

fn refit<T: Real>(ps: &[Point3<T>], qs: &[Point3<T>], mask: &[bool]) -> Option<Pose<T>> {
    let (a, b): (Vec<Point3<T>>, Vec<Point3<T>>) =
        ps.iter().zip(qs).zip(mask).filter(|(_, m)| **m).map(|((p, q), _)| (*p, *q)).unzip();
    let w = vec![T::one(); a.len()];
    fit_pose_weighted(&a, &b, &w).ok()
}

/// Seed selection: descending eigenvector entry (lowest index on ties),
/// skipping candidates compatible with an already chosen seed.
fn select_seeds(eig: &[f64], binary: &CompatibilityMatrix, num_seeds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eig.len()).collect();
    order.sort_by(|&a, &b| eig[b].partial_cmp(&eig[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut seeds: Vec<usize> = Vec::with_capacity(num_seeds);
    for c in order {
        if seeds.len() == num_seeds {
            break;
        }
        if seeds.iter().all(|&s| binary.get(s, c) == 0) {
            seeds.push(c);
        }
    }
    seeds
}

/// SC²-based robust registration. Inputs above `max_corrs` are subsampled
/// with the configured seed; the returned mask covers every input
/// correspondence.
pub fn register<T: Real>(
    corr: &[Correspondence],
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    cfg: &RegistrarConfig,
) -> Result<Registration<T>, RegistrationError> {
    cfg.validate()?;
    if corr.len() < 3 {
        return Err(RegistrationError::TooFewCorrespondences(corr.len(), 3));
    }
    check_indices(corr, src, dst)?;
    let working: Vec<Correspondence> = if corr.len() > cfg.max_corrs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx: Vec<usize> = index::sample(&mut rng, corr.len(), cfg.max_corrs).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| corr[i]).collect()
    } else {
        corr.to_vec()
    };
    let ps: Vec<Point3<T>> = working.iter().map(|c| src.points[c.src]).collect();
    let qs: Vec<Point3<T>> = working.iter().map(|c| dst.points[c.dst]).collect();

    let binary = first_order(&working, src, dst, cfg.comp_thresh)?;
    let scores = sc2(&binary);
    let eig = leading_eigenvector(&scores, cfg.power_iters);
    let seeds = select_seeds(&eig, &binary, cfg.num_seeds);
    let thresh = T::lit(cfg.inlier_thresh);

    let hypotheses: Vec<Option<(Pose<T>, usize)>> = seeds
        .par_iter()
        .map(|&s| {
            let row = scores.row(s);
            let seed_weight = row.iter().copied().max().unwrap_or(0).max(1);
            let mut a = vec![ps[s]];
            let mut b = vec![qs[s]];
            let mut w = vec![T::count(seed_weight as usize)];
            for (j, &v) in row.iter().enumerate() {
                if v > 0 {
                    a.push(ps[j]);
                    b.push(qs[j]);
                    w.push(T::count(v as usize));
                }
            }
            let pose = fit_pose_weighted(&a, &b, &w).ok()?;
            let (_, count) = inlier_mask(&pose, &ps, &qs, thresh);
            Some((pose, count))
        })
        .collect();

    let mut best: Option<(Pose<T>, usize)> = None;
    for (pose, count) in hypotheses.into_iter().flatten() {
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((pose, count));
        }
    }
    let Some((pose, count)) = best else {
        return Err(RegistrationError::RegistrationFailed(0));
    };
    if count < 3 {
        return Err(RegistrationError::RegistrationFailed(count));
    }
    let (mask, _) = inlier_mask(&pose, &ps, &qs, thresh);
    let pose = refit(&ps, &qs, &mask).unwrap_or(pose);
    finish(corr, src, dst, pose, thresh)
}

fn finish<T: Real>(
    corr: &[Correspondence],
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    pose: Pose<T>,
    thresh: T,
) -> Result<Registration<T>, RegistrationError> {
    let ps: Vec<Point3<T>> = corr.iter().map(|c| src.points[c.src]).collect();
    let qs: Vec<Point3<T>> = corr.iter().map(|c| dst.points[c.dst]).collect();
    let (inliers, confidence) = inlier_mask(&pose, &ps, &qs, thresh);
    Ok(Registration { pose, inliers, confidence })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iters: usize,
    pub inlier_thresh: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iters: 10_000, inlier_thresh: 0.6, seed: 0 }
    }
}

/// Three-point hypothesize-and-verify with a final refit on the best
/// consensus set.
pub fn ransac_register<T: Real>(
    corr: &[Correspondence],
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    cfg: &RansacConfig,
) -> Result<Registration<T>, RegistrationError> {
    if corr.len() < 3 {
        return Err(RegistrationError::TooFewCorrespondences(corr.len(), 3));
    }
    check_indices(corr, src, dst)?;
    let ps: Vec<Point3<T>> = corr.iter().map(|c| src.points[c.src]).collect();
    let qs: Vec<Point3<T>> = corr.iter().map(|c| dst.points[c.dst]).collect();
    let thresh = T::lit(cfg.inlier_thresh);
    let ones = [T::one(); 3];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Pose<T>, usize)> = None;
    for _ in 0..cfg.iters {
        let i = rng.random_range(0..ps.len());
        let mut j = rng.random_range(0..ps.len() - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..ps.len() - 2);
        for m in [i.min(j), i.max(j)] {
            if k >= m {
                k += 1;
            }
        }
        let Ok(pose) = fit_pose_weighted(&[ps[i], ps[j], ps[k]], &[qs[i], qs[j], qs[k]], &ones) else {
            continue;
        };
        let (_, count) = inlier_mask(&pose, &ps, &qs, thresh);
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((pose, count));
        }
    }
    let Some((pose, count)) = best else {
        return Err(RegistrationError::RegistrationFailed(0));
    };
    if count < 3 {
        return Err(RegistrationError::RegistrationFailed(count));
    }
    let (mask, _) = inlier_mask(&pose, &ps, &qs, thresh);
    let pose = refit(&ps, &qs, &mask).unwrap_or(pose);
    finish(corr, src, dst, pose, thresh)
}

/// Robust estimator choice for label generation and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sc2pcr(RegistrarConfig),
    Ransac(RansacConfig),
}

impl Default for Estimator {
    fn default() -> Self {
        Self::Sc2pcr(RegistrarConfig::default())
    }
}

impl Estimator {
    pub fn estimate<T: Real>(
        &self,
        corr: &[Correspondence],
        src: &PointCloud<T>,
        dst: &PointCloud<T>,
    ) -> Result<Registration<T>, RegistrationError> {
        match self {
            Self::Sc2pcr(cfg) => register(corr, src, dst, cfg),
            Self::Ransac(cfg) => ransac_register(corr, src, dst, cfg),
        }
    }
}
