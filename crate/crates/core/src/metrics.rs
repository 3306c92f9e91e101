//! Registration metrics: per-pair rotation/translation errors, success
//! criterion, RR / RRE / RTE aggregation, mRR over distance buckets and the
//! inlier ratio of a correspondence set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{rotation_error, translation_error, PointCloud, Pose};
use crate::real::Real;
use crate::Correspondence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no registration results to aggregate")]
    EmptyInput,
    #[error("expected {expected} bucket values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("correspondence set is empty")]
    EmptyCorrespondences,
    #[error("correspondence ({0}, {1}) is out of range")]
    IndexOutOfRange(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    /// degrees
    pub t_rot: f64,
    /// meters
    pub t_trans: f64,
    /// meters
    pub t_inlier: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self { t_rot: 5.0, t_trans: 2.0, t_inlier: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub pair_id: String,
    pub re_deg: f64,
    pub te_m: f64,
    pub success: bool,
}

/// Closed distance interval `[lo, hi]` between the two LiDAR centers, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBucket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBuckets(pub Vec<DistanceBucket>);

impl Default for DistanceBuckets {
    fn default() -> Self {
        Self(
            [(5.0, 10.0), (10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (40.0, 50.0)]
                .iter()
                .map(|&(lo, hi)| DistanceBucket { lo, hi })
                .collect(),
        )
    }
}

impl DistanceBuckets {
    /// Ascending and non-overlapping (shared endpoints allowed).
    pub fn is_well_formed(&self) -> bool {
        self.0.iter().all(|b| b.lo < b.hi) && self.0.windows(2).all(|w| w[0].hi <= w[1].lo)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn evaluate_pair<T: Real>(
    pair_id: impl Into<String>,
    true_pose: &Pose<T>,
    est_pose: &Pose<T>,
    thresholds: &MetricThresholds,
) -> RegistrationResult {
    let re_deg = rotation_error(&true_pose.rotation, &est_pose.rotation).as_f64();
    let te_m = translation_error(&true_pose.translation, &est_pose.translation).as_f64();
    RegistrationResult { pair_id: pair_id.into(), re_deg, te_m, success: is_success(re_deg, te_m, thresholds) }
}

/// Strict inequalities on both thresholds.
pub fn is_success(re_deg: f64, te_m: f64, thresholds: &MetricThresholds) -> bool {
    re_deg < thresholds.t_rot && te_m < thresholds.t_trans
}

/// RR over all pairs; RRE and RTE averaged over successful pairs only, `None`
/// when nothing succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rr: f64,
    pub rre_deg: Option<f64>,
    pub rte_m: Option<f64>,
    pub pairs: usize,
    pub successes: usize,
}

pub fn aggregate(results: &[RegistrationResult]) -> Result<Aggregate, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let ok: Vec<&RegistrationResult> = results.iter().filter(|r| r.success).collect();
    let n_ok = ok.len();
    let (rre, rte) = if n_ok == 0 {
        (None, None)
    } else {
        let k = n_ok as f64;
        (
            Some(ok.iter().map(|r| r.re_deg).sum::<f64>() / k),
            Some(ok.iter().map(|r| r.te_m).sum::<f64>() / k),
        )
    };
    Ok(Aggregate {
        rr: n_ok as f64 / results.len() as f64,
        rre_deg: rre,
        rte_m: rte,
        pairs: results.len(),
        successes: n_ok,
    })
}

/// Arithmetic mean of one RR per bucket.
pub fn mean_rr(bucketed_rr: &[f64], buckets: &DistanceBuckets) -> Result<f64, MetricsError> {
    if bucketed_rr.len() != buckets.len() || buckets.is_empty() {
        return Err(MetricsError::ArityMismatch { expected: buckets.len(), got: bucketed_rr.len() });
    }
    Ok(bucketed_rr.iter().sum::<f64>() / bucketed_rr.len() as f64)
}

/// mRR when some buckets received no pairs: averages the populated ones and
/// warns about the rest. `None` when no bucket is populated.
pub fn mean_rr_populated(bucketed_rr: &[Option<f64>], buckets: &DistanceBuckets) -> Result<Option<f64>, MetricsError> {
    if bucketed_rr.len() != buckets.len() {
        return Err(MetricsError::ArityMismatch { expected: buckets.len(), got: bucketed_rr.len() });
    }
    let populated: Vec<f64> = bucketed_rr.iter().flatten().copied().collect();
    for (rr, b) in bucketed_rr.iter().zip(&buckets.0) {
        if rr.is_none() {
            log::warn!("bucket [{}, {}] m has no pairs; mRR renormalized over populated buckets", b.lo, b.hi);
        }
    }
    if populated.is_empty() {
        return Ok(None);
    }
    Ok(Some(populated.iter().sum::<f64>() / populated.len() as f64))
}

/// Fraction of correspondences with `|R p + t - q| <= t_inlier`.
pub fn inlier_ratio<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    true_pose: &Pose<T>,
    corr: &[Correspondence],
    t_inlier: T,
) -> Result<f64, MetricsError> {
    if corr.is_empty() {
        return Err(MetricsError::EmptyCorrespondences);
    }
    let mut hits = 0usize;
    for c in corr {
        let (p, q) = match (src.points.get(c.src), dst.points.get(c.dst)) {
            (Some(p), Some(q)) => (p, q),
            _ => return Err(MetricsError::IndexOutOfRange(c.src, c.dst)),
        };
        if (true_pose.transform_point(p) - q).norm() <= t_inlier {
            hits += 1;
        }
    }
    Ok(hits as f64 / corr.len() as f64)
}
