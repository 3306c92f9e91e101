use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::corpus::{prepare_cloud, PreparedSequence};
use super::PipelineError;
use crate::dataset::{pairs_in_range, sample_progressive, PairSample};
use crate::features::EmbeddingParams;
use crate::geom::{PointCloud, Pose};
use crate::metrics::{aggregate, evaluate_pair, inlier_ratio, mean_rr_populated, DistanceBuckets, MetricThresholds, RegistrationResult};
use crate::scpcr::{Estimator, Registration};
use crate::selflabel::{accumulate_similarity, labeler_matches, SimilarityMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    pub successes: usize,
    pub rr: Option<f64>,
    pub rre_deg: Option<f64>,
    pub rte_cm: Option<f64>,
    /// mean inlier ratio of the feature matches
    pub ir: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rr: Option<f64>,
    pub rre_deg: Option<f64>,
    pub rte_cm: Option<f64>,
    pub mrr: Option<f64>,
    pub ir: Option<f64>,
    pub buckets: Vec<BucketReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("lo,hi,pairs,successes,rr,rre_deg,rte_cm,ir\n");
        for b in &self.buckets {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                b.lo,
                b.hi,
                b.pairs,
                b.successes,
                opt(b.rr),
                opt(b.rre_deg),
                opt(b.rte_cm),
                opt(b.ir)
            )
            .expect("string write");
        }
        out
    }

    pub fn bucket(&self, lo: f64, hi: f64) -> Option<&BucketReport> {
        self.buckets.iter().find(|b| b.lo == lo && b.hi == hi)
    }
}

/// Outcome of registering one evaluation pair.
struct PairOutcome {
    result: RegistrationResult,
    ir: Option<f64>,
}

fn register_pair(
    params: &EmbeddingParams<f64>,
    seq: &PreparedSequence,
    pair: &PairSample,
    estimator: &Estimator,
    keypoints: usize,
    pair_id: String,
) -> Result<PairOutcome, PipelineError> {
    let truth = pair.true_pose.ok_or_else(|| PipelineError::Data("evaluation pair lacks a pose".into()))?;
    let (src, dst) = (&seq.frames[pair.src_frame], &seq.frames[pair.dst_frame]);
    let thresholds = MetricThresholds::default();
    let (corr, ..) = labeler_matches(src, dst, params, keypoints)?;
    let ir = inlier_ratio(&src.cloud, &dst.cloud, &truth, &corr, thresholds.t_inlier).ok();
    let result = match estimator.estimate(&corr, &src.cloud, &dst.cloud) {
        Ok(reg) => evaluate_pair(&pair_id, &truth, &reg.pose, &thresholds),
        Err(_) => {
            // a failed estimate counts against recall
            let mut r = evaluate_pair(&pair_id, &truth, &Pose::identity(), &thresholds);
            r.success = false;
            r
        }
    };
    Ok(PairOutcome { result, ir })
}

/// Registration recall per distance bucket on pairs drawn without
/// replacement from every sequence, using `params` as the extractor.
pub fn evaluate(
    params: &EmbeddingParams<f64>,
    data: &[PreparedSequence],
    buckets: &DistanceBuckets,
    estimator: &Estimator,
    cfg: &RunConfig,
) -> Result<EvalReport, PipelineError> {
    if data.is_empty() {
        return Err(PipelineError::Data("no evaluation sequences".into()));
    }
    let mut bucket_reports = Vec::with_capacity(buckets.len());
    let mut all = Vec::new();
    let mut all_ir = Vec::new();
    for (b, bucket) in buckets.0.iter().enumerate() {
        let mut candidates: Vec<(usize, PairSample)> = Vec::new();
        for (s, seq) in data.iter().enumerate() {
            candidates.extend(pairs_in_range(&seq.store, bucket.lo, bucket.hi)?.into_iter().map(|p| (s, p)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64 + 1);
        let mut picked = index::sample(&mut rng, candidates.len(), cfg.eval_pairs.min(candidates.len())).into_vec();
        picked.sort_unstable();
        let outcomes = picked
            .par_iter()
            .map(|&i| {
                let (s, p) = &candidates[i];
                register_pair(params, &data[*s], p, estimator, cfg.keypoints, format!("{s}:{}-{}", p.src_frame, p.dst_frame))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let results: Vec<RegistrationResult> = outcomes.iter().map(|o| o.result.clone()).collect();
        let irs: Vec<f64> = outcomes.iter().filter_map(|o| o.ir).collect();
        let agg = aggregate(&results).ok();
        bucket_reports.push(BucketReport {
            lo: bucket.lo,
            hi: bucket.hi,
            pairs: results.len(),
            successes: agg.map_or(0, |a| a.successes),
            rr: agg.map(|a| a.rr),
            rre_deg: agg.and_then(|a| a.rre_deg),
            rte_cm: agg.and_then(|a| a.rte_m).map(|m| m * 100.0),
            ir: (!irs.is_empty()).then(|| irs.iter().sum::<f64>() / irs.len() as f64),
        });
        all.extend(results);
        all_ir.extend(irs);
    }
    let overall = aggregate(&all).ok();
    let per_bucket: Vec<Option<f64>> = bucket_reports.iter().map(|b| b.rr).collect();
    Ok(EvalReport {
        rr: overall.map(|a| a.rr),
        rre_deg: overall.and_then(|a| a.rre_deg),
        rte_cm: overall.and_then(|a| a.rte_m).map(|m| m * 100.0),
        mrr: mean_rr_populated(&per_bucket, buckets).map_err(|e| PipelineError::Data(e.to_string()))?,
        ir: (!all_ir.is_empty()).then(|| all_ir.iter().sum::<f64>() / all_ir.len() as f64),
        buckets: bucket_reports,
    })
}

/// Similarity map of the labeler's features on true correspondences, over
/// `pairs` pairs drawn with frame intervals up to the schedule's final bound.
pub fn build_similarity_map(
    labeler: &EmbeddingParams<f64>,
    data: &[PreparedSequence],
    cfg: &RunConfig,
    pairs: usize,
) -> Result<SimilarityMap, PipelineError> {
    if data.iter().any(|s| !s.store.has_poses()) {
        return Err(PipelineError::Data("building a similarity map needs ground-truth poses".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let drawn: Vec<(usize, PairSample)> = (0..pairs)
        .map(|n| {
            let s = n % data.len();
            sample_progressive(&data[s].store, cfg.schedule.b_end, &mut rng).map(|p| (s, p))
        })
        .collect::<Result<_, _>>()?;
    let maps: Vec<SimilarityMap> = drawn
        .par_iter()
        .map(|(s, p)| {
            let seq = &data[*s];
            let truth = seq.store.relative_pose(p.src_frame, p.dst_frame).expect("poses checked above");
            let mut m = SimilarityMap::default();
            accumulate_similarity(
                &mut m,
                &seq.frames[p.src_frame],
                &seq.frames[p.dst_frame],
                &truth,
                labeler,
                cfg.map_tolerance,
                cfg.keypoints,
            );
            m
        })
        .collect();
    let mut map = SimilarityMap::default();
    for m in &maps {
        map.merge(m);
    }
    if map.populated() == 0 {
        return Err(PipelineError::Data("no true correspondences found for the similarity map".into()));
    }
    Ok(map)
}

/// Registers two raw scans with the given extractor.
pub fn register_frames(
    src: PointCloud<f64>,
    dst: PointCloud<f64>,
    params: &EmbeddingParams<f64>,
    cfg: &RunConfig,
) -> Result<Registration<f64>, PipelineError> {
    let (a, b) = (prepare_cloud(src, &cfg.prep), prepare_cloud(dst, &cfg.prep));
    if a.is_empty() || b.is_empty() {
        return Err(PipelineError::Data("empty scan".into()));
    }
    let (corr, ..) = labeler_matches(&a, &b, params, cfg.keypoints)?;
    let reg = cfg.estimator_of(cfg.eval_estimator).estimate(&corr, &a.cloud, &b.cloud)?;
    Ok(reg)
}
