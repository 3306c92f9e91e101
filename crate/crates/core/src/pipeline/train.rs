use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::corpus::PreparedSequence;
use super::PipelineError;
use crate::dataset::{bound_at, sample_progressive, PairSample};
use crate::features::{contrastive_loss_and_grad, sgd_step, write_checkpoint, Checkpoint, EmbeddingParams, NegativePools};
use crate::geom::Pose;
use crate::metrics::inlier_ratio;
use crate::selflabel::{ema_update, generate_labels, LabelSet, SimilarityMap};
use crate::Correspondence;

/// One line of the training report stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub bound: usize,
    pub attempted: usize,
    pub skipped: usize,
    /// pairs whose labels came from speculative registration
    pub extended: usize,
    /// mean inlier ratio of the filtered labeler matches; needs diagnostic poses
    pub labeler_ir: Option<f64>,
    /// fraction of speculative poses within the success thresholds; needs diagnostic poses
    pub speculative_rr: Option<f64>,
    pub loss_mean: Option<f64>,
    pub mean_positives: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    pub map: Option<&'a SimilarityMap>,
    /// ground-truth poses per sequence, used only for report diagnostics
    pub diagnostic_poses: Option<&'a [Vec<Pose<f64>>]>,
    /// directory for checkpoints and the report stream
    pub output: Option<&'a Path>,
    /// starting parameters; a fresh random student otherwise
    pub init: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub student: EmbeddingParams<f64>,
    pub labeler: EmbeddingParams<f64>,
    pub reports: Vec<EpochReport>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { student: self.student.clone(), labeler: self.labeler.clone() }
    }

    /// Reports as JSON lines.
    pub fn report_lines(&self) -> String {
        self.reports.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect()
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn cap<R: Rng + ?Sized>(corr: &[Correspondence], max: usize, rng: &mut R) -> Vec<Correspondence> {
    if corr.len() <= max {
        return corr.to_vec();
    }
    let mut idx = index::sample(rng, corr.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| corr[i]).collect()
}

/// Progressive self-labeled training. Ground truth is never consulted for
/// labels; `diagnostic_poses` only feeds the report's labeler statistics.
pub fn train(cfg: &RunConfig, data: &[PreparedSequence], opts: &TrainOptions) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    if data.is_empty() || data.iter().all(|s| s.len() < 2) {
        return Err(PipelineError::Data("training needs a sequence with at least two frames".into()));
    }
    if let Some(dir) = opts.output {
        fs::create_dir_all(dir)?;
        let report = dir.join("train_report.jsonl");
        if report.exists() {
            fs::remove_file(&report)?;
        }
    }
    let label_cfg = cfg.label_config();
    let usable: Vec<usize> = (0..data.len()).filter(|&i| data[i].len() >= 2).collect();
    let (mut student, mut labeler) = match &opts.init {
        Some(c) => {
            if c.student.k != cfg.k {
                return Err(PipelineError::Config(format!("checkpoint has k={}, config k={}", c.student.k, cfg.k)));
            }
            (c.student.clone(), c.labeler.clone())
        }
        None => {
            let s = EmbeddingParams::random(cfg.k, cfg.seed);
            (s.clone(), s)
        }
    };
    let mut reports = Vec::with_capacity(cfg.schedule.total_epochs);

    for epoch in 0..cfg.schedule.total_epochs {
        let started = Instant::now();
        if epoch > 0 {
            labeler = ema_update(&labeler, &student, &cfg.ema)?;
        }
        let bound = bound_at(&cfg.schedule, epoch)?;
        let mut rng = epoch_rng(cfg.seed, epoch);
        let pairs: Vec<(usize, PairSample)> = (0..cfg.pairs_per_epoch)
            .map(|_| {
                let s = usable[rng.random_range(0..usable.len())];
                sample_progressive(&data[s].store, bound, &mut rng).map(|p| (s, p))
            })
            .collect::<Result<_, _>>()?;

        let snapshot = &labeler;
        let labels: Vec<Option<LabelSet<f64>>> = pairs
            .par_iter()
            .map(|(s, p)| {
                let seq = &data[*s];
                generate_labels(&seq.frames[p.src_frame], &seq.frames[p.dst_frame], p.interval, snapshot, &label_cfg, opts.map)
                    .map_err(|e| log::debug!("epoch {epoch}: pair {}->{} skipped: {e}", p.src_frame, p.dst_frame))
                    .ok()
            })
            .collect();

        let mut skipped = 0usize;
        let mut extended = 0usize;
        let mut irs = Vec::new();
        let mut spec_ok = Vec::new();
        let mut losses = Vec::new();
        let mut positives = Vec::new();
        for ((s, p), label) in pairs.iter().zip(labels) {
            let Some(label) = label else {
                skipped += 1;
                continue;
            };
            let seq = &data[*s];
            let (src, dst) = (&seq.frames[p.src_frame], &seq.frames[p.dst_frame]);
            if p.interval > 1 {
                extended += 1;
                if let Some(poses) = opts.diagnostic_poses {
                    let truth = poses[*s][p.src_frame].then(&poses[*s][p.dst_frame].inverse());
                    if let Ok(ir) = inlier_ratio(&src.cloud, &dst.cloud, &truth, &label.filtered, 0.3) {
                        irs.push(ir);
                    }
                    let re = crate::geom::rotation_error(&truth.rotation, &label.est_pose.rotation);
                    let te = crate::geom::translation_error(&truth.translation, &label.est_pose.translation);
                    spec_ok.push(if re < 5.0 && te < 2.0 { 1.0 } else { 0.0 });
                }
            }
            let c_st = cap(&label.c_st, cfg.max_positives, &mut rng);
            let c_ts = cap(&label.c_ts, cfg.max_positives, &mut rng);
            let pools = NegativePools::sample(src.len(), dst.len(), cfg.loss.pool_size, &mut rng);
            match contrastive_loss_and_grad(&src.descriptors, &dst.descriptors, &student, &c_st, &c_ts, &pools, &cfg.loss) {
                Ok(out) => {
                    student = sgd_step(&student, &out.grad, &cfg.loss)?;
                    losses.push(out.loss);
                    positives.push((c_st.len() + c_ts.len()) as f64);
                }
                Err(e) => {
                    log::debug!("epoch {epoch}: no gradient for pair {}->{}: {e}", p.src_frame, p.dst_frame);
                    skipped += 1;
                }
            }
        }
        if !student.is_finite() {
            return Err(PipelineError::Data(format!("student parameters diverged at epoch {epoch}")));
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let report = EpochReport {
            epoch,
            bound,
            attempted: pairs.len(),
            skipped,
            extended,
            labeler_ir: mean(&irs),
            speculative_rr: mean(&spec_ok),
            loss_mean: mean(&losses),
            mean_positives: mean(&positives),
            wall_time_s: cfg.timing.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "epoch {epoch} B={bound} skipped {skipped}/{} loss {:?} labeler IR {:?}",
            report.attempted,
            report.loss_mean,
            report.labeler_ir
        );
        if let Some(dir) = opts.output {
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("train_report.jsonl"))?;
            writeln!(f, "{}", serde_json::to_string(&report).expect("report serializes"))?;
            let last = epoch + 1 == cfg.schedule.total_epochs;
            if last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
                let ck = Checkpoint { student: student.clone(), labeler: labeler.clone() };
                write_checkpoint(&dir.join(format!("checkpoint_{:04}.ckpt", epoch + 1)), &ck)?;
                if last {
                    write_checkpoint(&dir.join("final.ckpt"), &ck)?;
                }
            }
        }
        reports.push(report);
    }
    Ok(TrainOutcome { student, labeler, reports })
}
