//! Sequence storage and ingestion, plus the two pair-sampling regimes:
//! progressive (frame-interval bound) and traditional (metric distance).
//!
//! On-disk layout of a sequence directory:
//!
//! ```text
//! <dir>/velodyne/000000.bin   little-endian f32, (x, y, z[, pad...]) per point
//! <dir>/poses.txt             one row-major 3x4 [R|t] per frame (optional)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point3, PointCloud, Pose};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed at byte {offset}: {reason}")]
    MalformedFile { path: PathBuf, offset: u64, reason: String },
    #[error("sequence has {frames} frames, need at least {needed}")]
    SequenceTooShort { frames: usize, needed: usize },
    #[error("no frame pair with LiDAR distance in [{d_min}, {d_max}] m")]
    NoPairInRange { d_min: f64, d_max: f64 },
    #[error("epoch {epoch} outside [0, {total})")]
    OutOfRange { epoch: usize, total: usize },
    #[error("sequence has no ground-truth poses")]
    MissingPoses,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

impl DatasetError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Writes `x y z` triplets as little-endian f32, no header.
pub fn write_cloud_bin<T: Real>(path: &Path, cloud: &PointCloud<T>) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z] {
            w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(|e| DatasetError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

/// Reads a headerless f32 point file with `stride` floats per point, keeping
/// the first three of each record.
pub fn read_cloud_bin<T: Real>(path: &Path, stride: usize, frame_id: usize) -> Result<PointCloud<T>, DatasetError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DatasetError::io(path, e))?;
    check_record_layout(path, bytes.len() as u64, stride)?;
    let record = stride * 4;
    let points = bytes
        .chunks_exact(record)
        .map(|rec| {
            let f = |k: usize| f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]]);
            Point3::new(T::lit(f(0) as f64), T::lit(f(1) as f64), T::lit(f(2) as f64))
        })
        .collect();
    Ok(PointCloud::new(points, frame_id))
}

fn check_record_layout(path: &Path, len: u64, stride: usize) -> Result<(), DatasetError> {
    if stride < 3 {
        return Err(DatasetError::MalformedFile { path: path.to_path_buf(), offset: 0, reason: format!("stride {stride} < 3") });
    }
    let record = (stride * 4) as u64;
    if len % record != 0 {
        return Err(DatasetError::MalformedFile {
            path: path.to_path_buf(),
            offset: len - len % record,
            reason: format!("trailing {} bytes do not form a {stride}-float record", len % record),
        });
    }
    Ok(())
}

pub fn write_poses(path: &Path, poses: &[Pose<f64>]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in poses {
        let row: Vec<String> = p.to_row_major_3x4().iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(" ")).map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose<f64>>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut poses = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        let line_len = line.len() as u64 + 1;
        if line.trim().is_empty() {
            offset += line_len;
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| DatasetError::MalformedFile { path: path.to_path_buf(), offset, reason: e.to_string() })?;
        if vals.len() != 12 {
            return Err(DatasetError::MalformedFile {
                path: path.to_path_buf(),
                offset,
                reason: format!("expected 12 values, found {}", vals.len()),
            });
        }
        let mut arr = [0.0; 12];
        arr.copy_from_slice(&vals);
        poses.push(Pose::from_row_major_3x4(&arr));
        offset += line_len;
    }
    Ok(poses)
}

#[derive(Debug, Clone)]
pub enum FrameSource {
    File { path: PathBuf, stride: usize },
    Memory(Arc<PointCloud<f64>>),
}

/// Ordered frames of one sequence with optional ground-truth poses.
///
/// Pose lookups go through [`SequenceStore::pose`], which counts every
/// access so callers can verify that a code path never touched labels.
#[derive(Debug, Clone)]
pub struct SequenceStore {
    frames: Vec<FrameSource>,
    poses: Option<Vec<Pose<f64>>>,
    pub source: PathBuf,
    pose_reads: Arc<AtomicUsize>,
}

impl SequenceStore {
    pub fn from_memory(clouds: Vec<PointCloud<f64>>, poses: Option<Vec<Pose<f64>>>) -> Self {
        Self {
            frames: clouds.into_iter().map(|c| FrameSource::Memory(Arc::new(c))).collect(),
            poses,
            source: PathBuf::new(),
            pose_reads: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn has_poses(&self) -> bool {
        self.poses.is_some()
    }

    pub fn load_frame(&self, i: usize) -> Result<PointCloud<f64>, DatasetError> {
        match &self.frames[i] {
            FrameSource::File { path, stride } => read_cloud_bin(path, *stride, i),
            FrameSource::Memory(c) => Ok((**c).clone()),
        }
    }

    /// Pose of frame `i` in the first frame's coordinates.
    pub fn pose(&self, i: usize) -> Option<Pose<f64>> {
        self.pose_reads.fetch_add(1, Ordering::Relaxed);
        self.poses.as_ref().and_then(|p| p.get(i).copied())
    }

    /// Transform mapping frame `src` coordinates into frame `dst` coordinates.
    pub fn relative_pose(&self, src: usize, dst: usize) -> Option<Pose<f64>> {
        let a = self.pose(src)?;
        let b = self.pose(dst)?;
        Some(a.then(&b.inverse()))
    }

    /// Number of pose lookups performed through this store or its clones.
    pub fn pose_reads(&self) -> usize {
        self.pose_reads.load(Ordering::Relaxed)
    }

    pub fn without_poses(&self) -> Self {
        Self { poses: None, pose_reads: Arc::new(AtomicUsize::new(0)), ..self.clone() }
    }
}

/// Opens a sequence directory. Frames are lazy handles; the pose file is
/// loaded when present next to the `velodyne` directory.
pub fn ingest(path: &Path, stride: usize) -> Result<SequenceStore, DatasetError> {
    let velodyne = path.join("velodyne");
    let dir = if velodyne.is_dir() { velodyne } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| DatasetError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    for f in files {
        let len = std::fs::metadata(&f).map_err(|e| DatasetError::io(&f, e))?.len();
        check_record_layout(&f, len, stride)?;
        frames.push(FrameSource::File { path: f, stride });
    }
    let pose_path = path.join("poses.txt");
    let poses = if pose_path.is_file() {
        let poses = read_poses(&pose_path)?;
        if poses.len() != frames.len() {
            return Err(DatasetError::MalformedFile {
                path: pose_path,
                offset: 0,
                reason: format!("{} poses for {} frames", poses.len(), frames.len()),
            });
        }
        Some(poses)
    } else {
        None
    };
    Ok(SequenceStore { frames, poses, source: path.to_path_buf(), pose_reads: Arc::new(AtomicUsize::new(0)) })
}

/// Growth of the frame-interval bound `B` over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSchedule {
    pub b_start: usize,
    pub b_end: usize,
    pub total_epochs: usize,
    pub step_size: usize,
}

impl Default for IntervalSchedule {
    fn default() -> Self {
        Self { b_start: 1, b_end: 30, total_epochs: 200, step_size: 1 }
    }
}

impl IntervalSchedule {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.b_start < 1 || self.b_start > self.b_end {
            return Err(DatasetError::InvalidSchedule(format!("need 1 <= b_start <= b_end, got {} and {}", self.b_start, self.b_end)));
        }
        if self.step_size < 1 {
            return Err(DatasetError::InvalidSchedule("step_size must be >= 1".into()));
        }
        if self.total_epochs < self.span() {
            return Err(DatasetError::InvalidSchedule(format!(
                "{} epochs cannot hold {} unit extensions",
                self.total_epochs,
                self.span()
            )));
        }
        Ok(())
    }

    /// Number of bound values on the unit-step ramp.
    pub fn span(&self) -> usize {
        self.b_end - self.b_start + 1
    }
}

/// `B(e) = min(b_end, b_start + s · ⌊u(e) / s⌋)` with the unit ramp
/// `u(e) = ⌊e · (b_end − b_start + 1) / total_epochs⌋` and step size `s`.
///
/// With the defaults this is `min(30, 1 + ⌊30e/200⌋)`: one unit step about
/// every 6.7 epochs, reaching 30 before the last epoch. Larger steps follow
/// the same ramp rounded down to multiples of `s`, so the extension rate is
/// shared and only the granularity differs; a coarse staircase may stop
/// short of `b_end`.
pub fn bound_at(schedule: &IntervalSchedule, epoch: usize) -> Result<usize, DatasetError> {
    if epoch >= schedule.total_epochs {
        return Err(DatasetError::OutOfRange { epoch, total: schedule.total_epochs });
    }
    let unit = epoch * schedule.span() / schedule.total_epochs;
    let step = schedule.step_size.max(1);
    Ok((schedule.b_start + step * (unit / step)).min(schedule.b_end))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub src_frame: usize,
    pub dst_frame: usize,
    pub interval: usize,
    pub true_pose: Option<Pose<f64>>,
}

/// Uniform interval in `[1, B]` (clamped to what the sequence can hold) and
/// a uniform source frame. Never touches poses.
pub fn sample_progressive<R: Rng + ?Sized>(store: &SequenceStore, bound: usize, rng: &mut R) -> Result<PairSample, DatasetError> {
    let n = store.len();
    if n < 2 {
        return Err(DatasetError::SequenceTooShort { frames: n, needed: 2 });
    }
    let b = bound.max(1).min(n - 1);
    let interval = rng.random_range(1..=b);
    let src = rng.random_range(0..n - interval);
    Ok(PairSample { src_frame: src, dst_frame: src + interval, interval, true_pose: None })
}

/// All forward pairs whose LiDAR centers are `[d_min, d_max]` apart.
pub fn pairs_in_range(store: &SequenceStore, d_min: f64, d_max: f64) -> Result<Vec<PairSample>, DatasetError> {
    if !store.has_poses() {
        return Err(DatasetError::MissingPoses);
    }
    let poses: Vec<Pose<f64>> = (0..store.len()).filter_map(|i| store.pose(i)).collect();
    let mut out = Vec::new();
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            let d = (poses[j].translation - poses[i].translation).norm();
            if d >= d_min && d <= d_max {
                let rel = poses[i].then(&poses[j].inverse());
                out.push(PairSample { src_frame: i, dst_frame: j, interval: j - i, true_pose: Some(rel) });
            }
        }
    }
    Ok(out)
}

pub fn sample_traditional<R: Rng + ?Sized>(
    store: &SequenceStore,
    d_min: f64,
    d_max: f64,
    rng: &mut R,
) -> Result<PairSample, DatasetError> {
    let pairs = pairs_in_range(store, d_min, d_max)?;
    if pairs.is_empty() {
        return Err(DatasetError::NoPairInRange { d_min, d_max });
    }
    Ok(pairs[rng.random_range(0..pairs.len())])
}

/// Up to `count` distinct in-range pairs, drawn without replacement.
pub fn sample_traditional_set<R: Rng + ?Sized>(
    store: &SequenceStore,
    d_min: f64,
    d_max: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PairSample>, DatasetError> {
    let pairs = pairs_in_range(store, d_min, d_max)?;
    if pairs.is_empty() {
        return Err(DatasetError::NoPairInRange { d_min, d_max });
    }
    let picked = rand::seq::index::sample(rng, pairs.len(), count.min(pairs.len()));
    let mut idx: Vec<usize> = picked.into_iter().collect();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pairs[i]).collect())
}
