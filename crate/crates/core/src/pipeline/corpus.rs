use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{CorpusConfig, PrepConfig};
use super::PipelineError;
use crate::dataset::{ingest, SequenceStore};
use crate::geom::{PointCloud, Pose};
use crate::selflabel::Frame;
use crate::sim::{emit_sequence, generate_scene, generate_trajectory, scan, Scene, SceneConfig, Trajectory, TrajectoryConfig};

/// Scene and trajectory of sequence `index` in a corpus seeded by `seed`.
pub fn sequence_layout(cfg: &CorpusConfig, seed: u64, index: usize) -> (Scene, Trajectory) {
    let seq_seed = seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
    let length = cfg.frames as f64 * cfg.speed;
    let margin = cfg.density.max_range + 10.0;
    let defaults = SceneConfig::default();
    let scene = generate_scene(&SceneConfig {
        seed: seq_seed,
        landmarks: (cfg.landmark_density * (length + 2.0 * margin) / 100.0).round() as usize,
        extent_min: [-margin, defaults.extent_min[1], defaults.extent_min[2]],
        extent_max: [length + margin, defaults.extent_max[1], defaults.extent_max[2]],
        ..defaults
    });
    let trajectory = generate_trajectory(&TrajectoryConfig {
        frames: cfg.frames,
        speed: cfg.speed,
        yaw_amplitude: cfg.yaw_amplitude,
        yaw_phase: rng.random_range(0.0..std::f64::consts::TAU),
        ..TrajectoryConfig::default()
    });
    (scene, trajectory)
}

/// In-memory sequence: scans in sensor frames and poses relative to frame 0.
pub fn simulate_sequence(cfg: &CorpusConfig, seed: u64, index: usize) -> (Vec<PointCloud<f64>>, Vec<Pose<f64>>) {
    let (scene, traj) = sequence_layout(cfg, seed, index);
    let origin_inv = traj.poses[0].inverse();
    let clouds = (0..traj.poses.len())
        .into_par_iter()
        .map(|i| {
            // round through f32 exactly like the on-disk format
            let c: PointCloud<f32> = scan(&scene, &traj.poses[i], &cfg.density, scene.seed, i);
            c.cast()
        })
        .collect();
    let poses = traj.poses.iter().map(|p| p.then(&origin_inv)).collect();
    (clouds, poses)
}

/// Writes `seq_NN/velodyne/*.bin` and `seq_NN/poses.txt` for every sequence.
pub fn simulate_corpus(cfg: &CorpusConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if cfg.sequences == 0 || cfg.frames == 0 {
        return Err(PipelineError::Config("sequences and frames must be positive".into()));
    }
    (0..cfg.sequences)
        .map(|i| {
            let (scene, traj) = sequence_layout(cfg, seed, i);
            let out = dir.join(format!("seq_{i:02}"));
            emit_sequence(&scene, &traj, &cfg.density, scene.seed, &out)?;
            Ok(out)
        })
        .collect()
}

/// Sequence directories under `root`: `root` itself when it holds a
/// `velodyne` directory, otherwise every such child in name order.
pub fn discover_sequences(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if root.join("velodyne").is_dir() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = std::fs::read_dir(root).map_err(|e| PipelineError::Data(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("velodyne").is_dir()).collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Data(format!("no sequence directories under {}", root.display())));
    }
    Ok(dirs)
}

pub fn load_corpus(root: &Path, stride: usize) -> Result<Vec<SequenceStore>, PipelineError> {
    discover_sequences(root)?.iter().map(|d| ingest(d, stride).map_err(PipelineError::from)).collect()
}

/// A sequence whose frames are downsampled and described once up front.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    pub store: SequenceStore,
    pub frames: Vec<Arc<Frame<f64>>>,
}

impl PreparedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn prepare_cloud(cloud: PointCloud<f64>, prep: &PrepConfig) -> Frame<f64> {
    let cloud = if prep.voxel > 0.0 { cloud.voxel_downsample(prep.voxel) } else { cloud };
    Frame::new(cloud, &prep.descriptor)
}

pub fn prepare(store: SequenceStore, prep: &PrepConfig) -> Result<PreparedSequence, PipelineError> {
    let frames = (0..store.len())
        .into_par_iter()
        .map(|i| Ok(Arc::new(prepare_cloud(store.load_frame(i)?, prep))))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    if let Some(i) = frames.iter().position(|f| f.is_empty()) {
        return Err(PipelineError::Data(format!("frame {i} of {} is empty", store.source.display())));
    }
    Ok(PreparedSequence { store, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DensityModel;

    fn small() -> CorpusConfig {
        CorpusConfig {
            sequences: 2,
            frames: 6,
            density: DensityModel { alpha: 300.0, ..DensityModel::default() },
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn disk_and_memory_sequences_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let dirs = simulate_corpus(&cfg, 5, dir.path()).unwrap();
        assert_eq!(dirs.len(), 2);
        assert_eq!(discover_sequences(dir.path()).unwrap(), dirs);
        let stores = load_corpus(dir.path(), 3).unwrap();
        let (clouds, poses) = simulate_sequence(&cfg, 5, 1);
        assert_eq!(stores[1].len(), 6);
        for i in 0..6 {
            assert_eq!(stores[1].load_frame(i).unwrap().points, clouds[i].points);
            let p = stores[1].pose(i).unwrap();
            assert!((p.translation - poses[i].translation).norm() < 1e-5);
        }
        assert_eq!(poses[0], Pose::identity());
    }

    #[test]
    fn prepared_frames_are_downsampled() {
        let cfg = small();
        let (clouds, poses) = simulate_sequence(&cfg, 1, 0);
        let raw = clouds[0].len();
        let prep = prepare(SequenceStore::from_memory(clouds, Some(poses)), &PrepConfig { voxel: 1.0, ..Default::default() })
            .unwrap();
        assert!(prep.frames[0].len() <= raw);
        assert_eq!(prep.frames[0].descriptors.len(), prep.frames[0].len());
    }

    #[test]
    fn missing_corpus_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(discover_sequences(dir.path()), Err(PipelineError::Data(_))));
    }
}
