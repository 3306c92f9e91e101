//! Synthetic LiDAR sequences under an inverse-square scan density model.
//!
//! A scene is a set of planar rectangular surface patches. Scanning a patch
//! whose center lies at range `d` yields `Poisson(alpha / d² · area)` points
//! spread uniformly over the patch with isotropic Gaussian jitter; output
//! points are expressed in the sensor frame. There is no occlusion or beam
//! structure.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{write_cloud_bin, write_poses, DatasetError};
use crate::geom::{Point3, PointCloud, Pose};
use crate::kdtree::KdTree;
use crate::real::Real;
use crate::Correspondence;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("point coincides with a LiDAR center")]
    CoincidentPoint,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Io(#[from] DatasetError),
}

/// Rectangular patch `center + a·u + b·v`, `|a| <= half_extent[0]`,
/// `|b| <= half_extent[1]`, with `v = normal × u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub center: [f64; 3],
    pub half_extent: [f64; 2],
    pub normal: [f64; 3],
    pub tangent: [f64; 3],
}

impl Landmark {
    pub fn new(center: Vector3<f64>, half_extent: [f64; 2], normal: Vector3<f64>, tangent: Vector3<f64>) -> Self {
        let n = normal.normalize();
        // make the tangent exactly orthogonal to the normal
        let u = (tangent - n * n.dot(&tangent)).normalize();
        Self { center: center.into(), half_extent, normal: n.into(), tangent: u.into() }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extent[0] * self.half_extent[1]
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    fn axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = Vector3::from(self.normal);
        let u = Vector3::from(self.tangent);
        (u, n.cross(&u))
    }

    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let (u, v) = self.axes();
        let c = self.center();
        let (a, b) = (self.half_extent[0], self.half_extent[1]);
        [c + u * a + v * b, c + u * a - v * b, c - u * a + v * b, c - u * a - v * b]
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let (u, v) = self.axes();
        let a = rng.random_range(-self.half_extent[0]..=self.half_extent[0]);
        let b = rng.random_range(-self.half_extent[1]..=self.half_extent[1]);
        self.center() + u * a + v * b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub landmarks: Vec<Landmark>,
    pub extent_min: [f64; 3],
    pub extent_max: [f64; 3],
    pub seed: u64,
}

impl Scene {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.extent_min[k] && p[k] <= self.extent_max[k])
    }
}

/// Scene layout parameters. Objects are placed outside a clear corridor
/// `|y| < corridor_half_width` along the x axis, where the sensor drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub landmarks: usize,
    pub extent_min: [f64; 3],
    pub extent_max: [f64; 3],
    /// z of the (unscanned) ground plane, sensor height below origin
    pub ground_z: f64,
    pub corridor_half_width: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            landmarks: 500,
            extent_min: [-90.0, -60.0, -1.7],
            extent_max: [140.0, 60.0, 8.3],
            ground_z: -1.7,
            corridor_half_width: 4.0,
        }
    }
}

pub fn generate_scene(cfg: &SceneConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut landmarks = Vec::with_capacity(cfg.landmarks);
    let lo = Vector3::from(cfg.extent_min);
    let hi = Vector3::from(cfg.extent_max);
    let ground = cfg.ground_z.max(lo.z);
    let mut attempts = 0usize;
    while landmarks.len() < cfg.landmarks && attempts < cfg.landmarks * 200 + 1000 {
        attempts += 1;
        let x = rng.random_range(lo.x..=hi.x);
        let y = rng.random_range(lo.y..=hi.y);
        if y.abs() < cfg.corridor_half_width && lo.y < -cfg.corridor_half_width && hi.y > cfg.corridor_half_width {
            continue;
        }
        let object = random_object(&mut rng, x, y, ground);
        for lm in object {
            if landmarks.len() >= cfg.landmarks {
                break;
            }
            if lm.corners().iter().all(|c| (0..3).all(|k| c[k] >= lo[k] && c[k] <= hi[k])) {
                landmarks.push(lm);
            }
        }
    }
    Scene { landmarks, extent_min: cfg.extent_min, extent_max: cfg.extent_max, seed: cfg.seed }
}

/// One street-side object: a facade, pole, box, slab or tilted panel.
fn random_object(rng: &mut ChaCha8Rng, x: f64, y: f64, ground: f64) -> Vec<Landmark> {
    let up = Vector3::z();
    let yaw: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let horiz = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let side = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    match rng.random_range(0..100) {
        0..=24 => {
            // facade: wide vertical wall standing on the ground
            let hu = rng.random_range(1.5..5.0);
            let hv = rng.random_range(1.0..4.0);
            vec![Landmark::new(Vector3::new(x, y, ground + hv), [hu, hv], side, horiz)]
        }
        25..=44 => {
            // pole with an optional sign panel near the top
            let hv = rng.random_range(1.5..4.0);
            let hu = rng.random_range(0.08..0.2);
            let mut out = vec![Landmark::new(Vector3::new(x, y, ground + hv), [hu, hv], side, horiz)];
            if rng.random_bool(0.5) {
                let s = rng.random_range(0.3..0.8);
                let top = ground + 2.0 * hv - s;
                out.push(Landmark::new(Vector3::new(x, y, top) + side * 0.15, [s, s * 0.7], side, horiz));
            }
            out
        }
        45..=69 => {
            // box: two orthogonal sides and a lid
            let a = rng.random_range(0.6..2.2);
            let b = rng.random_range(0.5..1.5);
            let h = rng.random_range(0.4..1.2);
            let c = Vector3::new(x, y, ground + h);
            vec![
                Landmark::new(c + side * b, [a, h], side, horiz),
                Landmark::new(c + horiz * a, [b, h], horiz, side),
                Landmark::new(c + up * h, [a, b], up, horiz),
            ]
        }
        70..=84 => {
            // raised horizontal slab
            let hu = rng.random_range(0.5..2.5);
            let hv = rng.random_range(0.5..2.0);
            let z = ground + rng.random_range(0.8..5.0);
            vec![Landmark::new(Vector3::new(x, y, z), [hu, hv], up, horiz)]
        }
        _ => {
            // tilted panel
            let tilt: f64 = rng.random_range(0.3..1.2);
            let n = side * tilt.cos() + up * tilt.sin();
            let hu = rng.random_range(0.5..2.0);
            let hv = rng.random_range(0.5..1.5);
            let z = ground + hv + rng.random_range(0.0..3.0);
            vec![Landmark::new(Vector3::new(x, y, z), [hu, hv], n, horiz)]
        }
    }
}

/// Scan density `alpha / d²` inside `[min_range, max_range]`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    /// points · m²
    pub alpha: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// standard deviation of the isotropic surface jitter, meters
    pub jitter: f64,
}

impl Default for DensityModel {
    fn default() -> Self {
        Self { alpha: 600.0, min_range: 2.0, max_range: 80.0, jitter: 0.02 }
    }
}

impl DensityModel {
    pub fn density(&self, d: f64) -> f64 {
        if d < self.min_range || d > self.max_range || d <= 0.0 {
            0.0
        } else {
            self.alpha / (d * d)
        }
    }

    pub fn expected_count(&self, landmark: &Landmark, sensor: &Vector3<f64>) -> f64 {
        self.density((landmark.center() - sensor).norm()) * landmark.area()
    }
}

/// Independent RNG stream per `(seed, frame)`.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// Scans `scene` from `sensor_pose` (sensor frame to world); points are
/// returned in the sensor frame.
pub fn scan<T: Real>(scene: &Scene, sensor_pose: &Pose<f64>, model: &DensityModel, seed: u64, frame_id: usize) -> PointCloud<T> {
    let mut rng = frame_rng(seed, frame_id as u64);
    let jitter = Normal::new(0.0, model.jitter.max(0.0)).expect("jitter");
    let sensor = sensor_pose.translation;
    let rt = sensor_pose.rotation.transpose();
    let mut points = Vec::new();
    for lm in &scene.landmarks {
        let lambda = model.expected_count(lm, &sensor);
        if lambda <= 0.0 {
            continue;
        }
        let count = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize;
        for _ in 0..count {
            let mut p = lm.sample(&mut rng);
            if model.jitter > 0.0 {
                p += Vector3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng));
            }
            let local = rt * (p - sensor);
            let r = local.norm();
            if r < model.min_range || r > model.max_range {
                continue;
            }
            points.push(Point3::new(T::lit(local.x), T::lit(local.y), T::lit(local.z)));
        }
    }
    PointCloud::new(points, frame_id)
}

/// Density change at `p` when the LiDAR moves from `old_center` to `new_center`.
pub fn delta_density<T: Real>(p: &Point3<T>, old_center: &Point3<T>, new_center: &Point3<T>, alpha: T) -> Result<T, SimError> {
    let d_old = (p - old_center).norm_squared();
    let d_new = (p - new_center).norm_squared();
    if d_old == T::zero() || d_new == T::zero() {
        return Err(SimError::CoincidentPoint);
    }
    Ok(alpha / d_new - alpha / d_old)
}

/// Whether a descriptor of radius `radius` at ranges `d1` and `d2` from the
/// two sensors sees statistically the same neighbourhood: the expected
/// neighbour-count change `A·|σ(d1) − σ(d2)|` stays within the Poisson
/// noise `sqrt(A·σ̄)`, with `A = π·radius²` and `σ̄` the mean density.
pub fn density_stable(model: &DensityModel, radius: f64, d1: f64, d2: f64) -> bool {
    let (s1, s2) = (model.density(d1), model.density(d2));
    if s1 == 0.0 || s2 == 0.0 {
        return false;
    }
    let area = std::f64::consts::PI * radius * radius;
    area * (s1 - s2).abs() <= (area * 0.5 * (s1 + s2)).sqrt()
}

/// A correspondence with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedCorrespondence {
    pub corr: Correspondence,
    pub correct: bool,
}

/// Candidate matches for the `keypoints` evenly spaced source points whose
/// aligned position has a target neighbour within `tolerance`. A candidate
/// whose local density is stable across the two viewpoints keeps its true
/// partner; an unstable one is paired with a uniformly drawn target point at
/// least `1 m` from the true location.
#[allow(clippy::too_many_arguments)]
pub fn plant_density_mix<T: Real, R: Rng + ?Sized>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    dst_tree: &KdTree<T>,
    truth: &Pose<T>,
    model: &DensityModel,
    radius: f64,
    keypoints: usize,
    tolerance: f64,
    rng: &mut R,
) -> Vec<PlantedCorrespondence> {
    let n = src.len();
    let count = keypoints.min(n);
    let mut out = Vec::new();
    for i in (0..count).map(|c| c * n / count) {
        let aligned = truth.transform_point(&src.points[i]);
        let Some((j, dist2)) = dst_tree.nearest(&aligned) else { continue };
        if dist2.as_f64() > tolerance * tolerance {
            continue;
        }
        let d1 = src.points[i].coords.norm().as_f64();
        let d2 = dst.points[j].coords.norm().as_f64();
        if density_stable(model, radius, d1, d2) {
            out.push(PlantedCorrespondence { corr: Correspondence::new(i, j), correct: true });
            continue;
        }
        for _ in 0..100 {
            let k = rng.random_range(0..dst.len());
            if (dst.points[k] - aligned).norm().as_f64() >= 1.0 {
                out.push(PlantedCorrespondence { corr: Correspondence::new(i, k), correct: false });
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose<f64>>,
    /// seconds
    pub frame_period: f64,
    /// meters per frame
    pub speed: Vec<f64>,
}

impl Trajectory {
    pub fn max_step(&self) -> f64 {
        self.poses.windows(2).map(|w| (w[1].translation - w[0].translation).norm()).fold(0.0, f64::max)
    }
}

/// Forward-driving trajectory along +x with a sinusoidal heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub frames: usize,
    /// meters per frame, clamped to `max_step`
    pub speed: f64,
    pub max_step: f64,
    /// radians
    pub yaw_amplitude: f64,
    /// frames per heading oscillation
    pub yaw_period: f64,
    pub yaw_phase: f64,
    pub start: [f64; 3],
    pub frame_period: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            frames: 31,
            speed: 1.7,
            max_step: 5.0,
            yaw_amplitude: 0.0,
            yaw_period: 60.0,
            yaw_phase: 0.0,
            start: [0.0, 0.0, 0.0],
            frame_period: 0.1,
        }
    }
}

pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Trajectory {
    let step = cfg.speed.min(cfg.max_step).max(0.0);
    let mut pos = Vector3::from(cfg.start);
    let mut poses = Vec::with_capacity(cfg.frames);
    let heading = |i: f64| cfg.yaw_amplitude * (2.0 * std::f64::consts::PI * i / cfg.yaw_period + cfg.yaw_phase).sin();
    for i in 0..cfg.frames {
        let yaw = heading(i as f64);
        poses.push(Pose::from_yaw(yaw, pos));
        // advance along the mean heading of the segment
        let seg = 0.5 * (yaw + heading(i as f64 + 1.0));
        pos += Vector3::new(seg.cos(), seg.sin(), 0.0) * step;
    }
    Trajectory { poses, frame_period: cfg.frame_period, speed: vec![step; cfg.frames] }
}

/// Paths produced by [`emit_sequence`].
#[derive(Debug, Clone)]
pub struct EmittedSequence {
    pub root: PathBuf,
    pub frames: Vec<PathBuf>,
    pub pose_file: PathBuf,
}

/// Writes `velodyne/NNNNNN.bin` per frame and `poses.txt` under `dir`.
/// Pose `i` maps frame `i` coordinates into frame 0 coordinates.
pub fn emit_sequence(
    scene: &Scene,
    trajectory: &Trajectory,
    model: &DensityModel,
    seed: u64,
    dir: &Path,
) -> Result<EmittedSequence, SimError> {
    if trajectory.poses.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    let velodyne = dir.join("velodyne");
    std::fs::create_dir_all(&velodyne).map_err(|e| DatasetError::io(&velodyne, e))?;
    let origin_inv = trajectory.poses[0].inverse();
    let mut frames = Vec::with_capacity(trajectory.poses.len());
    let mut rel = Vec::with_capacity(trajectory.poses.len());
    for (i, pose) in trajectory.poses.iter().enumerate() {
        let cloud: PointCloud<f32> = scan(scene, pose, model, seed, i);
        let path = velodyne.join(format!("{i:06}.bin"));
        write_cloud_bin(&path, &cloud)?;
        frames.push(path);
        rel.push(pose.then(&origin_inv));
    }
    let pose_file = dir.join("poses.txt");
    write_poses(&pose_file, &rel)?;
    Ok(EmittedSequence { root: dir.to_path_buf(), frames, pose_file })
}
