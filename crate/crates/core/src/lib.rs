//! Unsupervised registration of distant LiDAR point clouds.
//!
//! A labeler/student pair of feature extractors is trained without pose
//! labels: the labeler's feature matches are spatially filtered, registered
//! with a second-order spatial compatibility estimator, and the resulting
//! pose is used to rediscover dense correspondences that supervise the
//! student. Pair difficulty grows with a progressive frame-interval bound.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64` for the training and CLI paths.

pub mod dataset;
pub mod features;
pub mod geom;
pub mod kdtree;
pub mod metrics;
pub mod pipeline;
pub mod real;
pub mod scpcr;
pub mod selflabel;
pub mod sim;

pub use geom::{apply_pose, compose, fit_pose_weighted, inverse, rotation_error, translation_error};
pub use real::Real;

use serde::{Deserialize, Serialize};

/// Index pair `(i into source, j into target)` with an optional similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: usize,
    pub dst: usize,
    pub score: Option<f64>,
}

impl Correspondence {
    pub fn new(src: usize, dst: usize) -> Self {
        Self { src, dst, score: None }
    }

    pub fn scored(src: usize, dst: usize, score: f64) -> Self {
        Self { src, dst, score: Some(score) }
    }

    pub fn reversed(&self) -> Self {
        Self { src: self.dst, dst: self.src, score: self.score }
    }
}

pub type CorrespondenceSet = Vec<Correspondence>;

pub type Point3 = geom::Point3<f64>;
pub type PointCloud = geom::PointCloud<f64>;
pub type Pose = geom::Pose<f64>;
pub type KdTree = kdtree::KdTree<f64>;
pub type EmbeddingParams = features::EmbeddingParams<f64>;
pub type FeatureMap = features::FeatureMap<f64>;
pub type Descriptor = features::Descriptor<f64>;
pub type SimilarityMap = selflabel::SimilarityMap;
