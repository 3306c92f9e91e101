//! Handcrafted local geometry descriptors.
//!
//! Every point is described by statistics of its fixed-radius neighbourhood.
//! All entries except the height are computed from coordinates relative to
//! the point, so a horizontal shift of the whole cloud leaves them unchanged.

use nalgebra::{Matrix3, SVector, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::PointCloud;
use crate::kdtree::KdTree;
use crate::real::Real;

pub const DESCRIPTOR_DIM: usize = 16;

pub type Descriptor<T> = SVector<T, DESCRIPTOR_DIM>;

/// Descriptor slots, in order.
pub mod slot {
    pub const HEIGHT: usize = 0;
    pub const LOG_DENSITY: usize = 1;
    pub const MEAN_NEIGHBOR_DIST: usize = 2;
    pub const NEAREST_NEIGHBOR_DIST: usize = 3;
    pub const EIGEN_RATIO_1: usize = 4;
    pub const EIGEN_RATIO_2: usize = 5;
    pub const EIGEN_RATIO_3: usize = 6;
    pub const LINEARITY: usize = 7;
    pub const PLANARITY: usize = 8;
    pub const SCATTERING: usize = 9;
    pub const NORMAL_TILT: usize = 10;
    pub const PRINCIPAL_VERTICALITY: usize = 11;
    pub const SPREAD: usize = 12;
    pub const HEADROOM: usize = 13;
    pub const FOOTROOM: usize = 14;
    pub const CENTROID_OFFSET: usize = 15;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// neighbourhood radius, meters
    pub radius: f64,
    /// height is divided by this before it enters the descriptor
    pub height_scale: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self { radius: 2.5, height_scale: 3.0 }
    }
}

/// One descriptor per point, in cloud order.
pub fn describe<T: Real>(cloud: &PointCloud<T>, cfg: &DescriptorConfig) -> Vec<Descriptor<T>> {
    let tree = KdTree::new(&cloud.points);
    describe_with_tree(cloud, &tree, cfg, None)
}

/// Descriptors for the points listed in `queries` (all points when `None`),
/// using the full cloud as neighbourhood support.
pub fn describe_with_tree<T: Real>(
    cloud: &PointCloud<T>,
    tree: &KdTree<T>,
    cfg: &DescriptorConfig,
    queries: Option<&[usize]>,
) -> Vec<Descriptor<T>> {
    let all: Vec<usize>;
    let idx = match queries {
        Some(q) => q,
        None => {
            all = (0..cloud.len()).collect();
            &all
        }
    };
    idx.par_iter().map(|&i| describe_point(cloud, tree, cfg, i)).collect()
}

fn describe_point<T: Real>(cloud: &PointCloud<T>, tree: &KdTree<T>, cfg: &DescriptorConfig, i: usize) -> Descriptor<T> {
    let r = T::lit(cfg.radius);
    let p = cloud.points[i];
    let neighbors: Vec<(usize, T)> = tree.within_radius(&p, r).into_iter().filter(|&(j, _)| j != i).collect();
    let mut d = Descriptor::<T>::zeros();
    d[slot::HEIGHT] = p.z / T::lit(cfg.height_scale);

    let third = T::lit(1.0 / 3.0);
    if neighbors.is_empty() {
        d[slot::MEAN_NEIGHBOR_DIST] = T::one();
        d[slot::NEAREST_NEIGHBOR_DIST] = T::one();
        d[slot::EIGEN_RATIO_1] = third;
        d[slot::EIGEN_RATIO_2] = third;
        d[slot::EIGEN_RATIO_3] = third;
        d[slot::SCATTERING] = T::one();
        return d;
    }

    let n = T::count(neighbors.len());
    let area = T::pi() * r * r;
    d[slot::LOG_DENSITY] = (T::one() + n / area).ln();

    let mut sum_dist = T::zero();
    let mut min_dist = r;
    let mut centroid = Vector3::zeros();
    let mut z_max = T::zero();
    let mut z_min = T::zero();
    for &(j, d2) in &neighbors {
        let dist = d2.sqrt();
        sum_dist += dist;
        if dist < min_dist {
            min_dist = dist;
        }
        let rel = cloud.points[j] - p;
        centroid += rel;
        if rel.z > z_max {
            z_max = rel.z;
        }
        if rel.z < z_min {
            z_min = rel.z;
        }
    }
    d[slot::MEAN_NEIGHBOR_DIST] = sum_dist / n / r;
    d[slot::NEAREST_NEIGHBOR_DIST] = min_dist / r;
    d[slot::HEADROOM] = z_max / r;
    d[slot::FOOTROOM] = -z_min / r;

    // neighbourhood including the point itself
    let count = n + T::one();
    centroid /= count;
    d[slot::CENTROID_OFFSET] = centroid.norm() / r;

    if neighbors.len() < 2 {
        d[slot::EIGEN_RATIO_1] = third;
        d[slot::EIGEN_RATIO_2] = third;
        d[slot::EIGEN_RATIO_3] = third;
        d[slot::SCATTERING] = T::one();
        return d;
    }
    let mut cov = Matrix3::zeros();
    let c0 = -centroid;
    cov += c0 * c0.transpose();
    for &(j, _) in &neighbors {
        let rel = cloud.points[j] - p - centroid;
        cov += rel * rel.transpose();
    }
    cov /= count;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let clamp0 = |v: T| if v > T::zero() { v } else { T::zero() };
    let l1 = clamp0(eig.eigenvalues[order[0]]);
    let l2 = clamp0(eig.eigenvalues[order[1]]);
    let l3 = clamp0(eig.eigenvalues[order[2]]);
    let sum = l1 + l2 + l3;
    if !(l1 > T::zero()) || !(sum > T::zero()) {
        d[slot::EIGEN_RATIO_1] = third;
        d[slot::EIGEN_RATIO_2] = third;
        d[slot::EIGEN_RATIO_3] = third;
        d[slot::SCATTERING] = T::one();
        return d;
    }
    d[slot::EIGEN_RATIO_1] = l1 / sum;
    d[slot::EIGEN_RATIO_2] = l2 / sum;
    d[slot::EIGEN_RATIO_3] = l3 / sum;
    d[slot::LINEARITY] = (l1 - l2) / l1;
    d[slot::PLANARITY] = (l2 - l3) / l1;
    d[slot::SCATTERING] = l3 / l1;
    let normal = eig.eigenvectors.column(order[2]);
    let principal = eig.eigenvectors.column(order[0]);
    d[slot::NORMAL_TILT] = T::one() - normal[2].abs();
    d[slot::PRINCIPAL_VERTICALITY] = principal[2].abs();
    d[slot::SPREAD] = l1.sqrt() / r;
    d
}
