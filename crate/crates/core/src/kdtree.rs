//! Static 3D KD-tree over a point slice.
//!
//! Nearest-neighbour ties are broken towards the lowest point index so that
//! results agree exactly with an exhaustive scan.

use crate::geom::Point3;
use crate::real::Real;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    /// split axis for the node whose pivot sits at `order[mid]`; 3 marks a leaf
    axis: Vec<u8>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Point3<T>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axis = vec![3u8; points.len()];
        build(points, &mut order, &mut axis, 0);
        Self { points: points.to_vec(), order, axis }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// Index and squared distance of the closest point.
    pub fn nearest(&self, query: &Point3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, T::max_value().unwrap_or_else(|| T::lit(f64::MAX)));
        self.nearest_in(query, 0, self.order.len(), &mut best);
        Some(best)
    }

    fn nearest_in(&self, q: &Point3<T>, lo: usize, hi: usize, best: &mut (usize, T)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = (self.points[i] - q).norm_squared();
                if d < best.1 || (d == best.1 && i < best.0) {
                    *best = (i, d);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[pivot][ax];
        let (near, far) = if diff < T::zero() { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };

        self.nearest_in(q, near.0, near.1, best);
        let d = (self.points[pivot] - q).norm_squared();
        if d < best.1 || (d == best.1 && pivot < best.0) {
            *best = (pivot, d);
        }
        if diff * diff <= best.1 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }

    /// All points with squared distance `<= radius²`, as `(index, squared distance)`
    /// in no particular order.
    pub fn within_radius(&self, query: &Point3<T>, radius: T) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.radius_in(query, radius * radius, 0, self.order.len(), &mut out);
        }
        out
    }

    fn radius_in(&self, q: &Point3<T>, r2: T, lo: usize, hi: usize, out: &mut Vec<(usize, T)>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = (self.points[i] - q).norm_squared();
                if d <= r2 {
                    out.push((i, d));
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[pivot][ax];
        let d = (self.points[pivot] - q).norm_squared();
        if d <= r2 {
            out.push((pivot, d));
        }
        if diff <= T::zero() || diff * diff <= r2 {
            self.radius_in(q, r2, lo, mid, out);
        }
        if diff >= T::zero() || diff * diff <= r2 {
            self.radius_in(q, r2, mid + 1, hi, out);
        }
    }

    /// Up to `k` nearest points within `radius`, sorted by distance then index.
    pub fn knn_within(&self, query: &Point3<T>, k: usize, radius: T) -> Vec<(usize, T)> {
        let mut found = self.within_radius(query, radius);
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }
}

fn build<T: Real>(points: &[Point3<T>], order: &mut [usize], axis: &mut [u8], offset: usize) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    let mut lo = points[order[0]].coords;
    let mut hi = lo;
    for &i in order.iter() {
        let p = points[i].coords;
        for a in 0..3 {
            if p[a] < lo[a] {
                lo[a] = p[a];
            }
            if p[a] > hi[a] {
                hi[a] = p[a];
            }
        }
    }
    let spread = hi - lo;
    let ax = if spread[0] >= spread[1] && spread[0] >= spread[2] {
        0
    } else if spread[1] >= spread[2] {
        1
    } else {
        2
    };
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][ax].partial_cmp(&points[b][ax]).unwrap_or(std::cmp::Ordering::Equal)
    });
    axis[offset + mid] = ax as u8;
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, axis, offset);
    build(points, &mut rest[1..], axis, offset + mid + 1);
}

/// Exhaustive nearest neighbour with lowest-index tie-break.
pub fn brute_force_nearest<T: Real>(points: &[Point3<T>], query: &Point3<T>) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = (p - query).norm_squared();
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best
}
