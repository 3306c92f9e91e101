//! Rigid-body geometry: poses, point clouds, weighted pose fitting and the
//! rotation / translation error primitives used by the evaluation suite.

use nalgebra::{Matrix3, Unit, Vector3, SVD};
use thiserror::Error;

use crate::real::Real;

pub type Point3<T> = nalgebra::Point3<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("length mismatch: {src} source points, {dst} target points, {weights} weights")]
    LengthMismatch { src: usize, dst: usize, weights: usize },
    #[error("at least 3 weighted pairs are required, got {0}")]
    TooFewPairs(usize),
    #[error("weights must be finite and non-negative with a positive sum")]
    InvalidWeights,
}

/// Ordered set of points in a sensor frame. The LiDAR center is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Point3<T>>,
    pub frame_id: usize,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Point3<T>>, frame_id: usize) -> Self {
        Self { points, frame_id }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance of every point to the sensor center.
    pub fn ranges(&self) -> Vec<T> {
        self.points.iter().map(|p| p.coords.norm()).collect()
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point3::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()), U::lit(p.z.as_f64())))
                .collect(),
            frame_id: self.frame_id,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame_id: self.frame_id,
        }
    }

    /// Keeps the first point (in cloud order) of every occupied cubic voxel
    /// of edge `voxel`; order of the survivors is preserved.
    pub fn voxel_downsample(&self, voxel: T) -> Self {
        let mut seen = std::collections::HashSet::with_capacity(self.points.len());
        let key = |v: T| (v / voxel).floor().as_f64() as i64;
        let points = self.points.iter().filter(|p| seen.insert((key(p.x), key(p.y), key(p.z)))).copied().collect();
        Self { points, frame_id: self.frame_id }
    }
}

/// Rigid transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let axis = Unit::new_normalize(*axis);
        let rotation = nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self { rotation, translation }
    }

    /// Planar pose: yaw about +z plus a translation.
    pub fn from_yaw(yaw: T, translation: Vector3<T>) -> Self {
        Self::from_axis_angle(&Vector3::z(), yaw, translation)
    }

    /// Checks orthonormality and handedness of the rotation.
    pub fn is_valid(&self) -> bool {
        let tol = validity_tolerance::<T>();
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        let det = self.rotation.determinant();
        gram.iter().all(|v| v.abs() <= tol)
            && (det - T::one()).abs() <= tol
            && self.translation.iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `b ∘ a`: apply `a` first, then `b`.
    pub fn then(&self, b: &Pose<T>) -> Pose<T> {
        compose(self, b)
    }

    pub fn inverse(&self) -> Pose<T> {
        inverse(self)
    }

    /// Row-major 3x4 `[R|t]`, the KITTI odometry layout.
    pub fn to_row_major_3x4(&self) -> [T; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn from_row_major_3x4(v: &[T; 12]) -> Self {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self { rotation, translation: Vector3::new(v[3], v[7], v[11]) }
    }

    /// Re-orthonormalizes the rotation (nearest rotation in Frobenius norm).
    pub fn orthonormalized(&self) -> Self {
        let svd = SVD::new(self.rotation, true, true);
        let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
        let mut rotation = u * v_t;
        if rotation.determinant() < T::zero() {
            let mut d = Matrix3::identity();
            d[(2, 2)] = -T::one();
            rotation = u * d * v_t;
        }
        Self { rotation, translation: self.translation }
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.map(|v| U::lit(v.as_f64())),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

fn validity_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(100.0);
    if eps > T::lit(1e-9) { eps } else { T::lit(1e-9) }
}

/// Transforms every point; cardinality and order are preserved.
pub fn apply_pose<T: Real>(cloud: &PointCloud<T>, pose: &Pose<T>) -> PointCloud<T> {
    PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        frame_id: cloud.frame_id,
    }
}

/// `b ∘ a`: rotation `b.R * a.R`, translation `b.R * a.t + b.t`.
pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    Pose {
        rotation: b.rotation * a.rotation,
        translation: b.rotation * a.translation + b.translation,
    }
}

pub fn inverse<T: Real>(p: &Pose<T>) -> Pose<T> {
    let rt = p.rotation.transpose();
    Pose { rotation: rt, translation: -(rt * p.translation) }
}

/// Weighted least-squares rigid transform mapping `src` onto `dst`.
///
/// Solves `min Σ w_i |R src_i + t - dst_i|²` by SVD of the weighted
/// cross-covariance. A reflection is turned into a proper rotation by
/// flipping the singular vector of the smallest singular value. The
/// configuration is rejected when the covariance has rank below two
/// (coincident or collinear points), where the rotation is not unique.
pub fn fit_pose_weighted<T: Real>(
    src: &[Point3<T>],
    dst: &[Point3<T>],
    weights: &[T],
) -> Result<Pose<T>, GeomError> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(GeomError::LengthMismatch { src: src.len(), dst: dst.len(), weights: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(GeomError::InvalidWeights);
    }
    let active = weights.iter().filter(|w| **w > T::zero()).count();
    if active < 3 {
        return Err(GeomError::TooFewPairs(active));
    }
    let total = weights.iter().fold(T::zero(), |acc, w| acc + *w);
    if total <= T::zero() {
        return Err(GeomError::InvalidWeights);
    }

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for ((p, q), w) in src.iter().zip(dst).zip(weights) {
        src_mean += p.coords * *w;
        dst_mean += q.coords * *w;
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cov = Matrix3::zeros();
    for ((p, q), w) in src.iter().zip(dst).zip(weights) {
        cov += (p.coords - src_mean) * (q.coords - dst_mean).transpose() * *w;
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or(GeomError::DegenerateConfiguration("svd failed"))?;
    let v_t = svd.v_t.ok_or(GeomError::DegenerateConfiguration("svd failed"))?;
    let sv = svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let largest = sv[order[0]];
    let second = sv[order[1]];
    let rank_tol = {
        let eps = T::default_epsilon() * T::lit(10.0);
        if eps > T::lit(1e-9) { eps } else { T::lit(1e-9) }
    };
    if !(largest > T::zero()) {
        return Err(GeomError::DegenerateConfiguration("coincident points"));
    }
    if second < rank_tol * largest {
        return Err(GeomError::DegenerateConfiguration("collinear points"));
    }

    // cov = U S V^T, R = V D U^T
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        let k = order[2];
        d[(k, k)] = -T::one();
    }
    let rotation = v * d * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(Pose { rotation, translation })
}

/// Angle of `r_true^T r_est` in degrees, in `[0, 180]`.
pub fn rotation_error<T: Real>(r_true: &Matrix3<T>, r_est: &Matrix3<T>) -> T {
    let rel = r_true.transpose() * r_est;
    let c = (rel.trace() - T::one()) / T::lit(2.0);
    let c = if c > T::one() { T::one() } else if c < -T::one() { -T::one() } else { c };
    c.acos().to_degrees()
}

pub fn translation_error<T: Real>(t_true: &Vector3<T>, t_est: &Vector3<T>) -> T {
    (t_true - t_est).norm()
}

trait ToDegrees {
    fn to_degrees(self) -> Self;
}

impl<T: Real> ToDegrees for T {
    #[inline]
    fn to_degrees(self) -> Self {
        self * T::lit(180.0) / T::pi()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(-3.0..3.0);
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-5.0..5.0));
        Pose::from_axis_angle(&axis, angle, t)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    #[test]
    fn voxel_downsample_keeps_first_point_per_cell() {
        let cloud = PointCloud::new(
            vec![
                Point3::new(0.1, 0.1, 0.1),
                Point3::new(0.2, 0.05, 0.0),
                Point3::new(1.1, 0.0, 0.0),
                Point3::new(-0.1, 0.0, 0.0),
                Point3::new(1.4, 0.4, 0.2),
            ],
            3,
        );
        let down = cloud.voxel_downsample(0.5);
        assert_eq!(down.points, vec![cloud.points[0], cloud.points[2], cloud.points[3]]);
        assert_eq!(down.frame_id, 3);
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = PointCloud::new(random_points(&mut rng, 10), 3);
        assert_eq!(apply_pose(&cloud, &Pose::identity()), cloud);
    }

    #[test]
    fn quarter_turn_about_z() {
        let pose = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vector3::zeros());
        let p = pose.transform_point(&Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let cloud = PointCloud::new(random_points(&mut rng, 8), 0);
            let two_step = apply_pose(&apply_pose(&cloud, &a), &b);
            let composed = apply_pose(&cloud, &compose(&a, &b));
            // independent route: homogeneous 4x4 matrices
            let to_h = |p: &Pose<f64>| {
                let mut m = nalgebra::Matrix4::identity();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation);
                m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
                m
            };
            let h = to_h(&b) * to_h(&a);
            for ((x, y), p) in two_step.points.iter().zip(&composed.points).zip(&cloud.points) {
                assert!((x - y).norm() < 1e-9);
                let ph = h * p.to_homogeneous();
                assert!((Point3::from_homogeneous(ph).unwrap() - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng);
        let q = compose(&Pose::identity(), &p);
        assert_relative_eq!(q.rotation, p.rotation, epsilon = 1e-12);
        assert_relative_eq!(q.translation, p.translation, epsilon = 1e-12);
        let id = compose(&p, &inverse(&p));
        assert_relative_eq!(id.rotation, Matrix3::identity(), epsilon = 1e-9);
        assert!(id.translation.norm() < 1e-9);
    }

    #[test]
    fn inverse_cases() {
        let id: Pose<f64> = Pose::identity();
        assert_eq!(inverse(&id).rotation, Matrix3::identity());
        let t = Pose::from_translation(Vector3::new(1.0, -2.0, 3.0));
        assert_eq!(inverse(&t).translation, Vector3::new(-1.0, 2.0, -3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_pose(&mut rng);
        let inv = inverse(&p);
        // matrix inverse oracle on the homogeneous form
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
        let mi = m.try_inverse().unwrap();
        assert_relative_eq!(mi.fixed_view::<3, 3>(0, 0).into_owned(), inv.rotation, epsilon = 1e-9);
        assert_relative_eq!(mi.fixed_view::<3, 1>(0, 3).into_owned(), inv.translation, epsilon = 1e-9);
    }

    #[test]
    fn fit_recovers_exact_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pose = random_pose(&mut rng);
            let src = random_points(&mut rng, 12);
            let dst: Vec<_> = src.iter().map(|p| pose.transform_point(p)).collect();
            let est = fit_pose_weighted(&src, &dst, &vec![1.0; src.len()]).unwrap();
            assert!((est.rotation - pose.rotation).abs().max() < 1e-9);
            assert!((est.translation - pose.translation).abs().max() < 1e-9);
            assert!(est.is_valid());
        }
    }

    #[test]
    fn fit_exact_on_three_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pose = random_pose(&mut rng);
        let src = random_points(&mut rng, 3);
        let dst: Vec<_> = src.iter().map(|p| pose.transform_point(p)).collect();
        let est = fit_pose_weighted(&src, &dst, &[1.0, 2.0, 0.5]).unwrap();
        assert!((est.rotation - pose.rotation).abs().max() < 1e-9);
        assert!((est.translation - pose.translation).abs().max() < 1e-9);
    }

    #[test]
    fn fit_rejects_collinear_and_coincident() {
        let src = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 2.0, 2.0)];
        let dst = src.clone();
        assert!(matches!(
            fit_pose_weighted(&src, &dst, &[1.0; 3]),
            Err(GeomError::DegenerateConfiguration(_))
        ));
        let same = vec![Point3::new(1.0, 2.0, 3.0); 4];
        assert!(matches!(
            fit_pose_weighted(&same, &same, &[1.0; 4]),
            Err(GeomError::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            fit_pose_weighted(&src[..2], &dst[..2], &[1.0; 2]),
            Err(GeomError::TooFewPairs(2))
        ));
        assert!(matches!(
            fit_pose_weighted(&src, &dst, &[1.0, 0.0, 0.0]),
            Err(GeomError::TooFewPairs(1))
        ));
    }

    #[test]
    fn fit_handles_reflection_case() {
        // planar points where the unconstrained optimum is a reflection
        let src = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| Point3::new(p.x, -p.y, 0.0)).collect();
        let est = fit_pose_weighted(&src, &dst, &[1.0; 4]).unwrap();
        assert!(est.is_valid());
        assert_relative_eq!(est.rotation.determinant(), 1.0, epsilon = 1e-12);
    }

    /// Minimizes the weighted objective over (axis-angle, t) by gradient descent
    /// with numerical gradients, independent of the SVD route.
    fn gradient_descent_fit(src: &[Point3<f64>], dst: &[Point3<f64>], w: &[f64]) -> f64 {
        let objective = |x: &[f64; 6]| {
            let rv = Vector3::new(x[0], x[1], x[2]);
            let rot = nalgebra::Rotation3::new(rv).into_inner();
            let t = Vector3::new(x[3], x[4], x[5]);
            src.iter()
                .zip(dst)
                .zip(w)
                .map(|((p, q), wi)| wi * (rot * p.coords + t - q.coords).norm_squared())
                .sum::<f64>()
        };
        let mut x = [0.0; 6];
        let mut step = 1e-4;
        let mut f = objective(&x);
        for _ in 0..20000 {
            let mut g = [0.0; 6];
            for k in 0..6 {
                let h = 1e-7;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                g[k] = (objective(&xp) - objective(&xm)) / (2.0 * h);
            }
            loop {
                let mut xn = x;
                for k in 0..6 {
                    xn[k] -= step * g[k];
                }
                let fnew = objective(&xn);
                if fnew < f {
                    x = xn;
                    f = fnew;
                    step *= 1.2;
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    return f;
                }
            }
        }
        f
    }

    #[test]
    fn fit_matches_iterative_minimizer_on_noisy_weighted_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = Pose::from_axis_angle(&Vector3::new(0.2, -0.4, 1.0), 0.35, Vector3::new(1.5, -0.7, 0.4));
        let src: Vec<_> = (0..15)
            .map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
            .collect();
        let dst: Vec<_> = src
            .iter()
            .map(|p| {
                let q = pose.transform_point(p);
                q + Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))
            })
            .collect();
        let w: Vec<f64> = (0..15).map(|_| rng.random_range(0.1..2.0)).collect();
        let est = fit_pose_weighted(&src, &dst, &w).unwrap();
        let residual: f64 = src
            .iter()
            .zip(&dst)
            .zip(&w)
            .map(|((p, q), wi)| wi * (est.transform_point(p) - q).norm_squared())
            .sum();
        let oracle = gradient_descent_fit(&src, &dst, &w);
        assert!((residual - oracle).abs() < 1e-6, "svd {residual} vs gd {oracle}");
    }

    fn quaternion_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let qa = nalgebra::UnitQuaternion::from_matrix(a);
        let qb = nalgebra::UnitQuaternion::from_matrix(b);
        let dot = qa.coords.dot(&qb.coords).abs().min(1.0);
        2.0 * dot.acos().to_degrees()
    }

    #[test]
    fn rotation_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let r = random_pose(&mut rng).rotation;
            assert!(rotation_error(&r, &r) < 1e-5);
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let extra = Pose::from_axis_angle(&axis, 30f64.to_radians(), Vector3::zeros()).rotation;
            assert!((rotation_error(&r, &(r * extra)) - 30.0).abs() < 1e-9);
            let other = random_pose(&mut rng).rotation;
            let e = rotation_error(&r, &other);
            assert!((e - quaternion_angle(&r, &other)).abs() < 1e-6);
            assert!((e - rotation_error(&other, &r)).abs() < 1e-9);
            assert!((0.0..=180.0).contains(&e));
        }
    }

    #[test]
    fn translation_error_cases() {
        let z = Vector3::new(0.0, 0.0, 0.0);
        assert_eq!(translation_error(&z, &z), 0.0);
        assert_eq!(translation_error(&z, &Vector3::new(3.0, 4.0, 0.0)), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vector3<f64> = Vector3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let b: Vector3<f64> = Vector3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let oracle = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
        assert!((translation_error(&a, &b) - oracle).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let pose = Pose::<f32>::from_yaw(0.3, Vector3::new(1.0, 2.0, 0.5));
        let src = vec![
            Point3::new(1.0f32, 0.0, 0.0),
            Point3::new(0.0, 4.0, 1.0),
            Point3::new(-3.0, 1.0, 2.0),
            Point3::new(2.0, -2.0, -1.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| pose.transform_point(p)).collect();
        let est = fit_pose_weighted(&src, &dst, &[1.0f32; 4]).unwrap();
        assert!(rotation_error(&pose.rotation, &est.rotation) < 0.05);
        assert!(est.is_valid());
    }

    proptest::proptest! {
        #[test]
        fn rigid_motion_preserves_distances(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0, angle in -3.1f64..3.1,
            tx in -50.0f64..50.0, ty in -50.0f64..50.0, tz in -5.0f64..5.0,
            pts in proptest::collection::vec((-40.0f64..40.0, -40.0f64..40.0, -5.0f64..5.0), 2..12)
        ) {
            let pose = Pose::from_axis_angle(&Vector3::new(ax, ay, az), angle, Vector3::new(tx, ty, tz));
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect(), 0);
            let moved = apply_pose(&cloud, &pose);
            for i in 0..cloud.len() {
                for j in 0..cloud.len() {
                    let before = (cloud.points[i] - cloud.points[j]).norm();
                    let after = (moved.points[i] - moved.points[j]).norm();
                    proptest::prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn rotation_error_recovers_angle(theta in 0.01f64..179.9, ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0) {
            let base = Pose::from_axis_angle(&Vector3::new(0.3, 0.1, -0.5), 1.1, Vector3::zeros()).rotation;
            let extra = Pose::from_axis_angle(&Vector3::new(ax, ay, az), theta.to_radians(), Vector3::zeros()).rotation;
            let e = rotation_error(&base, &(base * extra));
            proptest::prop_assert!((e - theta).abs() < 1e-5);
        }
    }
}
