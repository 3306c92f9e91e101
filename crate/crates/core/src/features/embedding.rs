use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::descriptor::{Descriptor, DESCRIPTOR_DIM};
use super::FeatureError;
use crate::real::Real;
use crate::Correspondence;

/// Trainable affine map from descriptors to `k`-dimensional features.
/// `weight` is row-major `k x DESCRIPTOR_DIM`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams<T: Real> {
    pub k: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> EmbeddingParams<T> {
    pub fn zeros(k: usize) -> Self {
        Self { k, weight: vec![T::zero(); k * DESCRIPTOR_DIM], bias: vec![T::zero(); k] }
    }

    /// Gaussian weights with standard deviation `1/sqrt(DESCRIPTOR_DIM)`, zero bias.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (DESCRIPTOR_DIM as f64).sqrt()).expect("normal");
        Self {
            k,
            weight: (0..k * DESCRIPTOR_DIM).map(|_| T::lit(normal.sample(&mut rng))).collect(),
            bias: vec![T::zero(); k],
        }
    }

    pub fn dim(&self) -> usize {
        DESCRIPTOR_DIM
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.k == other.k && self.weight.len() == other.weight.len() && self.bias.len() == other.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// All parameters, weights first.
    pub fn flat(&self) -> Vec<T> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    pub fn from_flat(k: usize, flat: &[T]) -> Self {
        let w = k * DESCRIPTOR_DIM;
        Self { k, weight: flat[..w].to_vec(), bias: flat[w..w + k].to_vec() }
    }

    /// Unnormalized `W x + b`.
    #[inline]
    pub fn project(&self, x: &Descriptor<T>, out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * DESCRIPTOR_DIM..(r + 1) * DESCRIPTOR_DIM];
            let mut acc = self.bias[r];
            for c in 0..DESCRIPTOR_DIM {
                acc += row[c] * x[c];
            }
            *o = acc;
        }
    }

    pub fn cast<U: Real>(&self) -> EmbeddingParams<U> {
        EmbeddingParams {
            k: self.k,
            weight: self.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Row-major `n x dim` matrix of unit-norm features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Real> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn from_rows(dim: usize, rows: &[Vec<T>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row width");
            data.extend_from_slice(r);
        }
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { dim: self.dim, data }
    }
}

/// Norm below which a projection is treated as zero.
pub(crate) fn zero_norm_guard<T: Real>() -> T {
    T::default_epsilon() * T::lit(1e3)
}

/// L2-normalizes `row` in place; returns the pre-normalization norm, or
/// `None` when the zero guard replaced the row with the first basis vector.
#[inline]
pub(crate) fn normalize_row<T: Real>(row: &mut [T]) -> Option<T> {
    let norm = row.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt();
    if norm > zero_norm_guard::<T>() {
        for v in row.iter_mut() {
            *v /= norm;
        }
        Some(norm)
    } else {
        for v in row.iter_mut() {
            *v = T::zero();
        }
        row[0] = T::one();
        None
    }
}

/// Rows `normalize(W · raw + b)`.
pub fn embed<T: Real>(descs: &[Descriptor<T>], params: &EmbeddingParams<T>) -> FeatureMap<T> {
    let k = params.k;
    let mut data = vec![T::zero(); descs.len() * k];
    data.par_chunks_mut(k.max(1)).zip(descs.par_iter()).for_each(|(row, d)| {
        params.project(d, row);
        normalize_row(row);
    });
    FeatureMap { dim: k, data }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// For every source row, the target row of highest cosine similarity
/// (lowest index on ties), with that similarity as the score.
pub fn match_features<T: Real>(f_src: &FeatureMap<T>, f_dst: &FeatureMap<T>) -> Result<Vec<Correspondence>, FeatureError> {
    if f_src.is_empty() || f_dst.is_empty() {
        return Err(FeatureError::EmptyFeatures);
    }
    if f_src.dim != f_dst.dim {
        return Err(FeatureError::ShapeMismatch(format!("feature widths {} and {}", f_src.dim, f_dst.dim)));
    }
    let out = (0..f_src.len())
        .into_par_iter()
        .map(|i| {
            let a = f_src.row(i);
            let mut best = (0usize, dot(a, f_dst.row(0)));
            for j in 1..f_dst.len() {
                let s = dot(a, f_dst.row(j));
                if s > best.1 {
                    best = (j, s);
                }
            }
            Correspondence::scored(i, best.0, best.1.as_f64())
        })
        .collect();
    Ok(out)
}
