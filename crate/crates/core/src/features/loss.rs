//! Hardest-contrastive objective over bidirectional correspondence sets and
//! its analytic gradient through the normalized affine embedding.
//!
//! For each positive `(i, j)` in `C_ST` the term is
//! `[m + |f_i - g_j|² - min_{k in N_T, k != j} |f_i - g_k|²]_+`, averaged over
//! the set; `C_TS` contributes the mirrored average with roles swapped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::descriptor::{Descriptor, DESCRIPTOR_DIM};
use super::embedding::{normalize_row, EmbeddingParams, FeatureMap};
use super::FeatureError;
use crate::real::Real;
use crate::Correspondence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    /// size of the negative pool drawn from each cloud
    pub pool_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { margin: 1.0, pool_size: 512, learning_rate: 0.001, weight_decay: 1e-4 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.margin > 0.0) || self.pool_size < 2 || !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(FeatureError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Candidate negatives: indices into the source and target clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePools {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl NegativePools {
    /// Draws up to `size` indices from each cloud without replacement.
    pub fn sample<R: Rng + ?Sized>(n_src: usize, n_dst: usize, size: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| {
            let mut v: Vec<usize> = rand::seq::index::sample(rng, n, size.min(n)).into_iter().collect();
            v.sort_unstable();
            v
        };
        let src = draw(n_src);
        let dst = draw(n_dst);
        Self { src, dst }
    }
}

#[inline]
fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| {
        let d = *x - *y;
        acc + d * d
    })
}

/// Output of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossOutput<T: Real> {
    pub loss: T,
    /// gradient with respect to the flattened parameters (weights, then bias)
    pub grad: Vec<T>,
    pub active_terms: usize,
    pub total_terms: usize,
}

/// Per-row gradients of the loss with respect to the feature maps.
struct FeatureGrads<T: Real> {
    loss: T,
    src: Vec<T>,
    dst: Vec<T>,
    active: usize,
    total: usize,
}

fn validate_corr(corr: &[Correspondence], n_a: usize, n_b: usize) -> Result<(), FeatureError> {
    for c in corr {
        if c.src >= n_a || c.dst >= n_b {
            return Err(FeatureError::IndexOutOfRange(c.src, c.dst));
        }
    }
    Ok(())
}

/// One direction of the objective. `anchors` index `fa`, positives and pool
/// index `fb`. Accumulates row gradients into `ga`/`gb` when provided.
#[allow(clippy::too_many_arguments)]
fn directional<T: Real>(
    fa: &FeatureMap<T>,
    fb: &FeatureMap<T>,
    corr: &[Correspondence],
    pool: &[usize],
    margin: T,
    mut grads: Option<(&mut [T], &mut [T])>,
) -> (T, usize) {
    if corr.is_empty() {
        return (T::zero(), 0);
    }
    let k = fa.dim;
    let scale = T::one() / T::count(corr.len());
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut active = 0usize;
    for c in corr {
        let a = fa.row(c.src);
        let pos = fb.row(c.dst);
        let p_pos = sq_dist(a, pos);
        let mut hardest: Option<(usize, T)> = None;
        for &n in pool {
            if n == c.dst {
                continue;
            }
            let d = sq_dist(a, fb.row(n));
            match hardest {
                Some((_, h)) if d >= h => {}
                _ => hardest = Some((n, d)),
            }
        }
        let Some((neg, p_neg)) = hardest else { continue };
        let hinge = margin + p_pos - p_neg;
        if hinge > T::zero() {
            total += hinge * scale;
            active += 1;
            if let Some((ga, gb)) = grads.as_mut() {
                let negr = fb.row(neg);
                let ga_row = &mut ga[c.src * k..(c.src + 1) * k];
                for t in 0..k {
                    // d/da (|a-p|² - |a-n|²) = 2(n - p)
                    ga_row[t] += scale * two * (negr[t] - pos[t]);
                }
                let gpos = &mut gb[c.dst * k..(c.dst + 1) * k];
                for t in 0..k {
                    gpos[t] -= scale * two * (a[t] - pos[t]);
                }
                let gneg = &mut gb[neg * k..(neg + 1) * k];
                for t in 0..k {
                    gneg[t] += scale * two * (a[t] - negr[t]);
                }
            }
        }
    }
    (total, active)
}

fn feature_grads<T: Real>(
    f_s: &FeatureMap<T>,
    f_t: &FeatureMap<T>,
    c_st: &[Correspondence],
    c_ts: &[Correspondence],
    pools: &NegativePools,
    margin: T,
    with_grad: bool,
) -> Result<FeatureGrads<T>, FeatureError> {
    if c_st.is_empty() && c_ts.is_empty() {
        return Err(FeatureError::EmptyCorrespondences);
    }
    validate_corr(c_st, f_s.len(), f_t.len())?;
    validate_corr(c_ts, f_t.len(), f_s.len())?;
    if pools.src.iter().any(|&i| i >= f_s.len()) || pools.dst.iter().any(|&i| i >= f_t.len()) {
        return Err(FeatureError::InvalidConfig("negative pool index out of range".into()));
    }
    let mut gs = if with_grad { vec![T::zero(); f_s.data.len()] } else { Vec::new() };
    let mut gt = if with_grad { vec![T::zero(); f_t.data.len()] } else { Vec::new() };
    let (l1, a1) = directional(
        f_s,
        f_t,
        c_st,
        &pools.dst,
        margin,
        if with_grad { Some((gs.as_mut_slice(), gt.as_mut_slice())) } else { None },
    );
    let (l2, a2) = directional(
        f_t,
        f_s,
        c_ts,
        &pools.src,
        margin,
        if with_grad { Some((gt.as_mut_slice(), gs.as_mut_slice())) } else { None },
    );
    Ok(FeatureGrads { loss: l1 + l2, src: gs, dst: gt, active: a1 + a2, total: c_st.len() + c_ts.len() })
}

/// Loss value on precomputed features. `c_ts` holds `(index in T, index in S)`.
pub fn hardest_contrastive_loss<T: Real>(
    f_s: &FeatureMap<T>,
    f_t: &FeatureMap<T>,
    c_st: &[Correspondence],
    c_ts: &[Correspondence],
    pools: &NegativePools,
    cfg: &LossConfig,
) -> Result<T, FeatureError> {
    Ok(feature_grads(f_s, f_t, c_st, c_ts, pools, T::lit(cfg.margin), false)?.loss)
}

/// Loss and its gradient with respect to the student parameters, evaluated
/// from descriptors so the gradient can flow through the embedding.
pub fn contrastive_loss_and_grad<T: Real>(
    desc_s: &[Descriptor<T>],
    desc_t: &[Descriptor<T>],
    params: &EmbeddingParams<T>,
    c_st: &[Correspondence],
    c_ts: &[Correspondence],
    pools: &NegativePools,
    cfg: &LossConfig,
) -> Result<LossOutput<T>, FeatureError> {
    let k = params.k;
    let (f_s, n_s) = forward(desc_s, params);
    let (f_t, n_t) = forward(desc_t, params);
    let fg = feature_grads(&f_s, &f_t, c_st, c_ts, pools, T::lit(cfg.margin), true)?;

    let mut grad = vec![T::zero(); params.num_params()];
    let (gw, gb) = grad.split_at_mut(k * DESCRIPTOR_DIM);
    let mut backprop = |f: &FeatureMap<T>, norms: &[Option<T>], g: &[T], descs: &[Descriptor<T>]| {
        for i in 0..f.len() {
            let gi = &g[i * k..(i + 1) * k];
            if gi.iter().all(|v| *v == T::zero()) {
                continue;
            }
            // guarded rows are constant in the parameters
            let Some(norm) = norms[i] else { continue };
            let fi = f.row(i);
            let proj = fi.iter().zip(gi).fold(T::zero(), |a, (x, y)| a + *x * *y);
            let x = &descs[i];
            for r in 0..k {
                let du = (gi[r] - fi[r] * proj) / norm;
                gb[r] += du;
                let row = &mut gw[r * DESCRIPTOR_DIM..(r + 1) * DESCRIPTOR_DIM];
                for c in 0..DESCRIPTOR_DIM {
                    row[c] += du * x[c];
                }
            }
        }
    };
    backprop(&f_s, &n_s, &fg.src, desc_s);
    backprop(&f_t, &n_t, &fg.dst, desc_t);
    Ok(LossOutput { loss: fg.loss, grad, active_terms: fg.active, total_terms: fg.total })
}

fn forward<T: Real>(descs: &[Descriptor<T>], params: &EmbeddingParams<T>) -> (FeatureMap<T>, Vec<Option<T>>) {
    let k = params.k;
    let mut data = vec![T::zero(); descs.len() * k];
    let mut norms = Vec::with_capacity(descs.len());
    for (row, d) in data.chunks_mut(k).zip(descs) {
        params.project(d, row);
        norms.push(normalize_row(row));
    }
    (FeatureMap { dim: k, data }, norms)
}

/// `params - lr · (grad + weight_decay · params)`.
pub fn sgd_step<T: Real>(params: &EmbeddingParams<T>, grad: &[T], cfg: &LossConfig) -> Result<EmbeddingParams<T>, FeatureError> {
    if grad.len() != params.num_params() {
        return Err(FeatureError::ShapeMismatch(format!("{} gradients for {} parameters", grad.len(), params.num_params())));
    }
    let lr = T::lit(cfg.learning_rate);
    let wd = T::lit(cfg.weight_decay);
    let flat: Vec<T> = params.flat().iter().zip(grad).map(|(p, g)| *p - lr * (*g + wd * *p)).collect();
    Ok(EmbeddingParams::from_flat(params.k, &flat))
}
