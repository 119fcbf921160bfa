//! Late interaction between the two towers: token-constituent correlation,
//! max-weighted pooling and the scoring head.

use ndarray::{s, Array1, Array2};

use crate::scalar::Scalar;

use super::ModelError;

/// `C = e_s · e_tᵀ`, shape `n × m`.
pub fn correlation<T: Scalar>(e_s: &Array2<T>, e_t: &Array2<T>) -> Result<Array2<T>, ModelError> {
    if e_s.ncols() != e_t.ncols() {
        return Err(ModelError::DimMismatch { left: e_s.ncols(), right: e_t.ncols() });
    }
    Ok(e_s.dot(&e_t.t()))
}

/// Pooled representations and the argmax positions that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub v_s: Array1<T>,
    pub v_t: Array1<T>,
    /// For each sentence token `i`, the constituent `j` maximizing `C[i, j]`.
    pub row_argmax: Vec<usize>,
    /// For each constituent `j`, the token `i` maximizing `C[i, j]`.
    pub col_argmax: Vec<usize>,
}

fn argmax<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (i, v) in values.enumerate() {
        // strict comparison keeps the lowest index on ties
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Row/column max-weighted averages:
/// `v_s = (1/n) Σ_i max_j C[i,j] · e_s[i]` and `v_t = (1/m) Σ_j max_i C[i,j] · e_t[j]`.
pub fn pool<T: Scalar>(e_s: &Array2<T>, e_t: &Array2<T>, c: &Array2<T>) -> Pooled<T> {
    let (n, m) = c.dim();
    let row_argmax: Vec<usize> = c.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
    let col_argmax: Vec<usize> = c.columns().into_iter().map(|col| argmax(col.iter().copied())).collect();
    let d = e_s.ncols();
    let mut v_s = Array1::zeros(d);
    for (i, &j) in row_argmax.iter().enumerate() {
        v_s.scaled_add(c[[i, j]], &e_s.row(i));
    }
    let mut v_t = Array1::zeros(d);
    for (j, &i) in col_argmax.iter().enumerate() {
        v_t.scaled_add(c[[i, j]], &e_t.row(j));
    }
    v_s.mapv_inplace(|v| v / T::of(n as f64));
    v_t.mapv_inplace(|v| v / T::of(m as f64));
    Pooled { v_s, v_t, row_argmax, col_argmax }
}

/// Head pre-activation `W · [v_s ; v_t] + b`.
pub(crate) fn head_logit<T: Scalar>(weight: &Array2<T>, bias: T, pooled: &Pooled<T>) -> T {
    let d = pooled.v_s.len();
    let w = weight.row(0);
    w.slice(s![..d]).dot(&pooled.v_s) + w.slice(s![d..]).dot(&pooled.v_t) + bias
}

/// Logistic function kept strictly inside `(0, 1)`.
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    let s = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    let eps = T::epsilon();
    s.max(eps).min(T::one() - eps)
}

/// Gradients of the interaction w.r.t. the projected embeddings and head.
pub(crate) struct InteractionGrads<T> {
    pub d_es: Array2<T>,
    pub d_et: Array2<T>,
    pub d_weight: Array2<T>,
    pub d_bias: T,
}

pub(crate) fn interaction_backward<T: Scalar>(
    e_s: &Array2<T>,
    e_t: &Array2<T>,
    c: &Array2<T>,
    pooled: &Pooled<T>,
    weight: &Array2<T>,
    d_logit: T,
) -> InteractionGrads<T> {
    let (n, m) = c.dim();
    let d = e_s.ncols();
    let w = weight.row(0);
    let mut d_weight = Array2::zeros((1, 2 * d));
    d_weight.slice_mut(s![0, ..d]).assign(&pooled.v_s.mapv(|v| v * d_logit));
    d_weight.slice_mut(s![0, d..]).assign(&pooled.v_t.mapv(|v| v * d_logit));
    let d_vs = w.slice(s![..d]).mapv(|v| v * d_logit);
    let d_vt = w.slice(s![d..]).mapv(|v| v * d_logit);

    let inv_n = T::one() / T::of(n as f64);
    let inv_m = T::one() / T::of(m as f64);
    let mut d_es = Array2::zeros((n, d));
    let mut d_et = Array2::zeros((m, d));
    let mut d_c = Array2::<T>::zeros((n, m));
    for (i, &j) in pooled.row_argmax.iter().enumerate() {
        let weight_i = c[[i, j]] * inv_n;
        d_es.row_mut(i).scaled_add(weight_i, &d_vs);
        d_c[[i, j]] += inv_n * d_vs.dot(&e_s.row(i));
    }
    for (j, &i) in pooled.col_argmax.iter().enumerate() {
        let weight_j = c[[i, j]] * inv_m;
        d_et.row_mut(j).scaled_add(weight_j, &d_vt);
        d_c[[i, j]] += inv_m * d_vt.dot(&e_t.row(j));
    }
    d_es += &d_c.dot(e_t);
    d_et += &d_c.t().dot(e_s);
    InteractionGrads { d_es, d_et, d_weight, d_bias: d_logit }
}
