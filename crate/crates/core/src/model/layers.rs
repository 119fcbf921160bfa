//! Forward and reverse-mode kernels for the encoder building blocks.
//!
//! Every `*_forward` returns what its `*_backward` needs; backward functions
//! accumulate parameter gradients into the supplied gradient struct and
//! return the gradient with respect to the input.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::scalar::Scalar;

use super::params::{Block, LayerNorm, Linear};

const LN_EPS: f64 = 1e-5;

pub(crate) fn linear_forward<T: Scalar>(lin: &Linear<T>, x: &ArrayView2<'_, T>) -> Array2<T> {
    x.dot(&lin.weight) + &lin.bias
}

pub(crate) fn linear_backward<T: Scalar>(
    lin: &Linear<T>,
    grad: &mut Linear<T>,
    x: &ArrayView2<'_, T>,
    dy: &Array2<T>,
) -> Array2<T> {
    grad.weight += &x.t().dot(dy);
    grad.bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&lin.weight.t())
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
}

pub(crate) fn norm_forward<T: Scalar>(ln: &LayerNorm<T>, x: &Array2<T>) -> (Array2<T>, NormCache<T>) {
    let d = T::of(x.ncols() as f64);
    let eps = T::of(LN_EPS);
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *is = T::one() / (var + eps).sqrt();
        let k = *is;
        row.mapv_inplace(|v| v * k);
    }
    let y = &normalized * &ln.gain + &ln.shift;
    (y, NormCache { normalized, inv_std })
}

pub(crate) fn norm_backward<T: Scalar>(
    ln: &LayerNorm<T>,
    grad: &mut LayerNorm<T>,
    cache: &NormCache<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    grad.gain += &(dy * &cache.normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
    grad.shift += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * &ln.gain;
    let d = T::of(dy.ncols() as f64);
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.normalized.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        let is = cache.inv_std[i];
        for j in 0..dy.ncols() {
            dx[[i, j]] = is * (g[j] - mean_g - xh[j] * mean_gx);
        }
    }
    dx
}

/// tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + T::of(0.044715) * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * a * x * x)
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache<T> {
    input: Array2<T>,
    attn_norm: NormCache<T>,
    attn_in: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    heads: Array2<T>,
    ff_norm: NormCache<T>,
    ff_in: Array2<T>,
    pre_act: Array2<T>,
    act: Array2<T>,
}

fn softmax_rows<T: Scalar>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn block_forward<T: Scalar>(b: &Block<T>, n_heads: usize, x: &Array2<T>) -> (Array2<T>, BlockCache<T>) {
    let (len, d) = x.dim();
    let dh = d / n_heads;
    let scale = T::one() / T::of(dh as f64).sqrt();

    let (attn_in, attn_norm) = norm_forward(&b.attn_norm, x);
    let q = linear_forward(&b.query, &attn_in.view());
    let k = linear_forward(&b.key, &attn_in.view());
    let v = linear_forward(&b.value, &attn_in.view());
    let mut heads = Array2::zeros((len, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut p);
        heads.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let mid = x + &linear_forward(&b.output, &heads.view());

    let (ff_in, ff_norm) = norm_forward(&b.ff_norm, &mid);
    let pre_act = linear_forward(&b.expand, &ff_in.view());
    let act = pre_act.mapv(gelu);
    let out = mid + &linear_forward(&b.contract, &act.view());

    let cache = BlockCache {
        input: x.clone(),
        attn_norm,
        attn_in,
        q,
        k,
        v,
        probs,
        heads,
        ff_norm,
        ff_in,
        pre_act,
        act,
    };
    (out, cache)
}

pub(crate) fn block_backward<T: Scalar>(
    b: &Block<T>,
    g: &mut Block<T>,
    n_heads: usize,
    c: &BlockCache<T>,
    dout: &Array2<T>,
) -> Array2<T> {
    let (_, d) = c.input.dim();
    let dh = d / n_heads;
    let scale = T::one() / T::of(dh as f64).sqrt();

    // feed-forward branch
    let dact = linear_backward(&b.contract, &mut g.contract, &c.act.view(), dout);
    let dpre = &dact * &c.pre_act.mapv(gelu_grad);
    let dff_in = linear_backward(&b.expand, &mut g.expand, &c.ff_in.view(), &dpre);
    let mut dmid = dout + &norm_backward(&b.ff_norm, &mut g.ff_norm, &c.ff_norm, &dff_in);

    // attention branch
    let dheads = linear_backward(&b.output, &mut g.output, &c.heads.view(), &dmid);
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for (h, p) in c.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dho = dheads.slice(cols);
        let dp = dho.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dho));
        let mut ds = &dp * p;
        for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
            let total = row.sum();
            row.zip_mut_with(&prow, |r, &pv| *r -= pv * total);
        }
        ds.mapv_inplace(|v| v * scale);
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    let ain = c.attn_in.view();
    let mut dattn_in = linear_backward(&b.query, &mut g.query, &ain, &dq);
    dattn_in += &linear_backward(&b.key, &mut g.key, &ain, &dk);
    dattn_in += &linear_backward(&b.value, &mut g.value, &ain, &dv);
    dmid += &norm_backward(&b.attn_norm, &mut g.attn_norm, &c.attn_norm, &dattn_in);
    dmid
}

/// Fixed sinusoidal position table, `max_len × d`.
pub(crate) fn positional_table<T: Scalar>(max_len: usize, d: usize) -> Array2<T> {
    Array2::from_shape_fn((max_len, d), |(pos, i)| {
        let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 / rate;
        T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn norm_rows_are_standardized() {
        let ln = LayerNorm { gain: Array2::ones((1, 4)), shift: Array2::zeros((1, 4)) };
        let x = ndarray::array![[1.0f64, 2.0, 3.0, 4.0], [-2.0, 0.0, 0.0, 2.0]];
        let (y, _) = norm_forward(&ln, &x);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_is_a_distribution() {
        let mut m = ndarray::array![[1000.0f64, 1000.0], [0.0, -1.0]];
        softmax_rows(&mut m);
        assert_eq!(m[[0, 0]], 0.5);
        assert!((m.row(1).sum() - 1.0).abs() < 1e-15);
    }
}
