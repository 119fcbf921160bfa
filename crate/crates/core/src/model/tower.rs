use ndarray::Array2;

use crate::scalar::Scalar;

use super::layers::{
    block_backward, block_forward, gelu, gelu_grad, linear_backward, linear_forward, norm_backward,
    norm_forward, BlockCache, NormCache,
};
use super::params::Tower;

/// Intermediate values of one tower pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct TowerCache<T> {
    pub(crate) ids: Vec<usize>,
    blocks: Vec<BlockCache<T>>,
    final_norm: NormCache<T>,
    pub(crate) contextual: Array2<T>,
    proj_pre: Array2<T>,
    proj_act: Array2<T>,
    pub(crate) projected: Array2<T>,
}

pub(crate) fn tower_forward<T: Scalar>(
    tower: &Tower<T>,
    n_heads: usize,
    positions: &Array2<T>,
    ids: &[usize],
) -> TowerCache<T> {
    let d = tower.embedding.ncols();
    let mut x = Array2::zeros((ids.len(), d));
    for (i, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.assign(&tower.embedding.row(id));
        row += &positions.row(i);
    }
    let mut blocks = Vec::with_capacity(tower.blocks.len());
    for b in &tower.blocks {
        let (y, c) = block_forward(b, n_heads, &x);
        blocks.push(c);
        x = y;
    }
    let (contextual, final_norm) = norm_forward(&tower.final_norm, &x);
    let proj_pre = linear_forward(&tower.proj_in, &contextual.view());
    let proj_act = proj_pre.mapv(gelu);
    let projected = linear_forward(&tower.proj_out, &proj_act.view());
    TowerCache { ids: ids.to_vec(), blocks, final_norm, contextual, proj_pre, proj_act, projected }
}

/// Backpropagates `d_projected` (gradient w.r.t. the projected embeddings)
/// through the tower, accumulating into `grad`.
pub(crate) fn tower_backward<T: Scalar>(
    tower: &Tower<T>,
    grad: &mut Tower<T>,
    n_heads: usize,
    cache: &TowerCache<T>,
    d_projected: &Array2<T>,
) {
    let dact = linear_backward(&tower.proj_out, &mut grad.proj_out, &cache.proj_act.view(), d_projected);
    let dpre = &dact * &cache.proj_pre.mapv(gelu_grad);
    let dctx = linear_backward(&tower.proj_in, &mut grad.proj_in, &cache.contextual.view(), &dpre);
    let mut dx = norm_backward(&tower.final_norm, &mut grad.final_norm, &cache.final_norm, &dctx);
    for ((b, g), c) in tower.blocks.iter().zip(grad.blocks.iter_mut()).zip(&cache.blocks).rev() {
        dx = block_backward(b, g, n_heads, c, &dx);
    }
    for (i, &id) in cache.ids.iter().enumerate() {
        let mut row = grad.embedding.row_mut(id);
        row += &dx.row(i);
    }
}
