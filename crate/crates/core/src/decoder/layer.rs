use candle_core::Tensor;

use crate::error::Result;
use crate::nn::{FeedForward, LayerNorm, MultiHeadAttention, Scope};

/// One decoder layer: masked cross-attention over a feature level, then
/// masked self-attention among the queries, then a feed-forward block.
/// Each sub-block is residual with post-normalization.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    cross: MultiHeadAttention,
    cross_norm: LayerNorm,
    self_attn: MultiHeadAttention,
    self_norm: LayerNorm,
    ffn: FeedForward,
    ffn_norm: LayerNorm,
}

impl DecoderLayer {
    pub fn new(scope: &mut Scope<'_>, dim: usize, heads: usize, ffn_dim: usize) -> Result<Self> {
        Ok(Self {
            cross: MultiHeadAttention::new(&mut scope.pp("cross"), dim, heads)?,
            cross_norm: LayerNorm::new(&mut scope.pp("cross_norm"), dim)?,
            self_attn: MultiHeadAttention::new(&mut scope.pp("self_attn"), dim, heads)?,
            self_norm: LayerNorm::new(&mut scope.pp("self_norm"), dim)?,
            ffn: FeedForward::new(&mut scope.pp("ffn"), dim, ffn_dim)?,
            ffn_norm: LayerNorm::new(&mut scope.pp("ffn_norm"), dim)?,
        })
    }

    /// `state`/`pos`: `(B, Q, d)`; `keys`/`key_pos`: `(B or 1, K, d)`;
    /// `self_bias`: broadcastable to `(B, h, Q, Q)`; `cross_bias` to
    /// `(B, h, Q, K)`.
    pub fn forward(
        &self,
        state: &Tensor,
        pos: &Tensor,
        keys: &Tensor,
        key_pos: &Tensor,
        self_bias: &Tensor,
        cross_bias: &Tensor,
    ) -> Result<Tensor> {
        Ok(self
            .forward_with_cross_weights(state, pos, keys, key_pos, self_bias, cross_bias)?
            .0)
    }

    pub fn forward_with_cross_weights(
        &self,
        state: &Tensor,
        pos: &Tensor,
        keys: &Tensor,
        key_pos: &Tensor,
        self_bias: &Tensor,
        cross_bias: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let q = (state + pos)?;
        let k = keys.broadcast_add(key_pos)?;
        let (attended, weights) = self.cross.forward_with_weights(&q, &k, keys, Some(cross_bias))?;
        let x = self.cross_norm.forward(&(state + attended)?)?;

        let qk = (&x + pos)?;
        let x = self
            .self_norm
            .forward(&(&x + self.self_attn.forward(&qk, &qk, &x, Some(self_bias))?)?)?;
        let x = self.ffn_norm.forward(&(&x + self.ffn.forward(&x)?)?)?;
        Ok((x, weights))
    }
}
