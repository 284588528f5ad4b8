use candle_core::{DType, Device, Tensor};

use super::attention_mask::{build_self_attention_mask, AttentionMask, TaskMode};
use super::cross_bias::{cross_attention_bias, downsample_logits, downsample_region, region_bias};
use super::layer::DecoderLayer;
use crate::config::{AttentionSwitches, ModelConfig};
use crate::encoders::{ImageFeaturePyramid, PixelEmbeddingMap, TextQueryStates};
use crate::error::{Error, Result};
use crate::nn::{constant, sine_position_2d, to_vec_f64, Init, LayerNorm, Linear, Scope};

/// Learned latent queries; the last row is the global query.
#[derive(Debug, Clone)]
pub struct LatentQueries {
    pub features: Tensor,
    pub positions: Tensor,
}

impl LatentQueries {
    pub fn count(&self) -> usize {
        self.features.dim(0).unwrap_or(0)
    }

    pub fn global_index(&self) -> usize {
        self.count() - 1
    }
}

/// Semantic outputs `(B, m+n, d)` and mask logits `(B, m, H'*W')` read out
/// from one query state.
#[derive(Debug, Clone)]
pub struct LayerPrediction {
    pub mask_logits: Tensor,
    pub semantics: Tensor,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    /// Final mask logits `(B, m, H'*W')`, one row per latent query.
    pub mask_logits: Tensor,
    /// Final semantic outputs `(B, m+n, d)`.
    pub semantics: Tensor,
    /// Predictions before each layer, for deep supervision.
    pub layer_traces: Vec<LayerPrediction>,
    pub mode: TaskMode,
    pub latents: usize,
    pub text_lengths: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

impl DecoderOutput {
    pub fn batch(&self) -> usize {
        self.semantics.dim(0).unwrap_or(0)
    }

    pub fn text_width(&self) -> usize {
        self.semantics.dim(1).unwrap_or(0) - self.latents
    }

    pub fn final_prediction(&self) -> LayerPrediction {
        LayerPrediction {
            mask_logits: self.mask_logits.clone(),
            semantics: self.semantics.clone(),
        }
    }

    /// Semantic rows of the first `m-1` (segmentation) latent queries.
    pub fn segmentation_semantics(&self) -> Result<Tensor> {
        Ok(self.semantics.narrow(1, 0, self.latents - 1)?)
    }

    /// The global query's semantic row, `(B, d)`.
    pub fn global_embedding(&self) -> Result<Tensor> {
        Ok(self.semantics.narrow(1, self.latents - 1, 1)?.squeeze(1)?)
    }

    /// Text-query semantic rows, `(B, n, d)`.
    pub fn text_semantics(&self) -> Result<Tensor> {
        Ok(self.semantics.narrow(1, self.latents, self.text_width())?)
    }

    /// Semantic row of each sample's last non-PAD text query, `(B, d)`.
    pub fn last_text_semantics(&self) -> Result<Tensor> {
        let (b, q, d) = self.semantics.dims3()?;
        let idx: Vec<u32> = self
            .text_lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| (i * q + self.latents + len - 1) as u32)
            .collect();
        if idx.len() != b {
            return Err(Error::input("decode had no text queries"));
        }
        Ok(self
            .semantics
            .reshape((b * q, d))?
            .index_select(&Tensor::new(idx, &Device::Cpu)?, 0)?)
    }
}

/// Inputs of one decode call.
#[derive(Debug, Clone, Copy)]
pub struct DecodeInput<'a> {
    pub pyramid: &'a ImageFeaturePyramid,
    pub pixel_map: &'a PixelEmbeddingMap,
    pub text: Option<&'a TextQueryStates>,
    pub mode: TaskMode,
    /// Per-sample region at pixel-map resolution; when set, every query's
    /// cross-attention is restricted to it instead of the predicted masks.
    pub region: Option<&'a [Vec<bool>]>,
    /// Number of layers to run; defaults to all.
    pub depth: Option<usize>,
}

impl<'a> DecodeInput<'a> {
    pub fn new(pyramid: &'a ImageFeaturePyramid, pixel_map: &'a PixelEmbeddingMap, mode: TaskMode) -> Self {
        Self {
            pyramid,
            pixel_map,
            text: None,
            mode,
            region: None,
            depth: None,
        }
    }

    pub fn with_text(mut self, text: &'a TextQueryStates) -> Self {
        self.text = Some(text);
        self
    }

    pub fn with_region(mut self, region: &'a [Vec<bool>]) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }
}

#[derive(Debug, Clone)]
pub struct XDecoder {
    latents: LatentQueries,
    text_proj: Linear,
    level_embed: Tensor,
    layers: Vec<DecoderLayer>,
    out_norm: LayerNorm,
    out_proj: Linear,
    mask_proj: Linear,
    switches: AttentionSwitches,
    dim: usize,
}

impl XDecoder {
    pub fn new(scope: &mut Scope<'_>, config: &ModelConfig, switches: AttentionSwitches) -> Result<Self> {
        let d = config.dim;
        let m = config.latent_queries;
        let latents = LatentQueries {
            features: scope.param("query_feat", &[m, d], Init::Normal(1.0))?,
            positions: scope.param("query_pos", &[m, d], Init::Normal(1.0))?,
        };
        let layers = (0..config.decoder_layers)
            .map(|i| DecoderLayer::new(&mut scope.pp(format!("layer{i}")), d, config.heads, config.ffn_dim))
            .collect::<Result<_>>()?;
        Ok(Self {
            latents,
            text_proj: Linear::new(&mut scope.pp("text_proj"), d, d)?,
            level_embed: scope.param("level_embed", &[config.strides.len(), d], Init::Normal(0.1))?,
            layers,
            out_norm: LayerNorm::new(&mut scope.pp("out_norm"), d)?,
            out_proj: Linear::new(&mut scope.pp("out_proj"), d, d)?,
            mask_proj: Linear::new(&mut scope.pp("mask_proj"), d, d)?,
            switches,
            dim: d,
        })
    }

    pub fn latents(&self) -> &LatentQueries {
        &self.latents
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn switches(&self) -> &AttentionSwitches {
        &self.switches
    }

    pub fn set_switches(&mut self, switches: AttentionSwitches) {
        self.switches = switches;
    }

    pub fn self_attention_mask(&self, mode: TaskMode, n: usize) -> Result<AttentionMask> {
        build_self_attention_mask(mode, self.latents.count(), n, &self.switches)
    }

    /// Mask logits `(B, m, HW)` from latent semantic rows `(B, m, d)`.
    pub fn predict_masks(&self, latent_semantics: &Tensor, pixel_map: &PixelEmbeddingMap) -> Result<Tensor> {
        let embed = self.mask_proj.forward(latent_semantics)?;
        let pixels_t = pixel_map.embeddings.transpose(1, 2)?.contiguous()?;
        Ok(embed.matmul(&pixels_t)?)
    }

    fn predict(&self, state: &Tensor, pixels_t: &Tensor, m: usize) -> Result<LayerPrediction> {
        let semantics = self.out_proj.forward(&self.out_norm.forward(state)?)?;
        let embed = self.mask_proj.forward(&semantics.narrow(1, 0, m)?)?;
        Ok(LayerPrediction {
            mask_logits: embed.matmul(pixels_t)?,
            semantics,
        })
    }

    pub fn decode(&self, input: DecodeInput<'_>) -> Result<DecoderOutput> {
        let pyramid = input.pyramid;
        let pixel_map = input.pixel_map;
        let mode = input.mode;
        if mode.uses_text() && input.text.is_none() {
            return Err(Error::input(format!("{mode:?} decode requires text queries")));
        }
        if !mode.uses_text() && input.text.is_some() {
            return Err(Error::input(format!("{mode:?} decode takes no text queries")));
        }
        let b = pyramid.batch();
        let d = self.dim;
        let m = self.latents.count();
        let dtype = self.latents.features.dtype();
        let (n, lengths) = match input.text {
            Some(t) => {
                if t.batch() != b {
                    return Err(Error::input("text batch differs from image batch"));
                }
                (t.width(), t.lengths.clone())
            }
            None => (0, Vec::new()),
        };
        let q = m + n;
        let depth = input.depth.unwrap_or(self.layers.len());
        if depth > self.layers.len() {
            return Err(Error::input(format!("depth {depth} exceeds {} layers", self.layers.len())));
        }
        if let Some(region) = input.region {
            let cells = pixel_map.height * pixel_map.width;
            if region.len() != b || region.iter().any(|r| r.len() != cells) {
                return Err(Error::input("region must be one pixel-map mask per sample"));
            }
        }

        let feats = self.latents.features.unsqueeze(0)?.broadcast_as((b, m, d))?;
        let lpos = self.latents.positions.unsqueeze(0)?.broadcast_as((b, m, d))?;
        let (mut state, pos) = match input.text {
            Some(t) => (
                Tensor::cat(&[&feats, &self.text_proj.forward(&t.states)?], 1)?,
                Tensor::cat(&[&lpos, &Tensor::zeros((b, n, d), dtype, &Device::Cpu)?], 1)?,
            ),
            None => (feats.contiguous()?, lpos.contiguous()?),
        };

        let mask = self.self_attention_mask(mode, n)?;
        let self_bias = self_attention_bias(&mask, &lengths, b, dtype)?;

        let pixels_t = pixel_map.embeddings.transpose(1, 2)?.contiguous()?;
        let mut pred = self.predict(&state, &pixels_t, m)?;
        let mut traces = Vec::with_capacity(depth);
        let levels = pyramid.coarse_to_fine();
        let num_levels = levels.len();
        for (l, layer) in self.layers.iter().take(depth).enumerate() {
            let level = levels[l % num_levels];
            let level_index = num_levels - 1 - (l % num_levels);
            let factor = level.stride / pixel_map.stride;
            let cells = level.height * level.width;
            let bias = match input.region {
                Some(region) => region
                    .iter()
                    .flat_map(|r| {
                        let coarse = downsample_region(r, pixel_map.height, pixel_map.width, factor);
                        region_bias(&coarse, q)
                    })
                    .collect::<Vec<f64>>(),
                None => {
                    let logits = to_vec_f64(&pred.mask_logits.detach())?;
                    let per = m * pixel_map.height * pixel_map.width;
                    logits
                        .chunks(per)
                        .flat_map(|chunk| {
                            let coarse =
                                downsample_logits(chunk, m, pixel_map.height, pixel_map.width, factor);
                            cross_attention_bias(&coarse, m, cells, n)
                        })
                        .collect()
                }
            };
            let cross_bias = constant(bias, &[b, 1, q, cells], dtype)?;
            let key_pos = constant(sine_position_2d(level.height, level.width, d), &[1, cells, d], dtype)?
                .broadcast_add(&self.level_embed.get(level_index)?)?;
            state = layer.forward(&state, &pos, &level.features, &key_pos, &self_bias, &cross_bias)?;
            traces.push(pred);
            pred = self.predict(&state, &pixels_t, m)?;
        }
        Ok(DecoderOutput {
            mask_logits: pred.mask_logits,
            semantics: pred.semantics,
            layer_traces: traces,
            mode,
            latents: m,
            text_lengths: lengths,
            height: pixel_map.height,
            width: pixel_map.width,
        })
    }
}

/// Per-sample additive self-attention bias `(B, 1, Q, Q)`: the structural
/// mask plus exclusion of PAD text columns beyond each sample's length.
fn self_attention_bias(mask: &AttentionMask, lengths: &[usize], b: usize, dtype: DType) -> Result<Tensor> {
    let q = mask.size();
    let m = mask.latents();
    let mut out = Vec::with_capacity(b * q * q);
    for s in 0..b {
        let len = lengths.get(s).copied().unwrap_or(0);
        for i in 0..q {
            for j in 0..q {
                let padded = j >= m && j - m >= len && i != j;
                out.push(if mask.allows(i, j) && !padded {
                    0.0
                } else {
                    f64::NEG_INFINITY
                });
            }
        }
    }
    constant(out, &[b, 1, q, q], dtype)
}
