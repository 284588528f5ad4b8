//! The full model: image and text encoders, the generalized decoder, the
//! learned contrastive temperature and the answer head.

use candle_core::{DType, Tensor};

use crate::config::{AttentionSwitches, ModelConfig};
use crate::data::{Color, Shape};
use crate::decoder::{DecodeInput, DecoderOutput, TaskMode, XDecoder};
use crate::encoders::{
    encode_concepts, tokenize, ConceptEmbeddingTable, Image, ImageEncoder, ImageFeaturePyramid,
    PixelDecoder, PixelEmbeddingMap, TextEncoder, TextQueryStates, TokenSequence, Vocabulary,
};
use crate::error::{Error, Result};
use crate::nn::{to_vec_f64, Init, Linear, ParamStore};

pub const LOGIT_SCALE: &str = "logit_scale";
/// Upper clamp of the contrastive log-temperature, `ln 100`.
pub const MAX_LOGIT_SCALE: f64 = 4.605_170_185_988_092;

/// Segmentation category names in id order.
pub fn category_names() -> Vec<&'static str> {
    Shape::ALL.iter().map(|s| s.name()).collect()
}

/// Closed answer set of the question head, in id order.
pub fn answer_names() -> Vec<&'static str> {
    Color::ALL.iter().map(|c| c.name()).collect()
}

/// Encoded image features shared by every decode over the same images.
#[derive(Debug, Clone)]
pub struct ImageFeatures {
    pub pyramid: ImageFeaturePyramid,
    pub pixels: PixelEmbeddingMap,
}

impl ImageFeatures {
    pub fn batch(&self) -> usize {
        self.pyramid.batch()
    }

    /// Gather batch rows, possibly repeating them.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let idx = Tensor::new(rows.iter().map(|&r| r as u32).collect::<Vec<_>>(), &candle_core::Device::Cpu)?;
        let mut pyramid = self.pyramid.clone();
        for level in &mut pyramid.levels {
            level.features = level.features.index_select(&idx, 0)?;
        }
        let mut pixels = self.pixels.clone();
        pixels.embeddings = pixels.embeddings.index_select(&idx, 0)?;
        Ok(Self { pyramid, pixels })
    }

    pub fn input(&self, mode: TaskMode) -> DecodeInput<'_> {
        DecodeInput::new(&self.pyramid, &self.pixels, mode)
    }
}

pub struct XDecoderModel {
    config: ModelConfig,
    vocab: Vocabulary,
    store: ParamStore,
    image_encoder: ImageEncoder,
    pixel_decoder: PixelDecoder,
    text_encoder: TextEncoder,
    decoder: XDecoder,
    logit_scale: Tensor,
    answer_head: Linear,
}

impl XDecoderModel {
    pub fn new(
        config: &ModelConfig,
        switches: AttentionSwitches,
        vocab: Vocabulary,
        dtype: DType,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(dtype, seed);
        let mut root = store.root();
        let image_encoder = ImageEncoder::new(&mut root.pp("image_encoder"), config)?;
        let pixel_decoder = PixelDecoder::new(&mut root.pp("pixel_decoder"), config.dim)?;
        let text_encoder = TextEncoder::new(&mut root.pp("text_encoder"), config, vocab.len())?;
        let decoder = XDecoder::new(&mut root.pp("decoder"), config, switches)?;
        let logit_scale = root.param(LOGIT_SCALE, &[1], Init::Const((1.0f64 / 0.07).ln()))?;
        let answer_head = Linear::new(&mut root.pp("answer_head"), config.dim, Color::ALL.len())?;
        Ok(Self {
            config: config.clone(),
            vocab,
            store,
            image_encoder,
            pixel_decoder,
            text_encoder,
            decoder,
            logit_scale,
            answer_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn decoder(&self) -> &XDecoder {
        &self.decoder
    }

    pub fn switches(&self) -> &AttentionSwitches {
        self.decoder.switches()
    }

    pub fn set_switches(&mut self, switches: AttentionSwitches) {
        self.decoder.set_switches(switches);
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.text_encoder
    }

    /// Text-encoder token embeddings, reused as the caption classifier.
    pub fn token_table(&self) -> &Tensor {
        self.text_encoder.token_table()
    }

    pub fn encode_images(&self, images: &[Image]) -> Result<ImageFeatures> {
        let pyramid = self.image_encoder.encode(images, self.dtype())?;
        let pixels = self.pixel_decoder.forward(&pyramid)?;
        Ok(ImageFeatures { pyramid, pixels })
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        tokenize(text, &self.vocab, self.config.n_max)
    }

    pub fn encode_tokens(&self, seqs: &[TokenSequence]) -> Result<TextQueryStates> {
        self.text_encoder.encode(seqs)
    }

    pub fn encode_texts(&self, texts: &[&str]) -> Result<TextQueryStates> {
        let seqs = texts.iter().map(|t| self.tokenize(t)).collect::<Result<Vec<_>>>()?;
        self.encode_tokens(&seqs)
    }

    /// Pooled text embeddings `(B, d)`.
    pub fn text_embeddings(&self, texts: &[&str]) -> Result<Tensor> {
        self.encode_texts(texts)?.pooled()
    }

    /// Prompted concept table for the given names plus background.
    pub fn concepts(&self, names: &[&str]) -> Result<ConceptEmbeddingTable> {
        encode_concepts(names, &self.config.prompt_template, &self.vocab, &self.text_encoder)
    }

    pub fn category_concepts(&self) -> Result<ConceptEmbeddingTable> {
        self.concepts(&category_names())
    }

    pub fn decode(&self, input: DecodeInput<'_>) -> Result<DecoderOutput> {
        self.decoder.decode(input)
    }

    /// Contrastive multiplier `exp(logit_scale)`.
    pub fn logit_scale(&self) -> Result<Tensor> {
        Ok(self.logit_scale.exp()?)
    }

    pub fn logit_scale_value(&self) -> Result<f64> {
        Ok(to_vec_f64(&self.logit_scale)?[0])
    }

    /// Clamp the log-temperature to `[0, ln 100]`.
    pub fn clamp_logit_scale(&self) -> Result<()> {
        let v = self.logit_scale_value()?;
        let c = v.clamp(0.0, MAX_LOGIT_SCALE);
        if c != v {
            self.store
                .assign(LOGIT_SCALE, &Tensor::new(&[c], self.store.device())?)?;
        }
        Ok(())
    }

    /// Answer scores `(B, A)` from the last text query's semantic row.
    pub fn answer_logits(&self, output: &DecoderOutput) -> Result<Tensor> {
        if output.mode != TaskMode::Vqa {
            return Err(Error::input("answer scores need a question decode"));
        }
        self.answer_head.forward(&output.last_text_semantics()?)
    }
}
