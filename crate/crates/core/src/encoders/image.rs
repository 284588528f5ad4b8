use candle_core::{DType, Tensor};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{bilinear_matrix, constant, gelu, sine_position_2d, LayerNorm, Linear, Scope};

/// An RGB image with values in `[0, 1]`, stored row-major as `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::input(format!(
                "expected {} values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        Self::new(height, width, rgb.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelOrder {
    FineToCoarse,
}

/// One pyramid level: `(batch, height*width, dim)` features, row-major.
#[derive(Debug, Clone)]
pub struct FeatureLevel {
    pub features: Tensor,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct ImageFeaturePyramid {
    pub levels: Vec<FeatureLevel>,
    pub order: LevelOrder,
    pub image_height: usize,
    pub image_width: usize,
}

impl ImageFeaturePyramid {
    pub fn batch(&self) -> usize {
        self.levels[0].features.dim(0).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.levels[0].features.dim(2).unwrap_or(0)
    }

    /// Levels ordered coarse to fine, the order the decoder visits them in.
    pub fn coarse_to_fine(&self) -> Vec<&FeatureLevel> {
        match self.order {
            LevelOrder::FineToCoarse => self.levels.iter().rev().collect(),
        }
    }

    pub fn finest(&self) -> &FeatureLevel {
        match self.order {
            LevelOrder::FineToCoarse => &self.levels[0],
        }
    }
}

/// Per-pixel embeddings at the finest pyramid stride: `(batch, h*w, dim)`.
#[derive(Debug, Clone)]
pub struct PixelEmbeddingMap {
    pub embeddings: Tensor,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

/// 3x3 same-padding convolution over a `(batch, h, w, dim)` grid, written as
/// an im2col gather followed by one matrix product.
#[derive(Debug, Clone)]
struct Conv3x3 {
    proj: Linear,
}

impl Conv3x3 {
    fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            proj: Linear::new(scope, 9 * dim, dim)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, h, w, _) = x.dims4()?;
        let padded = x.pad_with_zeros(1, 1, 1)?.pad_with_zeros(2, 1, 1)?;
        let mut taps = Vec::with_capacity(9);
        for dy in 0..3 {
            for dx in 0..3 {
                taps.push(padded.narrow(1, dy, h)?.narrow(2, dx, w)?);
            }
        }
        self.proj.forward(&Tensor::cat(&taps, 3)?)
    }
}

/// Non-overlapping `r x r` patch gather: `(b, h, w, c) -> (b, h/r, w/r, r*r*c)`.
fn patchify(x: &Tensor, r: usize) -> Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    Ok(x.reshape(vec![b, h / r, r, w / r, r, c])?
        .permute(vec![0, 1, 3, 2, 4, 5])?
        .reshape((b, h / r, w / r, r * r * c))?)
}

/// Strided patch-embedding pyramid: a patchify stem at the finest stride,
/// then a patch merge per coarser level, each followed by a residual 3x3
/// convolution.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    stem: Linear,
    merges: Vec<Linear>,
    convs: Vec<Conv3x3>,
    norms: Vec<LayerNorm>,
    strides: Vec<usize>,
    dim: usize,
}

impl ImageEncoder {
    pub fn new(scope: &mut Scope<'_>, config: &ModelConfig) -> Result<Self> {
        let dim = config.dim;
        let s0 = config.strides[0];
        let stem = Linear::new(&mut scope.pp("stem"), s0 * s0 * 3, dim)?;
        let mut merges = Vec::new();
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (l, pair) in std::iter::once(&[s0, s0][..])
            .chain(config.strides.windows(2))
            .enumerate()
        {
            let ratio = pair[1] / pair[0];
            if l > 0 {
                merges.push(Linear::new(
                    &mut scope.pp(format!("merge{l}")),
                    ratio * ratio * dim,
                    dim,
                )?);
            }
            convs.push(Conv3x3::new(&mut scope.pp(format!("conv{l}")), dim)?);
            norms.push(LayerNorm::new(&mut scope.pp(format!("norm{l}")), dim)?);
        }
        Ok(Self {
            stem,
            merges,
            convs,
            norms,
            strides: config.strides.clone(),
            dim,
        })
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Encode a batch of equally sized images.
    pub fn encode(&self, images: &[Image], dtype: DType) -> Result<ImageFeaturePyramid> {
        let first = images.first().ok_or_else(|| Error::input("empty image batch"))?;
        let (height, width) = (first.height(), first.width());
        let max_stride = *self.strides.last().unwrap();
        if height % max_stride != 0 || width % max_stride != 0 {
            return Err(Error::input(format!(
                "image {height}x{width} is not divisible by stride {max_stride}"
            )));
        }
        if images.iter().any(|im| im.height() != height || im.width() != width) {
            return Err(Error::input("images in a batch must share one size"));
        }
        let mut data = Vec::with_capacity(images.len() * height * width * 3);
        for im in images {
            data.extend(im.pixels().iter().map(|&p| p as f64 - 0.5));
        }
        let x = constant(data, &[images.len(), height, width, 3], dtype)?;

        let s0 = self.strides[0];
        let (mut h, mut w) = (height / s0, width / s0);
        let mut feat = gelu(&self.stem.forward(&patchify(&x, s0)?)?)?;
        let pos = constant(sine_position_2d(h, w, self.dim), &[1, h, w, self.dim], dtype)?;
        feat = feat.broadcast_add(&pos)?;

        let mut levels = Vec::with_capacity(self.strides.len());
        for l in 0..self.strides.len() {
            if l > 0 {
                let ratio = self.strides[l] / self.strides[l - 1];
                feat = gelu(&self.merges[l - 1].forward(&patchify(&feat, ratio)?)?)?;
                h /= ratio;
                w /= ratio;
            }
            feat = (&feat + gelu(&self.convs[l].forward(&feat)?)?)?;
            feat = self.norms[l].forward(&feat)?;
            levels.push(FeatureLevel {
                features: feat.reshape((images.len(), h * w, self.dim))?,
                height: h,
                width: w,
                stride: self.strides[l],
            });
        }
        Ok(ImageFeaturePyramid {
            levels,
            order: LevelOrder::FineToCoarse,
            image_height: height,
            image_width: width,
        })
    }
}

/// Lateral fusion: every level is bilinearly resampled to the finest grid,
/// summed, and linearly projected.
#[derive(Debug, Clone)]
pub struct PixelDecoder {
    proj: Linear,
}

impl PixelDecoder {
    pub fn new(scope: &mut Scope<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            proj: Linear::new(&mut scope.pp("proj"), dim, dim)?,
        })
    }

    pub fn from_projection(proj: Linear) -> Self {
        Self { proj }
    }

    pub fn forward(&self, pyramid: &ImageFeaturePyramid) -> Result<PixelEmbeddingMap> {
        let finest = pyramid.finest();
        let (fh, fw) = (finest.height, finest.width);
        let dtype = finest.features.dtype();
        let mut sum = finest.features.clone();
        for level in &pyramid.levels {
            if std::ptr::eq(level, finest) {
                continue;
            }
            let up = constant(
                bilinear_matrix(level.height, level.width, fh, fw),
                &[fh * fw, level.height * level.width],
                dtype,
            )?;
            sum = (sum + up.broadcast_matmul(&level.features)?)?;
        }
        Ok(PixelEmbeddingMap {
            embeddings: self.proj.forward(&sum)?,
            height: fh,
            width: fw,
            stride: finest.stride,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{to_vec_f64, ParamStore};
    use candle_core::Device;

    fn encoder(strides: Vec<usize>, dim: usize) -> (ParamStore, ImageEncoder) {
        let mut store = ParamStore::new(DType::F64, 1);
        let config = ModelConfig {
            dim,
            strides,
            ..ModelConfig::micro()
        };
        let enc = ImageEncoder::new(&mut store.root(), &config).unwrap();
        (store, enc)
    }

    fn gray(h: usize, w: usize) -> Image {
        Image::new(h, w, vec![0.25; h * w * 3]).unwrap()
    }

    #[test]
    fn pyramid_shapes_follow_strides() {
        let (_s, enc) = encoder(vec![4, 8, 16], 32);
        let p = enc.encode(&[gray(64, 64)], DType::F64).unwrap();
        let shapes: Vec<_> = p
            .levels
            .iter()
            .map(|l| (l.height, l.width, l.features.dim(2).unwrap()))
            .collect();
        assert_eq!(shapes, vec![(16, 16, 32), (8, 8, 32), (4, 4, 32)]);
        let p = enc.encode(&[gray(32, 32)], DType::F64).unwrap();
        let shapes: Vec<_> = p.levels.iter().map(|l| (l.height, l.width)).collect();
        assert_eq!(shapes, vec![(8, 8), (4, 4), (2, 2)]);
        for l in &p.levels {
            assert_eq!(l.height * l.stride, 32);
        }
    }

    #[test]
    fn indivisible_image_is_rejected() {
        let (_s, enc) = encoder(vec![4, 8, 16], 8);
        let err = enc.encode(&[gray(30, 32)], DType::F64).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn out_of_range_pixels_are_rejected() {
        assert!(Image::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Image::new(1, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn encoding_is_deterministic() {
        let (_s, enc) = encoder(vec![4, 8], 8);
        let a = enc.encode(&[gray(16, 16)], DType::F64).unwrap();
        let b = enc.encode(&[gray(16, 16)], DType::F64).unwrap();
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert_eq!(to_vec_f64(&x.features).unwrap(), to_vec_f64(&y.features).unwrap());
        }
    }

    #[test]
    fn pixel_map_uses_finest_stride() {
        let (mut store, enc) = encoder(vec![4, 8, 16], 8);
        let dec = PixelDecoder::new(&mut store.root().pp("pixel"), 8).unwrap();
        let p = enc.encode(&[gray(64, 64)], DType::F64).unwrap();
        let map = dec.forward(&p).unwrap();
        assert_eq!((map.height, map.width, map.stride), (16, 16, 4));
        assert_eq!(map.embeddings.dims(), &[1, 256, 8]);
    }

    fn level(h: usize, w: usize, stride: usize, values: Vec<f64>) -> FeatureLevel {
        FeatureLevel {
            features: Tensor::from_vec(values, (1, h * w, 2), &Device::Cpu).unwrap(),
            height: h,
            width: w,
            stride,
        }
    }

    #[test]
    fn single_level_map_is_the_projected_level() {
        let weight = Tensor::new(&[[2.0f64, 0.0], [1.0, -1.0]], &Device::Cpu).unwrap();
        let bias = Tensor::new(&[0.5f64, 0.0], &Device::Cpu).unwrap();
        let dec = PixelDecoder::from_projection(Linear::from_tensors(weight, Some(bias)));
        let pyramid = ImageFeaturePyramid {
            levels: vec![level(1, 2, 4, vec![1.0, 2.0, -1.0, 0.0])],
            order: LevelOrder::FineToCoarse,
            image_height: 4,
            image_width: 8,
        };
        let map = dec.forward(&pyramid).unwrap();
        // [1,2] -> [1*2+2*1+0.5, -2] ; [-1,0] -> [-2+0.5, 0]
        assert_eq!(to_vec_f64(&map.embeddings).unwrap(), vec![4.5, -2.0, -1.5, 0.0]);
    }

    #[test]
    fn zero_pyramid_with_zero_bias_gives_zero_map() {
        let weight = Tensor::new(&[[2.0f64, 3.0], [1.0, -1.0]], &Device::Cpu).unwrap();
        let bias = Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap();
        let dec = PixelDecoder::from_projection(Linear::from_tensors(weight, Some(bias)));
        let pyramid = ImageFeaturePyramid {
            levels: vec![level(2, 2, 4, vec![0.0; 8]), level(1, 1, 8, vec![0.0; 2])],
            order: LevelOrder::FineToCoarse,
            image_height: 8,
            image_width: 8,
        };
        let map = dec.forward(&pyramid).unwrap();
        assert!(to_vec_f64(&map.embeddings).unwrap().iter().all(|v| *v == 0.0));
    }
}
