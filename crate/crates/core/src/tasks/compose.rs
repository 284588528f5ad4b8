use super::caption::{generate_captions, CaptionResult};
use super::referring::{referring_segments, ReferringResult};
use super::retrieval::{image_embeddings, rank_embeddings, text_embeddings};
use crate::encoders::Image;
use crate::error::{Error, Result};
use crate::model::XDecoderModel;

/// Ground `word`, then caption the image with every query's cross-attention
/// restricted to the grounded mask.
pub fn compose_referring_caption(
    model: &XDecoderModel,
    image: &Image,
    word: &str,
    max_len: usize,
    beam: usize,
) -> Result<(ReferringResult, CaptionResult)> {
    if word.split_whitespace().any(|w| model.vocab().id(&w.to_lowercase()).is_none()) {
        return Err(Error::input(format!("{word:?} is not in the vocabulary")));
    }
    let features = model.encode_images(std::slice::from_ref(image))?;
    let referred = referring_segments(model, &features, &[word])?.remove(0);
    let regions = vec![referred.mask.clone()];
    let caption = generate_captions(model, &features, Some(&regions), max_len, beam)?.remove(0);
    Ok((referred, caption))
}

/// Retrieve the image that best matches `phrase`, then ground the phrase in
/// it. Returns the image index and its referring mask.
pub fn compose_region_retrieval(
    model: &XDecoderModel,
    images: &[Image],
    phrase: &str,
) -> Result<(usize, ReferringResult)> {
    let ranking = rank_embeddings(&image_embeddings(model, images)?, &text_embeddings(model, &[phrase])?)?;
    let best = ranking.text_to_image[0][0];
    let features = model.encode_images(std::slice::from_ref(&images[best]))?;
    let referred = referring_segments(model, &features, &[phrase])?.remove(0);
    Ok((best, referred))
}
