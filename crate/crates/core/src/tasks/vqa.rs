use crate::decoder::TaskMode;
use crate::encoders::Image;
use crate::error::{Error, Result};
use crate::model::{answer_names, ImageFeatures, XDecoderModel};
use crate::nn::to_vec_f64;

/// Best answer id from `answer_set` for each image/question pair; ties go
/// to the earlier entry of `answer_set`.
pub fn run_vqa_batch(
    model: &XDecoderModel,
    features: &ImageFeatures,
    questions: &[&str],
    answer_set: &[usize],
) -> Result<Vec<usize>> {
    if answer_set.is_empty() {
        return Err(Error::input("empty answer set"));
    }
    let total = answer_names().len();
    if let Some(a) = answer_set.iter().find(|&&a| a >= total) {
        return Err(Error::input(format!("answer id {a} outside 0..{total}")));
    }
    if questions.len() != features.batch() {
        return Err(Error::input("one question per image required"));
    }
    let text = model.encode_texts(questions)?;
    let out = model.decode(features.input(TaskMode::Vqa).with_text(&text))?;
    let logits = to_vec_f64(&model.answer_logits(&out)?)?;
    Ok(logits
        .chunks(total)
        .map(|row| {
            let mut best = answer_set[0];
            for &a in answer_set {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect())
}

pub fn run_vqa(model: &XDecoderModel, image: &Image, question: &str, answer_set: &[usize]) -> Result<usize> {
    let features = model.encode_images(std::slice::from_ref(image))?;
    Ok(run_vqa_batch(model, &features, &[question], answer_set)?[0])
}
