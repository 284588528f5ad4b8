use super::scene::{Color, SceneObject, SceneSpec, Shape};

/// Non-content words used by the caption, referring, question and prompt
/// grammars.
pub const FUNCTION_WORDS: [&str; 12] = [
    "a", "an", "and", "image", "of", "the", "left", "right", "what", "color", "is",
    "background",
];

fn left_to_right(scene: &SceneSpec) -> Vec<&SceneObject> {
    let mut objs: Vec<&SceneObject> = scene.objects.iter().collect();
    objs.sort_by_key(|o| (o.cx, o.cy, o.shape, o.color));
    objs
}

/// "a {color} {shape}[ and a {color} {shape}]..." with objects ordered left
/// to right.
pub fn derive_caption(scene: &SceneSpec) -> String {
    left_to_right(scene)
        .iter()
        .map(|o| format!("a {} {}", o.color.name(), o.shape.name()))
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Referring phrases paired with 1-based segment ids. Every phrase denotes
/// exactly one object of the scene.
pub fn derive_referring(scene: &SceneSpec) -> Vec<(String, u16)> {
    let objs = &scene.objects;
    let mut out = Vec::new();
    for (k, o) in objs.iter().enumerate() {
        let id = k as u16 + 1;
        let same_pair = objs
            .iter()
            .filter(|p| p.shape == o.shape && p.color == o.color)
            .count();
        let same_shape: Vec<&SceneObject> = objs.iter().filter(|p| p.shape == o.shape).collect();
        if same_pair == 1 {
            out.push((format!("the {} {}", o.color.name(), o.shape.name()), id));
        } else {
            if same_shape.iter().all(|p| std::ptr::eq(*p, o) || p.cx > o.cx) {
                out.push((format!("the left {}", o.shape.name()), id));
            }
            if same_shape.iter().all(|p| std::ptr::eq(*p, o) || p.cx < o.cx) {
                out.push((format!("the right {}", o.shape.name()), id));
            }
        }
        if same_shape.len() == 1 {
            out.push((format!("the {}", o.shape.name()), id));
        }
    }
    out
}

/// Indices of the objects a referring phrase denotes, evaluated directly
/// from the phrase's words.
pub fn phrase_referents(phrase: &str, scene: &SceneSpec) -> Vec<usize> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    let (side, rest) = match words.as_slice() {
        ["the", "left", rest @ ..] => (Some(true), rest),
        ["the", "right", rest @ ..] => (Some(false), rest),
        ["the", rest @ ..] => (None, rest),
        _ => return Vec::new(),
    };
    let (color, shape) = match rest {
        [c, s] => (Color::from_name(c), Shape::from_name(s)),
        [s] => (None, Shape::from_name(s)),
        _ => return Vec::new(),
    };
    let Some(shape) = shape else { return Vec::new() };
    let matches: Vec<usize> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.shape == shape && color.is_none_or(|c| o.color == c))
        .map(|(i, _)| i)
        .collect();
    match side {
        None => matches,
        Some(left) => {
            let key = |i: &usize| scene.objects[*i].cx;
            let best = if left {
                matches.iter().map(key).min()
            } else {
                matches.iter().map(key).max()
            };
            matches.into_iter().filter(|i| Some(key(i)) == best).collect()
        }
    }
}

/// A closed-set question about the scene with its answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub text: String,
    pub answer: Color,
}

/// "what color is the {shape}" for every shape that occurs once.
pub fn derive_questions(scene: &SceneSpec) -> Vec<Question> {
    scene
        .objects
        .iter()
        .filter(|o| scene.objects.iter().filter(|p| p.shape == o.shape).count() == 1)
        .map(|o| Question {
            text: format!("what color is the {}", o.shape.name()),
            answer: o.color,
        })
        .collect()
}
