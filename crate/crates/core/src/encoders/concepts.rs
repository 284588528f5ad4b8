use std::collections::HashSet;

use candle_core::Tensor;

use super::text::{tokenize, TextEncoder, TokenSequence, Vocabulary};
use crate::error::{Error, Result};

pub const BACKGROUND: &str = "background";

/// Prompted category embeddings. The last row is always "background".
#[derive(Debug, Clone)]
pub struct ConceptEmbeddingTable {
    pub names: Vec<String>,
    /// `(C, dim)` pooled text states of the prompted names.
    pub embeddings: Tensor,
}

impl ConceptEmbeddingTable {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn background_index(&self) -> usize {
        self.names.len() - 1
    }

    pub fn has_background(&self) -> bool {
        self.names.last().map(String::as_str) == Some(BACKGROUND)
    }
}

/// Substitute `name` for the single `{}` placeholder in `template`.
pub fn render_prompt(template: &str, name: &str) -> Result<String> {
    if template.matches("{}").count() != 1 {
        return Err(Error::input("template must contain exactly one {} placeholder"));
    }
    Ok(template.replacen("{}", name, 1))
}

pub fn encode_concepts(
    names: &[&str],
    template: &str,
    vocab: &Vocabulary,
    encoder: &TextEncoder,
) -> Result<ConceptEmbeddingTable> {
    let mut seen = HashSet::new();
    for n in names {
        if *n == BACKGROUND || !seen.insert(*n) {
            return Err(Error::input(format!("duplicate concept name {n:?}")));
        }
    }
    let mut all: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    all.push(BACKGROUND.to_string());
    let seqs: Vec<TokenSequence> = all
        .iter()
        .map(|n| tokenize(&render_prompt(template, n)?, vocab, encoder.n_max()))
        .collect::<Result<_>>()?;
    let embeddings = encoder.encode(&seqs)?.pooled()?;
    Ok(ConceptEmbeddingTable {
        names: all,
        embeddings,
    })
}
