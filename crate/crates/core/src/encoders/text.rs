use std::collections::HashMap;

use candle_core::{DType, Device, Tensor};

use crate::config::ModelConfig;
use crate::data::{Color, Shape, FUNCTION_WORDS};
use crate::error::{Error, Result};
use crate::nn::{constant, FeedForward, Init, LayerNorm, MultiHeadAttention, Scope};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Closed word-level vocabulary. Ids 0..3 are PAD, BOS, EOS, UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Every word the synthetic grammars can emit, plus the specials.
    pub fn standard() -> Self {
        let mut words: Vec<&str> = FUNCTION_WORDS.to_vec();
        words.extend(Color::ALL.iter().map(|c| c.name()));
        words.extend(Shape::ALL.iter().map(|s| s.name()));
        Self::from_words(&words).expect("standard vocabulary is duplicate-free")
    }

    pub fn from_words(words: &[&str]) -> Result<Self> {
        let all: Vec<String> = SPECIALS
            .iter()
            .chain(words.iter())
            .map(|w| w.to_string())
            .collect();
        let mut index = HashMap::new();
        for (i, w) in all.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::input(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words: all, index })
    }

    /// Parse a JSON object mapping word to id. Ids must be exactly `0..V`
    /// with the four specials in their reserved slots.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: HashMap<String, u32> = serde_json::from_str(text)?;
        let mut words = vec![None; map.len()];
        for (w, &id) in &map {
            let slot = words
                .get_mut(id as usize)
                .ok_or_else(|| Error::format(format!("vocabulary id {id} out of range")))?;
            if slot.replace(w.clone()).is_some() {
                return Err(Error::format(format!("vocabulary id {id} assigned twice")));
            }
        }
        let words: Vec<String> = words
            .into_iter()
            .map(|w| w.ok_or_else(|| Error::format("vocabulary ids are not contiguous")))
            .collect::<Result<_>>()?;
        for (i, s) in SPECIALS.iter().enumerate() {
            if words.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::format(format!("vocabulary id {i} must be {s}")));
            }
        }
        Ok(Self { words, index: map })
    }

    pub fn to_json(&self) -> String {
        let map: std::collections::BTreeMap<&str, u32> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i as u32))
            .collect();
        serde_json::to_string(&map).expect("vocabulary serializes")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Join the words of `ids`, skipping special tokens.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id > UNK)
            .filter_map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Token ids padded to `n_max`. Starts with BOS; PAD appears only after EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    len: usize,
}

impl TokenSequence {
    pub fn from_ids(tokens: &[u32], n_max: usize) -> Result<Self> {
        if tokens.first() != Some(&BOS) {
            return Err(Error::input("token sequence must begin with BOS"));
        }
        if tokens.len() > n_max {
            return Err(Error::input(format!(
                "{} tokens exceed n_max {n_max}",
                tokens.len()
            )));
        }
        if tokens.contains(&PAD) {
            return Err(Error::input("PAD inside the non-padded part of a sequence"));
        }
        if let Some(p) = tokens.iter().position(|&t| t == EOS) {
            if p + 1 != tokens.len() {
                return Err(Error::input("tokens after EOS"));
            }
        }
        let mut ids = tokens.to_vec();
        ids.resize(n_max, PAD);
        Ok(Self {
            ids,
            len: tokens.len(),
        })
    }

    /// Non-PAD prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.len]
    }

    pub fn padded(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Lowercase, split on whitespace, map to ids (UNK for unknown words), wrap
/// in BOS/EOS and pad to `n_max`. Words that do not fit are dropped, EOS is
/// always kept.
pub fn tokenize(text: &str, vocab: &Vocabulary, n_max: usize) -> Result<TokenSequence> {
    if n_max < 2 {
        return Err(Error::input("n_max must allow BOS and EOS"));
    }
    let mut tokens = vec![BOS];
    tokens.extend(
        text.split_whitespace()
            .map(|w| vocab.id(&w.to_lowercase()).unwrap_or(UNK))
            .take(n_max - 2),
    );
    tokens.push(EOS);
    TokenSequence::from_ids(&tokens, n_max)
}

/// Per-position text states `(batch, n, dim)` and the non-PAD length of
/// each sequence.
#[derive(Debug, Clone)]
pub struct TextQueryStates {
    pub states: Tensor,
    pub lengths: Vec<usize>,
}

impl TextQueryStates {
    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn width(&self) -> usize {
        self.states.dim(1).unwrap_or(0)
    }

    /// State at the last non-PAD position of each sequence, `(batch, dim)`.
    pub fn pooled(&self) -> Result<Tensor> {
        let (b, n, d) = self.states.dims3()?;
        let idx: Vec<u32> = self
            .lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| (i * n + len - 1) as u32)
            .collect();
        let idx = Tensor::new(idx, &Device::Cpu)?;
        Ok(self.states.reshape((b * n, d))?.index_select(&idx, 0)?)
    }
}

#[derive(Debug, Clone)]
struct TextBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

/// Causal transformer over token ids with learned positions.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    token_embedding: Tensor,
    position_embedding: Tensor,
    blocks: Vec<TextBlock>,
    final_norm: LayerNorm,
    n_max: usize,
}

impl TextEncoder {
    pub fn new(scope: &mut Scope<'_>, config: &ModelConfig, vocab_size: usize) -> Result<Self> {
        let d = config.dim;
        let token_embedding = scope.param("token_embedding", &[vocab_size, d], Init::Normal(0.3))?;
        let position_embedding =
            scope.param("position_embedding", &[config.n_max, d], Init::Normal(0.1))?;
        let blocks = (0..config.text_layers)
            .map(|i| {
                let mut s = scope.pp(format!("block{i}"));
                Ok(TextBlock {
                    ln1: LayerNorm::new(&mut s.pp("ln1"), d)?,
                    attn: MultiHeadAttention::new(&mut s.pp("attn"), d, config.heads)?,
                    ln2: LayerNorm::new(&mut s.pp("ln2"), d)?,
                    ffn: FeedForward::new(&mut s.pp("ffn"), d, config.ffn_dim)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            token_embedding,
            position_embedding,
            blocks,
            final_norm: LayerNorm::new(&mut scope.pp("final_norm"), d)?,
            n_max: config.n_max,
        })
    }

    /// Token embedding table `(V, dim)`, shared with the caption head.
    pub fn token_table(&self) -> &Tensor {
        &self.token_embedding
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn encode(&self, seqs: &[TokenSequence]) -> Result<TextQueryStates> {
        if seqs.is_empty() {
            return Err(Error::input("empty text batch"));
        }
        let n = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        if n == 0 || n > self.n_max {
            return Err(Error::input(format!("text width {n} outside 1..={}", self.n_max)));
        }
        let b = seqs.len();
        let d = self.token_embedding.dim(1)?;
        let dtype = self.token_embedding.dtype();
        let ids: Vec<u32> = seqs.iter().flat_map(|s| s.padded()[..n].to_vec()).collect();
        let ids = Tensor::new(ids, &Device::Cpu)?;
        let mut x = self
            .token_embedding
            .index_select(&ids, 0)?
            .reshape((b, n, d))?
            .broadcast_add(&self.position_embedding.narrow(0, 0, n)?)?;
        let causal = causal_bias(n, dtype)?;
        for block in &self.blocks {
            let h = block.ln1.forward(&x)?;
            x = (&x + block.attn.forward(&h, &h, &h, Some(&causal))?)?;
            x = (&x + block.ffn.forward(&block.ln2.forward(&x)?)?)?;
        }
        Ok(TextQueryStates {
            states: self.final_norm.forward(&x)?,
            lengths: seqs.iter().map(|s| s.len()).collect(),
        })
    }
}

fn causal_bias(n: usize, dtype: DType) -> Result<Tensor> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            v[i * n + j] = f64::NEG_INFINITY;
        }
    }
    constant(v, &[1, 1, n, n], dtype)
}
