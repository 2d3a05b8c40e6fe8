//! Word-level vocabulary shared by the encoder and decoder.

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl Vocab {
    /// Builds a vocabulary from every word seen in `texts`, in order of first
    /// appearance after the special tokens.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for text in texts {
            for w in words(text) {
                if !index.contains_key(&w) {
                    index.insert(w.clone(), tokens.len() as u32);
                    tokens.push(w);
                }
            }
        }
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// `<s> w1 .. wn </s>`, truncated to `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<TokenSequence> {
        if max_len < 2 {
            return Err(Error::invalid(format!("max_len must be at least 2, got {max_len}")));
        }
        let mut ids = vec![BOS];
        ids.extend(words(text).map(|w| self.index.get(&w).copied().unwrap_or(UNK)));
        if ids.len() == 1 {
            return Err(Error::invalid("cannot tokenize empty text"));
        }
        ids.push(EOS);
        ids.truncate(max_len);
        let mask = vec![1; ids.len()];
        Ok(TokenSequence { ids, mask })
    }
}

/// Right-padded batch of token sequences.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    /// `(batch, len)` u32.
    pub ids: Tensor,
    /// `(batch, len)` in the model dtype, 1 on real tokens.
    pub mask: Tensor,
    pub host_ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn new(seqs: &[TokenSequence], dtype: DType, device: &Device) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let len = seqs.iter().map(TokenSequence::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * len);
        let mut mask = Vec::with_capacity(seqs.len() * len);
        let mut host_ids = Vec::with_capacity(seqs.len());
        for s in seqs {
            let mut row = s.ids.clone();
            row.resize(len, PAD);
            ids.extend_from_slice(&row);
            mask.extend(s.mask.iter().map(|&m| m as f64));
            mask.extend(std::iter::repeat_n(0.0, len - s.len()));
            host_ids.push(row);
        }
        let b = seqs.len();
        Ok(Self {
            ids: Tensor::from_vec(ids, (b, len), device)?,
            mask: Tensor::from_vec(mask, (b, len), device)?.to_dtype(dtype)?,
            host_ids,
            lengths: seqs.iter().map(TokenSequence::len).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.host_ids.len()
    }

    pub fn seq_len(&self) -> usize {
        self.host_ids.first().map_or(0, Vec::len)
    }

    /// Decoder input: every position except the last.
    pub fn shifted_inputs(&self) -> Result<Tensor> {
        Ok(self.ids.narrow(1, 0, self.seq_len() - 1)?)
    }

    /// Decoder targets and their mask: every position except the first.
    pub fn targets(&self) -> Result<(Tensor, Tensor)> {
        let n = self.seq_len() - 1;
        Ok((self.ids.narrow(1, 1, n)?, self.mask.narrow(1, 1, n)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["Hello world", "the quick brown fox"])
    }

    #[test]
    fn tokenizes_with_boundaries() {
        let v = vocab();
        let seq = v.tokenize("hello WORLD", 256).unwrap();
        assert_eq!(seq.ids, vec![BOS, 4, 5, EOS]);
        assert_eq!(seq.mask, vec![1, 1, 1, 1]);
        assert_eq!(v.tokenize("zebra", 256).unwrap().ids, vec![BOS, UNK, EOS]);
    }

    #[test]
    fn single_word_has_start_token_and_word() {
        let seq = vocab().tokenize("fox", 256).unwrap();
        assert!(seq.len() >= 2);
        assert_eq!(seq.ids[0], BOS);
    }

    #[test]
    fn truncates_and_is_deterministic() {
        let v = vocab();
        let long = "the quick brown fox ".repeat(200);
        let a = v.tokenize(&long, 256).unwrap();
        assert_eq!(a.len(), 256);
        assert_eq!(a, v.tokenize(&long, 256).unwrap());
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(vocab().tokenize("", 16).is_err());
        assert!(vocab().tokenize("  !! ", 16).is_err());
        assert!(vocab().tokenize("fox", 1).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = vocab();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }

    #[test]
    fn batch_pads_and_shifts() {
        let v = vocab();
        let seqs = [v.tokenize("hello", 8).unwrap(), v.tokenize("the quick fox", 8).unwrap()];
        let batch = TokenBatch::new(&seqs, DType::F64, &Device::Cpu).unwrap();
        assert_eq!(batch.seq_len(), 5);
        assert_eq!(batch.host_ids[0], vec![BOS, 4, EOS, PAD, PAD]);
        let mask = batch.mask.to_vec2::<f64>().unwrap();
        assert_eq!(mask[0], vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let (targets, tmask) = batch.targets().unwrap();
        assert_eq!(targets.to_vec2::<u32>().unwrap()[0], vec![4, EOS, PAD, PAD]);
        assert_eq!(tmask.to_vec2::<f64>().unwrap()[0], vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(batch.shifted_inputs().unwrap().to_vec2::<u32>().unwrap()[0], vec![BOS, 4, EOS, PAD]);
    }
}
