//! Sentence tokenization, vocabularies and the recurrent sentence encoder.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{Ctx, Embedding, Linear, Lstm, ParamStore, Var};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Lowercases, splits on whitespace and strips every non-alphanumeric
/// character from each word. Words that become empty are dropped.
pub fn tokenize(raw: &str) -> Result<Vec<String>> {
    let words: Vec<String> = raw
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return Err(Error::InvalidArgument(format!("sentence {raw:?} has no words")));
    }
    Ok(words)
}

/// Word list with `<pad>` at 0 and `<unk>` at 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Sorted distinct words of the given sentences, after the reserved entries.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for s in sentences {
            set.extend(tokenize(s)?);
        }
        Self::from_words(RESERVED.iter().map(|s| s.to_string()).chain(set).collect())
    }

    fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[PAD] != RESERVED[PAD] || words[UNK] != RESERVED[UNK] {
            return Err(Error::Dataset("vocabulary must start with <pad> and <unk>".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Dataset(format!("vocabulary repeats {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// Never true; the reserved entries are always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(String::as_str)
    }

    /// Index of `word`, or [`UNK`].
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    /// One `index<TAB>word` line per entry.
    pub fn to_text(&self) -> String {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{i}\t{w}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Dataset(format!("vocabulary line {}: expected index<TAB>word", n + 1));
            let (i, w) = line.split_once('\t').ok_or_else(bad)?;
            if i.parse::<usize>().map_err(|_| bad())? != words.len() {
                return Err(Error::Dataset(format!(
                    "vocabulary line {}: index out of sequence",
                    n + 1
                )));
            }
            words.push(w.to_string());
        }
        Self::from_words(words)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// A sentence and its token indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionDescription {
    pub raw: String,
    pub tokens: Vec<usize>,
}

impl ActionDescription {
    pub fn new(raw: &str, vocab: &Vocabulary) -> Result<Self> {
        let tokens = tokenize(raw)?.iter().map(|w| vocab.lookup(w)).collect();
        Ok(Self {
            raw: raw.to_string(),
            tokens,
        })
    }
}

/// Word embeddings, a 2-layer LSTM, and a linear map from the concatenated
/// final `[h1, c1, h2, c2]` to `k` dimensions.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub embedding: Embedding,
    pub lstm: Lstm,
    pub proj: Linear,
    pub dim: usize,
}

impl TextEncoder {
    pub const LAYERS: usize = 2;

    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            embedding: Embedding::new(store, &format!("{name}.embed"), vocab, dim, rng),
            lstm: Lstm::new(store, &format!("{name}.lstm"), dim, dim, Self::LAYERS, rng),
            proj: Linear::new(store, &format!("{name}.proj"), 2 * Self::LAYERS * dim, dim, rng),
            dim,
        }
    }

    /// Encodes each token sequence to one row of a `B x k` matrix.
    ///
    /// Identical sequences are encoded once; sequences of equal length share
    /// one batched recurrence.
    pub fn encode<'t>(&self, ctx: &Ctx<'t, '_>, sentences: &[&[usize]]) -> Result<Var<'t>> {
        if sentences.is_empty() {
            return Err(Error::InvalidArgument("no sentences to encode".into()));
        }
        let mut unique: Vec<&[usize]> = Vec::new();
        let mut slot: Vec<usize> = Vec::with_capacity(sentences.len());
        for s in sentences {
            if s.is_empty() {
                return Err(Error::InvalidArgument("empty token sequence".into()));
            }
            let i = unique.iter().position(|u| u == s).unwrap_or_else(|| {
                unique.push(s);
                unique.len() - 1
            });
            slot.push(i);
        }
        let mut lengths: Vec<usize> = unique.iter().map(|u| u.len()).collect();
        lengths.sort_unstable();
        lengths.dedup();
        let mut parts = Vec::with_capacity(lengths.len());
        let mut row_of = vec![0; unique.len()];
        let mut next_row = 0;
        for len in lengths {
            let group: Vec<usize> = (0..unique.len()).filter(|&u| unique[u].len() == len).collect();
            let mut state = self.lstm.zero_state(ctx, group.len());
            for t in 0..len {
                let tokens: Vec<usize> = group.iter().map(|&u| unique[u][t]).collect();
                let x = self.embedding.forward(ctx, &tokens)?;
                state = self.lstm.step(ctx, x, &state)?.1;
            }
            let flat: Vec<Var<'t>> = state.iter().flat_map(|&(h, c)| [h, c]).collect();
            parts.push(self.proj.forward(ctx, ctx.tape().concat_cols(&flat))?);
            for &u in &group {
                row_of[u] = next_row;
                next_row += 1;
            }
        }
        let all = ctx.tape().concat_rows(&parts);
        let index: Vec<usize> = slot.iter().map(|&u| row_of[u]).collect();
        Ok(all.gather_rows(&index))
    }

    pub fn encode_one<'t>(&self, ctx: &Ctx<'t, '_>, desc: &ActionDescription) -> Result<Var<'t>> {
        self.encode(ctx, &[&desc.tokens])
    }
}
