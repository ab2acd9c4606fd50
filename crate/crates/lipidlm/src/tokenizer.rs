//! Character-level SMILES tokenizer: fixed special tokens, corpus-derived
//! character vocabulary, fixed-length single and pair encodings, and the
//! atom↔token alignment that token-level labels ride on.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::atom_char_offsets;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
/// First id available to corpus characters.
pub const N_SPECIAL: u32 = 5;

const SPECIAL_TOKENS: [(&str, u32); 5] = [
    ("[PAD]", PAD_ID),
    ("[UNK]", UNK_ID),
    ("[CLS]", CLS_ID),
    ("[SEP]", SEP_ID),
    ("[MASK]", MASK_ID),
];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("sequence needs {needed} positions but the budget is {budget}")]
    TooLong { needed: usize, budget: usize },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocab file invalid: {0}")]
    BadVocab(String),
}

/// Token→id map: specials at fixed ids 0–4, then every distinct character of
/// the corpus in sorted order. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Builds the vocabulary from corpus SMILES strings; deterministic.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(corpus: I) -> Result<Vocab, TokenizerError> {
        let mut chars: std::collections::BTreeSet<char> = std::collections::BTreeSet::new();
        let mut any = false;
        for s in corpus {
            any = true;
            chars.extend(s.chars());
        }
        if !any {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut token_to_id = BTreeMap::new();
        let mut id_to_token = Vec::new();
        for (tok, id) in SPECIAL_TOKENS {
            token_to_id.insert(tok.to_string(), id);
            id_to_token.push(tok.to_string());
        }
        for (i, c) in chars.into_iter().enumerate() {
            let id = N_SPECIAL + i as u32;
            token_to_id.insert(c.to_string(), id);
            id_to_token.push(c.to_string());
        }
        Ok(Vocab {
            token_to_id,
            id_to_token,
        })
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn char_id(&self, c: char) -> Option<u32> {
        self.token_to_id.get(c.to_string().as_str()).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn is_special(id: u32) -> bool {
        id < N_SPECIAL
    }

    /// Ids eligible as random MLM replacements.
    pub fn non_special_ids(&self) -> std::ops::Range<u32> {
        N_SPECIAL..self.size() as u32
    }

    /// Writes the vocab as a JSON object token→id.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &self.token_to_id)
            .map_err(|e| TokenizerError::BadVocab(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab, TokenizerError> {
        let f = BufReader::new(File::open(path)?);
        let token_to_id: BTreeMap<String, u32> =
            serde_json::from_reader(f).map_err(|e| TokenizerError::BadVocab(e.to_string()))?;
        let mut id_to_token = vec![String::new(); token_to_id.len()];
        for (tok, &id) in &token_to_id {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| TokenizerError::BadVocab(format!("id {id} out of range")))?;
            if !slot.is_empty() {
                return Err(TokenizerError::BadVocab(format!("duplicate id {id}")));
            }
            *slot = tok.clone();
        }
        for (tok, id) in SPECIAL_TOKENS {
            if token_to_id.get(tok).copied() != Some(id) {
                return Err(TokenizerError::BadVocab(format!(
                    "special token {tok} missing or misplaced"
                )));
            }
        }
        if id_to_token.iter().any(String::is_empty) {
            return Err(TokenizerError::BadVocab("ids not contiguous".to_string()));
        }
        Ok(Vocab {
            token_to_id,
            id_to_token,
        })
    }
}

/// A fixed-length encoded sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    /// 1 exactly on non-[PAD] positions.
    pub attention_mask: Vec<u8>,
    /// 0 over [CLS] + first sequence + [SEP]; 1 over the second sequence.
    pub segment_ids: Vec<u8>,
    /// Token position → atom ordinal; `None` on non-atom tokens.
    pub atom_alignment: Vec<Option<u32>>,
    /// Pair-classification label, set by [`encode_pair`].
    pub pair_label: Option<bool>,
    /// Characters that fell back to [UNK]; always 0 for corpus data.
    pub unk_count: usize,
}

impl EncodedInput {
    /// Projects per-atom labels onto token positions: atoms get their label,
    /// non-atom in-sequence tokens get `non_atom`, specials and padding get
    /// `ignore`.
    pub fn align_atom_labels<T: Copy>(&self, per_atom: &[T], non_atom: T, ignore: T) -> Vec<T> {
        self.ids
            .iter()
            .zip(&self.atom_alignment)
            .map(|(&id, align)| match align {
                Some(a) => per_atom[*a as usize],
                None if !Vocab::is_special(id) => non_atom,
                None => ignore,
            })
            .collect()
    }
}

/// Encodes one SMILES as `[CLS] chars [SEP] [PAD]…` of exactly `max_len`
/// positions. Sequences that do not fit are an error: truncation would
/// corrupt atom-aligned labels.
pub fn encode_single(s: &str, vocab: &Vocab, max_len: usize) -> Result<EncodedInput, TokenizerError> {
    let n_chars = s.chars().count();
    if n_chars + 2 > max_len {
        return Err(TokenizerError::TooLong {
            needed: n_chars + 2,
            budget: max_len,
        });
    }
    let mut ids = Vec::with_capacity(max_len);
    let mut unk_count = 0;
    ids.push(CLS_ID);
    for c in s.chars() {
        ids.push(vocab.char_id(c).unwrap_or_else(|| {
            unk_count += 1;
            UNK_ID
        }));
    }
    ids.push(SEP_ID);
    let content = ids.len();
    ids.resize(max_len, PAD_ID);

    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..content].fill(1);

    let mut atom_alignment = vec![None; max_len];
    for (ordinal, off) in atom_char_offsets(s).into_iter().enumerate() {
        atom_alignment[1 + off] = Some(ordinal as u32);
    }

    Ok(EncodedInput {
        ids,
        attention_mask,
        segment_ids: vec![0; max_len],
        atom_alignment,
        pair_label: None,
        unk_count,
    })
}

/// Encodes `[CLS] a [SEP] b [SEP] [PAD]…` with segment ids 0/1 and the pair
/// label. Atom alignment covers the first sequence only.
pub fn encode_pair(
    a: &str,
    b: &str,
    vocab: &Vocab,
    max_len: usize,
    label: bool,
) -> Result<EncodedInput, TokenizerError> {
    let (na, nb) = (a.chars().count(), b.chars().count());
    if na + nb + 3 > max_len {
        return Err(TokenizerError::TooLong {
            needed: na + nb + 3,
            budget: max_len,
        });
    }
    let mut ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    let mut unk_count = 0;
    let push = |ids: &mut Vec<u32>, segs: &mut Vec<u8>, id: u32, seg: u8| {
        ids.push(id);
        segs.push(seg);
    };
    push(&mut ids, &mut segment_ids, CLS_ID, 0);
    for c in a.chars() {
        let id = vocab.char_id(c).unwrap_or_else(|| {
            unk_count += 1;
            UNK_ID
        });
        push(&mut ids, &mut segment_ids, id, 0);
    }
    push(&mut ids, &mut segment_ids, SEP_ID, 0);
    for c in b.chars() {
        let id = vocab.char_id(c).unwrap_or_else(|| {
            unk_count += 1;
            UNK_ID
        });
        push(&mut ids, &mut segment_ids, id, 1);
    }
    push(&mut ids, &mut segment_ids, SEP_ID, 1);

    let content = ids.len();
    ids.resize(max_len, PAD_ID);
    segment_ids.resize(max_len, 0);
    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..content].fill(1);

    let mut atom_alignment = vec![None; max_len];
    for (ordinal, off) in atom_char_offsets(a).into_iter().enumerate() {
        atom_alignment[1 + off] = Some(ordinal as u32);
    }

    Ok(EncodedInput {
        ids,
        attention_mask,
        segment_ids,
        atom_alignment,
        pair_label: Some(label),
        unk_count,
    })
}

/// Inverse of [`encode_single`] up to specials: concatenates non-special
/// tokens.
pub fn decode(ids: &[u32], vocab: &Vocab) -> String {
    ids.iter()
        .filter(|&&id| !Vocab::is_special(id))
        .map(|&id| vocab.token(id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["CCO", "C1CC1", "CC(=O)OCC", "C[N+](C)C"]).unwrap()
    }

    #[test]
    fn vocab_layout() {
        let v = Vocab::build(["CCO", "C1CC1"]).unwrap();
        // specials + {'1', 'C', 'O'} in sorted order
        assert_eq!(v.size(), 8);
        assert_eq!(v.char_id('1'), Some(5));
        assert_eq!(v.char_id('C'), Some(6));
        assert_eq!(v.char_id('O'), Some(7));
        assert_eq!(v.char_id('N'), None);
        assert_eq!(v.token(0), "[PAD]");
        assert_eq!(v.token(4), "[MASK]");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            Vocab::build(std::iter::empty::<&str>()),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn encode_single_layout() {
        let v = vocab();
        let e = encode_single("CCO", &v, 8).unwrap();
        let c = v.char_id('C').unwrap();
        let o = v.char_id('O').unwrap();
        assert_eq!(e.ids, vec![CLS_ID, c, c, o, SEP_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.attention_mask, vec![1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(e.segment_ids, vec![0; 8]);
        assert_eq!(
            e.atom_alignment,
            vec![None, Some(0), Some(1), Some(2), None, None, None, None]
        );
        assert_eq!(e.unk_count, 0);
    }

    #[test]
    fn too_long_rejected_not_truncated() {
        let v = vocab();
        let s: String = std::iter::repeat('C').take(127).collect();
        assert!(matches!(
            encode_single(&s, &v, 128),
            Err(TokenizerError::TooLong {
                needed: 129,
                budget: 128
            })
        ));
        assert!(encode_single(&"C".repeat(126), &v, 128).is_ok());
    }

    #[test]
    fn head_tail_label_alignment() {
        let v = vocab();
        let e = encode_single("CCO", &v, 8).unwrap();
        // regions H, H, T; others = 2, ignore = -1
        let labels = e.align_atom_labels(&[0i32, 0, 1], 2, -1);
        assert_eq!(labels, vec![-1, 0, 0, 1, -1, -1, -1, -1]);
    }

    #[test]
    fn non_atom_chars_get_others_class() {
        let v = vocab();
        let e = encode_single("CC(=O)OCC", &v, 12).unwrap();
        let n_atoms = 6;
        let labels = e.align_atom_labels(&vec![7i32; n_atoms], 2, -1);
        // positions: CLS C C ( = O ) O C C SEP PAD
        assert_eq!(labels, vec![-1, 7, 7, 2, 2, 7, 2, 7, 7, 7, -1, -1]);
    }

    #[test]
    fn bracket_atom_alignment() {
        let v = vocab();
        let e = encode_single("C[N+](C)C", &v, 12).unwrap();
        // atom chars: C at 0 → pos 1, N at 2 → pos 3, C at 6 → pos 7, C at 8 → pos 9
        let mut expect = vec![None; 12];
        expect[1] = Some(0);
        expect[3] = Some(1);
        expect[7] = Some(2);
        expect[9] = Some(3);
        assert_eq!(e.atom_alignment, expect);
        // Every atom hit exactly once.
        let hits: Vec<u32> = e.atom_alignment.iter().flatten().copied().collect();
        assert_eq!(hits, vec![0, 1, 2, 3]);
    }

    #[test]
    fn encode_pair_layout() {
        let v = vocab();
        let e = encode_pair("CCO", "OCC", &v, 12, true).unwrap();
        assert_eq!(e.ids[0], CLS_ID);
        assert_eq!(e.ids[4], SEP_ID);
        assert_eq!(e.ids[8], SEP_ID);
        assert_eq!(e.segment_ids, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(e.attention_mask, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(e.pair_label, Some(true));
        assert!(matches!(
            encode_pair("CCO", "OCC", &v, 8, false),
            Err(TokenizerError::TooLong { .. })
        ));
    }

    #[test]
    fn unknown_chars_count_and_map_to_unk() {
        let v = Vocab::build(["CCO"]).unwrap();
        let e = encode_single("CXO", &v, 8).unwrap();
        assert_eq!(e.ids[2], UNK_ID);
        assert_eq!(e.unk_count, 1);
    }

    #[test]
    fn decode_strips_specials() {
        let v = vocab();
        for s in ["CCO", "CC(=O)OCC", "C[N+](C)C"] {
            let e = encode_single(s, &v, 32).unwrap();
            assert_eq!(decode(&e.ids, &v), s);
        }
    }

    #[test]
    fn vocab_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.json");
        let v = vocab();
        v.save(&p).unwrap();
        let loaded = Vocab::load(&p).unwrap();
        assert_eq!(v, loaded);
        // Byte-stable across rebuilds.
        let p2 = dir.path().join("vocab2.json");
        vocab().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }
}
