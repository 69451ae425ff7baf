//! Word-level tokenizer with fixed reserved ids.
//!
//! Text is lowercased and split into maximal alphanumeric runs (whitespace and
//! punctuation are boundaries and are dropped). Every sequence is framed as
//! `[BOS, w₁.., EOS, PAD..]` at a fixed length, truncating words so the EOS
//! always fits. Ids 0–3 are reserved: PAD, BOS, EOS, UNK; vocabulary entries
//! start at 4 and are dense.
//!
//! The vocabulary file format is one token per line; a token's id is its line
//! index among accepted lines plus 4, so ids stay dense. Lines starting with
//! `#` and blank lines are ignored and do not consume ids.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Number of reserved ids preceding the first vocabulary entry.
pub const RESERVED: u32 = 4;

/// Default sequence length, matching the encoder's usual context window.
pub const DEFAULT_MAX_LEN: usize = 77;

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    /// Build from an ordered token list. Tokens are lowercased; duplicates
    /// (after lowercasing), empty strings, and tokens with internal
    /// whitespace or punctuation are rejected since they could never match
    /// a word produced by `encode`.
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let mut vocab = Vocab {
            tokens: Vec::with_capacity(tokens.len()),
            ids: HashMap::with_capacity(tokens.len()),
        };
        for (i, tok) in tokens.iter().enumerate() {
            let tok = tok.as_ref().to_lowercase();
            if tok.is_empty() || !tok.chars().all(char::is_alphanumeric) {
                return Err(Error::format(format!(
                    "vocab entry {i} ({tok:?}) is not a single alphanumeric word"
                )));
            }
            let id = RESERVED + vocab.tokens.len() as u32;
            if vocab.ids.insert(tok.clone(), id).is_some() {
                return Err(Error::format(format!(
                    "vocab entry {i} ({tok:?}) duplicates an earlier token"
                )));
            }
            vocab.tokens.push(tok);
        }
        Ok(vocab)
    }

    /// Parse the one-token-per-line vocabulary format. `#` lines and blank
    /// lines are skipped without consuming an id.
    pub fn from_reader<R: std::io::BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            tokens.push(line.to_string());
        }
        Vocab::new(&tokens)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Vocab::from_reader(std::io::BufReader::new(file))
    }

    /// Total id count including the four reserved ids; all ids are dense in
    /// `[0, size)`.
    pub fn size(&self) -> usize {
        RESERVED as usize + self.tokens.len()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Token text for an id, with angle-bracket names for the reserved ids.
    pub fn token_of(&self, id: u32) -> Option<&str> {
        match id {
            PAD => Some("<pad>"),
            BOS => Some("<bos>"),
            EOS => Some("<eos>"),
            UNK => Some("<unk>"),
            _ => self.tokens.get((id - RESERVED) as usize).map(String::as_str),
        }
    }

    /// Tokenize into a framed, padded sequence of exactly `max_len` ids.
    /// Unknown words map to UNK; words beyond `max_len - 2` are dropped so
    /// the EOS always fits. Empty text yields `[BOS, EOS, PAD..]`.
    pub fn encode(&self, text: &str, max_len: usize) -> Result<TokenSeq> {
        if max_len < 2 {
            return Err(Error::contract(format!(
                "encode requires max_len >= 2 to frame BOS and EOS, got {max_len}"
            )));
        }
        let lowered = text.to_lowercase();
        let mut ids = Vec::with_capacity(max_len);
        ids.push(BOS);
        for word in lowered.split(|c: char| !c.is_alphanumeric()) {
            if word.is_empty() {
                continue;
            }
            if ids.len() == max_len - 1 {
                break; // reserve the final slot budget for EOS
            }
            ids.push(self.id_of(word).unwrap_or(UNK));
        }
        let eos_pos = ids.len();
        ids.push(EOS);
        ids.resize(max_len, PAD);
        Ok(TokenSeq { ids, eos_pos })
    }
}

/// A framed token sequence: `ids[0] == BOS`, `ids[eos_pos] == EOS`, PAD after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    ids: Vec<u32>,
    eos_pos: usize,
}

impl TokenSeq {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn eos_pos(&self) -> usize {
        self.eos_pos
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// Join prompt parts with `", "`, the bracket notation used when a preserved
/// concept is appended to a prompt. Whitespace-only parts are dropped; at
/// least one non-empty part is required.
pub fn join_prompt<S: AsRef<str>>(parts: &[S]) -> Result<String> {
    let kept: Vec<&str> = parts
        .iter()
        .map(|p| p.as_ref().trim())
        .filter(|p| !p.is_empty())
        .collect();
    if kept.is_empty() {
        return Err(Error::contract(
            "join_prompt requires at least one non-empty part".to_string(),
        ));
    }
    Ok(kept.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Vocab used across the tokenizer tests: "person" lands on id 10 and
    /// "smiling" on id 11.
    fn test_vocab() -> Vocab {
        Vocab::new(&[
            "old", "young", "elderly", "wrinkles", "gray", "hair", // ids 4..=9
            "person",  // id 10
            "smiling", // id 11
        ])
        .unwrap()
    }

    #[test]
    fn empty_text_frames_bos_eos_pad() {
        let seq = test_vocab().encode("", 6).unwrap();
        assert_eq!(seq.ids(), &[BOS, EOS, PAD, PAD, PAD, PAD]);
        assert_eq!(seq.eos_pos(), 1);
    }

    #[test]
    fn single_word_sequence() {
        let seq = test_vocab().encode("person", 6).unwrap();
        assert_eq!(seq.ids(), &[BOS, 10, EOS, PAD, PAD, PAD]);
        assert_eq!(seq.eos_pos(), 2);
    }

    #[test]
    fn punctuation_is_a_boundary_and_case_is_folded() {
        let seq = test_vocab().encode("Person, SMILING!", 6).unwrap();
        assert_eq!(seq.ids(), &[BOS, 10, 11, EOS, PAD, PAD]);
        assert_eq!(seq.eos_pos(), 3);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let seq = test_vocab().encode("person wearing hat", 8).unwrap();
        assert_eq!(seq.ids(), &[BOS, 10, UNK, UNK, EOS, PAD, PAD, PAD]);
    }

    #[test]
    fn truncation_always_leaves_room_for_eos() {
        let seq = test_vocab().encode("old young elderly wrinkles gray", 4).unwrap();
        assert_eq!(seq.ids(), &[BOS, 4, 5, EOS]);
        assert_eq!(seq.eos_pos(), 3);
    }

    #[test]
    fn max_len_below_two_is_rejected() {
        assert!(test_vocab().encode("person", 1).is_err());
    }

    #[test]
    fn vocab_file_ids_skip_comments_and_blanks() {
        let text = "# reserved 0-3 are implicit\nold\n\nyoung\n# comment\nperson\n";
        let vocab = Vocab::from_reader(std::io::Cursor::new(text)).unwrap();
        assert_eq!(vocab.size(), 7);
        assert_eq!(vocab.id_of("old"), Some(4));
        assert_eq!(vocab.id_of("young"), Some(5));
        assert_eq!(vocab.id_of("person"), Some(6));
        assert_eq!(vocab.token_of(6), Some("person"));
        assert_eq!(vocab.token_of(0), Some("<pad>"));
    }

    #[test]
    fn vocab_rejects_duplicates_and_non_words() {
        assert!(Vocab::new(&["old", "Old"]).is_err());
        assert!(Vocab::new(&["two words"]).is_err());
        assert!(Vocab::new(&[""]).is_err());
    }

    #[test]
    fn join_prompt_basic_and_bracket_form() {
        assert_eq!(join_prompt(&["old"]).unwrap(), "old");
        assert_eq!(
            join_prompt(&["person, elderly, wrinkles", "asian race"]).unwrap(),
            "person, elderly, wrinkles, asian race"
        );
    }

    #[test]
    fn join_prompt_drops_empty_parts_and_rejects_all_empty() {
        assert_eq!(join_prompt(&["", "old", "  "]).unwrap(), "old");
        assert!(join_prompt(&["", "  "]).is_err());
        assert!(join_prompt::<&str>(&[]).is_err());
    }

    proptest! {
        /// Framing invariants hold for arbitrary text: BOS first, exactly one
        /// EOS at eos_pos, PAD after, fixed length.
        #[test]
        fn encode_invariants(text in ".{0,200}", max_len in 2usize..40) {
            let seq = test_vocab().encode(&text, max_len).unwrap();
            prop_assert_eq!(seq.ids().len(), max_len);
            prop_assert_eq!(seq.ids()[0], BOS);
            prop_assert!(seq.eos_pos() >= 1 && seq.eos_pos() < max_len);
            prop_assert_eq!(seq.ids()[seq.eos_pos()], EOS);
            for (i, &id) in seq.ids().iter().enumerate() {
                if i > seq.eos_pos() {
                    prop_assert_eq!(id, PAD);
                } else {
                    prop_assert!((id as usize) < test_vocab().size());
                    if i > 0 && i < seq.eos_pos() {
                        prop_assert!(id != PAD && id != BOS && id != EOS);
                    }
                }
            }
        }

        /// Encoding is deterministic: the same text twice gives identical ids.
        #[test]
        fn encode_is_deterministic(text in ".{0,80}") {
            let a = test_vocab().encode(&text, 16).unwrap();
            let b = test_vocab().encode(&text, 16).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
