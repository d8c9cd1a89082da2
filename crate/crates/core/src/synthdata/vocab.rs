use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const SEP: u32 = 2;
pub const DIGIT_0: u32 = 3;
pub const LETTER_A: u32 = 13;
pub const START_OF_FACT: u32 = 39;
pub const END_OF_FACT: u32 = 40;

pub const BASE_SIZE: usize = 39;
pub const ANNOTATED_SIZE: usize = 41;

/// Fixed token-id assignment shared by every dataset and checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    annotated: bool,
}

impl Vocab {
    pub fn new(annotated: bool) -> Self {
        Vocab { annotated }
    }

    pub fn base() -> Self {
        Self::new(false)
    }

    pub fn annotated() -> Self {
        Self::new(true)
    }

    pub fn is_annotated(&self) -> bool {
        self.annotated
    }

    pub fn size(&self) -> usize {
        if self.annotated {
            ANNOTATED_SIZE
        } else {
            BASE_SIZE
        }
    }

    pub fn digit(d: u8) -> u32 {
        debug_assert!(d < 10);
        DIGIT_0 + u32::from(d)
    }

    pub fn letter(l: u8) -> u32 {
        debug_assert!(l < 26);
        LETTER_A + u32::from(l)
    }

    pub fn is_digit(id: u32) -> bool {
        (DIGIT_0..DIGIT_0 + 10).contains(&id)
    }

    pub fn is_letter(id: u32) -> bool {
        (LETTER_A..LETTER_A + 26).contains(&id)
    }

    pub fn id_of(&self, c: char) -> Option<u32> {
        match c {
            '|' => Some(SEP),
            '0'..='9' => Some(DIGIT_0 + (c as u32 - '0' as u32)),
            'a'..='z' => Some(LETTER_A + (c as u32 - 'a' as u32)),
            _ => None,
        }
    }

    /// Encodes raw characters (`|`, digits, lowercase letters).
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .map(|c| {
                self.id_of(c)
                    .ok_or_else(|| Error::parse("vocab", format!("unsupported character {c:?}")))
            })
            .collect()
    }

    pub fn token_str(&self, id: u32) -> Result<String> {
        if id as usize >= self.size() {
            return Err(Error::OutOfVocab {
                id,
                vocab: self.size(),
            });
        }
        Ok(match id {
            BOS => "<bos>".to_string(),
            EOS => "<eos>".to_string(),
            SEP => "|".to_string(),
            START_OF_FACT => "<|start_of_fact|>".to_string(),
            END_OF_FACT => "<|end_of_fact|>".to_string(),
            d if Self::is_digit(d) => char::from(b'0' + (d - DIGIT_0) as u8).to_string(),
            l => char::from(b'a' + (l - LETTER_A) as u8).to_string(),
        })
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        ids.iter().map(|&id| self.token_str(id)).collect()
    }

    pub fn check(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.size()) {
            Some(&id) => Err(Error::OutOfVocab {
                id,
                vocab: self.size(),
            }),
            None => Ok(()),
        }
    }
}
