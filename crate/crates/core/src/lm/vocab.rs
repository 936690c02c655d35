use serde::{Deserialize, Serialize};

pub const SPECIAL_COUNT: usize = 3;

/// Log keys occupy `0..key_count`; PAD, BOS and UNK follow in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub key_count: usize,
}

impl Vocabulary {
    pub fn new(key_count: usize) -> Self {
        Vocabulary { key_count }
    }

    pub fn size(&self) -> usize {
        self.key_count + SPECIAL_COUNT
    }

    pub fn pad(&self) -> usize {
        self.key_count
    }

    pub fn bos(&self) -> usize {
        self.key_count + 1
    }

    pub fn unk(&self) -> usize {
        self.key_count + 2
    }

    pub fn is_key(&self, token: usize) -> bool {
        token < self.key_count
    }

    pub fn is_special(&self, token: usize) -> bool {
        (self.key_count..self.size()).contains(&token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{KeyRegistry, LogTemplate};

    #[test]
    fn specials_follow_keys() {
        let v = Vocabulary::new(5);
        assert_eq!((v.pad(), v.bos(), v.unk()), (5, 6, 7));
        assert_eq!(v.size(), 8);
        assert!(v.is_key(4) && !v.is_key(5));
        assert!(v.is_special(7) && !v.is_special(8));
    }

    #[test]
    fn size_is_registered_templates_plus_specials() {
        let mut reg = KeyRegistry::new();
        for text in ["a", "b", "c", "a"] {
            reg.register(&LogTemplate {
                cluster: 0,
                tokens: vec![text.into()],
                match_count: 1,
            });
        }
        assert_eq!(Vocabulary::new(reg.len()).size(), 3 + SPECIAL_COUNT);
    }
}
