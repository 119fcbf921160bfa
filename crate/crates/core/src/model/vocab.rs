use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const OOV_TOKEN: &str = "<unk>";

/// Token-to-index map with a single out-of-vocabulary slot at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Indexes tokens in first-occurrence order after the OOV slot.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self { tokens: vec![OOV_TOKEN.to_string()], index: HashMap::new() };
        v.index.insert(OOV_TOKEN.to_string(), 0);
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<usize> {
        tokens.iter().take(max_len).map(|t| self.id(t.as_ref())).collect()
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(serde::de::Error::custom("vocabulary must start with the OOV token"));
        }
        let v = Vocab::build(&tokens[1..]);
        if v.len() != tokens.len() {
            return Err(serde::de::Error::custom("vocabulary contains duplicate tokens"));
        }
        Ok(v)
    }
}
