use std::collections::{BTreeSet, HashMap};

pub const PAD: &str = "<pad>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Ordered token set; ids 0..4 are `<pad> <sos> <eos> <unk>`, the rest
/// follow in byte order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const SOS_ID: usize = 1;
    pub const EOS_ID: usize = 2;
    pub const UNK_ID: usize = 3;

    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a String>) -> Self {
        let reserved = [PAD, SOS, EOS, UNK];
        let rest: BTreeSet<&str> =
            tokens.into_iter().map(String::as_str).filter(|t| !reserved.contains(t)).collect();
        Self::from_tokens(reserved.iter().copied().chain(rest).map(str::to_string).collect())
            .expect("reserved prefix present")
    }

    /// Rebuilds a vocabulary from its full token list.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < 4 || tokens[..4] != [PAD, SOS, EOS, UNK] {
            return None;
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return None;
        }
        Some(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `<unk>` for unknown tokens.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
