pub const DEID_TAG: &str = "[deidt]";

const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Splits after `.`, `!` or `?` when followed by whitespace or the end.
/// Sentences are trimmed; empty ones are skipped.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    for (i, &ch) in chars.iter().enumerate() {
        current.push(ch);
        let terminal = matches!(ch, '.' | '!' | '?');
        let boundary = chars.get(i + 1).is_none_or(|c| c.is_whitespace());
        if terminal && boundary {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let rest = current.trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

/// Lowercased whitespace tokens; trailing `.,!?;:` is split into its own
/// token. `[deidt]` stays whole.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in sentence.split_whitespace() {
        let tok = raw.to_lowercase();
        if tok == DEID_TAG || tok.chars().count() == 1 {
            out.push(tok);
            continue;
        }
        let mut tail = Vec::new();
        let mut body = tok.as_str();
        while body.chars().count() > 1 && body != DEID_TAG {
            match body.chars().last() {
                Some(c) if TRAILING_PUNCT.contains(&c) => {
                    tail.push(c.to_string());
                    body = &body[..body.len() - c.len_utf8()];
                }
                _ => break,
            }
        }
        out.push(body.to_string());
        out.extend(tail.into_iter().rev());
    }
    out
}

pub fn default_verbs() -> Vec<String> {
    [
        "is", "are", "was", "were", "be", "been", "has", "have", "had", "shows", "show", "showed", "demonstrates",
        "demonstrated", "reveals", "revealed", "noted", "seen", "appears", "appear", "remains", "remain", "performed",
        "made", "identified", "suggests", "suggest", "measures", "measured", "compared",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Narrative heuristic on one tokenised sentence.
pub fn is_narrative(tokens: &[String], verbs: &[String]) -> bool {
    tokens.len() >= 4 && tokens.iter().any(|t| verbs.contains(t))
}

/// Keeps sentences with at least 4 tokens and a verb from `verbs`.
pub fn filter_narrative(sentences: &[String], verbs: &[String]) -> Vec<String> {
    sentences.iter().filter(|s| is_narrative(&tokenize(s), verbs)).cloned().collect()
}
