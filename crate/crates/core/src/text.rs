//! Word tokenization shared by the lexical baselines.

/// Lower-cased word tokens; any character that is neither alphabetic nor numeric
/// (Unicode whitespace and punctuation alike) separates tokens.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_whitespace() {
        let toks: Vec<_> = word_tokens("I think—you're WRONG,me!\tÜber").collect();
        assert_eq!(toks, ["i", "think", "you", "re", "wrong", "me", "über"]);
        assert_eq!(word_tokens("  ...  ").count(), 0);
    }
}
