/// Lowercase, split on whitespace and trim punctuation from both ends of each
/// token. Internal apostrophes ("it's") survive; tokens left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Number of whitespace-separated pieces, the unit the synthetic embedding
/// generator uses for token counts.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}
