//! Deterministic rule-based decomposition, used when no model client is
//! configured or the client fails.
//!
//! Rules, applied in order over the token stream:
//!   1. aggregator lexicon matches become aggregator components;
//!   2. quoted spans, numbers, and capitalized multi-word spans become
//!      value components;
//!   3. remaining content words (after stop-word removal) become schema
//!      components.
//! Output order is appearance order, and every component name is a literal
//! substring of the query.

use super::{ComponentType, QueryComponent};

const AGGREGATOR_LEXICON: &[&str] = &[
    "average", "mean", "min", "max", "count", "sum", "total", "highest", "lowest", "most",
    "least", "top",
];

const STOP_WORDS: &[&str] = &[
    "a", "about", "after", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "between", "but", "by", "compare", "did", "do", "does", "done",
    "during", "each", "else", "every", "find", "for", "from", "get", "give", "had", "has",
    "have", "how", "if", "in", "into", "is", "it", "its", "link", "list", "many", "match", "me",
    "much", "near", "nearby", "no", "not", "of", "on", "or", "over", "pair", "per", "please",
    "relate", "show", "since", "some", "than", "that", "the", "their", "them", "then", "there",
    "these", "they", "this", "those", "through", "to", "under", "until", "us", "versus", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "whose", "why",
    "with", "within", "you", "your",
];

#[derive(Debug, Clone)]
struct Token {
    /// Char offsets of the trimmed core within the query.
    start: usize,
    end: usize,
    core: String,
}

/// Rule-based decomposition. Pure function of the query text.
pub fn fallback_decompose(query: &str) -> Vec<QueryComponent> {
    let chars: Vec<char> = query.chars().collect();
    let mut spans: Vec<(usize, QueryComponent)> = Vec::new();
    let mut consumed = vec![false; chars.len()];

    // Rule 2a first structurally: quoted spans may contain whitespace and
    // must be lifted before tokenization.
    for (start, end) in quoted_spans(&chars) {
        let inner: String = chars[start..end].iter().collect();
        if !inner.trim().is_empty() {
            spans.push((
                start,
                component(inner.trim(), ComponentType::Value, "quoted filter value"),
            ));
        }
        for flag in &mut consumed[start.saturating_sub(1)..(end + 1).min(chars.len())] {
            *flag = true;
        }
    }

    let tokens = tokenize(&chars, &consumed);
    let mut taken = vec![false; tokens.len()];

    // Rule 1: aggregator lexicon.
    for (i, token) in tokens.iter().enumerate() {
        if AGGREGATOR_LEXICON.contains(&token.core.to_lowercase().as_str()) {
            spans.push((
                token.start,
                component(&token.core, ComponentType::Aggregator, "aggregation operator"),
            ));
            taken[i] = true;
        }
    }

    // Rule 2b: capitalized multi-word spans (entity names).
    let mut i = 0;
    while i < tokens.len() {
        if taken[i] || !starts_uppercase(&tokens[i].core) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < tokens.len() && !taken[j + 1] && starts_uppercase(&tokens[j + 1].core) {
            j += 1;
        }
        let all_stop = tokens[i..=j]
            .iter()
            .all(|t| is_stop_word(&t.core) || AGGREGATOR_LEXICON.contains(&t.core.to_lowercase().as_str()));
        if j > i && !all_stop {
            let text: String = chars[tokens[i].start..tokens[j].end].iter().collect();
            spans.push((
                tokens[i].start,
                component(&text, ComponentType::Value, "named entity filter"),
            ));
            for flag in &mut taken[i..=j] {
                *flag = true;
            }
        }
        i = j + 1;
    }

    // Rule 2c: numeric tokens (plain numbers and years alike).
    for (i, token) in tokens.iter().enumerate() {
        if !taken[i] && is_numeric(&token.core) {
            spans.push((
                token.start,
                component(&token.core, ComponentType::Value, "numeric filter value"),
            ));
            taken[i] = true;
        }
    }

    // Rule 3: remaining content words.
    for (i, token) in tokens.iter().enumerate() {
        if taken[i] || is_stop_word(&token.core) {
            continue;
        }
        if token.core.chars().any(char::is_alphabetic) {
            spans.push((
                token.start,
                component(&token.core, ComponentType::Schema, "schema element candidate"),
            ));
        }
    }

    spans.sort_by_key(|(start, _)| *start);
    spans.into_iter().map(|(_, c)| c).collect()
}

fn component(name: &str, ctype: ComponentType, description: &str) -> QueryComponent {
    QueryComponent {
        name: name.to_string(),
        description: description.to_string(),
        ctype,
    }
}

fn quoted_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &c) in chars.iter().enumerate() {
        let is_quote = matches!(c, '"' | '\u{201c}' | '\u{201d}');
        if !is_quote {
            continue;
        }
        match open {
            None => open = Some(i + 1),
            Some(start) => {
                spans.push((start, i));
                open = None;
            }
        }
    }
    spans
}

fn tokenize(chars: &[char], consumed: &[bool]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() || consumed[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() && !consumed[i] {
            i += 1;
        }
        // Trim surrounding punctuation but keep interior marks (apostrophes,
        // decimal points, comma separators).
        let mut core_start = start;
        let mut core_end = i;
        while core_start < core_end && !chars[core_start].is_alphanumeric() {
            core_start += 1;
        }
        while core_end > core_start && !chars[core_end - 1].is_alphanumeric() {
            core_end -= 1;
        }
        if core_start < core_end {
            tokens.push(Token {
                start: core_start,
                end: core_end,
                core: chars[core_start..core_end].iter().collect(),
            });
        }
    }
    tokens
}

fn starts_uppercase(core: &str) -> bool {
    core.chars().next().is_some_and(char::is_uppercase)
}

fn is_stop_word(core: &str) -> bool {
    STOP_WORDS.contains(&core.to_lowercase().as_str())
}

fn is_numeric(core: &str) -> bool {
    let cleaned: String = core.chars().filter(|c| *c != ',').collect();
    !cleaned.is_empty() && cleaned.chars().any(|c| c.is_ascii_digit()) && cleaned.parse::<f64>().is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names_of(components: &[QueryComponent], ctype: ComponentType) -> Vec<String> {
        components
            .iter()
            .filter(|c| c.ctype == ctype)
            .map(|c| c.name.clone())
            .collect()
    }

    #[test]
    fn worked_example_matches_hand_application_of_rules() {
        // By hand: "average" hits the aggregator lexicon; "Luka Dončić" is a
        // capitalized 2-token run; "2025" is numeric; "sale" and "jerseys"
        // survive stop-word removal.
        let components = fallback_decompose("average sale of Luka Dončić jerseys in 2025");
        assert_eq!(names_of(&components, ComponentType::Aggregator), vec!["average"]);
        assert_eq!(
            names_of(&components, ComponentType::Value),
            vec!["Luka Dončić", "2025"]
        );
        let schema = names_of(&components, ComponentType::Schema);
        assert!(schema.contains(&"sale".to_string()));
        assert!(schema.contains(&"jerseys".to_string()));
    }

    #[test]
    fn full_question_form_decomposes_the_same() {
        let components =
            fallback_decompose("What was the average sale of Luka Dončić jerseys in 2025?");
        assert_eq!(names_of(&components, ComponentType::Aggregator), vec!["average"]);
        assert_eq!(
            names_of(&components, ComponentType::Value),
            vec!["Luka Dončić", "2025"]
        );
        assert_eq!(names_of(&components, ComponentType::Schema), vec!["sale", "jerseys"]);
    }

    #[test]
    fn single_content_noun_yields_one_schema_component() {
        let components = fallback_decompose("tables");
        assert_eq!(components.len(), 1);
        assert_eq!(components[0].ctype, ComponentType::Schema);
        assert_eq!(components[0].name, "tables");
    }

    #[test]
    fn all_stop_words_yield_nothing() {
        assert!(fallback_decompose("the of and").is_empty());
    }

    #[test]
    fn quoted_span_becomes_value() {
        let components = fallback_decompose(r#"revenue for "acme corp" stores"#);
        assert_eq!(names_of(&components, ComponentType::Value), vec!["acme corp"]);
        let schema = names_of(&components, ComponentType::Schema);
        assert_eq!(schema, vec!["revenue", "stores"]);
    }

    #[test]
    fn appearance_order_is_preserved() {
        let components = fallback_decompose("count stores selling jerseys in 2025");
        let names: Vec<&str> = components.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["count", "stores", "selling", "jerseys", "2025"]);
    }

    #[test]
    fn names_are_substrings_of_the_query() {
        let queries = [
            "What was the average sale of Luka Dončić jerseys in 2025?",
            "count  double  spaced   tokens",
            r#"find "every quoted thing" and more"#,
            "Top Products By New York Stores, 1,000 units",
        ];
        for query in queries {
            for c in fallback_decompose(query) {
                assert!(
                    query.contains(&c.name),
                    "{:?} not a substring of {query:?}",
                    c.name
                );
            }
        }
    }

    #[test]
    fn sentence_initial_capital_is_not_an_entity() {
        let components = fallback_decompose("Which products sold best?");
        assert!(names_of(&components, ComponentType::Value).is_empty());
    }
}
