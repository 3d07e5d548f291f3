//! Parsing of LLM extraction responses. Strict parsing expects the JSON
//! object the prompts ask for; the salvage path scans for the first
//! plausible bracketed array so a response wrapped in prose or a truncated
//! code fence still yields something instead of failing the passage.

use serde_json::Value;

/// Strict form: a JSON object with a `named_entities` array of strings.
pub(crate) fn parse_entity_response(text: &str) -> Option<Vec<String>> {
    let value = parse_json_lenient_fences(text)?;
    let items = value.get("named_entities")?.as_array()?;
    collect_strings(items)
}

/// Strict form: a JSON object with a `triples` array of arrays. Inner
/// arrays that are not exactly three strings are dropped individually;
/// only a malformed envelope fails the parse.
pub(crate) fn parse_triple_response(text: &str) -> Option<Vec<[String; 3]>> {
    let value = parse_json_lenient_fences(text)?;
    let items = value.get("triples")?.as_array()?;
    Some(collect_triples(items))
}

/// Bracket-scan fallback for entity responses: the first balanced array
/// found anywhere in the text, flattened to its string elements.
pub(crate) fn salvage_entities(text: &str) -> Vec<String> {
    match first_balanced_array(text) {
        Some(items) => collect_strings(&items).unwrap_or_default(),
        None => Vec::new(),
    }
}

/// Bracket-scan fallback for triple responses: the first balanced array
/// whose elements include at least one three-string tuple.
pub(crate) fn salvage_triples(text: &str) -> Vec<[String; 3]> {
    let mut from = 0;
    while let Some(offset) = text[from..].find('[') {
        let start = from + offset;
        if let Some(end) = balanced_span(&text[start..]) {
            if let Ok(Value::Array(items)) = serde_json::from_str(&text[start..start + end]) {
                let triples = collect_triples(&items);
                if !triples.is_empty() {
                    return triples;
                }
            }
        }
        from = start + 1;
    }
    Vec::new()
}

fn collect_strings(items: &[Value]) -> Option<Vec<String>> {
    items
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect()
}

fn collect_triples(items: &[Value]) -> Vec<[String; 3]> {
    let mut triples = Vec::new();
    for item in items {
        let Some(parts) = item.as_array() else {
            continue;
        };
        let strings: Vec<&str> = parts.iter().filter_map(Value::as_str).collect();
        if strings.len() == 3 && parts.len() == 3 {
            triples.push([strings[0].into(), strings[1].into(), strings[2].into()]);
        } else {
            log::warn!("dropping malformed triple {item}");
        }
    }
    triples
}

fn parse_json_lenient_fences(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    // Markdown code fences are the one decoration tolerated in strict mode.
    let unfenced: Vec<&str> = trimmed
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect();
    serde_json::from_str(&unfenced.join("\n")).ok()
}

/// Returns the parsed array of the first balanced `[...]` span in the text.
fn first_balanced_array(text: &str) -> Option<Vec<Value>> {
    let mut from = 0;
    while let Some(offset) = text[from..].find('[') {
        let start = from + offset;
        if let Some(end) = balanced_span(&text[start..]) {
            if let Ok(Value::Array(items)) = serde_json::from_str(&text[start..start + end]) {
                return Some(items);
            }
        }
        from = start + 1;
    }
    None
}

/// Length of the balanced bracket span starting at a `[`, respecting JSON
/// string literals and escapes. None when the brackets never close.
fn balanced_span(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_entities() {
        let got = parse_entity_response(r#"{"named_entities": ["Radio City", "India"]}"#).unwrap();
        assert_eq!(got, vec!["Radio City", "India"]);
        assert!(parse_entity_response("no json here").is_none());
        assert!(parse_entity_response(r#"{"entities": ["x"]}"#).is_none());
        // Non-string element fails strict mode rather than being skipped.
        assert!(parse_entity_response(r#"{"named_entities": ["x", 3]}"#).is_none());
    }

    #[test]
    fn strict_tolerates_code_fences() {
        let fenced = "```json\n{\"named_entities\": [\"a\"]}\n```";
        assert_eq!(parse_entity_response(fenced).unwrap(), vec!["a"]);
    }

    #[test]
    fn strict_triples_drop_malformed_items_individually() {
        let got = parse_triple_response(
            r#"{"triples": [["a","r","b"], ["a","r"], ["x","y","z","w"], 7, ["b","s","c"]]}"#,
        )
        .unwrap();
        assert_eq!(
            got,
            vec![
                ["a".to_string(), "r".into(), "b".into()],
                ["b".to_string(), "s".into(), "c".into()]
            ]
        );
    }

    #[test]
    fn salvage_finds_arrays_inside_prose() {
        let got = salvage_entities("Sure! The entities are [\"Alhandra\", \"Lisbon\"] as requested.");
        assert_eq!(got, vec!["Alhandra", "Lisbon"]);
        assert!(salvage_entities("nothing [unclosed").is_empty());
        // Brackets inside string literals do not confuse the scanner.
        let tricky = r#"noise ["a[b", "c]d"] tail"#;
        assert_eq!(salvage_entities(tricky), vec!["a[b", "c]d"]);
    }

    #[test]
    fn salvage_skips_non_triple_arrays() {
        let text = r#"{"named_entities": ["a"], "triples": [["a","r","b"]]}"#;
        assert_eq!(
            salvage_triples(text),
            vec![["a".to_string(), "r".into(), "b".into()]]
        );
        assert!(salvage_triples("[\"just\", \"strings\"]").is_empty());
    }
}
