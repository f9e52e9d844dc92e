//! The decomposition instruction prompt and response parsing.
//!
//! One combined prompt extracts all three component types; each output entry
//! carries an explicit `component_type` so the response parses without
//! positional guessing. Rendering is plain placeholder splicing, not a
//! template engine, so braces in the query survive untouched.

use serde_json::Value;

use super::{ComponentType, DecomposeError, QueryComponent};

pub const PROMPT_TEMPLATE: &str = r#"---Goal---
Given a natural language query and a list of component types, identify all schema
element components, value components, and aggregator components from the text.

---Output---
For each identified component, extract the following information:
- component_name: Name of the component, use exact phrase from the input query.
  Keep each as short and concise as possible.
- component_description: Short description of the component's attributes and any
  potential context that might be helpful for understanding the role of the component
  within the query.
- component_type: One of "schema", "value", or "aggregator".

Return the components as a JSON array of objects with exactly those three fields.

---Schema Element Component Description---
The specific data schema element (e.g. table or column names) directly referenced
in the query. Think about which parts of the query are most likely to have counterparts
in the available data, and explain why. Be as concise as possible, and shave any
constraints or filtering phrases surrounding the schema element component.

Note: Exclude phrases that are more likely to refer to specific cell values rather than
schema elements. Only focus on elements most likely to have matching schema entries.

---Value Component Description---
Entities, literals, dates, or quantities from the query that act as filters or
conditions on the data rather than naming the data itself. These are phrases most
likely to appear as cell values.

---Aggregator Component Description---
Aggregation or comparison operations the query asks for (e.g. average, min, max,
count, sum). These map to operators rather than schema entries.

---Examples---
{few_shot_examples}

---Real Data---
Input Query:
{query}

Output:
"#;

/// Bundled few-shot examples: (query, rendered JSON output).
pub const FEW_SHOT_EXAMPLES: &[(&str, &str)] = &[
    (
        "What was the average sale of Luka Dončić jerseys in 2025?",
        r#"[
  {"component_name": "jersey", "component_description": "Merchandise item being sold; likely a product or merchandise table or column.", "component_type": "schema"},
  {"component_name": "sale", "component_description": "Sales transactions; likely a sales or orders table.", "component_type": "schema"},
  {"component_name": "Luka Dončić", "component_description": "Player name filtering which jerseys are counted.", "component_type": "value"},
  {"component_name": "2025", "component_description": "Year restricting the sales period.", "component_type": "value"},
  {"component_name": "average", "component_description": "Aggregation over the sale amounts.", "component_type": "aggregator"}
]"#,
    ),
    (
        "How many patients were admitted to the cardiology department last year?",
        r#"[
  {"component_name": "patients", "component_description": "People receiving care; likely a patients table.", "component_type": "schema"},
  {"component_name": "admitted", "component_description": "Admission events; likely an admissions table or admission date column.", "component_type": "schema"},
  {"component_name": "department", "component_description": "Hospital unit; likely a departments table or column.", "component_type": "schema"},
  {"component_name": "cardiology", "component_description": "Specific department name used as a filter.", "component_type": "value"},
  {"component_name": "last year", "component_description": "Time window restricting admissions.", "component_type": "value"},
  {"component_name": "How many", "component_description": "Count of matching patients.", "component_type": "aggregator"}
]"#,
    ),
    (
        "List the suppliers with the highest total shipment volume in Q3.",
        r#"[
  {"component_name": "suppliers", "component_description": "Vendor entities; likely a suppliers table.", "component_type": "schema"},
  {"component_name": "shipment volume", "component_description": "Quantity shipped; likely a shipments table or volume column.", "component_type": "schema"},
  {"component_name": "Q3", "component_description": "Quarter restricting the shipment period.", "component_type": "value"},
  {"component_name": "highest", "component_description": "Maximum over aggregated volumes.", "component_type": "aggregator"},
  {"component_name": "total", "component_description": "Sum of shipment volumes per supplier.", "component_type": "aggregator"}
]"#,
    ),
    (
        "Which store had the lowest revenue from electronics in March 2024?",
        r#"[
  {"component_name": "store", "component_description": "Retail location; likely a stores table.", "component_type": "schema"},
  {"component_name": "revenue", "component_description": "Income amounts; likely a revenue or sales column.", "component_type": "schema"},
  {"component_name": "electronics", "component_description": "Product category used as a filter.", "component_type": "value"},
  {"component_name": "March 2024", "component_description": "Month restricting the revenue period.", "component_type": "value"},
  {"component_name": "lowest", "component_description": "Minimum over store revenues.", "component_type": "aggregator"}
]"#,
    ),
];

fn rendered_few_shot() -> String {
    FEW_SHOT_EXAMPLES
        .iter()
        .map(|(query, output)| format!("Input Query:\n{query}\n\nOutput:\n{output}"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Substitutes the query and the bundled few-shot block into the template.
/// Byte-stable for a given query. The query text is spliced in verbatim and
/// never rescanned for placeholders.
pub fn render_prompt(query: &str) -> String {
    PROMPT_TEMPLATE
        .replace("{few_shot_examples}", &rendered_few_shot())
        .replace("{query}", query)
}

/// Extracts components from a model response. Accepts a bare JSON array, an
/// object with a `components` field, or either wrapped in a code fence.
/// Entries missing a usable name are dropped with a warning; unknown type
/// labels default to schema. A response with no usable components at all is
/// a parse error and the caller falls back.
pub fn parse_decomposition_response(raw: &str) -> Result<Vec<QueryComponent>, DecomposeError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(DecomposeError::Parse("empty response".into()));
    }
    let entries = extract_entries(trimmed)
        .ok_or_else(|| DecomposeError::Parse("no JSON component array found".into()))?;
    let total = entries.len();
    let mut components = Vec::new();
    for entry in entries {
        match parse_entry(&entry) {
            Some(component) => components.push(component),
            None => log::warn!("dropping malformed decomposition entry: {entry}"),
        }
    }
    if components.is_empty() {
        return Err(DecomposeError::Parse(format!(
            "no usable components among {total} entries"
        )));
    }
    Ok(components)
}

fn extract_entries(text: &str) -> Option<Vec<Value>> {
    let unfenced = strip_code_fence(text);
    let candidate = match serde_json::from_str::<Value>(unfenced) {
        Ok(value) => Some(value),
        Err(_) => {
            // Model chatter around the array: take the outermost brackets.
            let start = unfenced.find('[')?;
            let end = unfenced.rfind(']')?;
            serde_json::from_str::<Value>(&unfenced[start..=end]).ok()
        }
    }?;
    match candidate {
        Value::Array(items) => Some(items),
        Value::Object(mut map) => match map.remove("components") {
            Some(Value::Array(items)) => Some(items),
            _ => None,
        },
        _ => None,
    }
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(body) = rest.strip_suffix("```") {
            return body.trim();
        }
    }
    trimmed
}

fn parse_entry(entry: &Value) -> Option<QueryComponent> {
    let obj = entry.as_object()?;
    let name = obj
        .get("component_name")
        .or_else(|| obj.get("name"))
        .and_then(Value::as_str)?
        .trim();
    if name.is_empty() {
        return None;
    }
    let description = obj
        .get("component_description")
        .or_else(|| obj.get("description"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .trim()
        .to_string();
    let ctype = obj
        .get("component_type")
        .or_else(|| obj.get("type"))
        .and_then(Value::as_str)
        .map(ComponentType::parse_label)
        .unwrap_or(ComponentType::Schema);
    Some(QueryComponent {
        name: name.to_string(),
        description,
        ctype,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_contains_verbatim_section_header() {
        let prompt = render_prompt("Q");
        assert!(prompt.contains("---Schema Element Component Description---"));
        assert!(prompt.contains("Input Query:\nQ\n\nOutput:"));
    }

    #[test]
    fn prompt_is_byte_stable() {
        let q = "total revenue per region";
        assert_eq!(render_prompt(q), render_prompt(q));
    }

    #[test]
    fn braces_in_query_survive_literally() {
        let q = "what is {query} or {few_shot_examples} here";
        let prompt = render_prompt(q);
        assert!(prompt.contains(q));
    }

    #[test]
    fn well_formed_response_parses_in_order() {
        let raw = r#"[
            {"component_name": "sale", "component_description": "d1", "component_type": "schema"},
            {"component_name": "2025", "component_description": "d2", "component_type": "value"},
            {"component_name": "average", "component_description": "d3", "component_type": "aggregator"}
        ]"#;
        let components = parse_decomposition_response(raw).unwrap();
        assert_eq!(components.len(), 3);
        assert_eq!(components[0].name, "sale");
        assert_eq!(components[1].ctype, ComponentType::Value);
        assert_eq!(components[2].ctype, ComponentType::Aggregator);
    }

    #[test]
    fn malformed_entry_is_dropped_not_fatal() {
        let raw = r#"[
            {"component_name": "sale", "component_type": "schema"},
            {"component_description": "no name"},
            {"component_name": "store", "component_type": "schema"}
        ]"#;
        let components = parse_decomposition_response(raw).unwrap();
        assert_eq!(components.len(), 2);
    }

    #[test]
    fn empty_response_is_parse_error() {
        assert!(parse_decomposition_response("").is_err());
        assert!(parse_decomposition_response("no json here").is_err());
        assert!(parse_decomposition_response("[]").is_err());
    }

    #[test]
    fn fenced_and_wrapped_responses_parse() {
        let fenced = "```json\n[{\"component_name\": \"x\", \"component_type\": \"value\"}]\n```";
        assert_eq!(parse_decomposition_response(fenced).unwrap().len(), 1);
        let wrapped = r#"{"components": [{"component_name": "x"}]}"#;
        let parsed = parse_decomposition_response(wrapped).unwrap();
        assert_eq!(parsed[0].ctype, ComponentType::Schema); // missing type defaults
        let chatty = "Here you go:\n[{\"component_name\": \"x\", \"component_type\": \"bogus\"}]\nDone.";
        assert_eq!(
            parse_decomposition_response(chatty).unwrap()[0].ctype,
            ComponentType::Schema // unknown label defaults
        );
    }

    #[test]
    fn few_shot_examples_render_into_prompt() {
        let prompt = render_prompt("Q");
        for (query, _) in FEW_SHOT_EXAMPLES {
            assert!(prompt.contains(query), "missing example {query:?}");
        }
    }
}
