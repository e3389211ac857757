//! Versioned instruction templates.

use serde_json::json;

use crate::model::ChildContent;
use crate::schema::{NodePath, SchemaNode};

pub const TEMPLATE_VERSION: &str = "v1";

const CLASSIFY: &str = include_str!("../../prompts/classify.v1.txt");
const EXTRACT: &str = include_str!("../../prompts/extract.v1.txt");
const AGGREGATE: &str = include_str!("../../prompts/aggregate.v1.txt");

pub fn classify(abstract_text: &str) -> String {
    CLASSIFY.replace("{abstract}", abstract_text)
}

/// The schema slot carries the single node being extracted.
pub fn extract(paper: &str, node: &SchemaNode, path: &NodePath) -> String {
    let schema = json!({
        "node_path": path.to_string(),
        "node_name": node.name,
        "node_desc": node.description,
        "node_value": "",
    });
    EXTRACT
        .replace("{schema}", &serde_json::to_string_pretty(&schema).expect("json"))
        .replace("{paper}", paper)
}

pub fn aggregate(parent: &SchemaNode, children: &[ChildContent]) -> String {
    AGGREGATE.replace("{tree}", &aggregation_tree(parent, children))
}

pub fn aggregation_tree(parent: &SchemaNode, children: &[ChildContent]) -> String {
    let tree = json!({
        "root_name": parent.name,
        "root_value": "",
        "children": children
            .iter()
            .map(|c| json!({
                "node_name": c.name,
                "node_desc": c.description,
                "node_value": c.content,
            }))
            .collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&tree).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_fill_their_slots() {
        let p = classify("An abstract.");
        assert!(p.ends_with("An abstract.\n"));
        assert!(!p.contains("{abstract}"));

        let node = SchemaNode::leaf("Operation", "training ops");
        let path = NodePath::parse("Abstract/Method/Implementation/Operation").unwrap();
        let p = extract("PAPER TEXT", &node, &path);
        assert!(p.contains("\"node_name\": \"Operation\""));
        assert!(p.contains("PAPER TEXT"));
        assert!(!p.contains("{schema}") && !p.contains("{paper}"));

        let parent = SchemaNode::leaf("Implementation", "");
        let kids = vec![ChildContent::new("Module", "m", "two layers")];
        let p = aggregate(&parent, &kids);
        assert!(p.contains("\"root_name\": \"Implementation\""));
        assert!(p.contains("two layers"));
    }
}
