//! Hierarchical register schemas.
//!
//! A schema is a tree of named information nodes. Every root-to-node path is a
//! *view*: the unit a query is routed to and the key of one index in the tree.
//! Schemas are data; the five bundled ones live in `schemas/*.json`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Separator used when a [`NodePath`] is rendered as a single string.
pub const PATH_SEPARATOR: char = '/';

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("empty node name at {path}")]
    EmptyName { path: String },
    #[error("node name {name:?} at {path} contains the reserved separator '/'")]
    ReservedSeparator { name: String, path: String },
    #[error("duplicate sibling name {name:?} under {path}")]
    DuplicateSibling { name: String, path: String },
    #[error("schema {0} has no nodes below the root")]
    EmptyTree(String),
    #[error("unknown paper type {0:?}")]
    UnknownPaperType(String),
    #[error("schema set is missing paper type {0}")]
    MissingType(PaperType),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The five paper categories, each owning one schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperType {
    AlgorithmInnovation,
    BenchmarkConstruction,
    MechanismExploration,
    Survey,
    TheoryProof,
}

impl PaperType {
    pub const ALL: [PaperType; 5] = [
        PaperType::AlgorithmInnovation,
        PaperType::BenchmarkConstruction,
        PaperType::MechanismExploration,
        PaperType::Survey,
        PaperType::TheoryProof,
    ];

    /// Canonical snake_case identifier, as used in schema files and URLs.
    pub fn as_str(self) -> &'static str {
        match self {
            PaperType::AlgorithmInnovation => "algorithm_innovation",
            PaperType::BenchmarkConstruction => "benchmark_construction",
            PaperType::MechanismExploration => "mechanism_exploration",
            PaperType::Survey => "survey",
            PaperType::TheoryProof => "theory_proof",
        }
    }

    /// Human-readable label, matching the category names in the classification prompt.
    pub fn label(self) -> &'static str {
        match self {
            PaperType::AlgorithmInnovation => "Algorithm Innovation",
            PaperType::BenchmarkConstruction => "Benchmark Construction",
            PaperType::MechanismExploration => "Mechanism Exploration",
            PaperType::Survey => "Survey and Review",
            PaperType::TheoryProof => "Theory Proof",
        }
    }
}

impl fmt::Display for PaperType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaperType {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaperType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SchemaError::UnknownPaperType(s.to_string()))
    }
}

/// One information node. Absent `children` in the file means a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaNode {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<SchemaNode>,
}

impl SchemaNode {
    pub fn leaf(name: &str, description: &str) -> Self {
        SchemaNode {
            name: name.to_string(),
            description: description.to_string(),
            children: Vec::new(),
        }
    }

    pub fn branch(name: &str, description: &str, children: Vec<SchemaNode>) -> Self {
        SchemaNode {
            name: name.to_string(),
            description: description.to_string(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn child(&self, name: &str) -> Option<&SchemaNode> {
        self.children.iter().find(|c| c.name == name)
    }
}

/// Root-to-node sequence of node names. Serialized as `"A/B/C"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(Vec<String>);

impl NodePath {
    pub fn new<I, S>(segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NodePath(segments.into_iter().map(Into::into).collect())
    }

    /// Parses a `/`-joined path. Empty segments are rejected.
    pub fn parse(s: &str) -> Option<Self> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return None;
        }
        let segments: Vec<String> = trimmed
            .split(PATH_SEPARATOR)
            .map(|seg| seg.trim().to_string())
            .collect();
        if segments.iter().any(String::is_empty) {
            return None;
        }
        Some(NodePath(segments))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    /// Number of nodes on the path, root included.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn parent(&self) -> Option<NodePath> {
        (self.0.len() > 1).then(|| NodePath(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn child(&self, name: &str) -> NodePath {
        let mut segments = self.0.clone();
        segments.push(name.to_string());
        NodePath(segments)
    }

    pub fn starts_with(&self, prefix: &NodePath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// Length of the longest common prefix, in nodes.
    pub fn common_prefix_len(&self, other: &NodePath) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "{PATH_SEPARATOR}")?;
            }
            f.write_str(seg)?;
        }
        Ok(())
    }
}

impl FromStr for NodePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodePath::parse(s).ok_or_else(|| format!("invalid node path {s:?}"))
    }
}

impl Serialize for NodePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        NodePath::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid node path {s:?}")))
    }
}

/// A validated schema tree for one paper type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterSchema {
    pub paper_type: PaperType,
    pub version: String,
    pub root: SchemaNode,
}

impl RegisterSchema {
    /// Builds a schema from parts and validates it.
    pub fn new(paper_type: PaperType, version: &str, root: SchemaNode) -> Result<Self, SchemaError> {
        let schema = RegisterSchema {
            paper_type,
            version: version.to_string(),
            root,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.root.children.is_empty() {
            return Err(SchemaError::EmptyTree(self.paper_type.to_string()));
        }
        fn walk(node: &SchemaNode, parent: &str) -> Result<(), SchemaError> {
            let here = if parent.is_empty() {
                node.name.clone()
            } else {
                format!("{parent}/{}", node.name)
            };
            if node.name.trim().is_empty() {
                return Err(SchemaError::EmptyName { path: here });
            }
            if node.name.contains(PATH_SEPARATOR) {
                return Err(SchemaError::ReservedSeparator {
                    name: node.name.clone(),
                    path: parent.to_string(),
                });
            }
            let mut seen = HashSet::new();
            for child in &node.children {
                if !seen.insert(child.name.as_str()) {
                    return Err(SchemaError::DuplicateSibling {
                        name: child.name.clone(),
                        path: here,
                    });
                }
            }
            node.children.iter().try_for_each(|c| walk(c, &here))
        }
        walk(&self.root, "")
    }

    /// Maximum number of nodes on any root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn depth(node: &SchemaNode) -> usize {
            1 + node.children.iter().map(depth).max().unwrap_or(0)
        }
        depth(&self.root)
    }

    pub fn node_count(&self) -> usize {
        fn count(node: &SchemaNode) -> usize {
            1 + node.children.iter().map(count).sum::<usize>()
        }
        count(&self.root)
    }

    /// Every root-to-node path, in pre-order.
    pub fn all_paths(&self) -> Vec<NodePath> {
        self.walk().into_iter().map(|(path, _)| path).collect()
    }

    /// Paths whose terminal node has no children.
    pub fn leaf_paths(&self) -> Vec<NodePath> {
        self.walk()
            .into_iter()
            .filter(|(_, node)| node.is_leaf())
            .map(|(path, _)| path)
            .collect()
    }

    /// Pre-order (path, node) pairs.
    pub fn walk(&self) -> Vec<(NodePath, &SchemaNode)> {
        fn visit<'a>(node: &'a SchemaNode, path: NodePath, out: &mut Vec<(NodePath, &'a SchemaNode)>) {
            out.push((path.clone(), node));
            for child in &node.children {
                visit(child, path.child(&child.name), out);
            }
        }
        let mut out = Vec::with_capacity(self.node_count());
        visit(&self.root, NodePath::new([self.root.name.clone()]), &mut out);
        out
    }

    pub fn node(&self, path: &NodePath) -> Option<&SchemaNode> {
        let (first, rest) = path.segments().split_first()?;
        if *first != self.root.name {
            return None;
        }
        rest.iter().try_fold(&self.root, |node, seg| node.child(seg))
    }

    pub fn validate_path(&self, path: &NodePath) -> bool {
        self.node(path).is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

/// Parses and validates a schema document.
pub fn load_schema(document: &str) -> Result<RegisterSchema, SchemaError> {
    let raw: RawSchema =
        serde_json::from_str(document).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    let paper_type = raw.paper_type.parse()?;
    let root = raw
        .root
        .ok_or_else(|| SchemaError::EmptyTree(raw.paper_type.clone()))?;
    RegisterSchema::new(paper_type, &raw.version, root)
}

#[derive(Deserialize)]
struct RawSchema {
    paper_type: String,
    #[serde(default)]
    version: String,
    root: Option<SchemaNode>,
}

const BUNDLED: [(PaperType, &str); 5] = [
    (
        PaperType::AlgorithmInnovation,
        include_str!("../schemas/algorithm_innovation.json"),
    ),
    (
        PaperType::BenchmarkConstruction,
        include_str!("../schemas/benchmark_construction.json"),
    ),
    (
        PaperType::MechanismExploration,
        include_str!("../schemas/mechanism_exploration.json"),
    ),
    (PaperType::Survey, include_str!("../schemas/survey.json")),
    (PaperType::TheoryProof, include_str!("../schemas/theory_proof.json")),
];

/// One schema per paper type.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSet {
    schemas: BTreeMap<PaperType, RegisterSchema>,
}

impl SchemaSet {
    pub fn new(schemas: impl IntoIterator<Item = RegisterSchema>) -> Result<Self, SchemaError> {
        let schemas: BTreeMap<_, _> = schemas.into_iter().map(|s| (s.paper_type, s)).collect();
        if let Some(missing) = PaperType::ALL.into_iter().find(|t| !schemas.contains_key(t)) {
            return Err(SchemaError::MissingType(missing));
        }
        Ok(SchemaSet { schemas })
    }

    /// The five schemas shipped with the crate.
    pub fn bundled() -> Self {
        let schemas = BUNDLED
            .iter()
            .map(|(ty, doc)| {
                let schema = load_schema(doc).expect("bundled schema is valid");
                debug_assert_eq!(schema.paper_type, *ty);
                schema
            })
            .collect::<Vec<_>>();
        SchemaSet::new(schemas).expect("bundled schemas cover all types")
    }

    /// Loads every `*.json` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, SchemaError> {
        let io_err = |source| SchemaError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        let mut schemas = Vec::new();
        for file in files {
            let doc = std::fs::read_to_string(&file).map_err(|source| SchemaError::Io {
                path: file.display().to_string(),
                source,
            })?;
            schemas.push(load_schema(&doc)?);
        }
        SchemaSet::new(schemas)
    }

    pub fn get(&self, paper_type: PaperType) -> &RegisterSchema {
        &self.schemas[&paper_type]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegisterSchema> {
        self.schemas.values()
    }

    /// Schema versions keyed by paper type.
    pub fn versions(&self) -> BTreeMap<PaperType, String> {
        self.schemas
            .iter()
            .map(|(ty, s)| (*ty, s.version.clone()))
            .collect()
    }

    /// True if `path` resolves in at least one schema.
    pub fn is_valid_view(&self, path: &NodePath) -> bool {
        self.schemas.values().any(|s| s.validate_path(path))
    }

    /// Greatest depth over all schemas.
    pub fn max_depth(&self) -> usize {
        self.schemas.values().map(RegisterSchema::depth).max().unwrap_or(0)
    }
}
