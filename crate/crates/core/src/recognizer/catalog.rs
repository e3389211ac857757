use std::collections::{BTreeMap, BTreeSet};

use crate::schema::{NodePath, SchemaSet};

use super::View;

/// Prefix tree over node names; a path is accepted only if every segment
/// continues an existing branch and it ends on a schema node.
#[derive(Debug, Clone, Default)]
pub struct PrefixTrie {
    children: BTreeMap<String, PrefixTrie>,
    terminal: bool,
}

impl PrefixTrie {
    pub fn insert(&mut self, path: &NodePath) {
        let mut node = self;
        for seg in path.segments() {
            node = node.children.entry(seg.clone()).or_default();
        }
        node.terminal = true;
    }

    pub fn contains(&self, path: &NodePath) -> bool {
        let mut node = self;
        for seg in path.segments() {
            match node.children.get(seg) {
                Some(next) => node = next,
                None => return false,
            }
        }
        node.terminal && !path.is_empty()
    }

    /// Segments that may follow `prefix`; empty when the prefix leaves the tree.
    pub fn continuations(&self, prefix: &[&str]) -> Vec<&str> {
        let mut node = self;
        for seg in prefix {
            match node.children.get(*seg) {
                Some(next) => node = next,
                None => return Vec::new(),
            }
        }
        node.children.keys().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub view: View,
    /// Node name followed by every distinct description given for the path.
    pub text: String,
}

/// Candidate views of a schema set, one per distinct path.
///
/// A path shared by several schemas is attributed to the first paper type
/// (in declaration order) that contains it.
#[derive(Debug, Clone)]
pub struct ViewCatalog {
    entries: Vec<CatalogEntry>,
    by_path: BTreeMap<NodePath, usize>,
    trie: PrefixTrie,
}

impl ViewCatalog {
    pub fn new(schemas: &SchemaSet) -> Self {
        Self::filtered(schemas, |_| true)
    }

    /// Catalog limited to views whose depth (in nodes) is in `depths`.
    pub fn restricted_to_depths(schemas: &SchemaSet, depths: &BTreeSet<usize>) -> Self {
        Self::filtered(schemas, |p| depths.contains(&p.len()))
    }

    fn filtered(schemas: &SchemaSet, keep: impl Fn(&NodePath) -> bool) -> Self {
        let mut entries: Vec<CatalogEntry> = Vec::new();
        let mut by_path: BTreeMap<NodePath, usize> = BTreeMap::new();
        let mut descriptions: Vec<Vec<String>> = Vec::new();
        for schema in schemas.iter() {
            for (path, node) in schema.walk() {
                if !keep(&path) {
                    continue;
                }
                let i = *by_path.entry(path.clone()).or_insert_with(|| {
                    entries.push(CatalogEntry {
                        view: View::new(path.clone(), schema.paper_type),
                        text: node.name.clone(),
                    });
                    descriptions.push(Vec::new());
                    entries.len() - 1
                });
                let desc = node.description.trim();
                if !desc.is_empty() && !descriptions[i].iter().any(|d| d == desc) {
                    descriptions[i].push(desc.to_string());
                }
            }
        }
        for (entry, descs) in entries.iter_mut().zip(descriptions) {
            for d in descs {
                entry.text.push_str(". ");
                entry.text.push_str(&d);
            }
        }
        let mut trie = PrefixTrie::default();
        for path in by_path.keys() {
            trie.insert(path);
        }
        ViewCatalog { entries, by_path, trie }
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, path: &NodePath) -> bool {
        self.trie.contains(path)
    }

    pub fn view(&self, path: &NodePath) -> Option<&View> {
        self.by_path.get(path).map(|&i| &self.entries[i].view)
    }

    pub fn trie(&self) -> &PrefixTrie {
        &self.trie
    }

    pub fn depths(&self) -> BTreeSet<usize> {
        self.by_path.keys().map(NodePath::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::PaperType;

    #[test]
    fn catalog_dedupes_shared_paths() {
        let schemas = SchemaSet::bundled();
        let catalog = ViewCatalog::new(&schemas);
        let distinct: BTreeSet<NodePath> = schemas.iter().flat_map(|s| s.all_paths()).collect();
        assert_eq!(catalog.len(), distinct.len());
        let root = catalog.view(&NodePath::parse("Abstract").unwrap()).unwrap();
        assert_eq!(root.schema_type, PaperType::AlgorithmInnovation);
        for p in &distinct {
            assert!(catalog.contains(p));
        }
    }

    #[test]
    fn trie_rejects_off_tree_paths() {
        let catalog = ViewCatalog::new(&SchemaSet::bundled());
        let trie = catalog.trie();
        assert!(!trie.contains(&NodePath::parse("Abstract/Nonexistent").unwrap()));
        assert!(!trie.contains(&NodePath::parse("Method").unwrap()));
        assert!(trie.continuations(&["Abstract", "Method"]).contains(&"Implementation"));
        assert!(trie.continuations(&["Nope"]).is_empty());
    }

    #[test]
    fn depth_restriction() {
        let schemas = SchemaSet::bundled();
        let only_root = ViewCatalog::restricted_to_depths(&schemas, &BTreeSet::from([1]));
        assert_eq!(only_root.len(), 1);
        let deep = ViewCatalog::restricted_to_depths(&schemas, &BTreeSet::from([4]));
        assert!(deep.entries().iter().all(|e| e.view.path.len() == 4));
        assert_eq!(deep.depths(), BTreeSet::from([4]));
    }
}
