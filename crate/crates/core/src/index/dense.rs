//! Exact (full-scan) cosine index.

use std::collections::BTreeMap;

use super::IndexError;
use crate::model::EmbeddingVector;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub(crate) dimension: usize,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) vectors: Vec<EmbeddingVector>,
}

impl DenseIndex {
    pub fn new(dimension: usize) -> Self {
        DenseIndex {
            dimension,
            doc_ids: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn push(&mut self, id: &str, vector: EmbeddingVector) -> Result<(), IndexError> {
        if vector.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.dimension(),
            });
        }
        self.doc_ids.push(id.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, doc: usize) -> &EmbeddingVector {
        &self.vectors[doc]
    }

    pub fn scores(&self, query: &EmbeddingVector) -> Result<BTreeMap<String, f64>, IndexError> {
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        Ok(self
            .doc_ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.clone(), query.cosine(v)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec())
    }

    #[test]
    fn identical_and_orthogonal() {
        let mut idx = DenseIndex::new(3);
        idx.push("a", v(&[1.0, 2.0, 3.0])).unwrap();
        idx.push("b", v(&[0.0, 3.0, -2.0])).unwrap();
        let s = idx.scores(&v(&[1.0, 2.0, 3.0])).unwrap();
        assert!((s["a"] - 1.0).abs() < 1e-9);
        assert!(s["b"].abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut idx = DenseIndex::new(2);
        assert!(idx.push("a", v(&[1.0])).is_err());
        idx.push("a", v(&[1.0, 0.0])).unwrap();
        assert!(matches!(
            idx.scores(&v(&[1.0, 0.0, 0.0])),
            Err(IndexError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }
}
