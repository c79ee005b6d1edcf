//! Final per-entity representations from the positive and negative models.

use std::collections::HashMap;

use log::info;
use thiserror::Error;

use crate::embed::{self, EmbedError, EmbeddingModel};

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("entities missing from both models: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("no entities to combine")]
    Empty,
    #[error("duplicate entity {0}")]
    Duplicate(String),
    #[error("vector for {entity} has length {got}, expected {expected}")]
    Length {
        entity: String,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Format(#[from] EmbedError),
}

/// Anything that maps tokens to fixed-length vectors.
pub trait Vectors {
    fn dim(&self) -> usize;
    fn vector(&self, token: &str) -> Option<&[f64]>;
}

impl Vectors for EmbeddingModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, token: &str) -> Option<&[f64]> {
        EmbeddingModel::vector(self, token)
    }
}

/// Token vectors read back from the embedding text format.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    dim: usize,
    map: HashMap<String, Vec<f64>>,
}

impl VectorSet {
    pub fn from_text(text: &str) -> Result<Self, FuseError> {
        let (dim, rows) = embed::read_vectors(text)?;
        Ok(VectorSet {
            dim,
            map: rows.into_iter().collect(),
        })
    }
}

impl Vectors for VectorSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, token: &str) -> Option<&[f64]> {
        self.map.get(token).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionStrategy {
    /// `[pos ‖ neg]`.
    #[default]
    Concat,
    /// A single model's vectors, used by the baselines.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityEmbeddingTable {
    entities: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    pub strategy: FusionStrategy,
    pub dim_pos: usize,
    pub dim_neg: usize,
}

impl EntityEmbeddingTable {
    pub fn from_rows(
        rows: Vec<(String, Vec<f64>)>,
        strategy: FusionStrategy,
        dim_pos: usize,
        dim_neg: usize,
    ) -> Result<Self, FuseError> {
        let expected = dim_pos + dim_neg;
        let mut index = HashMap::with_capacity(rows.len());
        let mut entities = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len());
        for (i, (e, v)) in rows.into_iter().enumerate() {
            if v.len() != expected {
                return Err(FuseError::Length {
                    entity: e,
                    got: v.len(),
                    expected,
                });
            }
            if index.insert(e.clone(), i).is_some() {
                return Err(FuseError::Duplicate(e));
            }
            entities.push(e);
            vectors.push(v);
        }
        Ok(EntityEmbeddingTable {
            entities,
            vectors,
            index,
            strategy,
            dim_pos,
            dim_neg,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim_pos + self.dim_neg
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn get(&self, entity: &str) -> Option<&[f64]> {
        self.index.get(entity).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> {
        self.entities
            .iter()
            .zip(&self.vectors)
            .map(|(e, v)| (e.as_str(), v.as_slice()))
    }

    pub fn to_text(&self) -> String {
        embed::write_vectors(self.dim(), self.iter())
    }

    /// Reads a table in the embedding text format; the split between the
    /// two halves is not recorded in the file and must be supplied.
    pub fn from_text(
        text: &str,
        strategy: FusionStrategy,
        dim_pos: usize,
    ) -> Result<Self, FuseError> {
        let (dim, rows) = embed::read_vectors(text)?;
        let dim_pos = dim_pos.min(dim);
        Self::from_rows(rows, strategy, dim_pos, dim - dim_pos)
    }
}

/// Concatenates `pos(e)` and `neg(e)` for each entity. A half missing from
/// its model is zero-filled; an entity missing from both is an error.
pub fn combine(
    pos: &impl Vectors,
    neg: &impl Vectors,
    entities: &[String],
    strategy: FusionStrategy,
) -> Result<EntityEmbeddingTable, FuseError> {
    if entities.is_empty() {
        return Err(FuseError::Empty);
    }
    if strategy == FusionStrategy::Single {
        return single(pos, entities);
    }
    let missing: Vec<String> = entities
        .iter()
        .filter(|e| pos.vector(e).is_none() && neg.vector(e).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(FuseError::Missing(missing));
    }
    let zeros_pos = vec![0.0; pos.dim()];
    let zeros_neg = vec![0.0; neg.dim()];
    let rows = entities
        .iter()
        .map(|e| {
            let p = pos.vector(e).unwrap_or_else(|| {
                info!("{e} has no positive walks; zero-filling positive half");
                &zeros_pos
            });
            let n = neg.vector(e).unwrap_or_else(|| {
                info!("{e} has no negative walks; zero-filling negative half");
                &zeros_neg
            });
            let mut v = Vec::with_capacity(p.len() + n.len());
            v.extend_from_slice(p);
            v.extend_from_slice(n);
            (e.clone(), v)
        })
        .collect();
    EntityEmbeddingTable::from_rows(rows, FusionStrategy::Concat, pos.dim(), neg.dim())
}

/// Table holding one model's vectors. Entities the model never saw are
/// zero vectors.
pub fn single(
    model: &impl Vectors,
    entities: &[String],
) -> Result<EntityEmbeddingTable, FuseError> {
    if entities.is_empty() {
        return Err(FuseError::Empty);
    }
    let rows = entities
        .iter()
        .map(|e| {
            let v = model
                .vector(e)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; model.dim()]);
            (e.clone(), v)
        })
        .collect();
    EntityEmbeddingTable::from_rows(rows, FusionStrategy::Single, model.dim(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Matrix, SkipGramConfig, Vocab};

    fn model(rows: &[(&str, &[f64])]) -> EmbeddingModel {
        let sentences: Vec<Vec<String>> = rows.iter().map(|(t, _)| vec![t.to_string()]).collect();
        let vocab = Vocab::build(&sentences, 1);
        let dim = rows.first().map_or(2, |r| r.1.len());
        let mut input = Matrix::zeros(vocab.len(), dim);
        for (t, v) in rows {
            input.row_mut(vocab.get(t).unwrap()).copy_from_slice(v);
        }
        let cfg = SkipGramConfig {
            dim,
            ..Default::default()
        };
        EmbeddingModel {
            outputs: vec![Matrix::zeros(vocab.len(), dim)],
            vocab,
            dim,
            window: cfg.window,
            order_aware: false,
            input,
        }
    }

    #[test]
    fn concatenates_halves() {
        let p = model(&[("e", &[1.0, 2.0])]);
        let n = model(&[("e", &[3.0, 4.0])]);
        let t = combine(&p, &n, &["e".into()], FusionStrategy::Concat).unwrap();
        assert_eq!(t.get("e").unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.dim(), 4);
    }

    #[test]
    fn zero_fills_missing_half() {
        let p = model(&[("e", &[1.0, 2.0]), ("f", &[5.0, 6.0])]);
        let n = model(&[("f", &[3.0, 4.0])]);
        let t = combine(&p, &n, &["e".into(), "f".into()], FusionStrategy::Concat).unwrap();
        assert_eq!(t.get("e").unwrap(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_everywhere_is_an_error() {
        let p = model(&[("e", &[1.0, 2.0])]);
        let n = model(&[("e", &[3.0, 4.0])]);
        let err = combine(
            &p,
            &n,
            &["e".into(), "ghost".into()],
            FusionStrategy::Concat,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"));
        assert!(matches!(
            combine(&p, &n, &[], FusionStrategy::Concat),
            Err(FuseError::Empty)
        ));
    }

    #[test]
    fn text_round_trip_keeps_bits() {
        let p = model(&[("e", &[0.1, 1.0 / 3.0])]);
        let n = model(&[("e", &[-7.25, 1e-300])]);
        let t = combine(&p, &n, &["e".into()], FusionStrategy::Concat).unwrap();
        let back =
            EntityEmbeddingTable::from_text(&t.to_text(), FusionStrategy::Concat, 2).unwrap();
        assert_eq!(back, t);
    }
}
