//! Labeled embedding sets.
//!
//! Labels are opaque and compared by equality only. Internally every label is
//! interned to a dense integer id; ids follow the ascending order of the label
//! text, so the id assignment depends on the label set alone and not on row
//! order.

use crate::error::{Error, Result};

/// Interned label id, dense in `0..num_labels()`.
pub type LabelId = u32;

/// `n` rows of `d`-dimensional embeddings with one label per row.
///
/// Immutable once built; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    values: Vec<f64>,
    dim: usize,
    labels: Vec<LabelId>,
    names: Vec<String>,
    counts: Vec<usize>,
}

/// Validates raw rows and labels into an [`EmbeddingSet`].
///
/// Integer and string labels are both accepted; they are compared by their
/// text form.
pub fn validate_dataset<R, L>(rows: &[R], labels: &[L]) -> Result<EmbeddingSet>
where
    R: AsRef<[f64]>,
    L: ToString,
{
    let first = rows.first().ok_or(Error::Empty)?;
    let dim = first.as_ref().len();
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut values = Vec::with_capacity(rows.len() * dim);
    for (row, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                row,
                expected: dim,
                found: r.len(),
            });
        }
        values.extend_from_slice(r);
    }
    let labels = labels.iter().map(ToString::to_string).collect();
    EmbeddingSet::from_flat(values, dim, labels)
}

impl EmbeddingSet {
    /// Builds a set from row-major `values` (`labels.len() * dim` of them).
    pub fn from_flat(values: Vec<f64>, dim: usize, labels: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if values.is_empty() && labels.is_empty() {
            return Err(Error::Empty);
        }
        if !values.len().is_multiple_of(dim) {
            let row = values.len() / dim;
            return Err(Error::DimensionMismatch {
                row,
                expected: dim,
                found: values.len() % dim,
            });
        }
        let rows = values.len() / dim;
        if rows == 0 {
            return Err(Error::Empty);
        }
        if labels.len() != rows {
            return Err(Error::LabelCountMismatch {
                rows,
                labels: labels.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }

        let mut names = labels.clone();
        names.sort_unstable();
        names.dedup();
        let mut counts = vec![0usize; names.len()];
        let ids = labels
            .iter()
            .map(|l| {
                let id = names.binary_search(l).expect("label was interned");
                counts[id] += 1;
                id as LabelId
            })
            .collect();

        Ok(Self {
            values,
            dim,
            labels: ids,
            names,
            counts,
        })
    }

    /// Number of rows `n`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major values, `len() * dim()` of them.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label_id(&self, i: usize) -> LabelId {
        self.labels[i]
    }

    pub fn label_ids(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.names[self.labels[i] as usize]
    }

    /// Distinct labels in ascending order; position equals [`LabelId`].
    pub fn label_names(&self) -> &[String] {
        &self.names
    }

    /// Label count `C`.
    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    /// Samples per label, indexed by [`LabelId`].
    pub fn label_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn label_to_id(&self, name: &str) -> Option<LabelId> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| i as LabelId)
    }

    /// Per-row label text, in row order.
    pub fn labels(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.labels.iter().map(|&id| self.names[id as usize].as_str())
    }

    /// Copies the given rows, in the given order, into a new set.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::RowOutOfRange {
                    row: r,
                    rows: self.len(),
                });
            }
            values.extend_from_slice(self.row(r));
            labels.push(self.label(r).to_owned());
        }
        Self::from_flat(values, self.dim, labels)
    }

    /// Returns a copy with every label mapped through `rename`.
    pub fn relabel(&self, mut rename: impl FnMut(&str) -> String) -> Result<Self> {
        let labels = self.labels().map(&mut rename).collect();
        Self::from_flat(self.values.clone(), self.dim, labels)
    }
}
