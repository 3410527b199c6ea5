//! Exact k-nearest-neighbor search.
//!
//! Two interchangeable backends answer the same queries: a linear scan and a
//! vantage-point tree. Results are ordered by `(squared distance, row id)`,
//! so equal distances resolve to the lower row id and both backends return
//! the same id sequence even on data with ties.
//!
//! Distances always accumulate in `f64` through [`squared_euclidean`]; the
//! tree only uses square roots to prune, never to rank.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    BruteForce,
    #[default]
    VpTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    SquaredEuclidean,
    /// Squared Euclidean distance between L2-normalized rows.
    Cosine,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::BruteForce => "brute",
            Backend::VpTree => "vptree",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "brute" | "brute_force" => Ok(Backend::BruteForce),
            "vptree" | "vp_tree" => Ok(Backend::VpTree),
            _ => Err(format!("unknown backend {s:?}, expected brute or vptree")),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::SquaredEuclidean => "l2",
            Distance::Cosine => "cosine",
        })
    }
}

impl FromStr for Distance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "l2" | "squared_euclidean" => Ok(Distance::SquaredEuclidean),
            "cosine" => Ok(Distance::Cosine),
            _ => Err(format!("unknown distance {s:?}, expected l2 or cosine")),
        }
    }
}

/// Squared Euclidean distance with a fixed four-lane summation order.
#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..4 {
            let d = x[lane] - y[lane];
            acc[lane] += d * d;
        }
    }
    for (lane, (x, y)) in ra.iter().zip(rb).enumerate() {
        let d = x - y;
        acc[lane] += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// A retrieved row and its squared distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` smallest neighbors seen so far.
struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, candidate: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(candidate);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if candidate < *worst {
                *worst = candidate;
            }
        }
    }

    /// Euclidean radius that still admits new candidates.
    #[inline]
    fn radius(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |n| n.distance.sqrt())
        }
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}

/// Exact nearest-neighbor index over the rows of an [`EmbeddingSet`].
///
/// Immutable after [`build_index`]; queries take `&self` and may run from
/// many threads at once.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    points: Cow<'a, [f64]>,
    dim: usize,
    rows: usize,
    backend: Backend,
    distance: Distance,
    tree: Option<VpTree>,
}

/// Builds an index over every row of `dataset`.
pub fn build_index(dataset: &EmbeddingSet, backend: Backend, distance: Distance) -> Result<NeighborIndex<'_>> {
    let dim = dataset.dim();
    let points = match distance {
        Distance::SquaredEuclidean => Cow::Borrowed(dataset.values()),
        Distance::Cosine => {
            let mut normalized = dataset.values().to_vec();
            for (row, chunk) in normalized.chunks_exact_mut(dim).enumerate() {
                let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNorm { row });
                }
                chunk.iter_mut().for_each(|v| *v /= norm);
            }
            Cow::Owned(normalized)
        }
    };
    let tree = match backend {
        Backend::BruteForce => None,
        Backend::VpTree => Some(VpTree::build(&points, dim)),
    };
    Ok(NeighborIndex {
        points,
        dim,
        rows: dataset.len(),
        backend,
        distance,
        tree,
    })
}

impl NeighborIndex<'_> {
    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    fn point(&self, id: usize) -> &[f64] {
        &self.points[id * self.dim..(id + 1) * self.dim]
    }

    /// Returns the `k` nearest row ids to row `query`, ascending by distance
    /// with ties broken by ascending row id.
    ///
    /// With `exclude_self` the gallery is every row except `query`.
    pub fn query_knn(&self, query: usize, k: usize, exclude_self: bool) -> Result<Vec<usize>> {
        Ok(self
            .query_knn_scored(query, k, exclude_self)?
            .into_iter()
            .map(|n| n.id)
            .collect())
    }

    pub fn query_knn_scored(&self, query: usize, k: usize, exclude_self: bool) -> Result<Vec<Neighbor>> {
        if query >= self.rows {
            return Err(Error::RowOutOfRange {
                row: query,
                rows: self.rows,
            });
        }
        let gallery = if exclude_self { self.rows - 1 } else { self.rows };
        check_k(k, gallery)?;
        let skip = exclude_self.then_some(query);
        Ok(self.search(self.point(query), k, skip))
    }

    /// Searches with an arbitrary query vector against all rows.
    pub fn query_point(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim {
            return Err(Error::QueryDimension {
                expected: self.dim,
                found: query.len(),
            });
        }
        check_k(k, self.rows)?;
        match self.distance {
            Distance::SquaredEuclidean => Ok(self.search(query, k, None)),
            Distance::Cosine => {
                let norm = query.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNormQuery);
                }
                let q: Vec<f64> = query.iter().map(|v| v / norm).collect();
                Ok(self.search(&q, k, None))
            }
        }
    }

    fn search(&self, query: &[f64], k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        let mut top = TopK::new(k);
        match &self.tree {
            None => {
                for id in 0..self.rows {
                    if Some(id) != skip {
                        top.offer(Neighbor {
                            id,
                            distance: squared_euclidean(query, self.point(id)),
                        });
                    }
                }
            }
            Some(tree) => tree.search(self, tree.root, query, skip, &mut top),
        }
        top.into_sorted()
    }
}

fn check_k(k: usize, gallery: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if k > gallery {
        return Err(Error::KTooLarge { k, gallery });
    }
    Ok(())
}

const LEAF_SIZE: usize = 8;

/// Relative slack on pruning tests; absorbs rounding in the triangle bound.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        vantage: usize,
        /// Largest vantage distance among `inside` rows.
        inside_max: f64,
        /// Smallest vantage distance among `outside` rows.
        outside_min: f64,
        inside: usize,
        outside: usize,
    },
}

#[derive(Debug, Clone)]
struct VpTree {
    nodes: Vec<Node>,
    ids: Vec<usize>,
    root: usize,
}

impl VpTree {
    fn build(points: &[f64], dim: usize) -> Self {
        let rows = points.len() / dim;
        let mut tree = VpTree {
            nodes: Vec::new(),
            ids: (0..rows).collect(),
            root: 0,
        };
        let mut scratch = Vec::new();
        tree.root = tree.build_node(points, dim, 0, rows, &mut scratch);
        tree
    }

    fn build_node(
        &mut self,
        points: &[f64],
        dim: usize,
        start: usize,
        end: usize,
        scratch: &mut Vec<(f64, usize)>,
    ) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        // Vantage point: lowest row id in the subset.
        let ids = &mut self.ids[start..end];
        let first = (0..ids.len()).min_by_key(|&i| ids[i]).expect("non-empty subset");
        ids.swap(0, first);
        let vantage = ids[0];
        let vp = &points[vantage * dim..(vantage + 1) * dim];

        scratch.clear();
        scratch.extend(
            ids[1..]
                .iter()
                .map(|&id| (squared_euclidean(vp, &points[id * dim..(id + 1) * dim]).sqrt(), id)),
        );
        let mid = scratch.len() / 2;
        scratch.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let inside_max = scratch[..mid].iter().map(|p| p.0).fold(0.0, f64::max);
        let outside_min = scratch[mid..].iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        for (dst, &(_, id)) in ids[1..].iter_mut().zip(scratch.iter()) {
            *dst = id;
        }

        self.nodes.push(Node::Leaf { start, end });
        let split = start + 1 + mid;
        let inside = self.build_node(points, dim, start + 1, split, scratch);
        let outside = self.build_node(points, dim, split, end, scratch);
        self.nodes[slot] = Node::Split {
            vantage,
            inside_max,
            outside_min,
            inside,
            outside,
        };
        slot
    }

    fn search(&self, index: &NeighborIndex<'_>, node: usize, query: &[f64], skip: Option<usize>, top: &mut TopK) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[start..end] {
                    if Some(id) != skip {
                        top.offer(Neighbor {
                            id,
                            distance: squared_euclidean(query, index.point(id)),
                        });
                    }
                }
            }
            Node::Split {
                vantage,
                inside_max,
                outside_min,
                inside,
                outside,
            } => {
                let sq = squared_euclidean(query, index.point(vantage));
                if Some(vantage) != skip {
                    top.offer(Neighbor {
                        id: vantage,
                        distance: sq,
                    });
                }
                let d = sq.sqrt();
                // Triangle inequality lower bounds for each side.
                let inside_lb = d - inside_max;
                let outside_lb = outside_min - d;
                let reachable = |lb: f64, bound: f64, top: &TopK| {
                    let radius = top.radius();
                    lb <= radius + PRUNE_SLACK * (d + bound + radius)
                };
                if inside_lb <= outside_lb {
                    if reachable(inside_lb, inside_max, top) {
                        self.search(index, inside, query, skip, top);
                    }
                    if reachable(outside_lb, outside_min, top) {
                        self.search(index, outside, query, skip, top);
                    }
                } else {
                    if reachable(outside_lb, outside_min, top) {
                        self.search(index, outside, query, skip, top);
                    }
                    if reachable(inside_lb, inside_max, top) {
                        self.search(index, inside, query, skip, top);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::validate_dataset;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> EmbeddingSet {
        let rows: Vec<[f64; 1]> = points.iter().map(|&p| [p]).collect();
        let labels: Vec<usize> = (0..points.len()).collect();
        validate_dataset(&rows, &labels).unwrap()
    }

    /// Independent oracle: sort every gallery row by (distance, id).
    fn sorted_oracle(set: &EmbeddingSet, query: usize, k: usize) -> Vec<usize> {
        let q = set.row(query);
        let mut all: Vec<(f64, usize)> = (0..set.len())
            .filter(|&i| i != query)
            .map(|i| (q.iter().zip(set.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|p| p.1).collect()
    }

    #[test]
    fn nearest_on_a_line() {
        let set = line(&[0.0, 1.0, 10.0, 11.0]);
        for backend in [Backend::BruteForce, Backend::VpTree] {
            let index = build_index(&set, backend, Distance::SquaredEuclidean).unwrap();
            assert_eq!(index.query_knn(0, 1, true).unwrap(), vec![1]);
            assert_eq!(index.query_knn(0, 3, true).unwrap(), vec![1, 2, 3]);
            assert_eq!(index.query_knn(0, 1, false).unwrap(), vec![0]);
        }
    }

    #[test]
    fn equidistant_neighbors_tie_break_by_id() {
        let set = line(&[0.0, 1.0, 2.0]);
        for backend in [Backend::BruteForce, Backend::VpTree] {
            let index = build_index(&set, backend, Distance::SquaredEuclidean).unwrap();
            assert_eq!(index.query_knn(1, 2, true).unwrap(), vec![0, 2]);
        }
    }

    #[test]
    fn k_beyond_gallery_is_an_error() {
        let set = line(&[0.0, 1.0, 2.0, 3.0]);
        let index = build_index(&set, Backend::VpTree, Distance::SquaredEuclidean).unwrap();
        assert!(matches!(
            index.query_knn(0, 4, true),
            Err(Error::KTooLarge { k: 4, gallery: 3 })
        ));
        assert!(matches!(index.query_knn(0, 0, true), Err(Error::ZeroK)));
        assert_eq!(index.query_knn(0, 4, false).unwrap().len(), 4);
        assert!(matches!(index.query_knn(9, 1, true), Err(Error::RowOutOfRange { .. })));
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let set = validate_dataset(&[[1.0, 0.0], [0.0, 0.0]], &["a", "b"]).unwrap();
        let err = build_index(&set, Backend::BruteForce, Distance::Cosine).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { row: 1 }));
    }

    #[test]
    fn cosine_ignores_magnitude() {
        let set = validate_dataset(&[[1.0, 0.0], [100.0, 1.0], [0.0, 1.0], [-3.0, -0.1]], &[0, 1, 2, 3]).unwrap();
        let index = build_index(&set, Backend::VpTree, Distance::Cosine).unwrap();
        assert_eq!(index.query_knn(0, 3, true).unwrap(), vec![1, 2, 3]);
        let hits = index.query_point(&[5.0, 0.0], 1).unwrap();
        assert_eq!(hits[0].id, 0);
        assert!(matches!(index.query_point(&[0.0, 0.0], 1), Err(Error::ZeroNormQuery)));
    }

    #[test]
    fn vptree_matches_brute_force_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..rows.len()).collect();
        let set = validate_dataset(&rows, &labels).unwrap();
        let brute = build_index(&set, Backend::BruteForce, Distance::SquaredEuclidean).unwrap();
        let tree = build_index(&set, Backend::VpTree, Distance::SquaredEuclidean).unwrap();
        for _ in 0..100 {
            let q = rng.random_range(0..set.len());
            let k = rng.random_range(1..20);
            let expected = sorted_oracle(&set, q, k);
            assert_eq!(brute.query_knn(q, k, true).unwrap(), expected);
            assert_eq!(tree.query_knn(q, k, true).unwrap(), expected);
            let point: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                brute.query_point(&point, k).unwrap(),
                tree.query_point(&point, k).unwrap()
            );
        }
    }

    /// Small integer grids produce many exact ties.
    fn tie_heavy_dataset() -> impl Strategy<Value = EmbeddingSet> {
        (1usize..5, 2usize..120).prop_flat_map(|(dim, n)| {
            prop::collection::vec(prop::collection::vec(-2i8..3, dim), n).prop_map(|rows| {
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(f64::from).collect())
                    .collect();
                let labels: Vec<usize> = (0..rows.len()).collect();
                validate_dataset(&rows, &labels).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn backends_agree_with_ties(set in tie_heavy_dataset(), q in any::<prop::sample::Index>(), k in 1usize..10) {
            let q = q.index(set.len());
            let k = k.min(set.len() - 1);
            let brute = build_index(&set, Backend::BruteForce, Distance::SquaredEuclidean).unwrap();
            let tree = build_index(&set, Backend::VpTree, Distance::SquaredEuclidean).unwrap();
            let expected = sorted_oracle(&set, q, k);
            let got = tree.query_knn_scored(q, k, true).unwrap();
            prop_assert_eq!(brute.query_knn(q, k, true).unwrap(), expected.clone());
            prop_assert_eq!(got.iter().map(|n| n.id).collect::<Vec<_>>(), expected);
            prop_assert!(got.windows(2).all(|w| w[0].distance <= w[1].distance));
            prop_assert!(got.iter().all(|n| n.id != q));
        }
    }
}
