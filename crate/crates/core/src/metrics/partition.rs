use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with the `C mod S` labels that cannot fill a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    #[default]
    Drop,
    Error,
}

/// Disjoint groups of exactly `group_size` labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<String>>,
    pub group_size: usize,
    pub seed: u64,
    pub dropped_labels: Vec<String>,
}

impl GroupPartition {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Shuffles the label set with a seeded permutation and cuts it into
/// consecutive blocks of `group_size`.
///
/// Labels are first put in ascending order, so the result depends only on
/// the set of labels, `group_size` and `seed`.
pub fn build_partition<L: AsRef<str>>(
    labels: &[L],
    group_size: usize,
    seed: u64,
    remainder_policy: RemainderPolicy,
) -> Result<GroupPartition> {
    if group_size == 0 {
        return Err(Error::ZeroGroupSize);
    }
    let mut canonical: Vec<&str> = labels.iter().map(AsRef::as_ref).collect();
    canonical.sort_unstable();
    canonical.dedup();
    let c = canonical.len();
    if c < group_size {
        return Err(Error::NotEnoughLabels { labels: c, group_size });
    }
    let remainder = c % group_size;
    if remainder != 0 && remainder_policy == RemainderPolicy::Error {
        return Err(Error::Remainder {
            labels: c,
            group_size,
            remainder,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    canonical.shuffle(&mut rng);

    let full = c - remainder;
    let groups = canonical[..full]
        .chunks_exact(group_size)
        .map(|chunk| chunk.iter().map(|s| s.to_string()).collect())
        .collect();
    let dropped_labels = canonical[full..].iter().map(|s| s.to_string()).collect();
    Ok(GroupPartition {
        groups,
        group_size,
        seed,
        dropped_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("label{i}")).collect()
    }

    #[test]
    fn four_labels_two_groups() {
        for seed in 0..10 {
            let p = build_partition(&names(4), 2, seed, RemainderPolicy::Drop).unwrap();
            assert_eq!(p.group_count(), 2);
            assert!(p.dropped_labels.is_empty());
            let all: BTreeSet<_> = p.groups.iter().flatten().cloned().collect();
            assert_eq!(all.len(), 4);
        }
    }

    #[test]
    fn remainder_handling() {
        let p = build_partition(&names(5), 2, 3, RemainderPolicy::Drop).unwrap();
        assert_eq!(p.group_count(), 2);
        assert_eq!(p.dropped_labels.len(), 1);
        assert!(matches!(
            build_partition(&names(5), 2, 3, RemainderPolicy::Error),
            Err(Error::Remainder {
                labels: 5,
                group_size: 2,
                remainder: 1
            })
        ));
        assert!(matches!(
            build_partition(&names(3), 4, 0, RemainderPolicy::Drop),
            Err(Error::NotEnoughLabels {
                labels: 3,
                group_size: 4
            })
        ));
        assert!(matches!(
            build_partition(&names(3), 0, 0, RemainderPolicy::Drop),
            Err(Error::ZeroGroupSize)
        ));
    }

    #[test]
    fn order_of_input_labels_does_not_matter() {
        let mut shuffled = names(9);
        shuffled.reverse();
        shuffled.push("label3".into());
        let a = build_partition(&names(9), 3, 42, RemainderPolicy::Drop).unwrap();
        let b = build_partition(&shuffled, 3, 42, RemainderPolicy::Drop).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_change_the_grouping() {
        let a = build_partition(&names(40), 4, 1, RemainderPolicy::Drop).unwrap();
        let b = build_partition(&names(40), 4, 2, RemainderPolicy::Drop).unwrap();
        assert_ne!(a.groups, b.groups);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn partition_invariants(
            labels in prop::collection::btree_set("[a-zé]{1,6}", 1..60),
            s in 1usize..8,
            seed in any::<u64>(),
        ) {
            let labels: Vec<String> = labels.into_iter().collect();
            prop_assume!(labels.len() >= s);
            let p = build_partition(&labels, s, seed, RemainderPolicy::Drop).unwrap();
            let again = build_partition(&labels, s, seed, RemainderPolicy::Drop).unwrap();
            prop_assert_eq!(serde_json::to_vec(&p).unwrap(), serde_json::to_vec(&again).unwrap());

            prop_assert!(p.groups.iter().all(|g| g.len() == s));
            prop_assert_eq!(p.dropped_labels.len(), labels.len() % s);
            let mut seen = BTreeSet::new();
            for l in p.groups.iter().flatten().chain(&p.dropped_labels) {
                prop_assert!(seen.insert(l.clone()), "label {} appears twice", l);
            }
            prop_assert_eq!(seen, labels.iter().cloned().collect::<BTreeSet<_>>());
        }
    }
}
