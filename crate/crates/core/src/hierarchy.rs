//! Leader sets of a hierarchically led flock.
//!
//! Birds are labelled `1..=k` at every public boundary. Bird 1 is the
//! overall leader and watches nobody; every other bird `i` watches a
//! non-empty set of strictly lower-labelled birds, so the interaction
//! matrix is lower triangular.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a proposed set of leader sets is not a valid hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    TooFewBirds,
    LeaderOfFirstBird,
    EmptyLeaderSet,
    /// `j >= i`: a bird watching itself or a subordinate.
    ForwardReference { leader: usize },
    InvalidLabel { leader: usize },
    DuplicateLeader { leader: usize },
}

/// Rejection verdict naming the offending bird (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct HierarchyViolation {
    pub bird: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for HierarchyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.bird;
        match &self.kind {
            ViolationKind::TooFewBirds => write!(f, "hierarchy needs k >= 2 birds"),
            ViolationKind::LeaderOfFirstBird => {
                write!(f, "bird 1 is the overall leader and must have no leaders")
            }
            ViolationKind::EmptyLeaderSet => write!(f, "bird {b} has an empty leader set"),
            ViolationKind::ForwardReference { leader } => {
                write!(f, "bird {b} lists leader {leader}, but leaders must have a smaller label")
            }
            ViolationKind::InvalidLabel { leader } => {
                write!(f, "bird {b} lists invalid label {leader}")
            }
            ViolationKind::DuplicateLeader { leader } => {
                write!(f, "bird {b} lists leader {leader} twice")
            }
        }
    }
}

/// Check a candidate list of leader sets, where `sets[i - 1]` is `L(i)` in
/// 1-based labels. Returns the first violation found, scanning birds in order.
pub fn validate_hierarchy(sets: &[Vec<usize>]) -> Result<(), HierarchyViolation> {
    let k = sets.len();
    if k < 2 {
        return Err(HierarchyViolation { bird: k.max(1), kind: ViolationKind::TooFewBirds });
    }
    if !sets[0].is_empty() {
        return Err(HierarchyViolation { bird: 1, kind: ViolationKind::LeaderOfFirstBird });
    }
    for (idx, set) in sets.iter().enumerate().skip(1) {
        let bird = idx + 1;
        if set.is_empty() {
            return Err(HierarchyViolation { bird, kind: ViolationKind::EmptyLeaderSet });
        }
        for (pos, &leader) in set.iter().enumerate() {
            if leader == 0 {
                return Err(HierarchyViolation { bird, kind: ViolationKind::InvalidLabel { leader } });
            }
            if leader >= bird {
                return Err(HierarchyViolation {
                    bird,
                    kind: ViolationKind::ForwardReference { leader },
                });
            }
            if set[..pos].contains(&leader) {
                return Err(HierarchyViolation {
                    bird,
                    kind: ViolationKind::DuplicateLeader { leader },
                });
            }
        }
    }
    Ok(())
}

/// A validated hierarchy. Internally stores 0-based leader indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    leaders: Vec<Vec<usize>>,
}

impl Hierarchy {
    /// Build from 1-based leader sets; `sets[i - 1]` is `L(i)`.
    /// Leader order is kept as given.
    pub fn from_leader_sets(sets: Vec<Vec<usize>>) -> Result<Self, HierarchyViolation> {
        validate_hierarchy(&sets)?;
        let leaders = sets
            .into_iter()
            .map(|set| set.into_iter().map(|j| j - 1).collect())
            .collect();
        Ok(Hierarchy { leaders })
    }

    /// `L(i) = {i - 1}`.
    pub fn chain(k: usize) -> Result<Self, HierarchyViolation> {
        Self::from_leader_sets((1..=k).map(|i| if i == 1 { vec![] } else { vec![i - 1] }).collect())
    }

    /// `L(i) = {1}`.
    pub fn star(k: usize) -> Result<Self, HierarchyViolation> {
        Self::from_leader_sets((1..=k).map(|i| if i == 1 { vec![] } else { vec![1] }).collect())
    }

    /// `L(i) = {1, ..., i - 1}`.
    pub fn complete(k: usize) -> Result<Self, HierarchyViolation> {
        Self::from_leader_sets((1..=k).map(|i| (1..i).collect()).collect())
    }

    pub fn k(&self) -> usize {
        self.leaders.len()
    }

    /// 0-based leader indices of the bird at 0-based index `i`.
    pub fn leader_indices(&self, i: usize) -> &[usize] {
        &self.leaders[i]
    }

    /// 1-based leader labels of bird `label`.
    pub fn leader_labels(&self, label: usize) -> Vec<usize> {
        self.leaders[label - 1].iter().map(|j| j + 1).collect()
    }

    /// All leader sets in 1-based labels, `result[i - 1] = L(i)`.
    pub fn to_leader_sets(&self) -> Vec<Vec<usize>> {
        (1..=self.k()).map(|i| self.leader_labels(i)).collect()
    }
}
