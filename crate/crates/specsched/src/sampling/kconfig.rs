//! Per-depth fan-out configuration for candidate drafting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidate children drafted at each depth.
///
/// `KConfig(vec![1, 1, 1])` drafts a plain 3-token chain;
/// `KConfig(vec![2, 2, 1])` drafts 2 first tokens, 2 children under each of
/// those, and 1 child under each of *those* — a 10-node candidate tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct KConfig {
    counts: Vec<usize>,
}

impl KConfig {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidConfig(
                "fan-out config must have at least one depth".into(),
            ));
        }
        if let Some(&bad) = counts.iter().find(|&&c| c == 0) {
            return Err(Error::InvalidConfig(format!(
                "fan-out counts must be at least 1, got {bad}"
            )));
        }
        Ok(KConfig { counts })
    }

    /// A chain draft of `depth` tokens: one candidate per depth.
    pub fn chain(depth: usize) -> Result<Self> {
        KConfig::new(vec![1; depth])
    }

    /// Draft depth `k`: the maximum number of tokens a round can accept.
    pub fn depth(&self) -> usize {
        self.counts.len()
    }

    /// Fan-out at each depth, outermost first.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Whether every depth drafts exactly one candidate.
    pub fn is_chain(&self) -> bool {
        self.counts.iter().all(|&c| c == 1)
    }

    /// Total candidate nodes a full-support draft produces:
    /// `sum over depths j of the product of counts up to j`.
    pub fn node_budget(&self) -> usize {
        let mut total = 0;
        let mut layer = 1;
        for &c in &self.counts {
            layer *= c;
            total += layer;
        }
        total
    }
}

impl TryFrom<Vec<usize>> for KConfig {
    type Error = Error;

    fn try_from(counts: Vec<usize>) -> Result<Self> {
        KConfig::new(counts)
    }
}

impl From<KConfig> for Vec<usize> {
    fn from(k: KConfig) -> Vec<usize> {
        k.counts
    }
}
