//! Pre-computed table of computationally feasible `(n_layer, n_head,
//! n_embd)` triples, ordered by a parameter-count cost proxy so that
//! architecture mutation can walk to adjacent rows.

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::model::GeneBounds;

/// Cost-model knobs for the feasibility filter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArchCostModel {
    /// Upper bound on vocabulary size used in the embedding term.
    pub vocab_upper_bound: usize,
    pub bytes_per_param: usize,
}

impl Default for ArchCostModel {
    fn default() -> Self {
        Self {
            vocab_upper_bound: 50_000,
            bytes_per_param: 8,
        }
    }
}

/// Weights, gradients and the two AdamW moment buffers.
const OPTIMIZER_MULTIPLIER: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchRow {
    pub n_layer: usize,
    pub n_head: usize,
    pub n_embd: usize,
    pub cost_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArchitectureTable {
    rows: Vec<ArchRow>,
}

/// Estimated bytes to train one model of this shape.
pub fn cost_proxy_bytes(n_layer: usize, n_embd: usize, cost: &ArchCostModel) -> u64 {
    let params = 12 * n_layer as u64 * (n_embd as u64).pow(2)
        + 2 * cost.vocab_upper_bound as u64 * n_embd as u64;
    params * cost.bytes_per_param as u64 * OPTIMIZER_MULTIPLIER
}

/// Enumerates every triple in `bounds` with `n_embd % n_head == 0` whose
/// cost proxy fits the budget, sorted ascending by cost with ties broken by
/// `(n_embd, n_layer, n_head)`.
pub fn build_architecture_table(
    bounds: &GeneBounds,
    cost: &ArchCostModel,
    memory_budget_bytes: u64,
) -> Result<ArchitectureTable, EvolveError> {
    let mut rows = Vec::new();
    for n_layer in bounds.n_layer.0..=bounds.n_layer.1 {
        for exp in bounds.n_embd_log2.0..=bounds.n_embd_log2.1 {
            let n_embd = 1usize << exp;
            let cost_bytes = cost_proxy_bytes(n_layer, n_embd, cost);
            if cost_bytes > memory_budget_bytes {
                continue;
            }
            for &n_head in &bounds.n_head_choices {
                if n_embd.is_multiple_of(n_head) {
                    rows.push(ArchRow {
                        n_layer,
                        n_head,
                        n_embd,
                        cost_bytes,
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(EvolveError::EmptyTable {
            budget: memory_budget_bytes,
        });
    }
    rows.sort_by(|a, b| {
        a.cost_bytes
            .cmp(&b.cost_bytes)
            .then(a.n_embd.cmp(&b.n_embd))
            .then(a.n_layer.cmp(&b.n_layer))
            .then(a.n_head.cmp(&b.n_head))
    });
    Ok(ArchitectureTable { rows })
}

impl ArchitectureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[ArchRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ArchRow {
        self.rows[i]
    }

    /// Index of an exact triple, when present.
    pub fn position(&self, n_layer: usize, n_head: usize, n_embd: usize) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.n_layer == n_layer && r.n_head == n_head && r.n_embd == n_embd)
    }

    /// Index of the exact triple, or of the cheapest row otherwise; mutation
    /// always has a defined starting point.
    pub fn position_or_nearest(&self, n_layer: usize, n_head: usize, n_embd: usize) -> usize {
        self.position(n_layer, n_head, n_embd).unwrap_or(0)
    }

    /// The one or two adjacent rows of index `i`.
    pub fn neighbors(&self, i: usize) -> (Option<usize>, Option<usize>) {
        let below = i.checked_sub(1);
        let above = if i + 1 < self.rows.len() { Some(i + 1) } else { None };
        (below, above)
    }
}
