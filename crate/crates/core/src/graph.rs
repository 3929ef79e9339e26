use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::motif::{invariant_motifs, is_connected, is_isomorphic};
use crate::scm::BitRecord;
use crate::{Error, Result};

/// An assembled graph with its ground-truth invariant edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGraph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_features: Vec<Vec<f64>>,
    pub label: usize,
    pub inv_edge_mask: Vec<bool>,
    pub bits: BitRecord,
    pub env_id: usize,
}

impl SyntheticGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.first().map_or(0, Vec::len)
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.num_nodes, &self.edges)
    }

    /// Subgraph spanned by the masked edges, relabeled to `0..n`.
    pub fn masked_subgraph(&self) -> (usize, Vec<(usize, usize)>) {
        let mut ids = std::collections::BTreeMap::new();
        let mut out = Vec::new();
        for (&(u, v), &m) in self.edges.iter().zip(&self.inv_edge_mask) {
            if !m {
                continue;
            }
            let n = ids.len();
            let a = *ids.entry(u).or_insert(n);
            let n = ids.len();
            let b = *ids.entry(v).or_insert(n);
            out.push((a, b));
        }
        (ids.len(), out)
    }

    /// Structural checks: simple, connected, consistent features, and a mask
    /// isomorphic to the invariant motif named by the bits.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.inv_edge_mask.len() != self.edges.len() {
            return bad("mask length differs from edge count".into());
        }
        if self.node_features.len() != self.num_nodes {
            return bad("one feature row per node expected".into());
        }
        let d = self.feature_dim();
        if self.node_features.iter().any(|r| r.len() != d) {
            return bad("ragged feature rows".into());
        }
        let mut seen = HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.num_nodes || v >= self.num_nodes {
                return bad(format!("edge ({u}, {v}) out of range"));
            }
            if u == v {
                return bad(format!("self loop at {u}"));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return bad(format!("duplicate edge ({u}, {v})"));
            }
        }
        if !self.is_connected() {
            return bad("graph is disconnected".into());
        }
        if self.bits.y != self.label {
            return bad("label disagrees with bits".into());
        }
        let motifs = invariant_motifs();
        let m = motifs
            .get(self.bits.c_bit)
            .ok_or_else(|| Error::InvalidParam("invariant bit out of range".into()))?;
        let (n, e) = self.masked_subgraph();
        if !is_isomorphic(n, &e, m.num_nodes, &m.edges) {
            return bad(format!("masked edges are not a {}", m.name));
        }
        Ok(())
    }
}
