//! Fixed motif shapes and a small exact isomorphism test.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Motif {
    pub name: &'static str,
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Motif {
    fn new(name: &'static str, num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        Self { name, num_nodes, edges: edges.to_vec() }
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.num_nodes, &self.edges)
    }
}

fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

pub fn house() -> Motif {
    Motif::new("house", 5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)])
}

pub fn cycle() -> Motif {
    Motif::new("cycle", 5, &cycle_edges(5))
}

/// Triangle with a two-edge tail.
pub fn crane() -> Motif {
    Motif::new("crane", 5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)])
}

/// 3x3 grid.
pub fn spu0() -> Motif {
    let mut edges = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let v = r * 3 + c;
            if c < 2 {
                edges.push((v, v + 1));
            }
            if r < 2 {
                edges.push((v, v + 3));
            }
        }
    }
    Motif::new("spu0", 9, &edges)
}

/// Hexagon.
pub fn spu1() -> Motif {
    Motif::new("spu1", 6, &cycle_edges(6))
}

/// Star with four leaves.
pub fn spu2() -> Motif {
    Motif::new("spu2", 5, &[(0, 1), (0, 2), (0, 3), (0, 4)])
}

/// Motif carried by an invariant bit value.
pub fn invariant_motifs() -> Vec<Motif> {
    vec![house(), cycle(), crane()]
}

/// Motif carried by a spurious bit value.
pub fn spurious_motifs() -> Vec<Motif> {
    vec![spu0(), spu1(), spu2()]
}

pub fn is_connected(num_nodes: usize, edges: &[(usize, usize)]) -> bool {
    if num_nodes == 0 {
        return true;
    }
    let adj = adjacency(num_nodes, edges);
    let mut seen = vec![false; num_nodes];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|x| x)
}

pub(crate) fn adjacency(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); num_nodes];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    adj
}

/// Exact isomorphism of two small undirected simple graphs by backtracking.
pub fn is_isomorphic(n1: usize, e1: &[(usize, usize)], n2: usize, e2: &[(usize, usize)]) -> bool {
    if n1 != n2 || e1.len() != e2.len() {
        return false;
    }
    let n = n1;
    let mut a = vec![vec![false; n]; n];
    let mut b = vec![vec![false; n]; n];
    for &(u, v) in e1 {
        a[u][v] = true;
        a[v][u] = true;
    }
    for &(u, v) in e2 {
        b[u][v] = true;
        b[v][u] = true;
    }
    let da: Vec<usize> = a.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
    let db: Vec<usize> = b.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
    let (mut sa, mut sb) = (da.clone(), db.clone());
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return false;
    }

    fn extend(
        i: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        a: &[Vec<bool>],
        b: &[Vec<bool>],
        da: &[usize],
        db: &[usize],
    ) -> bool {
        let n = a.len();
        if i == n {
            return true;
        }
        for j in 0..n {
            if used[j] || da[i] != db[j] {
                continue;
            }
            if (0..i).any(|p| a[i][p] != b[j][map[p]]) {
                continue;
            }
            map[i] = j;
            used[j] = true;
            if extend(i + 1, map, used, a, b, da, db) {
                return true;
            }
            used[j] = false;
        }
        false
    }

    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(0, &mut map, &mut used, &a, &b, &da, &db)
}
