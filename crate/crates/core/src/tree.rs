//! Spanning trees over items.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a tree was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeSource {
    #[default]
    Explicit,
    Polychoric,
    #[serde(rename = "partial-1f")]
    Partial1F,
    #[serde(rename = "partial-2f")]
    Partial2F,
    Path,
    Random,
}

/// The d − 1 edges of a spanning tree on items `0..d`, each stored as
/// `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawEdgeSet", into = "RawEdgeSet")]
pub struct EdgeSet {
    d: usize,
    edges: Vec<(usize, usize)>,
    source: TreeSource,
}

#[derive(Serialize, Deserialize)]
struct RawEdgeSet {
    d: usize,
    edges: Vec<(usize, usize)>,
    #[serde(default)]
    source: TreeSource,
}

impl TryFrom<RawEdgeSet> for EdgeSet {
    type Error = Error;
    fn try_from(r: RawEdgeSet) -> Result<Self> {
        Ok(EdgeSet::new(r.d, r.edges)?.with_source(r.source))
    }
}

impl From<EdgeSet> for RawEdgeSet {
    fn from(e: EdgeSet) -> Self {
        RawEdgeSet {
            d: e.d,
            edges: e.edges,
            source: e.source,
        }
    }
}

impl EdgeSet {
    /// Validates that `edges` form a spanning tree on `d` nodes. Edge order is
    /// kept; each pair is normalised to `(min, max)`.
    pub fn new(d: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput(format!(
                "a tree needs at least 2 nodes, got {d}"
            )));
        }
        if edges.len() != d - 1 {
            return Err(Error::InvalidInput(format!(
                "spanning tree on {d} nodes needs {} edges, got {}",
                d - 1,
                edges.len()
            )));
        }
        let mut parent: Vec<usize> = (0..d).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= d || b >= d || a == b {
                return Err(Error::InvalidInput(format!(
                    "invalid edge ({a}, {b}) for {d} nodes"
                )));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) closes a cycle"
                )));
            }
            parent[ra] = rb;
            norm.push((a.min(b), a.max(b)));
        }
        Ok(EdgeSet {
            d,
            edges: norm,
            source: TreeSource::Explicit,
        })
    }

    /// The path 0 – 1 – … – (d−1).
    pub fn path(d: usize) -> Result<Self> {
        Ok(Self::new(d, (1..d).map(|k| (k - 1, k)).collect())?.with_source(TreeSource::Path))
    }

    pub fn star(d: usize, center: usize) -> Result<Self> {
        Self::new(
            d,
            (0..d)
                .filter(|&k| k != center)
                .map(|k| (center, k))
                .collect(),
        )
    }

    /// Decodes a Prüfer sequence of length d − 2.
    pub fn from_prufer(seq: &[usize]) -> Result<Self> {
        let d = seq.len() + 2;
        if seq.iter().any(|&s| s >= d) {
            return Err(Error::InvalidInput("Prüfer entry out of range".into()));
        }
        let mut degree = vec![1usize; d];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(d - 1);
        for &s in seq {
            let leaf = (0..d)
                .find(|&i| degree[i] == 1)
                .expect("a leaf always exists");
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..d).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        Ok(Self::new(d, edges)?.with_source(TreeSource::Random))
    }

    pub fn with_source(mut self, source: TreeSource) -> Self {
        self.source = source;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn source(&self) -> TreeSource {
        self.source
    }

    /// Unordered edge membership.
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// For each node, the (neighbour, edge index) pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.d];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Breadth-first order from `root` as (child, parent, edge index); the
    /// root itself is not listed.
    pub fn bfs(&self, root: usize) -> Vec<(usize, usize, usize)> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.d];
        let mut out = Vec::with_capacity(self.d - 1);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for &(w, e) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    out.push((w, v, e));
                    queue.push_back(w);
                }
            }
        }
        out
    }

    /// Edge indices on the unique path between two nodes.
    pub fn path_between(&self, from: usize, to: usize) -> Vec<usize> {
        let order = self.bfs(from);
        let mut via = vec![None; self.d];
        for &(child, parent, e) in &order {
            via[child] = Some((parent, e));
        }
        let mut path = Vec::new();
        let mut v = to;
        while v != from {
            let (p, e) = via[v].expect("tree is connected");
            path.push(e);
            v = p;
        }
        path.reverse();
        path
    }

    /// Number of edges shared with another tree.
    pub fn shared_edges(&self, other: &EdgeSet) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| other.contains(a, b))
            .count()
    }
}
