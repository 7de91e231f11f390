//! Interaction graphs for cluster states.
//!
//! A `GraphSpec` is an undirected simple graph together with a partition of
//! its edges into parallel CZ patterns (no vertex twice per pattern), the
//! order in which entangling layers would be applied on hardware.
//!
//! Built-in layouts: `chain(n)` (two patterns), a rectangular lattice
//! `grid_full(r, c)` (four patterns: horizontal even/odd columns, vertical
//! split by the checkerboard parity of the upper endpoint), and the
//! brickwork `grid_sparse(r, c)` obtained from the full lattice by dropping
//! the fourth pattern, which keeps the graph connected at degree <= 3.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::pauli::{Basis, PauliString};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LayoutTag {
    Chain,
    GridSparse,
    GridFull,
    Custom,
}

#[derive(Clone, Debug)]
pub struct GraphSpec {
    n: usize,
    edges: Vec<(usize, usize)>,
    layout: LayoutTag,
    /// Edge indices per parallel CZ pattern; a partition of `0..edges.len()`.
    cz_patterns: Vec<Vec<usize>>,
}

impl GraphSpec {
    /// 1D chain `0-1-...-(n-1)` with even/odd edge patterns.
    pub fn chain(n: usize) -> Self {
        let edges: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        let even = (0..edges.len()).filter(|i| i % 2 == 0).collect();
        let odd = (0..edges.len()).filter(|i| i % 2 == 1).collect();
        let g = Self { n, edges, layout: LayoutTag::Chain, cz_patterns: vec![even, odd] };
        g.validate().expect("chain layout is always valid");
        g
    }

    fn grid(rows: usize, cols: usize, sparse: bool) -> Self {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        let mut patterns = vec![Vec::new(); 4];
        for r in 0..rows {
            for c in 0..cols.saturating_sub(1) {
                patterns[c % 2].push(edges.len());
                edges.push((id(r, c), id(r, c + 1)));
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols {
                let class = 2 + (r + c) % 2;
                if sparse && class == 3 {
                    continue;
                }
                patterns[class].push(edges.len());
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
        if sparse {
            patterns.truncate(3);
        }
        let layout = if sparse { LayoutTag::GridSparse } else { LayoutTag::GridFull };
        let g = Self { n: rows * cols, edges, layout, cz_patterns: patterns };
        g.validate().expect("grid layout is always valid");
        g
    }

    /// Full rectangular lattice, four CZ patterns.
    pub fn grid_full(rows: usize, cols: usize) -> Self {
        Self::grid(rows, cols, false)
    }

    /// Brickwork lattice: the full grid minus its fourth CZ pattern.
    pub fn grid_sparse(rows: usize, cols: usize) -> Self {
        Self::grid(rows, cols, true)
    }

    /// Arbitrary edge list; CZ patterns are derived greedily.
    pub fn custom(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let edges: Vec<(usize, usize)> =
            edges.into_iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect();
        let cz_patterns = greedy_patterns(&edges);
        let g = Self { n, edges, layout: LayoutTag::Custom, cz_patterns };
        g.validate()?;
        Ok(g)
    }

    pub fn with_patterns(
        n: usize,
        edges: Vec<(usize, usize)>,
        cz_patterns: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let g = Self { n, edges, layout: LayoutTag::Custom, cz_patterns };
        g.validate()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn layout(&self) -> LayoutTag {
        self.layout
    }

    pub fn cz_patterns(&self) -> &[Vec<usize>] {
        &self.cz_patterns
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            for v in [a, b] {
                if v >= self.n {
                    return Err(Error::VertexOutOfRange { vertex: v, n: self.n });
                }
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self loop at {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a},{b})")));
            }
        }
        let mut covered = vec![false; self.edges.len()];
        for (p, pat) in self.cz_patterns.iter().enumerate() {
            let mut busy = BTreeSet::new();
            for &e in pat {
                let (a, b) = *self
                    .edges
                    .get(e)
                    .ok_or_else(|| Error::InvalidGraph(format!("pattern {p}: no edge {e}")))?;
                if covered[e] {
                    return Err(Error::InvalidGraph(format!("edge {e} in two patterns")));
                }
                covered[e] = true;
                if !busy.insert(a) || !busy.insert(b) {
                    return Err(Error::InvalidGraph(format!(
                        "pattern {p} touches a vertex twice (edge {e})"
                    )));
                }
            }
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::InvalidGraph("patterns do not cover all edges".into()));
        }
        if self.layout == LayoutTag::Chain {
            let want: Vec<_> = (0..self.n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
            if self.edges != want {
                return Err(Error::InvalidGraph("chain tag on non-path edges".into()));
            }
        }
        Ok(())
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Vertex stabilizer `S_v = X_v prod_{w ~ v} Z_w`.
    pub fn stabilizer_of_vertex(&self, v: usize) -> Result<PauliString> {
        if v >= self.n {
            return Err(Error::VertexOutOfRange { vertex: v, n: self.n });
        }
        let mut p = PauliString::from_single(self.n, v, Basis::X);
        for w in self.neighbors(v) {
            p.mul_assign(&PauliString::from_single(self.n, w, Basis::Z));
        }
        Ok(p)
    }

    /// Mask of qubits touched by CZ pattern `k`.
    pub fn pattern_touch_mask(&self, k: usize) -> BitString {
        let mut m = BitString::zeros(self.n);
        for &e in &self.cz_patterns[k] {
            let (a, b) = self.edges[e];
            m.set(a, true);
            m.set(b, true);
        }
        m
    }

    /// Plain-text serialization: header, edge list, pattern lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={}", self.n);
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "edge {a} {b}");
        }
        for (k, pat) in self.cz_patterns.iter().enumerate() {
            let ids: Vec<String> = pat.iter().map(|e| e.to_string()).collect();
            let _ = writeln!(out, "pattern {k}: {}", ids.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        let mut patterns: Vec<Vec<usize>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("graph line {}: {msg}", lineno + 1));
            if let Some(v) = line.strip_prefix("n=") {
                n = Some(v.trim().parse::<usize>().map_err(|_| bad("bad vertex count"))?);
            } else if let Some(rest) = line.strip_prefix("edge ") {
                let mut it = rest.split_whitespace();
                let a = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad edge"))?;
                let b = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad edge"))?;
                if it.next().is_some() {
                    return Err(bad("trailing tokens on edge line"));
                }
                edges.push((a, b));
            } else if let Some(rest) = line.strip_prefix("pattern ") {
                let (idx, ids) = rest.split_once(':').ok_or_else(|| bad("missing ':'"))?;
                let k: usize = idx.trim().parse().map_err(|_| bad("bad pattern index"))?;
                if k != patterns.len() {
                    return Err(bad("pattern indices must be consecutive from 0"));
                }
                let mut pat = Vec::new();
                for tok in ids.split_whitespace() {
                    pat.push(tok.parse().map_err(|_| bad("bad edge index"))?);
                }
                patterns.push(pat);
            } else {
                return Err(bad("unrecognized directive"));
            }
        }
        let n = n.ok_or_else(|| Error::Config("graph file missing n= header".into()))?;
        if patterns.is_empty() {
            Self::custom(n, edges)
        } else {
            Self::with_patterns(n, edges, patterns)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Parse a layout name: `chain:95`, `grid-sparse:8x9`, `grid-full:3x19`,
    /// or a path to a graph file.
    pub fn parse_source(src: &str) -> Result<Self> {
        if let Some(arg) = src.strip_prefix("chain:") {
            let n = arg
                .parse()
                .map_err(|_| Error::Config(format!("bad chain size {arg:?}")))?;
            return Ok(Self::chain(n));
        }
        for (prefix, sparse) in [("grid-sparse:", true), ("grid-full:", false)] {
            if let Some(arg) = src.strip_prefix(prefix) {
                let (r, c) = arg
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("expected RxC, got {arg:?}")))?;
                let rows = r.parse().map_err(|_| Error::Config(format!("bad rows {r:?}")))?;
                let cols = c.parse().map_err(|_| Error::Config(format!("bad cols {c:?}")))?;
                return Ok(if sparse { Self::grid_sparse(rows, cols) } else { Self::grid_full(rows, cols) });
            }
        }
        Self::load(Path::new(src))
    }
}

fn greedy_patterns(edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..edges.len()).collect();
    let mut patterns = Vec::new();
    while !remaining.is_empty() {
        let mut busy = BTreeSet::new();
        let mut pat = Vec::new();
        remaining.retain(|&e| {
            let (a, b) = edges[e];
            if busy.contains(&a) || busy.contains(&b) {
                true
            } else {
                busy.insert(a);
                busy.insert(b);
                pat.push(e);
                false
            }
        });
        patterns.push(pat);
    }
    patterns
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_has_two_patterns_and_path_edges() {
        let g = GraphSpec::chain(95);
        assert_eq!(g.n(), 95);
        assert_eq!(g.edges().len(), 94);
        assert_eq!(g.cz_patterns().len(), 2);
        assert!(g.is_connected());
        assert_eq!(g.neighbors(0), vec![1]);
        assert_eq!(g.neighbors(50), vec![49, 51]);
    }

    #[test]
    fn sparse_grid_is_connected_with_three_patterns() {
        let g = GraphSpec::grid_sparse(8, 9);
        assert_eq!(g.n(), 72);
        assert_eq!(g.cz_patterns().len(), 3);
        assert!(g.is_connected());
        // Brickwork: max degree 3.
        assert!((0..72).all(|v| g.neighbors(v).len() <= 3));
    }

    #[test]
    fn full_grid_has_four_patterns() {
        let g = GraphSpec::grid_full(3, 19);
        assert_eq!(g.n(), 57);
        assert_eq!(g.cz_patterns().len(), 4);
        assert!(g.is_connected());
        // Interior vertices see all four neighbors.
        let v = 1 * 19 + 9;
        assert_eq!(g.neighbors(v).len(), 4);
    }

    #[test]
    fn sparse_is_full_minus_fourth_pattern() {
        let full = GraphSpec::grid_full(8, 9);
        let sparse = GraphSpec::grid_sparse(8, 9);
        let dropped: BTreeSet<_> =
            full.cz_patterns()[3].iter().map(|&e| full.edges()[e]).collect();
        let sparse_set: BTreeSet<_> = sparse.edges().iter().copied().collect();
        let full_set: BTreeSet<_> = full.edges().iter().copied().collect();
        assert!(dropped.iter().all(|e| !sparse_set.contains(e)));
        assert_eq!(sparse_set.len() + dropped.len(), full_set.len());
    }

    #[test]
    fn vertex_stabilizer_shape() {
        let g = GraphSpec::chain(3);
        assert_eq!(g.stabilizer_of_vertex(1).unwrap().label(), "+ZXZ");
        assert_eq!(g.stabilizer_of_vertex(0).unwrap().label(), "+XZI");
        assert!(g.stabilizer_of_vertex(3).is_err());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(GraphSpec::custom(3, vec![(0, 0)]).is_err());
        assert!(GraphSpec::custom(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(GraphSpec::custom(2, vec![(0, 5)]).is_err());
        // Pattern with repeated vertex.
        assert!(GraphSpec::with_patterns(3, vec![(0, 1), (1, 2)], vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn text_roundtrip_preserves_everything() {
        let g = GraphSpec::grid_sparse(3, 4);
        let back = GraphSpec::from_text(&g.to_text()).unwrap();
        assert_eq!(back.n(), g.n());
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.cz_patterns(), g.cz_patterns());
    }

    #[test]
    fn source_parsing() {
        assert_eq!(GraphSpec::parse_source("chain:5").unwrap().n(), 5);
        assert_eq!(GraphSpec::parse_source("grid-sparse:8x9").unwrap().n(), 72);
        assert_eq!(GraphSpec::parse_source("grid-full:3x19").unwrap().n(), 57);
        assert!(GraphSpec::parse_source("chain:x").is_err());
    }

    #[test]
    fn greedy_patterns_are_valid_for_random_graphs() {
        let mut rng = crate::rng::master(2);
        use rand::Rng;
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            let mut edges = BTreeSet::new();
            for _ in 0..rng.gen_range(0..20) {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
            let g = GraphSpec::custom(n, edges.into_iter().collect()).unwrap();
            g.validate().unwrap();
        }
    }
}
