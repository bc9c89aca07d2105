//! Bi-unitary connections: four edge sets over a common vertex set and a
//! cell value for every admissible square, with their monoidal operations.
//!
//! A cell is indexed by `(top, right, bottom, left)` edges forming the square
//!
//! ```text
//!   a1 --top--> a2
//!   |            |
//!  left        right
//!   v            v
//!   a3 -bottom-> a4
//! ```
//!
//! For fixed corners `(a1, a4)` the cells form a matrix whose rows are
//! `(left, bottom)` paths and whose columns are `(top, right)` paths; this
//! matrix must be unitary. Rotating the square by a quarter turn gives, for
//! fixed `(a2, a3)`, the matrix with rows `(top, left)` and columns
//! `(right, bottom)` and entries `sqrt(mu(a1) mu(a4) / mu(a2) mu(a3)) * conj(W)`,
//! which must be unitary as well.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::linalg::{c, max_abs, unitarity_defect, CMat, C64};

pub const TOL_VERDICT: f64 = 1e-7;

/// A directed edge. `path` lists the base edges it is composed of.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub path: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EdgeSetData {
    name: String,
    n_vertices: usize,
    edges: Vec<Edge>,
}

/// A directed multigraph on vertices `0..n`. Edge ids are positions in the
/// edge list, which is sorted by `(src, dst)` except for reversed sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "EdgeSetData", into = "EdgeSetData")]
pub struct EdgeSet {
    name: String,
    n_vertices: usize,
    edges: Vec<Edge>,
    between: Vec<Vec<u32>>,
    out: Vec<Vec<u32>>,
}

impl From<EdgeSetData> for EdgeSet {
    fn from(d: EdgeSetData) -> Self {
        // serialized ids are authoritative
        EdgeSet::with_ids(d.name, d.n_vertices, d.edges)
    }
}

impl From<EdgeSet> for EdgeSetData {
    fn from(e: EdgeSet) -> Self {
        EdgeSetData { name: e.name, n_vertices: e.n_vertices, edges: e.edges }
    }
}

impl PartialEq for EdgeSet {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.n_vertices == other.n_vertices && self.edges == other.edges
    }
}

impl Eq for EdgeSet {}

impl EdgeSet {
    /// Builds an edge set; edges are stably sorted by `(src, dst)`.
    pub fn new(name: impl Into<String>, n_vertices: usize, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.src, e.dst));
        Self::with_ids(name, n_vertices, edges)
    }

    /// Builds an edge set keeping the given order as edge ids.
    fn with_ids(name: impl Into<String>, n_vertices: usize, edges: Vec<Edge>) -> Self {
        let mut between = vec![Vec::new(); n_vertices * n_vertices];
        let mut out = vec![Vec::new(); n_vertices];
        for (i, e) in edges.iter().enumerate() {
            between[e.src as usize * n_vertices + e.dst as usize].push(i as u32);
            out[e.src as usize].push(i as u32);
        }
        EdgeSet { name: name.into(), n_vertices, edges, between, out }
    }

    /// Directed edges `a -> b` with multiplicity `m[a][b]`.
    pub fn from_matrix(name: impl Into<String>, m: &[Vec<u32>]) -> Self {
        let n = m.len();
        let mut edges = Vec::new();
        for (a, row) in m.iter().enumerate() {
            for (b, &k) in row.iter().enumerate() {
                for _ in 0..k {
                    let id = edges.len() as u32;
                    edges.push(Edge { src: a as u32, dst: b as u32, path: vec![id] });
                }
            }
        }
        EdgeSet::new(name, n, edges)
    }

    /// Both orientations of every edge of an undirected graph.
    pub fn from_graph(g: &BipartiteGraph) -> Self {
        EdgeSet::from_matrix(g.name(), g.adjacency())
    }

    /// One loop at every vertex.
    pub fn identity(name: impl Into<String>, n: usize) -> Self {
        let edges = (0..n as u32).map(|v| Edge { src: v, dst: v, path: vec![v] }).collect();
        EdgeSet::new(name, n, edges)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: u32) -> &Edge {
        &self.edges[id as usize]
    }

    pub fn between(&self, a: usize, b: usize) -> &[u32] {
        &self.between[a * self.n_vertices + b]
    }

    pub fn out(&self, a: usize) -> &[u32] {
        &self.out[a]
    }

    pub fn count(&self, a: usize, b: usize) -> usize {
        self.between(a, b).len()
    }

    /// Multiplicity matrix.
    pub fn matrix(&self) -> Vec<Vec<u32>> {
        (0..self.n_vertices).map(|a| (0..self.n_vertices).map(|b| self.count(a, b) as u32).collect()).collect()
    }

    /// Edges of `self` followed by edges of `other`; returns the pair index too.
    pub fn compose(&self, other: &EdgeSet) -> (EdgeSet, HashMap<(u32, u32), u32>) {
        let mut edges = Vec::new();
        let mut pairs = Vec::new();
        for (i, e1) in self.edges.iter().enumerate() {
            for &j in other.out(e1.dst as usize) {
                let e2 = other.edge(j);
                let mut path = e1.path.clone();
                path.extend_from_slice(&e2.path);
                edges.push(Edge { src: e1.src, dst: e2.dst, path });
                pairs.push((i as u32, j));
            }
        }
        // sorting is stable, so recompute the pair index after construction
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| (edges[i].src, edges[i].dst));
        let name = format!("{}.{}", self.name, other.name);
        let set = EdgeSet::new(name, self.n_vertices, edges);
        let index = order.iter().enumerate().map(|(new, &old)| (pairs[old], new as u32)).collect();
        (set, index)
    }

    /// Same edges with the same ids, reversed orientation. Reversing twice
    /// gives back an equal edge set.
    pub fn reversed(&self) -> EdgeSet {
        let edges = self.edges.iter().map(|e| Edge { src: e.dst, dst: e.src, path: e.path.clone() }).collect();
        let name = match self.name.strip_suffix("^op") {
            Some(base) => base.to_string(),
            None => format!("{}^op", self.name),
        };
        EdgeSet::with_ids(name, self.n_vertices, edges)
    }

    /// Edges whose source satisfies `keep`, renamed.
    pub fn restrict_sources(&self, name: impl Into<String>, keep: &[bool]) -> EdgeSet {
        let edges = self.edges.iter().filter(|e| keep[e.src as usize]).cloned().collect();
        EdgeSet::new(name, self.n_vertices, edges)
    }

    /// Disjoint union of two edge sets on the same vertices.
    pub fn disjoint_union(&self, other: &EdgeSet) -> Result<(EdgeSet, Vec<u32>, Vec<u32>)> {
        if self.n_vertices != other.n_vertices {
            return Err(Error::GraphMismatch("vertex counts differ".into()));
        }
        let tagged: Vec<(Edge, usize, u32)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), 0, i as u32))
            .chain(other.edges.iter().enumerate().map(|(i, e)| (e.clone(), 1, i as u32)))
            .collect();
        let mut order: Vec<usize> = (0..tagged.len()).collect();
        order.sort_by_key(|&i| (tagged[i].0.src, tagged[i].0.dst, tagged[i].1, tagged[i].2));
        let mut map1 = vec![0u32; self.len()];
        let mut map2 = vec![0u32; other.len()];
        let mut edges = Vec::with_capacity(order.len());
        for (new, &i) in order.iter().enumerate() {
            let (e, side, old) = &tagged[i];
            if *side == 0 {
                map1[*old as usize] = new as u32;
            } else {
                map2[*old as usize] = new as u32;
            }
            edges.push(e.clone());
        }
        let set = EdgeSet::new(format!("({}+{})", self.name, other.name), self.n_vertices, edges);
        Ok((set, map1, map2))
    }
}

/// Row and column labels of one corner block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerPaths {
    /// `(left, bottom)` edge pairs.
    pub rows: Vec<(u32, u32)>,
    /// `(top, right)` edge pairs.
    pub cols: Vec<(u32, u32)>,
}

/// Residuals of the two unitarity conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiunitarityReport {
    pub unitarity: f64,
    pub renormalization: f64,
}

impl BiunitarityReport {
    pub fn max(&self) -> f64 {
        self.unitarity.max(self.renormalization)
    }
}

/// A connection with cells stored as one dense block per corner `(a1, a4)`.
#[derive(Clone, Debug)]
pub struct Connection {
    top: Arc<EdgeSet>,
    left: Arc<EdgeSet>,
    right: Arc<EdgeSet>,
    bottom: Arc<EdgeSet>,
    weights: Arc<Vec<f64>>,
    blocks: BTreeMap<(u32, u32), CMat>,
}

impl Connection {
    fn check_shapes(top: &EdgeSet, left: &EdgeSet, right: &EdgeSet, bottom: &EdgeSet, weights: &[f64]) -> Result<()> {
        let n = top.n_vertices();
        if left.n_vertices() != n || right.n_vertices() != n || bottom.n_vertices() != n || weights.len() != n {
            return Err(Error::Malformed("edge sets and weights disagree on the vertex count".into()));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Malformed("vertex weights must be positive".into()));
        }
        Ok(())
    }

    /// Row/column labels of the corner `(a1, a4)` in canonical order.
    pub fn corner_paths_of(top: &EdgeSet, left: &EdgeSet, right: &EdgeSet, bottom: &EdgeSet, a1: usize, a4: usize) -> CornerPaths {
        let mut rows = Vec::new();
        for &l in left.out(a1) {
            for &b in bottom.between(left.edge(l).dst as usize, a4) {
                rows.push((l, b));
            }
        }
        let mut cols = Vec::new();
        for &t in top.out(a1) {
            for &r in right.between(top.edge(t).dst as usize, a4) {
                cols.push((t, r));
            }
        }
        CornerPaths { rows, cols }
    }

    /// Builds a connection from per-corner blocks in canonical order.
    pub fn from_blocks(
        top: Arc<EdgeSet>,
        left: Arc<EdgeSet>,
        right: Arc<EdgeSet>,
        bottom: Arc<EdgeSet>,
        weights: Arc<Vec<f64>>,
        blocks: BTreeMap<(u32, u32), CMat>,
    ) -> Result<Self> {
        Self::check_shapes(&top, &left, &right, &bottom, &weights)?;
        let n = top.n_vertices();
        for (&(a1, a4), m) in &blocks {
            if a1 as usize >= n || a4 as usize >= n {
                return Err(Error::Malformed(format!("corner ({a1},{a4}) out of range")));
            }
            let p = Self::corner_paths_of(&top, &left, &right, &bottom, a1 as usize, a4 as usize);
            if m.nrows() != p.rows.len() || m.ncols() != p.cols.len() {
                return Err(Error::Malformed(format!(
                    "corner ({a1},{a4}) block is {}x{}, paths give {}x{}",
                    m.nrows(),
                    m.ncols(),
                    p.rows.len(),
                    p.cols.len()
                )));
            }
        }
        Ok(Connection { top, left, right, bottom, weights, blocks })
    }

    /// Builds a connection from sparse cells keyed by `[top, right, bottom, left]`;
    /// unspecified admissible cells are zero.
    pub fn from_cells(
        top: Arc<EdgeSet>,
        left: Arc<EdgeSet>,
        right: Arc<EdgeSet>,
        bottom: Arc<EdgeSet>,
        weights: Arc<Vec<f64>>,
        cells: impl IntoIterator<Item = ([u32; 4], C64)>,
    ) -> Result<Self> {
        Self::check_shapes(&top, &left, &right, &bottom, &weights)?;
        let mut blocks: BTreeMap<(u32, u32), CMat> = BTreeMap::new();
        let mut index: HashMap<(u32, u32), (HashMap<(u32, u32), usize>, HashMap<(u32, u32), usize>)> = HashMap::new();
        for ([t, r, b, l], v) in cells {
            let (et, er, eb, el) = (
                top.edges.get(t as usize),
                right.edges.get(r as usize),
                bottom.edges.get(b as usize),
                left.edges.get(l as usize),
            );
            let (Some(et), Some(er), Some(eb), Some(el)) = (et, er, eb, el) else {
                return Err(Error::Malformed(format!("cell [{t},{r},{b},{l}] references a missing edge")));
            };
            if et.src != el.src || et.dst != er.src || el.dst != eb.src || er.dst != eb.dst {
                return Err(Error::Malformed(format!("cell [{t},{r},{b},{l}] does not close a square")));
            }
            let key = (et.src, er.dst);
            let (ri, ci) = index.entry(key).or_insert_with(|| {
                let p = Self::corner_paths_of(&top, &left, &right, &bottom, key.0 as usize, key.1 as usize);
                (
                    p.rows.iter().enumerate().map(|(i, x)| (*x, i)).collect(),
                    p.cols.iter().enumerate().map(|(i, x)| (*x, i)).collect(),
                )
            });
            let (i, j) = (ri[&(l, b)], ci[&(t, r)]);
            let (nr, nc) = (ri.len(), ci.len());
            let m = blocks.entry(key).or_insert_with(|| CMat::zeros(nr, nc));
            m[(i, j)] = v;
        }
        Ok(Connection { top, left, right, bottom, weights, blocks })
    }

    /// Horizontal graph `h` on top and bottom, trivial vertical graphs, all cells 1.
    pub fn identity(h: Arc<EdgeSet>, weights: Arc<Vec<f64>>) -> Result<Self> {
        let id = Arc::new(EdgeSet::identity("id", h.n_vertices()));
        let cells: Vec<_> = (0..h.len() as u32)
            .map(|e| {
                let edge = h.edge(e);
                ([e, edge.dst, e, edge.src], c(1.0))
            })
            .collect();
        Connection::from_cells(h.clone(), id.clone(), id, h, weights, cells)
    }

    /// Vertical graph `v` on both sides, trivial horizontal graphs, all cells 1.
    pub fn vertical_identity(v: Arc<EdgeSet>, weights: Arc<Vec<f64>>) -> Result<Self> {
        let id = Arc::new(EdgeSet::identity("id", v.n_vertices()));
        let cells: Vec<_> = (0..v.len() as u32)
            .map(|e| {
                let edge = v.edge(e);
                ([edge.src, e, edge.dst, e], c(1.0))
            })
            .collect();
        Connection::from_cells(id.clone(), v.clone(), v, id, weights, cells)
    }

    pub fn top(&self) -> &Arc<EdgeSet> {
        &self.top
    }

    pub fn bottom(&self) -> &Arc<EdgeSet> {
        &self.bottom
    }

    pub fn left(&self) -> &Arc<EdgeSet> {
        &self.left
    }

    pub fn right(&self) -> &Arc<EdgeSet> {
        &self.right
    }

    pub fn weights(&self) -> &Arc<Vec<f64>> {
        &self.weights
    }

    pub fn n_vertices(&self) -> usize {
        self.top.n_vertices()
    }

    pub fn blocks(&self) -> &BTreeMap<(u32, u32), CMat> {
        &self.blocks
    }

    pub fn corner_paths(&self, a1: usize, a4: usize) -> CornerPaths {
        Self::corner_paths_of(&self.top, &self.left, &self.right, &self.bottom, a1, a4)
    }

    /// Dense block of the corner `(a1, a4)`, zero if no cell was stored.
    pub fn block(&self, a1: usize, a4: usize) -> CMat {
        match self.blocks.get(&(a1 as u32, a4 as u32)) {
            Some(m) => m.clone(),
            None => {
                let p = self.corner_paths(a1, a4);
                CMat::zeros(p.rows.len(), p.cols.len())
            }
        }
    }

    /// Cell value for edges `(top, right, bottom, left)`; zero if not a square.
    pub fn cell(&self, t: u32, r: u32, b: u32, l: u32) -> C64 {
        let (et, er) = (self.top.edge(t), self.right.edge(r));
        let key = (et.src, er.dst);
        let Some(m) = self.blocks.get(&key) else { return c(0.0) };
        let p = self.corner_paths(key.0 as usize, key.1 as usize);
        match (p.rows.iter().position(|x| *x == (l, b)), p.cols.iter().position(|x| *x == (t, r))) {
            (Some(i), Some(j)) => m[(i, j)],
            _ => c(0.0),
        }
    }

    /// Every admissible cell as `([top, right, bottom, left], value)`.
    pub fn cells(&self) -> Vec<([u32; 4], C64)> {
        let mut out = Vec::new();
        for (&(a1, a4), m) in &self.blocks {
            let p = self.corner_paths(a1 as usize, a4 as usize);
            for (i, &(l, b)) in p.rows.iter().enumerate() {
                for (j, &(t, r)) in p.cols.iter().enumerate() {
                    out.push(([t, r, b, l], m[(i, j)]));
                }
            }
        }
        out
    }

    /// Number of admissible squares, counted from the path spaces.
    pub fn admissible_quadruples(&self) -> usize {
        let n = self.n_vertices();
        let mut total = 0;
        for a1 in 0..n {
            for a4 in 0..n {
                let p = self.corner_paths(a1, a4);
                total += p.rows.len() * p.cols.len();
            }
        }
        total
    }

    /// Residuals of both unitarity conditions.
    pub fn check_biunitarity(&self) -> Result<BiunitarityReport> {
        let n = self.n_vertices();
        let mut unitarity: f64 = 0.0;
        let mut pos_row: HashMap<(u32, u32), usize> = HashMap::new();
        let mut pos_col: HashMap<(u32, u32), usize> = HashMap::new();
        for a1 in 0..n {
            for a4 in 0..n {
                let p = self.corner_paths(a1, a4);
                if p.rows.len() != p.cols.len() {
                    return Err(Error::Malformed(format!(
                        "corner ({a1},{a4}) has {} left-bottom and {} top-right paths",
                        p.rows.len(),
                        p.cols.len()
                    )));
                }
                if p.rows.is_empty() {
                    continue;
                }
                unitarity = unitarity.max(unitarity_defect(&self.block(a1, a4)));
                for (i, x) in p.rows.iter().enumerate() {
                    pos_row.insert(*x, i);
                }
                for (j, x) in p.cols.iter().enumerate() {
                    pos_col.insert(*x, j);
                }
            }
        }
        let w = &self.weights;
        let mut renormalization: f64 = 0.0;
        for a2 in 0..n {
            for a3 in 0..n {
                // rows (top, left) sharing a1; columns (right, bottom) sharing a4
                let mut rows = Vec::new();
                for (t, et) in self.top.edges.iter().enumerate() {
                    if et.dst as usize != a2 {
                        continue;
                    }
                    for &l in self.left.between(et.src as usize, a3) {
                        rows.push((t as u32, l));
                    }
                }
                let mut cols = Vec::new();
                for &r in self.right.out(a2) {
                    for &b in self.bottom.between(a3, self.right.edge(r).dst as usize) {
                        cols.push((r, b));
                    }
                }
                if rows.len() != cols.len() {
                    return Err(Error::Malformed(format!(
                        "rotated corner ({a2},{a3}) has {} rows and {} columns",
                        rows.len(),
                        cols.len()
                    )));
                }
                if rows.is_empty() {
                    continue;
                }
                let m = CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    let (t, l) = rows[i];
                    let (r, b) = cols[j];
                    let a1 = self.top.edge(t).src as usize;
                    let a4 = self.right.edge(r).dst as usize;
                    let Some(block) = self.blocks.get(&(a1 as u32, a4 as u32)) else { return c(0.0) };
                    let v = block[(pos_row[&(l, b)], pos_col[&(t, r)])];
                    v.conj() * (w[a1] * w[a4] / (w[a2] * w[a3])).sqrt()
                });
                renormalization = renormalization.max(unitarity_defect(&m));
            }
        }
        Ok(BiunitarityReport { unitarity, renormalization })
    }

    /// The quarter-turn rotated connection: upper-left corner `a2`, top graph
    /// `right`, left graph the reversed `top`, right graph the reversed
    /// `bottom`, bottom graph `left`, and cells
    /// `sqrt(mu(a1) mu(a4) / mu(a2) mu(a3)) * conj(W)`.
    pub fn rotate(&self) -> Result<Connection> {
        let top = Arc::new((*self.right).clone());
        let left = Arc::new(self.top.reversed());
        let right = Arc::new(self.bottom.reversed());
        let bottom = Arc::new((*self.left).clone());
        let w = &self.weights;
        let cells = self.cells().into_iter().map(|([t, r, b, l], v)| {
            let a1 = self.top.edge(t).src as usize;
            let a2 = self.top.edge(t).dst as usize;
            let a3 = self.left.edge(l).dst as usize;
            let a4 = self.right.edge(r).dst as usize;
            let s = (w[a1] * w[a4] / (w[a2] * w[a3])).sqrt();
            // new square: a2 -r-> a4, a2 -t^op-> a1, a4 -b^op-> a3, a1 -l-> a3
            ([r, b, l, t], v.conj() * s)
        });
        Connection::from_cells(top, left, right, bottom, self.weights.clone(), cells.collect::<Vec<_>>())
    }

    /// Elementwise complex conjugate.
    pub fn conj(&self) -> Connection {
        let mut out = self.clone();
        for m in out.blocks.values_mut() {
            *m = m.map(|z| z.conj());
        }
        out
    }

    /// Multiplies every cell by `z`.
    pub fn scaled(&self, z: C64) -> Connection {
        let mut out = self.clone();
        for m in out.blocks.values_mut() {
            *m *= z;
        }
        out
    }

    /// Maximum absolute difference of cells; `None` if the graphs differ.
    pub fn distance(&self, other: &Connection) -> Option<f64> {
        if self.top != other.top || self.bottom != other.bottom || self.left != other.left || self.right != other.right {
            return None;
        }
        let n = self.n_vertices();
        let mut d: f64 = 0.0;
        for a1 in 0..n {
            for a4 in 0..n {
                let x = self.block(a1, a4) - other.block(a1, a4);
                d = d.max(max_abs(&x));
            }
        }
        Some(d)
    }

    /// Like [`Connection::distance`], but edges are matched by endpoints and
    /// underlying path rather than by id, so differently bracketed
    /// composites can be compared. `None` if the edge sets do not match.
    pub fn distance_by_paths(&self, other: &Connection) -> Option<f64> {
        fn matching(a: &EdgeSet, b: &EdgeSet) -> Option<Vec<u32>> {
            if a.len() != b.len() || a.n_vertices() != b.n_vertices() {
                return None;
            }
            let index: HashMap<&Edge, u32> = b.edges().iter().enumerate().map(|(i, e)| (e, i as u32)).collect();
            a.edges().iter().map(|e| index.get(e).copied()).collect()
        }
        let t = matching(&self.top, &other.top)?;
        let r = matching(&self.right, &other.right)?;
        let b = matching(&self.bottom, &other.bottom)?;
        let l = matching(&self.left, &other.left)?;
        let mut d: f64 = 0.0;
        for ([et, er, eb, el], v) in self.cells() {
            let u = other.cell(t[et as usize], r[er as usize], b[eb as usize], l[el as usize]);
            d = d.max((v - u).norm());
        }
        (self.cells().len() == other.cells().len()).then_some(d)
    }

    /// Replaces the vertical edges by isometric images: `iso[(a, b)]` has
    /// orthonormal columns in the space of vertical edges `a -> b` (shared by
    /// left and right); column `j` becomes a new edge.
    pub fn compress(&self, name: &str, iso: &BTreeMap<(u32, u32), CMat>) -> Result<Connection> {
        if self.left != self.right {
            return Err(Error::Malformed("compression needs identical left and right graphs".into()));
        }
        let n = self.n_vertices();
        let mut edges = Vec::new();
        for (&(a, b), m) in iso {
            if m.nrows() != self.left.count(a as usize, b as usize) {
                return Err(Error::Malformed(format!("isometry ({a},{b}) has the wrong height")));
            }
            for _ in 0..m.ncols() {
                let id = edges.len() as u32;
                edges.push(Edge { src: a, dst: b, path: vec![id] });
            }
        }
        let vert = Arc::new(EdgeSet::new(name, n, edges));
        let empty = CMat::zeros(0, 0);
        let get = |a: u32, b: u32| iso.get(&(a, b)).unwrap_or(&empty);
        let mut blocks = BTreeMap::new();
        for (&(a1, a4), u) in &self.blocks {
            let old = self.corner_paths(a1 as usize, a4 as usize);
            let new = Self::corner_paths_of(&self.top, &vert, &vert, &self.bottom, a1 as usize, a4 as usize);
            if new.rows.is_empty() {
                continue;
            }
            // row map: old (xi, f) -> new (zeta, f) with weight conj(B[xi, zeta])
            let mut left_map = CMat::zeros(new.rows.len(), old.rows.len());
            for (i, &(z, f)) in new.rows.iter().enumerate() {
                let ez = vert.edge(z);
                let bm = get(ez.src, ez.dst);
                let zi = vert.between(ez.src as usize, ez.dst as usize).iter().position(|x| *x == z).unwrap();
                for (j, &(xi, f2)) in old.rows.iter().enumerate() {
                    if f2 != f {
                        continue;
                    }
                    let ex = self.left.edge(xi);
                    if ex.dst != ez.dst {
                        continue;
                    }
                    let xj = self.left.between(ex.src as usize, ex.dst as usize).iter().position(|x| *x == xi).unwrap();
                    left_map[(i, j)] = bm[(xj, zi)].conj();
                }
            }
            let mut right_map = CMat::zeros(old.cols.len(), new.cols.len());
            for (j, &(e, z)) in new.cols.iter().enumerate() {
                let ez = vert.edge(z);
                let bm = get(ez.src, ez.dst);
                let zi = vert.between(ez.src as usize, ez.dst as usize).iter().position(|x| *x == z).unwrap();
                for (i, &(e2, xi)) in old.cols.iter().enumerate() {
                    if e2 != e {
                        continue;
                    }
                    let ex = self.right.edge(xi);
                    if ex.dst != ez.dst {
                        continue;
                    }
                    let xj = self.right.between(ex.src as usize, ex.dst as usize).iter().position(|x| *x == xi).unwrap();
                    right_map[(i, j)] = bm[(xj, zi)];
                }
            }
            blocks.insert((a1, a4), left_map * u * right_map);
        }
        Connection::from_blocks(self.top.clone(), vert.clone(), vert, self.bottom.clone(), self.weights.clone(), blocks)
    }

    pub fn to_document(&self) -> ConnectionDocument {
        let cells = self
            .cells()
            .into_iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(k, v)| CellRecord { edges: k, re: v.re, im: v.im })
            .collect();
        ConnectionDocument {
            schema: CONNECTION_SCHEMA.to_string(),
            top: (*self.top).clone(),
            right: (*self.right).clone(),
            bottom: (*self.bottom).clone(),
            left: (*self.left).clone(),
            weights: (*self.weights).clone(),
            cells,
            meta: BTreeMap::new(),
        }
    }

    pub fn from_document(doc: &ConnectionDocument) -> Result<Connection> {
        if doc.schema != CONNECTION_SCHEMA {
            return Err(Error::Spec(format!("unsupported schema {}", doc.schema)));
        }
        Connection::from_cells(
            Arc::new(doc.top.clone()),
            Arc::new(doc.left.clone()),
            Arc::new(doc.right.clone()),
            Arc::new(doc.bottom.clone()),
            Arc::new(doc.weights.clone()),
            doc.cells.iter().map(|r| (r.edges, C64::new(r.re, r.im))).collect::<Vec<_>>(),
        )
    }
}

pub const CONNECTION_SCHEMA: &str = "biunitary.connection/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CellRecord {
    /// `[top, right, bottom, left]` edge ids.
    pub edges: [u32; 4],
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectionDocument {
    pub schema: String,
    pub top: EdgeSet,
    pub right: EdgeSet,
    pub bottom: EdgeSet,
    pub left: EdgeSet,
    pub weights: Vec<f64>,
    pub cells: Vec<CellRecord>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

fn same_weights(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// Stacks `w1` above `w2`; requires `w1.bottom == w2.top`.
pub fn compose_vertical(w1: &Connection, w2: &Connection) -> Result<Connection> {
    if w1.bottom != w2.top {
        return Err(Error::GraphMismatch(format!(
            "bottom graph {} does not match top graph {}",
            w1.bottom.name(),
            w2.top.name()
        )));
    }
    if !same_weights(&w1.weights, &w2.weights) {
        return Err(Error::GraphMismatch("vertex weights differ".into()));
    }
    let (left, lidx) = w1.left.compose(&w2.left);
    let (right, ridx) = w1.right.compose(&w2.right);
    let left = Arc::new(left);
    let right = Arc::new(right);
    // inverse maps: composite edge -> (first, second)
    let mut linv = vec![(0, 0); left.len()];
    for (&p, &e) in &lidx {
        linv[e as usize] = p;
    }
    let mut rinv = vec![(0, 0); right.len()];
    for (&p, &e) in &ridx {
        rinv[e as usize] = p;
    }
    let n = w1.n_vertices();
    let index = |conn: &Connection| {
        let mut rows: HashMap<(u32, u32), usize> = HashMap::new();
        let mut cols: HashMap<(u32, u32), usize> = HashMap::new();
        for &(a1, a4) in conn.blocks.keys() {
            let p = conn.corner_paths(a1 as usize, a4 as usize);
            rows.extend(p.rows.iter().enumerate().map(|(i, x)| (*x, i)));
            cols.extend(p.cols.iter().enumerate().map(|(i, x)| (*x, i)));
        }
        (rows, cols)
    };
    let (r1, c1) = index(w1);
    let (r2, c2) = index(w2);
    let mut blocks = BTreeMap::new();
    for a1 in 0..n {
        for a6 in 0..n {
            let p = Connection::corner_paths_of(&w1.top, &left, &right, &w2.bottom, a1, a6);
            if p.rows.is_empty() || p.cols.is_empty() {
                continue;
            }
            let m = CMat::from_fn(p.rows.len(), p.cols.len(), |i, j| {
                let (l, g) = p.rows[i];
                let (e, r) = p.cols[j];
                let (x1, x2) = linv[l as usize];
                let (y1, y2) = rinv[r as usize];
                let a3 = w1.left.edge(x1).dst as usize;
                let a4 = w1.right.edge(y1).dst as usize;
                let mut acc = c(0.0);
                for &f in w1.bottom.between(a3, a4) {
                    let (Some(u1), Some(u2)) = (
                        w1.blocks.get(&(a1 as u32, a4 as u32)),
                        w2.blocks.get(&(a3 as u32, a6 as u32)),
                    ) else {
                        continue;
                    };
                    let v1 = u1[(r1[&(x1, f)], c1[&(e, y1)])];
                    let v2 = u2[(r2[&(x2, g)], c2[&(f, y2)])];
                    acc += v1 * v2;
                }
                acc
            });
            blocks.insert((a1 as u32, a6 as u32), m);
        }
    }
    Connection::from_blocks(w1.top.clone(), left, right, w2.bottom.clone(), w1.weights.clone(), blocks)
}

/// Places `w2` to the right of `w1`; requires `w1.right == w2.left`.
pub fn compose_horizontal(w1: &Connection, w2: &Connection) -> Result<Connection> {
    if w1.right != w2.left {
        return Err(Error::GraphMismatch(format!(
            "right graph {} does not match left graph {}",
            w1.right.name(),
            w2.left.name()
        )));
    }
    if !same_weights(&w1.weights, &w2.weights) {
        return Err(Error::GraphMismatch("vertex weights differ".into()));
    }
    let (top, tidx) = w1.top.compose(&w2.top);
    let (bottom, bidx) = w1.bottom.compose(&w2.bottom);
    let top = Arc::new(top);
    let bottom = Arc::new(bottom);
    let mut tinv = vec![(0, 0); top.len()];
    for (&p, &e) in &tidx {
        tinv[e as usize] = p;
    }
    let mut binv = vec![(0, 0); bottom.len()];
    for (&p, &e) in &bidx {
        binv[e as usize] = p;
    }
    let mut cells = Vec::new();
    for (t, _) in top.edges.iter().enumerate() {
        let (e1, e2) = tinv[t];
        let a1 = w1.top.edge(e1).src as usize;
        let a2 = w1.top.edge(e1).dst as usize;
        let a5 = w2.top.edge(e2).dst as usize;
        for &xi in w1.left.out(a1) {
            let a3 = w1.left.edge(xi).dst as usize;
            for &xi2 in w2.right.out(a5) {
                let a6 = w2.right.edge(xi2).dst as usize;
                for (b, _) in bottom.edges.iter().enumerate() {
                    let (f1, f2) = binv[b];
                    if w1.bottom.edge(f1).src as usize != a3 || w2.bottom.edge(f2).dst as usize != a6 {
                        continue;
                    }
                    let a4 = w1.bottom.edge(f1).dst as usize;
                    let mut acc = c(0.0);
                    for &mid in w1.right.between(a2, a4) {
                        acc += w1.cell(e1, mid, f1, xi) * w2.cell(e2, xi2, f2, mid);
                    }
                    cells.push(([t as u32, xi2, b as u32, xi], acc));
                }
            }
        }
    }
    Connection::from_cells(top, w1.left.clone(), w2.right.clone(), bottom, w1.weights.clone(), cells)
}

/// Vertical direct sum: same horizontal graphs, vertical edges side by side.
pub fn direct_sum(w1: &Connection, w2: &Connection) -> Result<Connection> {
    if w1.top != w2.top || w1.bottom != w2.bottom {
        return Err(Error::GraphMismatch("direct sum needs equal horizontal graphs".into()));
    }
    if !same_weights(&w1.weights, &w2.weights) {
        return Err(Error::GraphMismatch("vertex weights differ".into()));
    }
    let (left, l1, l2) = w1.left.disjoint_union(&w2.left)?;
    let (right, r1, r2) = w1.right.disjoint_union(&w2.right)?;
    let cells = w1
        .cells()
        .into_iter()
        .map(|([t, r, b, l], v)| ([t, r1[r as usize], b, l1[l as usize]], v))
        .chain(w2.cells().into_iter().map(|([t, r, b, l], v)| ([t, r2[r as usize], b, l2[l as usize]], v)))
        .collect::<Vec<_>>();
    Connection::from_cells(w1.top.clone(), Arc::new(left), Arc::new(right), w1.bottom.clone(), w1.weights.clone(), cells)
}
