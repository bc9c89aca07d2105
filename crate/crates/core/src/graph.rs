//! Bipartite graphs: A-D-E Dynkin diagrams, fusion graphs on sector modules,
//! Perron-Frobenius data and path counting.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionCategory, ObjectLabel};

/// Largest number of paths `PathSpace::enumerate` will materialize.
pub const MAX_ENUMERATED_PATHS: usize = 2_000_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Series {
    A,
    D,
    E,
}

impl Series {
    pub fn letter(self) -> char {
        match self {
            Series::A => 'A',
            Series::D => 'D',
            Series::E => 'E',
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A finite graph with a bipartition into even and odd vertices, a
/// distinguished vertex and its Perron-Frobenius data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BipartiteGraph {
    name: String,
    labels: Vec<String>,
    /// 0 for even, 1 for odd.
    parity: Vec<u8>,
    /// Symmetric multiplicity matrix over all vertices.
    adjacency: Vec<Vec<u32>>,
    star: usize,
    beta: f64,
    /// Perron-Frobenius weights normalized at the star; absent when disconnected.
    weights: Option<Vec<f64>>,
}

impl PartialEq for BipartiteGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.labels == other.labels
            && self.parity == other.parity
            && self.adjacency == other.adjacency
            && self.star == other.star
    }
}

impl Eq for BipartiteGraph {}

impl BipartiteGraph {
    pub fn new(
        name: impl Into<String>,
        labels: Vec<String>,
        parity: Vec<u8>,
        adjacency: Vec<Vec<u32>>,
        star: usize,
    ) -> Result<Self> {
        let name = name.into();
        let n = labels.len();
        if parity.len() != n || adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) || star >= n {
            return Err(Error::GraphMismatch(format!("{name}: inconsistent vertex data")));
        }
        for i in 0..n {
            for j in 0..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(Error::GraphMismatch(format!("{name}: adjacency not symmetric")));
                }
                if adjacency[i][j] > 0 && parity[i] == parity[j] {
                    return Err(Error::GraphMismatch(format!("{name}: edge {i}-{j} inside one class")));
                }
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| f64::from(adjacency[i][j]));
        let eig = SymmetricEigen::new(m);
        let (top, beta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let mut g = BipartiteGraph { name, labels, parity, adjacency, star, beta, weights: None };
        if g.is_connected() {
            let v = eig.eigenvectors.column(top);
            let s = v[star];
            let w: Vec<f64> = v.iter().map(|x| x / s).collect();
            if w.iter().any(|x| *x <= 1e-12) {
                return Err(Error::numeric("Perron-Frobenius vector not positive", w.iter().cloned().fold(f64::INFINITY, f64::min)));
            }
            g.weights = Some(w);
        }
        Ok(g)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parity(&self, v: usize) -> u8 {
        self.parity[v]
    }

    pub fn even_vertices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.parity[v] == 0).collect()
    }

    pub fn odd_vertices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.parity[v] == 1).collect()
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn multiplicity(&self, a: usize, b: usize) -> u32 {
        self.adjacency[a][b]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().enumerate().filter(|(_, m)| **m > 0).map(|(w, _)| w)
    }

    pub fn star(&self) -> usize {
        self.star
    }

    /// Perron-Frobenius eigenvalue (spectral radius of the adjacency).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Perron-Frobenius weights; errors on disconnected graphs.
    pub fn pf_weights(&self) -> Result<&[f64]> {
        self.weights().ok_or_else(|| Error::GraphMismatch(format!("{} is disconnected", self.name)))
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(self.star).iter().all(|d| d.is_some())
    }

    pub fn distances_from(&self, v: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[v] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap();
            for y in self.neighbors(x) {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// Largest graph distance between two vertices.
    pub fn diameter(&self) -> usize {
        (0..self.len()).flat_map(|v| self.distances_from(v)).flatten().max().unwrap_or(0)
    }

    /// Adjacency as an integer matrix.
    pub fn matrix(&self) -> DMatrix<i64> {
        DMatrix::from_fn(self.len(), self.len(), |i, j| i64::from(self.adjacency[i][j]))
    }

    /// Number of paths of each length `0..=n` from `start` to every vertex.
    pub fn path_counts(&self, start: usize, n: usize) -> Result<Vec<Vec<u64>>> {
        let mut rows = Vec::with_capacity(n + 1);
        let mut cur = vec![0u64; self.len()];
        cur[start] = 1;
        rows.push(cur.clone());
        for _ in 0..n {
            let mut next = vec![0u64; self.len()];
            for (x, &cx) in cur.iter().enumerate() {
                if cx == 0 {
                    continue;
                }
                for (y, &m) in self.adjacency[x].iter().enumerate() {
                    if m > 0 {
                        next[y] = next[y]
                            .checked_add(cx.checked_mul(u64::from(m)).ok_or_else(overflow)?)
                            .ok_or_else(overflow)?;
                    }
                }
            }
            rows.push(next.clone());
            cur = next;
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn overflow() -> Error {
    Error::Resource("path count overflows u64".into())
}

fn simple_graph(name: String, n: usize, edges: &[(usize, usize)], star: usize) -> Result<BipartiteGraph> {
    let mut adj = vec![vec![0u32; n]; n];
    for &(a, b) in edges {
        adj[a][b] += 1;
        adj[b][a] += 1;
    }
    // two-colour by distance from vertex 0 (all diagrams here are trees)
    let mut parity = vec![u8::MAX; n];
    parity[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if adj[x][y] > 0 && parity[y] == u8::MAX {
                parity[y] = 1 - parity[x];
                queue.push_back(y);
            }
        }
    }
    let labels = (0..n).map(|i| format!("v{i}")).collect();
    BipartiteGraph::new(name, labels, parity, adj, star)
}

/// The A-D-E Dynkin diagram with its canonical vertex order.
///
/// * `A_n`: the path `0 - 1 - ... - (n-1)`, star at 0.
/// * `D_n`: tail `0 - ... - (n-3)` with the two fork vertices `n-2`, `n-1`
///   attached to `n-3`; star at the tail end 0.
/// * `E_n`: chain `0 - ... - (n-2)` with vertex `n-1` attached so that vertex 0
///   ends the longest arm; star at 0.
pub fn ade_graph(series: Series, index: usize) -> Result<BipartiteGraph> {
    let bad = Error::InvalidDiagram { series: series.letter(), index };
    let name = format!("{}{}", series.letter(), index);
    let chain = |n: usize| (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect::<Vec<_>>();
    match series {
        Series::A => {
            if index < 2 {
                return Err(bad);
            }
            simple_graph(name, index, &chain(index), 0)
        }
        Series::D => {
            if index < 4 {
                return Err(bad);
            }
            let mut e = chain(index - 1);
            e.push((index - 3, index - 1));
            simple_graph(name, index, &e, 0)
        }
        Series::E => {
            let branch = match index {
                6 => 2,
                7 => 3,
                8 => 4,
                _ => return Err(bad),
            };
            let mut e = chain(index - 1);
            e.push((branch, index - 1));
            simple_graph(name, index, &e, 0)
        }
    }
}

/// Parses names like `A5`, `D6`, `E8`.
pub fn parse_diagram(name: &str) -> Result<(Series, usize)> {
    let mut chars = name.trim().chars();
    let series = match chars.next().map(|c| c.to_ascii_uppercase()) {
        Some('A') => Series::A,
        Some('D') => Series::D,
        Some('E') => Series::E,
        _ => return Err(Error::Spec(format!("unknown diagram `{name}`"))),
    };
    let index: usize = chars.as_str().parse().map_err(|_| Error::Spec(format!("unknown diagram `{name}`")))?;
    ade_graph(series, index)?;
    Ok((series, index))
}

/// Coxeter level: the SU(2) level whose fundamental fusion graph has the same norm.
pub fn diagram_level(series: Series, index: usize) -> Result<u32> {
    let h = match (series, index) {
        (Series::A, n) if n >= 2 => n + 1,
        (Series::D, n) if n >= 4 => 2 * n - 2,
        (Series::E, 6) => 12,
        (Series::E, 7) => 18,
        (Series::E, 8) => 30,
        _ => return Err(Error::InvalidDiagram { series: series.letter(), index }),
    };
    Ok((h - 2) as u32)
}

/// `entry n = sum_v (#paths of length n from star to v)^2` for `n = 0..=n_max`.
pub fn path_algebra_dims(graph: &BipartiteGraph, star: usize, n_max: usize) -> Result<Vec<u64>> {
    graph
        .path_counts(star, n_max)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .try_fold(0u64, |acc, c| c.checked_mul(c).and_then(|s| acc.checked_add(s)))
                .ok_or_else(overflow)
        })
        .collect()
}

/// Explicitly enumerated paths of a fixed length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSpace {
    pub graph: String,
    pub start: usize,
    pub length: usize,
    /// Each path as its vertex sequence together with the parallel-edge index of each step.
    pub paths: Vec<Vec<(usize, u32)>>,
}

impl PathSpace {
    pub fn enumerate(graph: &BipartiteGraph, start: usize, length: usize) -> Result<PathSpace> {
        let mut paths: Vec<Vec<(usize, u32)>> = vec![vec![(start, 0)]];
        for _ in 0..length {
            let mut next = Vec::new();
            for p in &paths {
                let (x, _) = *p.last().unwrap();
                for y in 0..graph.len() {
                    for m in 0..graph.multiplicity(x, y) {
                        let mut q = p.clone();
                        q.push((y, m));
                        next.push(q);
                        if next.len() > MAX_ENUMERATED_PATHS {
                            return Err(Error::Resource(format!("more than {MAX_ENUMERATED_PATHS} paths")));
                        }
                    }
                }
            }
            paths = next;
        }
        Ok(PathSpace { graph: graph.name().to_string(), start, length, paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Number of paths ending at each vertex.
    pub fn endpoint_counts(&self, n_vertices: usize) -> Vec<u64> {
        let mut c = vec![0u64; n_vertices];
        for p in &self.paths {
            c[p.last().unwrap().0] += 1;
        }
        c
    }
}

/// A set of sectors on which the fusion category acts.
#[derive(Clone, Debug)]
pub enum SectorModule {
    /// A subset of the objects, acting by fusion.
    Objects(Vec<ObjectLabel>),
    /// The vertices of a diagram whose adjacency realizes the generator.
    Diagram(BipartiteGraph),
}

/// Matrix of the action of `lambda` on a diagram module: the Chebyshev
/// recursion `G_{n+1} = G_1 G_n - G_{n-1}` with `G_1` the adjacency.
pub fn module_action(cat: &FusionCategory, graph: &BipartiteGraph, lambda: usize) -> Result<Vec<Vec<u32>>> {
    Ok(module_actions(cat, graph)?.swap_remove(lambda))
}

/// Matrices of the action of every object `0..=k` on a diagram module.
pub fn module_actions(cat: &FusionCategory, graph: &BipartiteGraph) -> Result<Vec<Vec<Vec<u32>>>> {
    let n = graph.len();
    if (graph.beta() - cat.qint(2)).abs() > 1e-9 {
        return Err(Error::Spec(format!(
            "{} has norm {:.12} but level {} requires {:.12}",
            graph.name(),
            graph.beta(),
            cat.level(),
            cat.qint(2)
        )));
    }
    let a = graph.matrix();
    let mut mats: Vec<DMatrix<i64>> = vec![DMatrix::identity(n, n), a.clone()];
    for m in 1..=cat.level() as usize {
        let next = &a * &mats[m] - &mats[m - 1];
        mats.push(next);
    }
    let k = cat.level() as usize;
    if mats[k + 1].iter().any(|&x| x != 0) {
        return Err(Error::Spec(format!("{} does not truncate at level {}", graph.name(), k)));
    }
    mats.truncate(k + 1);
    mats.into_iter()
        .enumerate()
        .map(|(lam, m)| {
            if m.iter().any(|&x| x < 0) {
                return Err(Error::Spec(format!("negative multiplicity in the action of {lam} on {}", graph.name())));
            }
            Ok((0..n).map(|i| (0..n).map(|j| m[(i, j)] as u32).collect()).collect())
        })
        .collect()
}

/// Fusion graph of `lambda` acting on a module: edge multiplicity `(a, b)` is
/// the multiplicity of `b` in `a (x) lambda`.
///
/// For odd `lambda` the graph lives on the module vertices with their own
/// bipartition; for even `lambda` (which preserves parity) the vertices are
/// doubled into sources `a` and targets `a'`.
pub fn fusion_graph(cat: &FusionCategory, lambda: ObjectLabel, module: &SectorModule) -> Result<BipartiteGraph> {
    cat.check(lambda)?;
    let lam = lambda.index();
    let (name, labels, parity, action, star) = match module {
        SectorModule::Objects(objs) => {
            for o in objs {
                cat.check(*o)?;
            }
            let pos = |x: usize| objs.iter().position(|o| o.index() == x);
            let n = objs.len();
            let mut m = vec![vec![0u32; n]; n];
            for (i, a) in objs.iter().enumerate() {
                for c in cat.channels(a.index(), lam) {
                    let j = pos(c).ok_or_else(|| Error::NotClosed(format!("{a} x {lambda} contains {c}")))?;
                    m[i][j] += 1;
                }
            }
            let labels: Vec<String> = objs.iter().map(|o| o.to_string()).collect();
            let parity: Vec<u8> = objs.iter().map(|o| (o.0 % 2) as u8).collect();
            let star = pos(0).unwrap_or(0);
            (format!("SU2_{}[{lambda}]", cat.level()), labels, parity, m, star)
        }
        SectorModule::Diagram(g) => {
            let m = module_action(cat, g, lam)?;
            let parity = (0..g.len()).map(|v| g.parity(v)).collect();
            (format!("{}[{lambda}]", g.name()), g.labels().to_vec(), parity, m, g.star())
        }
    };
    let n = labels.len();
    if lam % 2 == 1 {
        BipartiteGraph::new(name, labels, parity, action, star)
    } else {
        let mut adj = vec![vec![0u32; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                adj[i][n + j] = action[i][j];
                adj[n + j][i] = action[i][j];
            }
        }
        let mut l2 = labels.clone();
        l2.extend(labels.iter().map(|l| format!("{l}'")));
        let mut p2 = vec![0u8; n];
        p2.extend(std::iter::repeat(1u8).take(n));
        BipartiteGraph::new(name, l2, p2, adj, star)
    }
}
