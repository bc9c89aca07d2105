//! Intertwiner spaces between connections with common horizontal graphs, and
//! the integer invariants built from them.
//!
//! An intertwiner from `W1` to `W2` is a family of matrices `x[a, b]` mapping
//! the vertical edges `a -> b` of `W1` to those of `W2` such that every corner
//! satisfies `(x (+) 1) U1 = U2 (1 (+) x)`. The solver fixes the matrices on
//! the vertical edges leaving an anchor vertex and propagates them along the
//! horizontal graph with the unitarity of `U2`; the remaining corner equations
//! give a small linear system whose kernel is the space.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::QSystemSpec;
use crate::connection::Connection;
use crate::error::{Error, Result};
use crate::fusion::{FusionCategory, Sign};
use crate::induction::InductionTower;
use crate::linalg::{c, null_space, RankTolerances, RowReducer, CMat, C64};

/// Largest unknown count accepted by the unreduced solver.
pub const FULL_ROUTE_MAX_UNKNOWNS: usize = 4096;
/// Reconstructed intertwiners must satisfy the equations to this accuracy.
const RESIDUAL_TOL: f64 = 1e-6;

/// Which linear system produced an intertwiner space.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomRoute {
    /// Unknowns on the anchor vertices only, the rest by propagation.
    Anchored,
    /// Every matrix entry is an unknown.
    Full,
}

/// A vertex-indexed family of matrices `x[(a, b)]`, of shape
/// `count2(a, b) x count1(a, b)`; missing pairs are zero.
#[derive(Clone, Debug, Default)]
pub struct Intertwiner {
    pub blocks: BTreeMap<(u32, u32), CMat>,
}

impl Intertwiner {
    /// Trace pairing `sum_{a,b} tr(x[a,b]^dagger y[a,b])`.
    pub fn pairing(&self, other: &Intertwiner) -> C64 {
        let mut s = c(0.0);
        for (k, m) in &self.blocks {
            if let Some(o) = other.blocks.get(k) {
                s += m.iter().zip(o.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
            }
        }
        s
    }

    fn axpy(&mut self, z: C64, other: &Intertwiner) {
        for (k, m) in &other.blocks {
            let e = self.blocks.entry(*k).or_insert_with(|| CMat::zeros(m.nrows(), m.ncols()));
            *e += m * z;
        }
    }
}

/// Basis of the intertwiners between two connections.
#[derive(Clone, Debug)]
pub struct IntertwinerSpace {
    pub dim: usize,
    /// Orthonormal under [`Intertwiner::pairing`].
    pub basis: Vec<Intertwiner>,
    pub largest_null: f64,
    pub smallest_nonnull: f64,
    /// Largest equation residual of a basis element.
    pub residual: f64,
    pub route: HomRoute,
}

/// Row and column labels of one corner: rows `(a3, i, b)` (left edge index
/// `i` among `a1 -> a3`, bottom edge `b`), columns `(t, a2, j)`.
struct Layout {
    rows: Vec<(u32, u32, u32)>,
    cols: Vec<(u32, u32, u32)>,
}

fn local_index(set: &crate::connection::EdgeSet) -> Vec<u32> {
    let mut idx = vec![0u32; set.len()];
    let n = set.n_vertices();
    for a in 0..n {
        for b in 0..n {
            for (i, &e) in set.between(a, b).iter().enumerate() {
                idx[e as usize] = i as u32;
            }
        }
    }
    idx
}

fn layouts(w: &Connection) -> HashMap<(u32, u32), Layout> {
    let li = local_index(w.left());
    let ri = local_index(w.right());
    let n = w.n_vertices();
    let mut out = HashMap::new();
    for a1 in 0..n {
        for a4 in 0..n {
            let p = w.corner_paths(a1, a4);
            if p.rows.is_empty() && p.cols.is_empty() {
                continue;
            }
            let rows = p.rows.iter().map(|&(l, b)| (w.left().edge(l).dst, li[l as usize], b)).collect();
            let cols = p.cols.iter().map(|&(t, r)| (t, w.top().edge(t).dst, ri[r as usize])).collect();
            out.insert((a1 as u32, a4 as u32), Layout { rows, cols });
        }
    }
    out
}

struct HomProblem<'a> {
    w1: &'a Connection,
    w2: &'a Connection,
    n: usize,
    c1: Vec<Vec<usize>>,
    c2: Vec<Vec<usize>>,
    /// Blocks reachable by propagation: both right graphs have the edges.
    on_right: Vec<Vec<bool>>,
    lay1: HashMap<(u32, u32), Layout>,
    lay2: HashMap<(u32, u32), Layout>,
    tol: RankTolerances,
}

/// Vertical multiplicities from the left and right graphs together (they
/// must agree where both have edges), and where the right graph has edges.
fn vertical_counts(w: &Connection) -> Result<(Vec<Vec<usize>>, Vec<Vec<bool>>)> {
    let (l, r) = (w.left().matrix(), w.right().matrix());
    let n = l.len();
    let mut counts = vec![vec![0usize; n]; n];
    let mut right = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            let (x, y) = (l[a][b] as usize, r[a][b] as usize);
            if x > 0 && y > 0 && x != y {
                return Err(Error::GraphMismatch(format!("left and right graphs disagree on {a} -> {b}")));
            }
            counts[a][b] = x.max(y);
            right[a][b] = y > 0;
        }
    }
    Ok((counts, right))
}

impl<'a> HomProblem<'a> {
    fn new(w1: &'a Connection, w2: &'a Connection) -> Result<Self> {
        if w1.top() != w2.top() || w1.bottom() != w2.bottom() {
            return Err(Error::GraphMismatch(format!(
                "horizontal graphs differ: {}/{} vs {}/{}",
                w1.top().name(),
                w1.bottom().name(),
                w2.top().name(),
                w2.bottom().name()
            )));
        }
        if w1.top().edges() != w2.top().edges() || w1.bottom().edges() != w2.bottom().edges() {
            return Err(Error::GraphMismatch("horizontal edge lists differ".into()));
        }
        let n = w1.n_vertices();
        if w1.weights().iter().zip(w2.weights().iter()).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::GraphMismatch("vertex weights differ".into()));
        }
        let (c1, r1) = vertical_counts(w1)?;
        let (c2, r2) = vertical_counts(w2)?;
        let on_right = (0..n).map(|a| (0..n).map(|b| r1[a][b] && r2[a][b]).collect()).collect();
        Ok(HomProblem { w1, w2, n, c1, c2, on_right, lay1: layouts(w1), lay2: layouts(w2), tol: RankTolerances::default() })
    }

    fn shape(&self, a: usize, b: usize) -> (usize, usize) {
        (self.c2[a][b], self.c1[a][b])
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                let (r, s) = self.shape(a, b);
                if r > 0 && s > 0 {
                    v.push((a, b));
                }
            }
        }
        v
    }

    fn get<'x>(&self, x: &'x Intertwiner, a: u32, b: u32) -> Option<&'x CMat> {
        x.blocks.get(&(a, b))
    }

    /// `(x (+) 1)` on the left path spaces of corner `(a1, a4)`: rows of `W2`, rows of `W1`.
    fn left_map(&self, x: &Intertwiner, a1: u32, l2: &Layout, l1: &Layout) -> CMat {
        let mut m = CMat::zeros(l2.rows.len(), l1.rows.len());
        for (p, &(a3, i2, b2)) in l2.rows.iter().enumerate() {
            let Some(xb) = self.get(x, a1, a3) else { continue };
            for (q, &(a3b, i1, b1)) in l1.rows.iter().enumerate() {
                if a3b == a3 && b1 == b2 {
                    m[(p, q)] = xb[(i2 as usize, i1 as usize)];
                }
            }
        }
        m
    }

    /// `(1 (+) x)` on the right path spaces of corner `(a1, a4)`: columns of `W2`, columns of `W1`.
    fn right_map(&self, x: &Intertwiner, a4: u32, l2: &Layout, l1: &Layout) -> CMat {
        let mut m = CMat::zeros(l2.cols.len(), l1.cols.len());
        for (p, &(t2, a2, j2)) in l2.cols.iter().enumerate() {
            let Some(xb) = self.get(x, a2, a4) else { continue };
            for (q, &(t1, _, j1)) in l1.cols.iter().enumerate() {
                if t1 == t2 {
                    m[(p, q)] = xb[(j2 as usize, j1 as usize)];
                }
            }
        }
        m
    }

    fn empty(&self) -> Layout {
        Layout { rows: vec![], cols: vec![] }
    }

    /// Residual blocks of every corner, flattened in a fixed order.
    fn residual(&self, x: &Intertwiner) -> Vec<C64> {
        let mut out = Vec::new();
        let empty = self.empty();
        for a1 in 0..self.n as u32 {
            for a4 in 0..self.n as u32 {
                let l1 = self.lay1.get(&(a1, a4)).unwrap_or(&empty);
                let l2 = self.lay2.get(&(a1, a4)).unwrap_or(&empty);
                if l2.rows.is_empty() || l1.cols.is_empty() {
                    continue;
                }
                let u1 = self.w1.block(a1 as usize, a4 as usize);
                let u2 = self.w2.block(a1 as usize, a4 as usize);
                let lhs = self.left_map(x, a1, l2, l1) * u1;
                let rhs = u2 * self.right_map(x, a4, l2, l1);
                out.extend((lhs - rhs).iter().copied());
            }
        }
        out
    }

    /// Blocks carrying free parameters and propagation steps `(a1, t, a2)`.
    /// Every block of an anchor is free; a block reached by propagation is
    /// free only when it does not occur on the right of the cells.
    fn propagation_plan(&self) -> (Vec<(usize, usize)>, Vec<(usize, u32, usize)>) {
        let top = self.w1.top();
        let star_first = std::iter::once(self.w1.weights().iter().position(|w| (*w - 1.0).abs() < 1e-12).unwrap_or(0))
            .chain(0..self.n);
        let mut seen = vec![false; self.n];
        let mut free = Vec::new();
        let mut steps = Vec::new();
        for v in star_first {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            free.extend(self.pairs().into_iter().filter(|&(a, _)| a == v));
            let mut queue = VecDeque::from([v]);
            while let Some(a1) = queue.pop_front() {
                for &t in top.out(a1) {
                    let a2 = top.edge(t).dst as usize;
                    if !seen[a2] {
                        seen[a2] = true;
                        steps.push((a1, t, a2));
                        free.extend(self.pairs().into_iter().filter(|&(a, b)| a == a2 && !self.on_right[a][b]));
                        queue.push_back(a2);
                    }
                }
            }
        }
        (free, steps)
    }

    /// Extends `x` (known on the anchor rows) to every vertex.
    fn propagate(&self, x: &mut Intertwiner, steps: &[(usize, u32, usize)]) {
        let empty = self.empty();
        for &(a1, t, a2) in steps {
            for b in 0..self.n {
                let (r, s) = self.shape(a2, b);
                if r == 0 || s == 0 || !self.on_right[a2][b] {
                    continue;
                }
                let key = (a1 as u32, b as u32);
                let l1 = self.lay1.get(&key).unwrap_or(&empty);
                let l2 = self.lay2.get(&key).unwrap_or(&empty);
                let u1 = self.w1.block(a1, b);
                let u2 = self.w2.block(a1, b);
                let m = u2.adjoint() * self.left_map(x, a1 as u32, l2, l1) * u1;
                let pick2: Vec<(usize, u32)> =
                    l2.cols.iter().enumerate().filter(|(_, c)| c.0 == t).map(|(p, c)| (p, c.2)).collect();
                let pick1: Vec<(usize, u32)> =
                    l1.cols.iter().enumerate().filter(|(_, c)| c.0 == t).map(|(p, c)| (p, c.2)).collect();
                let mut xb = CMat::zeros(r, s);
                for &(p, j2) in &pick2 {
                    for &(q, j1) in &pick1 {
                        xb[(j2 as usize, j1 as usize)] = m[(p, q)];
                    }
                }
                x.blocks.insert((a2 as u32, b as u32), xb);
            }
        }
    }

    fn finish(&self, raw: Vec<Intertwiner>, ns_largest: f64, ns_smallest: f64, route: HomRoute) -> Result<IntertwinerSpace> {
        // orthonormalize under the trace pairing
        let mut basis: Vec<Intertwiner> = Vec::new();
        for mut v in raw {
            for _ in 0..2 {
                for b in &basis {
                    let p = b.pairing(&v);
                    v.axpy(-p, b);
                }
            }
            let norm = v.pairing(&v).re.sqrt();
            if norm < 1e-9 {
                return Err(Error::numeric("intertwiner basis became dependent", norm));
            }
            for m in v.blocks.values_mut() {
                *m /= c(norm);
            }
            basis.push(v);
        }
        let mut residual: f64 = 0.0;
        for b in &basis {
            residual = residual.max(self.residual(b).iter().fold(0.0, |a, z| a.max(z.norm())));
        }
        if residual > RESIDUAL_TOL {
            return Err(Error::numeric("intertwiner equations not satisfied", residual));
        }
        Ok(IntertwinerSpace {
            dim: basis.len(),
            basis,
            largest_null: ns_largest,
            smallest_nonnull: ns_smallest,
            residual,
            route,
        })
    }

    fn solve_anchored(&self) -> Result<IntertwinerSpace> {
        let (free, steps) = self.propagation_plan();
        let mut params: Vec<(u32, u32, usize, usize)> = Vec::new();
        for &(a, b) in &free {
            let (r, s) = self.shape(a, b);
            for i in 0..r {
                for j in 0..s {
                    params.push((a as u32, b as u32, i, j));
                }
            }
        }
        if params.is_empty() {
            return self.finish(vec![], 0.0, f64::INFINITY, HomRoute::Anchored);
        }
        let build = |coeffs: &[C64]| {
            let mut x = Intertwiner::default();
            for &(a, b) in &free {
                let (r, s) = self.shape(a, b);
                x.blocks.insert((a as u32, b as u32), CMat::zeros(r, s));
            }
            for (&(a, b, i, j), z) in params.iter().zip(coeffs) {
                x.blocks.get_mut(&(a, b)).expect("free block")[(i, j)] = *z;
            }
            self.propagate(&mut x, &steps);
            x
        };
        let p = params.len();
        let columns: Vec<Vec<C64>> = (0..p)
            .map(|k| {
                let mut e = vec![c(0.0); p];
                e[k] = c(1.0);
                self.residual(&build(&e))
            })
            .collect();
        let rows = columns[0].len();
        let mut red = RowReducer::new(p);
        let mut row = vec![c(0.0); p];
        for r in 0..rows {
            for (k, col) in columns.iter().enumerate() {
                row[k] = col[r];
            }
            red.push_row(&row);
        }
        let ns = null_space(&red.finish(), self.tol.zero, self.tol.gap)?;
        let raw = ns.basis.iter().map(|v| build(v.as_slice())).collect();
        self.finish(raw, ns.largest_null, ns.smallest_nonnull, HomRoute::Anchored)
    }

    fn solve_full(&self) -> Result<IntertwinerSpace> {
        let mut offset: HashMap<(u32, u32), usize> = HashMap::new();
        let mut total = 0;
        for (a, b) in self.pairs() {
            offset.insert((a as u32, b as u32), total);
            let (r, s) = self.shape(a, b);
            total += r * s;
        }
        if total > FULL_ROUTE_MAX_UNKNOWNS {
            return Err(Error::Resource(format!("{total} unknowns exceed the unreduced solver bound")));
        }
        if total == 0 {
            return self.finish(vec![], 0.0, f64::INFINITY, HomRoute::Full);
        }
        let idx = |a: u32, b: u32, i: u32, j: u32| offset[&(a, b)] + i as usize * self.c1[a as usize][b as usize] + j as usize;
        let mut red = RowReducer::new(total);
        let empty = self.empty();
        for a1 in 0..self.n as u32 {
            for a4 in 0..self.n as u32 {
                let l1 = self.lay1.get(&(a1, a4)).unwrap_or(&empty);
                let l2 = self.lay2.get(&(a1, a4)).unwrap_or(&empty);
                if l2.rows.is_empty() || l1.cols.is_empty() {
                    continue;
                }
                let u1 = self.w1.block(a1 as usize, a4 as usize);
                let u2 = self.w2.block(a1 as usize, a4 as usize);
                for (p, &(a3, i2, b2)) in l2.rows.iter().enumerate() {
                    for (q, &(t1, a2, j1)) in l1.cols.iter().enumerate() {
                        let mut row = vec![c(0.0); total];
                        for (p1, &(a3b, i1, b1)) in l1.rows.iter().enumerate() {
                            if a3b == a3 && b1 == b2 && self.c2[a1 as usize][a3 as usize] > 0 {
                                row[idx(a1, a3, i2, i1)] += u1[(p1, q)];
                            }
                        }
                        for (q2, &(t2, _, j2)) in l2.cols.iter().enumerate() {
                            if t2 == t1 && self.c1[a2 as usize][a4 as usize] > 0 {
                                row[idx(a2, a4, j2, j1)] -= u2[(p, q2)];
                            }
                        }
                        red.push_row(&row);
                    }
                }
            }
        }
        let ns = null_space(&red.finish(), self.tol.zero, self.tol.gap)?;
        let raw = ns
            .basis
            .iter()
            .map(|v| {
                let mut x = Intertwiner::default();
                for (a, b) in self.pairs() {
                    let (r, s) = self.shape(a, b);
                    let o = offset[&(a as u32, b as u32)];
                    x.blocks.insert((a as u32, b as u32), CMat::from_fn(r, s, |i, j| v[o + i * s + j]));
                }
                x
            })
            .collect();
        self.finish(raw, ns.largest_null, ns.smallest_nonnull, HomRoute::Full)
    }
}

/// Intertwiners from `w1` to `w2` (anchored solver).
pub fn intertwiner_space(w1: &Connection, w2: &Connection) -> Result<IntertwinerSpace> {
    intertwiner_space_with(w1, w2, RankTolerances::default())
}

pub fn intertwiner_space_with(w1: &Connection, w2: &Connection, tol: RankTolerances) -> Result<IntertwinerSpace> {
    let mut p = HomProblem::new(w1, w2)?;
    p.tol = tol;
    p.solve_anchored()
}

/// Same space, with every entry of every matrix as an unknown; used as an
/// independent check on small inputs.
pub fn intertwiner_space_full(w1: &Connection, w2: &Connection) -> Result<IntertwinerSpace> {
    HomProblem::new(w1, w2)?.solve_full()
}

pub fn hom_dim(w1: &Connection, w2: &Connection) -> Result<usize> {
    Ok(intertwiner_space(w1, w2)?.dim)
}

/// Whether a vertex-indexed family of unitaries carries `w1` to `w2`.
///
/// Both must have the same four graphs; the test is that the intertwiner
/// spaces `Hom(w1, w2)`, `End(w1)` and `End(w2)` all have the same dimension
/// and that some intertwiner is invertible, which for unitary connections
/// forces a unitary one.
pub fn gauge_equivalent(w1: &Connection, w2: &Connection) -> bool {
    let same = w1.top() == w2.top()
        && w1.bottom() == w2.bottom()
        && w1.left().matrix() == w2.left().matrix()
        && w1.right().matrix() == w2.right().matrix()
        && w1.top().edges() == w2.top().edges()
        && w1.bottom().edges() == w2.bottom().edges();
    if !same {
        return false;
    }
    let (Ok(h), Ok(e1), Ok(e2)) = (intertwiner_space(w1, w2), intertwiner_space(w1, w1), intertwiner_space(w2, w2)) else {
        return false;
    };
    if h.dim == 0 || h.dim != e1.dim || h.dim != e2.dim {
        return false;
    }
    // a generic combination is invertible when any element is
    let mut x = Intertwiner::default();
    for (k, b) in h.basis.iter().enumerate() {
        let z = C64::from_polar(1.0, 0.7 + 1.3 * k as f64) * c(1.0 + 0.37 * k as f64);
        x.axpy(z, b);
    }
    x.blocks.values().all(|m| m.nrows() == m.ncols() && m.clone().svd(false, false).singular_values.min() > 1e-6)
}

/// Irreducible pieces of a connection with their multiplicities.
#[derive(Clone, Debug)]
pub struct Component {
    pub connection: Connection,
    pub multiplicity: usize,
}

/// Splits `w` along a generic self-adjoint element of its endomorphism
/// algebra: each eigenspace family carries a sub-connection; pieces joined
/// by nonzero intertwiners are grouped as one irreducible with multiplicity.
pub fn decompose(w: &Connection) -> Result<Vec<Component>> {
    let end = intertwiner_space(w, w)?;
    if end.dim == 1 {
        return Ok(vec![Component { connection: w.clone(), multiplicity: 1 }]);
    }
    // generic Hermitian element
    let mut h = Intertwiner::default();
    for (k, b) in end.basis.iter().enumerate() {
        let z = c(1.0 + (k as f64 * 0.618_033_988_75).fract());
        h.axpy(z, b);
        let mut adj = Intertwiner::default();
        for (key, m) in &b.blocks {
            adj.blocks.insert(*key, m.adjoint());
        }
        h.axpy(z, &adj);
    }
    // the eigenvalues are shared across all blocks; collect and cluster
    let mut eig: BTreeMap<(u32, u32), (Vec<f64>, CMat)> = BTreeMap::new();
    let mut values: Vec<f64> = Vec::new();
    for (k, m) in &h.blocks {
        let (vals, vecs) = crate::linalg::hermitian_eigen(m);
        values.extend(vals.iter().copied());
        eig.insert(*k, (vals, vecs));
    }
    values.sort_by(f64::total_cmp);
    let mut clusters: Vec<f64> = Vec::new();
    for v in values {
        match clusters.last() {
            Some(&last) if (v - last).abs() < 1e-6 => {}
            _ => clusters.push(v),
        }
    }
    let mut minimal: Vec<Connection> = Vec::new();
    for (ci, &centre) in clusters.iter().enumerate() {
        let mut iso = BTreeMap::new();
        for (k, (vals, vecs)) in &eig {
            let cols: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] - centre).abs() < 1e-6).collect();
            if cols.is_empty() {
                continue;
            }
            iso.insert(*k, CMat::from_fn(vecs.nrows(), cols.len(), |r, j| vecs[(r, cols[j])]));
        }
        let piece = w.compress(&format!("{}#{ci}", w.left().name()), &iso)?;
        minimal.push(piece);
    }
    // group equivalent minimal pieces
    let mut out: Vec<Component> = Vec::new();
    'outer: for p in minimal {
        for comp in &mut out {
            if comp.connection.left().matrix() == p.left().matrix() && hom_dim(&comp.connection, &p).unwrap_or(0) > 0 {
                comp.multiplicity += 1;
                continue 'outer;
            }
        }
        let d = hom_dim(&p, &p)?;
        if d != 1 {
            return Err(Error::numeric(format!("piece has endomorphism dimension {d}"), d as f64 - 1.0));
        }
        out.push(Component { connection: p, multiplicity: 1 });
    }
    Ok(out)
}

/// Integer matrix indexed by pairs of objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZMatrix {
    pub spec: String,
    pub level: u32,
    pub entries: Vec<Vec<u32>>,
    /// Smallest nonzero singular value over all solves.
    pub min_gap: f64,
    /// Largest singular value counted as zero over all solves.
    pub max_null: f64,
}

impl ZMatrix {
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.entries[a][b]
    }

    /// `max |ZS - SZ|` and `max |ZT - TZ|`.
    pub fn modular_defects(&self, cat: &FusionCategory) -> (f64, f64) {
        let s = cat.s_matrix();
        let t = cat.t_diagonal();
        let n = self.entries.len();
        let (mut ds, mut dt): (f64, f64) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let mut zs = 0.0;
                let mut sz = 0.0;
                for m in 0..n {
                    zs += f64::from(self.entries[i][m]) * s[m][j];
                    sz += s[i][m] * f64::from(self.entries[m][j]);
                }
                ds = ds.max((zs - sz).abs());
                let z = f64::from(self.entries[i][j]);
                dt = dt.max((t[j] * z - t[i] * z).norm());
            }
        }
        (ds, dt)
    }
}

/// Induced connections of every object, for both braidings.
pub struct InducedFamily {
    pub spec: QSystemSpec,
    pub plus: Vec<Connection>,
    pub minus: Vec<Connection>,
    pub tol: RankTolerances,
}

impl InducedFamily {
    pub fn new(spec: &QSystemSpec) -> Result<Self> {
        Self::up_to(spec, spec.level)
    }

    /// Objects `0..=max_lambda` only.
    pub fn up_to(spec: &QSystemSpec, max_lambda: u32) -> Result<Self> {
        let tower = InductionTower::new(spec, max_lambda)?;
        let build = |sign| (0..=max_lambda).into_par_iter().map(|l| tower.induce(l, sign).map(|w| w.connection)).collect();
        let plus: Result<Vec<_>> = build(Sign::Plus);
        let minus: Result<Vec<_>> = build(Sign::Minus);
        Ok(InducedFamily { spec: spec.clone(), plus: plus?, minus: minus?, tol: RankTolerances::default() })
    }

    pub fn get(&self, lambda: usize, sign: Sign) -> &Connection {
        match sign {
            Sign::Plus => &self.plus[lambda],
            Sign::Minus => &self.minus[lambda],
        }
    }

    /// `dim Hom(alpha^{s1}_a, alpha^{s2}_b)` for all pairs; pairs of different
    /// parity have no common vertical edges and are skipped.
    pub fn hom_matrix(&self, s1: Sign, s2: Sign) -> Result<ZMatrix> {
        let n = self.plus.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|(a, b)| (a + b) % 2 == 0).collect();
        let solved: Result<Vec<((usize, usize), IntertwinerSpace)>> = pairs
            .into_par_iter()
            .map(|(a, b)| intertwiner_space_with(self.get(a, s1), self.get(b, s2), self.tol).map(|h| ((a, b), h)))
            .collect();
        let mut entries = vec![vec![0u32; n]; n];
        let (mut min_gap, mut max_null) = (f64::INFINITY, 0.0f64);
        for ((a, b), h) in solved? {
            entries[a][b] = h.dim as u32;
            min_gap = min_gap.min(h.smallest_nonnull);
            max_null = max_null.max(h.largest_null);
        }
        Ok(ZMatrix { spec: self.spec.name.clone(), level: self.spec.level, entries, min_gap, max_null })
    }
}

/// `Z[a][b] = dim Hom(alpha^+_a, alpha^-_b)`.
pub fn z_matrix(spec: &QSystemSpec) -> Result<ZMatrix> {
    InducedFamily::new(spec)?.hom_matrix(Sign::Plus, Sign::Minus)
}

/// Objects of the commutative part, with multiplicity `Z[a][0]`.
pub fn theta_plus(z: &ZMatrix) -> Vec<u32> {
    let mut out = Vec::new();
    for (a, row) in z.entries.iter().enumerate() {
        for _ in 0..row[0] {
            out.push(a as u32);
        }
    }
    out
}

/// Dimensions of the flat parts: `even[k]` for `(lambda-bar lambda)^k` and
/// `odd[k]` for `lambda (lambda-bar lambda)^k`, with the matching fusion-ring
/// counts against the algebra object. Serialized as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatPartTable {
    pub spec: String,
    pub lambda: u32,
    #[serde(with = "decimal")]
    pub even: Vec<BigUint>,
    #[serde(with = "decimal")]
    pub odd: Vec<BigUint>,
    #[serde(with = "decimal")]
    pub even_fusion: Vec<BigUint>,
    #[serde(with = "decimal")]
    pub odd_fusion: Vec<BigUint>,
}

mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter().map(|x| x.parse::<BigUint>().map_err(D::Error::custom)).collect()
    }
}

/// A strict inequality between a flat-part dimension and its fusion count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub k: usize,
    pub odd: bool,
    pub lhs: String,
    pub rhs: String,
}

impl FlatPartTable {
    /// Index `n` of the merged sequence is the tensor length `n` (even or odd).
    pub fn merged(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        for k in 0..self.even.len() {
            out.push(self.even[k].clone());
            out.push(self.odd[k].clone());
        }
        out
    }

    pub fn merged_fusion(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        for k in 0..self.even_fusion.len() {
            out.push(self.even_fusion[k].clone());
            out.push(self.odd_fusion[k].clone());
        }
        out
    }

    /// First level at which the two sequences differ, even length first.
    pub fn first_mismatch(&self) -> Option<Mismatch> {
        for k in 0..self.even.len() {
            for (odd, a, b) in [(false, &self.even[k], &self.even_fusion[k]), (true, &self.odd[k], &self.odd_fusion[k])] {
                if a != b {
                    return Some(Mismatch { k, odd, lhs: a.to_string(), rhs: b.to_string() });
                }
            }
        }
        None
    }
}

/// Multiplicity vector of `lambda^{n}` (every object is self-dual).
pub fn power_multiplicities(cat: &FusionCategory, lambda: usize, n: usize) -> Vec<BigUint> {
    let r = cat.rank();
    let mut v = vec![BigUint::from(0u32); r];
    v[0] = BigUint::from(1u32);
    for _ in 0..n {
        let mut w = vec![BigUint::from(0u32); r];
        for (a, m) in v.iter().enumerate() {
            if m.bits() == 0 {
                continue;
            }
            for ch in cat.channels(a, lambda) {
                w[ch] += m;
            }
        }
        v = w;
    }
    v
}

/// `m^T z m`.
pub fn quadratic_form(m: &[BigUint], z: &[Vec<u32>]) -> BigUint {
    let mut s = BigUint::from(0u32);
    for (a, ma) in m.iter().enumerate() {
        if ma.bits() == 0 {
            continue;
        }
        let mut row = BigUint::from(0u32);
        for (b, mb) in m.iter().enumerate() {
            if z[a][b] != 0 {
                row += mb * z[a][b];
            }
        }
        s += ma * row;
    }
    s
}

/// `dim Hom(theta a, b)` for the algebra object of `spec`.
pub fn theta_fusion_matrix(spec: &QSystemSpec, cat: &FusionCategory) -> Vec<Vec<u32>> {
    let n = cat.rank();
    let mut out = vec![vec![0u32; n]; n];
    for &t in &spec.theta {
        let f = cat.fusion_matrix(t as usize);
        for a in 0..n {
            for b in 0..n {
                out[a][b] += f[a][b];
            }
        }
    }
    out
}

/// Flat-part dimensions from the decomposition of `alpha^+` of tensor powers:
/// `alpha^+` is multiplicative, so the endomorphism dimension of
/// `(lambda-bar lambda)^k` is `m^T Z+ m` with `m` its multiplicity vector and
/// `Z+[a][b] = dim Hom(alpha^+_a, alpha^+_b)`.
pub fn flat_part_table(spec: &QSystemSpec, z_plus: &ZMatrix, lambda: u32, k_max: usize) -> Result<FlatPartTable> {
    let cat = spec.category()?;
    cat.check(lambda.into())?;
    let nt = theta_fusion_matrix(spec, &cat);
    let mut t = FlatPartTable {
        spec: spec.name.clone(),
        lambda,
        even: vec![],
        odd: vec![],
        even_fusion: vec![],
        odd_fusion: vec![],
    };
    for k in 0..=k_max {
        let me = power_multiplicities(&cat, lambda as usize, 2 * k);
        let mo = power_multiplicities(&cat, lambda as usize, 2 * k + 1);
        t.even.push(quadratic_form(&me, &z_plus.entries));
        t.odd.push(quadratic_form(&mo, &z_plus.entries));
        t.even_fusion.push(quadratic_form(&me, &nt));
        t.odd_fusion.push(quadratic_form(&mo, &nt));
    }
    Ok(t)
}

/// The even flat-part sequence `k = 0..=k_max`.
pub fn flat_part_dims(spec: &QSystemSpec, lambda: u32, k_max: usize) -> Result<Vec<BigUint>> {
    let fam = InducedFamily::new(spec)?;
    let zp = fam.hom_matrix(Sign::Plus, Sign::Plus)?;
    Ok(flat_part_table(spec, &zp, lambda, k_max)?.even)
}

/// `dim End` of the vertical composite of `n` copies of `alpha^{sign}_lambda`,
/// solved directly on the composed connection.
pub fn composed_end_dim(spec: &QSystemSpec, lambda: u32, sign: Sign, n: usize) -> Result<usize> {
    let tower = InductionTower::new(spec, lambda)?;
    let w = tower.induce(lambda, sign)?.connection;
    if n == 0 {
        let id = tower.induce(0, sign)?.connection;
        return hom_dim(&id, &id);
    }
    let mut acc = w.clone();
    for _ in 1..n {
        acc = crate::connection::compose_vertical(&acc, &w)?;
    }
    hom_dim(&acc, &acc)
}

/// Maximum absolute entry of an intertwiner residual, for reporting.
pub fn intertwiner_residual(w1: &Connection, w2: &Connection, x: &Intertwiner) -> Result<f64> {
    let p = HomProblem::new(w1, w2)?;
    Ok(p.residual(x).iter().fold(0.0, |a, z| a.max(z.norm())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{catalog, ghj_cells};
    use crate::induction::{crossing_connection, induce};
    use crate::fusion::ObjectLabel;

    #[test]
    fn fundamental_cells_are_irreducible() {
        for spec in catalog().into_iter().filter(|s| s.level <= 10) {
            let w = ghj_cells(&spec).unwrap();
            let a = intertwiner_space(&w, &w).unwrap();
            let f = intertwiner_space_full(&w, &w).unwrap();
            assert_eq!((a.dim, f.dim), (1, 1), "{}", spec.name);
        }
    }

    #[test]
    fn routes_agree_on_induced_pairs() {
        let spec = QSystemSpec::by_name("D5").unwrap();
        let fam = InducedFamily::up_to(&spec, 4).unwrap();
        for a in 0..=4 {
            for b in 0..=4 {
                for (s1, s2) in [(Sign::Plus, Sign::Plus), (Sign::Plus, Sign::Minus)] {
                    let x = intertwiner_space(fam.get(a, s1), fam.get(b, s2)).unwrap();
                    let y = intertwiner_space_full(fam.get(a, s1), fam.get(b, s2)).unwrap();
                    assert_eq!(x.dim, y.dim, "{a} {b} {s1:?} {s2:?}");
                    assert!(x.residual < 1e-9);
                }
            }
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let spec = QSystemSpec::by_name("A4").unwrap();
        let w = induce(&spec, 1, Sign::Plus).unwrap().connection;
        let w2 = crate::connection::compose_vertical(&w, &w).unwrap();
        let e = intertwiner_space(&w2, &w2).unwrap();
        assert_eq!(e.dim, 2);
        for i in 0..e.dim {
            for j in 0..e.dim {
                let p = e.basis[i].pairing(&e.basis[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p - c(want)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn a_series_z_is_identity() {
        for k in 1..=5u32 {
            let spec = QSystemSpec::by_name(&format!("A{}", k + 1)).unwrap();
            let z = z_matrix(&spec).unwrap();
            for a in 0..=k as usize {
                for b in 0..=k as usize {
                    assert_eq!(z.get(a, b), u32::from(a == b), "k={k}");
                }
            }
            assert_eq!(theta_plus(&z), vec![0]);
        }
    }

    #[test]
    fn induced_matches_crossing_on_a_series() {
        // every edge set is multiplicity free here, so the comparison is up to
        // edge phases on all four sides
        for k in 1..=5u32 {
            let cat = FusionCategory::su2(k).unwrap();
            let spec = QSystemSpec::by_name(&format!("A{}", k + 1)).unwrap();
            for lam in 0..=k {
                for sign in [Sign::Plus, Sign::Minus] {
                    let w = induce(&spec, lam, sign).unwrap().connection;
                    let x = crossing_connection(&cat, ObjectLabel(lam), ObjectLabel(1), sign).unwrap();
                    let renamed = Connection::from_blocks(
                        w.top().clone(),
                        w.left().clone(),
                        w.right().clone(),
                        w.bottom().clone(),
                        w.weights().clone(),
                        x.blocks().clone(),
                    )
                    .unwrap();
                    assert!(crate::cells::phase_gauge_equivalent(&w, &renamed, 1e-9), "k={k} lambda={lam} {sign:?}");
                }
            }
        }
    }

    #[test]
    fn gauge_equivalence_cases() {
        let spec = QSystemSpec::by_name("A3").unwrap();
        let w = ghj_cells(&spec).unwrap();
        assert!(gauge_equivalent(&w, &w));
        let wc = w.conj();
        assert_eq!(gauge_equivalent(&w, &wc), gauge_equivalent(&w, &wc));
        let other = induce(&spec, 2, Sign::Plus).unwrap().connection;
        assert!(!gauge_equivalent(&w, &other));
    }

    #[test]
    fn decompose_fundamental_square() {
        for name in ["A5", "E6"] {
            let spec = QSystemSpec::by_name(name).unwrap();
            let w = induce(&spec, 1, Sign::Plus).unwrap().connection;
            let w2 = crate::connection::compose_vertical(&w, &w).unwrap();
            let parts = decompose(&w2).unwrap();
            assert_eq!(parts.len(), 2, "{name}");
            assert!(parts.iter().all(|p| p.multiplicity == 1));
            let fam = InducedFamily::up_to(&spec, 2).unwrap();
            // the pieces are the induced connections of 0 and 2
            for target in [0usize, 2] {
                let hit = parts.iter().filter(|p| p.connection.left().matrix() == fam.plus[target].left().matrix()).count();
                assert_eq!(hit, 1, "{name} {target}");
            }
        }
    }

    #[test]
    fn composed_route_matches_table() {
        let spec = QSystemSpec::by_name("E6").unwrap();
        let fam = InducedFamily::up_to(&spec, spec.level).unwrap();
        let zp = fam.hom_matrix(Sign::Plus, Sign::Plus).unwrap();
        let t = flat_part_table(&spec, &zp, 1, 1).unwrap();
        for n in 0..=3 {
            let d = composed_end_dim(&spec, 1, Sign::Plus, n).unwrap();
            assert_eq!(BigUint::from(d), t.merged()[n], "n={n}");
        }
    }
}
