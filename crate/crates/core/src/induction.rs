//! Alpha-induced connections. An object `lambda` of SU(2)_k acts on a diagram
//! through cabled copies of the fundamental edge, cut down by Jones-Wenzl
//! projections; passing a horizontal edge through the cable with the
//! positive or negative braiding gives the induced connection.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;


use crate::cells::QSystemSpec;
use crate::connection::{Connection, ConnectionDocument, EdgeSet};
use crate::error::{Error, Result};
use crate::fusion::{FusionCategory, ObjectLabel, Sign};
use crate::graph::{module_actions, BipartiteGraph};
use crate::linalg::{c, range_basis, CMat, C64};

/// Gram-Schmidt cutoff when extracting the range of a Jones-Wenzl projection.
const RANGE_TOL: f64 = 1e-6;

/// Edge set of the `lambda`-fusion graph on the objects; the unit gives the
/// trivial edge set.
pub fn object_fusion_edges(cat: &FusionCategory, lambda: usize) -> EdgeSet {
    if lambda == 0 {
        return EdgeSet::identity("id", cat.rank());
    }
    EdgeSet::from_matrix(format!("SU2_{}[{lambda}]", cat.level()), &cat.fusion_matrix(lambda))
}

/// The braiding of `mu` (horizontal) with `lambda` (vertical) on the objects
/// of SU(2)_k: top and bottom edges are `mu`-fusion edges, left and right
/// edges `lambda`-fusion edges, weights the quantum dimensions, and
///
/// ```text
/// W(a1 -> a2 -> a4, a1 -> a3 -> a4) = sum_c F^{a1 lambda mu}_{a4}[a3, c] R^{mu lambda}_c F^{a1 mu lambda}_{a4}[a2, c].
/// ```
pub fn crossing_connection(cat: &FusionCategory, lambda: ObjectLabel, mu: ObjectLabel, sign: Sign) -> Result<Connection> {
    cat.check(lambda)?;
    cat.check(mu)?;
    let (lam, m) = (lambda.index(), mu.index());
    let h = Arc::new(object_fusion_edges(cat, m));
    let v = Arc::new(object_fusion_edges(cat, lam));
    let weights = Arc::new(cat.qdims().to_vec());
    let n = cat.rank();
    let mut blocks = BTreeMap::new();
    for a1 in 0..n {
        for a4 in 0..n {
            let p = Connection::corner_paths_of(&h, &v, &v, &h, a1, a4);
            if p.rows.is_empty() {
                continue;
            }
            let u = CMat::from_fn(p.rows.len(), p.cols.len(), |i, j| {
                let a3 = v.edge(p.rows[i].0).dst as usize;
                let a2 = h.edge(p.cols[j].0).dst as usize;
                let mut acc = c(0.0);
                for ch in cat.channels(m, lam) {
                    acc += cat.r(m, lam, ch, sign) * (cat.f(a1, lam, m, a4, a3, ch) * cat.f(a1, m, lam, a4, a2, ch));
                }
                acc
            });
            blocks.insert((a1 as u32, a4 as u32), u);
        }
    }
    Connection::from_blocks(h.clone(), v.clone(), v, h, weights, blocks)
}

/// Orthonormal basis of the `n`-edge Jones-Wenzl paths `x -> y`, expressed in
/// the `(n-1)`-edge paths `x -> m` followed by a diagram edge `m -> y`.
#[derive(Clone, Debug)]
struct JwBlock {
    /// Row `j` holds the coefficients of the `j`-th basis path.
    coeffs: CMat,
    /// Column labels `(i, m)`: the `i`-th `(n-1)`-edge path `x -> m`.
    cols: Vec<(u32, u32)>,
}

#[derive(Clone, Debug)]
struct JwLevel {
    counts: Vec<Vec<u32>>,
    blocks: HashMap<(u32, u32), JwBlock>,
}

/// Corner blocks of the crossing of one diagram edge through an `n`-cable,
/// keyed by `(a1, a4)`. Rows are `(a3, i)` (left `n`-path `i: a1 -> a3`, then
/// bottom edge `a3 -> a4`), columns `(a2, j)` (top edge `a1 -> a2`, then right
/// `n`-path `j: a2 -> a4`), both sorted.
type CrossingBlocks = HashMap<(u32, u32), (Vec<(u32, u32)>, Vec<(u32, u32)>, CMat)>;

/// Jones-Wenzl bases and cabled crossings for one catalog entry, computed up
/// to a given cable length.
#[derive(Clone, Debug)]
pub struct InductionTower {
    spec: String,
    level: u32,
    graph: BipartiteGraph,
    mu: Vec<f64>,
    nbr: Vec<Vec<usize>>,
    jw: Vec<JwLevel>,
    horizontal: Arc<EdgeSet>,
    weights: Arc<Vec<f64>>,
}

/// An alpha-induced connection with its labels.
#[derive(Clone, Debug)]
pub struct InducedConnection {
    pub connection: Connection,
    pub lambda: u32,
    pub sign: Sign,
    pub spec: String,
}

impl InducedConnection {
    pub fn to_document(&self) -> ConnectionDocument {
        let mut doc = self.connection.to_document();
        doc.meta.insert("spec".into(), serde_json::Value::String(self.spec.clone()));
        doc.meta.insert("lambda".into(), serde_json::Value::from(self.lambda));
        doc.meta.insert("sign".into(), serde_json::Value::String(self.sign.symbol().to_string()));
        doc
    }
}

impl InductionTower {
    /// Builds the Jones-Wenzl bases for cables of length `0..=max_lambda`.
    pub fn new(spec: &QSystemSpec, max_lambda: u32) -> Result<Self> {
        spec.validate()?;
        let cat = spec.category()?;
        if max_lambda > spec.level {
            return Err(Error::InvalidLabel { label: max_lambda, level: spec.level });
        }
        let graph = spec.graph.clone();
        let mu = graph.pf_weights()?.to_vec();
        let n = graph.len();
        let nbr: Vec<Vec<usize>> = (0..n).map(|v| graph.neighbors(v).collect()).collect();
        let expected = module_actions(&cat, &graph)?;
        let mut jw = Vec::with_capacity(max_lambda as usize + 1);
        jw.push(JwLevel { counts: expected[0].clone(), blocks: HashMap::new() });
        if max_lambda >= 1 {
            let mut blocks = HashMap::new();
            for x in 0..n {
                for &y in &nbr[x] {
                    blocks.insert((x as u32, y as u32), JwBlock { coeffs: CMat::identity(1, 1), cols: vec![(0, x as u32)] });
                }
            }
            jw.push(JwLevel { counts: graph.adjacency().to_vec(), blocks });
        }
        for step in 1..max_lambda as usize {
            let prev = &jw[step];
            let ratio = cat.qint(step) / cat.qint(step + 1);
            let mut counts = vec![vec![0u32; n]; n];
            let mut blocks = HashMap::new();
            for x in 0..n {
                for y in 0..n {
                    let cols: Vec<(u32, u32)> = nbr[y]
                        .iter()
                        .flat_map(|&m| (0..prev.counts[x][m]).map(move |i| (i, m as u32)))
                        .collect();
                    if cols.is_empty() {
                        continue;
                    }
                    let d = cols.len();
                    // cup-cap on the last two edges, restricted to the previous basis
                    let mut cupcap = CMat::zeros(d, d);
                    for (p, &(i, cm)) in cols.iter().enumerate() {
                        let bp = &prev.blocks[&(x as u32, cm)];
                        for (r, &(i2, cm2)) in cols.iter().enumerate() {
                            let bq = &prev.blocks[&(x as u32, cm2)];
                            let mut s = c(0.0);
                            for (t, &(eta, dv)) in bp.cols.iter().enumerate() {
                                if dv as usize != y {
                                    continue;
                                }
                                for (t2, &(eta2, dv2)) in bq.cols.iter().enumerate() {
                                    if dv2 as usize == y && eta2 == eta {
                                        s += bq.coeffs[(i2 as usize, t2)].conj() * bp.coeffs[(i as usize, t)];
                                    }
                                }
                            }
                            cupcap[(r, p)] = s * ((mu[cm as usize] * mu[cm2 as usize]).sqrt() / mu[y]);
                        }
                    }
                    let proj = CMat::identity(d, d) - cupcap * c(ratio);
                    let basis = range_basis(&proj, RANGE_TOL);
                    let want = expected[step + 1][x][y] as usize;
                    if basis.len() != want {
                        return Err(Error::numeric(
                            format!(
                                "{}: Jones-Wenzl range {x}->{y} at length {} has rank {} instead of {want}",
                                spec.name,
                                step + 1,
                                basis.len()
                            ),
                            (basis.len() as f64 - want as f64).abs(),
                        ));
                    }
                    if want == 0 {
                        continue;
                    }
                    counts[x][y] = want as u32;
                    let coeffs = CMat::from_fn(want, d, |j, t| basis[j][t]);
                    blocks.insert((x as u32, y as u32), JwBlock { coeffs, cols });
                }
            }
            jw.push(JwLevel { counts, blocks });
        }
        let horizontal = Arc::new(EdgeSet::from_graph(&graph));
        let weights = Arc::new(mu.clone());
        Ok(InductionTower { spec: spec.name.clone(), level: spec.level, graph, mu, nbr, jw, horizontal, weights })
    }

    pub fn max_lambda(&self) -> u32 {
        (self.jw.len() - 1) as u32
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Edge multiplicities of the `lambda`-cable on the diagram.
    pub fn vertical_counts(&self, lambda: u32) -> &[Vec<u32>] {
        &self.jw[lambda as usize].counts
    }

    /// Elementary crossing of a horizontal edge `c -> d` and a vertical edge
    /// `d -> e` into vertical `c -> d2` and horizontal `d2 -> e`.
    fn sigma(&self, coeff: (C64, C64), cv: usize, d: usize, e: usize, d2: usize) -> C64 {
        let mut s = c(0.0);
        if d == d2 {
            s += coeff.0;
        }
        if cv == e {
            s += coeff.1 * ((self.mu[d] * self.mu[d2]).sqrt() / self.mu[cv]);
        }
        s
    }

    fn crossing_blocks(&self, lambda: u32, sign: Sign) -> Result<CrossingBlocks> {
        let beta = self.graph.beta();
        // braiding eigenvalues of two fundamentals; the symmetric channel is
        // kept even at level one, where it is not an object
        let s = match sign {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        };
        let t = std::f64::consts::PI / (2.0 * (f64::from(self.level) + 2.0));
        let r2 = C64::from_polar(1.0, s * t);
        let r0 = -C64::from_polar(1.0, -3.0 * s * t);
        let coeff = (r2, (r0 - r2) / beta);
        let n = self.graph.len();
        // length 0
        let mut cur: CrossingBlocks = HashMap::new();
        for a1 in 0..n {
            for &a4 in &self.nbr[a1] {
                let key = (a1 as u32, a4 as u32);
                cur.insert(key, (vec![(a1 as u32, 0)], vec![(a4 as u32, 0)], CMat::identity(1, 1)));
            }
        }
        for len in 1..=lambda as usize {
            let level = &self.jw[len];
            let mut next: CrossingBlocks = HashMap::new();
            for a1 in 0..n {
                for a4 in 0..n {
                    let rows: Vec<(u32, u32)> = self.nbr[a4]
                        .iter()
                        .flat_map(|&a3| (0..level.counts[a1][a3]).map(move |i| (a3 as u32, i)))
                        .collect();
                    let cols: Vec<(u32, u32)> = self.nbr[a1]
                        .iter()
                        .flat_map(|&a2| (0..level.counts[a2][a4]).map(move |j| (a2 as u32, j)))
                        .collect();
                    if rows.is_empty() && cols.is_empty() {
                        continue;
                    }
                    let row_pos: HashMap<(u32, u32), usize> = rows.iter().enumerate().map(|(i, x)| (*x, i)).collect();
                    let mut u = CMat::zeros(rows.len(), cols.len());
                    for (ci, &(a2, j)) in cols.iter().enumerate() {
                        let vb = &level.blocks[&(a2, a4 as u32)];
                        for (t, &(eta, dv)) in vb.cols.iter().enumerate() {
                            let amp = vb.coeffs[(j as usize, t)];
                            if amp.norm() < 1e-15 {
                                continue;
                            }
                            let Some((prows, pcols, pu)) = cur.get(&(a1 as u32, dv)) else { continue };
                            let Some(pc) = pcols.iter().position(|x| *x == (a2, eta)) else { continue };
                            for (pr, &(cv, i2)) in prows.iter().enumerate() {
                                let amp2 = pu[(pr, pc)];
                                if amp2.norm() < 1e-15 {
                                    continue;
                                }
                                let cv = cv as usize;
                                for &d2 in &self.nbr[cv] {
                                    if self.graph.multiplicity(d2, a4) == 0 {
                                        continue;
                                    }
                                    let s = self.sigma(coeff, cv, dv as usize, a4, d2);
                                    if s.norm() == 0.0 {
                                        continue;
                                    }
                                    let Some(pb) = level.blocks.get(&(a1 as u32, d2 as u32)) else { continue };
                                    let Some(tt) = pb.cols.iter().position(|x| *x == (i2, cv as u32)) else { continue };
                                    for i in 0..pb.coeffs.nrows() {
                                        let r = row_pos[&(d2 as u32, i as u32)];
                                        u[(r, ci)] += amp * amp2 * s * pb.coeffs[(i, tt)].conj();
                                    }
                                }
                            }
                        }
                    }
                    next.insert((a1 as u32, a4 as u32), (rows, cols, u));
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Vertical edge set of the `lambda`-cable.
    pub fn vertical_edges(&self, lambda: u32) -> EdgeSet {
        if lambda == 0 {
            EdgeSet::identity("id", self.graph.len())
        } else {
            EdgeSet::from_matrix(format!("{}[{lambda}]", self.graph.name()), &self.jw[lambda as usize].counts)
        }
    }

    /// The induced connection for `lambda` with the chosen braiding.
    pub fn induce(&self, lambda: u32, sign: Sign) -> Result<InducedConnection> {
        if lambda > self.max_lambda() {
            return Err(Error::Spec(format!("tower for {} stops at length {}", self.spec, self.max_lambda())));
        }
        let blocks = self.crossing_blocks(lambda, sign)?;
        let v = Arc::new(self.vertical_edges(lambda));
        let h = self.horizontal.clone();
        let mut out = BTreeMap::new();
        for ((a1, a4), (rows, cols, u)) in blocks {
            if rows.is_empty() || cols.is_empty() {
                continue;
            }
            // canonical order matches: left edges sorted by target then index, horizontal graph simple
            let p = Connection::corner_paths_of(&h, &v, &v, &h, a1 as usize, a4 as usize);
            debug_assert_eq!(p.rows.len(), rows.len());
            debug_assert_eq!(p.cols.len(), cols.len());
            out.insert((a1, a4), u);
        }
        let connection = Connection::from_blocks(h.clone(), v.clone(), v, h, self.weights.clone(), out)?;
        Ok(InducedConnection { connection, lambda, sign, spec: self.spec.clone() })
    }
}

/// Induced connection of `lambda` for a catalog entry.
pub fn induce(spec: &QSystemSpec, lambda: u32, sign: Sign) -> Result<InducedConnection> {
    InductionTower::new(spec, lambda)?.induce(lambda, sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{catalog, ghj_cells};
    use crate::graph::Series;

    #[test]
    fn crossing_is_biunitary() {
        for k in 1..=6 {
            let cat = FusionCategory::su2(k).unwrap();
            for lam in 0..=k {
                for mu in 0..=k {
                    for sign in [Sign::Plus, Sign::Minus] {
                        let w = crossing_connection(&cat, ObjectLabel(lam), ObjectLabel(mu), sign).unwrap();
                        let r = w.check_biunitarity().unwrap();
                        assert!(r.max() < 1e-12, "k={k} lam={lam} mu={mu} {r:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn crossing_with_unit_is_identity() {
        let cat = FusionCategory::su2(4).unwrap();
        for x in 0..=4 {
            let w = crossing_connection(&cat, ObjectLabel(0), ObjectLabel(x), Sign::Plus).unwrap();
            let id = Connection::identity(w.top().clone(), w.weights().clone()).unwrap();
            assert!(w.distance(&id).unwrap() < 1e-14);
            let w = crossing_connection(&cat, ObjectLabel(x), ObjectLabel(0), Sign::Minus).unwrap();
            let id = Connection::vertical_identity(w.left().clone(), w.weights().clone()).unwrap();
            assert!(w.distance(&id).unwrap() < 1e-14);
        }
    }

    #[test]
    fn level_two_fundamental_crossing() {
        let cat = FusionCategory::su2(2).unwrap();
        let w = crossing_connection(&cat, ObjectLabel(1), ObjectLabel(1), Sign::Plus).unwrap();
        // corner (0, 0): the only paths are 0 -> 1 -> 0 on both sides
        let u = w.block(0, 0);
        assert_eq!(u.shape(), (1, 1));
        assert!((u[(0, 0)] - cat.r(1, 1, 0, Sign::Plus)).norm() < 1e-14);
        // corner (1, 1): 2x2 built from both braiding eigenvalues
        let u = w.block(1, 1);
        assert_eq!(u.shape(), (2, 2));
        assert!(crate::linalg::unitarity_defect(&u) < 1e-14);
        let tr = u[(0, 0)] + u[(1, 1)];
        let want = cat.r(1, 1, 0, Sign::Plus) + cat.r(1, 1, 2, Sign::Plus);
        assert!((tr - want).norm() < 1e-14);
    }

    #[test]
    fn negative_crossing_inverts_positive() {
        let cat = FusionCategory::su2(5).unwrap();
        for lam in 0..=5u32 {
            for mu in 0..=5u32 {
                let p = crossing_connection(&cat, ObjectLabel(mu), ObjectLabel(lam), Sign::Plus).unwrap();
                let m = crossing_connection(&cat, ObjectLabel(lam), ObjectLabel(mu), Sign::Minus).unwrap();
                // transposing the square across its diagonal swaps the roles of the two strands
                for ([t, r, b, l], v) in m.cells() {
                    let swapped = p.cell(l, b, r, t);
                    assert!((v - swapped.conj()).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn fundamental_induced_is_rotated_cell_system() {
        for spec in catalog() {
            let w = induce(&spec, 1, Sign::Plus).unwrap().connection;
            let cells = ghj_cells(&spec).unwrap();
            // sigma = -i W
            let z = C64::new(0.0, -1.0);
            let scaled = cells.scaled(z);
            let renamed = Connection::from_blocks(
                scaled.top().clone(),
                w.left().clone(),
                w.right().clone(),
                scaled.bottom().clone(),
                scaled.weights().clone(),
                scaled.blocks().clone(),
            )
            .unwrap();
            let d = w.distance(&renamed).unwrap();
            assert!(d < 1e-12, "{} {d} {:?} {:?}", spec.name, w.blocks(), renamed.blocks());
        }
    }

    #[test]
    fn induced_connections_are_biunitary() {
        for name in ["A5", "D5", "E6", "E7"] {
            let spec = QSystemSpec::by_name(name).unwrap();
            let top = spec.level.min(6);
            let tower = InductionTower::new(&spec, top).unwrap();
            for lam in 0..=top {
                for sign in [Sign::Plus, Sign::Minus] {
                    let w = tower.induce(lam, sign).unwrap().connection;
                    let r = w.check_biunitarity().unwrap();
                    assert!(r.max() < 1e-10, "{name} {lam} {sign:?} {r:?}");
                }
            }
        }
    }

    #[test]
    fn induced_zero_is_identity() {
        let spec = QSystemSpec::by_name("D6").unwrap();
        let w = induce(&spec, 0, Sign::Plus).unwrap().connection;
        let id = Connection::identity(w.top().clone(), w.weights().clone()).unwrap();
        assert!(w.distance(&id).unwrap() < 1e-14);
    }

    #[test]
    fn vertical_graph_of_fundamental_is_the_diagram() {
        let spec = QSystemSpec::of(Series::E, 7).unwrap();
        let w = induce(&spec, 1, Sign::Plus).unwrap();
        assert_eq!(w.connection.left().matrix(), spec.graph.adjacency().to_vec());
    }
}
