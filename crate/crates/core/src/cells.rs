//! Quantum-subgroup catalog for SU(2)_k and the fundamental cell systems on
//! A-D-E diagrams.
//!
//! The fundamental connection on a diagram with Perron-Frobenius weights `mu`
//! has, for the square `a1 -> a2 -> a4`, `a1 -> a3 -> a4`, the cell
//!
//! ```text
//! W = eps * [a2 == a3] + conj(eps) * [a1 == a4] * sqrt(mu(a2) mu(a3)) / mu(a1)
//! ```
//!
//! with `eps = i exp(i pi / 2(k+2))`. It satisfies the Hecke relation
//! `(U - eps)(U + conj(eps)^3) = 0` on every corner block.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{Connection, EdgeSet};
use crate::error::{Error, Result};
use crate::fusion::{FusionCategory, Sign};
use crate::graph::{ade_graph, diagram_level, BipartiteGraph, Series};
use crate::linalg::{c, CMat, C64};

/// Construction tolerance for catalog data and cell systems.
pub const TOL_CONSTRUCT: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locality {
    Local,
    Nonlocal,
    Unknown,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalitySource {
    BraidingPhase,
    CatalogMetadata,
}

/// One entry of the catalog: a diagram, its level and the object decomposition
/// of the dual canonical endomorphism.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QSystemSpec {
    pub name: String,
    pub series: Series,
    pub index: usize,
    pub level: u32,
    /// Objects of the dual canonical endomorphism with multiplicity.
    pub theta: Vec<u32>,
    pub locality: Locality,
    pub locality_source: LocalitySource,
    pub graph: BipartiteGraph,
}

impl PartialEq for QSystemSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.level == other.level && self.theta == other.theta && self.locality == other.locality
    }
}

impl QSystemSpec {
    /// Looks up a diagram by series and index. A- and D-series are accepted
    /// at any index; the catalog itself lists the desk-scale range.
    pub fn of(series: Series, index: usize) -> Result<QSystemSpec> {
        let graph = ade_graph(series, index)?;
        let level = diagram_level(series, index)?;
        let (theta, locality, source) = match series {
            Series::A => (vec![0], Locality::Local, LocalitySource::BraidingPhase),
            Series::D => {
                if index % 2 == 1 && index < 5 {
                    return Err(Error::InvalidDiagram { series: 'D', index });
                }
                let cat = FusionCategory::su2(level)?;
                let loc = simple_current_locality(&cat);
                (vec![0, level], loc, LocalitySource::BraidingPhase)
            }
            Series::E => match index {
                6 => (vec![0, 6], Locality::Local, LocalitySource::CatalogMetadata),
                7 => (vec![0, 8, 16], Locality::Nonlocal, LocalitySource::CatalogMetadata),
                8 => (vec![0, 10, 18, 28], Locality::Local, LocalitySource::CatalogMetadata),
                _ => return Err(Error::InvalidDiagram { series: 'E', index }),
            },
        };
        let spec = QSystemSpec {
            name: graph.name().to_string(),
            series,
            index,
            level,
            theta,
            locality,
            locality_source: source,
            graph,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses names like `E7` or `D5`.
    pub fn by_name(name: &str) -> Result<QSystemSpec> {
        let (series, index) = crate::graph::parse_diagram(name)?;
        QSystemSpec::of(series, index)
    }

    pub fn category(&self) -> Result<FusionCategory> {
        FusionCategory::su2(self.level)
    }

    pub fn is_commutative(&self) -> bool {
        self.locality == Locality::Local
    }

    /// Multiplicity of each object in the dual canonical endomorphism.
    pub fn theta_multiplicities(&self) -> Vec<u32> {
        let mut m = vec![0; self.level as usize + 1];
        for &t in &self.theta {
            m[t as usize] += 1;
        }
        m
    }

    /// Checks the unit multiplicity, the diagram norm and the index identity
    /// `d(theta) = global dimension / sum_v mu(v)^2`.
    pub fn validate(&self) -> Result<()> {
        let cat = self.category()?;
        if self.theta.iter().filter(|&&t| t == 0).count() != 1 {
            return Err(Error::Spec(format!("{}: the unit must occur exactly once", self.name)));
        }
        if let Some(&t) = self.theta.iter().find(|&&t| t > self.level) {
            return Err(Error::InvalidLabel { label: t, level: self.level });
        }
        let beta = self.graph.beta();
        if (beta - cat.qint(2)).abs() > TOL_CONSTRUCT {
            return Err(Error::Spec(format!("{}: diagram norm {beta} does not match level {}", self.name, self.level)));
        }
        let mu = self.graph.pf_weights()?;
        let dim_theta: f64 = self.theta.iter().map(|&t| cat.qdims()[t as usize]).sum();
        let index = cat.global_dim() / mu.iter().map(|m| m * m).sum::<f64>();
        if (dim_theta - index).abs() > 1e-8 * index.max(1.0) {
            return Err(Error::Spec(format!(
                "{}: dimension of theta {dim_theta:.12} differs from the index {index:.12}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Locality of the order-two simple-current extension: local iff the
/// self-braiding of the current on the unit channel is 1.
pub(crate) fn simple_current_locality(cat: &FusionCategory) -> Locality {
    let k = cat.level() as usize;
    let phase = cat.r(k, k, 0, Sign::Plus);
    if (phase - c(1.0)).norm() < TOL_CONSTRUCT {
        Locality::Local
    } else {
        Locality::Nonlocal
    }
}

/// The desk-scale catalog: `A_2..A_9`, `D_4..D_10`, `E_6`, `E_7`, `E_8`.
pub fn catalog() -> Vec<QSystemSpec> {
    let mut out = Vec::new();
    for n in 2..=9 {
        out.push(QSystemSpec::of(Series::A, n).expect("A-series catalog entry"));
    }
    for n in 4..=10 {
        out.push(QSystemSpec::of(Series::D, n).expect("D-series catalog entry"));
    }
    for n in 6..=8 {
        out.push(QSystemSpec::of(Series::E, n).expect("E-series catalog entry"));
    }
    out
}

/// Hecke eigenvalue `i exp(i pi / 2(k+2))` of the fundamental cell system.
pub fn hecke_phase(level: u32) -> C64 {
    C64::new(0.0, 1.0) * C64::from_polar(1.0, PI / (2.0 * (f64::from(level) + 2.0)))
}

/// Closed-form fundamental connection of a diagram whose norm matches `level`.
pub fn fundamental_cells(graph: &BipartiteGraph, level: u32) -> Result<Connection> {
    let cat = FusionCategory::su2(level)?;
    if (graph.beta() - cat.qint(2)).abs() > TOL_CONSTRUCT {
        return Err(Error::Spec(format!("{} does not have the norm of level {level}", graph.name())));
    }
    let mu = graph.pf_weights()?.to_vec();
    let eps = hecke_phase(level);
    let g = Arc::new(EdgeSet::from_graph(graph));
    let n = graph.len();
    let mut blocks = BTreeMap::new();
    for a1 in 0..n {
        for a4 in 0..n {
            let p = Connection::corner_paths_of(&g, &g, &g, &g, a1, a4);
            if p.rows.is_empty() {
                continue;
            }
            let m = CMat::from_fn(p.rows.len(), p.cols.len(), |i, j| {
                let a3 = g.edge(p.rows[i].0).dst as usize;
                let a2 = g.edge(p.cols[j].0).dst as usize;
                let mut v = c(0.0);
                if a2 == a3 {
                    v += eps;
                }
                if a1 == a4 {
                    v += eps.conj() * (mu[a2] * mu[a3]).sqrt() / mu[a1];
                }
                v
            });
            blocks.insert((a1 as u32, a4 as u32), m);
        }
    }
    Connection::from_blocks(g.clone(), g.clone(), g.clone(), g, Arc::new(mu), blocks)
}

/// Fundamental connection of the catalog entry.
pub fn ghj_cells(spec: &QSystemSpec) -> Result<Connection> {
    spec.validate()?;
    fundamental_cells(&spec.graph, spec.level)
}

/// Fundamental connection on `A_{k+1}`.
pub fn a_series_cells(k: u32) -> Result<Connection> {
    ghj_cells(&QSystemSpec::of(Series::A, k as usize + 1)?)
}

/// Outcome of a numerical cell solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub seed: u64,
    pub attempts: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Options for [`solve_cells`].
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub seed: u64,
    pub max_attempts: usize,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { seed: 1, max_attempts: 200, max_iterations: 400, tol: 1e-11 }
    }
}

/// Residual system for cell systems of Hecke type: every corner block is
/// `eps` on the complement of a projection and `-conj(eps)^3` on it, the
/// projection being rank one on the backtracking corners `(a, a)` and zero
/// elsewhere. The unknowns are the unit vectors spanning these projections.
struct CellSystem {
    template: Connection,
    /// Corner keys in canonical order, with their dimensions.
    corners: Vec<((u32, u32), usize)>,
    /// Offset of the unknown vector of each vertex.
    offsets: Vec<usize>,
    n_unknowns: usize,
    /// Per rotated corner: dimension and `(corner, row, col, scale)` per entry.
    rotated: Vec<(usize, Vec<Option<(usize, usize, usize, f64)>>)>,
    eps: C64,
}

impl CellSystem {
    fn new(template: &Connection, level: u32) -> Result<Self> {
        let n = template.n_vertices();
        let mut corners = Vec::new();
        let mut pos: BTreeMap<([u32; 4],), (usize, usize, usize)> = BTreeMap::new();
        for a1 in 0..n {
            for a4 in 0..n {
                let p = template.corner_paths(a1, a4);
                if p.rows.is_empty() {
                    continue;
                }
                if p.rows.len() != p.cols.len() {
                    return Err(Error::Malformed(format!("corner ({a1},{a4}) is not square")));
                }
                for (i, &(l, b)) in p.rows.iter().enumerate() {
                    for (j, &(t, r)) in p.cols.iter().enumerate() {
                        pos.insert(([t, r, b, l],), (corners.len(), i, j));
                    }
                }
                corners.push(((a1 as u32, a4 as u32), p.rows.len()));
            }
        }
        let mut offsets = Vec::with_capacity(n);
        let mut total = 0;
        for a in 0..n {
            offsets.push(total);
            total += template.top().out(a).len();
        }
        let (top, left, right, bottom) = (template.top(), template.left(), template.right(), template.bottom());
        let w = template.weights();
        let mut rotated = Vec::new();
        for a2 in 0..n {
            for a3 in 0..n {
                let mut rows = Vec::new();
                for (t, et) in top.edges().iter().enumerate() {
                    if et.dst as usize == a2 {
                        for &l in left.between(et.src as usize, a3) {
                            rows.push((t as u32, l));
                        }
                    }
                }
                let mut cols = Vec::new();
                for &r in right.out(a2) {
                    for &b in bottom.between(a3, right.edge(r).dst as usize) {
                        cols.push((r, b));
                    }
                }
                if rows.is_empty() {
                    continue;
                }
                let mut entries = Vec::new();
                for &(t, l) in &rows {
                    for &(r, b) in &cols {
                        let a1 = top.edge(t).src as usize;
                        let a4 = right.edge(r).dst as usize;
                        let s = (w[a1] * w[a4] / (w[a2] * w[a3])).sqrt();
                        entries.push(pos.get(&([t, r, b, l],)).map(|&(k, i, j)| (k, i, j, s)));
                    }
                }
                rotated.push((rows.len(), entries));
            }
        }
        Ok(CellSystem { template: template.clone(), corners, offsets, n_unknowns: 2 * total, rotated, eps: hecke_phase(level) })
    }

    fn blocks(&self, x: &[f64]) -> Vec<CMat> {
        let kappa = -self.eps.conj().powi(3) - self.eps;
        self.corners
            .iter()
            .map(|&((a1, a4), d)| {
                let mut u = CMat::identity(d, d) * self.eps;
                if a1 == a4 {
                    let o = self.offsets[a1 as usize];
                    let v = crate::linalg::CVec::from_fn(d, |i, _| C64::new(x[2 * (o + i)], x[2 * (o + i) + 1]));
                    u += &v * v.adjoint() * kappa;
                }
                u
            })
            .collect()
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<f64>, m: &CMat| {
            for z in m.iter() {
                out.push(z.re);
                out.push(z.im);
            }
        };
        let blocks = self.blocks(x);
        let hecke_root = -self.eps.conj().powi(3);
        for u in &blocks {
            let id = CMat::identity(u.nrows(), u.nrows());
            push(&mut out, &(u * u.adjoint() - &id));
            push(&mut out, &((u - &id * self.eps) * (u - &id * hecke_root)));
        }
        for (d, entries) in &self.rotated {
            let m = CMat::from_fn(*d, *d, |i, j| match entries[i * d + j] {
                Some((k, r, c_, s)) => blocks[k][(r, c_)].conj() * s,
                None => c(0.0),
            });
            push(&mut out, &(&m * m.adjoint() - CMat::identity(*d, *d)));
        }
        out
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let h = 1e-5;
        let mut xp = x.to_vec();
        let base = self.residual(x).len();
        let mut j = DMatrix::zeros(base, x.len());
        for k in 0..x.len() {
            xp[k] = x[k] + h;
            let rp = self.residual(&xp);
            xp[k] = x[k] - h;
            let rm = self.residual(&xp);
            xp[k] = x[k];
            for i in 0..base {
                j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        j
    }

    fn connection(&self, x: &[f64]) -> Result<Connection> {
        let t = &self.template;
        let blocks = self.corners.iter().map(|(k, _)| *k).zip(self.blocks(x)).collect();
        Connection::from_blocks(t.top().clone(), t.left().clone(), t.right().clone(), t.bottom().clone(), t.weights().clone(), blocks)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Levenberg-Marquardt descent on the residual system from one start.
fn levenberg_marquardt(sys: &CellSystem, mut x: Vec<f64>, max_iterations: usize, tol: f64) -> (Vec<f64>, usize, f64) {
    let mut r = sys.residual(&x);
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    for it in 0..max_iterations {
        if max_norm(&r) < tol {
            return (x, it, max_norm(&r));
        }
        let j = sys.jacobian(&x);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DMatrix::from_column_slice(r.len(), 1, &r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = ch.solve(&(-&g));
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = sys.residual(&trial);
            let ct = sum_sq(&rt);
            if ct < cost {
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            return (x, it, max_norm(&r));
        }
    }
    let res = max_norm(&r);
    (x, max_iterations, res)
}

/// Solves numerically for a bi-unitary cell system of Hecke type on the
/// catalog diagram, from seeded random starts. The result is determined up to
/// gauge; compare it with [`phase_gauge_equivalent`].
pub fn solve_cells(spec: &QSystemSpec, opts: &SolveOptions) -> Result<(Connection, SolveReport)> {
    let template = ghj_cells(spec)?;
    let sys = CellSystem::new(&template, spec.level)?;
    let mut best = f64::INFINITY;
    for attempt in 0..opts.max_attempts {
        let seed = opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..sys.n_unknowns).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, iterations, residual) = levenberg_marquardt(&sys, x0, opts.max_iterations, opts.tol);
        best = best.min(residual);
        if residual < opts.tol {
            let conn = sys.connection(&x)?;
            return Ok((conn, SolveReport { seed: opts.seed, attempts: attempt + 1, iterations, residual }));
        }
    }
    Err(Error::numeric(format!("cell solve for {} did not converge", spec.name), best))
}

/// Integer row reduction by unimodular operations, applied to `rows` and the
/// real right-hand sides `rhs` together. Returns the number of nonzero rows;
/// rows beyond it are zero.
fn integer_echelon(rows: &mut [Vec<i64>], rhs: &mut [f64]) -> usize {
    let n_cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..n_cols {
        loop {
            // smallest nonzero pivot candidate in this column
            let cand = (rank..rows.len()).filter(|&i| rows[i][col] != 0).min_by_key(|&i| rows[i][col].abs());
            let Some(p) = cand else { break };
            rows.swap(rank, p);
            rhs.swap(rank, p);
            let mut done = true;
            for i in rank + 1..rows.len() {
                if rows[i][col] != 0 {
                    let q = rows[i][col] / rows[rank][col];
                    for j in 0..n_cols {
                        rows[i][j] -= q * rows[rank][j];
                    }
                    rhs[i] -= q as f64 * rhs[rank];
                    if rows[i][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                rank += 1;
                break;
            }
        }
        if rank == rows.len() {
            break;
        }
    }
    rank
}

fn wrap_angle(x: f64) -> f64 {
    let t = x.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Whether two connections on identical graphs differ by a diagonal (phase)
/// gauge: unitary phases on horizontal edges (shared by top and bottom when
/// they coincide) and on vertical edges (shared by left and right when they
/// coincide). On graphs without multiple edges this is the full gauge group.
pub fn phase_gauge_equivalent(w1: &Connection, w2: &Connection, tol: f64) -> bool {
    if w1.distance(w2).is_none() {
        return false;
    }
    let horizontal_shared = w1.top() == w1.bottom();
    let vertical_shared = w1.left() == w1.right();
    let nt = w1.top().len();
    let nb = if horizontal_shared { 0 } else { w1.bottom().len() };
    let nl = w1.left().len();
    let nr = if vertical_shared { 0 } else { w1.right().len() };
    let (ot, ob) = (0, if horizontal_shared { 0 } else { nt });
    let ol = nt + nb;
    let or = if vertical_shared { ol } else { ol + nl };
    let n_vars = nt + nb + nl + nr;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let c2: BTreeMap<[u32; 4], C64> = w2.cells().into_iter().collect();
    for (key, v1) in w1.cells() {
        let v2 = c2.get(&key).copied().unwrap_or(c(0.0));
        if (v1.norm() - v2.norm()).abs() > tol {
            return false;
        }
        if v1.norm() <= tol.sqrt() {
            continue;
        }
        let [t, r, b, l] = key.map(|x| x as usize);
        // W2 = v_l h_b W1 conj(h_t) conj(v_r)
        let mut row = vec![0i64; n_vars];
        row[ol + l] += 1;
        row[ob + b] += 1;
        row[ot + t] -= 1;
        row[or + r] -= 1;
        rows.push(row);
        rhs.push(wrap_angle(v2.arg() - v1.arg()));
    }
    let rank = integer_echelon(&mut rows, &mut rhs);
    rhs[rank..].iter().all(|x| wrap_angle(*x).abs() < tol.sqrt().max(1e-6))
}
