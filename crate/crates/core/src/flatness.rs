//! Flatness verdicts for induced connections.
//!
//! The primary test compares, level by level, the endomorphism dimensions of
//! the cabled induced connections (the flat parts) with the fusion-ring
//! counts against the algebra object; equality up to the chosen depth gives a
//! flat verdict and the first strict inequality is a certificate of
//! non-flatness. Parallel transport on a finite grid is the independent check.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cells::{simple_current_locality, Locality, LocalitySource, QSystemSpec};
use crate::connection::Connection;
use crate::error::{Error, Result};
use crate::fusion::Sign;
use crate::hom::{flat_part_table, theta_plus, FlatPartTable, InducedFamily, Mismatch, ZMatrix};
use crate::linalg::{c, CMat, RankTolerances, C64};

/// Largest number of boundary paths accepted by the transport check.
pub const TRANSPORT_MAX_PATHS: usize = 4000;
/// Transport deviations above this certify non-flatness.
pub const TRANSPORT_NONFLAT: f64 = 1e-3;
/// Transport deviations below this are consistent with flatness.
pub const TRANSPORT_FLAT: f64 = 1e-7;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Flat,
    Nonflat,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DimensionEquality,
    ParallelTransport,
}

/// Evidence attached to a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Flat-part dimension strictly below the fusion count at level `k`.
    StrictInequality { k: usize, odd: bool, lhs: String, rhs: String },
    /// All dimensions agree for `k <= depth`; flat up to that depth.
    EqualUpToDepth { depth: usize },
    /// Transport on an `n x m` grid deviates from the delta pattern.
    TransportDeviation { n: usize, m: usize, deviation: f64 },
    /// Every grid up to `n x m` matches the delta pattern.
    TransportWithin { n: usize, m: usize, deviation: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatnessVerdict {
    pub spec: String,
    pub lambda: u32,
    pub sign: Sign,
    pub verdict: Verdict,
    pub method: Method,
    pub certificate: Certificate,
    pub depth: usize,
    pub zero_tol: f64,
    pub gap_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<FlatPartTable>,
}

/// Default depth: twice the diameter of the diagram.
pub fn default_depth(spec: &QSystemSpec) -> usize {
    2 * spec.graph.diameter()
}

/// Induced connections of one catalog entry with the three intertwiner
/// dimension matrices, shared by every verdict on that entry.
pub struct FlatnessContext {
    pub family: InducedFamily,
    /// `dim Hom(alpha^+_a, alpha^-_b)`.
    pub z: ZMatrix,
    /// `dim Hom(alpha^+_a, alpha^+_b)`.
    pub z_plus: ZMatrix,
    /// `dim Hom(alpha^-_a, alpha^-_b)`.
    pub z_minus: ZMatrix,
}

impl FlatnessContext {
    pub fn new(spec: &QSystemSpec) -> Result<Self> {
        Self::with_tolerances(spec, RankTolerances::default())
    }

    pub fn with_tolerances(spec: &QSystemSpec, tol: RankTolerances) -> Result<Self> {
        let mut family = InducedFamily::new(spec)?;
        family.tol = tol;
        let z = family.hom_matrix(Sign::Plus, Sign::Minus)?;
        let z_plus = family.hom_matrix(Sign::Plus, Sign::Plus)?;
        let z_minus = family.hom_matrix(Sign::Minus, Sign::Minus)?;
        Ok(FlatnessContext { family, z, z_plus, z_minus })
    }

    pub fn spec(&self) -> &QSystemSpec {
        &self.family.spec
    }

    pub fn theta_plus(&self) -> Vec<u32> {
        theta_plus(&self.z)
    }

    fn same_sign(&self, sign: Sign) -> &ZMatrix {
        match sign {
            Sign::Plus => &self.z_plus,
            Sign::Minus => &self.z_minus,
        }
    }

    pub fn table(&self, lambda: u32, sign: Sign, k_max: usize) -> Result<FlatPartTable> {
        flat_part_table(self.spec(), self.same_sign(sign), lambda, k_max)
    }

    /// Dimension-equality verdict up to `depth` (default twice the diameter).
    pub fn check(&self, lambda: u32, sign: Sign, depth: Option<usize>) -> Result<FlatnessVerdict> {
        let spec = self.spec();
        let depth = depth.unwrap_or_else(|| default_depth(spec));
        let table = self.table(lambda, sign, depth)?;
        let (verdict, certificate) = match table.first_mismatch() {
            Some(Mismatch { k, odd, lhs, rhs }) => (Verdict::Nonflat, Certificate::StrictInequality { k, odd, lhs, rhs }),
            None => (Verdict::Flat, Certificate::EqualUpToDepth { depth }),
        };
        Ok(FlatnessVerdict {
            spec: spec.name.clone(),
            lambda,
            sign,
            verdict,
            method: Method::DimensionEquality,
            certificate,
            depth,
            zero_tol: self.family.tol.zero,
            gap_tol: self.family.tol.gap,
            table: Some(table),
        })
    }

    /// Recomputes the witness of a verdict and confirms it.
    pub fn reverify(&self, v: &FlatnessVerdict) -> Result<bool> {
        match &v.certificate {
            Certificate::StrictInequality { k, odd, lhs, rhs } => {
                let t = self.table(v.lambda, v.sign, *k)?;
                let (a, b) = if *odd { (&t.odd[*k], &t.odd_fusion[*k]) } else { (&t.even[*k], &t.even_fusion[*k]) };
                Ok(a.to_string() == *lhs && b.to_string() == *rhs && a < b)
            }
            Certificate::EqualUpToDepth { depth } => Ok(self.table(v.lambda, v.sign, *depth)?.first_mismatch().is_none()),
            Certificate::TransportDeviation { n, m, deviation } => {
                let d = parallel_transport_check(self.family.get(v.lambda as usize, v.sign), *n, *m)?;
                Ok(d > TRANSPORT_NONFLAT && (d - deviation).abs() < 1e-9)
            }
            Certificate::TransportWithin { n, m, .. } => {
                for a in 1..=*n {
                    for b in 1..=*m {
                        if parallel_transport_check(self.family.get(v.lambda as usize, v.sign), a, b)? > TRANSPORT_FLAT {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
        }
    }

    /// Transport verdict over all grids `1..=n_max` by `1..=m_max`; the first
    /// deviating grid is the certificate.
    pub fn check_by_transport(&self, lambda: u32, sign: Sign, n_max: usize, m_max: usize) -> Result<FlatnessVerdict> {
        let w = self.family.get(lambda as usize, sign);
        let mut worst: f64 = 0.0;
        let mut found = None;
        // grids in order of their larger side, so small witnesses come first
        let mut grids: Vec<(usize, usize)> = (1..=n_max).flat_map(|n| (1..=m_max).map(move |m| (n, m))).collect();
        grids.sort_by_key(|&(n, m)| (n.max(m), n + m, m));
        for (n, m) in grids {
            let d = parallel_transport_check(w, n, m)?;
            worst = worst.max(d);
            if d > TRANSPORT_NONFLAT {
                found = Some((n, m, d));
                break;
            }
            if d > TRANSPORT_FLAT {
                return Err(Error::numeric(format!("transport deviation on the {n}x{m} grid is inconclusive"), d));
            }
        }
        let (verdict, certificate) = match found {
            Some((n, m, deviation)) => (Verdict::Nonflat, Certificate::TransportDeviation { n, m, deviation }),
            None => (Verdict::Flat, Certificate::TransportWithin { n: n_max, m: m_max, deviation: worst }),
        };
        Ok(FlatnessVerdict {
            spec: self.spec().name.clone(),
            lambda,
            sign,
            verdict,
            method: Method::ParallelTransport,
            certificate,
            depth: n_max.max(m_max),
            zero_tol: TRANSPORT_FLAT,
            gap_tol: TRANSPORT_NONFLAT,
            table: None,
        })
    }
}

/// Dimension-equality verdict for one induced connection.
pub fn check_flatness(spec: &QSystemSpec, lambda: u32, sign: Sign, depth: Option<usize>) -> Result<FlatnessVerdict> {
    FlatnessContext::new(spec)?.check(lambda, sign, depth)
}

/// Verdict for a whole catalog entry: flat when every `lambda` in
/// `1..=min(k, lambda_max)` is flat with both braidings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecVerdict {
    pub spec: String,
    pub level: u32,
    pub verdict: Verdict,
    pub locality: Locality,
    pub locality_source: LocalitySource,
    pub theta_plus: Vec<u32>,
    pub per_lambda: Vec<FlatnessVerdict>,
}

impl SpecVerdict {
    /// The verdict agrees with locality.
    pub fn consistent(&self) -> bool {
        matches!((self.verdict, self.locality), (Verdict::Flat, Locality::Local) | (Verdict::Nonflat, Locality::Nonlocal))
    }

    /// First non-flat witness, if any.
    pub fn witness(&self) -> Option<&FlatnessVerdict> {
        self.per_lambda.iter().find(|v| v.verdict == Verdict::Nonflat)
    }
}

pub fn spec_verdict(ctx: &FlatnessContext, lambda_max: u32, depth: Option<usize>) -> Result<SpecVerdict> {
    let spec = ctx.spec();
    let mut per_lambda = Vec::new();
    for lambda in 1..=spec.level.min(lambda_max) {
        for sign in [Sign::Plus, Sign::Minus] {
            per_lambda.push(ctx.check(lambda, sign, depth)?);
        }
    }
    let verdict = if per_lambda.iter().all(|v| v.verdict == Verdict::Flat) { Verdict::Flat } else { Verdict::Nonflat };
    let (locality, locality_source) = locality_from_braiding(spec);
    Ok(SpecVerdict {
        spec: spec.name.clone(),
        level: spec.level,
        verdict,
        locality,
        locality_source,
        theta_plus: ctx.theta_plus(),
        per_lambda,
    })
}

/// Locality from the braiding phase when the algebra object is the unit or
/// an order-two simple current; catalog metadata otherwise.
pub fn locality_from_braiding(spec: &QSystemSpec) -> (Locality, LocalitySource) {
    let k = spec.level;
    let mut theta = spec.theta.clone();
    theta.sort_unstable();
    if theta == [0] {
        return (Locality::Local, LocalitySource::BraidingPhase);
    }
    if theta == [0, k] {
        if let Ok(cat) = spec.category() {
            return (simple_current_locality(&cat), LocalitySource::BraidingPhase);
        }
    }
    (spec.locality, LocalitySource::CatalogMetadata)
}

/// Whether the flat parts of `a` match the endomorphism dimensions of the
/// commutative entry `b` for `k <= k_max`, both even and odd lengths.
pub fn flat_part_matches(a: &FlatnessContext, b: &FlatnessContext, lambda: u32, k_max: usize) -> Result<bool> {
    let mut tp = a.theta_plus();
    let mut tb = b.spec().theta.clone();
    tp.sort_unstable();
    tb.sort_unstable();
    if tp != tb {
        return Err(Error::Spec(format!(
            "commutative part of {} is {:?}, but {} has {:?}",
            a.spec().name,
            tp,
            b.spec().name,
            tb
        )));
    }
    if a.spec().level != b.spec().level {
        return Err(Error::Spec("entries live at different levels".into()));
    }
    let ta = a.table(lambda, Sign::Plus, k_max)?;
    let tb = b.table(lambda, Sign::Plus, k_max)?;
    Ok(ta.even == tb.even && ta.odd == tb.odd)
}

type PathKey = Vec<u32>;

fn paths_from(set: &crate::connection::EdgeSet, start: usize, len: usize) -> Vec<(PathKey, usize)> {
    let mut cur = vec![(Vec::new(), start)];
    for _ in 0..len {
        let mut next = Vec::new();
        for (p, v) in &cur {
            for &e in set.out(*v) {
                let mut q = p.clone();
                q.push(e);
                next.push((q, set.edge(e).dst as usize));
            }
        }
        cur = next;
    }
    cur
}

/// Parallel transport of an `n x m` grid anchored at the star: every
/// boundary path of `n` horizontal then `m` vertical edges is moved to `m`
/// vertical then `n` horizontal edges through the cells. The connection is
/// flat on this grid when the transported vertical matrix units act only on
/// the vertical factor, identically for horizontal paths with the same end.
/// Returns the largest deviation from that pattern.
pub fn parallel_transport_check(w: &Connection, n: usize, m: usize) -> Result<f64> {
    if w.top() != w.bottom() || w.top().edges() != w.bottom().edges() {
        return Err(Error::GraphMismatch("transport needs equal top and bottom graphs".into()));
    }
    if w.left().edges() != w.right().edges() {
        return Err(Error::GraphMismatch("transport needs equal left and right graphs".into()));
    }
    let star = w.weights().iter().position(|x| (*x - 1.0).abs() < 1e-12).unwrap_or(0);
    let h = w.top();
    let v = w.left();
    // (top, right) -> [(left, bottom, amplitude)]
    let mut moves: HashMap<(u32, u32), Vec<(u32, u32, C64)>> = HashMap::new();
    for (&(a1, a4), u) in w.blocks() {
        let p = w.corner_paths(a1 as usize, a4 as usize);
        for (j, &(t, r)) in p.cols.iter().enumerate() {
            for (i, &(l, b)) in p.rows.iter().enumerate() {
                let z = u[(i, j)];
                if z.norm() > 1e-15 {
                    moves.entry((t, r)).or_default().push((l, b, z));
                }
            }
        }
    }
    let mut inputs: Vec<(PathKey, PathKey)> = Vec::new();
    for (rho, end) in paths_from(h, star, n) {
        for (sigma, _) in paths_from(v, end, m) {
            inputs.push((rho.clone(), sigma));
            if inputs.len() > TRANSPORT_MAX_PATHS {
                return Err(Error::Resource(format!("{n}x{m} grid has more than {TRANSPORT_MAX_PATHS} boundary paths")));
            }
        }
    }
    // columns of the transport matrix, keyed by the output (sigma', rho')
    let mut out_index: BTreeMap<PathKey, usize> = BTreeMap::new();
    let mut columns: Vec<Vec<(PathKey, C64)>> = Vec::with_capacity(inputs.len());
    for (rho, sigma) in &inputs {
        let mut state: HashMap<PathKey, C64> = HashMap::new();
        let mut start: PathKey = rho.clone();
        start.extend_from_slice(sigma);
        state.insert(start, c(1.0));
        for vi in 0..m {
            let mut pos = n + vi;
            for _ in 0..n {
                let i = pos - 1;
                let mut next: HashMap<PathKey, C64> = HashMap::with_capacity(state.len());
                for (path, amp) in &state {
                    let Some(list) = moves.get(&(path[i], path[i + 1])) else { continue };
                    for &(l, b, z) in list {
                        let mut q = path.clone();
                        q[i] = l;
                        q[i + 1] = b;
                        *next.entry(q).or_insert(c(0.0)) += amp * z;
                    }
                }
                state = next;
                pos -= 1;
            }
        }
        let col: Vec<(PathKey, C64)> = state.into_iter().filter(|(_, z)| z.norm() > 1e-15).collect();
        for (p, _) in &col {
            let len = out_index.len();
            out_index.entry(p.clone()).or_insert(len);
        }
        columns.push(col);
    }
    let d = inputs.len();
    // group outputs by vertical prefix; rows by horizontal suffix
    let mut by_prefix: BTreeMap<PathKey, BTreeMap<PathKey, usize>> = BTreeMap::new();
    for (p, &row) in &out_index {
        by_prefix.entry(p[..m].to_vec()).or_default().insert(p[m..].to_vec(), row);
    }
    let mut u = CMat::zeros(out_index.len(), d);
    for (j, col) in columns.iter().enumerate() {
        for (p, z) in col {
            u[(out_index[p], j)] = *z;
        }
    }
    let end_of = |p: &PathKey| p.last().map(|&e| v.edge(e).dst as usize).unwrap_or(star);
    let prefixes: Vec<(&PathKey, &BTreeMap<PathKey, usize>)> = by_prefix.iter().collect();
    // inputs grouped by rho; groups with the same end vertex must carry equal blocks
    let mut groups: BTreeMap<PathKey, Vec<usize>> = BTreeMap::new();
    for (j, (rho, _)) in inputs.iter().enumerate() {
        groups.entry(rho.clone()).or_default().push(j);
    }
    let mut by_end: BTreeMap<usize, Vec<&Vec<usize>>> = BTreeMap::new();
    let h_end = |p: &PathKey| p.last().map(|&e| h.edge(e).dst as usize).unwrap_or(star);
    for (rho, ix) in &groups {
        by_end.entry(h_end(rho)).or_default().push(ix);
    }
    let group_of: Vec<usize> = {
        let mut g = vec![0; d];
        for (gi, ix) in groups.values().enumerate() {
            for &j in ix {
                g[j] = gi;
            }
        }
        g
    };
    let mut dev: f64 = 0.0;
    for (s1, rows1) in &prefixes {
        for (s2, rows2) in &prefixes {
            if end_of(s1) != end_of(s2) {
                continue;
            }
            let shared: Vec<(usize, usize)> =
                rows1.iter().filter_map(|(sfx, &r1)| rows2.get(sfx).map(|&r2| (r1, r2))).collect();
            let a1 = CMat::from_fn(shared.len(), d, |i, j| u[(shared[i].0, j)]);
            let a2 = CMat::from_fn(shared.len(), d, |i, j| u[(shared[i].1, j)]);
            let x = a1.adjoint() * a2;
            for a in 0..d {
                for b in 0..d {
                    if group_of[a] != group_of[b] {
                        dev = dev.max(x[(a, b)].norm());
                    }
                }
            }
            for list in by_end.values() {
                let first = list[0];
                for ix in &list[1..] {
                    for (p, &a) in ix.iter().enumerate() {
                        for (q, &b) in ix.iter().enumerate() {
                            dev = dev.max((x[(a, b)] - x[(first[p], first[q])]).norm());
                        }
                    }
                }
            }
        }
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::ghj_cells;
    use crate::connection::EdgeSet;
    use std::sync::Arc;

    #[test]
    fn identity_transport_is_exact() {
        let spec = QSystemSpec::by_name("E6").unwrap();
        let g = Arc::new(EdgeSet::from_graph(&spec.graph));
        let w = Connection::identity(g, Arc::new(spec.graph.pf_weights().unwrap().to_vec())).unwrap();
        for n in 1..=3 {
            for m in 1..=3 {
                assert_eq!(parallel_transport_check(&w, n, m).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn a_series_transport_is_flat() {
        for k in 2..=4u32 {
            let spec = QSystemSpec::by_name(&format!("A{}", k + 1)).unwrap();
            let w = ghj_cells(&spec).unwrap();
            for n in 1..=4 {
                for m in 1..=4 {
                    let d = parallel_transport_check(&w, n, m).unwrap();
                    assert!(d < 1e-7, "k={k} {n}x{m}: {d}");
                }
            }
        }
    }

    #[test]
    fn e7_transport_deviates() {
        let spec = QSystemSpec::by_name("E7").unwrap();
        let ctx = FlatnessContext::new(&spec).unwrap();
        let v = ctx.check_by_transport(1, Sign::Plus, 4, 4).unwrap();
        assert_eq!(v.verdict, Verdict::Nonflat);
        assert!(ctx.reverify(&v).unwrap());
        let d = ctx.check(1, Sign::Plus, None).unwrap();
        assert_eq!(d.verdict, Verdict::Nonflat);
    }

    #[test]
    fn d_series_verdicts_follow_locality() {
        for name in ["D4", "D5", "D6", "D7"] {
            let spec = QSystemSpec::by_name(name).unwrap();
            let ctx = FlatnessContext::new(&spec).unwrap();
            let v = ctx.check(1, Sign::Plus, None).unwrap();
            let (loc, src) = locality_from_braiding(&spec);
            assert_eq!(src, LocalitySource::BraidingPhase);
            assert_eq!(v.verdict == Verdict::Flat, loc == Locality::Local, "{name}");
            assert!(ctx.reverify(&v).unwrap());
        }
    }

    #[test]
    fn locality_sources() {
        assert_eq!(locality_from_braiding(&QSystemSpec::by_name("A4").unwrap()), (Locality::Local, LocalitySource::BraidingPhase));
        assert_eq!(locality_from_braiding(&QSystemSpec::by_name("D4").unwrap()).0, Locality::Local);
        assert_eq!(locality_from_braiding(&QSystemSpec::by_name("D5").unwrap()).0, Locality::Nonlocal);
        assert_eq!(locality_from_braiding(&QSystemSpec::by_name("E7").unwrap()), (Locality::Nonlocal, LocalitySource::CatalogMetadata));
    }

    #[test]
    fn flat_part_of_e7_is_d10() {
        let a = FlatnessContext::new(&QSystemSpec::by_name("E7").unwrap()).unwrap();
        let b = FlatnessContext::new(&QSystemSpec::by_name("D10").unwrap()).unwrap();
        assert!(flat_part_matches(&a, &b, 1, 3).unwrap());
        let wrong = FlatnessContext::new(&QSystemSpec::by_name("E7").unwrap()).unwrap();
        assert!(matches!(flat_part_matches(&b, &wrong, 1, 3), Err(Error::Spec(_))));
    }
}
