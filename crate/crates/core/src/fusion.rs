//! Braided fusion data of SU(2)_k: fusion rules, quantum dimensions,
//! F- and R-symbols in the q-Racah gauge, and modular S/T data.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LEVEL: u32 = 64;
pub const TOL_CONSTRUCT: f64 = 1e-9;

/// Largest level for which the F-symbols are tabulated during verification.
const F_TABLE_MAX_LEVEL: u32 = 40;
/// Levels above this use randomized operator probes for the pentagon.
pub const PENTAGON_EXHAUSTIVE_MAX_LEVEL: u32 = 12;
const PENTAGON_PROBES: usize = 1;
const PENTAGON_SEED: u64 = 0x5eed_f00d;

/// An irreducible object of SU(2)_k, labelled by twice its spin.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectLabel(pub u32);

impl ObjectLabel {
    pub fn spin(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ObjectLabel {
    fn from(v: u32) -> Self {
        ObjectLabel(v)
    }
}

/// Orientation of a braiding (and of the induced endomorphism).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s {
            "+" | "plus" | "p" => Some(Sign::Plus),
            "-" | "minus" | "m" => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Fusion rules and braided data of SU(2) at level `k`.
#[derive(Clone, Debug)]
pub struct FusionCategory {
    level: u32,
    /// Quantum integers `[n]` for `n = 0..=2k+4`.
    qint: Vec<f64>,
    /// Quantum factorials `[n]!`, same range.
    qfact: Vec<f64>,
    qdim: Vec<f64>,
}

impl FusionCategory {
    /// Builds SU(2)_k for `1 <= k <= 64`.
    pub fn su2(level: u32) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange(level));
        }
        let k = level as usize;
        let theta = PI / (k as f64 + 2.0);
        let len = 2 * k + 5;
        let mut qint = vec![0.0; len];
        for (n, q) in qint.iter_mut().enumerate() {
            *q = if n % (k + 2) == 0 { 0.0 } else { (n as f64 * theta).sin() / theta.sin() };
        }
        let mut qfact = vec![1.0; len];
        for n in 1..len {
            qfact[n] = qfact[n - 1] * qint[n];
        }
        let qdim = (0..=k).map(|a| qint[a + 1]).collect();
        Ok(FusionCategory { level, qint, qfact, qdim })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn rank(&self) -> usize {
        self.level as usize + 1
    }

    pub fn objects(&self) -> Vec<ObjectLabel> {
        (0..=self.level).map(ObjectLabel).collect()
    }

    /// Quantum integer `[n]` at this level.
    pub fn qint(&self, n: usize) -> f64 {
        self.qint[n]
    }

    pub fn qdim(&self, a: ObjectLabel) -> Result<f64> {
        self.check(a)?;
        Ok(self.qdim[a.index()])
    }

    pub fn qdims(&self) -> &[f64] {
        &self.qdim
    }

    /// Global dimension `sum_a qdim(a)^2`.
    pub fn global_dim(&self) -> f64 {
        self.qdim.iter().map(|d| d * d).sum()
    }

    pub fn check(&self, a: ObjectLabel) -> Result<()> {
        if a.0 > self.level {
            Err(Error::InvalidLabel { label: a.0, level: self.level })
        } else {
            Ok(())
        }
    }

    /// Channels `c` with `N_{ab}^c = 1`, in increasing order.
    pub fn channels(&self, a: usize, b: usize) -> std::iter::StepBy<std::ops::RangeInclusive<usize>> {
        let k = self.level as usize;
        let lo = a.abs_diff(b);
        let hi = (a + b).min((2 * k).saturating_sub(a + b));
        if a > k || b > k || hi < lo {
            #[allow(clippy::reversed_empty_ranges)]
            return (1..=0).step_by(2);
        }
        (lo..=hi).step_by(2)
    }

    /// Channels common to `x (x) y` and `u (x) v`.
    pub(crate) fn isect(&self, x: usize, y: usize, u: usize, v: usize) -> std::iter::StepBy<std::ops::RangeInclusive<usize>> {
        let k2 = 2 * self.level as usize;
        let lo = x.abs_diff(y).max(u.abs_diff(v));
        let hi = (x + y).min(u + v).min(k2.saturating_sub(x + y)).min(k2.saturating_sub(u + v));
        if (x + y + u + v) % 2 == 1 || x + y > k2 || u + v > k2 || hi < lo {
            #[allow(clippy::reversed_empty_ranges)]
            return (1..=0).step_by(2);
        }
        (lo..=hi).step_by(2)
    }

    /// Whether `c` occurs in `a (x) b`.
    pub fn admissible(&self, a: usize, b: usize, c: usize) -> bool {
        let k = self.level as usize;
        a <= k
            && b <= k
            && c <= k
            && (a + b + c) % 2 == 0
            && c >= a.abs_diff(b)
            && c <= a + b
            && a + b + c <= 2 * k
    }

    pub fn fuse(&self, a: ObjectLabel, b: ObjectLabel) -> Result<Vec<ObjectLabel>> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.channels(a.index(), b.index()).map(|c| ObjectLabel(c as u32)).collect())
    }

    /// Fusion multiplicity `N_{ab}^c`.
    pub fn n(&self, a: usize, b: usize, c: usize) -> u32 {
        u32::from(self.admissible(a, b, c))
    }

    /// Fusion matrix of left multiplication by `a`: entry `(b, c) = N_{ab}^c`.
    pub fn fusion_matrix(&self, a: usize) -> Vec<Vec<u32>> {
        let r = self.rank();
        (0..r).map(|b| (0..r).map(|c| self.n(a, b, c)).collect()).collect()
    }

    fn delta(&self, a: usize, b: usize, c: usize) -> f64 {
        let s = (a + b + c) / 2;
        (self.qfact[s - c] * self.qfact[s - b] * self.qfact[s - a] / self.qfact[s + 1]).sqrt()
    }

    /// Unnormalized q-Racah symbol with triads (a,b,e), (e,c,d), (b,c,f), (a,f,d).
    fn racah(&self, a: usize, b: usize, e: usize, c: usize, d: usize, f: usize) -> f64 {
        let t = [(a + b + e) / 2, (e + c + d) / 2, (b + c + f) / 2, (a + f + d) / 2];
        let p = [(a + b + c + d) / 2, (a + e + c + f) / 2, (b + e + d + f) / 2];
        let zmin = *t.iter().max().unwrap();
        let zmax = *p.iter().min().unwrap();
        let qf = &self.qfact;
        let mut sum = 0.0;
        for z in zmin..=zmax {
            let den = qf[z - t[0]]
                * qf[z - t[1]]
                * qf[z - t[2]]
                * qf[z - t[3]]
                * qf[p[0] - z]
                * qf[p[1] - z]
                * qf[p[2] - z];
            let term = qf[z + 1] / den;
            sum += if z % 2 == 0 { term } else { -term };
        }
        sum * self.delta(a, b, e) * self.delta(e, c, d) * self.delta(b, c, f) * self.delta(a, f, d)
    }

    /// Entry `(e, f)` of the associator block `F^{abc}_d`, mapping the basis
    /// `((ab)_e c)_d` to `(a (bc)_f)_d`. Returns 0 for inadmissible labels.
    pub fn f(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> f64 {
        if !(self.admissible(a, b, e)
            && self.admissible(e, c, d)
            && self.admissible(b, c, f)
            && self.admissible(a, f, d))
        {
            return 0.0;
        }
        let sign = if ((a + b + c + d) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * (self.qint[e + 1] * self.qint[f + 1]).sqrt() * self.racah(a, b, e, c, d, f)
    }

    /// Braiding eigenvalue on the channel `c` of `a (x) b`; zero if inadmissible.
    pub fn r(&self, a: usize, b: usize, c: usize, sign: Sign) -> Complex64 {
        if !self.admissible(a, b, c) {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.level as f64;
        let cas = |x: usize| (x * (x + 2)) as f64;
        let phase = PI * (cas(c) - cas(a) - cas(b)) / (4.0 * (k + 2.0));
        let s = if ((a + b - c) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let v = Complex64::from_polar(s, phase);
        match sign {
            Sign::Plus => v,
            Sign::Minus => v.conj(),
        }
    }

    pub fn f_symbol(
        &self,
        a: ObjectLabel,
        b: ObjectLabel,
        c: ObjectLabel,
        d: ObjectLabel,
        e: ObjectLabel,
        f: ObjectLabel,
    ) -> Result<Complex64> {
        for x in [a, b, c, d, e, f] {
            self.check(x)?;
        }
        let (a, b, c, d, e, f) = (a.index(), b.index(), c.index(), d.index(), e.index(), f.index());
        let ok = self.admissible(a, b, e)
            && self.admissible(e, c, d)
            && self.admissible(b, c, f)
            && self.admissible(a, f, d);
        if !ok {
            return Err(Error::Inadmissible(format!("F^{{{a}{b}{c}}}_{d}[{e},{f}]")));
        }
        Ok(Complex64::new(self.f(a, b, c, d, e, f), 0.0))
    }

    pub fn r_symbol(&self, a: ObjectLabel, b: ObjectLabel, c: ObjectLabel, sign: Sign) -> Result<Complex64> {
        for x in [a, b, c] {
            self.check(x)?;
        }
        if !self.admissible(a.index(), b.index(), c.index()) {
            return Err(Error::Inadmissible(format!("R^{{{a}{b}}}_{c}")));
        }
        Ok(self.r(a.index(), b.index(), c.index(), sign))
    }

    /// Conformal weight `a(a+2) / 4(k+2)`.
    pub fn conformal_weight(&self, a: usize) -> f64 {
        (a * (a + 2)) as f64 / (4.0 * (self.level as f64 + 2.0))
    }

    pub fn central_charge(&self) -> f64 {
        3.0 * self.level as f64 / (self.level as f64 + 2.0)
    }

    /// Modular S-matrix (real symmetric for SU(2)_k).
    pub fn s_matrix(&self) -> Vec<Vec<f64>> {
        let r = self.rank();
        let kk = self.level as f64 + 2.0;
        let norm = (2.0 / kk).sqrt();
        (0..r)
            .map(|a| (0..r).map(|b| norm * (((a + 1) * (b + 1)) as f64 * PI / kk).sin()).collect())
            .collect()
    }

    /// Diagonal of the modular T-matrix.
    pub fn t_diagonal(&self) -> Vec<Complex64> {
        let c = self.central_charge();
        (0..self.rank())
            .map(|a| Complex64::from_polar(1.0, 2.0 * PI * (self.conformal_weight(a) - c / 24.0)))
            .collect()
    }

    /// Twist `exp(2 pi i h_a)`.
    pub fn twist(&self, a: usize) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.conformal_weight(a))
    }

    /// Versioned JSON document of the full data.
    pub fn to_document(&self) -> FusionDocument {
        let k = self.level as usize;
        let mut fusion = Vec::new();
        let mut r_symbols = Vec::new();
        for a in 0..=k {
            for b in 0..=k {
                for c in self.channels(a, b) {
                    fusion.push([a as u32, b as u32, c as u32]);
                    for sign in [Sign::Plus, Sign::Minus] {
                        let v = self.r(a, b, c, sign);
                        r_symbols.push(RRecord { a: a as u32, b: b as u32, c: c as u32, sign, re: v.re, im: v.im });
                    }
                }
            }
        }
        let mut f_symbols = Vec::new();
        for a in 0..=k {
            for b in 0..=k {
                for c in 0..=k {
                    for d in 0..=k {
                        for e in self.channels(a, b) {
                            if !self.admissible(e, c, d) {
                                continue;
                            }
                            for f in self.channels(b, c) {
                                if self.admissible(a, f, d) {
                                    let v = self.f(a, b, c, d, e, f);
                                    let idx = [a, b, c, d, e, f].map(|x| x as u32);
                                    f_symbols.push(FRecord { idx, re: v, im: 0.0 });
                                }
                            }
                        }
                    }
                }
            }
        }
        let s = self.s_matrix().into_iter().map(|row| row.into_iter().map(|x| [x, 0.0]).collect()).collect();
        let t = self.t_diagonal().into_iter().map(|z| [z.re, z.im]).collect();
        FusionDocument {
            schema: FUSION_SCHEMA.to_string(),
            level: self.level,
            objects: (0..=self.level).collect(),
            qdim: self.qdim.clone(),
            fusion,
            f_symbols,
            r_symbols,
            s,
            t,
        }
    }
}

pub const FUSION_SCHEMA: &str = "biunitary.fusion/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FRecord {
    /// `[a, b, c, d, e, f]` of `F^{abc}_d[e, f]`.
    pub idx: [u32; 6],
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RRecord {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub sign: Sign,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FusionDocument {
    pub schema: String,
    pub level: u32,
    pub objects: Vec<u32>,
    pub qdim: Vec<f64>,
    /// Sparse fusion triples `(a, b, c)` with `N_{ab}^c = 1`.
    pub fusion: Vec<[u32; 3]>,
    pub f_symbols: Vec<FRecord>,
    pub r_symbols: Vec<RRecord>,
    pub s: Vec<Vec<[f64; 2]>>,
    pub t: Vec<[f64; 2]>,
}

/// How the pentagon residual was obtained.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PentagonMethod {
    /// Every admissible matrix entry of both sides.
    Exhaustive,
    /// Both sides applied as operators to seeded random vectors, per sector.
    RandomProbe { probes: usize, seed: u64 },
}

/// Maximum residuals of the category axioms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxiomReport {
    pub level: u32,
    pub pentagon: f64,
    pub hexagon: f64,
    pub f_unitarity: f64,
    pub verlinde: f64,
    pub pentagon_method: PentagonMethod,
}

impl AxiomReport {
    pub fn max(&self) -> f64 {
        self.pentagon.max(self.hexagon).max(self.f_unitarity).max(self.verlinde)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() < tol
    }
}

/// Residuals of the modular data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModularReport {
    /// `max |S S^dagger - 1|`.
    pub s_unitarity: f64,
    /// `max |(ST)^3 - p S^2|` with the best global phase `p`.
    pub st_cubed: f64,
    /// `max |N_a N_b - N_b N_a|`.
    pub fusion_commutator: f64,
    /// Off-diagonal magnitude of `S^dagger N_a S`.
    pub s_diagonalizes: f64,
}

/// Tabulated F-symbols, one dense block per `(a, b, c, d)`.
struct FTable {
    n: usize,
    shapes: Vec<Shape>,
    data: Vec<f64>,
}

#[derive(Copy, Clone)]
struct BlockShape {
    e0: usize,
    ne: usize,
    f0: usize,
    nf: usize,
}

/// Packed block shape; `ne == 0` marks an empty block.
#[derive(Copy, Clone, Default)]
struct Shape {
    off: u32,
    e0: u8,
    ne: u8,
    f0: u8,
    nf: u8,
}

fn block_shape(k: usize, a: usize, b: usize, c: usize, d: usize) -> Option<BlockShape> {
    if (a + b + c + d) % 2 != 0 {
        return None;
    }
    let e0 = a.abs_diff(b).max(c.abs_diff(d));
    let e1 = (a + b).min(c + d).min((2 * k).saturating_sub(a + b)).min((2 * k).saturating_sub(c + d));
    let f0 = b.abs_diff(c).max(a.abs_diff(d));
    let f1 = (b + c).min(a + d).min((2 * k).saturating_sub(b + c)).min((2 * k).saturating_sub(a + d));
    if e1 < e0 || f1 < f0 || a + b > 2 * k || c + d > 2 * k || b + c > 2 * k || a + d > 2 * k {
        return None;
    }
    Some(BlockShape { e0, ne: (e1 - e0) / 2 + 1, f0, nf: (f1 - f0) / 2 + 1 })
}

impl FTable {
    fn build(cat: &FusionCategory) -> Self {
        let k = cat.level as usize;
        let n = k + 1;
        let mut shapes = vec![Shape::default(); n * n * n * n];
        let mut data = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let Some(sh) = block_shape(k, a, b, c, d) else { continue };
                        shapes[((a * n + b) * n + c) * n + d] = Shape {
                            off: data.len() as u32,
                            e0: sh.e0 as u8,
                            ne: sh.ne as u8,
                            f0: sh.f0 as u8,
                            nf: sh.nf as u8,
                        };
                        for ie in 0..sh.ne {
                            for jf in 0..sh.nf {
                                data.push(cat.f(a, b, c, d, sh.e0 + 2 * ie, sh.f0 + 2 * jf));
                            }
                        }
                    }
                }
            }
        }
        FTable { n, shapes, data }
    }

    #[inline]
    fn get(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> f64 {
        let n = self.n;
        let sh = self.shapes[((a * n + b) * n + c) * n + d];
        let (e0, f0) = (sh.e0 as usize, sh.f0 as usize);
        if sh.ne == 0 || e < e0 || f < f0 {
            return 0.0;
        }
        let (ie, jf) = ((e - e0) >> 1, (f - f0) >> 1);
        if ie >= sh.ne as usize || jf >= sh.nf as usize || (e - e0) & 1 == 1 || (f - f0) & 1 == 1 {
            return 0.0;
        }
        self.data[sh.off as usize + ie * sh.nf as usize + jf]
    }
}

/// Source of F values during verification: a table for moderate levels,
/// direct evaluation otherwise.
enum FSource<'a> {
    Table(FTable),
    Direct(&'a FusionCategory),
}

impl FSource<'_> {
    /// `sum_e F(a,b,c,d,e,f) * x(e)` over the admissible channels `e`.
    #[inline]
    fn sum_e(&self, a: usize, b: usize, c: usize, d: usize, f: usize, x: impl Fn(usize) -> f64) -> f64 {
        match self {
            FSource::Table(t) => {
                let sh = t.shapes[((a * t.n + b) * t.n + c) * t.n + d];
                if sh.ne == 0 || f < sh.f0 as usize {
                    return 0.0;
                }
                let jf = (f - sh.f0 as usize) / 2;
                let nf = sh.nf as usize;
                if jf >= nf {
                    return 0.0;
                }
                let base = sh.off as usize + jf;
                let e0 = sh.e0 as usize;
                let mut acc = 0.0;
                for ie in 0..sh.ne as usize {
                    acc += t.data[base + ie * nf] * x(e0 + 2 * ie);
                }
                acc
            }
            FSource::Direct(cat) => cat.isect(a, b, d, c).map(|e| cat.f(a, b, c, d, e, f) * x(e)).sum(),
        }
    }

    #[inline]
    fn get(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> f64 {
        match self {
            FSource::Table(t) => t.get(a, b, c, d, e, f),
            FSource::Direct(cat) => cat.f(a, b, c, d, e, f),
        }
    }
}

/// Checks pentagon, hexagon (both braidings), F-unitarity and the Verlinde formula.
pub fn verify_axioms(cat: &FusionCategory) -> AxiomReport {
    let src = if cat.level <= F_TABLE_MAX_LEVEL {
        FSource::Table(FTable::build(cat))
    } else {
        FSource::Direct(cat)
    };
    let (pentagon, pentagon_method) = if cat.level <= PENTAGON_EXHAUSTIVE_MAX_LEVEL {
        (pentagon_exhaustive(cat, &src), PentagonMethod::Exhaustive)
    } else {
        (
            pentagon_probe(cat, &src, PENTAGON_PROBES, PENTAGON_SEED),
            PentagonMethod::RandomProbe { probes: PENTAGON_PROBES, seed: PENTAGON_SEED },
        )
    };
    let hexagon = hexagon_residual(cat, &src, Sign::Plus).max(hexagon_residual(cat, &src, Sign::Minus));
    AxiomReport {
        level: cat.level,
        pentagon,
        hexagon,
        f_unitarity: f_unitarity_residual(cat, &src),
        verlinde: verlinde_residual(cat),
        pentagon_method,
    }
}

/// Exhaustive entrywise pentagon residual.
pub fn pentagon_residual_exhaustive(cat: &FusionCategory) -> f64 {
    let src = FSource::Table(FTable::build(cat));
    pentagon_exhaustive(cat, &src)
}

/// Randomized operator-level pentagon residual.
pub fn pentagon_residual_probe(cat: &FusionCategory, probes: usize, seed: u64) -> f64 {
    let src = if cat.level <= F_TABLE_MAX_LEVEL {
        FSource::Table(FTable::build(cat))
    } else {
        FSource::Direct(cat)
    };
    pentagon_probe(cat, &src, probes, seed)
}

fn pentagon_exhaustive(cat: &FusionCategory, fs: &FSource) -> f64 {
    let n = cat.rank();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    for f in cat.channels(a, b) {
                        for g in cat.channels(f, c) {
                            for e in cat.channels(g, d) {
                                for l in cat.channels(c, d) {
                                    for kk in cat.channels(b, l) {
                                        if !cat.admissible(a, kk, e) {
                                            continue;
                                        }
                                        let lhs = fs.get(f, c, d, e, g, l) * fs.get(a, b, l, e, f, kk);
                                        let mut rhs = 0.0;
                                        for h in cat.channels(b, c) {
                                            rhs += fs.get(a, b, c, g, f, h)
                                                * fs.get(a, h, d, e, g, kk)
                                                * fs.get(b, c, d, kk, h, l);
                                        }
                                        worst = worst.max((lhs - rhs).abs());
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

fn pentagon_probe(cat: &FusionCategory, fs: &FSource, probes: usize, seed: u64) -> f64 {
    let n = cat.rank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(cat.level));
    let idx = |x: usize, y: usize| x * n + y;
    let mut v = vec![0.0; n * n];
    let mut u = vec![0.0; n * n];
    let mut w = vec![0.0; n * n];
    let mut y = vec![0.0; n * n];
    let mut s = vec![0.0; n * n];
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    for e in ((a + b + c + d) % 2..n).step_by(2) {
                        for _ in 0..probes {
                            // v over ((ab)_f c)_g d -> e
                            let mut any = false;
                            for f in cat.channels(a, b) {
                                for g in cat.isect(f, c, e, d) {
                                    v[idx(f, g)] = rng.gen_range(-1.0..1.0);
                                    any = true;
                                }
                            }
                            if !any {
                                break;
                            }
                            // u over (a (bc)_h)_g d
                            for h in cat.channels(b, c) {
                                for g in cat.isect(a, h, e, d) {
                                    u[idx(h, g)] = fs.sum_e(a, b, c, g, h, |f| v[idx(f, g)]);
                                }
                            }
                            // w over a ((bc)_h d)_kk
                            for h in cat.channels(b, c) {
                                for kk in cat.isect(h, d, a, e) {
                                    w[idx(h, kk)] = fs.sum_e(a, h, d, e, kk, |g| u[idx(h, g)]);
                                }
                            }
                            // y over a (b (cd)_l)_kk
                            for l in cat.channels(c, d) {
                                for kk in cat.isect(b, l, a, e) {
                                    y[idx(kk, l)] = fs.sum_e(b, c, d, kk, l, |h| w[idx(h, kk)]);
                                }
                            }
                            // other side through ((ab)_f (cd)_l)
                            for f in cat.channels(a, b) {
                                for l in cat.isect(c, d, f, e) {
                                    s[idx(f, l)] = fs.sum_e(f, c, d, e, l, |g| v[idx(f, g)]);
                                }
                            }
                            for l in cat.channels(c, d) {
                                for kk in cat.isect(b, l, a, e) {
                                    let acc = fs.sum_e(a, b, l, e, kk, |f| s[idx(f, l)]);
                                    worst = worst.max((acc - y[idx(kk, l)]).abs());
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

fn hexagon_residual(cat: &FusionCategory, fs: &FSource, sign: Sign) -> f64 {
    let n = cat.rank();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    if (a + b + c + d) % 2 != 0 {
                        continue;
                    }
                    for e in cat.channels(c, a) {
                        if !cat.admissible(e, b, d) {
                            continue;
                        }
                        for g in cat.channels(c, b) {
                            if !cat.admissible(a, g, d) {
                                continue;
                            }
                            let lhs = cat.r(c, a, e, sign) * fs.get(a, c, b, d, e, g) * cat.r(c, b, g, sign);
                            let mut rhs = Complex64::new(0.0, 0.0);
                            for f in cat.channels(a, b) {
                                if cat.admissible(c, f, d) {
                                    rhs += fs.get(c, a, b, d, e, f) * cat.r(c, f, d, sign) * fs.get(a, b, c, d, f, g);
                                }
                            }
                            worst = worst.max((lhs - rhs).norm());
                        }
                    }
                }
            }
        }
    }
    worst
}

fn f_unitarity_residual(cat: &FusionCategory, fs: &FSource) -> f64 {
    let n = cat.rank();
    let k = cat.level as usize;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let Some(sh) = block_shape(k, a, b, c, d) else { continue };
                    if sh.ne != sh.nf {
                        worst = worst.max(1.0);
                        continue;
                    }
                    for i in 0..sh.ne {
                        for j in 0..sh.ne {
                            let mut acc = 0.0;
                            for m in 0..sh.nf {
                                let f = sh.f0 + 2 * m;
                                acc += fs.get(a, b, c, d, sh.e0 + 2 * i, f) * fs.get(a, b, c, d, sh.e0 + 2 * j, f);
                            }
                            let target = if i == j { 1.0 } else { 0.0 };
                            worst = worst.max((acc - target).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Maximum deviation of the Verlinde formula from the fusion rules.
pub fn verlinde_residual(cat: &FusionCategory) -> f64 {
    let s = cat.s_matrix();
    let n = cat.rank();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a..n {
            for c in 0..n {
                let v: f64 = (0..n).map(|x| s[a][x] * s[b][x] * s[c][x] / s[0][x]).sum();
                worst = worst.max((v - f64::from(cat.n(a, b, c))).abs());
            }
        }
    }
    worst
}

/// Unitarity of S, the modular relation, and commutativity of fusion.
pub fn modular_residuals(cat: &FusionCategory) -> ModularReport {
    use nalgebra::DMatrix;
    let n = cat.rank();
    let s_rows = cat.s_matrix();
    let s = DMatrix::from_fn(n, n, |i, j| Complex64::new(s_rows[i][j], 0.0));
    let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(cat.t_diagonal()));
    let eye = DMatrix::<Complex64>::identity(n, n);
    let s_unitarity = max_abs(&(&s * s.adjoint() - &eye));
    let st = &s * &t;
    let st3 = &st * &st * &st;
    let s2 = &s * &s;
    // best global phase p = <s2, st3> / |<s2, st3>|
    let inner: Complex64 = s2.iter().zip(st3.iter()).map(|(x, y)| x.conj() * y).sum();
    let p = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
    let st_cubed = max_abs(&(st3 - s2 * p));
    let mats: Vec<DMatrix<f64>> = (0..n)
        .map(|a| {
            let m = cat.fusion_matrix(a);
            DMatrix::from_fn(n, n, |i, j| f64::from(m[i][j]))
        })
        .collect();
    let mut fusion_commutator: f64 = 0.0;
    let mut s_diagonalizes: f64 = 0.0;
    let sr = DMatrix::from_fn(n, n, |i, j| s_rows[i][j]);
    for a in 0..n {
        for b in 0..n {
            let c = &mats[a] * &mats[b] - &mats[b] * &mats[a];
            fusion_commutator = fusion_commutator.max(c.amax());
        }
        let d = sr.transpose() * &mats[a] * &sr;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s_diagonalizes = s_diagonalizes.max(d[(i, j)].abs());
                }
            }
        }
    }
    ModularReport { s_unitarity, st_cubed, fusion_commutator, s_diagonalizes }
}

fn max_abs(m: &nalgebra::DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}
