//! Cyclic gradings of the objects, the induced partition of the diagram
//! vertices, and composition of graded connections where a mismatch of
//! horizontal graphs yields the zero object instead of an error.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cells::QSystemSpec;
use crate::connection::{compose_vertical, Connection, EdgeSet};
use crate::error::{Error, Result};
use crate::fusion::{FusionCategory, Sign};
use crate::graph::module_actions;
use crate::hom::hom_dim;
use crate::induction::InductionTower;

/// A `Z/nZ` grading of the objects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grading {
    pub n: u32,
    pub classes: Vec<u32>,
}

impl Grading {
    pub fn class(&self, a: usize) -> u32 {
        self.classes[a]
    }

    /// Objects of class `j`.
    pub fn objects_in(&self, j: u32) -> Vec<usize> {
        (0..self.classes.len()).filter(|&a| self.classes[a] == j % self.n).collect()
    }

    /// Unit in class 0, duals in opposite classes, fusion additive.
    pub fn verify(&self, cat: &FusionCategory) -> Result<()> {
        if self.n < 2 || self.classes.len() != cat.rank() {
            return Err(Error::Spec("grading needs n >= 2 and a class for every object".into()));
        }
        if self.classes[0] != 0 {
            return Err(Error::Spec("the unit must lie in class 0".into()));
        }
        for a in 0..cat.rank() {
            // every object is self-dual
            if (2 * self.classes[a]) % self.n != 0 {
                return Err(Error::Spec(format!("object {a} and its dual lie in non-opposite classes")));
            }
            for b in 0..cat.rank() {
                let want = (self.classes[a] + self.classes[b]) % self.n;
                if let Some(c) = cat.channels(a, b).find(|&c| self.classes[c] != want) {
                    return Err(Error::Spec(format!("{a} x {b} contains {c} outside class {want}")));
                }
            }
        }
        Ok(())
    }
}

/// Parity grading of SU(2)_k: even labels in class 0, odd in class 1.
pub fn grade_su2(cat: &FusionCategory) -> Grading {
    Grading { n: 2, classes: (0..cat.rank() as u32).map(|a| a % 2).collect() }
}

/// The vertices of a diagram split by the class of the objects reaching them
/// from the star.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedSectorPartition {
    pub spec: String,
    pub n: u32,
    /// Class of each vertex.
    pub classes: Vec<u32>,
    /// Vertices of each class, in order.
    pub parts: Vec<Vec<usize>>,
}

impl GradedSectorPartition {
    pub fn part(&self, j: u32) -> &[usize] {
        &self.parts[(j % self.n) as usize]
    }

    fn mask(&self, j: u32) -> Vec<bool> {
        self.classes.iter().map(|&c| c == j % self.n).collect()
    }
}

/// Partition of the vertices: part `j` collects the vertices reached from the
/// star by objects of class `j`. Fails if the algebra object is not of class
/// 0 or the parts overlap or miss a vertex.
pub fn sector_partition(spec: &QSystemSpec, grading: &Grading) -> Result<GradedSectorPartition> {
    let cat = spec.category()?;
    grading.verify(&cat)?;
    if let Some(&t) = spec.theta.iter().find(|&&t| grading.class(t as usize) != 0) {
        return Err(Error::Spec(format!("{}: algebra object contains {t}, which is not of class 0", spec.name)));
    }
    let actions = module_actions(&cat, &spec.graph)?;
    let star = spec.graph.star();
    let nv = spec.graph.len();
    let mut owner: Vec<Option<u32>> = vec![None; nv];
    for lambda in 0..cat.rank() {
        let j = grading.class(lambda);
        for v in 0..nv {
            if actions[lambda][star][v] == 0 {
                continue;
            }
            match owner[v] {
                None => owner[v] = Some(j),
                Some(o) if o == j => {}
                Some(o) => {
                    return Err(Error::Spec(format!("{}: vertex {v} lies in classes {o} and {j}", spec.name)));
                }
            }
        }
    }
    let classes: Vec<u32> = owner
        .iter()
        .enumerate()
        .map(|(v, o)| o.ok_or_else(|| Error::Spec(format!("{}: vertex {v} is not reached from the star", spec.name))))
        .collect::<Result<_>>()?;
    let parts: Vec<Vec<usize>> = (0..grading.n).map(|j| (0..nv).filter(|&v| classes[v] == j).collect()).collect();
    if let Some(j) = parts.iter().position(|p| p.is_empty()) {
        return Err(Error::Spec(format!("{}: no vertex of class {j}, the grading does not connect the diagram", spec.name)));
    }
    Ok(GradedSectorPartition { spec: spec.name.clone(), n: grading.n, classes, parts })
}

/// Diagram edges leaving part `j`, named by the class so that graphs of
/// different classes never compare equal.
pub fn class_graph(spec: &QSystemSpec, part: &GradedSectorPartition, j: u32) -> EdgeSet {
    EdgeSet::from_graph(&spec.graph).restrict_sources(format!("{}:G{}", spec.name, j % part.n), &part.mask(j))
}

/// A connection between class graphs: top graph of class `top`, bottom of
/// class `bottom`.
#[derive(Clone, Debug)]
pub struct GradedConnection {
    pub connection: Connection,
    pub top: u32,
    pub bottom: u32,
}

/// A graded connection or the zero object.
#[derive(Clone, Debug)]
pub enum GradedMorphism {
    Zero,
    Connection(GradedConnection),
}

impl GradedMorphism {
    pub fn is_zero(&self) -> bool {
        matches!(self, GradedMorphism::Zero)
    }

    pub fn classes(&self) -> Option<(u32, u32)> {
        match self {
            GradedMorphism::Zero => None,
            GradedMorphism::Connection(g) => Some((g.top, g.bottom)),
        }
    }
}

/// Restriction of a connection whose horizontal graph is the diagram to the
/// corners whose upper-left vertex lies in part `top`; vertical edges move
/// the class by `shift`.
fn restrict(spec: &QSystemSpec, part: &GradedSectorPartition, w: &Connection, top: u32, shift: u32) -> Result<GradedConnection> {
    let n = part.n;
    let bottom = (top + shift) % n;
    let t = Arc::new(class_graph(spec, part, top));
    let b = Arc::new(class_graph(spec, part, bottom));
    let l = Arc::new(w.left().restrict_sources(format!("{}|{}", w.left().name(), top % n), &part.mask(top)));
    let r = Arc::new(w.right().restrict_sources(format!("{}|{}", w.right().name(), (top + 1) % n), &part.mask(top + 1)));
    let mut blocks = BTreeMap::new();
    for (&(a1, a4), m) in w.blocks() {
        if part.classes[a1 as usize] == top % n {
            blocks.insert((a1, a4), m.clone());
        }
    }
    let connection = Connection::from_blocks(t, l, r, b, w.weights().clone(), blocks)?;
    Ok(GradedConnection { connection, top: top % n, bottom })
}

/// Induced connection of `lambda` restricted to upper-left vertices of class `top`.
pub fn graded_induce(
    spec: &QSystemSpec,
    part: &GradedSectorPartition,
    grading: &Grading,
    tower: &InductionTower,
    lambda: u32,
    sign: Sign,
    top: u32,
) -> Result<GradedConnection> {
    let w = tower.induce(lambda, sign)?.connection;
    restrict(spec, part, &w, top, grading.class(lambda as usize))
}

/// Identity on the class graph `j`.
pub fn graded_identity(spec: &QSystemSpec, part: &GradedSectorPartition, j: u32) -> Result<GradedConnection> {
    let w = Connection::identity(Arc::new(EdgeSet::from_graph(&spec.graph)), Arc::new(spec.graph.pf_weights()?.to_vec()))?;
    restrict(spec, part, &w, j, 0)
}

/// Vertical composition, or zero when the bottom graph of `x` is not the top
/// graph of `y`.
pub fn graded_compose(x: &GradedMorphism, y: &GradedMorphism) -> Result<GradedMorphism> {
    let (GradedMorphism::Connection(a), GradedMorphism::Connection(b)) = (x, y) else {
        return Ok(GradedMorphism::Zero);
    };
    if a.connection.bottom() != b.connection.top() || a.bottom != b.top {
        return Ok(GradedMorphism::Zero);
    }
    let connection = compose_vertical(&a.connection, &b.connection)?;
    Ok(GradedMorphism::Connection(GradedConnection { connection, top: a.top, bottom: b.bottom }))
}

/// Intertwiner dimension, zero across different class graphs.
pub fn graded_hom_dim(x: &GradedMorphism, y: &GradedMorphism) -> Result<usize> {
    match (x, y) {
        (GradedMorphism::Connection(a), GradedMorphism::Connection(b)) => {
            if a.connection.top() != b.connection.top() || a.connection.bottom() != b.connection.bottom() {
                Ok(0)
            } else {
                hom_dim(&a.connection, &b.connection)
            }
        }
        _ => Ok(0),
    }
}

/// The identities of all class graphs and the number of irreducible pieces
/// of their sum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentitySystem {
    pub spec: String,
    /// `dim Hom(id_i, id_j)`.
    pub dims: Vec<Vec<usize>>,
    pub components: usize,
}

pub fn identity_system(spec: &QSystemSpec, part: &GradedSectorPartition) -> Result<IdentitySystem> {
    let ids: Vec<GradedMorphism> =
        (0..part.n).map(|j| graded_identity(spec, part, j).map(GradedMorphism::Connection)).collect::<Result<_>>()?;
    let mut dims = vec![vec![0usize; ids.len()]; ids.len()];
    for (i, x) in ids.iter().enumerate() {
        for (j, y) in ids.iter().enumerate() {
            dims[i][j] = graded_hom_dim(x, y)?;
        }
    }
    // the endomorphism algebra of the sum is commutative here, so its
    // dimension counts minimal idempotents
    let off_diagonal = (0..ids.len()).any(|i| (0..ids.len()).any(|j| i != j && dims[i][j] > 0));
    if off_diagonal {
        return Err(Error::Spec("identities of distinct class graphs are linked".into()));
    }
    let components = (0..ids.len()).map(|i| dims[i][i]).sum();
    Ok(IdentitySystem { spec: spec.name.clone(), dims, components })
}

/// The four kinds of graded connections for a two-class grading: every
/// combination of top and bottom class, built from the identity and the
/// fundamental induced connection.
pub fn four_types(spec: &QSystemSpec, part: &GradedSectorPartition, grading: &Grading) -> Result<Vec<GradedMorphism>> {
    if part.n != 2 {
        return Err(Error::Spec("the four types need a two-class grading".into()));
    }
    let tower = InductionTower::new(spec, 1)?;
    let mut out = Vec::new();
    for top in 0..2 {
        out.push(GradedMorphism::Connection(graded_induce(spec, part, grading, &tower, 1, Sign::Plus, top)?));
        out.push(GradedMorphism::Connection(graded_identity(spec, part, top)?));
    }
    Ok(out)
}
