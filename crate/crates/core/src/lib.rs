//! Numerical engine for bi-unitary connections over SU(2)_k: fusion data,
//! A-D-E cell systems, alpha-induced connections, intertwiner spaces and
//! flatness verdicts.

pub mod cells;
pub mod connection;
pub mod error;
pub mod flatness;
pub mod fusion;
pub mod grading;
pub mod graph;
pub mod hom;
pub mod induction;
pub mod linalg;

pub use cells::{a_series_cells, catalog, ghj_cells, Locality, LocalitySource, QSystemSpec};
pub use connection::{compose_horizontal, compose_vertical, direct_sum, BiunitarityReport, Connection, Edge, EdgeSet};
pub use error::{Error, Result};
pub use flatness::{check_flatness, locality_from_braiding, parallel_transport_check, FlatnessVerdict, Verdict};
pub use fusion::{FusionCategory, ObjectLabel, Sign};
pub use grading::{grade_su2, graded_compose, sector_partition, GradedMorphism, Grading};
pub use hom::{decompose, gauge_equivalent, intertwiner_space, theta_plus, z_matrix, IntertwinerSpace, ZMatrix};
pub use induction::{crossing_connection, induce, InducedConnection, InductionTower};
pub use graph::{ade_graph, BipartiteGraph, Series};
