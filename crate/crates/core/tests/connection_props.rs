use biunitary::fusion::Sign;
use biunitary::graph::BipartiteGraph;
use biunitary::hom::{decompose, hom_dim};
use biunitary::{catalog, compose_horizontal, compose_vertical, direct_sum, gauge_equivalent, ghj_cells, Connection, InductionTower, QSystemSpec};
use proptest::prelude::*;

/// Catalog entries small enough for exhaustive intertwiner solves.
fn small_specs() -> Vec<QSystemSpec> {
    catalog().into_iter().filter(|s| s.graph.len() <= 8).collect()
}

fn spec_strategy() -> impl Strategy<Value = QSystemSpec> {
    let specs = small_specs();
    (0..specs.len()).prop_map(move |i| specs[i].clone())
}

fn sign_strategy() -> impl Strategy<Value = Sign> {
    prop_oneof![Just(Sign::Plus), Just(Sign::Minus)]
}

fn spectral_norm(m: &[Vec<u32>]) -> f64 {
    let n = m.len();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| f64::from(m[i][j]));
    (a.transpose() * &a).symmetric_eigenvalues().max().sqrt()
}

fn residual(w: &Connection) -> f64 {
    w.check_biunitarity().unwrap().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composites_keep_biunitarity(spec in spec_strategy(), l1 in 0u32..=3, l2 in 0u32..=3, s1 in sign_strategy(), s2 in sign_strategy()) {
        let top = spec.level.min(3);
        let tower = InductionTower::new(&spec, top).unwrap();
        let w1 = tower.induce(l1.min(top), s1).unwrap().connection;
        let w2 = tower.induce(l2.min(top), s2).unwrap().connection;
        let bound = 10.0 * (residual(&w1) + residual(&w2)) + 1e-12;
        prop_assert!(residual(&compose_vertical(&w1, &w2).unwrap()) <= bound);
        prop_assert!(residual(&direct_sum(&w1, &w2).unwrap()) <= bound);
        let cells = ghj_cells(&spec).unwrap();
        let h = compose_horizontal(&cells, &cells).unwrap();
        prop_assert!(residual(&h) <= 20.0 * residual(&cells) + 1e-12);
    }

    #[test]
    fn signs_share_graphs_and_endomorphisms(spec in spec_strategy(), lambda in 0u32..=6) {
        let lambda = lambda.min(spec.level);
        let tower = InductionTower::new(&spec, lambda).unwrap();
        let p = tower.induce(lambda, Sign::Plus).unwrap().connection;
        let m = tower.induce(lambda, Sign::Minus).unwrap().connection;
        prop_assert_eq!(p.left(), m.left());
        prop_assert_eq!(p.right(), m.right());
        prop_assert_eq!(hom_dim(&p, &p).unwrap(), hom_dim(&m, &m).unwrap());
    }

    #[test]
    fn rotation_preserves_biunitarity(spec in spec_strategy(), lambda in 1u32..=3, sign in sign_strategy()) {
        let lambda = lambda.min(spec.level);
        let w = InductionTower::new(&spec, lambda).unwrap().induce(lambda, sign).unwrap().connection;
        prop_assert!(residual(&w.rotate().unwrap()) < 1e-8);
    }
}

#[test]
fn admissible_squares_follow_trace_formula() {
    for spec in catalog() {
        let tower = InductionTower::new(&spec, spec.level.min(2)).unwrap();
        for lambda in 0..=spec.level.min(2) {
            let w = tower.induce(lambda, Sign::Plus).unwrap().connection;
            // sum over corners of (left * bottom)(a1, a4) * (top * right)(a1, a4)
            let m = |e: &biunitary::EdgeSet| {
                let x = e.matrix();
                nalgebra::DMatrix::from_fn(x.len(), x.len(), |i, j| i64::from(x[i][j]))
            };
            let rows = m(w.left()) * m(w.bottom());
            let cols = m(w.top()) * m(w.right());
            let want: i64 = rows.component_mul(&cols).sum();
            assert_eq!(w.admissible_quadruples() as i64, want, "{} {lambda}", spec.name);
        }
    }
}

#[test]
fn vertical_and_horizontal_norms_agree_on_cell_systems() {
    for spec in catalog() {
        let w = ghj_cells(&spec).unwrap();
        assert!(residual(&w) < 1e-9, "{}", spec.name);
        let h = spectral_norm(&w.top().matrix());
        let v = spectral_norm(&w.left().matrix());
        assert!((h - v).abs() < 1e-9, "{}", spec.name);
        assert!((h - spec.graph.beta()).abs() < 1e-9);
    }
}

#[test]
fn induced_vertical_norm_is_quantum_dimension() {
    for name in ["A6", "D7", "E6", "E7"] {
        let spec = QSystemSpec::by_name(name).unwrap();
        let cat = spec.category().unwrap();
        let tower = InductionTower::new(&spec, 4).unwrap();
        for lambda in 0..=4 {
            let v = tower.vertical_edges(lambda).matrix();
            let norm = spectral_norm(&v);
            assert!((norm - cat.qdims()[lambda as usize]).abs() < 1e-9, "{name} {lambda}");
        }
    }
}

#[test]
fn decompose_and_resum_is_gauge_equivalent() {
    for name in ["A4", "D5", "E6", "E7"] {
        let spec = QSystemSpec::by_name(name).unwrap();
        let tower = InductionTower::new(&spec, 2).unwrap();
        let a1 = tower.induce(1, Sign::Plus).unwrap().connection;
        let square = compose_vertical(&a1, &a1).unwrap();
        let pieces = decompose(&square).unwrap();
        let count: usize = pieces.iter().map(|p| p.multiplicity).sum();
        assert!((2..=4).contains(&count), "{name}: {count}");
        let mut sum: Option<Connection> = None;
        for p in &pieces {
            for _ in 0..p.multiplicity {
                sum = Some(match sum {
                    None => p.connection.clone(),
                    Some(s) => direct_sum(&s, &p.connection).unwrap(),
                });
            }
        }
        assert!(gauge_equivalent(&square, &sum.unwrap()), "{name}");
    }
}

#[test]
fn square_of_fundamental_splits_like_its_fusion() {
    for spec in small_specs() {
        let top = spec.level.min(2);
        let tower = InductionTower::new(&spec, top).unwrap();
        let a1 = tower.induce(1, Sign::Plus).unwrap().connection;
        let square = compose_vertical(&a1, &a1).unwrap();
        let channels: Vec<u32> = spec.category().unwrap().fuse(1.into(), 1.into()).unwrap().into_iter().map(|c| c.spin()).collect();
        let induced: Vec<Connection> = channels.iter().map(|&c| tower.induce(c, Sign::Plus).unwrap().connection).collect();
        // total vertical multiplicities add up channel by channel
        let pieces = decompose(&square).unwrap();
        let n = spec.graph.len();
        let mut total = vec![vec![0u32; n]; n];
        for p in &pieces {
            for (i, row) in p.connection.left().matrix().iter().enumerate() {
                for (j, x) in row.iter().enumerate() {
                    total[i][j] += x * p.multiplicity as u32;
                }
            }
        }
        let mut want = vec![vec![0u32; n]; n];
        for w in &induced {
            for (i, row) in w.left().matrix().iter().enumerate() {
                for (j, x) in row.iter().enumerate() {
                    want[i][j] += x;
                }
            }
        }
        assert_eq!(total, want, "{}", spec.name);
        // the endomorphism algebra matches that of the sum of channels
        let mut end = 0;
        for x in &induced {
            for y in &induced {
                if x.left().matrix() == y.left().matrix() {
                    end += hom_dim(x, y).unwrap();
                }
            }
        }
        assert_eq!(hom_dim(&square, &square).unwrap(), end, "{}", spec.name);
        if spec.theta == vec![0] {
            assert_eq!(pieces.len(), channels.len(), "{}", spec.name);
            assert!(pieces.iter().all(|p| p.multiplicity == 1));
        }
    }
}

#[test]
fn graph_weights_match_quantum_dimensions_on_a_series() {
    for spec in catalog().into_iter().filter(|s| s.theta == vec![0]) {
        let g: &BipartiteGraph = &spec.graph;
        let cat = spec.category().unwrap();
        let beta = 2.0 * (std::f64::consts::PI / f64::from(spec.level + 2)).cos();
        assert!((g.beta() - beta).abs() < 1e-10);
        let w = g.pf_weights().unwrap();
        for (v, &mu) in w.iter().enumerate() {
            assert!((mu - cat.qdims()[v]).abs() < 1e-10, "{} {v}", spec.name);
        }
    }
}
