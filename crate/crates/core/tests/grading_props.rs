use biunitary::grading::{class_graph, four_types, graded_hom_dim, identity_system, GradedMorphism};
use biunitary::{catalog, grade_su2, graded_compose, sector_partition, QSystemSpec};

#[test]
fn partitions_exist_on_the_whole_catalog() {
    for spec in catalog() {
        let g = grade_su2(&spec.category().unwrap());
        let p = sector_partition(&spec, &g).unwrap();
        let mut seen = vec![0; spec.graph.len()];
        for part in &p.parts {
            for &v in part {
                seen[v] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "{}", spec.name);
        // diagram edges always change the class
        for v in 0..spec.graph.len() {
            for u in spec.graph.neighbors(v) {
                assert_ne!(p.classes[u], p.classes[v], "{}", spec.name);
            }
        }
    }
}

#[test]
fn class_graphs_are_told_apart_by_label() {
    for name in ["E6", "E7", "E8"] {
        let spec = QSystemSpec::by_name(name).unwrap();
        let p = sector_partition(&spec, &grade_su2(&spec.category().unwrap())).unwrap();
        let (g0, g1) = (class_graph(&spec, &p, 0), class_graph(&spec, &p, 1));
        assert_ne!(g0, g1, "{name}");
        assert_eq!(g0, class_graph(&spec, &p, 2));
    }
    // E6 splits into two halves of equal size
    let spec = QSystemSpec::by_name("E6").unwrap();
    let p = sector_partition(&spec, &grade_su2(&spec.category().unwrap())).unwrap();
    assert_eq!(class_graph(&spec, &p, 0).len(), class_graph(&spec, &p, 1).len());
}

fn same(x: &GradedMorphism, y: &GradedMorphism) -> bool {
    match (x, y) {
        (GradedMorphism::Zero, GradedMorphism::Zero) => true,
        (GradedMorphism::Connection(a), GradedMorphism::Connection(b)) => {
            (a.top, a.bottom) == (b.top, b.bottom) && a.connection.distance_by_paths(&b.connection).is_some_and(|d| d < 1e-10)
        }
        _ => false,
    }
}

#[test]
fn composition_is_associative_with_zero_absorbing() {
    for name in ["A3", "D6", "E6"] {
        let spec = QSystemSpec::by_name(name).unwrap();
        let g = grade_su2(&spec.category().unwrap());
        let p = sector_partition(&spec, &g).unwrap();
        let mut types = four_types(&spec, &p, &g).unwrap();
        types.push(GradedMorphism::Zero);
        for x in &types {
            assert!(graded_compose(x, &GradedMorphism::Zero).unwrap().is_zero());
            assert!(graded_compose(&GradedMorphism::Zero, x).unwrap().is_zero());
            for y in &types {
                let xy = graded_compose(x, y).unwrap();
                for z in &types {
                    let left = graded_compose(&xy, z).unwrap();
                    let right = graded_compose(x, &graded_compose(y, z).unwrap()).unwrap();
                    assert!(same(&left, &right), "{name}");
                }
            }
        }
    }
}

#[test]
fn identity_system_splits_in_two_on_the_catalog() {
    for spec in catalog() {
        let p = sector_partition(&spec, &grade_su2(&spec.category().unwrap())).unwrap();
        let s = identity_system(&spec, &p).unwrap();
        assert_eq!(s.components, 2, "{}", spec.name);
    }
}

#[test]
fn graded_hom_counts_split_the_ungraded_one() {
    use biunitary::fusion::Sign;
    use biunitary::hom::hom_dim;
    use biunitary::InductionTower;
    for name in ["A5", "D5", "E7"] {
        let spec = QSystemSpec::by_name(name).unwrap();
        let g = grade_su2(&spec.category().unwrap());
        let p = sector_partition(&spec, &g).unwrap();
        let tower = InductionTower::new(&spec, 2).unwrap();
        for lambda in 0..=2 {
            let whole = tower.induce(lambda, Sign::Plus).unwrap().connection;
            let total = hom_dim(&whole, &whole).unwrap();
            let mut split = 0;
            for top in 0..2 {
                let x = GradedMorphism::Connection(
                    biunitary::grading::graded_induce(&spec, &p, &g, &tower, lambda, Sign::Plus, top).unwrap(),
                );
                split += graded_hom_dim(&x, &x).unwrap();
            }
            // restricting to each class can only separate intertwiners
            assert!(split >= total, "{name} {lambda}: {split} < {total}");
        }
    }
}
