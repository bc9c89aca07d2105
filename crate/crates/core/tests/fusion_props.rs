use std::f64::consts::PI;

use biunitary::fusion::{modular_residuals, pentagon_residual_probe, verlinde_residual};
use biunitary::{FusionCategory, ObjectLabel};
use proptest::prelude::*;

/// Decomposes the untruncated tensor product of spins `a/2` and `b/2` by
/// peeling highest weights off the weight multiset, then drops every piece
/// that is not integrable at level `k`.
fn truncated_cg(a: u32, b: u32, k: u32) -> Vec<u32> {
    let mut weights = std::collections::BTreeMap::<i64, i64>::new();
    for x in 0..=a {
        for y in 0..=b {
            let w = (2 * x as i64 - a as i64) + (2 * y as i64 - b as i64);
            *weights.entry(w).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    while let Some((&top, _)) = weights.iter().rev().find(|(_, &m)| m > 0) {
        let mut w = top;
        while w >= -top {
            *weights.get_mut(&w).unwrap() -= 1;
            w -= 2;
        }
        out.push(top as u32);
    }
    out.retain(|&c| a + b + c <= 2 * k);
    out.sort_unstable();
    out
}

/// Fusion coefficient from the sine formula for the S-matrix.
fn verlinde(a: u32, b: u32, c: u32, k: u32) -> i64 {
    let n = k + 2;
    let s = |x: u32, y: u32| (2.0 / f64::from(n)).sqrt() * (PI * f64::from((x + 1) * (y + 1)) / f64::from(n)).sin();
    let v: f64 = (0..=k).map(|x| s(a, x) * s(b, x) * s(c, x) / s(0, x)).sum();
    v.round() as i64
}

fn level_and_labels() -> impl Strategy<Value = (u32, u32, u32)> {
    (1u32..=28).prop_flat_map(|k| (Just(k), 0..=k, 0..=k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fuse_matches_truncated_tensor_product((k, a, b) in level_and_labels()) {
        let cat = FusionCategory::su2(k).unwrap();
        let got: Vec<u32> = cat.fuse(ObjectLabel(a), ObjectLabel(b)).unwrap().into_iter().map(|c| c.spin()).collect();
        prop_assert_eq!(got, truncated_cg(a, b, k));
    }

    #[test]
    fn fusion_coefficients_match_sine_formula((k, a, b) in level_and_labels()) {
        let cat = FusionCategory::su2(k).unwrap();
        for c in 0..=k {
            prop_assert_eq!(i64::from(cat.n(a as usize, b as usize, c as usize)), verlinde(a, b, c, k));
        }
    }

    #[test]
    fn f_blocks_are_orthogonal((k, a, b) in level_and_labels(), c in 0u32..=28) {
        let cat = FusionCategory::su2(k).unwrap();
        let c = c.min(k) as usize;
        let (a, b) = (a as usize, b as usize);
        for d in 0..=k as usize {
            let es: Vec<usize> = (0..=k as usize).filter(|&e| cat.admissible(a, b, e) && cat.admissible(e, c, d)).collect();
            let fs: Vec<usize> = (0..=k as usize).filter(|&f| cat.admissible(b, c, f) && cat.admissible(a, f, d)).collect();
            prop_assert_eq!(es.len(), fs.len());
            for &f1 in &fs {
                for &f2 in &fs {
                    let dot: f64 = es.iter().map(|&e| cat.f(a, b, c, d, e, f1) * cat.f(a, b, c, d, e, f2)).sum();
                    let want = if f1 == f2 { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-9, "k={} ({},{},{},{}) {} {}: {}", k, a, b, c, d, f1, f2, dot);
                }
            }
        }
    }

    // every label tuple is probed, so high levels are left to the acceptance run
    #[test]
    fn pentagon_probe_is_small(k in 1u32..=12, seed in any::<u64>()) {
        let cat = FusionCategory::su2(k).unwrap();
        prop_assert!(pentagon_residual_probe(&cat, 8, seed) < 1e-9);
    }
}

#[test]
fn modular_data_at_every_level() {
    for k in 1..=28 {
        let cat = FusionCategory::su2(k).unwrap();
        let m = modular_residuals(&cat);
        assert!(m.s_unitarity < 1e-9, "k={k}");
        assert!(m.st_cubed < 1e-9, "k={k}");
        assert!(m.fusion_commutator == 0.0, "k={k}");
        assert!(verlinde_residual(&cat) < 1e-9, "k={k}");
    }
}

#[test]
fn qdims_are_q_integers() {
    for k in 1..=28 {
        let cat = FusionCategory::su2(k).unwrap();
        let q = PI / f64::from(k + 2);
        for a in 0..=k {
            let want = (q * f64::from(a + 1)).sin() / q.sin();
            assert!((cat.qdims()[a as usize] - want).abs() < 1e-10);
        }
    }
}
