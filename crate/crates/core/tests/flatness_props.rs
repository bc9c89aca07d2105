use biunitary::flatness::{spec_verdict, Certificate, FlatnessContext};
use biunitary::fusion::Sign;
use biunitary::{catalog, locality_from_braiding, FlatnessVerdict, Locality, QSystemSpec, Verdict};

fn contexts() -> Vec<FlatnessContext> {
    catalog().iter().map(|s| FlatnessContext::new(s).unwrap()).collect()
}

#[test]
fn verdicts_follow_locality() {
    for ctx in contexts() {
        let spec = ctx.spec().clone();
        let sv = spec_verdict(&ctx, 6, None).unwrap();
        assert!(sv.consistent(), "{}: {:?} vs {:?}", spec.name, sv.verdict, sv.locality);
        assert_eq!(sv.locality, spec.locality, "{}", spec.name);
        let local = spec.locality == Locality::Local;
        for lambda in 0..=spec.level.min(6) {
            for sign in [Sign::Plus, Sign::Minus] {
                let v = ctx.check(lambda, sign, None).unwrap();
                // the unit and the simple current square to the unit, so
                // their flat parts are trivially full
                let trivially_flat = lambda == 0 || lambda == spec.level;
                let flat = v.verdict == Verdict::Flat;
                assert_eq!(flat, local || trivially_flat, "{} {lambda} {sign:?}", spec.name);
                if flat {
                    assert_eq!(v.certificate, Certificate::EqualUpToDepth { depth: v.depth });
                }
            }
        }
    }
}

#[test]
fn nonflat_certificates_reverify() {
    for ctx in contexts() {
        let spec = ctx.spec().clone();
        if spec.locality == Locality::Local {
            continue;
        }
        let v = ctx.check(1, Sign::Plus, None).unwrap();
        assert_eq!(v.verdict, Verdict::Nonflat);
        assert!(matches!(v.certificate, Certificate::StrictInequality { .. }));
        assert!(ctx.reverify(&v).unwrap(), "{}", spec.name);
        let json = serde_json::to_string(&v).unwrap();
        let back: FlatnessVerdict = serde_json::from_str(&json).unwrap();
        assert!(ctx.reverify(&back).unwrap());
        // a tampered witness is rejected
        let mut bad = back.clone();
        if let Certificate::StrictInequality { lhs, .. } = &mut bad.certificate {
            lhs.push('0');
        }
        assert!(!ctx.reverify(&bad).unwrap());
    }
}

#[test]
fn transport_never_contradicts_dimensions() {
    let cases: [(&str, u32, usize); 6] = [("A4", 1, 3), ("A5", 2, 3), ("D5", 1, 3), ("D6", 1, 3), ("E6", 1, 2), ("E7", 1, 4)];
    for (name, lambda, grid) in cases {
        let ctx = FlatnessContext::new(&QSystemSpec::by_name(name).unwrap()).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let dim = ctx.check(lambda, sign, None).unwrap();
            let tr = ctx.check_by_transport(lambda, sign, grid, grid).unwrap();
            // transport explores finitely many grids, so it may only miss a defect
            if tr.verdict == Verdict::Nonflat {
                assert_eq!(dim.verdict, Verdict::Nonflat, "{name} {sign:?}");
                assert!(ctx.reverify(&tr).unwrap());
            }
            if dim.verdict == Verdict::Flat {
                assert_eq!(tr.verdict, Verdict::Flat, "{name} {sign:?}");
            }
        }
    }
}

#[test]
fn locality_sources_agree_with_metadata() {
    for spec in catalog() {
        let (loc, _) = locality_from_braiding(&spec);
        assert_eq!(loc, spec.locality, "{}", spec.name);
    }
}
