//! The catalog-wide verdict report and its golden comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use biunitary::flatness::{Certificate, FlatnessContext};
use biunitary::linalg::RankTolerances;
use biunitary::{catalog, ghj_cells, locality_from_braiding, Locality, LocalitySource, QSystemSpec, Series, Sign, Verdict};

use crate::cache::{key_for, Cache};
use crate::CliError;

pub const REPORT_SCHEMA: &str = "biunitary-report/1";

/// One `(lambda, sign)` line of the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub spec: String,
    pub lambda: u32,
    pub sign: Sign,
    pub flatness: Verdict,
    pub locality: Locality,
    pub z_row0: Vec<u32>,
    /// Diagram whose trivial-algebra connection has the same flat part.
    pub flat_part_target: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<Certificate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecSummary {
    pub spec: String,
    pub level: u32,
    pub theta: Vec<u32>,
    pub locality: Locality,
    pub locality_source: LocalitySource,
    pub verdict: Verdict,
    pub theta_plus: Vec<u32>,
    pub lambda_max: u32,
    pub depth: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub max_biunitarity: f64,
    pub max_modular_defect: f64,
    pub max_null_singular_value: f64,
    pub min_nonnull_singular_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub tool_version: String,
    pub specs: Vec<String>,
    pub summaries: Vec<SpecSummary>,
    pub verdicts: Vec<VerdictRow>,
    pub residuals: ResidualSummary,
}

/// Everything computed for one catalog entry; cached as a unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpecReport {
    summary: SpecSummary,
    rows: Vec<VerdictRow>,
    residuals: ResidualSummary,
}

/// Entries of the full report: A up to level 8 with every label, the D and E
/// entries with labels up to 4.
pub fn report_specs() -> Vec<(QSystemSpec, u32)> {
    catalog()
        .into_iter()
        .map(|s| {
            let lambda_max = if s.series == Series::A { s.level } else { s.level.min(4) };
            (s, lambda_max)
        })
        .collect()
}

/// Name of the diagram carrying `theta_plus` as a local algebra at `level`.
pub fn flat_part_target(level: u32, theta_plus: &[u32]) -> String {
    if theta_plus == [0] {
        return format!("A{}", level + 1);
    }
    catalog()
        .into_iter()
        .find(|o| o.level == level && o.locality == Locality::Local && o.theta == theta_plus)
        .map_or_else(|| "unlisted".to_string(), |o| o.name)
}

fn spec_report(spec: &QSystemSpec, lambda_max: u32, depth: Option<usize>, tol: RankTolerances) -> Result<SpecReport, CliError> {
    let ctx = FlatnessContext::with_tolerances(spec, tol)?;
    let (locality, locality_source) = locality_from_braiding(spec);
    let theta_plus = ctx.theta_plus();
    let target = flat_part_target(spec.level, &theta_plus);
    let z_row0 = ctx.z.entries[0].clone();
    let mut rows = Vec::new();
    let mut used_depth = 0;
    for lambda in 0..=lambda_max {
        for sign in [Sign::Plus, Sign::Minus] {
            let v = ctx.check(lambda, sign, depth)?;
            used_depth = v.depth;
            let certificate = (v.verdict == Verdict::Nonflat).then(|| v.certificate.clone());
            rows.push(VerdictRow {
                spec: spec.name.clone(),
                lambda,
                sign,
                flatness: v.verdict,
                locality,
                z_row0: z_row0.clone(),
                flat_part_target: target.clone(),
                certificate,
            });
        }
    }
    let verdict = if rows.iter().all(|r| r.flatness == Verdict::Flat) { Verdict::Flat } else { Verdict::Nonflat };
    let mut max_biunitarity = ghj_cells(spec)?.check_biunitarity()?.max();
    for lambda in 0..=lambda_max as usize {
        for sign in [Sign::Plus, Sign::Minus] {
            max_biunitarity = max_biunitarity.max(ctx.family.get(lambda, sign).check_biunitarity()?.max());
        }
    }
    let (ds, dt) = ctx.z.modular_defects(&spec.category()?);
    let zs = [&ctx.z, &ctx.z_plus, &ctx.z_minus];
    let residuals = ResidualSummary {
        max_biunitarity,
        max_modular_defect: ds.max(dt),
        max_null_singular_value: zs.iter().map(|z| z.max_null).fold(0.0, f64::max),
        min_nonnull_singular_value: zs.iter().map(|z| z.min_gap).fold(f64::INFINITY, f64::min),
    };
    let summary = SpecSummary {
        spec: spec.name.clone(),
        level: spec.level,
        theta: spec.theta.clone(),
        locality,
        locality_source,
        verdict,
        theta_plus,
        lambda_max,
        depth: used_depth,
    };
    Ok(SpecReport { summary, rows, residuals })
}

pub fn build_report(
    specs: &[(QSystemSpec, u32)],
    depth: Option<usize>,
    tol: RankTolerances,
    cache: &Cache,
) -> Result<ReportDocument, CliError> {
    let parts: Vec<SpecReport> = specs
        .par_iter()
        .map(|(spec, lambda_max)| {
            let key = key_for("report", &(spec, lambda_max, depth, tol))?;
            cache.get_or_compute(&key, || spec_report(spec, *lambda_max, depth, tol))
        })
        .collect::<Result<_, _>>()?;
    let mut residuals = ResidualSummary { min_nonnull_singular_value: f64::INFINITY, ..Default::default() };
    let mut summaries = Vec::new();
    let mut verdicts = Vec::new();
    for p in parts {
        residuals.max_biunitarity = residuals.max_biunitarity.max(p.residuals.max_biunitarity);
        residuals.max_modular_defect = residuals.max_modular_defect.max(p.residuals.max_modular_defect);
        residuals.max_null_singular_value = residuals.max_null_singular_value.max(p.residuals.max_null_singular_value);
        residuals.min_nonnull_singular_value = residuals.min_nonnull_singular_value.min(p.residuals.min_nonnull_singular_value);
        summaries.push(p.summary);
        verdicts.extend(p.rows);
    }
    canonical_order(&mut verdicts);
    Ok(ReportDocument {
        schema: REPORT_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        specs: specs.iter().map(|(s, _)| s.name.clone()).collect(),
        summaries,
        verdicts,
        residuals,
    })
}

/// Series, then index, then label, then sign.
pub fn canonical_order(rows: &mut [VerdictRow]) {
    let rank = |name: &str| {
        let (series, index) = name.split_at(1);
        (series.to_string(), index.parse::<u32>().unwrap_or(u32::MAX))
    };
    rows.sort_by(|a, b| (rank(&a.spec), a.lambda, a.sign).cmp(&(rank(&b.spec), b.lambda, b.sign)));
}

/// Compares the verdict table with a golden one at the JSON level. Returns
/// the first differing row, if any.
pub fn golden_mismatch(verdicts: &[VerdictRow], golden: &[VerdictRow]) -> Result<Option<String>, CliError> {
    let mut want = golden.to_vec();
    canonical_order(&mut want);
    let mut got = verdicts.to_vec();
    canonical_order(&mut got);
    let want: Vec<serde_json::Value> = want.iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
    let got: Vec<serde_json::Value> = got.iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
    if want.len() != got.len() {
        return Ok(Some(format!("{} rows, golden has {}", got.len(), want.len())));
    }
    Ok(want.iter().zip(&got).find(|(w, g)| w != g).map(|(w, g)| format!("got {g}, golden {w}")))
}
