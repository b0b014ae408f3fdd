//! Ranking reports: unweighted vs vulnerability-weighted orderings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use gridres_core::{
    spearman_rho, weighted_resilience, MetricsError, ResilienceScore, SystemProfile,
    VulnerabilityProfile, WeightScheme,
};
use serde::{Deserialize, Serialize};

use crate::benchmark::{numeric_aware, BenchmarkEvaluation};
use crate::EvalError;

/// One system's line in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system_id: String,
    pub ru: f64,
    pub rw: f64,
    /// 1 = most resilient. Ties share a value order, broken by system id.
    pub rank_ru: usize,
    pub rank_rw: usize,
    /// Filled in by the planning step; absent until then.
    pub der_watts: Option<f64>,
    /// Predicted score per benchmark event, in benchmark order.
    pub per_event: Vec<f64>,
}

/// Full ranking report over one benchmark evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub schema_version: u32,
    pub event_labels: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Spearman rho between the Ru and Rw vectors; absent with fewer than
    /// three systems or when either vector is constant.
    pub rho_ru_rw: Option<f64>,
    pub rho_p_value: Option<f64>,
    /// Spearman rho between observed mean scores and predicted Ru, filled
    /// when ground truth is supplied alongside the benchmark.
    pub ground_truth_rho: Option<f64>,
    pub ground_truth_p_value: Option<f64>,
    /// Free-form caveats, e.g. saturation warnings from analytic planning.
    pub notes: Vec<String>,
}

/// Descending ranks, 1-based; ties ordered by system id.
fn ranks_descending(ids: &[String], values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("scores are finite")
            .then_with(|| numeric_aware(&ids[a], &ids[b]))
    });
    let mut ranks = vec![0; ids.len()];
    for (position, &index) in order.iter().enumerate() {
        ranks[index] = position + 1;
    }
    ranks
}

/// Attach weighted scores and both rankings to a benchmark evaluation.
///
/// Every evaluated system must have a row in `profiles`; `lambda` scales the
/// factor sum in the weighting exponent for all systems alike.
pub fn rank_systems(
    evaluation: &BenchmarkEvaluation,
    profiles: &[SystemProfile],
    scheme: &WeightScheme,
    lambda: f64,
) -> Result<ResilienceReport, EvalError> {
    scheme.validate()?;
    let by_id: BTreeMap<&str, &SystemProfile> = profiles
        .iter()
        .map(|p| (p.system_id.as_str(), p))
        .collect();

    let ids: Vec<String> = evaluation
        .per_system
        .iter()
        .map(|s| s.system_id.clone())
        .collect();
    let ru: Vec<f64> = evaluation.per_system.iter().map(|s| s.ru).collect();
    let mut rw = Vec::with_capacity(ru.len());
    for (id, &score) in ids.iter().zip(ru.iter()) {
        let profile = by_id
            .get(id.as_str())
            .ok_or_else(|| EvalError::MissingProfile(id.clone()))?;
        let vulnerability = VulnerabilityProfile::new(profile.factors, lambda)?;
        let weighted =
            weighted_resilience(ResilienceScore::new(score)?, &vulnerability, scheme)?;
        rw.push(weighted.value());
    }

    let rank_ru = ranks_descending(&ids, &ru);
    let rank_rw = ranks_descending(&ids, &rw);

    let (rho_ru_rw, rho_p_value) = match spearman_rho(&ru, &rw) {
        Ok((rho, p)) => (Some(rho), Some(p)),
        Err(MetricsError::TooFewPairs(_)) | Err(MetricsError::ZeroRankVariance { .. }) => {
            (None, None)
        }
        Err(e) => return Err(e.into()),
    };

    let rows = evaluation
        .per_system
        .iter()
        .enumerate()
        .map(|(i, system)| ReportRow {
            system_id: system.system_id.clone(),
            ru: ru[i],
            rw: rw[i],
            rank_ru: rank_ru[i],
            rank_rw: rank_rw[i],
            der_watts: None,
            per_event: system.per_event.clone(),
        })
        .collect();

    Ok(ResilienceReport {
        schema_version: 1,
        event_labels: evaluation.event_labels.clone(),
        rows,
        rho_ru_rw,
        rho_p_value,
        ground_truth_rho: None,
        ground_truth_p_value: None,
        notes: Vec::new(),
    })
}

impl ResilienceReport {
    /// Record planned watts for one system; errors if it is not in the report.
    pub fn set_der_watts(&mut self, system_id: &str, watts: f64) -> Result<(), EvalError> {
        let row = self
            .rows
            .iter_mut()
            .find(|r| r.system_id == system_id)
            .ok_or_else(|| EvalError::MissingProfile(system_id.to_string()))?;
        row.der_watts = Some(watts);
        Ok(())
    }
}

/// Flat summary table: `system_id,ru,rw,rank_ru,rank_rw,der_watts`.
///
/// `der_watts` is empty for systems without a plan. Values use the shortest
/// decimal form that parses back to the same float.
pub fn write_report_csv(report: &ResilienceReport, path: &Path) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "system_id,ru,rw,rank_ru,rank_rw,der_watts")?;
    for row in &report.rows {
        let der = row.der_watts.map(|w| format!("{w}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.system_id, row.ru, row.rw, row.rank_ru, row.rank_rw, der
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Full report, per-event vectors included, as pretty JSON.
pub fn write_report_json(report: &ResilienceReport, path: &Path) -> Result<(), EvalError> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::SystemEvaluation;

    fn evaluation(pairs: &[(&str, f64)]) -> BenchmarkEvaluation {
        BenchmarkEvaluation {
            event_labels: vec!["e/0".into(), "e/1".into()],
            per_system: pairs
                .iter()
                .map(|(id, ru)| SystemEvaluation {
                    system_id: id.to_string(),
                    ru: *ru,
                    per_event: vec![*ru, *ru],
                })
                .collect(),
        }
    }

    fn profile(id: &str, fill: f64) -> SystemProfile {
        SystemProfile {
            system_id: id.to_string(),
            factors: [fill; gridres_core::FACTOR_COUNT],
        }
    }

    const LAMBDA: f64 = 1.0 / 3.0;

    #[test]
    fn zero_factors_leave_rankings_identical() {
        let eval = evaluation(&[("a", 0.9), ("b", 0.5), ("c", 0.7)]);
        let profiles = vec![profile("a", 0.0), profile("b", 0.0), profile("c", 0.0)];
        let report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        for row in &report.rows {
            assert_eq!(row.ru, row.rw);
            assert_eq!(row.rank_ru, row.rank_rw);
        }
        assert_eq!(report.rho_ru_rw, Some(1.0));
        let ranks: Vec<usize> = report.rows.iter().map(|r| r.rank_ru).collect();
        assert_eq!(ranks, [1, 3, 2]);
    }

    #[test]
    fn identical_profiles_preserve_order_under_weighting() {
        // A common exponent is a monotone transform, so the rankings agree.
        let eval = evaluation(&[("a", 0.31), ("b", 0.93), ("c", 0.62), ("d", 0.48)]);
        let profiles: Vec<SystemProfile> =
            ["a", "b", "c", "d"].iter().map(|id| profile(id, 0.4)).collect();
        let report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        for row in &report.rows {
            assert_eq!(row.rank_ru, row.rank_rw, "system {}", row.system_id);
            assert!(row.rw < row.ru, "weighting must shrink scores below 1");
        }
        assert_eq!(report.rho_ru_rw, Some(1.0));
    }

    #[test]
    fn equal_ru_ranks_less_vulnerable_system_higher() {
        let eval = evaluation(&[("fragile", 0.8), ("sturdy", 0.8), ("other", 0.6)]);
        let profiles = vec![
            profile("fragile", 0.8),
            profile("sturdy", 0.1),
            profile("other", 0.1),
        ];
        let report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        let by_id = |id: &str| report.rows.iter().find(|r| r.system_id == id).unwrap();
        // Ru ties break on id: "fragile" < "sturdy".
        assert_eq!(by_id("fragile").rank_ru, 1);
        assert_eq!(by_id("sturdy").rank_ru, 2);
        // The weighted ranking separates them on vulnerability; the heavy
        // factor load even drops "fragile" below the lower-Ru "other".
        assert_eq!(by_id("sturdy").rank_rw, 1);
        assert_eq!(by_id("other").rank_rw, 2);
        assert_eq!(by_id("fragile").rank_rw, 3);
        assert!(by_id("sturdy").rw > by_id("fragile").rw);
    }

    #[test]
    fn rank_invariance_under_common_power() {
        let ids: Vec<String> = ["s1", "s2", "s3", "s4", "s5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let values = [0.12, 0.99, 0.5, 0.77, 0.31];
        let base = ranks_descending(&ids, &values);
        for power in [0.2, 0.5, 1.0, 2.0, 7.5] {
            let transformed: Vec<f64> = values.iter().map(|v| v.powf(power)).collect();
            assert_eq!(ranks_descending(&ids, &transformed), base, "power {power}");
        }
    }

    #[test]
    fn missing_profile_is_an_error() {
        let eval = evaluation(&[("a", 0.9), ("b", 0.5)]);
        let profiles = vec![profile("a", 0.0)];
        let err =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).unwrap_err();
        assert!(matches!(err, EvalError::MissingProfile(ref id) if id == "b"));
    }

    #[test]
    fn two_systems_report_no_rho() {
        let eval = evaluation(&[("a", 0.9), ("b", 0.5)]);
        let profiles = vec![profile("a", 0.1), profile("b", 0.2)];
        let report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        assert_eq!(report.rho_ru_rw, None);
        assert_eq!(report.rho_p_value, None);
    }

    #[test]
    fn csv_layout_is_stable() {
        let eval = evaluation(&[("a", 0.75), ("b", 0.5)]);
        let profiles = vec![profile("a", 0.0), profile("b", 0.0)];
        let mut report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        report.set_der_watts("b", 1234.5).expect("set");
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("report.csv");
        write_report_csv(&report, &path).expect("write");
        let text = std::fs::read_to_string(&path).expect("read");
        assert_eq!(
            text,
            "system_id,ru,rw,rank_ru,rank_rw,der_watts\n\
             a,0.75,0.75,1,1,\n\
             b,0.5,0.5,2,2,1234.5\n"
        );
    }

    #[test]
    fn json_round_trips() {
        let eval = evaluation(&[("a", 0.9), ("b", 0.5), ("c", 0.7)]);
        let profiles = vec![profile("a", 0.3), profile("b", 0.2), profile("c", 0.1)];
        let mut report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        report.notes.push("analytic plan saturated 1 event".into());
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("report.json");
        write_report_json(&report, &path).expect("write");
        let text = std::fs::read_to_string(&path).expect("read");
        let parsed: ResilienceReport = serde_json::from_str(&text).expect("parse");
        assert_eq!(parsed, report);
        assert_eq!(parsed.rows[0].per_event.len(), 2);
    }

    #[test]
    fn unknown_system_in_set_der_watts_errors() {
        let eval = evaluation(&[("a", 0.9), ("b", 0.5), ("c", 0.7)]);
        let profiles = vec![profile("a", 0.0), profile("b", 0.0), profile("c", 0.0)];
        let mut report =
            rank_systems(&eval, &profiles, &WeightScheme::PlainSum, LAMBDA).expect("report");
        assert!(report.set_der_watts("zz", 1.0).is_err());
    }
}
