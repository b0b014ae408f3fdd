//! Shared hazard benchmarks and per-system scoring.

use std::collections::BTreeMap;
use std::path::Path;

use gridres_surrogate::SurrogateModel;

use crate::EvalError;

/// One hazard event: an hourly feature sequence, no system attached.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEvent {
    /// `group/id` from the source file, kept for reporting.
    pub label: String,
    pub sequence: Vec<Vec<f64>>,
}

/// A fixed set of hazard events every system is scored against.
///
/// Comparing systems is only meaningful when they face the same weather, so
/// the benchmark is loaded once and reused verbatim for each system.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSet {
    pub events: Vec<BenchmarkEvent>,
    pub input_dim: usize,
    pub source: String,
}

pub(crate) use gridres_core::system_id_order as numeric_aware;

impl BenchmarkSet {
    /// Load events from a weather CSV.
    ///
    /// Accepts either header flavor: `area_id,episode_id,hour,<features...>`
    /// (simulated episodes) or `system_id,event_id,hour,<features...>`
    /// (historical events). Rows group by the first two columns; hours within
    /// an event must be unique and every row must carry the same feature
    /// count. The grouping columns only name events here — the weather is
    /// applied to every system regardless of where it was recorded.
    pub fn from_csv(path: &Path) -> Result<Self, EvalError> {
        let display = path.display().to_string();
        let bad = |line: usize, message: String| EvalError::BadBenchmark {
            path: display.clone(),
            line,
            message,
        };
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
        let id_ok = headers.len() >= 4
            && ((headers[0] == "area_id" && headers[1] == "episode_id")
                || (headers[0] == "system_id" && headers[1] == "event_id"))
            && headers[2] == "hour";
        if !id_ok {
            return Err(bad(
                1,
                "header must start with area_id,episode_id,hour or system_id,event_id,hour \
                 followed by at least one feature column"
                    .into(),
            ));
        }
        let input_dim = headers.len() - 3;

        let mut grouped: BTreeMap<(String, u64), Vec<(u64, Vec<f64>)>> = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record?;
            if record.len() != headers.len() {
                return Err(bad(
                    line,
                    format!("expected {} fields, got {}", headers.len(), record.len()),
                ));
            }
            let group = record[0].to_string();
            let id: u64 = record[1]
                .trim()
                .parse()
                .map_err(|_| bad(line, format!("bad {}: {:?}", headers[1], &record[1])))?;
            let hour: u64 = record[2]
                .trim()
                .parse()
                .map_err(|_| bad(line, format!("bad hour: {:?}", &record[2])))?;
            let mut features = Vec::with_capacity(input_dim);
            for j in 0..input_dim {
                let raw = &record[j + 3];
                let value: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| bad(line, format!("bad {}: {raw:?}", headers[j + 3])))?;
                if !value.is_finite() {
                    return Err(bad(line, format!("non-finite {}: {value}", headers[j + 3])));
                }
                features.push(value);
            }
            grouped.entry((group, id)).or_default().push((hour, features));
        }
        if grouped.is_empty() {
            return Err(EvalError::EmptyBenchmark);
        }

        let mut keys: Vec<(String, u64)> = grouped.keys().cloned().collect();
        keys.sort_by(|a, b| numeric_aware(&a.0, &b.0).then(a.1.cmp(&b.1)));

        let mut events = Vec::with_capacity(keys.len());
        for key in keys {
            let mut rows = grouped.remove(&key).expect("key came from the map");
            rows.sort_by_key(|(hour, _)| *hour);
            for pair in rows.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(bad(
                        0,
                        format!("duplicate hour {} in event {}/{}", pair[0].0, key.0, key.1),
                    ));
                }
            }
            events.push(BenchmarkEvent {
                label: format!("{}/{}", key.0, key.1),
                sequence: rows.into_iter().map(|(_, f)| f).collect(),
            });
        }
        Ok(Self {
            events,
            input_dim,
            source: display,
        })
    }
}

/// Per-system outcome on the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemEvaluation {
    pub system_id: String,
    /// Mean of the per-event predictions (the unweighted score R_u).
    pub ru: f64,
    /// One predicted score per benchmark event, in benchmark order.
    pub per_event: Vec<f64>,
}

/// Everything a report needs; events stay in `benchmark` order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEvaluation {
    pub event_labels: Vec<String>,
    pub per_system: Vec<SystemEvaluation>,
}

/// Run every requested system over every benchmark event.
pub fn evaluate_benchmark(
    model: &SurrogateModel,
    systems: &[String],
    benchmark: &BenchmarkSet,
) -> Result<BenchmarkEvaluation, EvalError> {
    if systems.is_empty() {
        return Err(EvalError::NoSystems);
    }
    if benchmark.events.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let mut per_system = Vec::with_capacity(systems.len());
    for system_id in systems {
        let mut per_event = Vec::with_capacity(benchmark.events.len());
        for event in &benchmark.events {
            per_event.push(model.predict(&event.sequence, system_id)?);
        }
        let ru = per_event.iter().sum::<f64>() / per_event.len() as f64;
        per_system.push(SystemEvaluation {
            system_id: system_id.clone(),
            ru,
            per_event,
        });
    }
    Ok(BenchmarkEvaluation {
        event_labels: benchmark.events.iter().map(|e| e.label.clone()).collect(),
        per_system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridres_core::RngStream;
    use gridres_surrogate::{Params, SurrogateConfig};
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(contents.as_bytes()).expect("write");
        file
    }

    fn tiny_model() -> SurrogateModel {
        let config = SurrogateConfig {
            gru_hidden: 3,
            gru_layers: 1,
            mlp_layers: 1,
            gru_dropout: 0.0,
            mlp_dropout: 0.0,
            learning_rate: 0.01,
            weight_decay: 0.0,
            epochs: 1,
            batch_size: 4,
            input_dim: 2,
            n_systems: 2,
        };
        let params = Params::init(&config, RngStream::new(7, 0));
        let norm = gridres_surrogate::NormStats::identity(2);
        SurrogateModel::new(config, params, norm, vec!["a".into(), "b".into()]).expect("model")
    }

    #[test]
    fn loads_episode_flavor_and_sorts_numerically() {
        let file = write_csv(
            "area_id,episode_id,hour,w01,w02\n\
             10,0,0,1.0,2.0\n\
             10,0,1,1.5,2.5\n\
             2,3,0,0.5,0.25\n\
             2,3,1,0.75,0.5\n",
        );
        let set = BenchmarkSet::from_csv(file.path()).expect("load");
        assert_eq!(set.input_dim, 2);
        let labels: Vec<&str> = set.events.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["2/3", "10/0"]);
        assert_eq!(set.events[0].sequence, vec![vec![0.5, 0.25], vec![0.75, 0.5]]);
    }

    #[test]
    fn loads_event_flavor_with_unsorted_hours() {
        let file = write_csv(
            "system_id,event_id,hour,v01\n\
             s1,0,2,3.0\n\
             s1,0,0,1.0\n\
             s1,0,1,2.0\n",
        );
        let set = BenchmarkSet::from_csv(file.path()).expect("load");
        assert_eq!(set.events[0].sequence, vec![vec![1.0], vec![2.0], vec![3.0]]);
    }

    #[test]
    fn rejects_duplicate_hours() {
        let file = write_csv(
            "system_id,event_id,hour,v01\n\
             s1,0,1,1.0\n\
             s1,0,1,2.0\n",
        );
        let err = BenchmarkSet::from_csv(file.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate hour"), "{err}");
    }

    #[test]
    fn rejects_wrong_header() {
        let file = write_csv("foo,bar,hour,v01\nx,0,0,1.0\n");
        let err = BenchmarkSet::from_csv(file.path()).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn rejects_empty_file() {
        let file = write_csv("system_id,event_id,hour,v01\n");
        assert!(matches!(
            BenchmarkSet::from_csv(file.path()),
            Err(EvalError::EmptyBenchmark)
        ));
    }

    #[test]
    fn ru_is_mean_of_per_event_predictions() {
        let model = tiny_model();
        let benchmark = BenchmarkSet {
            events: vec![
                BenchmarkEvent {
                    label: "e/0".into(),
                    sequence: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
                },
                BenchmarkEvent {
                    label: "e/1".into(),
                    sequence: vec![vec![0.9, 0.8]],
                },
            ],
            input_dim: 2,
            source: "inline".into(),
        };
        let systems = vec!["a".to_string(), "b".to_string()];
        let eval = evaluate_benchmark(&model, &systems, &benchmark).expect("evaluate");
        assert_eq!(eval.per_system.len(), 2);
        for system in &eval.per_system {
            assert_eq!(system.per_event.len(), 2);
            let mean = system.per_event.iter().sum::<f64>() / 2.0;
            assert!((system.ru - mean).abs() < 1e-15);
            for &p in &system.per_event {
                assert!((0.0..=1.0).contains(&p));
            }
        }
        // Different one-hot inputs must reach the decoder.
        assert_ne!(eval.per_system[0].ru, eval.per_system[1].ru);
    }

    #[test]
    fn unknown_system_is_an_error() {
        let model = tiny_model();
        let benchmark = BenchmarkSet {
            events: vec![BenchmarkEvent {
                label: "e/0".into(),
                sequence: vec![vec![0.0, 0.0]],
            }],
            input_dim: 2,
            source: "inline".into(),
        };
        let systems = vec!["zz".to_string()];
        assert!(evaluate_benchmark(&model, &systems, &benchmark).is_err());
    }
}
