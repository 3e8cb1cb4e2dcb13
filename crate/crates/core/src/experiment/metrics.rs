use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Offline,
    Online,
}

/// One evaluation point. `step` counts gradient steps, `transitions` counts
/// environment transitions collected online; both are reported because
/// neither is a proxy for the other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub transitions: u64,
    pub phase: Phase,
    pub success_rate: f64,
    /// Empty unless timing was requested.
    pub action_select_ms: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Usage(format!("metrics csv: {other:?}")),
    }
}

/// Transitions count of the first record whose trailing mean success over
/// the last `window` records (fewer at the start) reaches `threshold`.
pub fn transitions_to_threshold(records: &[MetricsRecord], threshold: f64, window: usize) -> Option<u64> {
    let window = window.max(1);
    (0..records.len()).find_map(|i| {
        let lo = (i + 1).saturating_sub(window);
        let slice = &records[lo..=i];
        let mean = slice.iter().map(|r| r.success_rate).sum::<f64>() / slice.len() as f64;
        (mean >= threshold).then_some(records[i].transitions)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(success_rate: f64, transitions: u64) -> MetricsRecord {
        MetricsRecord {
            step: transitions / 10,
            transitions,
            phase: Phase::Online,
            success_rate,
            action_select_ms: None,
        }
    }

    #[test]
    fn threshold_examples() {
        let rs = vec![rec(0.1, 100), rec(0.5, 200), rec(0.9, 300)];
        assert_eq!(transitions_to_threshold(&rs, 0.45, 3), Some(300));
        assert_eq!(transitions_to_threshold(&rs, 0.0, 3), Some(100));
        assert_eq!(transitions_to_threshold(&rs, 0.95, 3), None);
        assert_eq!(transitions_to_threshold(&rs, 0.5, 1), Some(200));
        assert_eq!(transitions_to_threshold(&[], 0.0, 3), None);
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(
            (0u64..1_000_000, 0u64..1_000_000, any::<bool>(), 0.0f64..=1.0, proptest::option::of(0.0f64..1e3)), 0..20)
        ) {
            let records: Vec<MetricsRecord> = rows
                .into_iter()
                .map(|(step, transitions, online, success_rate, ms)| MetricsRecord {
                    step,
                    transitions,
                    phase: if online { Phase::Online } else { Phase::Offline },
                    success_rate,
                    action_select_ms: ms,
                })
                .collect();
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &records).unwrap();
            prop_assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), records);
        }
    }
}
