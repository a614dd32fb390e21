//! Stacked execution-time breakdown per actor count.
//!
//! Three segments per run: `compute` (everything outside network calls),
//! `experiences` (actor push; learner sample, priority update and mode A
//! drains) and `parameters` (actor pull; learner set). `actor_seconds` is
//! the per-actor mean, so each column sums to that role's wall time.

use std::io::Write;
use std::path::Path;

use super::bench::{create_csv, BenchReport};
use super::HarnessError;

pub const BREAKDOWN_HEADER: [&str; 5] = ["mode", "actor_count", "segment", "actor_seconds", "learner_seconds"];

pub fn emit_breakdown_plot_data<W: Write>(out: W, reports: &[BenchReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BREAKDOWN_HEADER)?;
    for r in reports {
        let mode = r.mode_letter().to_string();
        let actors = r.actor_count.to_string();
        let rows = [
            ("compute", r.actor_compute_s, r.learner_compute_s),
            ("experiences", r.actor_push_s, r.learner_experience_s),
            ("parameters", r.actor_pull_s, r.learner_set_s),
        ];
        for (segment, actor_s, learner_s) in rows {
            w.write_record([
                mode.as_str(),
                actors.as_str(),
                segment,
                &format!("{actor_s:.9}"),
                &format!("{learner_s:.9}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_breakdown_csv(path: &Path, reports: &[BenchReport]) -> Result<(), HarnessError> {
    emit_breakdown_plot_data(create_csv(path)?, reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ServerMode;

    #[test]
    fn empty_report_list_is_header_only() {
        let mut buf = Vec::new();
        emit_breakdown_plot_data(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mode,actor_count,segment,actor_seconds,learner_seconds\n");
    }

    #[test]
    fn three_rows_per_report() {
        let reports: Vec<BenchReport> = [1, 2]
            .into_iter()
            .map(|n| BenchReport {
                mode: Some(ServerMode::ColocatedReplay),
                actor_count: n,
                actor_compute_s: 1.0,
                actor_push_s: 0.5,
                actor_pull_s: 0.25,
                learner_compute_s: 2.0,
                ..BenchReport::default()
            })
            .collect();
        let mut buf = Vec::new();
        emit_breakdown_plot_data(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "B,1,compute,1.000000000,2.000000000");
        assert_eq!(lines[3], "B,1,parameters,0.250000000,0.000000000");
        assert!(lines[4].starts_with("B,2,compute"));
    }
}
