//! Report files.
//!
//! JSON: `{"provenance": <caller value>, "report": <RetrievalReport>}`.
//!
//! CSV: `#`-prefixed provenance lines, then the header
//! `query_id,top1_id,rank_of_correct` and one row per query.

use serde::Serialize;

use super::RetrievalReport;

pub const REPORT_CSV_HEADER: [&str; 3] = ["query_id", "top1_id", "rank_of_correct"];

#[derive(Serialize)]
struct Envelope<'a> {
    provenance: &'a serde_json::Value,
    report: &'a RetrievalReport,
}

pub fn report_json(report: &RetrievalReport, provenance: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { provenance, report }).expect("report serializes");
    s.push('\n');
    s
}

/// `provenance` lines are written verbatim after a `# ` prefix.
pub fn report_csv(report: &RetrievalReport, provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
    for q in &report.per_query {
        let top1 = q.ranked.first().map(String::as_str).unwrap_or("");
        w.write_record([q.query_id.as_str(), top1, &q.rank_of_correct.to_string()])
            .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 ids"));
    out
}
