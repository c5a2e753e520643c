use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{EvalReport, Granularity};
use crate::error::{Error, Result};

/// Text form of a report: header, accuracy table, macro lines, then the
/// confusion matrix (rows are true composers) with row sums.
pub fn render_report(report: &EvalReport) -> Result<String> {
    if report.item_count() == 0 {
        return Err(Error::Data("report has no evaluated items".into()));
    }
    let unit = match report.granularity {
        Granularity::Clip => "clip",
        Granularity::Piece => "piece",
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {unit}-wise evaluation\tclips={}\tpieces={}",
        report.clip_count, report.piece_count
    );
    let _ = writeln!(s, "composer\tcorrect\ttotal\taccuracy");
    for (i, (name, acc)) in report.per_composer_accuracy.iter().enumerate() {
        let total: usize = report.confusion[i].iter().sum();
        let acc = acc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(s, "{name}\t{}\t{total}\t{acc}", report.confusion[i][i]);
    }
    let _ = writeln!(s, "macro_accuracy\t{:.6}", report.macro_accuracy);
    if let Some(p) = report.piece_macro_accuracy {
        let _ = writeln!(s, "piece_macro_accuracy\t{p:.6}");
    }
    let _ = writeln!(s, "micro_accuracy\t{:.6}", report.micro_accuracy);
    let _ = writeln!(s, "# confusion (row = true, column = predicted)");
    let _ = writeln!(s, "true\\pred\t{}\trow_sum", report.composers.join("\t"));
    for (name, row) in report.composers.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{name}\t{}\t{}", cells.join("\t"), row.iter().sum::<usize>());
    }
    Ok(s)
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    let text = render_report(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
