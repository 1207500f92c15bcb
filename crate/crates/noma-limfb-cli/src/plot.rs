//! Plot-ready series files derived from sweep summaries.
//!
//! Each fixed-codebook-budget curve becomes one whitespace-separated file
//! with columns `B value ci`, directly loadable by common plotting tools.
//! Sum-rate sweeps also get one constant full-CSI reference series.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use noma_limfb::error::{Error, Result};
use noma_limfb::harness::CellReport;
use noma_limfb::textfmt::g6;

fn series(header: &str, points: &[(u32, f64, f64)]) -> String {
    let mut out = format!("# {header}\n");
    for &(b, value, ci) in points {
        out.push_str(&format!("{b} {} {}\n", g6(value), g6(ci)));
    }
    out
}

/// Write one rate-loss and one sum-rate series per codebook budget, plus
/// the full-CSI reference, into `dir`. Returns the file names written.
pub fn emit_plot_data(rows: &[CellReport], dir: &Path) -> Result<Vec<String>> {
    if rows.is_empty() {
        return Err(Error::Config("no summary rows to plot".into()));
    }
    let mut by_bp: BTreeMap<u32, Vec<&CellReport>> = BTreeMap::new();
    for row in rows {
        by_bp.entry(row.codebook_bits).or_default().push(row);
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut save = |name: String, text: String| -> Result<()> {
        fs::write(dir.join(&name), text)?;
        written.push(name);
        Ok(())
    };
    for (bp, group) in &by_bp {
        let mut group = group.clone();
        group.sort_by_key(|r| r.cqi_bits);
        let loss: Vec<_> =
            group.iter().map(|r| (r.cqi_bits, r.mean_rate_loss, r.ci_rate_loss)).collect();
        let lf: Vec<_> =
            group.iter().map(|r| (r.cqi_bits, r.mean_sum_rate_lf, r.ci_sum_rate_lf)).collect();
        save(format!("rate_loss_bp{bp}.dat"), series("B mean_rate_loss ci95", &loss))?;
        save(format!("sum_rate_bp{bp}.dat"), series("B mean_sum_rate_lf ci95", &lf))?;
    }
    // The full-CSI curve ignores feedback budgets; one series from the
    // first group serves as the reference for every sum-rate curve.
    let first = by_bp.values().next().expect("nonempty map");
    let mut first = first.clone();
    first.sort_by_key(|r| r.cqi_bits);
    let full: Vec<_> =
        first.iter().map(|r| (r.cqi_bits, r.mean_sum_rate_full, r.ci_sum_rate_full)).collect();
    save("sum_rate_full.dat".into(), series("B mean_sum_rate_full ci95", &full))?;
    Ok(written)
}
