//! Self-contained SVG histograms of the trait score distributions.
//!
//! Output is plain text with fixed numeric formatting, so identical input
//! produces byte-identical files.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::personality::{trait_distribution, PersonalityTable, TraitSummary};
use crate::{Error, Result};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 48.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 40.0;

/// One histogram with a red vertical line at the median.
pub fn histogram_svg(summary: &TraitSummary) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |score: f64| MARGIN_LEFT + plot_w * score / 100.0;
    let y_base = MARGIN_TOP + plot_h;
    let peak = summary.histogram.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = plot_w / summary.histogram.len() as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{} (n={})</text>"#,
        WIDTH / 2.0,
        summary.trait_.name(),
        summary.count
    );
    for (b, &count) in summary.histogram.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let h = plot_h * count as f64 / peak;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="white" stroke-width="0.5"><title>{:.1}-{:.1}: {count}</title></rect>"#,
            MARGIN_LEFT + b as f64 * bar_w,
            y_base - h,
            bar_w,
            h,
            b as f64 * summary.bin_width(),
            (b + 1) as f64 * summary.bin_width(),
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN_LEFT}" y1="{y_base}" x2="{:.1}" y2="{y_base}" stroke="black"/>"#,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{y_base}" stroke="black"/>"#
    );
    for tick in (0..=100).step_by(20) {
        let x = x_of(tick as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y_base}" x2="{x:.2}" y2="{:.1}" stroke="black"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{tick}</text>"#,
            y_base + 4.0,
            y_base + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        MARGIN_LEFT - 4.0,
        MARGIN_TOP + 4.0,
        peak as usize
    );
    let mx = x_of(summary.median);
    let _ = writeln!(
        s,
        r#"<line x1="{mx:.2}" y1="{MARGIN_TOP}" x2="{mx:.2}" y2="{y_base}" stroke="red" stroke-width="2"><title>median {:.2}</title></line>"#,
        summary.median
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.1}" fill="red">median {:.2}</text>"#,
        mx + 4.0,
        MARGIN_TOP + 12.0,
        summary.median
    );
    s.push_str("</svg>\n");
    s
}

/// `trait,count,median,mean`
pub fn write_summary_csv<W: Write>(summaries: &[TraitSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trait", "count", "median", "mean"])?;
    for t in summaries {
        w.write_record([
            t.trait_.name(),
            &t.count.to_string(),
            &format!("{:.6}", t.median),
            &format!("{:.6}", t.mean),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Write `<trait>.svg` for every trait plus `summary.csv` into `dir`.
pub fn write_plots(table: &PersonalityTable, dir: &Path, bins: usize) -> Result<Vec<PathBuf>> {
    let summaries = trait_distribution(table, bins)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for s in &summaries {
        let path = dir.join(format!("{}.svg", s.trait_.name()));
        std::fs::write(&path, histogram_svg(s)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_summary_csv(&summaries, f)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::personality::{OceanScores, Provenance};

    #[test]
    fn single_user_one_bar() {
        let mut t = PersonalityTable::new();
        t.insert("u", OceanScores::new([10.0, 20.0, 55.5, 70.0, 100.0]).unwrap(), Provenance::Imported)
            .unwrap();
        let s = trait_distribution(&t, 20).unwrap();
        let svg = histogram_svg(&s[2]);
        assert_eq!(svg.matches("fill=\"steelblue\"").count(), 1);
        assert!(svg.contains("median 55.50"));
        assert!(svg.contains("stroke=\"red\""));
        assert_eq!(s[4].histogram[19], 1);
    }

    #[test]
    fn plots_are_deterministic() {
        let mut t = PersonalityTable::new();
        for u in 0..30 {
            let v = (u * 3) as f64;
            t.insert(format!("u{u}"), OceanScores::new([v, 90.0 - v, 50.0, v / 2.0, 1.0]).unwrap(), Provenance::Synthetic)
                .unwrap();
        }
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = write_plots(&t, a.path(), 20).unwrap();
        let fb = write_plots(&t, b.path(), 20).unwrap();
        assert_eq!(fa.len(), 6);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        assert!(matches!(write_plots(&PersonalityTable::new(), a.path(), 20), Err(Error::EmptyDataset)));
    }
}
