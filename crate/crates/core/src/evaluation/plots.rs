//! Static SVG histograms of per-result scores.

use std::fmt::Write as _;
use std::path::Path;

use super::metrics::RelativeError;
use super::report::Evaluation;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// Bin counts of `values` over `[lo, hi]` in `bins` equal bins; values
/// outside the range fall into the end bins.
pub fn bin_counts(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins.max(1)];
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    for v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - lo) / span) * counts.len() as f64).floor().clamp(0.0, (counts.len() - 1) as f64) as usize;
        counts[i] += 1;
    }
    counts
}

/// A bar chart of [`bin_counts`] with a title and axis labels.
pub fn histogram_svg(title: &str, x_label: &str, values: &[f64], bins: usize, lo: f64, hi: f64) -> String {
    let counts = bin_counts(values, bins, lo, hi);
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / counts.len() as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for (i, c) in counts.iter().enumerate() {
        let h = plot_h * (*c as f64) / top;
        let x = MARGIN + i as f64 * bar_w;
        let y = MARGIN + plot_h - h;
        let _ = writeln!(s, r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="#4c72b0"><title>{c}</title></rect>"##, bar_w - 1.0);
    }
    let base = MARGIN + plot_h;
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{lo}</text>"#, base + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{hi}</text>"#, WIDTH - MARGIN, base + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#, WIDTH / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="8" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, MARGIN + 4.0, top as usize);
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `relative_error.svg`, `similarity.svg` and `bleu.svg` into `dir`.
pub fn write_plots(evaluation: &Evaluation, dir: impl AsRef<Path>) -> std::io::Result<Vec<String>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let errors: Vec<f64> = evaluation
        .items
        .iter()
        .filter_map(|s| match s.relative_error {
            Some(RelativeError::Percent(p)) => Some(p),
            _ => None,
        })
        .collect();
    let sims: Vec<f64> = evaluation.items.iter().filter_map(|s| s.similarity).collect();
    let bleus: Vec<f64> = evaluation.items.iter().filter_map(|s| s.bleu).collect();
    let upper = evaluation.report.outlier_pct;
    let files = [
        ("relative_error.svg", histogram_svg("Relative error of number answers", "relative error (%)", &errors, 20, 0.0, upper)),
        ("similarity.svg", histogram_svg("Similarity of text answers", "cosine similarity", &sims, 20, -1.0, 1.0)),
        ("bleu.svg", histogram_svg("BLEU of text answers", "BLEU", &bleus, 20, 0.0, 1.0)),
    ];
    let mut written = Vec::new();
    for (name, svg) in files {
        std::fs::write(dir.join(name), svg)?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_the_range() {
        assert_eq!(bin_counts(&[0.0, 0.49, 0.5, 1.0, 7.0, -3.0], 2, 0.0, 1.0), vec![3, 3]);
        let svg = histogram_svg("a < b", "x", &[0.1, 0.2], 4, 0.0, 1.0);
        assert!(svg.starts_with("<svg") && svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<rect x=").count(), 4);
    }
}
