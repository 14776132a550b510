//! CSV and SVG output for study results, and landmark file input.

use super::{HarnessError, StudyResult, StudyRow};
use nalgebra::Point2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "sweep,yaw_mae,pitch_mae,roll_mae,mae,trials";

/// One line per row under [`CSV_HEADER`]. Values use the shortest
/// round-trip decimal form; invalid cells print as `NaN`.
pub fn format_csv(result: &StudyResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.sweep, r.yaw_mae, r.pitch_mae, r.roll_mae, r.mae, r.trials
        );
    }
    s
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_csv_at(text: &str, path: &Path) -> Result<StudyResult, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(parse_error(path, 1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(parse_error(path, i + 1, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| parse_error(path, i + 1, format!("invalid number {s:?}")))
        };
        let trials: usize = f[5]
            .parse()
            .map_err(|_| parse_error(path, i + 1, format!("invalid count {:?}", f[5])))?;
        rows.push(StudyRow {
            sweep: num(f[0])?,
            yaw_mae: num(f[1])?,
            pitch_mae: num(f[2])?,
            roll_mae: num(f[3])?,
            mae: num(f[4])?,
            trials,
            failed: 0,
        });
    }
    Ok(StudyResult { rows })
}

/// Parses [`format_csv`] output. The excluded-trial count is not stored and
/// reads back as zero.
pub fn parse_csv(text: &str) -> Result<StudyResult, HarnessError> {
    parse_csv_at(text, Path::new("<csv>"))
}

fn io_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_csv(path: &Path) -> Result<StudyResult, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_csv_at(&text, path)
}

pub fn emit_csv(result: &StudyResult, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, format_csv(result)).map_err(|e| io_error(path, e))
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // not representable in XML 1.0
            c if (c.is_control() && !matches!(c, '\t' | '\n' | '\r')) || matches!(c, '\u{FFFE}' | '\u{FFFF}') => {}
            c => out.push(c),
        }
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Line chart of per-angle MAE against the sweep value: one polyline each
/// for yaw, pitch and roll. Non-finite cells are left out.
pub fn format_svg(title: &str, result: &StudyResult) -> String {
    let curves: [(&str, &str, fn(&StudyRow) -> f64); 3] = [
        ("yaw", "#1f77b4", |r| r.yaw_mae),
        ("pitch", "#ff7f0e", |r| r.pitch_mae),
        ("roll", "#2ca02c", |r| r.roll_mae),
    ];
    let finite: Vec<&StudyRow> = result.rows.iter().filter(|r| r.sweep.is_finite()).collect();
    let (x0, x1) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.sweep), b.max(r.sweep)));
    let y1 = finite
        .iter()
        .flat_map(|r| curves.iter().map(move |(_, _, f)| f(r)))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let (x0, x1) = if x0.is_finite() && x1 > x0 { (x0, x1) } else { (x0.min(0.0), x0.max(0.0) + 1.0) };
    let y1 = if y1 > 0.0 { y1 * 1.05 } else { 1.0 };
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - y / y1 * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        SVG_W / 2.0,
        escape_xml(title)
    );
    let (left, right, top, bottom) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for (x, label) in [(left, x0), (right, x1)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            bottom + 18.0,
            fmt_tick(label)
        );
    }
    for (y, label) in [(bottom, 0.0), (top, y1)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="12">{}</text>"#,
            left - 6.0,
            y + 4.0,
            fmt_tick(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">MAE (deg)</text>"#,
        left,
        top - 10.0
    );
    for (i, (name, color, f)) in curves.iter().enumerate() {
        let pts: Vec<String> = finite
            .iter()
            .filter(|r| f(r).is_finite())
            .map(|r| format!("{:.2},{:.2}", px(r.sweep), py(f(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"#,
            right - 40.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    format!("{r}")
}

pub fn emit_svg(title: &str, result: &StudyResult, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, format_svg(title, result)).map_err(|e| io_error(path, e))
}

/// Parses `id u v` lines (1-based landmark ids, pixel coordinates). Blank
/// lines and text after `#` are ignored. Ids must be unique.
pub fn parse_landmarks(text: &str) -> Result<Vec<(usize, Point2<f64>)>, HarnessError> {
    parse_landmarks_at(text, Path::new("<landmarks>"))
}

fn parse_landmarks_at(text: &str, path: &Path) -> Result<Vec<(usize, Point2<f64>)>, HarnessError> {
    let mut out: Vec<(usize, Point2<f64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_error(path, i + 1, "expected `id u v`"));
        }
        let id: usize = f[0]
            .parse()
            .map_err(|_| parse_error(path, i + 1, format!("invalid id {:?}", f[0])))?;
        if !(1..=crate::facemodel::NUM_LANDMARKS).contains(&id) {
            return Err(parse_error(path, i + 1, format!("id {id} out of range")));
        }
        if out.iter().any(|(j, _)| *j == id) {
            return Err(parse_error(path, i + 1, format!("duplicate id {id}")));
        }
        let coord = |s: &str| -> Result<f64, HarnessError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, i + 1, format!("invalid coordinate {s:?}")))
        };
        let u = coord(f[1])?;
        let v = coord(f[2])?;
        out.push((id, Point2::new(u, v)));
    }
    Ok(out)
}

pub fn read_landmarks(path: &Path) -> Result<Vec<(usize, Point2<f64>)>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_landmarks_at(&text, &PathBuf::from(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StudyResult {
        StudyResult {
            rows: vec![
                StudyRow::from_maes(0.0, [0.1, 0.2, 0.30000000000000004], 10, 0),
                StudyRow::from_maes(2.5, [1.0 / 3.0, 2.0, 1e-12], 9, 1),
                StudyRow::invalid(5.0, 10),
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let text = format_csv(&sample());
        assert!(text.starts_with("sweep,yaw_mae,pitch_mae,roll_mae,mae,trials\n0,0.1,0.2,"));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 3);
        for (a, b) in back.rows.iter().zip(&sample().rows) {
            assert_eq!(a.sweep, b.sweep);
            assert_eq!(a.trials, b.trials);
            for (x, y) in [(a.yaw_mae, b.yaw_mae), (a.mae, b.mae)] {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        assert_eq!(format_csv(&back), text);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
        let err = parse_csv(&format!("{CSV_HEADER}\n1,2,3,4,x,5\n")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }));
    }

    #[test]
    fn svg_contains_three_polylines() {
        let svg = format_svg("jitter <all-68> & co", &sample());
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("&lt;all-68&gt; &amp; co"));
        // empty results still render
        assert!(format_svg("empty", &StudyResult::default()).ends_with("</svg>\n"));
    }

    #[test]
    fn landmark_parsing() {
        let pts = parse_landmarks("# header\n1 10.5 20\n\n34 1e2 -3 # nose\n").unwrap();
        assert_eq!(pts, vec![(1, Point2::new(10.5, 20.0)), (34, Point2::new(100.0, -3.0))]);
        assert!(parse_landmarks("1 2\n").is_err());
        assert!(parse_landmarks("69 1 2\n").is_err());
        assert!(parse_landmarks("3 1 2\n3 4 5\n").is_err());
        assert!(parse_landmarks("3 1 NaN\n").is_err());
    }
}
