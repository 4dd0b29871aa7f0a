//! Detection-error trade-off evaluation: threshold sweeps over scored
//! segments, false rejects per positive against false alarms per hour of
//! negative audio, CSV exchange and a multi-curve SVG plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A scored test segment. `positive` marks segments that contain the
/// keyword; `duration_seconds` is used to convert negative counts into a
/// per-hour false-alarm rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub score: f64,
    pub positive: bool,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    /// Fraction of positives scoring below the threshold.
    pub fr: f64,
    /// Negatives at or above the threshold, per hour of negative audio.
    pub fa_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
    pub num_positives: usize,
    pub num_negatives: usize,
    pub negative_hours: f64,
}

/// Total duration of the negative segments, in hours.
pub fn negative_hours(segments: &[Segment]) -> f64 {
    segments
        .iter()
        .filter(|s| !s.positive)
        .map(|s| s.duration_seconds)
        .sum::<f64>()
        / 3600.0
}

fn validate(segments: &[Segment]) -> Result<(usize, usize, f64)> {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for s in segments {
        if !s.score.is_finite() && s.score.is_nan() {
            return Err(Error::Numeric(format!("{}: score is NaN", s.id)));
        }
        if !(s.duration_seconds > 0.0) || !s.duration_seconds.is_finite() {
            return Err(Error::Data(format!(
                "{}: duration must be positive, got {}",
                s.id, s.duration_seconds
            )));
        }
        if s.positive {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 {
        return Err(Error::Data("no positive segments to evaluate".into()));
    }
    if neg == 0 {
        return Err(Error::Data("no negative segments to evaluate".into()));
    }
    let hours = negative_hours(segments);
    if !(hours > 0.0) {
        return Err(Error::Data("negative segments carry zero duration".into()));
    }
    Ok((pos, neg, hours))
}

/// Rates at one fixed threshold. A segment is accepted iff `score >= threshold`;
/// ties land on the accept side.
pub fn rates_at_threshold(segments: &[Segment], threshold: f64) -> Result<(f64, f64)> {
    let (pos, _, hours) = validate(segments)?;
    let mut pos_rejected = 0usize;
    let mut neg_accepted = 0usize;
    for s in segments {
        if s.positive && s.score < threshold {
            pos_rejected += 1;
        }
        if !s.positive && s.score >= threshold {
            neg_accepted += 1;
        }
    }
    Ok((pos_rejected as f64 / pos as f64, neg_accepted as f64 / hours))
}

/// Full threshold sweep: one point per distinct score, plus the two
/// endpoints. Thresholds come out strictly decreasing, so FR is
/// non-increasing and FA is non-decreasing along the curve.
pub fn det_curve(segments: &[Segment]) -> Result<DetCurve> {
    let (num_positives, num_negatives, hours) = validate(segments)?;

    let mut scored: Vec<(f64, bool)> = segments.iter().map(|s| (s.score, s.positive)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores validated finite or inf"));

    let mut points = Vec::with_capacity(scored.len() + 2);
    // Above every score: nothing accepted.
    points.push(DetPoint {
        threshold: f64::INFINITY,
        fr: 1.0,
        fa_per_hour: 0.0,
    });

    let mut pos_accepted = 0usize;
    let mut neg_accepted = 0usize;
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        // Consume the whole tie group; ties are accepted together.
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                pos_accepted += 1;
            } else {
                neg_accepted += 1;
            }
            i += 1;
        }
        points.push(DetPoint {
            threshold,
            fr: (num_positives - pos_accepted) as f64 / num_positives as f64,
            fa_per_hour: neg_accepted as f64 / hours,
        });
    }

    if points.last().map(|p| p.threshold) != Some(f64::NEG_INFINITY) {
        points.push(DetPoint {
            threshold: f64::NEG_INFINITY,
            fr: 0.0,
            fa_per_hour: num_negatives as f64 / hours,
        });
    }

    Ok(DetCurve {
        points,
        num_positives,
        num_negatives,
        negative_hours: hours,
    })
}

/// Smallest false-reject rate among operating points with a false-alarm
/// rate at or under `fa_target`; `+inf` when no point qualifies.
pub fn fr_at_fa(curve: &DetCurve, fa_target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.fa_per_hour <= fa_target)
        .map(|p| p.fr)
        .fold(f64::INFINITY, f64::min)
}

/// Curve as CSV. `inf`/`-inf` thresholds round-trip through Rust float
/// parsing.
pub fn write_curve_csv(path: &Path, curve: &DetCurve) -> Result<()> {
    let mut out = String::from("threshold,fr,fa_per_hour\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fr, p.fa_per_hour);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Scored segments from CSV with header `id,score,label,duration_s` where
/// label is `positive` or `negative`.
pub fn read_segments_csv(path: &Path) -> Result<Vec<Segment>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["id", "score", "label", "duration_s"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Data(format!(
            "{}: header must be id,score,label,duration_s",
            path.display()
        )));
    }
    let mut segments = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let context = |what: &str| format!("{} record {}: {what}", path.display(), line + 1);
        let score: f64 = record[1]
            .parse()
            .map_err(|_| Error::Data(context("bad score")))?;
        let positive = match &record[2] {
            "positive" => true,
            "negative" => false,
            other => {
                return Err(Error::Data(context(&format!(
                    "label must be positive or negative, got {other:?}"
                ))))
            }
        };
        let duration_seconds: f64 = record[3]
            .parse()
            .map_err(|_| Error::Data(context("bad duration")))?;
        segments.push(Segment {
            id: record[0].to_string(),
            score,
            positive,
            duration_seconds,
        });
    }
    if segments.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no segments",
            path.display()
        )));
    }
    Ok(segments)
}

/// Named curves for the SVG plot, styled in a fixed palette order.
pub const CURVE_COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#e0a800", "#9467bd", "#2ca02c"];

/// Multi-curve DET plot: false alarms per hour on a log x axis, false
/// reject fraction on a linear y axis. Zero-FA points are clamped to the
/// left edge so the endpoint at threshold `+inf` stays visible.
pub fn write_det_svg(path: &Path, curves: &[(String, DetCurve)]) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("no curves to plot".into()));
    }
    let (width, height) = (860.0, 560.0);
    let (left, right, top, bottom) = (70.0, 220.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    // Log x range spanning every finite positive FA value, padded to decades.
    let mut fa_min = f64::INFINITY;
    let mut fa_max = f64::NEG_INFINITY;
    for (_, curve) in curves {
        for p in &curve.points {
            if p.fa_per_hour > 0.0 {
                fa_min = fa_min.min(p.fa_per_hour);
                fa_max = fa_max.max(p.fa_per_hour);
            }
        }
    }
    if !fa_min.is_finite() {
        fa_min = 0.1;
        fa_max = 10.0;
    }
    let x_lo = fa_min.log10().floor();
    let x_hi = fa_max.log10().ceil().max(x_lo + 1.0);
    let x_of = |fa: f64| {
        let l = if fa > 0.0 { fa.log10().max(x_lo) } else { x_lo };
        left + (l - x_lo) / (x_hi - x_lo) * plot_w
    };
    let y_of = |fr: f64| top + (1.0 - fr.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );

    // Gridlines and labels: decades on x, 0.2 steps on y.
    let mut decade = x_lo as i64;
    while decade <= x_hi as i64 {
        let x = x_of(10f64.powi(decade as i32));
        let _ = write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{top}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            top + plot_h,
            top + plot_h + 20.0,
            10f64.powi(decade as i32)
        );
        decade += 1;
    }
    for i in 0..=5 {
        let fr = i as f64 / 5.0;
        let y = y_of(fr);
        let _ = write!(
            svg,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{fr:.1}</text>\n",
            left + plot_w,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">false alarms per hour</text>\n\
         <text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">false reject rate</text>\n",
        left + plot_w / 2.0,
        height - 12.0,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = CURVE_COLORS[i % CURVE_COLORS.len()];
        let mut pts = String::new();
        for p in &curve.points {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(p.fa_per_hour), y_of(p.fr));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.trim_end()
        );
        let ly = top + 16.0 + i as f64 * 20.0;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{name}</text>\n",
            left + plot_w + 12.0,
            left + plot_w + 40.0,
            left + plot_w + 46.0,
            ly + 4.0
        );
    }

    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}
