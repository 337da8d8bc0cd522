use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::techniques::{Experiment, TechniqueRun};
use super::PipelineError;
use crate::metrics::{write_report_csv, DistanceReport, Metric, ReportMeta, Summary};

/// One line of a per-window plot; `None` marks a window without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Option<f64>>,
}

pub fn series(runs: &[TechniqueRun], m: Metric) -> Vec<Series> {
    runs.iter().map(|r| Series { label: r.label.clone(), points: r.points(m) }).collect()
}

/// Metric rows by run columns, each cell `mean (std)` over the per-window
/// means; empty when a run has no value for the metric.
pub fn summary_table(runs: &[TechniqueRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("metric").chain(runs.iter().map(|r| r.label.as_str())).collect();
    w.write_record(&header).expect("in-memory write");
    for m in Metric::ALL {
        let row: Vec<String> =
            std::iter::once(m.name().to_string()).chain(runs.iter().map(|r| r.summary(m).map(|s| s.to_string()).unwrap_or_default())).collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Line chart over windows; missing points break the line.
fn svg_plot(title: &str, series: &[Series], first_window: usize) -> String {
    let (width, height, left, right, top, bottom) = (640.0, 360.0, 60.0, 150.0, 30.0, 40.0);
    let n = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    let ymax = series.iter().flat_map(|s| s.points.iter().flatten()).fold(0.0_f64, |a, &b| a.max(b));
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let x = |i: usize| left + if n > 1 { plot_w * i as f64 / (n - 1) as f64 } else { plot_w / 2.0 };
    let y = |v: f64| top + plot_h * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, left - 6.0, y(v) + 4.0);
    }
    for i in 0..n {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, x(i), height - bottom + 16.0, first_window + i);
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="series" data-label="{}" stroke="{color}" fill="{color}">"#, ser.label);
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, s: &mut String| {
            if run.len() > 1 {
                let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
                let _ = writeln!(s, r#"<polyline fill="none" points="{}"/>"#, pts.join(" "));
            }
            for (a, b) in run.iter() {
                let _ = writeln!(s, r#"<circle cx="{a:.2}" cy="{b:.2}" r="2.5"/>"#);
            }
            run.clear();
        };
        for (i, p) in ser.points.iter().enumerate() {
            match p {
                Some(v) => run.push((x(i), y(*v))),
                None => flush(&mut run, &mut s),
            }
        }
        flush(&mut run, &mut s);
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" stroke="none">{}</text>"#, left + plot_w + 12.0, ly + 4.0, ser.label);
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputFiles {
    pub files: Vec<PathBuf>,
}

impl OutputFiles {
    fn write(&mut self, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| PipelineError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

/// Reports of `runs`, each tagged with its run's label.
fn reports_csv(runs: &[TechniqueRun], path: &Path) -> Result<Vec<u8>, PipelineError> {
    let all: Vec<DistanceReport> = runs
        .iter()
        .flat_map(|r| r.reports().map(move |rep| DistanceReport { meta: ReportMeta { technique: r.label.clone(), ..rep.meta.clone() }, ..rep.clone() }))
        .collect();
    let mut buf = Vec::new();
    write_report_csv(&all, &mut buf).map_err(|e| PipelineError::io(path, e))?;
    Ok(buf)
}

fn cells_csv(runs: &[TechniqueRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "run",
        "window",
        "test_cases",
        "skipped",
        "fragments",
        "rejected",
        "repairs",
        "instances",
        "skipped_unalignable",
        "durations_from_gaps",
        "sim_fallbacks",
        "approximate_matching",
        "max_read_ts",
    ])
    .expect("in-memory write");
    for r in runs {
        for c in &r.cells {
            let a = c.advance.clone().unwrap_or_default();
            let fallbacks: usize = c
                .sim_stats
                .iter()
                .map(|s| s.arrival_fallbacks + s.duration_fallbacks + s.branch_fallbacks + s.calendar_fallbacks + s.unassigned + s.loop_caps)
                .sum();
            let approx = c.reports.iter().filter(|r| r.approximate_matching).count();
            w.write_record([
                r.label.clone(),
                c.window.to_string(),
                c.test_cases.to_string(),
                c.skipped.clone().unwrap_or_default(),
                a.fragments.to_string(),
                a.rejected.len().to_string(),
                a.repairs.to_string(),
                a.instances.to_string(),
                a.skipped_unalignable.to_string(),
                a.durations_from_gaps.to_string(),
                fallbacks.to_string(),
                approx.to_string(),
                c.reads.max_ts.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Writes into `dir`:
/// `reports.csv` (every replication and metric), `summary.csv`,
/// `windows.csv`, `cells.csv` (update and simulation counters), `runs.csv`,
/// `plots/<metric>.svg`, and for a grace sweep `sweep_reports.csv`,
/// `sweep_summary.csv` and `plots/sweep/<metric>.svg`. With `checkpoints`, every model goes to
/// `models/<run>_w<window>.json`.
pub fn emit_outputs(dir: &Path, exp: &Experiment, checkpoints: bool) -> Result<OutputFiles, PipelineError> {
    let mut out = OutputFiles::default();
    let all_runs = || exp.runs.iter().chain(&exp.sweep);
    let path = dir.join("reports.csv");
    let reports = reports_csv(&exp.runs, &path)?;
    out.write(path, reports)?;
    out.write(dir.join("summary.csv"), summary_table(&exp.runs))?;

    let mut windows = String::from("window,start,end,weeks\n");
    for w in &exp.windows {
        let _ = writeln!(windows, "{},{},{},{}", w.index + 1, w.start, w.end, w.width() / crate::stream::WEEK);
    }
    out.write(dir.join("windows.csv"), windows)?;
    let all: Vec<TechniqueRun> = all_runs().cloned().collect();
    out.write(dir.join("cells.csv"), cells_csv(&all))?;
    let mut grace = String::from("run,technique,grace\n");
    for r in all_runs() {
        let _ = writeln!(grace, "{},{},{}", r.label, r.technique, r.grace);
    }
    out.write(dir.join("runs.csv"), grace)?;

    for m in Metric::ALL {
        out.write(dir.join("plots").join(format!("{}.svg", m.name())), svg_plot(m.name(), &series(&exp.runs, m), 1))?;
    }
    if !exp.sweep.is_empty() {
        let path = dir.join("sweep_reports.csv");
        let reports = reports_csv(&exp.sweep, &path)?;
        out.write(path, reports)?;
        out.write(dir.join("sweep_summary.csv"), summary_table(&exp.sweep))?;
        for m in Metric::ALL {
            let title = format!("{} by grace period", m.name());
            out.write(dir.join("plots").join("sweep").join(format!("{}.svg", m.name())), svg_plot(&title, &series(&exp.sweep, m), 1))?;
        }
    }
    if checkpoints {
        for r in all_runs() {
            for (i, model) in r.models.iter().enumerate() {
                if let Some(model) = model {
                    out.write(dir.join("models").join(format!("{}_w{}.json", r.label, i + 1)), model.to_json())?;
                }
            }
        }
    }
    Ok(out)
}

/// Per-metric series from the text of a reports CSV: one series per run
/// label in order of first appearance, each point the mean over
/// replications, `points` windows long starting at window 1.
pub fn series_from_reports(reports: &str, points: usize) -> Result<Vec<(Metric, Vec<Series>)>, String> {
    let mut r = csv::Reader::from_reader(reports.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("missing column `{name}`"));
    let (cw, ct, cm, cv) = (col("window")?, col("technique")?, col("metric")?, col("value")?);
    let mut labels: Vec<String> = Vec::new();
    let mut values: BTreeMap<(usize, Metric, usize), Vec<f64>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", line + 2);
        let label = &rec[ct];
        let run = match labels.iter().position(|l| l == label) {
            Some(k) => k,
            None => {
                labels.push(label.to_string());
                labels.len() - 1
            }
        };
        let window: usize = rec[cw].parse().map_err(|_| bad("window"))?;
        let metric = Metric::parse(&rec[cm]).ok_or_else(|| bad("metric"))?;
        if rec[cv].is_empty() {
            continue;
        }
        let v: f64 = rec[cv].parse().map_err(|_| bad("value"))?;
        if window == 0 || window > points {
            return Err(bad("window"));
        }
        values.entry((run, metric, window)).or_default().push(v);
    }
    Ok(Metric::ALL
        .iter()
        .map(|&m| {
            let series = labels
                .iter()
                .enumerate()
                .map(|(k, label)| Series {
                    label: label.clone(),
                    points: (1..=points).map(|w| values.get(&(k, m, w)).and_then(|xs| Summary::of(xs)).map(|s| s.mean)).collect(),
                })
                .collect();
            (m, series)
        })
        .collect())
}

/// Redraws the plots of a run directory written by [`emit_outputs`] from
/// its `reports.csv`, `windows.csv` and, when present, `sweep_reports.csv`.
pub fn replot(dir: &Path) -> Result<OutputFiles, PipelineError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
    };
    let windows = read("windows.csv")?.lines().skip(1).filter(|l| !l.is_empty()).count();
    if windows < 2 {
        return Err(PipelineError::Io { path: dir.join("windows.csv").display().to_string(), message: "fewer than two windows".into() });
    }
    let mut out = OutputFiles::default();
    let mut draw = |name: &str, sub: &Path, suffix: &str| -> Result<(), PipelineError> {
        let text = read(name)?;
        let all = series_from_reports(&text, windows - 1)
            .map_err(|message| PipelineError::Io { path: dir.join(name).display().to_string(), message })?;
        for (m, s) in all {
            out.write(dir.join(sub).join(format!("{}.svg", m.name())), svg_plot(&format!("{}{suffix}", m.name()), &s, 1))?;
        }
        Ok(())
    };
    draw("reports.csv", Path::new("plots"), "")?;
    if dir.join("sweep_reports.csv").is_file() {
        draw("sweep_reports.csv", Path::new("plots/sweep"), " by grace period")?;
    }
    Ok(out)
}
