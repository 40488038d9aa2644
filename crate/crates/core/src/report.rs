//! Metrics CSV files and the comparison tables built from them.
//!
//! A metrics file starts with `# key=value` comment lines naming the run
//! (`dataset`, `model`, `augmentation`, `seed`), followed by a CSV table with
//! columns `epoch,split,loss,accuracy`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fgsm::AttackRow;
use crate::model::{MetricRow, Split};

/// Column order for augmentation modes in comparison tables.
pub const MODE_ORDER: [&str; 4] = ["none", "patch-fixed", "patch-random", "mixup"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunKey {
    pub dataset: String,
    pub model: String,
    pub augmentation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub key: RunKey,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
}

impl RunMetrics {
    /// Last test accuracy, falling back to the last train accuracy.
    pub fn final_accuracy(&self) -> Option<f64> {
        let last = |split| self.rows.iter().rev().find(|r| r.split == split);
        last(Split::Test)
            .or_else(|| last(Split::Train))
            .map(|r| r.accuracy)
    }
}

pub fn write_metrics(run: &RunMetrics, path: &Path) -> Result<()> {
    let mut out = format!(
        "# dataset={}\n# model={}\n# augmentation={}\n# seed={}\n",
        run.key.dataset, run.key.model, run.key.augmentation, run.seed
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "split", "loss", "accuracy"])?;
    for r in &run.rows {
        w.write_record([
            r.epoch.to_string(),
            r.split.as_str().to_string(),
            r.loss.to_string(),
            r.accuracy.to_string(),
        ])?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<RunMetrics> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::MalformedMetrics(format!("{}: {msg}", path.display()));
    let mut meta = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let field = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| bad(format!("missing `# {k}=` line")))
    };
    let key = RunKey {
        dataset: field("dataset")?,
        model: field("model")?,
        augmentation: field("augmentation")?,
    };
    let seed = field("seed")?
        .parse()
        .map_err(|_| bad("seed is not an integer".into()))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["epoch", "split", "loss", "accuracy"] {
        return Err(bad(format!("unexpected columns {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        let split = match &rec[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(bad(format!("unknown split {other:?}"))),
        };
        rows.push(MetricRow {
            epoch: rec[0]
                .parse()
                .map_err(|_| bad(format!("bad epoch {:?}", &rec[0])))?,
            split,
            loss: num(2)?,
            accuracy: num(3)?,
        });
    }
    if rows.is_empty() {
        return Err(bad("no metric rows".into()));
    }
    Ok(RunMetrics { key, seed, rows })
}

/// One table row: a `(dataset, model)` pair and its final accuracy per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub dataset: String,
    pub model: String,
    pub accuracy: BTreeMap<String, f64>,
}

impl ComparisonRow {
    /// `accuracy[mode] - accuracy["none"]`, if both exist.
    pub fn delta(&self, mode: &str) -> Option<f64> {
        Some(self.accuracy.get(mode)? - self.accuracy.get("none")?)
    }
}

/// Groups runs by `(dataset, model)`. A later run with the same key replaces
/// an earlier one.
pub fn compare(runs: &[RunMetrics]) -> Result<Vec<ComparisonRow>> {
    if runs.is_empty() {
        return Err(Error::MalformedMetrics("no metrics files given".into()));
    }
    let mut table: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for run in runs {
        let acc = run
            .final_accuracy()
            .ok_or_else(|| Error::MalformedMetrics("run has no accuracy rows".into()))?;
        table
            .entry((run.key.dataset.clone(), run.key.model.clone()))
            .or_default()
            .insert(run.key.augmentation.clone(), acc);
    }
    Ok(table
        .into_iter()
        .map(|((dataset, model), accuracy)| ComparisonRow {
            dataset,
            model,
            accuracy,
        })
        .collect())
}

fn mode_columns(rows: &[ComparisonRow]) -> Vec<String> {
    let mut cols: Vec<String> = MODE_ORDER
        .iter()
        .filter(|m| rows.iter().any(|r| r.accuracy.contains_key(**m)))
        .map(|m| m.to_string())
        .collect();
    for r in rows {
        for m in r.accuracy.keys() {
            if !cols.contains(m) {
                cols.push(m.clone());
            }
        }
    }
    cols
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn render(header: &[String], body: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap()
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for r in body {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Text table, one row per `(dataset, model)`, one column per augmentation
/// mode. Non-baseline cells show the delta against `none` when present.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let modes = mode_columns(rows);
    let mut header = vec!["dataset".to_string(), "model".to_string()];
    header.extend(modes.iter().cloned());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.dataset.clone(), r.model.clone()];
            for m in &modes {
                cells.push(match (r.accuracy.get(m), r.delta(m)) {
                    (None, _) => "-".into(),
                    (Some(&a), Some(d)) if m != "none" => {
                        format!("{} ({:+.2}%)", pct(a), d * 100.0)
                    }
                    (Some(&a), _) => pct(a),
                });
            }
            cells
        })
        .collect();
    render(&header, &body)
}

/// Attack results for one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub model: String,
    pub rows: Vec<AttackRow>,
}

pub fn write_attack_csv(reports: &[AttackReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model",
        "epsilon",
        "n_examples",
        "clean_accuracy",
        "adversarial_accuracy",
    ])?;
    for rep in reports {
        for r in &rep.rows {
            w.write_record([
                rep.model.clone(),
                r.epsilon.to_string(),
                r.n_examples.to_string(),
                r.clean_accuracy.to_string(),
                r.adversarial_accuracy.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows per epsilon, columns per model: `clean / adversarial`.
pub fn render_attack(reports: &[AttackReport]) -> String {
    let mut eps: Vec<f64> = Vec::new();
    for rep in reports {
        for r in &rep.rows {
            if !eps.contains(&r.epsilon) {
                eps.push(r.epsilon);
            }
        }
    }
    let mut header = vec!["attack".to_string()];
    header.extend(reports.iter().map(|r| format!("{} (clean / adv)", r.model)));
    let body: Vec<Vec<String>> = eps
        .iter()
        .map(|&e| {
            let mut cells = vec![format!("FGSM eps={e}")];
            for rep in reports {
                cells.push(match rep.rows.iter().find(|r| r.epsilon == e) {
                    Some(r) => format!(
                        "{} / {}",
                        pct(r.clean_accuracy),
                        pct(r.adversarial_accuracy)
                    ),
                    None => "-".into(),
                });
            }
            cells
        })
        .collect();
    let mut out = render(&header, &body);
    if reports.len() == 2 {
        let _ = writeln!(out);
        for &e in &eps {
            let find = |rep: &AttackReport| rep.rows.iter().find(|r| r.epsilon == e).copied();
            if let (Some(a), Some(b)) = (find(&reports[0]), find(&reports[1])) {
                let (a, b) = (a.adversarial_accuracy, b.adversarial_accuracy);
                let verdict = if b == a {
                    format!("matches {}", reports[0].model)
                } else {
                    format!(
                        "{} {} by {:.2} points",
                        if b > a { "exceeds" } else { "trails" },
                        reports[0].model,
                        (b - a).abs() * 100.0
                    )
                };
                let _ = writeln!(
                    out,
                    "eps={e}: {} adversarial accuracy {verdict}",
                    reports[1].model
                );
            }
        }
    }
    out
}
