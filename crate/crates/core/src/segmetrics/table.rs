use std::io::Write;

use serde::{Deserialize, Serialize};

use super::distance::{asd, hd95};
use super::mask::{dice, LabelMask};
use crate::{Error, Result};

/// Composite classes, each the union of a set of labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub classes: Vec<(String, Vec<u8>)>,
}

impl ClassMap {
    pub fn new(classes: Vec<(String, Vec<u8>)>) -> Self {
        ClassMap { classes }
    }

    /// `whole = {1,2,3}`, `core = {2,3}`, `inner = {3}`.
    pub fn nested() -> Self {
        Self::new(vec![
            ("whole".into(), vec![1, 2, 3]),
            ("core".into(), vec![2, 3]),
            ("inner".into(), vec![3]),
        ])
    }

    fn knows(&self, label: u8) -> bool {
        label == 0 || self.classes.iter().any(|(_, set)| set.contains(&label))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub dice: f64,
    pub hd95_mm: Option<f64>,
    pub asd_mm: Option<f64>,
}

/// Binarises both label images per composite class and scores each class.
pub fn evaluate_classes(pred: &LabelMask, truth: &LabelMask, class_map: &ClassMap) -> Result<Vec<ClassMetrics>> {
    if pred.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} differs from truth shape {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.spacing() != truth.spacing() {
        return Err(Error::invalid("prediction and truth spacing differ"));
    }
    for mask in [pred, truth] {
        if let Some(&l) = mask.labels().iter().find(|&&l| !class_map.knows(l)) {
            return Err(Error::invalid(format!("label {l} is not in the class map")));
        }
    }
    let spacing = truth.spacing();
    class_map
        .classes
        .iter()
        .map(|(name, set)| {
            let (p, t) = (pred.select(set), truth.select(set));
            Ok(ClassMetrics {
                class: name.clone(),
                dice: dice(&p, &t)?,
                hd95_mm: hd95(&p, &t, spacing)?,
                asd_mm: asd(&p, &t, spacing)?,
            })
        })
        .collect()
}

pub const METRICS_CSV_HEADER: &str = "case_id,class,dice,hd95_mm,asd_mm";
pub const UNDEFINED: &str = "undef";

/// One line of the metrics table; `case_id` is `mean` or `std` for summary
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub case_id: String,
    pub metrics: ClassMetrics,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x}"))
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{}",
            self.case_id,
            m.class,
            cell(Some(m.dice)),
            cell(m.hd95_mm),
            cell(m.asd_mm)
        )
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Mean and (population) standard deviation per class and metric, skipping
/// undefined distances. Classes appear in first-seen order.
pub fn summarize(rows: &[MetricRow]) -> Vec<MetricRow> {
    let mut classes: Vec<&str> = Vec::new();
    for r in rows {
        if !classes.contains(&r.metrics.class.as_str()) {
            classes.push(&r.metrics.class);
        }
    }
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for class in classes {
        let sel: Vec<&ClassMetrics> = rows.iter().map(|r| &r.metrics).filter(|m| m.class == class).collect();
        let collect = |f: &dyn Fn(&ClassMetrics) -> Option<f64>| -> Vec<f64> { sel.iter().filter_map(|m| f(m)).collect() };
        let (dm, ds) = mean_std(&collect(&|m| Some(m.dice)));
        let (hm, hs) = mean_std(&collect(&|m| m.hd95_mm));
        let (am, as_) = mean_std(&collect(&|m| m.asd_mm));
        let row = |id: &str, d: Option<f64>, h, a| MetricRow {
            case_id: id.into(),
            metrics: ClassMetrics {
                class: class.into(),
                dice: d.unwrap_or(f64::NAN),
                hd95_mm: h,
                asd_mm: a,
            },
        };
        means.push(row("mean", dm, hm, am));
        stds.push(row("std", ds, hs, as_));
    }
    means.extend(stds);
    means
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}
