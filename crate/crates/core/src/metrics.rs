//! Binary classification metrics with attack (label 1) as the positive class.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_inputs(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Invalid(format!(
            "{} labels for {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("score {s} is not a number")));
    }
    Ok(())
}

/// Predicts positive iff `score ≥ threshold`.
pub fn confusion(labels: &[u8], scores: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_inputs(labels, scores)?;
    let mut cm = ConfusionMatrix {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
        threshold,
    };
    for (&y, &s) in labels.iter().zip(scores) {
        match (y != 0, s >= threshold) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Scalar metrics; `None` marks a metric whose denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn summary_metrics(cm: &ConfusionMatrix) -> ScalarMetrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    ScalarMetrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
        false_alarm_rate: ratio(cm.fp, cm.fp + cm.tn),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// ROC points are (false positive rate, true positive rate); PR points are
/// (recall, precision). Both are ordered by descending threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Cumulative (threshold, tp, fp) after each group of tied scores, walking
/// scores from high to low.
fn sweep(labels: &[u8], scores: &[f64]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// ROC curve with one point per distinct score, starting at (0, 0), and the
/// trapezoidal area under it.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<(CurvePoints, f64)> {
    check_inputs(labels, scores)?;
    let pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Invalid("ROC needs both classes present".into()));
    }
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let mut auc = 0.0;
    for (threshold, tp, fp) in sweep(labels, scores) {
        let prev = *points.last().expect("non-empty");
        let p = CurvePoint {
            threshold,
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
        };
        auc += (p.x - prev.x) * (p.y + prev.y) / 2.0;
        points.push(p);
    }
    Ok((
        CurvePoints {
            kind: CurveKind::Roc,
            points,
        },
        auc,
    ))
}

/// Precision-recall curve with one point per distinct score and the
/// step-sum average precision `Σ (R_k − R_{k−1}) · P_k`.
pub fn pr_curve(labels: &[u8], scores: &[f64]) -> Result<(CurvePoints, f64)> {
    check_inputs(labels, scores)?;
    let pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    if pos == 0 {
        return Err(Error::Invalid("precision-recall needs at least one positive".into()));
    }
    let mut points = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (threshold, tp, fp) in sweep(labels, scores) {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(CurvePoint {
            threshold,
            x: recall,
            y: precision,
        });
    }
    Ok((
        CurvePoints {
            kind: CurveKind::Pr,
            points,
        },
        ap,
    ))
}

/// Formats `x` with 9 significant digits, `%g` style.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        trim(&format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

pub fn export_curves(curve: &CurvePoints, path: &Path) -> Result<()> {
    if curve.points.is_empty() {
        return Err(Error::Empty("no curve points to export".into()));
    }
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            format_sig9(p.threshold),
            format_sig9(p.x),
            format_sig9(p.y)
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Externally reported figures to compare a report against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub source: String,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

/// Reference CNN-LSTM figures on CICIDS2017.
pub fn cicids2017_cnn_lstm_reference() -> ReferenceFigures {
    ReferenceFigures {
        source: "reference CNN-LSTM figures (CICIDS2017)".into(),
        accuracy: Some(0.9952),
        precision: Some(0.9870),
        recall: Some(0.9924),
        f1: Some(0.9897),
        false_alarm_rate: Some(0.0014),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub n_samples: u64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub auc: Option<f64>,
    pub average_precision: Option<f64>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Everything a report needs: confusion at `threshold`, scalar metrics, and
/// both curves (absent when a class is missing).
pub fn evaluate_scores(
    split: &str,
    labels: &[u8],
    scores: &[f64],
    threshold: f64,
) -> Result<(MetricsReport, Option<CurvePoints>, Option<CurvePoints>)> {
    let cm = confusion(labels, scores, threshold)?;
    let m = summary_metrics(&cm);
    let roc = roc_curve(labels, scores).ok();
    let pr = pr_curve(labels, scores).ok();
    let report = MetricsReport {
        split: split.to_string(),
        n_samples: cm.total(),
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        false_alarm_rate: m.false_alarm_rate,
        auc: roc.as_ref().map(|r| r.1),
        average_precision: pr.as_ref().map(|p| p.1),
        confusion: cm,
        notes: Vec::new(),
    };
    Ok((report, roc.map(|r| r.0), pr.map(|p| p.0)))
}

impl MetricsReport {
    pub fn from_confusion(split: &str, cm: ConfusionMatrix) -> Self {
        let m = summary_metrics(&cm);
        MetricsReport {
            split: split.to_string(),
            n_samples: cm.total(),
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            false_alarm_rate: m.false_alarm_rate,
            auc: None,
            average_precision: None,
            confusion: cm,
            notes: Vec::new(),
        }
    }

    /// Appends one note per metric whose computed value differs from the
    /// reference by more than `tolerance`. A mismatching false alarm rate
    /// also names the confusion-matrix ratio closest to the reference value.
    pub fn compare_with(&mut self, reference: &ReferenceFigures, tolerance: f64) {
        let pairs = [
            ("accuracy", self.accuracy, reference.accuracy),
            ("precision", self.precision, reference.precision),
            ("recall", self.recall, reference.recall),
            ("f1", self.f1, reference.f1),
            ("false_alarm_rate", self.false_alarm_rate, reference.false_alarm_rate),
        ];
        for (name, computed, quoted) in pairs {
            let (Some(c), Some(q)) = (computed, quoted) else {
                continue;
            };
            if (c - q).abs() <= tolerance {
                continue;
            }
            let mut note = format!(
                "{name}: computed {c:.6} from the confusion counts, {} reports {q:.6} (difference {:+.6})",
                reference.source,
                c - q
            );
            if name == "false_alarm_rate" {
                let (label, value) = self.closest_ratio(q);
                note.push_str(&format!(
                    "; computed as fp/(fp+tn); the nearest confusion-matrix ratio to the reported value is {label} = {value:.6}"
                ));
            }
            self.notes.push(note);
        }
    }

    fn closest_ratio(&self, target: f64) -> (&'static str, f64) {
        let cm = &self.confusion;
        let total = cm.total().max(1) as f64;
        let candidates = [
            ("fp/(fp+tn)", cm.fp as f64 / (cm.fp + cm.tn).max(1) as f64),
            ("fn/(fn+tp)", cm.fn_ as f64 / (cm.fn_ + cm.tp).max(1) as f64),
            ("fp/total", cm.fp as f64 / total),
            ("fn/total", cm.fn_ as f64 / total),
            ("(fp+fn)/total", (cm.fp + cm.fn_) as f64 / total),
            ("fp/(fp+tp)", cm.fp as f64 / (cm.fp + cm.tp).max(1) as f64),
        ];
        candidates
            .into_iter()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .expect("non-empty")
    }
}
