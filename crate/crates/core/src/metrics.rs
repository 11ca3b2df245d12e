//! Segmentation metrics over a confusion matrix whose rows are ground truth
//! and columns are predictions.
//!
//! Classes without support are left out of macro averages: a class with an
//! empty row does not contribute to class-average accuracy, and a class whose
//! row and column are both empty does not contribute to mIoU.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[truth][pred]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = classes.len();
        if c == 0 {
            return Err(Error::Argument(
                "confusion matrix needs at least one class".into(),
            ));
        }
        if counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Argument(format!("confusion matrix must be {c}x{c}")));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn zeros(classes: Vec<String>) -> Self {
        let c = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; c]; c],
        }
    }

    /// Classes named `0..c`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(names, counts)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// Elementwise sum; both matrices must share the class list.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::Argument(
                "cannot merge matrices over different classes".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Recall per class; `None` for classes without ground-truth samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.num_classes())
            .map(|c| {
                let row = self.row_sum(c);
                (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
            })
            .collect()
    }

    /// IoU per class; `None` when the class never occurs on either side.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.num_classes())
            .map(|c| {
                let tp = self.counts[c][c];
                let union = self.row_sum(c) + self.col_sum(c) - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }
}

fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|i| i.to_string()).collect()
}

fn check_labels(truth: &[usize], pred: &[usize], c: usize) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Argument(format!(
            "truth has {} labels but prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    if let Some((i, &l)) = truth.iter().chain(pred).enumerate().find(|(_, &l)| l >= c) {
        let (side, at) = if i < truth.len() {
            ("truth", i)
        } else {
            ("prediction", i - truth.len())
        };
        return Err(Error::Argument(format!(
            "{side} label {l} at index {at} is outside [0, {c})"
        )));
    }
    Ok(())
}

/// Counts `(truth, pred)` pairs; chunks are accumulated in parallel and
/// merged.
pub fn confusion(truth: &[usize], pred: &[usize], c: usize) -> Result<ConfusionMatrix> {
    if c == 0 {
        return Err(Error::Argument("class count must be >= 1".into()));
    }
    check_labels(truth, pred, c)?;
    let counts = truth
        .par_chunks(1 << 16)
        .zip(pred.par_chunks(1 << 16))
        .map(|(t, p)| {
            let mut m = vec![vec![0u64; c]; c];
            for (&a, &b) in t.iter().zip(p) {
                m[a][b] += 1;
            }
            m
        })
        .reduce(
            || vec![vec![0u64; c]; c],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
                a
            },
        );
    Ok(ConfusionMatrix {
        classes: class_names(c),
        counts,
    })
}

pub fn overall_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Domain("overall accuracy of an empty matrix".into()));
    }
    Ok(m.trace() as f64 / total as f64)
}

fn mean_of(values: &[Option<f64>], what: &str) -> Result<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Domain(format!("{what}: no class has support")));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

pub fn class_avg_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    mean_of(&m.per_class_accuracy(), "class-average accuracy")
}

pub fn mean_iou(m: &ConfusionMatrix) -> Result<f64> {
    mean_of(&m.per_class_iou(), "mean IoU")
}

/// Sums counts into superclasses; `mapping[c]` is the superclass of class `c`.
pub fn collapse(
    m: &ConfusionMatrix,
    mapping: &[usize],
    names: Vec<String>,
) -> Result<ConfusionMatrix> {
    if mapping.len() != m.num_classes() {
        return Err(Error::Argument(format!(
            "collapse mapping covers {} of {} classes",
            mapping.len(),
            m.num_classes()
        )));
    }
    let k = names.len();
    if let Some(&bad) = mapping.iter().find(|&&s| s >= k) {
        return Err(Error::Argument(format!(
            "superclass {bad} outside [0, {k})"
        )));
    }
    let mut out = ConfusionMatrix::zeros(names);
    for (t, row) in m.counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            out.counts[mapping[t]][mapping[p]] += n;
        }
    }
    Ok(out)
}

/// Tree (trunk, canopy) vs non-tree (terrain, understorey) over the
/// four-category order terrain, trunk, canopy, understorey.
pub fn collapse_tree(m: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    collapse(m, &[1, 0, 0, 1], vec!["tree".into(), "non-tree".into()])
}

/// mIoU computed on consecutive chunks of `chunk` samples and averaged over
/// chunks that have any support. A per-subcloud style alternative to the
/// global convention.
pub fn chunked_mean_iou(truth: &[usize], pred: &[usize], c: usize, chunk: usize) -> Result<f64> {
    if chunk == 0 {
        return Err(Error::Argument("chunk size must be >= 1".into()));
    }
    check_labels(truth, pred, c)?;
    let per: Vec<f64> = truth
        .chunks(chunk)
        .zip(pred.chunks(chunk))
        .filter_map(|(t, p)| confusion(t, p, c).ok().and_then(|m| mean_iou(&m).ok()))
        .collect();
    if per.is_empty() {
        return Err(Error::Domain("chunked mIoU of empty input".into()));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub matrix: ConfusionMatrix,
    pub total: u64,
    pub overall_accuracy: f64,
    pub class_avg_accuracy: f64,
    pub mean_iou: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub per_class_iou: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapsed: Option<Box<MetricsReport>>,
}

impl MetricsReport {
    pub fn new(m: &ConfusionMatrix) -> Result<Self> {
        Ok(MetricsReport {
            matrix: m.clone(),
            total: m.total(),
            overall_accuracy: overall_accuracy(m)?,
            class_avg_accuracy: class_avg_accuracy(m)?,
            mean_iou: mean_iou(m)?,
            per_class_accuracy: m.per_class_accuracy(),
            per_class_iou: m.per_class_iou(),
            collapsed: None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self
            .matrix
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(11);
        let _ = write!(s, "{:width$}", "truth\\pred");
        for c in &self.matrix.classes {
            let _ = write!(s, " {c:>12}");
        }
        s.push('\n');
        for (name, row) in self.matrix.classes.iter().zip(&self.matrix.counts) {
            let _ = write!(s, "{name:width$}");
            for n in row {
                let _ = write!(s, " {n:>12}");
            }
            s.push('\n');
        }
        let fmt = |v: &Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        for (i, name) in self.matrix.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{name:width$} accuracy {} iou {}",
                fmt(&self.per_class_accuracy[i]),
                fmt(&self.per_class_iou[i])
            );
        }
        let _ = writeln!(s, "points              {}", self.total);
        let _ = writeln!(s, "overall accuracy    {:.4}", self.overall_accuracy);
        let _ = writeln!(s, "class avg accuracy  {:.4}", self.class_avg_accuracy);
        let _ = writeln!(s, "mean IoU            {:.4}", self.mean_iou);
        if let Some(c) = &self.collapsed {
            s.push_str("\ncollapsed\n");
            s.push_str(&c.to_text());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[u64; 4]]) -> ConfusionMatrix {
        let names = ["terrain", "trunk", "canopy", "understorey"]
            .map(String::from)
            .to_vec();
        ConfusionMatrix::new(names, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn lidar_pointnext() -> ConfusionMatrix {
        m(&[
            [1055469, 4234, 423, 386498],
            [468, 191869, 135275, 59160],
            [10201, 254302, 8310787, 1220544],
            [1105198, 21323, 1067, 1128622],
        ])
    }

    #[test]
    fn hand_counts() {
        let c = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(c.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(c.total(), 3);
        let d = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(d.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert_eq!(overall_accuracy(&d).unwrap(), 1.0);
        assert_eq!(class_avg_accuracy(&d).unwrap(), 1.0);
        assert_eq!(mean_iou(&d).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
        let z = ConfusionMatrix::zeros(class_names(2));
        assert!(matches!(overall_accuracy(&z), Err(Error::Domain(_))));
        assert!(matches!(class_avg_accuracy(&z), Err(Error::Domain(_))));
        assert!(matches!(mean_iou(&z), Err(Error::Domain(_))));
        assert!(collapse(&z, &[0], vec!["a".into()]).is_err());
        assert!(collapse(&z, &[0, 1], vec!["a".into()]).is_err());
    }

    #[test]
    fn iou_by_hand() {
        let c = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![1, 1]]).unwrap();
        for v in c.per_class_iou() {
            assert!((v.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((mean_iou(&c).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support_is_excluded() {
        // class 1 never occurs, on either side
        let c = ConfusionMatrix::from_counts(vec![vec![3, 0, 1], vec![0, 0, 0], vec![1, 0, 5]])
            .unwrap();
        assert_eq!(c.per_class_accuracy()[1], None);
        assert_eq!(c.per_class_iou()[1], None);
        let expected = (0.75 + 5.0 / 6.0) / 2.0;
        assert!((class_avg_accuracy(&c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn published_matrix_values() {
        let c = lidar_pointnext();
        assert_eq!(c.trace(), 10_686_747);
        assert_eq!(c.total(), 13_885_440);
        assert!((overall_accuracy(&c).unwrap() - 0.7696).abs() <= 5e-4);
        assert!((class_avg_accuracy(&c).unwrap() - 0.6436).abs() <= 5e-4);
        assert!((mean_iou(&c).unwrap() - 0.4560).abs() <= 5e-4);
        let t = collapse_tree(&c).unwrap();
        assert_eq!(t.total(), c.total());
        assert!((overall_accuracy(&t).unwrap() - 0.9051).abs() <= 5e-4);
        assert!((class_avg_accuracy(&t).unwrap() - 0.9330).abs() <= 5e-4);
        assert!((mean_iou(&t).unwrap() - 0.8035).abs() <= 5e-4);
    }

    #[test]
    fn collapse_identity_and_single() {
        let c = lidar_pointnext();
        let id = collapse(&c, &[0, 1, 2, 3], c.classes.clone()).unwrap();
        assert_eq!(id, c);
        let one = collapse(&c, &[0, 0, 0, 0], vec!["all".into()]).unwrap();
        assert_eq!(overall_accuracy(&one).unwrap(), 1.0);
    }

    #[test]
    fn class_permutation_invariance() {
        let c = lidar_pointnext();
        let perm = [2, 0, 3, 1];
        let counts = perm
            .iter()
            .map(|&i| perm.iter().map(|&j| c.counts[i][j]).collect())
            .collect();
        let p = ConfusionMatrix::from_counts(counts).unwrap();
        assert_eq!(overall_accuracy(&p).unwrap(), overall_accuracy(&c).unwrap());
        assert!((class_avg_accuracy(&p).unwrap() - class_avg_accuracy(&c).unwrap()).abs() < 1e-15);
        assert!((mean_iou(&p).unwrap() - mean_iou(&c).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn confusion_is_additive() {
        let t: Vec<usize> = (0..1000).map(|i| (i * 7) % 4).collect();
        let p: Vec<usize> = (0..1000).map(|i| (i * 3 + i / 5) % 4).collect();
        let whole = confusion(&t, &p, 4).unwrap();
        let mut parts = confusion(&t[..300], &p[..300], 4).unwrap();
        parts
            .merge(&confusion(&t[300..], &p[300..], 4).unwrap())
            .unwrap();
        assert_eq!(whole, parts);
    }

    #[test]
    fn chunked_variant_on_uniform_chunks() {
        let t = vec![0, 1, 0, 1];
        let p = vec![0, 1, 1, 1];
        // chunk 1: perfect; chunk 2: iou 0 for class 0, 1/2 for class 1
        let v = chunked_mean_iou(&t, &p, 2, 2).unwrap();
        assert!((v - (1.0 + 0.25) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn report_text_lists_metrics() {
        let mut r = MetricsReport::new(&lidar_pointnext()).unwrap();
        r.collapsed = Some(Box::new(
            MetricsReport::new(&collapse_tree(&lidar_pointnext()).unwrap()).unwrap(),
        ));
        let text = r.to_text();
        assert!(text.contains("overall accuracy    0.7696"));
        assert!(text.contains("collapsed"));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["collapsed"]["overall_accuracy"].as_f64().unwrap() > 0.9);
    }
}
