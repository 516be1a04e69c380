//! Confusion-matrix based classification metrics.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        assert!(counts.iter().all(|r| r.len() == counts.len()), "confusion matrix must be square");
        ConfusionMatrix { counts }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Mean of per-class f1 weighted by class support.
pub fn support_weighted_f1(per_class: &[ClassMetrics]) -> f64 {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return 0.0;
    }
    per_class.iter().map(|m| m.support as f64 * m.f1).sum::<f64>() / total as f64
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let total = confusion.total();
        let per_class: Vec<ClassMetrics> = (0..confusion.classes())
            .map(|c| {
                let tp = confusion.get(c, c);
                let precision = ratio(tp, confusion.predicted_count(c));
                let recall = ratio(tp, confusion.support(c));
                let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
                ClassMetrics { precision, recall, f1, support: confusion.support(c) }
            })
            .collect();
        let weighted_f1 = support_weighted_f1(&per_class);
        MetricsReport { accuracy: ratio(confusion.trace(), total), per_class, weighted_f1, confusion }
    }

    pub fn total(&self) -> u64 {
        self.confusion.total()
    }

    pub fn table(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}", "class", "precision", "recall", "f1", "support");
        for (name, m) in class_names.iter().zip(&self.per_class) {
            let _ = writeln!(s, "{name:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}", m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s, "accuracy {:.4}  weighted f1 {:.4}  samples {}", self.accuracy, self.weighted_f1, self.total());
        s
    }

    pub fn confusion_table(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(4).max(4);
        let mut s = format!("{:<width$}", "true\\pred");
        for i in 0..self.confusion.classes() {
            let _ = write!(s, " {i:>7}");
        }
        s.push('\n');
        for (i, row) in self.confusion.rows().iter().enumerate() {
            let name = class_names.get(i).map(String::as_str).unwrap_or("?");
            let _ = write!(s, "{name:<width$}");
            for v in row {
                let _ = write!(s, " {v:>7}");
            }
            s.push('\n');
        }
        s
    }

    /// One logfmt line per class followed by a summary line.
    pub fn records(&self, class_names: &[String]) -> String {
        let mut s = String::new();
        for (i, m) in self.per_class.iter().enumerate() {
            let name = class_names.get(i).map(String::as_str).unwrap_or("?");
            let _ = writeln!(
                s,
                "record=class class={i} name=\"{name}\" precision={:.6} recall={:.6} f1={:.6} support={}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(s, "record=summary accuracy={:.6} weighted_f1={:.6} samples={}", self.accuracy, self.weighted_f1, self.total());
        s
    }
}
