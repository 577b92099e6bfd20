use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

/// Maximum-agreement injective matching of predicted labels onto true labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// `matching[p]` is the true label assigned to predicted label p.
    pub matching: Vec<Option<usize>>,
    /// Prediction rewritten in true-label ids; unmatched labels are `None`.
    pub aligned: Vec<Option<usize>>,
}

/// Confusion counts c[p][q] = #{t : predicted_t = p, truth_t = q}.
pub fn confusion(predicted: &[usize], truth: &[usize]) -> Vec<Vec<i64>> {
    let np = predicted.iter().max().map_or(0, |m| m + 1);
    let nq = truth.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![vec![0i64; nq]; np];
    for (&p, &q) in predicted.iter().zip(truth) {
        c[p][q] += 1;
    }
    c
}

/// Optimal assignment maximising Σ c[p][σ(p)] over injective σ.
pub fn max_assignment(c: &[Vec<i64>], n_true: usize) -> Vec<Option<usize>> {
    let np = c.len();
    let n = np.max(n_true);
    if n == 0 {
        return Vec::new();
    }
    let mut rows = vec![vec![0i64; n]; n];
    for (p, row) in c.iter().enumerate() {
        rows[p][..row.len()].copy_from_slice(row);
    }
    let m = Matrix::from_rows(rows).expect("square matrix");
    let (_, assign) = kuhn_munkres(&m);
    (0..np)
        .map(|p| {
            let q = assign[p];
            (q < n_true).then_some(q)
        })
        .collect()
}

/// Align arbitrary MCMC labels to ground truth. Predicted classes beyond
/// the number of true classes stay unmatched and count as errors.
pub fn align_labels(predicted: &[usize], truth: &[usize]) -> Alignment {
    let n_true = truth.iter().max().map_or(0, |m| m + 1);
    let c = confusion(predicted, truth);
    let matching = max_assignment(&c, n_true);
    let aligned = predicted.iter().map(|&p| matching[p]).collect();
    Alignment { matching, aligned }
}

/// Relabel `predicted` onto the label ids of `reference`. Labels left
/// unmatched receive fresh ids above every reference label.
pub fn align_to_reference(predicted: &[usize], reference: &[usize]) -> Vec<usize> {
    let a = align_labels(predicted, reference);
    let mut next = reference.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; a.matching.len()];
    for &p in predicted {
        present[p] = true;
    }
    let fresh: Vec<usize> = a
        .matching
        .iter()
        .zip(&present)
        .map(|(m, &used)| match m {
            Some(q) => *q,
            None if used => {
                next += 1;
                next - 1
            }
            None => usize::MAX,
        })
        .collect();
    predicted.iter().map(|&p| fresh[p]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub matching: Vec<Option<usize>>,
    pub n_switches: usize,
}

/// Accuracy, support-weighted F1 and switch count of an aligned prediction.
/// `n_switches` counts changes in the raw predicted sequence.
pub fn score(alignment: &Alignment, truth: &[usize]) -> SegmentationScore {
    let t_len = truth.len();
    let aligned = &alignment.aligned;
    let n_true = truth.iter().max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; n_true];
    let mut predicted = vec![0usize; n_true];
    let mut support = vec![0usize; n_true];
    let mut hits = 0usize;
    for (a, &q) in aligned.iter().zip(truth) {
        support[q] += 1;
        if let Some(p) = *a {
            predicted[p] += 1;
            if p == q {
                tp[q] += 1;
                hits += 1;
            }
        }
    }
    let weighted_f1 = if t_len == 0 {
        1.0
    } else {
        (0..n_true)
            .map(|c| {
                let denom = predicted[c] + support[c];
                let f1 = if denom == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 };
                support[c] as f64 / t_len as f64 * f1
            })
            .sum()
    };
    let n_switches = aligned
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count();
    SegmentationScore {
        accuracy: if t_len == 0 { 1.0 } else { hits as f64 / t_len as f64 },
        weighted_f1,
        matching: alignment.matching.clone(),
        n_switches,
    }
}

/// Align then score.
pub fn evaluate(predicted: &[usize], truth: &[usize]) -> SegmentationScore {
    let mut s = score(&align_labels(predicted, truth), truth);
    s.n_switches = crate::samplers::count_switches(predicted);
    s
}
