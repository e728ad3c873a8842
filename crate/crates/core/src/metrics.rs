use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::LabelMask;
use crate::mask::BinaryMask;

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

/// `2|P ∩ G| / (|P| + |G|)`; two empty masks agree perfectly.
pub fn dice_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let inter = pred.intersection(gt).count();
    Ok(dice_from_counts(inter, pred.count(), gt.count()))
}

fn dice_from_counts(inter: usize, p: usize, g: usize) -> f64 {
    if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    }
}

/// Fraction of pixels on which the masks agree.
pub fn accuracy(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let same = pred
        .bits()
        .iter()
        .zip(gt.bits())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / pred.bits().len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` when `labels` has only one class.
pub fn auc_scores(scores: &[f32], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U statistic, kept integral.
    let mut twice_u = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(Some(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64)))
}

pub fn auc(scores: &[f32], gt: &BinaryMask) -> Result<Option<f64>> {
    auc_scores(scores, gt.bits())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub dice: f64,
    pub accuracy: f64,
    /// Absent when the scores are unavailable or the ground truth has a
    /// single class.
    pub auc: Option<f64>,
}

/// Per-class one-vs-rest metrics with two aggregates: `overall` is the
/// unweighted mean over classes, `micro` pools every class's pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<u8, ClassMetrics>,
    pub overall: ClassMetrics,
    pub micro: ClassMetrics,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    /// Evaluates every class present in either map. `scores[c]` holds the
    /// pre-threshold probabilities of class `c`, row-major.
    pub fn evaluate(
        pred: &LabelMask,
        gt: &LabelMask,
        scores: &BTreeMap<u8, Vec<f32>>,
    ) -> Result<Self> {
        same_dims(pred.dims(), gt.dims())?;
        let n = pred.labels().len();
        if let Some((c, s)) = scores.iter().find(|(_, s)| s.len() != n) {
            return Err(Error::shape(format!(
                "class {c} has {} scores for {n} pixels",
                s.len()
            )));
        }
        let mut classes = gt.classes();
        classes.extend(pred.classes());
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::invalid("no classes in either label map"));
        }

        let mut per_class = BTreeMap::new();
        let (mut inter, mut psum, mut gsum, mut agree) = (0, 0, 0, 0);
        let mut pooled_scores = Vec::new();
        let mut pooled_labels = Vec::new();
        let all_scored = classes.iter().all(|c| scores.contains_key(c));
        for &c in &classes {
            let p = pred.class_mask(c);
            let g = gt.class_mask(c);
            let i = p.intersection(&g).count();
            let a = p
                .bits()
                .iter()
                .zip(g.bits())
                .filter(|(x, y)| x == y)
                .count();
            inter += i;
            psum += p.count();
            gsum += g.count();
            agree += a;
            let class_auc = match scores.get(&c) {
                Some(s) => {
                    if all_scored {
                        pooled_scores.extend_from_slice(s);
                        pooled_labels.extend_from_slice(g.bits());
                    }
                    auc_scores(s, g.bits())?
                }
                None => None,
            };
            per_class.insert(
                c,
                ClassMetrics {
                    dice: dice_from_counts(i, p.count(), g.count()),
                    accuracy: a as f64 / n as f64,
                    auc: class_auc,
                },
            );
        }
        let overall = ClassMetrics {
            dice: mean(per_class.values().map(|m| m.dice)).expect("at least one class"),
            accuracy: mean(per_class.values().map(|m| m.accuracy)).expect("at least one class"),
            auc: mean(per_class.values().filter_map(|m| m.auc)),
        };
        let micro = ClassMetrics {
            dice: dice_from_counts(inter, psum, gsum),
            accuracy: agree as f64 / (n * classes.len()) as f64,
            auc: if all_scored {
                auc_scores(&pooled_scores, &pooled_labels)?
            } else {
                None
            },
        };
        Ok(MetricsReport {
            per_class,
            overall,
            micro,
        })
    }

    /// Header for [`csv_row`](Self::csv_row): `dice`, `acc`, `auc` per
    /// class, then the overall and micro aggregates.
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = Vec::new();
        let names = self
            .per_class
            .keys()
            .map(|c| format!("class{c}"))
            .chain(["overall".to_string(), "micro".to_string()]);
        for name in names {
            for m in ["dice", "acc", "auc"] {
                cols.push(format!("{name}_{m}"));
            }
        }
        cols.join(",")
    }

    /// One CSV row; an absent AUC is an empty cell.
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        for m in self.per_class.values().chain([&self.overall, &self.micro]) {
            if !row.is_empty() {
                row.push(',');
            }
            let _ = write!(row, "{:.6},{:.6},", m.dice, m.accuracy);
            if let Some(a) = m.auc {
                let _ = write!(row, "{a:.6}");
            }
        }
        row
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", self.csv_header(), self.csv_row())
    }
}
