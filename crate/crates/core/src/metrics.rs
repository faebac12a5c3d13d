//! Token-level micro-averaged F1 over the entity classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::LabelClass;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub micro_f1: f64,
    /// F1 of TAG, EQ, QUANT and UoM, in that order.
    pub per_class_f1: [f64; 4],
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Running TP/FP/FN counts per entity class.
#[derive(Clone, Debug, Default)]
pub struct F1Counter {
    tp: [usize; LabelClass::COUNT],
    fp: [usize; LabelClass::COUNT],
    fn_: [usize; LabelClass::COUNT],
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

impl F1Counter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one cell's gold and predicted labels. `O` never counts as a hit.
    pub fn add(&mut self, gold: &[LabelClass], pred: &[LabelClass]) -> Result<()> {
        if gold.len() != pred.len() {
            return Err(Error::validation(format!(
                "prediction has {} tokens, gold has {}",
                pred.len(),
                gold.len()
            )));
        }
        for (&g, &p) in gold.iter().zip(pred) {
            if g == p {
                if g.is_entity() {
                    self.tp[g.index()] += 1;
                }
                continue;
            }
            if p.is_entity() {
                self.fp[p.index()] += 1;
            }
            if g.is_entity() {
                self.fn_[g.index()] += 1;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> F1Report {
        let tp: usize = self.tp.iter().sum();
        let fp: usize = self.fp.iter().sum();
        let fn_: usize = self.fn_.iter().sum();
        let mut per_class_f1 = [0.0; 4];
        for (k, c) in LabelClass::ENTITIES.into_iter().enumerate() {
            let i = c.index();
            per_class_f1[k] = f1(self.tp[i], self.fp[i], self.fn_[i]);
        }
        F1Report {
            micro_f1: f1(tp, fp, fn_),
            per_class_f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

/// Micro F1 over (gold, predicted) label sequences.
pub fn micro_f1<'a>(pairs: impl IntoIterator<Item = (&'a [LabelClass], &'a [LabelClass])>) -> Result<F1Report> {
    let mut c = F1Counter::new();
    for (g, p) in pairs {
        c.add(g, p)?;
    }
    Ok(c.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use LabelClass::*;

    #[test]
    fn perfect_and_empty_predictions() {
        let gold = [Tag, O, Eq];
        assert_eq!(micro_f1([(&gold[..], &gold[..])]).unwrap().micro_f1, 1.0);
        assert_eq!(micro_f1([(&gold[..], &[O, O, O][..])]).unwrap().micro_f1, 0.0);
        assert_eq!(micro_f1([(&[O, O][..], &[O, O][..])]).unwrap().micro_f1, 0.0);
    }

    #[test]
    fn hand_counted_example() {
        let r = micro_f1([(&[Tag, O, Eq][..], &[Tag, Tag, O][..])]).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 1));
        assert!((r.micro_f1 - 0.5).abs() < 1e-12);
        // TAG: tp 1, fp 1 -> 2/3; EQ: fn 1 -> 0
        assert!((r.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class_f1[1], 0.0);
    }

    #[test]
    fn confusion_counts_both_sides() {
        let r = micro_f1([(&[Quant][..], &[Uom][..])]).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (0, 1, 1));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(micro_f1([(&[Tag][..], &[Tag, O][..])]).is_err());
    }
}
