//! Training regimes, confusion matrices and evaluation reports.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SplitName};
use crate::error::{Error, Result};
use crate::model::{ClassifierConfig, CnnModel, EpochMetrics, Prediction, TrainOptions};
use crate::nn::OptimizerConfig;

/// Which splits a regime trains on, fine-tunes on and tests on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub id: u8,
    pub pretrain_sets: Vec<SplitName>,
    pub finetune_sets: Vec<SplitName>,
    pub test_set: SplitName,
}

impl RegimeSpec {
    /// 1: TS-A; 2: TS-B; 3: TS-A + TS-B; 4: TS-B then fine-tune on TS-A.
    /// All test on EVAL.
    pub fn standard(id: u8) -> Result<Self> {
        use SplitName::{TsA, TsB};
        let (pretrain_sets, finetune_sets) = match id {
            1 => (vec![TsA], vec![]),
            2 => (vec![TsB], vec![]),
            3 => (vec![TsA, TsB], vec![]),
            4 => (vec![TsB], vec![TsA]),
            _ => return Err(Error::InvalidConfig(format!("regime must be 1, 2, 3 or 4, got {id}"))),
        };
        Ok(Self {
            id,
            pretrain_sets,
            finetune_sets,
            test_set: SplitName::Eval,
        })
    }

    /// Every split the regime reads.
    pub fn required_splits(&self) -> Vec<SplitName> {
        let mut all: Vec<SplitName> = self
            .pretrain_sets
            .iter()
            .chain(&self.finetune_sets)
            .chain(core::iter::once(&self.test_set))
            .cloned()
            .collect();
        all.dedup();
        all
    }
}

/// The datasets available to a regime run.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub ts_a: Option<LabeledDataset>,
    pub ts_b: Option<LabeledDataset>,
    pub eval: Option<LabeledDataset>,
}

impl Splits {
    pub fn get(&self, name: &SplitName) -> Result<&LabeledDataset> {
        match name {
            SplitName::TsA => self.ts_a.as_ref(),
            SplitName::TsB => self.ts_b.as_ref(),
            SplitName::Eval => self.eval.as_ref(),
            SplitName::Custom(_) => None,
        }
        .ok_or_else(|| Error::MissingSplit(format!("{name}")))
    }

    fn union(&self, names: &[SplitName]) -> Result<Option<LabeledDataset>> {
        let parts = names.iter().map(|n| self.get(n)).collect::<Result<Vec<_>>>()?;
        Ok(match parts.as_slice() {
            [] => None,
            [one] => Some((*one).clone()),
            many => {
                let name = names.iter().map(|n| format!("{n}")).collect::<Vec<_>>().join("+");
                Some(LabeledDataset::concat(many, SplitName::Custom(name))?)
            }
        })
    }
}

/// One wrongly classified test item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub file: String,
    pub actual: usize,
    pub predicted: usize,
    pub confidence: f32,
}

impl Misclassification {
    /// Test-set position encoded in the file reference.
    pub fn index(&self) -> Option<usize> {
        self.file
            .strip_prefix("sample_")
            .and_then(|s| s.split('.').next())
            .and_then(|s| s.parse().ok())
    }
}

pub fn sample_file_name(index: usize) -> String {
    format!("sample_{index:05}.pgm")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub regime: u8,
    pub accuracy: f64,
    /// Rows are actual classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub misclassified: Vec<Misclassification>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    /// Confusion matrix as CSV, header `actual,p0,p1,...`.
    pub fn confusion_csv(&self) -> String {
        let n = self.confusion.len();
        let mut out = String::from("actual");
        for p in 0..n {
            out.push_str(&format!(",p{p}"));
        }
        out.push('\n');
        for (a, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("{a}"));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `M[a][p]` counts items of actual class `a` predicted as `p`.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs labels",
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &a) in predictions.iter().zip(labels) {
        for v in [p, a] {
            if v >= n_classes {
                return Err(Error::LabelOutOfRange { label: v, n_classes });
            }
        }
        m[a][p] += 1;
    }
    Ok(m)
}

/// Top-1 evaluation of `model` on `dataset`.
pub fn evaluate(model: &CnnModel, dataset: &LabeledDataset, regime: u8) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = model.config().n_classes;
    dataset.check_labels(n)?;
    let preds: Vec<Prediction> = model.predict_dataset(dataset)?;
    let classes: Vec<usize> = preds.iter().map(|p| p.class).collect();
    let labels: Vec<usize> = (0..dataset.len()).map(|i| dataset.label(i)).collect();
    let confusion = confusion_matrix(&classes, &labels, n)?;
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    let misclassified = preds
        .iter()
        .enumerate()
        .filter(|(i, p)| p.class != labels[*i])
        .map(|(i, p)| Misclassification {
            file: sample_file_name(i),
            actual: labels[i],
            predicted: p.class,
            confidence: p.confidence,
        })
        .collect();
    Ok(EvalReport {
        regime,
        accuracy: correct as f64 / dataset.len() as f64,
        confusion,
        misclassified,
    })
}

/// Training stage reported to epoch callbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    FineTune,
}

/// Trains a fresh model as the regime prescribes.
///
/// The optimizer seed is replaced by `seed`; fine-tuning uses
/// [`OptimizerConfig::fine_tune_from`] and updates every layer.
pub fn train_regime(
    spec: &RegimeSpec,
    splits: &Splits,
    config: &ClassifierConfig,
    opt: &OptimizerConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(Stage, &EpochMetrics),
) -> Result<CnnModel> {
    for name in spec.required_splits() {
        splits.get(&name)?;
    }
    let opt = OptimizerConfig { seed, ..*opt };
    let mut model = CnnModel::build(config.clone(), seed)?;
    if let Some(train) = splits.union(&spec.pretrain_sets)? {
        let mut cb = |m: &EpochMetrics| on_epoch(Stage::Pretrain, m);
        let options = TrainOptions {
            on_epoch: Some(&mut cb),
            ..TrainOptions::default()
        };
        model.train_with(&train, &opt, options)?;
    }
    if let Some(tune) = splits.union(&spec.finetune_sets)? {
        let mut cb = |m: &EpochMetrics| on_epoch(Stage::FineTune, m);
        let options = TrainOptions {
            stage: Some("fine_tune".into()),
            on_epoch: Some(&mut cb),
            ..TrainOptions::default()
        };
        model.train_with(&tune, &OptimizerConfig::fine_tune_from(&opt), options)?;
    }
    Ok(model)
}

/// [`train_regime`] followed by evaluation on the regime's test split.
pub fn run_regime(
    spec: &RegimeSpec,
    splits: &Splits,
    config: &ClassifierConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<(EvalReport, CnnModel)> {
    let mut model = train_regime(spec, splits, config, opt, seed, &mut |_, _| {})?;
    let report = evaluate(&model, splits.get(&spec.test_set)?, spec.id)?;
    if let Some(last) = model.history.last_mut() {
        last.final_accuracy = Some(report.accuracy);
    }
    Ok((report, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_constant_predictions() {
        let labels = [0, 1, 2, 1];
        let m = confusion_matrix(&labels, &labels, 3).unwrap();
        assert_eq!(m, [[1, 0, 0], [0, 2, 0], [0, 0, 1]]);
        let m = confusion_matrix(&[0; 4], &labels, 3).unwrap();
        assert!(m.iter().all(|r| r[1] == 0 && r[2] == 0));
        assert_eq!(m.iter().map(|r| r[0]).sum::<usize>(), 4);
    }

    #[test]
    fn hand_counted_case() {
        // actual:    0 0 1 2 2
        // predicted: 0 1 1 2 0
        let m = confusion_matrix(&[0, 1, 1, 2, 0], &[0, 0, 1, 2, 2], 3).unwrap();
        assert_eq!(m, [[1, 1, 0], [0, 1, 0], [1, 0, 1]]);
    }

    #[test]
    fn out_of_range_and_length_errors() {
        assert!(matches!(confusion_matrix(&[3], &[0], 3), Err(Error::LabelOutOfRange { label: 3, .. })));
        assert!(matches!(confusion_matrix(&[0, 1], &[0], 3), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn regimes_name_their_splits() {
        let r4 = RegimeSpec::standard(4).unwrap();
        assert_eq!(r4.pretrain_sets, [SplitName::TsB]);
        assert_eq!(r4.finetune_sets, [SplitName::TsA]);
        assert_eq!(RegimeSpec::standard(3).unwrap().pretrain_sets.len(), 2);
        assert!(RegimeSpec::standard(5).is_err());
        let missing = run_regime(
            &r4,
            &Splits::default(),
            &ClassifierConfig::english_digits(),
            &OptimizerConfig::default(),
            1,
        );
        assert!(matches!(missing, Err(Error::MissingSplit(s)) if s == "TS-B"));
    }

    #[test]
    fn report_bookkeeping() {
        let m = CnnModel::build(ClassifierConfig::new(3, "t").unwrap(), 1).unwrap();
        let images: Vec<u8> = (0..6 * 56 * 56).map(|i| (i * 7 % 251) as u8).collect();
        let d = LabeledDataset::new(56, images, alloc::vec![0, 1, 2, 0, 1, 2], SplitName::Eval, "t").unwrap();
        let r = evaluate(&m, &d, 2).unwrap();
        assert_eq!(r.row_sums(), [2, 2, 2]);
        assert_eq!(r.total(), 6);
        assert_eq!(r.correct() as f64 / 6.0, r.accuracy);
        assert_eq!(r.misclassified.len(), 6 - r.correct());
        for mis in &r.misclassified {
            assert!(mis.confidence > 0.0 && mis.confidence <= 1.0);
            assert_eq!(d.label(mis.index().unwrap()), mis.actual);
        }
        assert!(r.confusion_csv().starts_with("actual,p0,p1,p2\n"));
    }
}
