//! Multinomial Naive Bayes over bag-of-words counts, the classical baseline.

use std::collections::BTreeMap;

use super::ModelError;
use crate::eval::{classification_report, confusion_matrix, ClassificationReport};
use crate::tone::{LabeledExample, ToneCategory, NUM_TONES};

/// Sparse token counts of one example; absent ids count zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    pub counts: BTreeMap<usize, u64>,
    pub dim: usize,
}

impl FeatureVector {
    pub fn from_ids(ids: &[usize], dim: usize) -> Self {
        let mut counts = BTreeMap::new();
        for &id in ids {
            *counts.entry(id).or_insert(0) += 1;
        }
        FeatureVector { counts, dim }
    }

    pub fn get(&self, id: usize) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialNb {
    log_prior: [f64; NUM_TONES],
    /// `log_likelihood[c][id]`
    log_likelihood: Vec<Vec<f64>>,
}

impl MultinomialNb {
    /// Fits with add-one smoothing on both the class prior
    /// `(N_c + 1) / (N + 7)` and the token likelihood
    /// `(count_c(id) + 1) / (total_c + dim)`.
    pub fn fit(examples: &[(FeatureVector, ToneCategory)], dim: usize) -> Result<Self, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyTrainSet);
        }
        let mut docs = [0u64; NUM_TONES];
        let mut counts = vec![vec![0u64; dim]; NUM_TONES];
        for (fv, c) in examples {
            docs[c.code()] += 1;
            for (&id, &n) in &fv.counts {
                let slot = counts[c.code()].get_mut(id).ok_or(ModelError::IdOutOfRange { id, vocab_size: dim })?;
                *slot += n;
            }
        }
        let n = examples.len() as f64;
        let mut log_prior = [0.0; NUM_TONES];
        for c in 0..NUM_TONES {
            log_prior[c] = ((docs[c] as f64 + 1.0) / (n + NUM_TONES as f64)).ln();
        }
        let log_likelihood = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = (total + dim as u64) as f64;
                row.iter().map(|&k| ((k as f64 + 1.0) / denom).ln()).collect()
            })
            .collect();
        Ok(MultinomialNb { log_prior, log_likelihood })
    }

    /// Unnormalized log posterior of every class.
    pub fn log_posterior(&self, fv: &FeatureVector) -> [f64; NUM_TONES] {
        let mut out = self.log_prior;
        for (c, s) in out.iter_mut().enumerate() {
            for (&id, &n) in &fv.counts {
                if let Some(l) = self.log_likelihood[c].get(id) {
                    *s += n as f64 * l;
                }
            }
        }
        out
    }

    /// Class with the largest posterior, lower code on ties.
    pub fn predict(&self, fv: &FeatureVector) -> ToneCategory {
        let post = self.log_posterior(fv);
        let mut best = 0;
        for c in 1..NUM_TONES {
            if post[c] > post[best] {
                best = c;
            }
        }
        ToneCategory::from_code(best).expect("class code in range")
    }
}

/// Trains on `train_set`, predicts `test_set` and reports the usual metrics.
/// The feature dimension covers every id seen in either set.
pub fn naive_bayes_baseline(
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
) -> Result<ClassificationReport, ModelError> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let dim = train_set
        .iter()
        .chain(test_set)
        .flat_map(|e| e.encoded.active().iter().copied())
        .max()
        .map_or(1, |m| m + 1);
    let features = |set: &[LabeledExample]| -> Vec<(FeatureVector, ToneCategory)> {
        set.iter()
            .map(|e| (FeatureVector::from_ids(e.encoded.active(), dim), e.label))
            .collect()
    };
    let nb = MultinomialNb::fit(&features(train_set), dim)?;
    let test = features(test_set);
    let truth: Vec<usize> = test.iter().map(|(_, c)| c.code()).collect();
    let pred: Vec<usize> = test.iter().map(|(fv, _)| nb.predict(fv).code()).collect();
    let cm = confusion_matrix(&truth, &pred)?;
    Ok(classification_report(&cm)?)
}
