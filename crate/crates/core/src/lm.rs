//! Character language models over letters plus an end-of-sequence event.
//!
//! A model over `n` letters answers with a log-distribution of length
//! `n + 1`; index `n` is the end token. Histories are plain letter ids,
//! the start of sequence is implicit.

use std::collections::BTreeMap;

use crate::alphabet::Transcript;
use crate::math::log_sum_exp;
use crate::{Error, Result};

pub trait CharLm: Send + Sync {
    /// Letters modeled; the end token has id `n_letters()`.
    fn n_letters(&self) -> usize;

    /// Normalized log-distribution over letters plus end given `history`.
    fn log_distribution(&self, history: &[usize]) -> Vec<f64>;

    fn end_id(&self) -> usize {
        self.n_letters()
    }

    fn log_prob(&self, history: &[usize], next: usize) -> f64 {
        self.log_distribution(history)[next]
    }
}

/// Every outcome equally likely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformLm {
    pub n_letters: usize,
}

impl CharLm for UniformLm {
    fn n_letters(&self) -> usize {
        self.n_letters
    }

    fn log_distribution(&self, _history: &[usize]) -> Vec<f64> {
        let outcomes = self.n_letters + 1;
        vec![-(outcomes as f64).ln(); outcomes]
    }
}

/// Add-k smoothed n-gram model with start-padded histories and no backoff.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramLm {
    order: usize,
    k: f64,
    n_letters: usize,
    /// context (length `order - 1`, start-padded) -> counts over letters plus end
    counts: BTreeMap<Vec<usize>, Vec<u64>>,
}

impl NGramLm {
    /// Builds a model from explicit counts, e.g. when reading a model file.
    pub fn from_counts(
        order: usize,
        k: f64,
        n_letters: usize,
        counts: BTreeMap<Vec<usize>, Vec<u64>>,
    ) -> Result<Self> {
        check_hyper(order, k)?;
        for (ctx, row) in &counts {
            if ctx.len() != order - 1 {
                return Err(Error::shape("n-gram context", order - 1, ctx.len()));
            }
            if row.len() != n_letters + 1 {
                return Err(Error::shape("n-gram count row", n_letters + 1, row.len()));
            }
            if let Some(&bad) = ctx.iter().find(|&&c| c >= n_letters && c != n_letters + 1) {
                return Err(Error::InvalidSymbolId {
                    id: bad,
                    size: n_letters,
                });
            }
        }
        Ok(NGramLm {
            order,
            k,
            n_letters,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Id used for start padding inside contexts.
    pub fn start_id(&self) -> usize {
        self.n_letters + 1
    }

    pub fn counts(&self) -> &BTreeMap<Vec<usize>, Vec<u64>> {
        &self.counts
    }

    /// Start-padded context of length `order - 1` for a history.
    pub fn context(&self, history: &[usize]) -> Vec<usize> {
        let need = self.order - 1;
        let tail = &history[history.len().saturating_sub(need)..];
        let mut ctx = vec![self.start_id(); need - tail.len()];
        ctx.extend_from_slice(tail);
        ctx
    }

    /// Raw count of `symbol` after `context` (a padded context).
    pub fn count(&self, context: &[usize], symbol: usize) -> u64 {
        self.counts.get(context).map_or(0, |row| row[symbol])
    }

    /// Maximum-likelihood (unsmoothed) conditional; `None` for unseen contexts.
    pub fn unsmoothed_prob(&self, history: &[usize], symbol: usize) -> Option<f64> {
        let row = self.counts.get(&self.context(history))?;
        let total: u64 = row.iter().sum();
        Some(row[symbol] as f64 / total as f64)
    }
}

impl CharLm for NGramLm {
    fn n_letters(&self) -> usize {
        self.n_letters
    }

    fn log_distribution(&self, history: &[usize]) -> Vec<f64> {
        let outcomes = self.n_letters + 1;
        let row = self.counts.get(&self.context(history));
        let total = row.map_or(0, |r| r.iter().sum::<u64>()) as f64;
        let denom = (total + self.k * outcomes as f64).ln();
        (0..outcomes)
            .map(|s| {
                let c = row.map_or(0, |r| r[s]) as f64;
                (c + self.k).ln() - denom
            })
            .collect()
    }
}

fn check_hyper(order: usize, k: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidParameter("n-gram order must be at least 1".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "add-k constant must be positive and finite, got {k}"
        )));
    }
    Ok(())
}

/// Counts every n-gram of every sequence, each sequence terminated by the
/// end token.
pub fn train_ngram(corpus: &[Transcript], n_letters: usize, order: usize, k: f64) -> Result<NGramLm> {
    check_hyper(order, k)?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut lm = NGramLm {
        order,
        k,
        n_letters,
        counts: BTreeMap::new(),
    };
    for w in corpus {
        if let Some(&id) = w.labels().iter().find(|&&l| l >= n_letters) {
            return Err(Error::InvalidSymbolId { id, size: n_letters });
        }
        let labels = w.labels();
        for t in 0..=labels.len() {
            let symbol = labels.get(t).copied().unwrap_or(n_letters);
            let ctx = lm.context(&labels[..t]);
            lm.counts.entry(ctx).or_insert_with(|| vec![0; n_letters + 1])[symbol] += 1;
        }
    }
    Ok(lm)
}

/// `sum_t log p(w_t | w_<t) + log p(end | w)`.
pub fn lm_log_prob(lm: &dyn CharLm, w: &Transcript) -> f64 {
    let labels = w.labels();
    (0..=labels.len())
        .map(|t| {
            let next = labels.get(t).copied().unwrap_or(lm.end_id());
            lm.log_prob(&labels[..t], next)
        })
        .sum()
}

/// Per-event perplexity, counting one end event per sequence.
pub fn perplexity(lm: &dyn CharLm, corpus: &[Transcript]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    let events: usize = corpus.iter().map(|w| w.len() + 1).sum();
    let total: f64 = corpus.iter().map(|w| lm_log_prob(lm, w)).sum();
    Ok((-total / events as f64).exp())
}

/// Log-sum-exp of a returned distribution; 0 for a well-formed model.
pub fn distribution_mass(lm: &dyn CharLm, history: &[usize]) -> f64 {
    log_sum_exp(&lm.log_distribution(history))
}
