//! CTC prefix beam search with shallow language-model fusion.
//!
//! Each hypothesis is a label prefix carrying the log mass of all paths that
//! collapse to it, split by whether the path currently ends in blank. The
//! LM is queried whenever a prefix grows, and its end-of-sequence score is
//! added once after the last frame. Hypotheses are ranked by
//!
//! ```text
//! fused = logaddexp(p_blank, p_nonblank) + lm_weight * lm_log + insertion_penalty * |prefix|
//! ```

use std::collections::BTreeMap;

use crate::alphabet::Transcript;
use crate::ctc::EmissionMatrix;
use crate::lm::CharLm;
use crate::math::log_add_exp;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub beam_size: usize,
    pub lm_weight: f64,
    /// Added once per emitted letter; negative values discourage insertions.
    pub insertion_penalty: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            beam_size: 16,
            lm_weight: 0.0,
            insertion_penalty: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn new(beam_size: usize, lm_weight: f64, insertion_penalty: f64) -> Result<Self> {
        let config = FusionConfig {
            beam_size,
            lm_weight,
            insertion_penalty,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidParameter("beam size must be at least 1".into()));
        }
        if !(self.lm_weight >= 0.0 && self.lm_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "LM weight must be finite and non-negative, got {}",
                self.lm_weight
            )));
        }
        if !self.insertion_penalty.is_finite() {
            return Err(Error::InvalidParameter("insertion penalty must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    pub prefix: Transcript,
    pub log_p_blank: f64,
    pub log_p_nonblank: f64,
    pub lm_log: f64,
    pub fused: f64,
}

impl BeamHypothesis {
    pub fn log_p_total(&self) -> f64 {
        log_add_exp(self.log_p_blank, self.log_p_nonblank)
    }

    /// The fused score implied by the other fields.
    pub fn fused_score(&self, lm_weight: f64, insertion_penalty: f64) -> f64 {
        let mut score = self.log_p_total();
        if lm_weight != 0.0 {
            score += lm_weight * self.lm_log;
        }
        score + insertion_penalty * self.prefix.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub best: Transcript,
    /// Finalized hypotheses, best first.
    pub nbest: Vec<(Transcript, f64)>,
}

#[derive(Clone, Copy)]
struct Mass {
    blank: f64,
    nonblank: f64,
    lm_log: f64,
}

fn rank(hyps: &mut [BeamHypothesis]) {
    hyps.sort_by(|a, b| b.fused.total_cmp(&a.fused).then_with(|| a.prefix.cmp(&b.prefix)));
}

fn check_lm(em: &EmissionMatrix, lm: Option<&dyn CharLm>) -> Result<()> {
    match lm {
        Some(lm) if lm.n_letters() != em.blank() => Err(Error::shape(
            "language model vocabulary",
            em.blank(),
            lm.n_letters(),
        )),
        _ => Ok(()),
    }
}

/// Runs the search over every frame and returns the surviving beam, best
/// first, before the LM end-of-sequence score is applied.
pub fn prefix_beam_search(
    em: &EmissionMatrix,
    lm: Option<&dyn CharLm>,
    config: &FusionConfig,
) -> Result<Vec<BeamHypothesis>> {
    config.validate()?;
    check_lm(em, lm)?;
    let lm_weight = if lm.is_some() { config.lm_weight } else { 0.0 };
    let blank = em.blank();

    let mut beam = vec![BeamHypothesis {
        prefix: Transcript::empty(),
        log_p_blank: 0.0,
        log_p_nonblank: f64::NEG_INFINITY,
        lm_log: 0.0,
        fused: 0.0,
    }];

    for t in 0..em.num_frames() {
        let row = em.row(t);
        let mut next: BTreeMap<Vec<usize>, Mass> = BTreeMap::new();
        let fresh = |lm_log| Mass {
            blank: f64::NEG_INFINITY,
            nonblank: f64::NEG_INFINITY,
            lm_log,
        };

        for hyp in &beam {
            let prefix = hyp.prefix.labels();
            let total = hyp.log_p_total();
            let last = prefix.last().copied();

            // stay on the same prefix: emit blank, or repeat the last letter
            let stay = next.entry(prefix.to_vec()).or_insert_with(|| fresh(hyp.lm_log));
            stay.blank = log_add_exp(stay.blank, total + row[blank]);
            if let Some(c) = last {
                stay.nonblank = log_add_exp(stay.nonblank, hyp.log_p_nonblank + row[c]);
            }

            let lm_dist = match lm {
                Some(lm) if lm_weight != 0.0 => Some(lm.log_distribution(prefix)),
                _ => None,
            };
            for c in 0..blank {
                // a repeated letter only extends paths that passed through blank
                let source = if last == Some(c) { hyp.log_p_blank } else { total };
                let mass = source + row[c];
                if mass == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = prefix.to_vec();
                extended.push(c);
                let lm_log = hyp.lm_log + lm_dist.as_ref().map_or(0.0, |d| d[c]);
                let entry = next.entry(extended).or_insert_with(|| fresh(lm_log));
                entry.nonblank = log_add_exp(entry.nonblank, mass);
            }
        }

        let mut candidates: Vec<BeamHypothesis> = next
            .into_iter()
            .filter_map(|(prefix, m)| {
                let mut h = BeamHypothesis {
                    prefix: Transcript(prefix),
                    log_p_blank: m.blank,
                    log_p_nonblank: m.nonblank,
                    lm_log: m.lm_log,
                    fused: 0.0,
                };
                if h.log_p_total() == f64::NEG_INFINITY {
                    return None;
                }
                h.fused = h.fused_score(lm_weight, config.insertion_penalty);
                Some(h)
            })
            .collect();
        rank(&mut candidates);
        candidates.truncate(config.beam_size);
        if candidates.is_empty() {
            return Err(Error::Empty("beam (every path has zero probability)"));
        }
        beam = candidates;
    }
    Ok(beam)
}

/// Prefix beam search followed by end-of-sequence LM scoring.
pub fn beam_decode(em: &EmissionMatrix, lm: Option<&dyn CharLm>, config: &FusionConfig) -> Result<BeamOutput> {
    let mut beam = prefix_beam_search(em, lm, config)?;
    let lm_weight = if lm.is_some() { config.lm_weight } else { 0.0 };
    if let Some(lm) = lm {
        if lm_weight != 0.0 {
            for h in &mut beam {
                h.lm_log += lm.log_prob(h.prefix.labels(), lm.end_id());
                h.fused = h.fused_score(lm_weight, config.insertion_penalty);
            }
            rank(&mut beam);
        }
    }
    Ok(BeamOutput {
        best: beam[0].prefix.clone(),
        nbest: beam.into_iter().map(|h| (h.prefix, h.fused)).collect(),
    })
}
