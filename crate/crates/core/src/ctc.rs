//! Connectionist temporal classification over an emission matrix whose last
//! column is the blank.
//!
//! All probabilities are handled in log space; an impossible event is
//! `f64::NEG_INFINITY`.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::alphabet::{collapse, Path, Transcript};
use crate::math::{argmax, log_add_exp, log_softmax, log_sum_exp};
use crate::{Error, Result};

/// Tolerance on the per-row log-sum-exp of an emission matrix.
pub const ROW_NORMALIZATION_TOL: f64 = 1e-9;

/// Encoder outputs, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    vectors: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 {
            return Err(Error::Empty("feature sequence"));
        }
        Ok(FeatureSequence { vectors })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::shape("feature sequence", dim, bad.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let vectors = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Self::new(vectors)
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn num_frames(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Affine map from features to per-frame logits over letters plus blank.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionLayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl EmissionLayerParams {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape("emission bias", weight.nrows(), bias.len()));
        }
        if bias.is_empty() {
            return Err(Error::Empty("emission layer"));
        }
        Ok(EmissionLayerParams { weight, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Per-frame log-probabilities, `T x C`, blank in column `C - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionMatrix {
    log_probs: Array2<f64>,
}

impl EmissionMatrix {
    /// Wraps log-probabilities after checking that each row is normalized.
    pub fn new(log_probs: Array2<f64>) -> Result<Self> {
        if log_probs.nrows() == 0 {
            return Err(Error::Empty("emission matrix"));
        }
        if log_probs.ncols() == 0 {
            return Err(Error::Empty("emission row"));
        }
        for (t, row) in log_probs.axis_iter(Axis(0)).enumerate() {
            let lse = log_sum_exp(&row.to_vec());
            if !(lse.abs() <= ROW_NORMALIZATION_TOL) || row.iter().any(|v| v.is_nan()) {
                return Err(Error::Unnormalized { row: t, lse });
            }
        }
        Ok(EmissionMatrix { log_probs })
    }

    pub fn from_probs(probs: Array2<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParameter("negative probability".into()));
        }
        Self::new(probs.mapv(f64::ln))
    }

    /// Row-wise log-softmax of unnormalized scores.
    pub fn from_logits(logits: &Array2<f64>) -> Result<Self> {
        let mut out = logits.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let normalized = log_softmax(row.view());
            row.assign(&normalized);
        }
        Self::new(out)
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    /// Letters plus blank.
    pub fn num_classes(&self) -> usize {
        self.log_probs.ncols()
    }

    pub fn blank(&self) -> usize {
        self.log_probs.ncols() - 1
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.log_probs.row(t)
    }

    #[inline]
    pub fn log_prob(&self, t: usize, k: usize) -> f64 {
        self.log_probs[[t, k]]
    }

    fn check_labels(&self, w: &Transcript) -> Result<()> {
        match w.labels().iter().find(|&&l| l >= self.blank()) {
            Some(&id) => Err(Error::InvalidSymbolId {
                id,
                size: self.blank(),
            }),
            None => Ok(()),
        }
    }
}

/// Row `t` is `log_softmax(weight * e_t + bias)`.
pub fn emissions(features: &FeatureSequence, params: &EmissionLayerParams) -> Result<EmissionMatrix> {
    if features.dim() != params.input_dim() {
        return Err(Error::shape(
            "emission layer input",
            params.input_dim(),
            features.dim(),
        ));
    }
    let logits = features.vectors().dot(&params.weight.t()) + &params.bias;
    EmissionMatrix::from_logits(&logits)
}

/// `sum_t log y[t, path[t]]`.
pub fn path_log_prob(em: &EmissionMatrix, path: &Path) -> Result<f64> {
    if path.len() != em.num_frames() {
        return Err(Error::LengthMismatch {
            expected: em.num_frames(),
            actual: path.len(),
        });
    }
    if let Some(&bad) = path.frame_labels().iter().find(|&&k| k >= em.num_classes()) {
        return Err(Error::InvalidSymbolId {
            id: bad,
            size: em.num_classes(),
        });
    }
    Ok(path
        .frame_labels()
        .iter()
        .enumerate()
        .map(|(t, &k)| em.log_prob(t, k))
        .sum())
}

/// Label sequence with blanks around and between letters: `- l1 - l2 ... ls -`.
fn extended_labels(w: &Transcript, blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * w.len() + 1);
    ext.push(blank);
    for &l in w.labels() {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Whether state `s` may be entered directly from `s - 2`.
#[inline]
fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

/// Log forward variables; `alpha[t][s]` includes the emission at `t`.
fn forward(em: &EmissionMatrix, ext: &[usize]) -> Array2<f64> {
    let (frames, states) = (em.num_frames(), ext.len());
    let blank = em.blank();
    let mut alpha = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    alpha[[0, 0]] = em.log_prob(0, ext[0]);
    if states > 1 {
        alpha[[0, 1]] = em.log_prob(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add_exp(acc, alpha[[t - 1, s - 1]]);
            }
            if can_skip(ext, s, blank) {
                acc = log_add_exp(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + em.log_prob(t, ext[s]);
        }
    }
    alpha
}

/// Log backward variables; `beta[t][s]` excludes the emission at `t`.
fn backward(em: &EmissionMatrix, ext: &[usize]) -> Array2<f64> {
    let (frames, states) = (em.num_frames(), ext.len());
    let blank = em.blank();
    let mut beta = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    beta[[frames - 1, states - 1]] = 0.0;
    if states > 1 {
        beta[[frames - 1, states - 2]] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut acc = beta[[t + 1, s]] + em.log_prob(t + 1, ext[s]);
            if s + 1 < states {
                acc = log_add_exp(acc, beta[[t + 1, s + 1]] + em.log_prob(t + 1, ext[s + 1]));
            }
            if s + 2 < states && can_skip(ext, s + 2, blank) {
                acc = log_add_exp(acc, beta[[t + 1, s + 2]] + em.log_prob(t + 1, ext[s + 2]));
            }
            beta[[t, s]] = acc;
        }
    }
    beta
}

fn final_log_prob(alpha: &Array2<f64>) -> f64 {
    let (frames, states) = alpha.dim();
    let last = alpha[[frames - 1, states - 1]];
    if states > 1 {
        log_add_exp(last, alpha[[frames - 1, states - 2]])
    } else {
        last
    }
}

/// `log p(w | e)`: total probability of every path collapsing to `w`.
/// Returns `-inf` when no path of this length collapses to `w`.
pub fn label_log_prob(em: &EmissionMatrix, w: &Transcript) -> Result<f64> {
    em.check_labels(w)?;
    if w.min_frames() > em.num_frames() {
        return Ok(f64::NEG_INFINITY);
    }
    let ext = extended_labels(w, em.blank());
    Ok(final_log_prob(&forward(em, &ext)))
}

/// CTC loss `-log p(w | e)` and its gradient with respect to the
/// pre-softmax logits that produced `em`.
pub fn ctc_loss_grad(em: &EmissionMatrix, w: &Transcript) -> Result<(f64, Array2<f64>)> {
    em.check_labels(w)?;
    let infeasible = || Error::Infeasible {
        length: w.len(),
        frames: em.num_frames(),
    };
    if w.min_frames() > em.num_frames() {
        return Err(infeasible());
    }
    let ext = extended_labels(w, em.blank());
    let alpha = forward(em, &ext);
    let log_p = final_log_prob(&alpha);
    if log_p == f64::NEG_INFINITY {
        return Err(infeasible());
    }
    let beta = backward(em, &ext);

    let (frames, classes) = (em.num_frames(), em.num_classes());
    let mut occupancy = Array2::from_elem((frames, classes), f64::NEG_INFINITY);
    for t in 0..frames {
        for (s, &k) in ext.iter().enumerate() {
            occupancy[[t, k]] = log_add_exp(occupancy[[t, k]], alpha[[t, s]] + beta[[t, s]]);
        }
    }
    let mut grad = Array2::zeros((frames, classes));
    for t in 0..frames {
        for k in 0..classes {
            grad[[t, k]] = em.log_prob(t, k).exp() - (occupancy[[t, k]] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

/// Per-frame argmax (lowest id on ties), then collapse.
pub fn greedy_decode(em: &EmissionMatrix) -> Transcript {
    let path: Vec<usize> = em
        .log_probs()
        .axis_iter(Axis(0))
        .map(|row| argmax(row.iter().copied()).expect("rows are non-empty"))
        .collect();
    collapse(&path, em.blank())
}
