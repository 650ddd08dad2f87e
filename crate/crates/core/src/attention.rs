//! Forward scoring and beam decoding for an attention-based LSTM decoder
//! over fixed encoder states.
//!
//! Output ids `0..n_letters` are letters and `n_letters` is the end token.
//! The embedding table has one extra row, `n_letters + 1`, for the start
//! token fed at the first step. The decoder state starts at zero.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};

use crate::alphabet::Transcript;
use crate::math::{log_softmax, sigmoid};
use crate::{Error, Result};

/// Weights of one LSTM gate: `w_input * x + w_hidden * h + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

impl GateParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GateParams {
            w_input: Array2::zeros((hidden, input)),
            w_hidden: Array2::zeros((hidden, hidden)),
            bias: Array1::zeros(hidden),
        }
    }

    fn pre_activation(&self, x: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> Array1<f64> {
        self.w_input.dot(&x) + self.w_hidden.dot(&h) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            input_gate: GateParams::zeros(hidden, input),
            forget_gate: GateParams::zeros(hidden, input),
            output_gate: GateParams::zeros(hidden, input),
            candidate: GateParams::zeros(hidden, input),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.input_gate.bias.len()
    }

    pub fn input_size(&self) -> usize {
        self.input_gate.w_input.ncols()
    }

    fn gates(&self) -> [(&'static str, &GateParams); 4] {
        [
            ("input gate", &self.input_gate),
            ("forget gate", &self.forget_gate),
            ("output gate", &self.output_gate),
            ("candidate", &self.candidate),
        ]
    }

    fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_size(), self.input_size());
        for (name, g) in self.gates() {
            if g.w_input.dim() != (h, x) {
                return Err(Error::shape(name, format!("{h}x{x}"), format!("{:?}", g.w_input.dim())));
            }
            if g.w_hidden.dim() != (h, h) {
                return Err(Error::shape(name, format!("{h}x{h}"), format!("{:?}", g.w_hidden.dim())));
            }
            if g.bias.len() != h {
                return Err(Error::shape(name, h, g.bias.len()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub hidden: Array1<f64>,
    pub cell: Array1<f64>,
}

impl DecoderState {
    pub fn zeros(width: usize) -> Self {
        DecoderState {
            hidden: Array1::zeros(width),
            cell: Array1::zeros(width),
        }
    }
}

/// All decoder weights. Shapes, with `m` the encoder width, `H` the decoder
/// width, `A` the attention width, `E` the embedding width and `V` the
/// output vocabulary (letters plus end):
///
/// | field | shape |
/// |---|---|
/// | `w_enc` | `A x m` |
/// | `w_dec` | `A x H` |
/// | `v_att` | `A` |
/// | `w_out` | `V x (H + m)` |
/// | `b_out` | `V` |
/// | `embed` | `(V + 1) x E` |
/// | `lstm` | input `E`, hidden `H` |
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_enc: Array2<f64>,
    pub w_dec: Array2<f64>,
    pub v_att: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub embed: Array2<f64>,
    pub lstm: LstmParams,
}

impl AttentionParams {
    /// All-zero parameters of the given sizes.
    pub fn zeros(n_letters: usize, enc_dim: usize, hidden: usize, att_dim: usize, embed_dim: usize) -> Self {
        let vocab = n_letters + 1;
        AttentionParams {
            w_enc: Array2::zeros((att_dim, enc_dim)),
            w_dec: Array2::zeros((att_dim, hidden)),
            v_att: Array1::zeros(att_dim),
            w_out: Array2::zeros((vocab, hidden + enc_dim)),
            b_out: Array1::zeros(vocab),
            embed: Array2::zeros((vocab + 1, embed_dim)),
            lstm: LstmParams::zeros(hidden, embed_dim),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.b_out.len()
    }

    pub fn n_letters(&self) -> usize {
        self.b_out.len() - 1
    }

    pub fn end_id(&self) -> usize {
        self.n_letters()
    }

    pub fn start_id(&self) -> usize {
        self.vocab_size()
    }

    pub fn enc_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        let (att, m, h) = (self.v_att.len(), self.enc_dim(), self.hidden_size());
        if self.b_out.len() < 2 {
            return Err(Error::shape("output bias", "at least 2", self.b_out.len()));
        }
        if self.w_enc.nrows() != att {
            return Err(Error::shape("w_enc rows", att, self.w_enc.nrows()));
        }
        if self.w_dec.dim() != (att, h) {
            return Err(Error::shape("w_dec", format!("{att}x{h}"), format!("{:?}", self.w_dec.dim())));
        }
        let v = self.vocab_size();
        if self.w_out.dim() != (v, h + m) {
            return Err(Error::shape(
                "w_out",
                format!("{v}x{}", h + m),
                format!("{:?}", self.w_out.dim()),
            ));
        }
        if self.embed.nrows() != v + 1 {
            return Err(Error::shape("embed rows", v + 1, self.embed.nrows()));
        }
        if self.embed.ncols() != self.lstm.input_size() {
            return Err(Error::shape("embed width", self.lstm.input_size(), self.embed.ncols()));
        }
        self.lstm.validate()
    }
}

/// One standard LSTM cell update.
pub fn lstm_step(state: &DecoderState, input: ArrayView1<'_, f64>, params: &LstmParams) -> Result<DecoderState> {
    let h = params.hidden_size();
    if state.hidden.len() != h || state.cell.len() != h {
        return Err(Error::shape("decoder state", h, state.hidden.len().max(state.cell.len())));
    }
    if input.len() != params.input_size() {
        return Err(Error::shape("LSTM input", params.input_size(), input.len()));
    }
    params.validate()?;
    let prev_h = state.hidden.view();
    let i = params.input_gate.pre_activation(input, prev_h).mapv(sigmoid);
    let f = params.forget_gate.pre_activation(input, prev_h).mapv(sigmoid);
    let o = params.output_gate.pre_activation(input, prev_h).mapv(sigmoid);
    let g = params.candidate.pre_activation(input, prev_h).mapv(f64::tanh);
    let cell = &f * &state.cell + &i * &g;
    let hidden = &o * &cell.mapv(f64::tanh);
    Ok(DecoderState { hidden, cell })
}

/// Attention weights over the encoder states and the resulting context vector.
pub fn attend(
    encoder_states: &Array2<f64>,
    decoder_hidden: ArrayView1<'_, f64>,
    params: &AttentionParams,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if encoder_states.nrows() == 0 {
        return Err(Error::Empty("encoder states"));
    }
    if encoder_states.ncols() != params.enc_dim() {
        return Err(Error::shape("encoder states", params.enc_dim(), encoder_states.ncols()));
    }
    if decoder_hidden.len() != params.w_dec.ncols() {
        return Err(Error::shape("decoder hidden", params.w_dec.ncols(), decoder_hidden.len()));
    }
    let dec = params.w_dec.dot(&decoder_hidden);
    // A x T: one projected column per frame
    let projected = params.w_enc.dot(&encoder_states.t());
    let logits: Array1<f64> = projected
        .axis_iter(Axis(1))
        .map(|col| params.v_att.dot(&(&col + &dec).mapv(f64::tanh)))
        .collect();
    let alpha = log_softmax(logits.view()).mapv(f64::exp);
    let context = alpha.dot(encoder_states);
    Ok((alpha, context))
}

/// Log-distribution over letters plus end from `[d_t; context]`.
pub fn step_distribution<'a>(
    decoder_hidden: ArrayView1<'a, f64>,
    context: ArrayView1<'a, f64>,
    params: &AttentionParams,
) -> Result<Array1<f64>> {
    let width = decoder_hidden.len() + context.len();
    if width != params.w_out.ncols() {
        return Err(Error::shape("output layer input", params.w_out.ncols(), width));
    }
    let joined = concatenate(Axis(0), &[decoder_hidden, context])
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let logits = params.w_out.dot(&joined) + &params.b_out;
    Ok(log_softmax(logits.view()))
}

/// Everything computed for one output position.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub state: DecoderState,
    pub attention: Array1<f64>,
    pub log_dist: Array1<f64>,
}

/// Embed `prev` (a letter or the start token), advance the LSTM, attend and
/// produce the next-symbol distribution.
pub fn decode_step(
    encoder_states: &Array2<f64>,
    state: &DecoderState,
    prev: usize,
    params: &AttentionParams,
) -> Result<StepOutput> {
    if prev >= params.embed.nrows() {
        return Err(Error::InvalidSymbolId {
            id: prev,
            size: params.embed.nrows(),
        });
    }
    let state = lstm_step(state, params.embed.row(prev), &params.lstm)?;
    let (attention, context) = attend(encoder_states, state.hidden.view(), params)?;
    let log_dist = step_distribution(state.hidden.view(), context.view(), params)?;
    Ok(StepOutput {
        state,
        attention,
        log_dist,
    })
}

/// Teacher-forced per-step outputs for `w` followed by the end token.
pub fn forced_steps(encoder_states: &Array2<f64>, w: &Transcript, params: &AttentionParams) -> Result<Vec<StepOutput>> {
    params.validate()?;
    if let Some(&id) = w.labels().iter().find(|&&l| l >= params.n_letters()) {
        return Err(Error::InvalidSymbolId {
            id,
            size: params.n_letters(),
        });
    }
    let mut state = DecoderState::zeros(params.hidden_size());
    let mut prev = params.start_id();
    let mut steps = Vec::with_capacity(w.len() + 1);
    for &target in w.labels().iter().chain(std::iter::once(&params.end_id())) {
        let out = decode_step(encoder_states, &state, prev, params)?;
        state = out.state.clone();
        steps.push(out);
        prev = target;
    }
    Ok(steps)
}

/// `log p(w, end | e)` under teacher forcing.
pub fn sequence_log_prob(encoder_states: &Array2<f64>, w: &Transcript, params: &AttentionParams) -> Result<f64> {
    let steps = forced_steps(encoder_states, w, params)?;
    Ok(w
        .labels()
        .iter()
        .chain(std::iter::once(&params.end_id()))
        .zip(&steps)
        .map(|(&target, step)| step.log_dist[target])
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHypothesis {
    pub transcript: Transcript,
    pub log_prob: f64,
}

struct Partial {
    tokens: Vec<usize>,
    state: DecoderState,
    log_prob: f64,
}

/// Beam search with the default length cap of twice the number of frames.
pub fn decode(encoder_states: &Array2<f64>, params: &AttentionParams, beam_size: usize) -> Result<Transcript> {
    let max_len = 2 * encoder_states.nrows();
    Ok(decode_with_max_len(encoder_states, params, beam_size, max_len)?.transcript)
}

/// Beam search over letters. A hypothesis that has emitted `max_len`
/// letters can only be extended with the end token, so every returned score
/// equals [`sequence_log_prob`] of its transcript. Candidates are ranked by
/// log-probability, ties broken by lexicographic token order.
pub fn decode_with_max_len(
    encoder_states: &Array2<f64>,
    params: &AttentionParams,
    beam_size: usize,
    max_len: usize,
) -> Result<AttentionHypothesis> {
    if beam_size == 0 {
        return Err(Error::InvalidParameter("beam size must be at least 1".into()));
    }
    params.validate()?;
    let end = params.end_id();
    let mut active = vec![Partial {
        tokens: Vec::new(),
        state: DecoderState::zeros(params.hidden_size()),
        log_prob: 0.0,
    }];
    let mut finished: Vec<AttentionHypothesis> = Vec::new();

    while !active.is_empty() {
        // (parent, token, score, new state)
        let mut candidates: Vec<(usize, usize, f64, DecoderState)> = Vec::new();
        for (pi, partial) in active.iter().enumerate() {
            let prev = partial.tokens.last().copied().unwrap_or(params.start_id());
            let step = decode_step(encoder_states, &partial.state, prev, params)?;
            let allowed: Vec<usize> = if partial.tokens.len() >= max_len {
                vec![end]
            } else {
                (0..params.vocab_size()).collect()
            };
            for tok in allowed {
                candidates.push((pi, tok, partial.log_prob + step.log_dist[tok], step.state.clone()));
            }
        }
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                let ta = active[a.0].tokens.iter().chain(std::iter::once(&a.1));
                let tb = active[b.0].tokens.iter().chain(std::iter::once(&b.1));
                ta.cmp(tb)
            })
        });
        candidates.truncate(beam_size);

        let mut next = Vec::new();
        for (pi, tok, score, state) in candidates {
            let mut tokens = active[pi].tokens.clone();
            if tok == end {
                finished.push(AttentionHypothesis {
                    transcript: Transcript(tokens),
                    log_prob: score,
                });
            } else {
                tokens.push(tok);
                next.push(Partial {
                    tokens,
                    state,
                    log_prob: score,
                });
            }
        }
        active = next;

        // scores only decrease with length, so a finished hypothesis that
        // beats every live one cannot be overtaken
        let best_finished = finished.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if finished.len() >= beam_size && active.iter().all(|p| p.log_prob <= best_finished) {
            break;
        }
    }

    finished
        .into_iter()
        .min_by(|a, b| {
            b.log_prob
                .total_cmp(&a.log_prob)
                .then_with(|| a.transcript.cmp(&b.transcript))
        })
        .ok_or(Error::Empty("beam"))
}
