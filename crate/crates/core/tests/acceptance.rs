//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails. Oracles here are written independently of the
//! library's dynamic programs.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fingerspell::alphabet::{collapse, Alphabet, Transcript};
use fingerspell::attention::{self, AttentionParams, DecoderState, GateParams, LstmParams};
use fingerspell::beam::{beam_decode, FusionConfig};
use fingerspell::ctc::{ctc_loss_grad, greedy_decode, label_log_prob, EmissionMatrix};
use fingerspell::geometry::{iou, nms, BoundingBox, FrameDetections, ScoredBox};
use fingerspell::harness::pipeline::{run_pipeline, write_sample, Resources};
use fingerspell::harness::{synth_batch, ConfusionSets, PipelineConfig, SynthConfig, TranscriptSampler};
use fingerspell::lm::{perplexity, train_ngram, CharLm, UniformLm};
use fingerspell::metrics::{align, EvalRecord, letter_accuracy};
use fingerspell::tube::{argmax_tube, best_tube, tube_quality, LinkerConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed of the published smoothing benchmark.
pub const SMOOTHING_BENCHMARK_SEED: u64 = 20_170_504;
/// Seed of the LM fusion corpus.
pub const FUSION_BENCHMARK_SEED: u64 = 31_415;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn random_emissions(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> EmissionMatrix {
    let logits = Array2::from_shape_fn((frames, classes), |_| rng.gen_range(-3.0..3.0));
    EmissionMatrix::from_logits(&logits).unwrap()
}

// ---------------------------------------------------------------- CTC oracles

fn for_each_path(frames: usize, classes: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0; frames];
    loop {
        f(&path);
        let mut t = 0;
        loop {
            if t == frames {
                return;
            }
            path[t] += 1;
            if path[t] < classes {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

/// Probability of every collapsed transcript, by summing all paths.
fn brute_force_label_probs(em: &EmissionMatrix) -> BTreeMap<Transcript, f64> {
    let lp = em.log_probs();
    let mut out = BTreeMap::new();
    for_each_path(em.num_frames(), em.num_classes(), |path| {
        let p: f64 = path.iter().enumerate().map(|(t, &c)| lp[[t, c]]).sum::<f64>().exp();
        *out.entry(collapse(path, em.blank())).or_insert(0.0) += p;
    });
    out
}

fn random_transcript(rng: &mut ChaCha8Rng, max_len: usize, letters: usize) -> Transcript {
    let len = rng.gen_range(0..=max_len);
    Transcript((0..len).map(|_| rng.gen_range(0..letters)).collect())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let frames = rng.gen_range(1..=6);
        let letters = rng.gen_range(1..=3);
        let em = random_emissions(&mut rng, frames, letters + 1);
        let table = brute_force_label_probs(&em);
        let w = random_transcript(&mut rng, 3, letters);
        let got = label_log_prob(&em, &w).unwrap();
        match table.get(&w) {
            Some(p) => worst = worst.max((got.exp() - p).abs() / p),
            None if got == f64::NEG_INFINITY => {}
            None => return outcome(false, format!("{w:?} is infeasible but scored {got}")),
        }
    }
    outcome(worst <= 1e-8, format!("max relative error {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let frames = rng.gen_range(1..=4);
        let letters = rng.gen_range(1..=3);
        let em = random_emissions(&mut rng, frames, letters + 1);
        // every transcript over the letters with length <= frames
        let mut total = 0.0;
        let mut layer = vec![Vec::<usize>::new()];
        for _ in 0..=frames {
            let mut next = Vec::new();
            for w in &layer {
                total += label_log_prob(&em, &Transcript(w.clone())).unwrap().exp();
                for l in 0..letters {
                    let mut v = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
            layer = next;
        }
        worst = worst.max((total - 1.0).abs());
    }
    outcome(worst <= 1e-9, format!("max |sum - 1| = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let classes = 5;
    let loss = |logits: &Array2<f64>, w: &Transcript| -> f64 {
        -label_log_prob(&EmissionMatrix::from_logits(logits).unwrap(), w).unwrap()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let logits = Array2::from_shape_fn((5, classes), |_| rng.gen_range(-2.0..2.0));
        // two letters give an extended label sequence of length 5
        let w = Transcript(vec![rng.gen_range(0..classes - 1), rng.gen_range(0..classes - 1)]);
        let (_, grad) = ctc_loss_grad(&EmissionMatrix::from_logits(&logits).unwrap(), &w).unwrap();
        for t in 0..5 {
            for c in 0..classes {
                let mut plus = logits.clone();
                plus[[t, c]] += h;
                let mut minus = logits.clone();
                minus[[t, c]] -= h;
                let fd = (loss(&plus, &w) - loss(&minus, &w)) / (2.0 * h);
                let g = grad[[t, c]];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- tube oracle

fn random_frames(rng: &mut ChaCha8Rng, frames: usize) -> Vec<FrameDetections> {
    (0..frames)
        .map(|t| {
            let n = rng.gen_range(1..=4);
            let boxes = (0..n)
                .map(|_| {
                    let x = rng.gen_range(0.0..40.0);
                    let y = rng.gen_range(0.0..40.0);
                    let w = rng.gen_range(5.0..30.0);
                    let h = rng.gen_range(5.0..30.0);
                    ScoredBox::new(BoundingBox::new(x, y, x + w, y + h).unwrap(), rng.gen_range(0.0..1.0)).unwrap()
                })
                .collect();
            FrameDetections::new(t, boxes)
        })
        .collect()
}

fn exhaustive_best(frames: &[FrameDetections], lambda: f64) -> f64 {
    let sizes: Vec<usize> = frames.iter().map(|f| f.boxes.len()).collect();
    let mut choice = vec![0; frames.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut sum = 0.0;
        for t in 1..frames.len() {
            let a = &frames[t - 1].boxes[choice[t - 1]];
            let b = &frames[t].boxes[choice[t]];
            sum += a.score + b.score + lambda * iou(&a.bbox, &b.bbox);
        }
        let score = if frames.len() > 1 { sum / frames.len() as f64 } else { 0.0 };
        best = best.max(score);
        let mut t = 0;
        loop {
            if t == frames.len() {
                return best;
            }
            choice[t] += 1;
            if choice[t] < sizes[t] {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for i in 0..200 {
        let lambda = [0.0, 0.3, 1.0][i % 3];
        let count = rng.gen_range(1..=6);
        let frames = random_frames(&mut rng, count);
        let tube = best_tube(&frames, &LinkerConfig::new(lambda).unwrap()).unwrap();
        if tube.sequence_score != exhaustive_best(&frames, lambda) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 200 instances differ from exhaustive search"))
}

// ---------------------------------------------------------------- smoothing benchmark

fn word_sampler(seed: u64) -> TranscriptSampler {
    let letters: Vec<usize> = (0..26).collect();
    TranscriptSampler::random(&letters, 3, (3, 8), 0.15, seed).unwrap()
}

fn criterion_5() -> Outcome {
    let alphabet = Alphabet::fingerspelling();
    let words = word_sampler(SMOOTHING_BENCHMARK_SEED).sample_many(500, SMOOTHING_BENCHMARK_SEED);
    let config = SynthConfig { seed: SMOOTHING_BENCHMARK_SEED, ..SynthConfig::default() };
    let samples = synth_batch(&words, &alphabet, &ConfusionSets::fingerspelling(&alphabet), &config).unwrap();
    let pipeline = PipelineConfig::default();
    let linker = pipeline.linker().unwrap();
    let (mut smoothed, mut argmax) = (0.0, 0.0);
    for s in &samples {
        let kept: Vec<FrameDetections> = s
            .detections
            .iter()
            .map(|f| nms(f, pipeline.nms_iou, pipeline.max_boxes).unwrap())
            .collect();
        smoothed += tube_quality(&best_tube(&kept, &linker).unwrap(), &s.gold, 0.5).unwrap();
        argmax += tube_quality(&argmax_tube(&kept).unwrap(), &s.gold, 0.5).unwrap();
    }
    let n = samples.len() as f64;
    let (smoothed, argmax) = (100.0 * smoothed / n, 100.0 * argmax / n);
    outcome(
        smoothed - argmax >= 2.0,
        format!("tube quality {argmax:.2}% (per-frame argmax) -> {smoothed:.2}% (linked), seed {SMOOTHING_BENCHMARK_SEED}"),
    )
}

// ---------------------------------------------------------------- beam exactness

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut wrong = 0;
    for _ in 0..100 {
        let frames = rng.gen_range(1..=4);
        let letters = rng.gen_range(1..=2);
        let em = random_emissions(&mut rng, frames, letters + 1);
        // argmax of label_log_prob over every transcript of length <= frames
        let mut best = (f64::NEG_INFINITY, Transcript::empty());
        let mut layer = vec![Vec::<usize>::new()];
        for _ in 0..=frames {
            let mut next = Vec::new();
            for w in &layer {
                let lp = label_log_prob(&em, &Transcript(w.clone())).unwrap();
                if lp > best.0 {
                    best = (lp, Transcript(w.clone()));
                }
                for l in 0..letters {
                    let mut v = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
            layer = next;
        }
        let config = FusionConfig::new(1 << 12, 0.0, 0.0).unwrap();
        if beam_decode(&em, None, &config).unwrap().best != best.1 {
            wrong += 1;
        }
    }
    outcome(wrong == 0, format!("{wrong} of 100 instances disagree with the exhaustive argmax"))
}

// ---------------------------------------------------------------- LM fusion benchmark

fn accuracy(refs: &[Transcript], hyps: &[Transcript]) -> f64 {
    let records: Vec<EvalRecord> = refs
        .iter()
        .zip(hyps)
        .enumerate()
        .map(|(i, (r, h))| EvalRecord { id: i.to_string(), reference: r.clone(), hypothesis: h.clone(), fps: None })
        .collect();
    letter_accuracy(&records).unwrap()
}

fn criterion_7() -> Outcome {
    let alphabet = Alphabet::fingerspelling();
    let sampler = word_sampler(FUSION_BENCHMARK_SEED);
    let train = sampler.sample_many(2000, FUSION_BENCHMARK_SEED + 1);
    let dev = sampler.sample_many(150, FUSION_BENCHMARK_SEED + 2);
    let test = sampler.sample_many(400, FUSION_BENCHMARK_SEED + 3);
    let lm = train_ngram(&train, alphabet.len(), 2, 0.1).unwrap();
    let synth = SynthConfig { seed: FUSION_BENCHMARK_SEED, confusion_prob: 0.4, ..SynthConfig::default() };
    let confusions = ConfusionSets::fingerspelling(&alphabet);
    let emissions = |words: &[Transcript], seed: u64| -> Vec<EmissionMatrix> {
        let config = SynthConfig { seed, ..synth.clone() };
        synth_batch(words, &alphabet, &confusions, &config).unwrap().into_iter().map(|s| s.emissions).collect()
    };
    let dev_em = emissions(&dev, FUSION_BENCHMARK_SEED + 4);
    let test_em = emissions(&test, FUSION_BENCHMARK_SEED + 5);
    let decode_all = |ems: &[EmissionMatrix], config: &FusionConfig| -> Vec<Transcript> {
        ems.iter().map(|em| beam_decode(em, Some(&lm as &dyn CharLm), config).unwrap().best).collect()
    };

    let mut tuned = (f64::NEG_INFINITY, FusionConfig::default());
    for gamma in [0.25, 0.5, 1.0, 1.5, 2.0] {
        for beta in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let config = FusionConfig::new(8, gamma, beta).unwrap();
            let acc = accuracy(&dev, &decode_all(&dev_em, &config));
            if acc > tuned.0 {
                tuned = (acc, config);
            }
        }
    }
    let greedy: Vec<Transcript> = test_em.iter().map(greedy_decode).collect();
    let greedy_acc = 100.0 * accuracy(&test, &greedy);
    let fused_acc = 100.0 * accuracy(&test, &decode_all(&test_em, &tuned.1));
    outcome(
        fused_acc >= greedy_acc + 1.0,
        format!(
            "test accuracy greedy {greedy_acc:.2}% vs fused {fused_acc:.2}% (lm_weight {}, ins_penalty {})",
            tuned.1.lm_weight, tuned.1.insertion_penalty
        ),
    )
}

// ---------------------------------------------------------------- alignment oracle

/// Plain recursive edit distance with memoization.
fn levenshtein(a: &[usize], b: &[usize], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let (ra, rb) = (&a[..a.len() - 1], &b[..b.len() - 1]);
    let sub = levenshtein(ra, rb, memo) + usize::from(a[a.len() - 1] != b[b.len() - 1]);
    let del = levenshtein(ra, b, memo) + 1;
    let ins = levenshtein(a, rb, memo) + 1;
    let d = sub.min(del).min(ins);
    memo.insert((a.len(), b.len()), d);
    d
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut wrong = 0;
    for _ in 0..1000 {
        let letters = rng.gen_range(1..=6);
        let r: Vec<usize> = (0..rng.gen_range(1..=20)).map(|_| rng.gen_range(0..letters)).collect();
        let h: Vec<usize> = (0..rng.gen_range(0..=20)).map(|_| rng.gen_range(0..letters)).collect();
        let a = align(&Transcript(r.clone()), &Transcript(h.clone())).unwrap();
        let expected = levenshtein(&r, &h, &mut BTreeMap::new());
        let c = a.counts;
        let matches = r.len() - c.substitutions - c.deletions;
        let consistent = c.errors() == expected && matches + c.substitutions + c.insertions == h.len();
        if !consistent {
            wrong += 1;
        }
    }
    outcome(wrong == 0, format!("{wrong} of 1000 pairs disagree with the edit-distance oracle"))
}

// ---------------------------------------------------------------- attention sanity

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.gen_range(-scale..scale))
}

fn random_params(rng: &mut ChaCha8Rng) -> AttentionParams {
    let letters = rng.gen_range(2..=5);
    let enc = rng.gen_range(1..=4);
    let hidden = rng.gen_range(1..=4);
    let att = rng.gen_range(1..=4);
    let embed = rng.gen_range(1..=4);
    let mut gate = || GateParams {
        w_input: random_matrix(rng, hidden, embed, 1.0),
        w_hidden: random_matrix(rng, hidden, hidden, 1.0),
        bias: random_vector(rng, hidden, 1.0),
    };
    let lstm = LstmParams { input_gate: gate(), forget_gate: gate(), output_gate: gate(), candidate: gate() };
    AttentionParams {
        w_enc: random_matrix(rng, att, enc, 1.0),
        w_dec: random_matrix(rng, att, hidden, 1.0),
        v_att: random_vector(rng, att, 1.0),
        w_out: random_matrix(rng, letters + 1, hidden + enc, 2.0),
        b_out: random_vector(rng, letters + 1, 1.0),
        embed: random_matrix(rng, letters + 2, embed, 1.0),
        lstm,
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut att_err, mut dist_err): (f64, f64) = (0.0, 0.0);
    let mut beam_mismatch = 0;
    for _ in 0..100 {
        let params = random_params(&mut rng);
        let frames = rng.gen_range(1..=6);
        let enc = random_matrix(&mut rng, frames, params.enc_dim(), 2.0);
        // stepwise argmax, end token forced after 2T letters
        let max_len = 2 * frames;
        let mut state = DecoderState::zeros(params.hidden_size());
        let mut prev = params.start_id();
        let mut greedy = Vec::new();
        loop {
            let step = attention::decode_step(&enc, &state, prev, &params).unwrap();
            att_err = att_err.max((step.attention.sum() - 1.0).abs());
            dist_err = dist_err.max((step.log_dist.mapv(f64::exp).sum() - 1.0).abs());
            let mut tok = 0;
            for (i, &v) in step.log_dist.iter().enumerate() {
                if v > step.log_dist[tok] {
                    tok = i;
                }
            }
            if greedy.len() >= max_len {
                tok = params.end_id();
            }
            if tok == params.end_id() {
                break;
            }
            greedy.push(tok);
            state = step.state;
            prev = tok;
        }
        if attention::decode(&enc, &params, 1).unwrap() != Transcript(greedy) {
            beam_mismatch += 1;
        }
    }
    outcome(
        att_err <= 1e-12 && dist_err <= 1e-12 && beam_mismatch == 0,
        format!("attention |sum-1| {att_err:.1e}, distribution |sum-1| {dist_err:.1e}, {beam_mismatch} beam-1 mismatches"),
    )
}

// ---------------------------------------------------------------- end to end

fn criterion_10() -> Outcome {
    let alphabet = Alphabet::fingerspelling();
    let dir = tempfile::tempdir().unwrap();
    let words = word_sampler(10).sample_many(60, 10);
    let samples = synth_batch(&words, &alphabet, &ConfusionSets::fingerspelling(&alphabet), &SynthConfig::noiseless(10)).unwrap();
    let records: Vec<_> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| write_sample(dir.path(), &format!("s{i:03}"), s, &alphabet).unwrap())
        .collect();
    let res = Resources::new(alphabet);
    let config = PipelineConfig::default();
    let first = run_pipeline(&records, &config, &res).unwrap();
    let second = run_pipeline(&records, &config, &res).unwrap();
    let perfect = first.failures.is_empty() && first.text.contains("\naccuracy\t100.00\n");
    outcome(
        perfect && first.text == second.text,
        format!("noiseless accuracy 100%: {perfect}, identical reports: {}", first.text == second.text),
    )
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let uniform = UniformLm { n_letters: 31 };
    let (mut uniform_err, mut trained_max): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let corpus: Vec<Transcript> = (0..rng.gen_range(1..=20)).map(|_| random_transcript(&mut rng, 12, 31)).collect();
        uniform_err = uniform_err.max((perplexity(&uniform, &corpus).unwrap() - 32.0).abs());
        let order = rng.gen_range(1..=4);
        let k = rng.gen_range(0.01..2.0);
        let lm = train_ngram(&corpus, 31, order, k).unwrap();
        trained_max = trained_max.max(perplexity(&lm, &corpus).unwrap());
    }
    outcome(
        uniform_err <= 1e-9 && trained_max <= 32.0,
        format!("uniform |ppl - 32| {uniform_err:.1e}, worst trained ppl on its corpus {trained_max:.3}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("CTC oracle equivalence", criterion_1, Some(Duration::from_secs(10))),
        ("CTC normalization", criterion_2, None),
        ("CTC gradient check", criterion_3, None),
        ("tube linker oracle", criterion_4, None),
        ("smoothing benefit", criterion_5, Some(Duration::from_secs(30))),
        ("beam search exactness", criterion_6, None),
        ("LM fusion benefit", criterion_7, Some(Duration::from_secs(60))),
        ("alignment oracle", criterion_8, None),
        ("attention sanity", criterion_9, None),
        ("pipeline determinism", criterion_10, None),
        ("perplexity bound", criterion_11, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = run();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > *limit {
                result.passed = false;
                result.detail.push_str(&format!("; exceeded {limit:?}"));
            }
        }
        if !result.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<24} {}  {} ({:.2?})",
            i + 1,
            name,
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
