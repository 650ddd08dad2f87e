//! Synthetic records: a frame alignment with interleaved blanks, noisy
//! emission rows, and a hand trajectory with jittered detections plus scored
//! distractors. Everything is a deterministic function of the seed.

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::alphabet::{Alphabet, Path, Transcript};
use crate::ctc::EmissionMatrix;
use crate::geometry::{BoundingBox, FrameDetections, ScoredBox};
use crate::{Error, Result};

/// Handshape groups that are easy to confuse.
pub const FINGERSPELLING_CONFUSIONS: [&str; 5] = ["astn", "ruv", "oe", "wu", "ijy"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionSets {
    groups: Vec<Vec<usize>>,
}

impl ConfusionSets {
    pub fn new(alphabet: &Alphabet, groups: &[&str]) -> Result<Self> {
        let groups = groups
            .iter()
            .map(|g| {
                alphabet
                    .encode(g)
                    .map(|t| t.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConfusionSets { groups })
    }

    pub fn fingerspelling(alphabet: &Alphabet) -> Self {
        Self::new(alphabet, &FINGERSPELLING_CONFUSIONS).expect("groups use plain letters")
    }

    pub fn none() -> Self {
        ConfusionSets { groups: Vec::new() }
    }

    /// Every symbol sharing a group with `id`, excluding `id`, ascending.
    pub fn confusables(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .groups
            .iter()
            .filter(|g| g.contains(&id))
            .flatten()
            .copied()
            .filter(|&c| c != id)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Inclusive range of frames each letter occupies.
    pub frames_per_letter: (usize, usize),
    /// Inclusive range of blank frames before, between and after letters.
    /// Repeated letters always get at least one separating blank.
    pub blank_frames: (usize, usize),
    /// Mass taken off the true symbol and spread uniformly over its
    /// confusables and the blank.
    pub emission_noise: f64,
    /// Chance that a letter occurrence is rendered ambiguously, sharing its
    /// remaining mass with one random confusable.
    pub confusion_prob: f64,
    /// Share kept by the true letter in an ambiguous occurrence.
    pub confusion_share: (f64, f64),
    pub detection_jitter: f64,
    pub distractors_per_frame: usize,
    pub distractor_score_range: (f64, f64),
    pub hand_score_range: (f64, f64),
    pub frame_size: (f64, f64),
    pub hand_size: (f64, f64),
    /// Per-frame std of the hand centre's random walk, pixels.
    pub hand_motion: f64,
    pub fps_choices: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            frames_per_letter: (2, 4),
            blank_frames: (0, 2),
            emission_noise: 0.1,
            confusion_prob: 0.0,
            confusion_share: (0.3, 0.7),
            detection_jitter: 4.0,
            distractors_per_frame: 3,
            distractor_score_range: (0.2, 0.9),
            hand_score_range: (0.5, 0.95),
            frame_size: (640.0, 368.0),
            hand_size: (50.0, 90.0),
            hand_motion: 3.0,
            fps_choices: vec![15.0, 24.0, 30.0, 60.0],
        }
    }
}

impl SynthConfig {
    /// No emission noise, no jitter, no distractors.
    pub fn noiseless(seed: u64) -> Self {
        SynthConfig {
            seed,
            emission_noise: 0.0,
            confusion_prob: 0.0,
            detection_jitter: 0.0,
            distractors_per_frame: 0,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let (f0, f1) = self.frames_per_letter;
        if f0 == 0 || f0 > f1 {
            return bad(format!("frames_per_letter must be 1 <= lo <= hi, got {f0}..={f1}"));
        }
        if self.blank_frames.0 > self.blank_frames.1 {
            return bad("blank_frames range is empty".into());
        }
        if !(0.0..1.0).contains(&self.emission_noise) {
            return bad(format!("emission_noise must lie in [0, 1), got {}", self.emission_noise));
        }
        if !(0.0..=1.0).contains(&self.confusion_prob) {
            return bad(format!("confusion_prob must lie in [0, 1], got {}", self.confusion_prob));
        }
        let unit_range = |(lo, hi): (f64, f64)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        for (name, r) in [
            ("confusion_share", self.confusion_share),
            ("distractor_score_range", self.distractor_score_range),
            ("hand_score_range", self.hand_score_range),
        ] {
            if !unit_range(r) {
                return bad(format!("{name} must be a range inside [0, 1], got {r:?}"));
            }
        }
        if !(self.detection_jitter >= 0.0 && self.hand_motion >= 0.0) {
            return bad("detection_jitter and hand_motion must be non-negative".into());
        }
        let (w, h) = self.frame_size;
        let (s0, s1) = self.hand_size;
        if !(s0 > 0.0 && s0 <= s1 && s1 * 1.3 < w.min(h)) {
            return bad("hand_size must be positive and fit inside frame_size".into());
        }
        if self.fps_choices.is_empty() || self.fps_choices.iter().any(|f| !(*f > 0.0)) {
            return bad("fps_choices must be non-empty and positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub transcript: Transcript,
    pub fps: f64,
    /// Symbol rendered at each frame (blank included).
    pub alignment: Path,
    pub emissions: EmissionMatrix,
    pub detections: Vec<FrameDetections>,
    pub gold: Vec<BoundingBox>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn alignment(transcript: &Transcript, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, Option<usize>)> {
    // (symbol, letter position) per frame; position None for blanks
    let blank = usize::MAX;
    let mut frames = Vec::new();
    let labels = transcript.labels();
    for (i, &l) in labels.iter().enumerate() {
        let mut gap = rng.gen_range(config.blank_frames.0..=config.blank_frames.1);
        if i > 0 && labels[i - 1] == l {
            gap = gap.max(1);
        }
        frames.extend(std::iter::repeat_n((blank, None), gap));
        let n = rng.gen_range(config.frames_per_letter.0..=config.frames_per_letter.1);
        frames.extend(std::iter::repeat_n((l, Some(i)), n));
    }
    let tail = rng.gen_range(config.blank_frames.0..=config.blank_frames.1);
    let tail = if frames.is_empty() { tail.max(1) } else { tail };
    frames.extend(std::iter::repeat_n((blank, None), tail));
    frames
}

fn spread(row: &mut [f64], mass: f64, targets: &[usize]) {
    let share = mass / targets.len() as f64;
    for &t in targets {
        row[t] += share;
    }
}

fn emission_rows(
    transcript: &Transcript,
    frames: &[(usize, Option<usize>)],
    num_classes: usize,
    confusions: &ConfusionSets,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let blank = num_classes - 1;
    let eps = config.emission_noise;
    let labels = transcript.labels();
    // per letter occurrence: optional (confusable, share kept by the truth)
    let ambiguity: Vec<Option<(usize, f64)>> = labels
        .iter()
        .map(|&l| {
            let conf = confusions.confusables(l);
            if conf.is_empty() || !rng.gen_bool(config.confusion_prob) {
                return None;
            }
            let y = *conf.choose(rng).unwrap();
            Some((y, uniform(rng, config.confusion_share)))
        })
        .collect();

    let mut probs = Array2::zeros((frames.len(), num_classes));
    for (t, &(sym, pos)) in frames.iter().enumerate() {
        let mut row = vec![0.0; num_classes];
        match pos {
            Some(i) => {
                match ambiguity[i] {
                    Some((y, s)) => {
                        row[sym] += (1.0 - eps) * s;
                        row[y] += (1.0 - eps) * (1.0 - s);
                    }
                    None => row[sym] += 1.0 - eps,
                }
                let mut targets = confusions.confusables(sym);
                targets.push(blank);
                spread(&mut row, eps, &targets);
            }
            None => {
                // blank frames leak towards the neighbouring letters
                let mut targets: Vec<usize> = Vec::new();
                if let Some(&(s, _)) = frames[..t].iter().rev().find(|f| f.1.is_some()) {
                    targets.push(s);
                }
                if let Some(&(s, _)) = frames[t + 1..].iter().find(|f| f.1.is_some()) {
                    targets.push(s);
                }
                targets.sort_unstable();
                targets.dedup();
                if targets.is_empty() {
                    row[blank] = 1.0;
                } else {
                    row[blank] += 1.0 - eps;
                    spread(&mut row, eps, &targets);
                }
            }
        }
        for (c, p) in row.into_iter().enumerate() {
            probs[[t, c]] = p;
        }
    }
    probs
}

fn random_box(rng: &mut ChaCha8Rng, config: &SynthConfig) -> BoundingBox {
    let (fw, fh) = config.frame_size;
    let w = uniform(rng, config.hand_size);
    let h = (w * rng.gen_range(1.0..1.3)).min(fh);
    let x = rng.gen_range(0.0..=(fw - w));
    let y = rng.gen_range(0.0..=(fh - h));
    BoundingBox { x_min: x, y_min: y, x_max: x + w, y_max: y + h }
}

fn trajectory(frames: usize, rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<BoundingBox> {
    let (fw, fh) = config.frame_size;
    let start = random_box(rng, config);
    let (w, h) = (start.width(), start.height());
    let (mut x, mut y) = (start.x_min, start.y_min);
    let step = Normal::new(0.0, config.hand_motion).unwrap();
    (0..frames)
        .map(|t| {
            if t > 0 {
                x = (x + step.sample(rng)).clamp(0.0, fw - w);
                y = (y + step.sample(rng)).clamp(0.0, fh - h);
            }
            BoundingBox { x_min: x, y_min: y, x_max: x + w, y_max: y + h }
        })
        .collect()
}

fn jittered(gold: &BoundingBox, rng: &mut ChaCha8Rng, sigma: f64) -> BoundingBox {
    if sigma == 0.0 {
        return *gold;
    }
    let n = Normal::new(0.0, sigma).unwrap();
    let (a, b) = (gold.x_min + n.sample(rng), gold.x_max + n.sample(rng));
    let (c, d) = (gold.y_min + n.sample(rng), gold.y_max + n.sample(rng));
    BoundingBox { x_min: a.min(b), y_min: c.min(d), x_max: a.max(b), y_max: c.max(d) }
}

fn detections(gold: &[BoundingBox], rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<FrameDetections> {
    gold.iter()
        .enumerate()
        .map(|(t, g)| {
            let mut boxes = vec![ScoredBox {
                bbox: jittered(g, rng, config.detection_jitter),
                score: uniform(rng, config.hand_score_range),
            }];
            for _ in 0..config.distractors_per_frame {
                boxes.push(ScoredBox {
                    bbox: random_box(rng, config),
                    score: uniform(rng, config.distractor_score_range),
                });
            }
            boxes.shuffle(rng);
            FrameDetections { frame_index: t, boxes }
        })
        .collect()
}

fn generate(
    transcript: &Transcript,
    alphabet: &Alphabet,
    confusions: &ConfusionSets,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SynthSample> {
    config.validate()?;
    alphabet.validate(transcript)?;
    let blank = alphabet.blank_id();
    let fps = *config.fps_choices.choose(rng).unwrap();
    let frames = alignment(transcript, config, rng);
    let probs = emission_rows(transcript, &frames, alphabet.num_classes(), confusions, config, rng);
    let gold = trajectory(frames.len(), rng, config);
    let detections = detections(&gold, rng, config);
    let alignment = Path(
        frames
            .iter()
            .map(|&(s, pos)| if pos.is_some() { s } else { blank })
            .collect(),
    );
    Ok(SynthSample {
        transcript: transcript.clone(),
        fps,
        alignment,
        emissions: EmissionMatrix::from_probs(probs)?,
        detections,
        gold,
    })
}

/// One record seeded directly by `config.seed`.
pub fn synth_generate(
    transcript: &Transcript,
    alphabet: &Alphabet,
    confusions: &ConfusionSets,
    config: &SynthConfig,
) -> Result<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate(transcript, alphabet, confusions, config, &mut rng)
}

/// Record `i` uses stream `i` of the seed, so records are independent of
/// batch size and order.
pub fn synth_batch(
    transcripts: &[Transcript],
    alphabet: &Alphabet,
    confusions: &ConfusionSets,
    config: &SynthConfig,
) -> Result<Vec<SynthSample>> {
    transcripts
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            generate(w, alphabet, confusions, config, &mut rng)
        })
        .collect()
}

/// Random sparse bigram law over a set of letters: every context allows a
/// few successors with random weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptSampler {
    /// successors[c] for each letter position c, plus the start context last.
    successors: Vec<Vec<(usize, f64)>>,
    letters: Vec<usize>,
    min_len: usize,
    max_len: usize,
    stop_prob: f64,
}

impl TranscriptSampler {
    pub fn random(
        letters: &[usize],
        branching: usize,
        (min_len, max_len): (usize, usize),
        stop_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        if letters.is_empty() || branching == 0 || min_len == 0 || min_len > max_len {
            return Err(Error::InvalidParameter("sampler needs letters, branching >= 1 and 1 <= min_len <= max_len".into()));
        }
        if !(0.0..=1.0).contains(&stop_prob) {
            return Err(Error::InvalidParameter(format!("stop_prob must lie in [0, 1], got {stop_prob}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = branching.min(letters.len());
        let successors = (0..=letters.len())
            .map(|_| {
                let mut next: Vec<usize> = letters.choose_multiple(&mut rng, k).copied().collect();
                next.sort_unstable();
                next.into_iter().map(|l| (l, rng.gen_range(0.2..1.0))).collect()
            })
            .collect();
        Ok(TranscriptSampler {
            successors,
            letters: letters.to_vec(),
            min_len,
            max_len,
            stop_prob,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Transcript {
        let mut out = Vec::new();
        let mut ctx = self.letters.len();
        while out.len() < self.max_len {
            if out.len() >= self.min_len && rng.gen_bool(self.stop_prob) {
                break;
            }
            let succ = &self.successors[ctx];
            let dist = WeightedIndex::new(succ.iter().map(|s| s.1)).unwrap();
            let next = succ[dist.sample(rng)].0;
            out.push(next);
            ctx = self.letters.iter().position(|&l| l == next).unwrap();
        }
        Transcript(out)
    }

    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<Transcript> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}
