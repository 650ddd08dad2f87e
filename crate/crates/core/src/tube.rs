//! Signing-tube generation: link one detection per frame into the sequence
//! that maximizes the averaged linking score, using a Viterbi-style forward
//! pass with backpointers.

use crate::geometry::{iou, BoundingBox, FrameDetections, ScoredBox};
use crate::{Error, Result};

/// Weight of the IoU term in the linking score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkerConfig {
    pub lambda: f64,
}

impl LinkerConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be a finite non-negative number, got {lambda}"
            )));
        }
        Ok(LinkerConfig { lambda })
    }
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig { lambda: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigningTube {
    /// Frame index of every tube element, copied from the input frames.
    pub frame_indices: Vec<usize>,
    /// Position of the chosen box within each input frame.
    pub choices: Vec<usize>,
    pub boxes: Vec<ScoredBox>,
    pub sequence_score: f64,
}

impl SigningTube {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// `a.score + b.score + lambda * IoU(a, b)`.
pub fn linking_score(a: &ScoredBox, b: &ScoredBox, lambda: f64) -> f64 {
    a.score + b.score + lambda * iou(&a.bbox, &b.bbox)
}

/// Averaged linking score of a box sequence: the sum of the `T - 1`
/// transition scores divided by `T`. Zero for `T <= 1`.
pub fn sequence_score(boxes: &[ScoredBox], lambda: f64) -> f64 {
    if boxes.len() < 2 {
        return 0.0;
    }
    let total = boxes
        .windows(2)
        .fold(0.0, |acc, w| acc + linking_score(&w[0], &w[1], lambda));
    total / boxes.len() as f64
}

fn check_frames(frames: &[FrameDetections]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::NoDetections("sequence has no frames".into()));
    }
    if let Some(f) = frames.iter().find(|f| f.boxes.is_empty()) {
        return Err(Error::NoDetections(format!(
            "frame {} has no boxes",
            f.frame_index
        )));
    }
    Ok(())
}

fn build_tube(frames: &[FrameDetections], choices: Vec<usize>, lambda: f64) -> SigningTube {
    let boxes: Vec<ScoredBox> = frames
        .iter()
        .zip(&choices)
        .map(|(f, &c)| f.boxes[c])
        .collect();
    SigningTube {
        frame_indices: frames.iter().map(|f| f.frame_index).collect(),
        sequence_score: sequence_score(&boxes, lambda),
        choices,
        boxes,
    }
}

/// Maximum-score tube in `O(T n^2)`.
///
/// Ties are resolved towards the lowest box index, both for the final frame
/// and at every backtracking step.
pub fn best_tube(frames: &[FrameDetections], config: &LinkerConfig) -> Result<SigningTube> {
    check_frames(frames)?;
    let lambda = config.lambda;

    if frames.len() == 1 {
        return argmax_tube(frames);
    }

    // accumulated[j]: best prefix sum ending in box j of the current frame
    let mut accumulated = vec![0.0; frames[0].boxes.len()];
    let mut backpointers: Vec<Vec<usize>> = Vec::with_capacity(frames.len() - 1);
    for t in 1..frames.len() {
        let prev = &frames[t - 1].boxes;
        let cur = &frames[t].boxes;
        let mut next = Vec::with_capacity(cur.len());
        let mut back = Vec::with_capacity(cur.len());
        for b in cur {
            let mut best_i = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, a) in prev.iter().enumerate() {
                let v = accumulated[i] + linking_score(a, b, lambda);
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            next.push(best);
            back.push(best_i);
        }
        accumulated = next;
        backpointers.push(back);
    }

    let mut last = 0;
    for (j, &v) in accumulated.iter().enumerate() {
        if v > accumulated[last] {
            last = j;
        }
    }
    let mut choices = vec![0; frames.len()];
    choices[frames.len() - 1] = last;
    for t in (1..frames.len()).rev() {
        choices[t - 1] = backpointers[t - 1][choices[t]];
    }
    Ok(build_tube(frames, choices, lambda))
}

/// Unsmoothed baseline: the highest-scoring box in every frame
/// (lowest index on ties). The stored sequence score uses `lambda = 0`.
pub fn argmax_tube(frames: &[FrameDetections]) -> Result<SigningTube> {
    argmax_tube_with(frames, &LinkerConfig { lambda: 0.0 })
}

/// Like [`argmax_tube`], scoring the resulting sequence under `config`.
pub fn argmax_tube_with(frames: &[FrameDetections], config: &LinkerConfig) -> Result<SigningTube> {
    check_frames(frames)?;
    let choices = frames
        .iter()
        .map(|f| {
            crate::math::argmax(f.boxes.iter().map(|b| b.score)).expect("frame checked non-empty")
        })
        .collect();
    Ok(build_tube(frames, choices, config.lambda))
}

/// Fraction of frames where the tube box overlaps the gold box with IoU
/// strictly above `iou_threshold`.
pub fn tube_quality(tube: &SigningTube, gold: &[BoundingBox], iou_threshold: f64) -> Result<f64> {
    if tube.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: tube.len(),
            actual: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("tube"));
    }
    let hits = tube
        .boxes
        .iter()
        .zip(gold)
        .filter(|(b, g)| iou(&b.bbox, g) > iou_threshold)
        .count();
    Ok(hits as f64 / gold.len() as f64)
}
