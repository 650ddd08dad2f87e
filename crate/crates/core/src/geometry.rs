//! Bounding-box arithmetic and greedy per-frame non-maxima suppression.
//!
//! Coordinates are real-valued pixel positions; a box covers the half-open
//! region `[x_min, x_max) x [y_min, y_max)` and its area is plain
//! width times height.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        }
    }

    /// Finite coordinates with `x_min <= x_max` and `y_min <= y_max`.
    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union, `0` when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// A detection: a box and the detector's signing-hand probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, score: f64) -> Result<Self> {
        if !bbox.is_valid() {
            return Err(Error::InvalidBox {
                x_min: bbox.x_min,
                y_min: bbox.y_min,
                x_max: bbox.x_max,
                y_max: bbox.y_max,
            });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore(score));
        }
        Ok(ScoredBox { bbox, score })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub boxes: Vec<ScoredBox>,
}

impl FrameDetections {
    pub fn new(frame_index: usize, boxes: Vec<ScoredBox>) -> Self {
        FrameDetections { frame_index, boxes }
    }
}

/// Greedy non-maxima suppression.
///
/// Boxes are visited in descending score order (ties: lower input index
/// first). A visited box is kept unless it overlaps an already kept box with
/// IoU strictly greater than `iou_threshold`. At most `max_boxes` boxes are
/// kept; the result is sorted by descending score.
pub fn nms(frame: &FrameDetections, iou_threshold: f64, max_boxes: usize) -> Result<FrameDetections> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "NMS IoU threshold must be in (0, 1], got {iou_threshold}"
        )));
    }
    if max_boxes == 0 {
        return Err(Error::InvalidParameter("max_boxes must be at least 1".into()));
    }

    let mut order: Vec<usize> = (0..frame.boxes.len()).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&a, &b| frame.boxes[b].score.total_cmp(&frame.boxes[a].score));

    let mut kept: Vec<ScoredBox> = Vec::new();
    for idx in order {
        if kept.len() == max_boxes {
            break;
        }
        let candidate = frame.boxes[idx];
        if kept
            .iter()
            .all(|k| iou(&k.bbox, &candidate.bbox) <= iou_threshold)
        {
            kept.push(candidate);
        }
    }
    Ok(FrameDetections {
        frame_index: frame.frame_index,
        boxes: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn sb(x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> ScoredBox {
        ScoredBox::new(bx(x0, y0, x1, y1), s).unwrap()
    }

    #[test]
    fn iou_examples() {
        let b = bx(3.0, 4.0, 10.0, 12.5);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_degenerate_boxes() {
        let p = bx(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&p, &p), 0.0);
        assert_eq!(iou(&p, &bx(0.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(ScoredBox::new(bx(0.0, 0.0, 1.0, 1.0), 1.5).is_err());
        let f = FrameDetections::new(0, vec![]);
        assert!(nms(&f, 0.0, 5).is_err());
        assert!(nms(&f, 0.5, 0).is_err());
    }

    #[test]
    fn nms_suppresses_high_overlap() {
        // IoU of the two boxes: 95/100 = 0.95
        let f = FrameDetections::new(
            7,
            vec![sb(0.0, 0.0, 10.0, 10.0, 0.8), sb(0.0, 0.0, 10.0, 9.5, 0.9)],
        );
        let out = nms(&f, 0.9, 50).unwrap();
        assert_eq!(out.frame_index, 7);
        assert_eq!(out.boxes, vec![f.boxes[1]]);
    }

    #[test]
    fn nms_keeps_disjoint_and_boundary() {
        let f = FrameDetections::new(
            0,
            vec![sb(0.0, 0.0, 1.0, 1.0, 0.3), sb(5.0, 5.0, 6.0, 6.0, 0.7)],
        );
        let out = nms(&f, 0.9, 50).unwrap();
        assert_eq!(out.boxes, vec![f.boxes[1], f.boxes[0]]);

        // IoU exactly 0.5 survives a 0.5 threshold
        let g = FrameDetections::new(
            0,
            vec![sb(0.0, 0.0, 2.0, 1.0, 0.9), sb(0.0, 0.0, 1.0, 1.0, 0.8)],
        );
        assert_eq!(iou(&g.boxes[0].bbox, &g.boxes[1].bbox), 0.5);
        assert_eq!(nms(&g, 0.5, 50).unwrap().boxes.len(), 2);
    }

    #[test]
    fn nms_tie_prefers_lower_index() {
        let f = FrameDetections::new(
            0,
            vec![sb(0.0, 0.0, 10.0, 10.0, 0.5), sb(0.0, 0.0, 10.0, 10.0, 0.5)],
        );
        let out = nms(&f, 0.9, 50).unwrap();
        assert_eq!(out.boxes.len(), 1);
        assert_eq!(out.boxes[0], f.boxes[0]);
    }

    /// Step-by-step simulation: repeatedly take the best remaining box and
    /// delete every remaining box that overlaps it too much.
    fn greedy_oracle(boxes: &[ScoredBox], thr: f64, max: usize) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..boxes.len()).collect();
        let mut kept = Vec::new();
        while !remaining.is_empty() {
            let mut best_pos = 0;
            for (pos, &i) in remaining.iter().enumerate() {
                if boxes[i].score > boxes[remaining[best_pos]].score {
                    best_pos = pos;
                }
            }
            let best = remaining.remove(best_pos);
            kept.push(best);
            remaining.retain(|&j| iou(&boxes[best].bbox, &boxes[j].bbox) <= thr);
        }
        kept.truncate(max);
        kept
    }

    #[test]
    fn nms_five_box_construction() {
        // box 1 overlaps box 0 heavily, box 3 overlaps box 2 heavily
        let boxes = vec![
            sb(0.0, 0.0, 10.0, 10.0, 0.95),
            sb(0.0, 0.0, 10.0, 9.8, 0.90),
            sb(20.0, 20.0, 30.0, 30.0, 0.85),
            sb(20.0, 20.0, 29.6, 30.0, 0.60),
            sb(5.0, 5.0, 15.0, 15.0, 0.70),
        ];
        // reorder so that the suppressed boxes sit at positions 2 and 4
        let boxes = vec![boxes[0], boxes[2], boxes[1], boxes[4], boxes[3]];
        let frame = FrameDetections::new(0, boxes.clone());
        let out = nms(&frame, 0.9, 50).unwrap();
        let oracle = greedy_oracle(&boxes, 0.9, 50);
        assert_eq!(oracle, vec![0, 1, 3]);
        let expected: Vec<ScoredBox> = oracle.iter().map(|&i| boxes[i]).collect();
        assert_eq!(out.boxes, expected);
    }

    #[test]
    fn nms_truncates_to_max_boxes() {
        let boxes: Vec<ScoredBox> = (0..10)
            .map(|i| sb(i as f64 * 10.0, 0.0, i as f64 * 10.0 + 5.0, 5.0, i as f64 / 10.0))
            .collect();
        let out = nms(&FrameDetections::new(0, boxes.clone()), 0.9, 3).unwrap();
        assert_eq!(out.boxes, vec![boxes[9], boxes[8], boxes[7]]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.0..30.0f64, 0.0..30.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    fn arb_scored() -> impl Strategy<Value = ScoredBox> {
        (arb_box(), 0.0..=1.0f64).prop_map(|(b, s)| ScoredBox::new(b, s).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.area() > 0.0 {
                prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn nms_properties(
            boxes in prop::collection::vec(arb_scored(), 0..12),
            thr in 0.05..=1.0f64,
            max in 1usize..8,
        ) {
            let frame = FrameDetections::new(3, boxes.clone());
            let out = nms(&frame, thr, max).unwrap();
            let oracle: Vec<ScoredBox> = greedy_oracle(&boxes, thr, max).iter().map(|&i| boxes[i]).collect();
            prop_assert_eq!(&out.boxes, &oracle);
            prop_assert!(out.boxes.len() <= max);
            for w in out.boxes.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for (i, a) in out.boxes.iter().enumerate() {
                for b in &out.boxes[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                }
            }
            // idempotence
            let again = nms(&out, thr, max).unwrap();
            prop_assert_eq!(again, out.clone());
            // no discarded box beats every survivor while being compatible with all of them
            if out.boxes.len() < max {
                for b in &boxes {
                    if out.boxes.contains(b) { continue; }
                    let compatible = out.boxes.iter().all(|k| iou(&k.bbox, &b.bbox) <= thr);
                    let dominates = out.boxes.iter().all(|k| b.score > k.score);
                    prop_assert!(!(compatible && dominates));
                }
            }
        }
    }
}
