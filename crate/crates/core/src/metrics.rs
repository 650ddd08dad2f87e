//! Letter accuracy from minimal edit-distance alignments, substitution
//! statistics and frame-rate bucketed accuracy.

use std::collections::BTreeMap;

use crate::alphabet::Transcript;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AlignmentCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    /// Reference length.
    pub reference_len: usize,
}

impl AlignmentCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.errors() as f64 / self.reference_len as f64
    }
}

impl std::ops::AddAssign for AlignmentCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.reference_len += rhs.reference_len;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignedPair {
    Match(usize),
    Substitution { reference: usize, hypothesis: usize },
    Deletion(usize),
    Insertion(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub counts: AlignmentCounts,
    /// Pairs in reference order.
    pub pairs: Vec<AlignedPair>,
}

/// Unit-cost Levenshtein alignment. On equal-cost backtrace choices the
/// diagonal (match, then substitution) wins over deletion, and deletion over
/// insertion.
pub fn align(reference: &Transcript, hypothesis: &Transcript) -> Result<Alignment> {
    let (r, h) = (reference.labels(), hypothesis.labels());
    if r.is_empty() {
        return Err(Error::Empty("reference transcript"));
    }
    let (n, m) = (r.len(), h.len());
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dist[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            dist[i][j] = diag.min(dist[i - 1][j] + 1).min(dist[i][j - 1] + 1);
        }
    }

    let mut pairs = Vec::with_capacity(n.max(m));
    let mut counts = AlignmentCounts {
        reference_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && dist[i][j] == dist[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]) {
            if r[i - 1] == h[j - 1] {
                pairs.push(AlignedPair::Match(r[i - 1]));
            } else {
                counts.substitutions += 1;
                pairs.push(AlignedPair::Substitution {
                    reference: r[i - 1],
                    hypothesis: h[j - 1],
                });
            }
            i -= 1;
            j -= 1;
        } else if i > 0 && dist[i][j] == dist[i - 1][j] + 1 {
            counts.deletions += 1;
            pairs.push(AlignedPair::Deletion(r[i - 1]));
            i -= 1;
        } else {
            counts.insertions += 1;
            pairs.push(AlignedPair::Insertion(h[j - 1]));
            j -= 1;
        }
    }
    pairs.reverse();
    Ok(Alignment { counts, pairs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub reference: Transcript,
    pub hypothesis: Transcript,
    pub fps: Option<f64>,
}

fn pooled_counts(records: &[EvalRecord]) -> Result<AlignmentCounts> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = AlignmentCounts::default();
    for rec in records {
        total += align(&rec.reference, &rec.hypothesis)
            .map_err(|_| Error::InvalidParameter(format!("record {} has an empty reference", rec.id)))?
            .counts;
    }
    Ok(total)
}

/// Summed S, I, D and N over all records.
pub fn total_counts(records: &[EvalRecord]) -> Result<AlignmentCounts> {
    pooled_counts(records)
}

/// `1 - (S + I + D) / N` with counts pooled over every record.
pub fn letter_accuracy(records: &[EvalRecord]) -> Result<f64> {
    Ok(pooled_counts(records)?.accuracy())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionEntry {
    pub reference: usize,
    pub hypothesis: usize,
    pub count: usize,
    /// Share of all reference occurrences of `reference`, in percent.
    pub percentage: f64,
}

/// Substitution pairs with their rate relative to how often the reference
/// symbol occurs. Sorted by percentage (descending), then count, then ids.
pub fn confusion_stats(records: &[EvalRecord]) -> Result<Vec<ConfusionEntry>> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut occurrences: BTreeMap<usize, usize> = BTreeMap::new();
    let mut subs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for rec in records {
        for &l in rec.reference.labels() {
            *occurrences.entry(l).or_default() += 1;
        }
        for pair in align(&rec.reference, &rec.hypothesis)?.pairs {
            if let AlignedPair::Substitution {
                reference,
                hypothesis,
            } = pair
            {
                *subs.entry((reference, hypothesis)).or_default() += 1;
            }
        }
    }
    let mut table: Vec<ConfusionEntry> = subs
        .into_iter()
        .map(|((reference, hypothesis), count)| ConfusionEntry {
            reference,
            hypothesis,
            count,
            percentage: 100.0 * count as f64 / occurrences[&reference] as f64,
        })
        .collect();
    table.sort_by(|a, b| {
        b.percentage
            .total_cmp(&a.percentage)
            .then(b.count.cmp(&a.count))
            .then((a.reference, a.hypothesis).cmp(&(b.reference, b.hypothesis)))
    });
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketAccuracy {
    /// Inclusive lower bound, `-inf` for the first bucket.
    pub lo: f64,
    /// Exclusive upper bound, `+inf` for the last bucket.
    pub hi: f64,
    pub records: usize,
    pub accuracy: f64,
}

/// Accuracy per half-open frame-rate bucket. `k` edges define `k + 1`
/// buckets: `[-inf, e1)`, `[e1, e2)`, ..., `[ek, +inf)`. Empty buckets are
/// left out.
pub fn bucket_by_fps(records: &[EvalRecord], edges: &[f64]) -> Result<Vec<BucketAccuracy>> {
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "FPS bucket edges must be finite and strictly increasing".into(),
        ));
    }
    let mut buckets: Vec<Vec<EvalRecord>> = vec![Vec::new(); edges.len() + 1];
    for rec in records {
        let fps = rec.fps.ok_or_else(|| Error::MissingFps(rec.id.clone()))?;
        let slot = edges.partition_point(|&e| e <= fps);
        buckets[slot].push(rec.clone());
    }
    buckets
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, b)| {
            Ok(BucketAccuracy {
                lo: if i == 0 { f64::NEG_INFINITY } else { edges[i - 1] },
                hi: edges.get(i).copied().unwrap_or(f64::INFINITY),
                records: b.len(),
                accuracy: letter_accuracy(b)?,
            })
        })
        .collect()
}
