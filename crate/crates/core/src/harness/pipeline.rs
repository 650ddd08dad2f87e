//! Manifest-driven batch runs: link, decode and score every record, then
//! render a deterministic text report.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;

use crate::alphabet::{Alphabet, Transcript};
use crate::attention::{self, AttentionParams};
use crate::beam::beam_decode;
use crate::ctc::greedy_decode;
use crate::geometry::{nms, FrameDetections};
use crate::lm::{CharLm, NGramLm};
use crate::metrics::{bucket_by_fps, confusion_stats, total_counts, EvalRecord};
use crate::tube::{best_tube, SigningTube};
use crate::{Error, Result};

use super::config::{DecoderKind, PipelineConfig};
use super::formats::{self, MANIFEST_MAGIC};
use super::synth::SynthSample;

pub const REPORT_MAGIC: &str = "fingerspell-report v1";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub fps: Option<f64>,
    pub transcript: String,
    pub detections: Option<PathBuf>,
    pub emissions: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
}

fn opt_path(field: &str, base: Option<&FsPath>) -> Option<PathBuf> {
    if field == "-" {
        return None;
    }
    let p = PathBuf::from(field);
    Some(match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    })
}

/// Tab-separated rows: `id fps detections emissions encoder transcript`,
/// with `-` for absent fields. Relative paths resolve against `base`.
pub fn parse_manifest(text: &str, origin: &str, base: Option<&FsPath>) -> Result<Vec<DatasetRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == MANIFEST_MAGIC => {}
        Some((n, l)) => return Err(err(n, format!("expected header {MANIFEST_MAGIC:?}, found {l:?}"))),
        None => return Err(err(1, "empty manifest".into())),
    }
    let mut records: Vec<DatasetRecord> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(err(n, format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0].to_string();
        if id.is_empty() || id == "-" {
            return Err(err(n, "record id must be non-empty".into()));
        }
        if records.iter().any(|r| r.id == id) {
            return Err(err(n, format!("duplicate id {id:?}")));
        }
        let fps = match fields[1] {
            "-" => None,
            v => Some(v.parse::<f64>().map_err(|_| err(n, format!("bad fps {v:?}")))?),
        };
        records.push(DatasetRecord {
            id,
            fps,
            detections: opt_path(fields[2], base),
            emissions: opt_path(fields[3], base),
            encoder: opt_path(fields[4], base),
            transcript: fields[5].to_string(),
        });
    }
    Ok(records)
}

pub fn read_manifest(path: &FsPath) -> Result<Vec<DatasetRecord>> {
    let text = formats::read_file(path)?;
    parse_manifest(&text, &path.display().to_string(), path.parent())
}

/// Paths under `base` are written relative to it.
pub fn write_manifest(records: &[DatasetRecord], base: Option<&FsPath>) -> String {
    let show = |p: &Option<PathBuf>| match p {
        None => "-".to_string(),
        Some(p) => base
            .and_then(|b| p.strip_prefix(b).ok())
            .unwrap_or(p)
            .display()
            .to_string(),
    };
    let mut out = format!("{MANIFEST_MAGIC}\n");
    for r in records {
        let fps = r.fps.map_or("-".to_string(), |f| f.to_string());
        writeln!(
            out,
            "{}\t{fps}\t{}\t{}\t{}\t{}",
            r.id,
            show(&r.detections),
            show(&r.emissions),
            show(&r.encoder),
            r.transcript
        )
        .unwrap();
    }
    out
}

/// Writes `<id>.det`, `<id>.emis` and `<id>.gold` into `dir`.
pub fn write_sample(dir: &FsPath, id: &str, sample: &SynthSample, alphabet: &Alphabet) -> Result<DatasetRecord> {
    let det = dir.join(format!("{id}.det"));
    let emis = dir.join(format!("{id}.emis"));
    let gold = dir.join(format!("{id}.gold"));
    formats::write_file(&det, &formats::write_detections(&sample.detections))?;
    formats::write_file(&emis, &formats::write_emissions(&sample.emissions, alphabet)?)?;
    let indices: Vec<usize> = sample.detections.iter().map(|f| f.frame_index).collect();
    formats::write_file(&gold, &formats::write_boxes(&indices, &sample.gold))?;
    Ok(DatasetRecord {
        id: id.to_string(),
        fps: Some(sample.fps),
        transcript: alphabet.decode(&sample.transcript)?,
        detections: Some(det),
        emissions: Some(emis),
        encoder: None,
    })
}

/// Models shared by every record of a run.
pub struct Resources {
    pub alphabet: Alphabet,
    pub lm: Option<NGramLm>,
    pub attention: Option<AttentionParams>,
}

impl Resources {
    pub fn new(alphabet: Alphabet) -> Self {
        Resources { alphabet, lm: None, attention: None }
    }

    /// Loads the LM and attention parameters named in `config`.
    pub fn load(config: &PipelineConfig, alphabet: Alphabet) -> Result<Self> {
        let lm = match &config.lm {
            Some(path) => {
                let (lm_alphabet, lm) = formats::read_ngram(path)?;
                if lm_alphabet != alphabet {
                    return Err(Error::InvalidParameter(format!(
                        "language model {} uses alphabet {lm_alphabet}, expected {alphabet}",
                        path.display()
                    )));
                }
                Some(lm)
            }
            None => None,
        };
        let attention = match &config.attn_params {
            Some(path) => {
                let p = formats::attention_from_tensors(formats::read_tensors(path)?)?;
                if p.n_letters() != alphabet.len() {
                    return Err(Error::shape("attention vocabulary", alphabet.len(), p.n_letters()));
                }
                Some(p)
            }
            None => None,
        };
        Ok(Resources { alphabet, lm, attention })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordOutcome {
    pub id: String,
    pub fps: Option<f64>,
    pub reference: Transcript,
    pub hypothesis: Transcript,
    pub tube: Option<SigningTube>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub id: String,
    pub stage: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    /// Sorted by id.
    pub outcomes: Vec<RecordOutcome>,
    /// Sorted by id.
    pub failures: Vec<Failure>,
    pub text: String,
}

impl PipelineReport {
    pub fn eval_records(&self) -> Vec<EvalRecord> {
        self.outcomes
            .iter()
            .map(|o| EvalRecord {
                id: o.id.clone(),
                reference: o.reference.clone(),
                hypothesis: o.hypothesis.clone(),
                fps: o.fps,
            })
            .collect()
    }
}

fn link(path: &FsPath, config: &PipelineConfig) -> Result<SigningTube> {
    let frames = formats::read_detections(path)?;
    let kept = frames
        .iter()
        .map(|f| nms(f, config.nms_iou, config.max_boxes))
        .collect::<Result<Vec<FrameDetections>>>()?;
    best_tube(&kept, &config.linker()?)
}

fn decode(record: &DatasetRecord, config: &PipelineConfig, res: &Resources) -> Result<Transcript> {
    let missing = |what: &str| Error::InvalidParameter(format!("decoder {} needs a {what} file", config.decoder));
    match config.decoder {
        DecoderKind::Greedy | DecoderKind::Ctc => {
            let path = record.emissions.as_ref().ok_or_else(|| missing("emissions"))?;
            let (alphabet, em) = formats::read_emissions(path)?;
            if alphabet != res.alphabet {
                return Err(Error::InvalidParameter(format!(
                    "emissions alphabet {alphabet} differs from {}",
                    res.alphabet
                )));
            }
            if config.decoder == DecoderKind::Greedy {
                return Ok(greedy_decode(&em));
            }
            let lm = res.lm.as_ref().map(|lm| lm as &dyn CharLm);
            Ok(beam_decode(&em, lm, &config.fusion())?.best)
        }
        DecoderKind::Attention => {
            let path = record.encoder.as_ref().ok_or_else(|| missing("encoder"))?;
            let params = res
                .attention
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("attention parameters not loaded".into()))?;
            let enc = formats::read_matrix(path)?;
            attention::decode(&enc, params, config.beam)
        }
    }
}

fn process(record: &DatasetRecord, config: &PipelineConfig, res: &Resources) -> std::result::Result<RecordOutcome, Failure> {
    let fail = |stage: &'static str| {
        move |e: Error| Failure {
            id: record.id.clone(),
            stage,
            message: e.to_string(),
        }
    };
    let reference = res.alphabet.encode(&record.transcript).map_err(fail("transcript"))?;
    if reference.is_empty() {
        return Err(fail("transcript")(Error::Empty("reference transcript")));
    }
    let tube = match &record.detections {
        Some(path) => Some(link(path, config).map_err(fail("link"))?),
        None => None,
    };
    let hypothesis = decode(record, config, res).map_err(fail("decode"))?;
    Ok(RecordOutcome {
        id: record.id.clone(),
        fps: record.fps,
        reference,
        hypothesis,
        tube,
    })
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn fmt_pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Accuracy, S/I/D totals, the `top_k` most frequent confusions and the
/// per-bucket table. Rows are tab-separated and prefixed by their kind.
pub fn render_evaluation(records: &[EvalRecord], alphabet: &Alphabet, edges: &[f64], top_k: usize) -> Result<String> {
    let mut out = String::new();
    let counts = total_counts(records)?;
    writeln!(out, "accuracy\t{}", fmt_pct(counts.accuracy())).unwrap();
    writeln!(
        out,
        "errors\tsubstitutions {}\tinsertions {}\tdeletions {}\treference_letters {}",
        counts.substitutions, counts.insertions, counts.deletions, counts.reference_len
    )
    .unwrap();
    let token = |id: usize| alphabet.token(id).unwrap_or_else(|| format!("#{id}"));
    for c in confusion_stats(records)?.iter().take(top_k) {
        writeln!(
            out,
            "confusion\t{}\t{}\t{}\t{:.2}",
            token(c.reference),
            token(c.hypothesis),
            c.count,
            c.percentage
        )
        .unwrap();
    }
    if !edges.is_empty() {
        for b in bucket_by_fps(records, edges)? {
            writeln!(out, "bucket\t{}\t{}\t{}\t{}", b.lo, b.hi, b.records, fmt_pct(b.accuracy)).unwrap();
        }
    }
    Ok(out)
}

/// Runs every record (in parallel) and merges results in id order, so the
/// report depends only on the inputs and the config.
pub fn run_pipeline(records: &[DatasetRecord], config: &PipelineConfig, res: &Resources) -> Result<PipelineReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let results: Vec<_> = pool.install(|| records.par_iter().map(|r| process(r, config, res)).collect());
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.id.cmp(&b.id));

    let mut report = PipelineReport { outcomes, failures, text: String::new() };
    let mut out = format!("{REPORT_MAGIC}\n");
    writeln!(
        out,
        "config\tdecoder {}\tbeam {}\tlm_weight {}\tins_penalty {}\tlambda {}\tnms_iou {}\tmax_boxes {}\tlm {}",
        config.decoder,
        config.beam,
        config.lm_weight,
        config.ins_penalty,
        config.lambda,
        config.nms_iou,
        config.max_boxes,
        if res.lm.is_some() { "yes" } else { "no" }
    )
    .unwrap();
    writeln!(
        out,
        "records\ttotal {}\tscored {}\tfailed {}",
        records.len(),
        report.outcomes.len(),
        report.failures.len()
    )
    .unwrap();
    if !report.outcomes.is_empty() {
        match render_evaluation(&report.eval_records(), &res.alphabet, &config.fps_buckets, config.top_confusions) {
            Ok(eval) => out.push_str(&eval),
            Err(e) => writeln!(out, "evaluation-error\t{}", clean(&e.to_string())).unwrap(),
        }
    }
    for o in &report.outcomes {
        let text = |t: &Transcript| res.alphabet.decode(t).unwrap_or_default();
        let tube = o.tube.as_ref().map_or("-".to_string(), |t| t.sequence_score.to_string());
        writeln!(out, "hypothesis\t{}\t{}\t{}\t{tube}", o.id, text(&o.hypothesis), text(&o.reference)).unwrap();
    }
    for f in &report.failures {
        writeln!(out, "failure\t{}\t{}\t{}", f.id, f.stage, clean(&f.message)).unwrap();
    }
    report.text = out;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{synth_batch, ConfusionSets, SynthConfig};

    fn batch(dir: &FsPath, texts: &[&str], config: &SynthConfig) -> Vec<DatasetRecord> {
        let a = Alphabet::fingerspelling();
        let ws: Vec<Transcript> = texts.iter().map(|t| a.encode(t).unwrap()).collect();
        let samples = synth_batch(&ws, &a, &ConfusionSets::fingerspelling(&a), config).unwrap();
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| write_sample(dir, &format!("r{i:03}"), s, &a).unwrap())
            .collect()
    }

    #[test]
    fn manifest_round_trip() {
        let base = FsPath::new("/data/set");
        let records = vec![
            DatasetRecord {
                id: "x1".into(),
                fps: Some(29.97),
                transcript: "new york".into(),
                detections: Some(base.join("x1.det")),
                emissions: Some(base.join("x1.emis")),
                encoder: None,
            },
            DatasetRecord {
                id: "x2".into(),
                fps: None,
                transcript: "nad".into(),
                detections: None,
                emissions: Some(PathBuf::from("/elsewhere/x2.emis")),
                encoder: Some(base.join("enc/x2.mat")),
            },
        ];
        let text = write_manifest(&records, Some(base));
        assert!(text.contains("\tx1.det\t"));
        assert_eq!(parse_manifest(&text, "m", Some(base)).unwrap(), records);
        assert!(parse_manifest("fingerspell-manifest v1\na\t-\t-\t-\t-\n", "m", None).is_err());
    }

    #[test]
    fn noiseless_batch_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let records = batch(dir.path(), &["nad", "hello", "aab", "new york"], &SynthConfig::noiseless(3));
        let res = Resources::new(Alphabet::fingerspelling());
        for decoder in [DecoderKind::Greedy, DecoderKind::Ctc] {
            let config = PipelineConfig { decoder, ..PipelineConfig::default() };
            let report = run_pipeline(&records, &config, &res).unwrap();
            assert!(report.failures.is_empty());
            assert!(report.text.contains("accuracy\t100.00\n"), "{}", report.text);
        }
    }

    #[test]
    fn missing_detections_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let records = batch(dir.path(), &["nad", "hello", "aab"], &SynthConfig::noiseless(3));
        std::fs::remove_file(records[1].detections.as_ref().unwrap()).unwrap();
        let report = run_pipeline(&records, &PipelineConfig::default(), &Resources::new(Alphabet::fingerspelling())).unwrap();
        assert_eq!(report.outcomes.len(), 2);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].id, "r001");
        assert_eq!(report.failures[0].stage, "link");
        assert!(report.text.contains("failure\tr001\tlink\t"));
    }

    #[test]
    fn report_does_not_depend_on_threads() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig { seed: 9, confusion_prob: 0.3, ..SynthConfig::default() };
        let records = batch(dir.path(), &["nad", "hello", "aab", "quiz", "jest", "vow"], &config);
        let res = Resources::new(Alphabet::fingerspelling());
        let one = run_pipeline(&records, &PipelineConfig { threads: 1, ..PipelineConfig::default() }, &res).unwrap();
        let mut reversed = records.clone();
        reversed.reverse();
        let many = run_pipeline(&reversed, &PipelineConfig { threads: 4, ..PipelineConfig::default() }, &res).unwrap();
        assert_eq!(one.text, many.text);
    }

    #[test]
    fn evaluation_rendering() {
        let a = Alphabet::fingerspelling();
        let rec = |id: &str, r: &str, h: &str, fps: f64| EvalRecord {
            id: id.into(),
            reference: a.encode(r).unwrap(),
            hypothesis: a.encode(h).unwrap(),
            fps: Some(fps),
        };
        let records = vec![rec("a", "nad", "sad", 10.0), rec("b", "ab", "ab", 50.0)];
        let text = render_evaluation(&records, &a, &[30.0], 5).unwrap();
        assert_eq!(
            text,
            "accuracy\t80.00\nerrors\tsubstitutions 1\tinsertions 0\tdeletions 0\treference_letters 5\n\
             confusion\tn\ts\t1\t100.00\nbucket\t-inf\t30\t1\t66.67\nbucket\t30\tinf\t1\t100.00\n"
        );
    }
}
