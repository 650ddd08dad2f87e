//! `fingerspell` command-line tool.
//!
//! Every subcommand exits 0 on success. On failure it prints tab-separated
//! `failure` or `error` lines and exits 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fingerspell::alphabet::{Alphabet, Transcript};
use fingerspell::attention;
use fingerspell::beam::beam_decode;
use fingerspell::ctc::greedy_decode;
use fingerspell::geometry::{nms, FrameDetections};
use fingerspell::harness::config::parse_edges;
use fingerspell::harness::formats::{self, TranscriptEntry};
use fingerspell::harness::pipeline::{read_manifest, render_evaluation, write_manifest, write_sample, Resources};
use fingerspell::harness::{run_pipeline, synth_batch, ConfusionSets, DecoderKind, PipelineConfig, SynthConfig, TranscriptSampler};
use fingerspell::lm::{perplexity, train_ngram, CharLm, UniformLm};
use fingerspell::metrics::EvalRecord;
use fingerspell::tube::best_tube;

#[derive(Parser)]
#[command(name = "fingerspell", version, about = "Fingerspelling recognition back end: tube linking, decoding and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link per-frame detections into a signing-hand tube.
    Link(LinkCmd),
    /// Decode an emissions (CTC) or encoder-state (attention) file.
    Decode(DecodeCmd),
    /// Score hypotheses against references.
    Eval(EvalCmd),
    /// Generate a synthetic dataset with a manifest.
    Synth(SynthCmd),
    /// Perplexity of a character LM on a transcript file.
    Perplexity(PerplexityCmd),
    /// Link, decode and score every record of a manifest.
    Pipeline(PipelineCmd),
}

#[derive(Args, Default)]
struct LinkOpts {
    /// Weight of the IoU term in the linking score.
    #[arg(long)]
    lambda: Option<f64>,
    /// NMS overlap threshold.
    #[arg(long)]
    nms_iou: Option<f64>,
    /// Boxes kept per frame after NMS.
    #[arg(long)]
    max_boxes: Option<usize>,
}

#[derive(Args, Default)]
struct DecodeOpts {
    /// ctc, attn or greedy.
    #[arg(long)]
    model: Option<String>,
    /// Best-path CTC decoding instead of beam search.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    lm_weight: Option<f64>,
    /// Added per emitted letter.
    #[arg(long, allow_hyphen_values = true)]
    ins_penalty: Option<f64>,
    /// N-gram LM file for shallow fusion.
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Attention decoder parameter file.
    #[arg(long)]
    attn_params: Option<PathBuf>,
}

#[derive(Args)]
struct LinkCmd {
    #[arg(long)]
    detections: PathBuf,
    /// Output tube file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    link: LinkOpts,
}

#[derive(Args)]
struct DecodeCmd {
    /// CTC emissions file.
    #[arg(long, conflicts_with = "encoder")]
    emissions: Option<PathBuf>,
    /// Encoder-state matrix file for the attention decoder.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Print the N best CTC hypotheses with their fused scores.
    #[arg(long)]
    nbest: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    decode: DecodeOpts,
}

#[derive(Args)]
struct EvalCmd {
    /// Reference transcripts (`id<TAB>text[<TAB>fps]`).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis transcripts.
    #[arg(long)]
    hyp: PathBuf,
    /// Comma-separated FPS bucket edges.
    #[arg(long)]
    fps_buckets: Option<String>,
    /// Number of confusion pairs listed.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    out_dir: PathBuf,
    /// Records to generate when no transcript file is given.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Use these transcripts instead of sampling them.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emission noise mass moved off the true symbol.
    #[arg(long)]
    noise: Option<f64>,
    /// Chance that a letter is rendered ambiguously with a confusable one.
    #[arg(long)]
    confusion_prob: Option<f64>,
    /// Detection jitter std in pixels.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    distractors: Option<usize>,
    /// No emission noise, jitter or distractors.
    #[arg(long)]
    noiseless: bool,
    /// Also write an n-gram LM trained on this many extra sampled transcripts.
    #[arg(long)]
    lm_corpus: Option<usize>,
    #[arg(long, default_value_t = 2)]
    lm_order: usize,
    #[arg(long, default_value_t = 0.1)]
    lm_k: f64,
}

#[derive(Args)]
struct PerplexityCmd {
    /// N-gram LM file; the uniform model when absent.
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Transcript file.
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct PipelineCmd {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated FPS bucket edges.
    #[arg(long)]
    fps_buckets: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    link: LinkOpts,
    #[command(flatten)]
    decode: DecodeOpts,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::from_file(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_link(cfg: &mut PipelineConfig, o: &LinkOpts) {
    if let Some(v) = o.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = o.nms_iou {
        cfg.nms_iou = v;
    }
    if let Some(v) = o.max_boxes {
        cfg.max_boxes = v;
    }
}

fn apply_decode(cfg: &mut PipelineConfig, o: &DecodeOpts) -> Result<()> {
    if let Some(m) = &o.model {
        cfg.decoder = m.parse()?;
    }
    if o.greedy {
        if cfg.decoder == DecoderKind::Attention {
            bail!("--greedy applies to CTC decoding only");
        }
        cfg.decoder = DecoderKind::Greedy;
    }
    if let Some(v) = o.beam {
        cfg.beam = v;
    }
    if let Some(v) = o.lm_weight {
        cfg.lm_weight = v;
    }
    if let Some(v) = o.ins_penalty {
        cfg.ins_penalty = v;
    }
    if let Some(p) = &o.lm {
        cfg.lm = Some(p.clone());
    }
    if let Some(p) = &o.attn_params {
        cfg.attn_params = Some(p.clone());
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(formats::write_file(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn link(cmd: LinkCmd) -> Result<()> {
    let mut cfg = load_config(cmd.config.as_deref())?;
    apply_link(&mut cfg, &cmd.link);
    cfg.validate()?;
    let frames = formats::read_detections(&cmd.detections)?;
    let kept = frames
        .iter()
        .map(|f| nms(f, cfg.nms_iou, cfg.max_boxes))
        .collect::<fingerspell::Result<Vec<FrameDetections>>>()?;
    let tube = best_tube(&kept, &cfg.linker()?)?;
    emit(cmd.out.as_deref(), &formats::write_tube(&tube))
}

fn decode(cmd: DecodeCmd) -> Result<()> {
    let mut cfg = load_config(cmd.config.as_deref())?;
    apply_decode(&mut cfg, &cmd.decode)?;
    if cmd.encoder.is_some() && cmd.decode.model.is_none() {
        cfg.decoder = DecoderKind::Attention;
    }
    cfg.validate()?;
    if cfg.decoder == DecoderKind::Attention {
        let path = cmd.encoder.context("--model attn needs --encoder")?;
        if cmd.nbest.is_some() {
            bail!("--nbest is only available for CTC decoding");
        }
        let params = formats::attention_from_tensors(formats::read_tensors(cfg.attn_params.as_ref().unwrap())?)?;
        let alphabet = Alphabet::fingerspelling();
        if params.n_letters() != alphabet.len() {
            bail!("attention parameters predict {} letters, expected {}", params.n_letters(), alphabet.len());
        }
        let enc = formats::read_matrix(&path)?;
        let best = attention::decode_with_max_len(&enc, &params, cfg.beam, 2 * enc.nrows())?;
        println!("{}", alphabet.decode(&best.transcript)?);
        return Ok(());
    }

    let path = cmd.emissions.context("CTC decoding needs --emissions")?;
    let (alphabet, em) = formats::read_emissions(&path)?;
    if cfg.decoder == DecoderKind::Greedy {
        if cmd.nbest.is_some() {
            bail!("--nbest needs beam search");
        }
        println!("{}", alphabet.decode(&greedy_decode(&em))?);
        return Ok(());
    }
    let lm = match &cfg.lm {
        Some(p) => {
            let (lm_alphabet, lm) = formats::read_ngram(p)?;
            if lm_alphabet != alphabet {
                bail!("language model alphabet {lm_alphabet} differs from emissions alphabet {alphabet}");
            }
            Some(lm)
        }
        None => None,
    };
    let out = beam_decode(&em, lm.as_ref().map(|l| l as &dyn CharLm), &cfg.fusion())?;
    match cmd.nbest {
        Some(n) => {
            for (rank, (w, score)) in out.nbest.iter().take(n).enumerate() {
                println!("nbest\t{}\t{score}\t{}", rank + 1, alphabet.decode(w)?);
            }
        }
        None => println!("{}", alphabet.decode(&out.best)?),
    }
    Ok(())
}

/// Returns the failure lines (empty on success).
fn eval(cmd: EvalCmd) -> Result<Vec<String>> {
    let alphabet = Alphabet::fingerspelling();
    let refs = formats::read_transcripts(&cmd.reference)?;
    let hyps = formats::read_transcripts(&cmd.hyp)?;
    let edges = match &cmd.fps_buckets {
        Some(s) => parse_edges(s)?,
        None => Vec::new(),
    };
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for r in &refs {
        let Some(h) = hyps.iter().find(|h| h.id == r.id) else {
            failures.push(format!("failure\t{}\tmissing hypothesis", r.id));
            continue;
        };
        let encoded = alphabet
            .encode(&r.text)
            .and_then(|reference| Ok((reference, alphabet.encode(&h.text)?)));
        match encoded {
            Ok((reference, _)) if reference.is_empty() => {
                failures.push(format!("failure\t{}\tempty reference", r.id))
            }
            Ok((reference, hypothesis)) => records.push(EvalRecord {
                id: r.id.clone(),
                reference,
                hypothesis,
                fps: r.fps.or(h.fps),
            }),
            Err(e) => failures.push(format!("failure\t{}\t{e}", r.id)),
        }
    }
    for h in &hyps {
        if !refs.iter().any(|r| r.id == h.id) {
            failures.push(format!("failure\t{}\tno reference", h.id));
        }
    }
    if records.is_empty() {
        bail!("no record could be scored");
    }
    print!("{}", render_evaluation(&records, &alphabet, &edges, cmd.top)?);
    Ok(failures)
}

fn synth(cmd: SynthCmd) -> Result<()> {
    let alphabet = Alphabet::fingerspelling();
    let mut config = if cmd.noiseless {
        SynthConfig::noiseless(cmd.seed)
    } else {
        SynthConfig { seed: cmd.seed, ..SynthConfig::default() }
    };
    if let Some(v) = cmd.noise {
        config.emission_noise = v;
    }
    if let Some(v) = cmd.confusion_prob {
        config.confusion_prob = v;
    }
    if let Some(v) = cmd.jitter {
        config.detection_jitter = v;
    }
    if let Some(v) = cmd.distractors {
        config.distractors_per_frame = v;
    }
    config.validate()?;

    let letters: Vec<usize> = (0..26).collect();
    let sampler = TranscriptSampler::random(&letters, 3, (3, 8), 0.15, cmd.seed)?;
    let transcripts: Vec<Transcript> = match &cmd.transcripts {
        Some(p) => formats::encode_entries(&formats::read_transcripts(p)?, &alphabet)?,
        None => sampler.sample_many(cmd.count, cmd.seed),
    };
    fs::create_dir_all(&cmd.out_dir).with_context(|| format!("creating {}", cmd.out_dir.display()))?;
    let samples = synth_batch(&transcripts, &alphabet, &ConfusionSets::fingerspelling(&alphabet), &config)?;
    let width = samples.len().max(1).to_string().len();
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| write_sample(&cmd.out_dir, &format!("rec{i:0width$}"), s, &alphabet))
        .collect::<fingerspell::Result<Vec<_>>>()?;
    formats::write_file(&cmd.out_dir.join("manifest.tsv"), &write_manifest(&records, Some(&cmd.out_dir)))?;
    let refs: Vec<TranscriptEntry> = records
        .iter()
        .map(|r| TranscriptEntry { id: r.id.clone(), text: r.transcript.clone(), fps: r.fps })
        .collect();
    formats::write_file(&cmd.out_dir.join("references.tsv"), &formats::write_transcripts(&refs))?;
    if let Some(n) = cmd.lm_corpus {
        let corpus = sampler.sample_many(n, cmd.seed.wrapping_add(1));
        let lm = train_ngram(&corpus, alphabet.len(), cmd.lm_order, cmd.lm_k)?;
        formats::write_file(&cmd.out_dir.join("lm.ngram"), &formats::write_ngram(&lm, &alphabet)?)?;
    }
    println!("wrote {} records to {}", records.len(), cmd.out_dir.display());
    Ok(())
}

fn perplexity_cmd(cmd: PerplexityCmd) -> Result<()> {
    let (alphabet, lm): (Alphabet, Box<dyn CharLm>) = match &cmd.lm {
        Some(p) => {
            let (a, lm) = formats::read_ngram(p)?;
            (a, Box::new(lm))
        }
        None => {
            let a = Alphabet::fingerspelling();
            let n = a.len();
            (a, Box::new(UniformLm { n_letters: n }))
        }
    };
    let corpus = formats::encode_entries(&formats::read_transcripts(&cmd.corpus)?, &alphabet)?;
    println!("perplexity\t{}", perplexity(lm.as_ref(), &corpus)?);
    Ok(())
}

/// Returns the failure lines (empty on success).
fn pipeline(cmd: PipelineCmd) -> Result<Vec<String>> {
    let mut cfg = load_config(cmd.config.as_deref())?;
    apply_link(&mut cfg, &cmd.link);
    apply_decode(&mut cfg, &cmd.decode)?;
    if let Some(s) = &cmd.fps_buckets {
        cfg.fps_buckets = parse_edges(s)?;
    }
    if let Some(t) = cmd.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    let records = read_manifest(&cmd.manifest)?;
    let res = Resources::load(&cfg, Alphabet::fingerspelling())?;
    let report = run_pipeline(&records, &cfg, &res)?;
    if let Some(out) = &cmd.out {
        formats::write_file(out, &report.text)?;
    }
    print!("{}", report.text);
    Ok(report
        .text
        .lines()
        .filter(|l| l.starts_with("failure\t"))
        .map(str::to_string)
        .collect())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Link(_) => "link",
        Command::Decode(_) => "decode",
        Command::Eval(_) => "eval",
        Command::Synth(_) => "synth",
        Command::Perplexity(_) => "perplexity",
        Command::Pipeline(_) => "pipeline",
    };
    let result = match cli.command {
        Command::Link(c) => link(c).map(|_| Vec::new()),
        Command::Decode(c) => decode(c).map(|_| Vec::new()),
        Command::Eval(c) => eval(c),
        Command::Synth(c) => synth(c).map(|_| Vec::new()),
        Command::Perplexity(c) => perplexity_cmd(c).map(|_| Vec::new()),
        Command::Pipeline(c) => pipeline(c),
    };
    match result {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("{f}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            let message = format!("{e:#}").replace(['\t', '\n'], " ");
            eprintln!("error\t{name}\t{message}");
            ExitCode::FAILURE
        }
    }
}
