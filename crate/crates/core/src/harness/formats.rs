//! Line-oriented text formats. Every file starts with a `fingerspell-<kind> v1`
//! line followed by `key value` header lines and then data rows. Numbers are
//! written with Rust's shortest round-trip formatting, so write-then-read is
//! lossless (`-inf` included).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use crate::alphabet::{Alphabet, Transcript};
use crate::attention::{AttentionParams, GateParams, LstmParams};
use crate::ctc::{EmissionLayerParams, EmissionMatrix};
use crate::geometry::{BoundingBox, FrameDetections, ScoredBox};
use crate::lm::NGramLm;
use crate::tube::SigningTube;
use crate::{Error, Result};

pub const DETECTIONS_MAGIC: &str = "fingerspell-detections v1";
pub const EMISSIONS_MAGIC: &str = "fingerspell-emissions v1";
pub const TUBE_MAGIC: &str = "fingerspell-tube v1";
pub const BOXES_MAGIC: &str = "fingerspell-boxes v1";
pub const MATRIX_MAGIC: &str = "fingerspell-matrix v1";
pub const PARAMS_MAGIC: &str = "fingerspell-params v1";
pub const NGRAM_MAGIC: &str = "fingerspell-ngram v1";
pub const MANIFEST_MAGIC: &str = "fingerspell-manifest v1";

const LM_START: &str = "<s>";
const LM_END: &str = "</s>";

pub fn read_file(path: &FsPath) -> Result<String> {
    fs::read_to_string(path).map_err(|error| Error::Io {
        path: path.to_path_buf(),
        error,
    })
}

pub fn write_file(path: &FsPath, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|error| Error::Io {
        path: path.to_path_buf(),
        error,
    })
}

/// Cursor over non-empty lines with 1-based line numbers for error messages.
struct Lines<'a> {
    origin: &'a str,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
                .filter(|(_, l)| !l.trim().is_empty()),
        );
        Lines {
            origin,
            inner: iter.peekable(),
            last_line: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.inner.next();
        if let Some((n, _)) = item {
            self.last_line = n;
        }
        item
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last = self.last_line;
        self.next()
            .ok_or_else(|| self.err(last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn magic(&mut self, magic: &str) -> Result<()> {
        let (n, line) = self.expect_line(magic)?;
        if line.trim() != magic {
            return Err(self.err(n, format!("expected header {magic:?}, found {line:?}")));
        }
        Ok(())
    }

    /// `key rest...`; returns the rest tokens.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.expect_line(key)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok((n, tokens.collect())),
            _ => Err(self.err(n, format!("expected {key:?} line, found {line:?}"))),
        }
    }

    fn keyed_one<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, tokens) = self.keyed(key)?;
        match tokens.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| self.err(n, format!("bad value {v:?} for {key}"))),
            _ => Err(self.err(n, format!("{key} takes exactly one value"))),
        }
    }

    fn numbers(&self, n: usize, tokens: &[&str]) -> Result<Vec<f64>> {
        tokens
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(n, format!("bad number {t:?}")))
            })
            .collect()
    }

    fn row(&mut self, width: usize, what: &str) -> Result<Vec<f64>> {
        let (n, line) = self.expect_line(what)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != width {
            return Err(self.err(n, format!("{what} needs {width} values, found {}", tokens.len())));
        }
        self.numbers(n, &tokens)
    }

    fn finish(&mut self) -> Result<()> {
        match self.next() {
            Some((n, line)) => Err(self.err(n, format!("unexpected trailing line {line:?}"))),
            None => Ok(()),
        }
    }
}

fn join_numbers(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_usize(lines: &Lines<'_>, n: usize, token: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| lines.err(n, format!("bad integer {token:?}")))
}

// ---------------------------------------------------------------- detections

pub fn write_detections(frames: &[FrameDetections]) -> String {
    let mut out = format!("{DETECTIONS_MAGIC}\nframes {}\n", frames.len());
    for f in frames {
        out.push_str(&f.frame_index.to_string());
        for b in &f.boxes {
            write!(
                out,
                " {} {} {} {} {}",
                b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max, b.score
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<FrameDetections>> {
    let mut lines = Lines::new(text, origin);
    lines.magic(DETECTIONS_MAGIC)?;
    let count: usize = lines.keyed_one("frames")?;
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.expect_line("frame record")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let frame_index = parse_usize(&lines, n, tokens[0])?;
        if !(tokens.len() - 1).is_multiple_of(5) {
            return Err(lines.err(n, "box fields must come in groups of five"));
        }
        if frames.iter().any(|f: &FrameDetections| f.frame_index == frame_index) {
            return Err(lines.err(n, format!("duplicate frame index {frame_index}")));
        }
        let values = lines.numbers(n, &tokens[1..])?;
        let boxes = values
            .chunks(5)
            .map(|c| {
                BoundingBox::new(c[0], c[1], c[2], c[3])
                    .and_then(|b| ScoredBox::new(b, c[4]))
                    .map_err(|e| lines.err(n, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(FrameDetections { frame_index, boxes });
    }
    lines.finish()?;
    Ok(frames)
}

pub fn read_detections(path: &FsPath) -> Result<Vec<FrameDetections>> {
    parse_detections(&read_file(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- emissions

pub fn write_emissions(em: &EmissionMatrix, alphabet: &Alphabet) -> Result<String> {
    if alphabet.num_classes() != em.num_classes() {
        return Err(Error::shape("emission classes", alphabet.num_classes(), em.num_classes()));
    }
    let mut out = format!(
        "{EMISSIONS_MAGIC}\nframes {}\nclasses {}\nalphabet {}\nblank {}\n",
        em.num_frames(),
        em.num_classes(),
        alphabet,
        em.blank()
    );
    for row in em.log_probs().rows() {
        out.push_str(&join_numbers(row.iter().copied()));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_emissions(text: &str, origin: &str) -> Result<(Alphabet, EmissionMatrix)> {
    let mut lines = Lines::new(text, origin);
    lines.magic(EMISSIONS_MAGIC)?;
    let frames: usize = lines.keyed_one("frames")?;
    let classes: usize = lines.keyed_one("classes")?;
    let (n, tokens) = lines.keyed("alphabet")?;
    let alphabet = Alphabet::from_header_tokens(&tokens).map_err(|e| lines.err(n, e.to_string()))?;
    if alphabet.num_classes() != classes {
        return Err(lines.err(n, format!("alphabet lists {} classes, header says {classes}", alphabet.num_classes())));
    }
    let blank: usize = lines.keyed_one("blank")?;
    if blank != classes - 1 {
        return Err(lines.err(lines.last_line, "blank must be the last class"));
    }
    let mut values = Vec::with_capacity(frames * classes);
    for _ in 0..frames {
        values.extend(lines.row(classes, "emission row")?);
    }
    lines.finish()?;
    let matrix = Array2::from_shape_vec((frames, classes), values)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((alphabet, EmissionMatrix::new(matrix)?))
}

pub fn read_emissions(path: &FsPath) -> Result<(Alphabet, EmissionMatrix)> {
    parse_emissions(&read_file(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- tubes and boxes

pub fn write_tube(tube: &SigningTube) -> String {
    let mut out = format!("{TUBE_MAGIC}\nframes {}\nscore {}\n", tube.len(), tube.sequence_score);
    for ((idx, choice), b) in tube.frame_indices.iter().zip(&tube.choices).zip(&tube.boxes) {
        writeln!(
            out,
            "{idx} {choice} {} {} {} {} {}",
            b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max, b.score
        )
        .unwrap();
    }
    out
}

pub fn parse_tube(text: &str, origin: &str) -> Result<SigningTube> {
    let mut lines = Lines::new(text, origin);
    lines.magic(TUBE_MAGIC)?;
    let frames: usize = lines.keyed_one("frames")?;
    let sequence_score: f64 = lines.keyed_one("score")?;
    let mut tube = SigningTube {
        frame_indices: Vec::with_capacity(frames),
        choices: Vec::with_capacity(frames),
        boxes: Vec::with_capacity(frames),
        sequence_score,
    };
    for _ in 0..frames {
        let (n, line) = lines.expect_line("tube row")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 7 {
            return Err(lines.err(n, "tube rows have 7 fields"));
        }
        tube.frame_indices.push(parse_usize(&lines, n, tokens[0])?);
        tube.choices.push(parse_usize(&lines, n, tokens[1])?);
        let v = lines.numbers(n, &tokens[2..])?;
        let b = BoundingBox::new(v[0], v[1], v[2], v[3])
            .and_then(|b| ScoredBox::new(b, v[4]))
            .map_err(|e| lines.err(n, e.to_string()))?;
        tube.boxes.push(b);
    }
    lines.finish()?;
    Ok(tube)
}

pub fn write_boxes(frame_indices: &[usize], boxes: &[BoundingBox]) -> String {
    let mut out = format!("{BOXES_MAGIC}\nframes {}\n", boxes.len());
    for (idx, b) in frame_indices.iter().zip(boxes) {
        writeln!(out, "{idx} {} {} {} {}", b.x_min, b.y_min, b.x_max, b.y_max).unwrap();
    }
    out
}

pub fn parse_boxes(text: &str, origin: &str) -> Result<(Vec<usize>, Vec<BoundingBox>)> {
    let mut lines = Lines::new(text, origin);
    lines.magic(BOXES_MAGIC)?;
    let frames: usize = lines.keyed_one("frames")?;
    let mut indices = Vec::with_capacity(frames);
    let mut boxes = Vec::with_capacity(frames);
    for _ in 0..frames {
        let (n, line) = lines.expect_line("box row")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(lines.err(n, "box rows have 5 fields"));
        }
        indices.push(parse_usize(&lines, n, tokens[0])?);
        let v = lines.numbers(n, &tokens[1..])?;
        boxes.push(BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| lines.err(n, e.to_string()))?);
    }
    lines.finish()?;
    Ok((indices, boxes))
}

// ---------------------------------------------------------------- dense matrices

/// Encoder states or raw features, one row per frame.
pub fn write_matrix(m: &Array2<f64>) -> String {
    let mut out = format!("{MATRIX_MAGIC}\nrows {}\ncols {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        out.push_str(&join_numbers(row.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<Array2<f64>> {
    let mut lines = Lines::new(text, origin);
    lines.magic(MATRIX_MAGIC)?;
    let rows: usize = lines.keyed_one("rows")?;
    let cols: usize = lines.keyed_one("cols")?;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        values.extend(lines.row(cols, "matrix row")?);
    }
    lines.finish()?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::InvalidParameter(e.to_string()))
}

pub fn read_matrix(path: &FsPath) -> Result<Array2<f64>> {
    parse_matrix(&read_file(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- named tensors

/// `tensor <name> <dims...>` followed by the values in row-major order,
/// one line per row (vectors: one line).
pub fn write_tensors(tensors: &BTreeMap<String, ArrayD<f64>>) -> String {
    let mut out = format!("{PARAMS_MAGIC}\ntensors {}\n", tensors.len());
    for (name, t) in tensors {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join(" ")).unwrap();
        let width = t.shape().last().copied().unwrap_or(1).max(1);
        let flat: Vec<f64> = t.iter().copied().collect();
        for chunk in flat.chunks(width) {
            out.push_str(&join_numbers(chunk.iter().copied()));
            out.push('\n');
        }
    }
    out
}

pub fn parse_tensors(text: &str, origin: &str) -> Result<BTreeMap<String, ArrayD<f64>>> {
    let mut lines = Lines::new(text, origin);
    lines.magic(PARAMS_MAGIC)?;
    let count: usize = lines.keyed_one("tensors")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let (n, tokens) = lines.keyed("tensor")?;
        let (name, dims) = tokens
            .split_first()
            .ok_or_else(|| lines.err(n, "tensor line needs a name"))?;
        let shape = dims
            .iter()
            .map(|d| parse_usize(&lines, n, d))
            .collect::<Result<Vec<usize>>>()?;
        if shape.is_empty() || shape.len() > 2 {
            return Err(lines.err(n, "tensors must be vectors or matrices"));
        }
        let width = *shape.last().unwrap();
        let rows = if shape.len() == 2 { shape[0] } else { 1 };
        let mut values = Vec::with_capacity(rows * width);
        if width > 0 {
            for _ in 0..rows {
                values.extend(lines.row(width, name)?);
            }
        }
        let t = ArrayD::from_shape_vec(IxDyn(&shape), values)
            .map_err(|e| lines.err(n, e.to_string()))?;
        if out.insert(name.to_string(), t).is_some() {
            return Err(lines.err(n, format!("duplicate tensor {name}")));
        }
    }
    lines.finish()?;
    Ok(out)
}

fn take_matrix(t: &mut BTreeMap<String, ArrayD<f64>>, name: &str) -> Result<Array2<f64>> {
    t.remove(name)
        .ok_or_else(|| Error::InvalidParameter(format!("missing tensor {name}")))?
        .into_dimensionality()
        .map_err(|_| Error::InvalidParameter(format!("tensor {name} must be a matrix")))
}

fn take_vector(t: &mut BTreeMap<String, ArrayD<f64>>, name: &str) -> Result<Array1<f64>> {
    t.remove(name)
        .ok_or_else(|| Error::InvalidParameter(format!("missing tensor {name}")))?
        .into_dimensionality()
        .map_err(|_| Error::InvalidParameter(format!("tensor {name} must be a vector")))
}

const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];

pub fn attention_to_tensors(p: &AttentionParams) -> BTreeMap<String, ArrayD<f64>> {
    let mut t = BTreeMap::new();
    t.insert("w_enc".into(), p.w_enc.clone().into_dyn());
    t.insert("w_dec".into(), p.w_dec.clone().into_dyn());
    t.insert("v_att".into(), p.v_att.clone().into_dyn());
    t.insert("w_out".into(), p.w_out.clone().into_dyn());
    t.insert("b_out".into(), p.b_out.clone().into_dyn());
    t.insert("embed".into(), p.embed.clone().into_dyn());
    let gates = [&p.lstm.input_gate, &p.lstm.forget_gate, &p.lstm.output_gate, &p.lstm.candidate];
    for (name, g) in GATES.iter().zip(gates) {
        t.insert(format!("lstm.{name}.w_input"), g.w_input.clone().into_dyn());
        t.insert(format!("lstm.{name}.w_hidden"), g.w_hidden.clone().into_dyn());
        t.insert(format!("lstm.{name}.bias"), g.bias.clone().into_dyn());
    }
    t
}

pub fn attention_from_tensors(mut t: BTreeMap<String, ArrayD<f64>>) -> Result<AttentionParams> {
    let mut gate = |name: &str| -> Result<GateParams> {
        Ok(GateParams {
            w_input: take_matrix(&mut t, &format!("lstm.{name}.w_input"))?,
            w_hidden: take_matrix(&mut t, &format!("lstm.{name}.w_hidden"))?,
            bias: take_vector(&mut t, &format!("lstm.{name}.bias"))?,
        })
    };
    let lstm = LstmParams {
        input_gate: gate(GATES[0])?,
        forget_gate: gate(GATES[1])?,
        output_gate: gate(GATES[2])?,
        candidate: gate(GATES[3])?,
    };
    let params = AttentionParams {
        w_enc: take_matrix(&mut t, "w_enc")?,
        w_dec: take_matrix(&mut t, "w_dec")?,
        v_att: take_vector(&mut t, "v_att")?,
        w_out: take_matrix(&mut t, "w_out")?,
        b_out: take_vector(&mut t, "b_out")?,
        embed: take_matrix(&mut t, "embed")?,
        lstm,
    };
    params.validate()?;
    Ok(params)
}

pub fn emission_layer_to_tensors(p: &EmissionLayerParams) -> BTreeMap<String, ArrayD<f64>> {
    let mut t = BTreeMap::new();
    t.insert("emit.weight".into(), p.weight.clone().into_dyn());
    t.insert("emit.bias".into(), p.bias.clone().into_dyn());
    t
}

pub fn emission_layer_from_tensors(mut t: BTreeMap<String, ArrayD<f64>>) -> Result<EmissionLayerParams> {
    EmissionLayerParams::new(take_matrix(&mut t, "emit.weight")?, take_vector(&mut t, "emit.bias")?)
}

pub fn read_tensors(path: &FsPath) -> Result<BTreeMap<String, ArrayD<f64>>> {
    parse_tensors(&read_file(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- n-gram LM

pub fn write_ngram(lm: &NGramLm, alphabet: &Alphabet) -> Result<String> {
    use crate::lm::CharLm;
    if lm.n_letters() != alphabet.len() {
        return Err(Error::shape("LM vocabulary", alphabet.len(), lm.n_letters()));
    }
    let token = |id: usize| -> String {
        if id == lm.start_id() {
            LM_START.to_string()
        } else if id == lm.end_id() {
            LM_END.to_string()
        } else {
            alphabet.token(id).expect("letter id")
        }
    };
    let letters: Vec<String> = (0..alphabet.len()).map(|i| alphabet.token(i).unwrap()).collect();
    let entries: usize = lm.counts().values().map(|r| r.iter().filter(|&&c| c > 0).count()).sum();
    let mut out = format!(
        "{NGRAM_MAGIC}\norder {}\nk {}\nalphabet {}\nentries {entries}\n",
        lm.order(),
        lm.k(),
        letters.join(" ")
    );
    for (ctx, row) in lm.counts() {
        for (sym, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut toks: Vec<String> = ctx.iter().map(|&i| token(i)).collect();
            toks.push(token(sym));
            writeln!(out, "{c} {}", toks.join(" ")).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_ngram(text: &str, origin: &str) -> Result<(Alphabet, NGramLm)> {
    let mut lines = Lines::new(text, origin);
    lines.magic(NGRAM_MAGIC)?;
    let order: usize = lines.keyed_one("order")?;
    let k: f64 = lines.keyed_one("k")?;
    let (n, letters) = lines.keyed("alphabet")?;
    let mut header: Vec<&str> = letters.clone();
    header.push(crate::alphabet::BLANK_TOKEN);
    let alphabet = Alphabet::from_header_tokens(&header).map_err(|e| lines.err(n, e.to_string()))?;
    let entries: usize = lines.keyed_one("entries")?;
    let n_letters = alphabet.len();
    let id = |tok: &str| -> Option<usize> {
        match tok {
            LM_START => Some(n_letters + 1),
            LM_END => Some(n_letters),
            t => alphabet.id_of_token(t).filter(|&i| i < n_letters),
        }
    };
    let mut counts: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
    for _ in 0..entries {
        let (n, line) = lines.expect_line("count entry")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != order + 1 {
            return Err(lines.err(n, format!("count entries need {} fields", order + 1)));
        }
        let c: u64 = tokens[0]
            .parse()
            .map_err(|_| lines.err(n, format!("bad count {:?}", tokens[0])))?;
        let ids = tokens[1..]
            .iter()
            .map(|t| id(t).ok_or_else(|| lines.err(n, format!("unknown token {t:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let (sym, ctx) = ids.split_last().unwrap();
        if *sym == n_letters + 1 {
            return Err(lines.err(n, "start marker cannot be predicted"));
        }
        counts.entry(ctx.to_vec()).or_insert_with(|| vec![0; n_letters + 1])[*sym] += c;
    }
    lines.finish()?;
    let lm = NGramLm::from_counts(order, k, n_letters, counts)?;
    Ok((alphabet, lm))
}

pub fn read_ngram(path: &FsPath) -> Result<(Alphabet, NGramLm)> {
    parse_ngram(&read_file(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- transcripts

/// One line of a transcript file: `id<TAB>text[<TAB>fps]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub id: String,
    pub text: String,
    pub fps: Option<f64>,
}

pub fn write_transcripts(entries: &[TranscriptEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        match e.fps {
            Some(fps) => writeln!(out, "{}\t{}\t{}", e.id, e.text, fps).unwrap(),
            None => writeln!(out, "{}\t{}", e.id, e.text).unwrap(),
        }
    }
    out
}

pub fn parse_transcripts(text: &str, origin: &str) -> Result<Vec<TranscriptEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, text, fps) = match fields.as_slice() {
            [id, text] => (*id, *text, None),
            [id, text, fps] => (
                *id,
                *text,
                Some(fps.trim().parse::<f64>().map_err(|_| err(format!("bad fps {fps:?}")))?),
            ),
            _ => return Err(err("expected id<TAB>text[<TAB>fps]".into())),
        };
        if id.is_empty() {
            return Err(err("empty id".into()));
        }
        if out.iter().any(|e: &TranscriptEntry| e.id == id) {
            return Err(err(format!("duplicate id {id:?}")));
        }
        out.push(TranscriptEntry {
            id: id.to_string(),
            text: text.to_string(),
            fps,
        });
    }
    Ok(out)
}

pub fn read_transcripts(path: &FsPath) -> Result<Vec<TranscriptEntry>> {
    parse_transcripts(&read_file(path)?, &path.display().to_string())
}

/// Encodes every entry's text.
pub fn encode_entries(entries: &[TranscriptEntry], alphabet: &Alphabet) -> Result<Vec<Transcript>> {
    entries
        .iter()
        .map(|e| {
            alphabet
                .encode(&e.text)
                .map_err(|err| Error::InvalidParameter(format!("record {}: {err}", e.id)))
        })
        .collect()
}
