//! Flat `key = value` configuration. `#` starts a comment; unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::beam::FusionConfig;
use crate::tube::LinkerConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    /// Best-path CTC decoding.
    Greedy,
    /// CTC prefix beam search, optionally LM-fused.
    Ctc,
    /// Attention decoder beam search over encoder states.
    Attention,
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecoderKind::Greedy),
            "ctc" => Ok(DecoderKind::Ctc),
            "attn" | "attention" => Ok(DecoderKind::Attention),
            other => Err(Error::InvalidParameter(format!(
                "unknown decoder {other:?} (expected greedy, ctc or attn)"
            ))),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Greedy => "greedy",
            DecoderKind::Ctc => "ctc",
            DecoderKind::Attention => "attn",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub decoder: DecoderKind,
    pub beam: usize,
    pub lm_weight: f64,
    pub ins_penalty: f64,
    pub lambda: f64,
    pub nms_iou: f64,
    pub max_boxes: usize,
    pub lm: Option<PathBuf>,
    pub attn_params: Option<PathBuf>,
    pub fps_buckets: Vec<f64>,
    pub top_confusions: usize,
    /// Worker threads; 0 uses all cores. Output does not depend on it.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            decoder: DecoderKind::Ctc,
            beam: 16,
            lm_weight: 0.0,
            ins_penalty: 0.0,
            lambda: 0.3,
            nms_iou: 0.5,
            max_boxes: 20,
            lm: None,
            attn_params: None,
            fps_buckets: Vec::new(),
            top_confusions: 10,
            threads: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "decoder",
    "beam",
    "lm_weight",
    "ins_penalty",
    "lambda",
    "nms_iou",
    "max_boxes",
    "lm",
    "attn_params",
    "fps_buckets",
    "top_confusions",
    "threads",
];

/// Parses `key = value` lines into a map, keeping the last value per key.
pub fn parse_key_values(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn parse_edges(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad bucket edge {t:?}")))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Applies one setting. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() || v == "-" {
                return None;
            }
            let p = PathBuf::from(v);
            Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            })
        };
        match key {
            "decoder" => self.decoder = value.parse()?,
            "beam" => self.beam = parse_value(key, value)?,
            "lm_weight" => self.lm_weight = parse_value(key, value)?,
            "ins_penalty" => self.ins_penalty = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "nms_iou" => self.nms_iou = parse_value(key, value)?,
            "max_boxes" => self.max_boxes = parse_value(key, value)?,
            "lm" => self.lm = path(value),
            "attn_params" => self.attn_params = path(value),
            "fps_buckets" => self.fps_buckets = parse_edges(value)?,
            "top_confusions" => self.top_confusions = parse_value(key, value)?,
            "threads" => self.threads = parse_value(key, value)?,
            other => {
                return Err(Error::InvalidParameter(format!("unknown config key {other:?}")))
            }
        }
        Ok(())
    }

    /// Defaults overlaid with the file's settings. Not validated, so that
    /// later overrides can still fix a value; call [`Self::validate`].
    pub fn from_text(text: &str, origin: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in parse_key_values(text, origin)? {
            cfg.set(&k, &v, base)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = super::formats::read_file(path)?;
        Self::from_text(&text, &path.display().to_string(), path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion().validate()?;
        self.linker()?;
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::InvalidParameter(format!("nms_iou must lie in (0, 1], got {}", self.nms_iou)));
        }
        if self.max_boxes == 0 {
            return Err(Error::InvalidParameter("max_boxes must be positive".into()));
        }
        if self.fps_buckets.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("fps_buckets must be strictly increasing".into()));
        }
        if self.decoder == DecoderKind::Attention && self.attn_params.is_none() {
            return Err(Error::InvalidParameter("decoder attn needs attn_params".into()));
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            beam_size: self.beam,
            lm_weight: self.lm_weight,
            insertion_penalty: self.ins_penalty,
        }
    }

    pub fn linker(&self) -> Result<LinkerConfig> {
        LinkerConfig::new(self.lambda)
    }

    /// Serializes every key, so the output fully determines the run.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let edges: Vec<String> = self.fps_buckets.iter().map(|e| e.to_string()).collect();
        format!(
            "decoder = {}\nbeam = {}\nlm_weight = {}\nins_penalty = {}\nlambda = {}\nnms_iou = {}\nmax_boxes = {}\nlm = {}\nattn_params = {}\nfps_buckets = {}\ntop_confusions = {}\nthreads = {}\n",
            self.decoder,
            self.beam,
            self.lm_weight,
            self.ins_penalty,
            self.lambda,
            self.nms_iou,
            self.max_boxes,
            path(&self.lm),
            path(&self.attn_params),
            edges.join(","),
            self.top_confusions,
            self.threads,
        )
    }
}
