//! Self-describing binary checkpoints. The byte layout is documented in
//! `docs/checkpoint-format.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::config::Hyper;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams, ParamSet};
use crate::tensor::{Real, Tensor};
use crate::text::{CharVocabulary, EmbeddingMatrix, Vocabulary};

pub const MAGIC: &[u8; 8] = b"MPCMCKPT";
pub const FORMAT_VERSION: u32 = 1;

const KIND_F64: u8 = 0;
const KIND_STRINGS: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: u64,
    pub best_dev_f1: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub hyper: Hyper,
    pub optimizer: Option<OptimizerState>,
    pub progress: Progress,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    t: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    hyper: Hyper,
    progress: Progress,
    optimizer: Option<OptimizerHeader>,
}

enum Section {
    Array(Tensor),
    Strings(Vec<String>),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn array(&mut self, name: &str, t: &Tensor) {
        self.bytes(name.as_bytes());
        self.u8(KIND_F64);
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            #[allow(clippy::unnecessary_cast)]
            self.0.extend_from_slice(&(x as f64).to_le_bytes());
        }
    }
    fn strings(&mut self, name: &str, items: &[String]) {
        self.bytes(name.as_bytes());
        self.u8(KIND_STRINGS);
        self.u64(items.len() as u64);
        for s in items {
            self.bytes(s.as_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::parse(self.source, format!("at byte {}: {msg}", self.pos))
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("invalid UTF-8"))
    }
    fn section(&mut self) -> Result<(String, Section)> {
        let name = self.string()?;
        match self.u8()? {
            KIND_F64 => {
                let rank = self.u32()? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(self.u64()? as usize);
                }
                let len: usize = shape.iter().product();
                let raw = self.take(
                    len.checked_mul(8)
                        .ok_or_else(|| self.err("array too large"))?,
                )?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as Real)
                    .collect();
                let t = Tensor::new(shape, data).map_err(|e| self.err(e))?;
                Ok((name, Section::Array(t)))
            }
            KIND_STRINGS => {
                let n = self.u64()? as usize;
                let mut items = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    items.push(self.string()?);
                }
                Ok((name, Section::Strings(items)))
            }
            k => Err(self.err(format!("unknown section kind {k} for `{name}`"))),
        }
    }
}

impl Checkpoint {
    /// A checkpoint of a freshly initialised model.
    pub fn initial(model: Model, hyper: Hyper) -> Checkpoint {
        let optimizer = OptimizerState::with_settings(
            &model.params.trainable,
            hyper.learning_rate,
            hyper.beta1,
            hyper.beta2,
            hyper.eps,
        );
        Checkpoint {
            progress: Progress {
                seed: hyper.seed,
                ..Default::default()
            },
            model,
            hyper,
            optimizer: Some(optimizer),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.config.clone(),
            hyper: self.hyper.clone(),
            progress: self.progress.clone(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                t: o.t,
                learning_rate: o.learning_rate,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            }),
        };
        let text = toml::to_string(&header).expect("header serializes");
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u64(text.len() as u64);
        w.0.extend_from_slice(text.as_bytes());

        let params = &self.model.params.trainable;
        let opt_sections = self.optimizer.as_ref().map_or(0, |_| 2 * params.len());
        w.u32((3 + params.len() + opt_sections) as u32);
        w.strings("vocab.words", self.model.vocab.tokens());
        let chars: Vec<String> = self
            .model
            .chars
            .chars()
            .iter()
            .map(|c| c.to_string())
            .collect();
        w.strings("vocab.chars", &chars);
        w.array("embedding", &self.model.params.embeddings.matrix);
        for (name, t) in params.iter() {
            w.array(&format!("param/{name}"), t);
        }
        if let Some(o) = &self.optimizer {
            for (name, t) in o.m.iter() {
                w.array(&format!("adam.m/{name}"), t);
            }
            for (name, t) in o.v.iter() {
                w.array(&format!("adam.v/{name}"), t);
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8], source: &str) -> Result<Checkpoint> {
        let mut r = Reader {
            buf,
            pos: 0,
            source,
        };
        if r.take(8)? != MAGIC {
            return Err(Error::parse(source, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                source,
                format!("unsupported format version {version}"),
            ));
        }
        let hlen = r.u64()? as usize;
        let htext = std::str::from_utf8(r.take(hlen)?).map_err(|_| r.err("header is not UTF-8"))?;
        let header: Header =
            toml::from_str(htext).map_err(|e| Error::parse(source, format!("header: {e}")))?;

        let count = r.u32()?;
        let mut words = None;
        let mut chars = None;
        let mut embedding = None;
        let mut params = ParamSet::new();
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for _ in 0..count {
            match r.section()? {
                (n, Section::Strings(s)) if n == "vocab.words" => words = Some(s),
                (n, Section::Strings(s)) if n == "vocab.chars" => chars = Some(s),
                (n, Section::Array(t)) if n == "embedding" => embedding = Some(t),
                (n, Section::Array(t)) => {
                    if let Some(p) = n.strip_prefix("param/") {
                        params.insert(p, t);
                    } else if let Some(p) = n.strip_prefix("adam.m/") {
                        m.insert(p, t);
                    } else if let Some(p) = n.strip_prefix("adam.v/") {
                        v.insert(p, t);
                    } else {
                        return Err(Error::parse(source, format!("unexpected section `{n}`")));
                    }
                }
                (n, _) => return Err(Error::parse(source, format!("unexpected section `{n}`"))),
            }
        }
        if r.pos != buf.len() {
            return Err(r.err("trailing bytes"));
        }
        let missing = |what: &str| Error::parse(source, format!("missing section `{what}`"));
        let vocab = Vocabulary::from_index_list(words.ok_or_else(|| missing("vocab.words"))?)
            .ok_or_else(|| Error::parse(source, "malformed word vocabulary"))?;
        let char_list = chars.ok_or_else(|| missing("vocab.chars"))?;
        let mut cs = Vec::with_capacity(char_list.len());
        for s in &char_list {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => cs.push(c),
                _ => return Err(Error::parse(source, format!("bad character entry `{s}`"))),
            }
        }
        let chars = CharVocabulary::from_chars(cs)
            .ok_or_else(|| Error::parse(source, "duplicate characters"))?;
        let matrix = embedding.ok_or_else(|| missing("embedding"))?;
        let params = ModelParams {
            embeddings: EmbeddingMatrix {
                matrix,
                trainable: false,
            },
            trainable: params,
        };
        params
            .validate(&header.model, chars.len())
            .map_err(|e| Error::parse(source, e.to_string()))?;
        if params.embeddings.rows() != vocab.len() {
            return Err(Error::parse(
                source,
                "embedding rows do not match the vocabulary",
            ));
        }
        let optimizer = match header.optimizer {
            Some(o) => {
                let shapes_ok = |s: &ParamSet| {
                    s.len() == params.trainable.len()
                        && params
                            .trainable
                            .iter()
                            .all(|(k, t)| s.get(k).is_ok_and(|x| x.shape() == t.shape()))
                };
                if !shapes_ok(&m) || !shapes_ok(&v) {
                    return Err(Error::parse(
                        source,
                        "optimizer moments do not match the parameters",
                    ));
                }
                Some(OptimizerState {
                    m,
                    v,
                    t: o.t,
                    learning_rate: o.learning_rate,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                })
            }
            None => None,
        };
        Ok(Checkpoint {
            model: Model {
                config: header.model,
                params,
                vocab,
                chars,
            },
            hyper: header.hyper,
            optimizer,
            progress: header.progress,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, &path.display().to_string())
    }
}
