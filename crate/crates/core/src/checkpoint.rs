//! Versioned binary checkpoint.
//!
//! ```text
//! SOCSTOCH-CKPT v1
//! config <bytes>
//! <key=value lines>
//! epoch <n>
//! rng <seed hex> <stream> <word pos>
//! arrays <count>
//! array <name> <ndims> <dims...>
//! <numel little-endian f64>
//! ...
//! end
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::ParamStore;

pub const MAGIC: &str = "SOCSTOCH-CKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(config: &RunConfig, model: &Model, epoch: usize, rng: &ChaCha8Rng) -> Self {
        Self {
            config: *config,
            epoch,
            rng: rng.clone(),
            arrays: model
                .params
                .iter()
                .map(|(n, t)| {
                    let t = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("parameter shape");
                    (n.to_string(), t)
                })
                .collect(),
        }
    }

    /// Copies every array into `params`; names and shapes must agree exactly.
    pub fn apply(&self, params: &mut ParamStore) -> Result<()> {
        for (name, t) in &self.arrays {
            let target = params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("array {name} has no matching parameter")))?;
            if target.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "array {name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape(),
                    target.shape()
                )));
            }
            params.set(name, t.data())?;
        }
        if let Some((missing, _)) = params.iter().find(|(n, _)| !self.arrays.iter().any(|(a, _)| a == n)) {
            return Err(Error::Checkpoint(format!("array {missing} missing from checkpoint")));
        }
        Ok(())
    }

    /// Rebuilds the model described by the embedded config.
    pub fn model(&self) -> Result<Model> {
        self.model_with(&self.config)
    }

    /// Builds a model from `config` and loads the stored arrays into it.
    pub fn model_with(&self, config: &RunConfig) -> Result<Model> {
        let mut model = Model::new(config.model, config.train.seed);
        self.apply(&mut model.params)?;
        Ok(model)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let cfg = self.config.to_text();
        writeln!(w, "{MAGIC} v{VERSION}")?;
        writeln!(w, "config {}", cfg.len())?;
        w.write_all(cfg.as_bytes())?;
        writeln!(w, "epoch {}", self.epoch)?;
        let seed: String = self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        writeln!(w, "rng {seed} {} {}", self.rng.get_stream(), self.rng.get_word_pos())?;
        writeln!(w, "arrays {}", self.arrays.len())?;
        for (name, t) in &self.arrays {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(w, "array {name} {} {}", t.shape().len(), dims.join(" "))?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            writeln!(w)?;
        }
        writeln!(w, "end")
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let header = line(&mut r)?;
        if header != format!("{MAGIC} v{VERSION}") {
            return Err(bad(format!("unrecognized header {header:?}")));
        }
        let cfg_len: usize = field(&line(&mut r)?, "config")?;
        let mut cfg = vec![0u8; cfg_len];
        r.read_exact(&mut cfg).map_err(|_| bad("truncated config".into()))?;
        let cfg = String::from_utf8(cfg).map_err(|_| bad("config is not UTF-8".into()))?;
        let config = RunConfig::from_text(&cfg, "checkpoint config")?;
        let epoch = field(&line(&mut r)?, "epoch")?;
        let rng = parse_rng(&line(&mut r)?)?;
        let count: usize = field(&line(&mut r)?, "arrays")?;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let head = line(&mut r)?;
            let parts: Vec<&str> = head.split(' ').collect();
            if parts.len() < 3 || parts[0] != "array" {
                return Err(bad(format!("expected array record, got {head:?}")));
            }
            let name = parts[1].to_string();
            let ndims: usize = parts[2].parse().map_err(|_| bad(format!("array {name}: bad rank")))?;
            if parts.len() != 3 + ndims {
                return Err(bad(format!("array {name}: expected {ndims} dims")));
            }
            let shape = parts[3..]
                .iter()
                .map(|d| d.parse().map_err(|_| bad(format!("array {name}: bad dim {d:?}"))))
                .collect::<Result<Vec<usize>>>()?;
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 8];
            r.read_exact(&mut bytes).map_err(|_| bad(format!("array {name}: truncated data")))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let nl = line(&mut r)?;
            if !nl.is_empty() {
                return Err(bad(format!("array {name}: trailing bytes")));
            }
            arrays.push((name, Tensor::new(shape, data)?));
        }
        if line(&mut r)? != "end" {
            return Err(bad("missing end marker".into()));
        }
        Ok(Self {
            config,
            epoch,
            rng,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn bad(msg: String) -> Error {
    Error::Checkpoint(msg)
}

fn line(r: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    let n = r.read_line(&mut s).map_err(|_| bad("unreadable record".into()))?;
    if n == 0 {
        return Err(bad("unexpected end of file".into()));
    }
    Ok(s.trim_end_matches('\n').to_string())
}

fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(format!("expected {key} record, got {line:?}")))
}

fn parse_rng(line: &str) -> Result<ChaCha8Rng> {
    let parts: Vec<&str> = line.split(' ').collect();
    let err = || bad(format!("malformed rng record {line:?}"));
    if parts.len() != 4 || parts[0] != "rng" || parts[1].len() != 64 {
        return Err(err());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&parts[1][2 * i..2 * i + 2], 16).map_err(|_| err())?;
    }
    let stream: u64 = parts[2].parse().map_err(|_| err())?;
    let word_pos: u128 = parts[3].parse().map_err(|_| err())?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}
