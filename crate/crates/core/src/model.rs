//! Every learnable piece in one place, plus the checkpoint container.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParameterStore, Tensor};
use crate::builtins::BuiltinTable;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::guesser::{Guesser, Vocab};
use crate::nn::{Encoder, Linear, Mlp};

const MAGIC: &[u8] = b"NICKPT v1\n";

/// Scorers for the three abstract-semantics objectives.
#[derive(Debug, Clone)]
pub struct SemanticsHeads {
    /// Return-variable scorer over `[return ‖ candidate name]`.
    pub alpha: Mlp,
    /// Argument-discrimination scorer over a return vector.
    pub beta: Linear,
    /// Data-flow scorer over `[source ‖ target]`.
    pub phi: Mlp,
}

/// The four-step misuse heads. `kappa`, `eta` and `psi` each read the
/// sequence of call returns with a single attention layer.
#[derive(Debug, Clone)]
pub struct MisuseHeads {
    pub cls: ParamId,
    pub kappa: Encoder,
    pub kappa_out: Linear,
    pub eta: Encoder,
    pub eta_out: Linear,
    pub psi: Encoder,
    pub psi_out: Linear,
    pub tau: Linear,
    pub pi: Linear,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: Config,
    pub vocab: Vocab,
    pub builtins: BuiltinTable,
    pub store: ParameterStore,
    pub guesser: Guesser,
    pub executor: Executor,
    pub builtin_emb: ParamId,
    pub unpack_emb: ParamId,
    pub semantics: SemanticsHeads,
    pub misuse: MisuseHeads,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: Config,
    vocab_hash: String,
    builtins: Vec<String>,
    tensors: Vec<TensorEntry>,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: &Config, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let builtins = BuiltinTable::new();
        let mut store = ParameterStore::new();
        let guesser = Guesser::new(&mut store, h, config.encoder_layers, config.encoder_heads, vocab.size(), config.max_tokens, &mut rng);
        let executor = Executor::new(&mut store, h, config.executor_layers, config.executor_heads, config.max_args, &mut rng);
        let builtin_emb = store.add_normal("builtin_emb", builtins.len(), h, 1.0, &mut rng);
        let unpack_emb = store.add_normal("unpack_emb", config.max_args, h, 1.0, &mut rng);
        let semantics = SemanticsHeads {
            alpha: Mlp::new(&mut store, "alpha", 2 * h, h, 1, &mut rng),
            beta: Linear::new(&mut store, "beta", h, 1, &mut rng),
            phi: Mlp::new(&mut store, "phi", 2 * h, h, 1, &mut rng),
        };
        let heads = config.executor_heads;
        let misuse = MisuseHeads {
            cls: store.add_normal("misuse.cls", 1, h, 1.0, &mut rng),
            kappa: Encoder::new(&mut store, "misuse.kappa", h, 1, heads, &mut rng),
            kappa_out: Linear::new(&mut store, "misuse.kappa_out", h, 1, &mut rng),
            eta: Encoder::new(&mut store, "misuse.eta", h, 1, heads, &mut rng),
            eta_out: Linear::new(&mut store, "misuse.eta_out", h, 1, &mut rng),
            psi: Encoder::new(&mut store, "misuse.psi", h, 1, heads, &mut rng),
            psi_out: Linear::new(&mut store, "misuse.psi_out", h, 1, &mut rng),
            tau: Linear::new(&mut store, "misuse.tau", h, 1, &mut rng),
            pi: Linear::new(&mut store, "misuse.pi", h, 1, &mut rng),
        };
        Model { config: config.clone(), vocab, builtins, store, guesser, executor, builtin_emb, unpack_emb, semantics, misuse }
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn vocab_path(ckpt: &Path) -> PathBuf {
        let mut p = ckpt.as_os_str().to_owned();
        p.push(".vocab");
        PathBuf::from(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        for id in self.store.ids() {
            let t = self.store.value(id);
            tensors.push(TensorEntry { name: self.store.name(id).to_string(), rows: t.rows, cols: t.cols, offset: data.len() / 8 });
            data.extend(t.data.iter().flat_map(|x| x.to_le_bytes()));
        }
        let header = Header {
            config: self.config.clone(),
            vocab_hash: self.vocab.hash(),
            builtins: self.builtins.names().to_vec(),
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = MAGIC.to_vec();
        out.extend((header.len() as u64).to_le_bytes());
        out.extend(header);
        out.extend(data);
        out
    }

    pub fn from_bytes(bytes: &[u8], vocab: Vocab) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing NICKPT v1 magic".into()))?;
        if rest.len() < 8 {
            return Err(bad("truncated header length".into()));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&rest[..len]).map_err(|e| bad(e.to_string()))?;
        let data = &rest[len..];
        if header.vocab_hash != vocab.hash() {
            return Err(bad("vocabulary does not match the checkpoint".into()));
        }
        if header.builtins != BuiltinTable::new().names() {
            return Err(bad("builtin table does not match".into()));
        }
        header.config.validate()?;
        let mut model = Model::new(&header.config, vocab);
        if header.tensors.len() != model.store.len() {
            return Err(bad(format!("expected {} tensors, found {}", model.store.len(), header.tensors.len())));
        }
        for entry in &header.tensors {
            let id = model.store.id(&entry.name).ok_or_else(|| bad(format!("unknown tensor {}", entry.name)))?;
            let t = model.store.value(id);
            if (t.rows, t.cols) != (entry.rows, entry.cols) {
                return Err(bad(format!("shape mismatch for {}", entry.name)));
            }
            let n = entry.rows * entry.cols;
            let raw = data
                .get(entry.offset * 8..(entry.offset + n) * 8)
                .ok_or_else(|| bad(format!("truncated data for {}", entry.name)))?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            *model.store.value_mut(id) = Tensor::from_vec(entry.rows, entry.cols, values);
        }
        Ok(model)
    }

    /// Writes the checkpoint to `path` and the vocabulary next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        self.vocab.save(&Self::vocab_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let vocab = Vocab::load(&Self::vocab_path(path))?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        Config { hidden: 8, encoder_heads: 2, executor_heads: 2, encoder_layers: 1, executor_layers: 1, ..Config::default() }
    }

    #[test]
    fn checkpoint_round_trip() {
        let vocab = Vocab::new(vec!["x".into(), "celsius".into()], 4);
        let mut m = Model::new(&small(), vocab.clone());
        m.store.value_mut(m.builtin_emb).data[3] = 0.25;
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes, vocab).unwrap();
        assert_eq!(back.store.value_bytes(), m.store.value_bytes());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let vocab = Vocab::new(vec!["x".into()], 4);
        let m = Model::new(&small(), vocab.clone());
        let bytes = m.to_bytes();
        assert!(Model::from_bytes(&bytes[..20], vocab.clone()).is_err());
        assert!(Model::from_bytes(b"garbage", vocab).is_err());
        let other = Vocab::new(vec!["y".into()], 4);
        assert!(Model::from_bytes(&bytes, other).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let vocab = Vocab::new(vec![], 4);
        let a = Model::new(&small(), vocab.clone());
        let b = Model::new(&small(), vocab);
        assert_eq!(a.store.value_bytes(), b.store.value_bytes());
    }
}
