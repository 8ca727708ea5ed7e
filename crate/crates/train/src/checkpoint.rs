//! Binary checkpoints. All integers and floats are little endian.
//!
//! ```text
//! magic "ECNCKPT\n" | version u32
//! plan manifest (u32 length + TOML) | training config (u32 length + TOML)
//! normalizer 6×f64 | epoch u64 | initial loss f64 (NaN when unset)
//! rng seed u64 | rng epoch u64
//! entry count u32, then per entry:
//!     name (u16 length + UTF-8) | kind u8 | 4×u32 shape | f32 values
//! velocity count u32, then per velocity:
//!     name (u16 length + UTF-8) | 4×u32 shape | f32 values
//! trailer "END\n"
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ecn_core::{Ecn, NetworkPlan, ParamKind, Shape, Tensor};

use crate::data::Normalizer;
use crate::error::{Result, TrainError};
use crate::optim::OptimState;
use crate::trainer::{TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"ECNCKPT\n";
pub const VERSION: u32 = 1;
const TRAILER: &[u8; 4] = b"END\n";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<f32>,
}

/// Where the run's random streams resume; see [`crate::rng`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub epoch: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub plan: NetworkPlan,
    pub train: TrainConfig,
    pub normalizer: Normalizer,
    pub epoch: usize,
    pub initial_loss: Option<f64>,
    pub rng: RngState,
    /// Every parameter and running statistic, in store order.
    pub tensors: Vec<NamedTensor>,
    pub velocities: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn capture(t: &Trainer) -> Self {
        let store = &t.model.store;
        Self {
            plan: t.model.plan.clone(),
            train: t.config.clone(),
            normalizer: t.normalizer,
            epoch: t.epoch,
            initial_loss: t.initial_loss,
            rng: RngState {
                seed: t.config.seed,
                epoch: t.epoch as u64,
            },
            tensors: store
                .iter()
                .map(|(_, p)| NamedTensor {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.clone(),
                })
                .collect(),
            velocities: store
                .iter()
                .zip(&t.optim.velocities)
                .filter_map(|((_, p), v)| v.as_ref().map(|v| (p.name.clone(), v.clone())))
                .collect(),
        }
    }

    /// Rebuilds the trainer, checking every stored tensor against the plan.
    pub fn restore(self) -> Result<Trainer> {
        if self.rng.seed != self.train.seed || self.rng.epoch != self.epoch as u64 {
            return Err(TrainError::Checkpoint(
                "random state does not match the recorded run".into(),
            ));
        }
        let mut model = Ecn::<f32>::new(self.plan, 0)?;
        let mut stored: HashMap<String, NamedTensor> = self.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut velocities: HashMap<String, Tensor<f32>> = self.velocities.into_iter().collect();
        let mut optim = OptimState::new(&model.store);
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let p = model.store.get(id);
            let name = p.name.clone();
            let t = stored
                .remove(&name)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing tensor {name}")))?;
            if t.kind != p.kind {
                return Err(TrainError::Checkpoint(format!(
                    "{name} stored as {:?}, plan says {:?}",
                    t.kind, p.kind
                )));
            }
            model
                .store
                .set_value(id, t.value)
                .map_err(|e| TrainError::Checkpoint(format!("{name}: {e}")))?;
            if let Some(slot) = optim.velocities[id.index()].as_mut() {
                let v = velocities
                    .remove(&name)
                    .ok_or_else(|| TrainError::Checkpoint(format!("missing velocity of {name}")))?;
                v.expect_shape(slot.shape())
                    .map_err(|e| TrainError::Checkpoint(format!("velocity of {name}: {e}")))?;
                *slot = v;
            }
        }
        if let Some(name) = stored.keys().chain(velocities.keys()).min() {
            return Err(TrainError::Checkpoint(format!("unexpected entry {name}")));
        }
        let mut t = Trainer::new(model, self.train, self.normalizer)?;
        t.optim = optim;
        t.epoch = self.epoch;
        t.initial_loss = self.initial_loss;
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        w.extend(MAGIC);
        w.extend(VERSION.to_le_bytes());
        put_text(&mut w, &self.plan.to_manifest()?)?;
        put_text(
            &mut w,
            &toml::to_string(&self.train).map_err(|e| TrainError::Checkpoint(e.to_string()))?,
        )?;
        for v in self.normalizer.mean.iter().chain(&self.normalizer.std) {
            w.extend(v.to_le_bytes());
        }
        w.extend((self.epoch as u64).to_le_bytes());
        w.extend(self.initial_loss.unwrap_or(f64::NAN).to_le_bytes());
        w.extend(self.rng.seed.to_le_bytes());
        w.extend(self.rng.epoch.to_le_bytes());
        w.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_name(&mut w, &t.name)?;
            w.push(kind_code(t.kind));
            put_tensor(&mut w, &t.value);
        }
        w.extend((self.velocities.len() as u32).to_le_bytes());
        for (name, v) in &self.velocities {
            put_name(&mut w, name)?;
            put_tensor(&mut w, v);
        }
        w.extend(TRAILER);
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(TrainError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(TrainError::CheckpointVersion {
                expected: VERSION,
                found: version,
            });
        }
        let plan = NetworkPlan::from_manifest(&r.text("plan manifest")?)
            .map_err(|e| TrainError::Checkpoint(format!("plan manifest: {e}")))?;
        let train: TrainConfig = toml::from_str(&r.text("training config")?)
            .map_err(|e| TrainError::Checkpoint(format!("training config: {e}")))?;
        let mut norm = [0.0; 6];
        for v in &mut norm {
            *v = r.f64("normalizer")?;
        }
        let epoch = r.u64("epoch")? as usize;
        let initial = r.f64("initial loss")?;
        let rng = RngState {
            seed: r.u64("rng seed")?,
            epoch: r.u64("rng epoch")?,
        };
        let n = r.u32("entry count")?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let name = r.name()?;
            let kind = kind_from(r.take(1, "kind")?[0])?;
            let value = r.tensor(&name)?;
            tensors.push(NamedTensor { name, kind, value });
        }
        let n = r.u32("velocity count")?;
        let mut velocities = Vec::new();
        for _ in 0..n {
            let name = r.name()?;
            let v = r.tensor(&name)?;
            velocities.push((name, v));
        }
        if r.take(4, "trailer")? != TRAILER || r.pos != bytes.len() {
            return Err(TrainError::Checkpoint("bad trailer or trailing bytes".into()));
        }
        Ok(Self {
            plan,
            train,
            normalizer: Normalizer {
                mean: [norm[0], norm[1], norm[2]],
                std: [norm[3], norm[4], norm[5]],
            },
            epoch,
            initial_loss: (!initial.is_nan()).then_some(initial),
            rng,
            tensors,
            velocities,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| TrainError::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| TrainError::file(path, e))?)
    }
}

fn kind_code(k: ParamKind) -> u8 {
    match k {
        ParamKind::Weight => 0,
        ParamKind::NoDecay => 1,
        ParamKind::Buffer => 2,
    }
}

fn kind_from(b: u8) -> Result<ParamKind> {
    match b {
        0 => Ok(ParamKind::Weight),
        1 => Ok(ParamKind::NoDecay),
        2 => Ok(ParamKind::Buffer),
        _ => Err(TrainError::Checkpoint(format!("unknown entry kind {b}"))),
    }
}

fn put_text(w: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| TrainError::Checkpoint("text section too long".into()))?;
    w.extend(len.to_le_bytes());
    w.extend(s.as_bytes());
    Ok(())
}

fn put_name(w: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| TrainError::Checkpoint(format!("name too long: {s}")))?;
    w.extend(len.to_le_bytes());
    w.extend(s.as_bytes());
    Ok(())
}

fn put_tensor(w: &mut Vec<u8>, t: &Tensor<f32>) {
    for d in t.shape().dims() {
        w.extend((d as u32).to_le_bytes());
    }
    for v in t.data() {
        w.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TrainError::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn text(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| TrainError::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn name(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.array("name length")?) as usize;
        String::from_utf8(self.take(n, "name")?.to_vec())
            .map_err(|_| TrainError::Checkpoint("name is not UTF-8".into()))
    }

    fn tensor(&mut self, name: &str) -> Result<Tensor<f32>> {
        let mut d = [0usize; 4];
        for x in &mut d {
            *x = self.u32("shape")? as usize;
        }
        let shape = Shape::new(d[0], d[1], d[2], d[3]);
        let len = shape.len();
        let raw = self.take(len.checked_mul(4).unwrap_or(usize::MAX), name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        Tensor::new(shape, data).map_err(|e| TrainError::Checkpoint(format!("{name}: {e}")))
    }
}
