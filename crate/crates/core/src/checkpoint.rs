//! Versioned binary checkpoints.
//!
//! Contains every parameter tensor (including batch-norm running statistics),
//! the Adam moment buffers and step counters, and the positions of all RNG
//! streams. The byte layout is documented in `docs/checkpoint_format.md`;
//! save/load round-trips are bit-exact. Tools refuse checkpoints whose joint
//! list does not match the schema they were given.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{resolve_layout, Discriminator, LifterModel, ModelConfig, Representation};
use crate::numerics::{Matrix, ParamStore};
use crate::skeleton::KeypointSchema;

pub const MAGIC: &[u8; 8] = b"POSELIFT";
pub const FORMAT_VERSION: u32 = 1;

/// Position of one named ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStateSnapshot {
    pub name: String,
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStateSnapshot {
    pub fn of(name: &str, rng: &ChaCha8Rng) -> Self {
        RngStateSnapshot {
            name: name.to_string(),
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub representation: Representation,
    pub seed: u64,
    pub epoch: u32,
    pub config_hash: [u8; 32],
    pub joints: Vec<String>,
    pub model_config: ModelConfig,
    /// Sub-network stores in layout order, then the discriminator store.
    pub stores: Vec<(String, ParamStore)>,
    pub rng_states: Vec<RngStateSnapshot>,
}

pub const DISCRIMINATOR_STORE: &str = "discriminator";

impl Checkpoint {
    pub fn capture(
        model: &LifterModel,
        disc: &Discriminator,
        seed: u64,
        epoch: u32,
        config_hash: [u8; 32],
        rngs: &[(&str, &ChaCha8Rng)],
    ) -> Self {
        let mut stores: Vec<(String, ParamStore)> = model
            .subnets()
            .iter()
            .map(|s| (s.def.name.clone(), s.params.clone()))
            .collect();
        stores.push((DISCRIMINATOR_STORE.to_string(), disc.params.clone()));
        Checkpoint {
            representation: model.representation(),
            seed,
            epoch,
            config_hash,
            joints: model.schema().joints().to_vec(),
            model_config: model.config().clone(),
            stores,
            rng_states: rngs.iter().map(|(n, r)| RngStateSnapshot::of(n, r)).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u8(self.representation.code())?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u32::<LittleEndian>(self.epoch)?;
        w.write_all(&self.config_hash)?;
        w.write_u16::<LittleEndian>(self.joints.len() as u16)?;
        for j in &self.joints {
            write_string(&mut w, j)?;
        }
        let config_json = serde_json::to_vec(&self.model_config)?;
        w.write_u32::<LittleEndian>(config_json.len() as u32)?;
        w.write_all(&config_json)?;
        w.write_u32::<LittleEndian>(self.stores.len() as u32)?;
        for (name, store) in &self.stores {
            write_string(&mut w, name)?;
            w.write_u64::<LittleEndian>(store.step())?;
            w.write_u32::<LittleEndian>(store.len() as u32)?;
            for (pname, entry) in store.iter() {
                write_string(&mut w, pname)?;
                w.write_u8(entry.trainable as u8)?;
                w.write_u32::<LittleEndian>(entry.value.rows() as u32)?;
                w.write_u32::<LittleEndian>(entry.value.cols() as u32)?;
                for m in [&entry.value, &entry.m, &entry.v] {
                    for &v in m.as_slice() {
                        w.write_f64::<LittleEndian>(v)?;
                    }
                }
            }
        }
        w.write_u32::<LittleEndian>(self.rng_states.len() as u32)?;
        for rng in &self.rng_states {
            write_string(&mut w, &rng.name)?;
            w.write_all(&rng.seed)?;
            w.write_u64::<LittleEndian>(rng.stream)?;
            w.write_u128::<LittleEndian>(rng.word_pos)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let representation = Representation::from_code(r.read_u8()?)?;
        let seed = r.read_u64::<LittleEndian>()?;
        let epoch = r.read_u32::<LittleEndian>()?;
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let n_joints = r.read_u16::<LittleEndian>()?;
        let joints = (0..n_joints)
            .map(|_| read_string(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let config_len = r.read_u32::<LittleEndian>()? as usize;
        let mut config_bytes = vec![0u8; config_len];
        r.read_exact(&mut config_bytes)?;
        let model_config: ModelConfig = serde_json::from_slice(&config_bytes)?;
        let n_stores = r.read_u32::<LittleEndian>()?;
        let mut stores = Vec::with_capacity(n_stores as usize);
        for _ in 0..n_stores {
            let name = read_string(&mut r)?;
            let step = r.read_u64::<LittleEndian>()?;
            let n_entries = r.read_u32::<LittleEndian>()?;
            let mut store = ParamStore::new();
            for _ in 0..n_entries {
                let pname = read_string(&mut r)?;
                let trainable = r.read_u8()? != 0;
                let rows = r.read_u32::<LittleEndian>()? as usize;
                let cols = r.read_u32::<LittleEndian>()? as usize;
                let mut bufs = Vec::with_capacity(3);
                for _ in 0..3 {
                    let mut data = vec![0.0f64; rows * cols];
                    for v in &mut data {
                        *v = r.read_f64::<LittleEndian>()?;
                    }
                    bufs.push(Matrix::from_vec(rows, cols, data)?);
                }
                let v = bufs.pop().expect("three buffers");
                let m = bufs.pop().expect("three buffers");
                let value = bufs.pop().expect("three buffers");
                store.insert(&pname, value, trainable);
                let entry = store.entry_mut(&pname).expect("just inserted");
                entry.m = m;
                entry.v = v;
            }
            store.set_step(step);
            stores.push((name, store));
        }
        let n_rngs = r.read_u32::<LittleEndian>()?;
        let mut rng_states = Vec::with_capacity(n_rngs as usize);
        for _ in 0..n_rngs {
            let name = read_string(&mut r)?;
            let mut seed_bytes = [0u8; 32];
            r.read_exact(&mut seed_bytes)?;
            let stream = r.read_u64::<LittleEndian>()?;
            let word_pos = r.read_u128::<LittleEndian>()?;
            rng_states.push(RngStateSnapshot {
                name,
                seed: seed_bytes,
                stream,
                word_pos,
            });
        }
        Ok(Checkpoint {
            representation,
            seed,
            epoch,
            config_hash,
            joints,
            model_config,
            stores,
            rng_states,
        })
    }

    /// Rebuild the lifter, refusing schemas whose joint list differs from the
    /// one recorded at save time.
    pub fn restore_lifter(&self, schema: &KeypointSchema) -> Result<LifterModel> {
        if schema.joints() != self.joints.as_slice() {
            return Err(Error::Checkpoint(format!(
                "schema mismatch: checkpoint was saved with joints {:?}",
                self.joints
            )));
        }
        let layout = resolve_layout(self.representation, &self.model_config, schema)?;
        let mut stores = Vec::new();
        for def in &layout.subnets {
            let store = self
                .stores
                .iter()
                .find(|(name, _)| name == &def.name)
                .map(|(_, s)| s.clone())
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint is missing sub-network '{}'", def.name)))?;
            stores.push(store);
        }
        LifterModel::from_stores(self.representation, self.model_config.clone(), schema, stores)
    }

    pub fn restore_discriminator(&self) -> Result<Discriminator> {
        let store = self
            .stores
            .iter()
            .find(|(name, _)| name == DISCRIMINATOR_STORE)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| Error::Checkpoint("checkpoint has no discriminator store".into()))?;
        Discriminator::from_store(&self.model_config, store)
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    w.write_u16::<LittleEndian>(bytes.len() as u16)?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|e| Error::Checkpoint(format!("invalid utf8 in string field: {e}")))
}
