//! Versioned binary model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "BCRM"
//! version   u16      1
//! kind      u8       0 = arc-factored, 1 = action-factored
//! system    u8       0 = none (arc), 1 = arc-standard, 2 = bracket
//! capacity  u8       0 = small, 1 = large
//! seed      u64
//! labels    u32 count, then per label: u32 byte length + UTF-8 bytes
//! weights   u64 count, then (u64 feature id, f64 weight) pairs by ascending id
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::action::{ActionScorer, ActionSet, TransitionSystem};
use super::arc::ArcScorer;
use super::weights::Weights;
use super::{Capacity, Model};
use crate::error::Error;

pub const MAGIC: &[u8; 4] = b"BCRM";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<(), Error> {
    let (kind, system, labels) = match model {
        Model::Arc(s) => (0u8, 0u8, s.labels()),
        Model::Action(s) => (
            1,
            match s.system() {
                TransitionSystem::ArcStandard => 1,
                TransitionSystem::Bracket => 2,
            },
            s.actions().labels(),
        ),
    };
    let capacity = match model.capacity() {
        Capacity::Small => 0u8,
        Capacity::Large => 1,
    };
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[kind, system, capacity])?;
    w.write_all(&model.seed().to_le_bytes())?;
    w.write_all(&(labels.len() as u32).to_le_bytes())?;
    for label in labels {
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label.as_bytes())?;
    }
    let pairs = model.weights().sorted();
    w.write_all(&(pairs.len() as u64).to_le_bytes())?;
    for (id, value) in pairs {
        w.write_all(&id.to_le_bytes())?;
        w.write_all(&value.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], Error> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelFormat("truncated file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model, Error> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {}", version)));
    }
    let [kind, system, capacity] = read_array::<3, _>(&mut r)?;
    let capacity = match capacity {
        0 => Capacity::Small,
        1 => Capacity::Large,
        other => return Err(Error::ModelFormat(format!("unknown capacity {}", other))),
    };
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut labels = Vec::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::ModelFormat("truncated label".into()))?;
        labels.push(String::from_utf8(bytes).map_err(|_| Error::ModelFormat("label is not UTF-8".into()))?);
    }
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let mut pairs = Vec::new();
    for _ in 0..count {
        let id = u64::from_le_bytes(read_array(&mut r)?);
        let value = f64::from_le_bytes(read_array(&mut r)?);
        pairs.push((id, value));
    }
    let weights = Weights::from_pairs(pairs);
    match (kind, system) {
        (0, 0) => Ok(Model::Arc(ArcScorer::new(capacity, labels, weights, seed))),
        (1, 1) | (1, 2) => {
            let system = if system == 1 {
                TransitionSystem::ArcStandard
            } else {
                TransitionSystem::Bracket
            };
            let actions = ActionSet::new(system, labels);
            Ok(Model::Action(ActionScorer::new(capacity, actions, weights, seed)))
        }
        _ => Err(Error::ModelFormat(format!(
            "unknown model kind {} / system {}",
            kind, system
        ))),
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<(), Error> {
    write_model(BufWriter::new(File::create(path)?), model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, Error> {
    read_model(BufReader::new(File::open(path)?))
}
