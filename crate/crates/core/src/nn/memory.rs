use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use rand::Rng;

use crate::env::{UeAction, NUM_UES};
use crate::error::{Error, Result};

/// One stored cycle: the observed buffers, the activations computed from
/// them, the chosen actions and the resulting transition.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryRecord {
    pub state: [usize; NUM_UES],
    pub ucm: [Vec<f32>; NUM_UES],
    pub dcm: [Vec<f32>; NUM_UES],
    pub q: [[f32; 3]; NUM_UES],
    pub actions: [UeAction; NUM_UES],
    pub reward: f64,
    pub next_state: [usize; NUM_UES],
    pub terminal: bool,
}

/// Ring buffer of records with oldest-first eviction.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicMemory {
    capacity: usize,
    records: VecDeque<MemoryRecord>,
}

const MAGIC: &[u8; 4] = b"EPM1";

impl EpisodicMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        Self { capacity, records: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: MemoryRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn get(&self, i: usize) -> Option<&MemoryRecord> {
        self.records.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a MemoryRecord> {
        (0..n).map(|_| &self.records[rng.gen_range(0..self.records.len())]).collect()
    }

    /// How often each buffer pair was observed.
    pub fn state_counts(&self) -> BTreeMap<[usize; NUM_UES], u64> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.state).or_insert(0) += 1;
        }
        counts
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let cm = self.records.front().map_or(0, |r| r.ucm[0].len());
        w.write_all(MAGIC)?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&(cm as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            for v in r.state.iter().chain(&r.next_state) {
                w.write_all(&(*v as u16).to_le_bytes())?;
            }
            w.write_all(&[r.actions[0].index() as u8, r.actions[1].index() as u8, r.terminal as u8])?;
            w.write_all(&r.reward.to_le_bytes())?;
            for v in r.ucm.iter().chain(&r.dcm) {
                if v.len() != cm {
                    return Err(Error::SizeMismatch("memory records disagree on CM width".into()));
                }
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            for q in &r.q {
                for x in q {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::CorruptHeader("not an episodic memory file".into()));
        }
        let capacity = read_u64(&mut r)? as usize;
        let cm = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        if capacity == 0 || count > capacity {
            return Err(Error::CorruptHeader(format!("{count} records for capacity {capacity}")));
        }
        let mut mem = EpisodicMemory::new(capacity);
        for _ in 0..count {
            let mut levels = [0usize; 4];
            for l in &mut levels {
                let mut b = [0u8; 2];
                read_exact(&mut r, &mut b)?;
                *l = u16::from_le_bytes(b) as usize;
            }
            let mut flags = [0u8; 3];
            read_exact(&mut r, &mut flags)?;
            let action =
                |i: u8| UeAction::from_index(i as usize).ok_or_else(|| Error::CorruptHeader("bad action".into()));
            let mut rb = [0u8; 8];
            read_exact(&mut r, &mut rb)?;
            let mut vecs: Vec<Vec<f32>> = Vec::with_capacity(4);
            for _ in 0..4 {
                vecs.push((0..cm).map(|_| read_f32(&mut r)).collect::<Result<_>>()?);
            }
            let mut q = [[0f32; 3]; NUM_UES];
            for row in &mut q {
                for x in row.iter_mut() {
                    *x = read_f32(&mut r)?;
                }
            }
            let mut vecs = vecs.into_iter();
            let mut next = || vecs.next().expect("four vectors read");
            mem.push(MemoryRecord {
                state: [levels[0], levels[1]],
                next_state: [levels[2], levels[3]],
                actions: [action(flags[0])?, action(flags[1])?],
                terminal: flags[2] != 0,
                reward: f64::from_le_bytes(rb),
                ucm: [next(), next()],
                dcm: [next(), next()],
                q,
            });
        }
        Ok(mem)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::SizeMismatch("stream ended early".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}
