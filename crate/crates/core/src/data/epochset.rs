//! In-memory epoch collection and the `EPOC` file format.
//!
//! File layout, little-endian:
//!
//! ```text
//! "EPOC" | version u16 = 1
//! N u32 | C u32 | S u32 | K u16 | sampling rate f32
//! C x (name length u16, UTF-8 name)
//! labels u8 x N | subject ids u8 x N
//! payload f32 x N*C*S, trial-major then channel then time
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, Reader};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"EPOC";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    /// `[n, channels, timesteps]`
    pub data: Tensor<f32>,
    pub labels: Vec<u8>,
    pub subject_ids: Vec<u8>,
    pub classes: usize,
    pub sampling_rate: f32,
    pub channel_names: Vec<String>,
}

/// Fixed-size header fields of an `EPOC` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordingHeader {
    pub version: u16,
    pub trials: u32,
    pub channels: u32,
    pub timesteps: u32,
    pub classes: u16,
    pub sampling_rate: f32,
}

impl EpochSet {
    pub fn new(
        data: Tensor<f32>,
        labels: Vec<u8>,
        subject_ids: Vec<u8>,
        classes: usize,
        sampling_rate: f32,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let set = Self {
            data,
            labels,
            subject_ids,
            classes,
            sampling_rate,
            channel_names,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.rank() != 3 {
            return Err(Error::data(format!("epoch data must be [n, c, s], got {:?}", self.data.shape())));
        }
        let n = self.data.shape()[0];
        if self.labels.len() != n || self.subject_ids.len() != n {
            return Err(Error::data(format!(
                "{n} trials but {} labels and {} subject ids",
                self.labels.len(),
                self.subject_ids.len()
            )));
        }
        if self.channel_names.len() != self.data.shape()[1] {
            return Err(Error::data(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.data.shape()[1]
            )));
        }
        if self.classes == 0 || self.classes > 256 {
            return Err(Error::data("class count must be in 1..=256"));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.classes) {
            return Err(Error::data(format!("label {l} out of range for {} classes", self.classes)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn timesteps(&self) -> usize {
        self.data.shape()[2]
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u8> {
        let mut s = self.subject_ids.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    /// Trials at `idx`, in that order. An empty index list is a data error.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::data("empty trial selection"));
        }
        Ok(Self {
            data: self.data.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: idx.iter().map(|&i| self.subject_ids[i]).collect(),
            classes: self.classes,
            sampling_rate: self.sampling_rate,
            channel_names: self.channel_names.clone(),
        })
    }

    pub fn header(&self) -> RecordingHeader {
        RecordingHeader {
            version: VERSION,
            trials: self.len() as u32,
            channels: self.channels() as u32,
            timesteps: self.timesteps() as u32,
            classes: self.classes as u16,
            sampling_rate: self.sampling_rate,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let h = self.header();
        let mut out = Vec::with_capacity(32 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.trials.to_le_bytes());
        out.extend_from_slice(&h.channels.to_le_bytes());
        out.extend_from_slice(&h.timesteps.to_le_bytes());
        out.extend_from_slice(&h.classes.to_le_bytes());
        out.extend_from_slice(&h.sampling_rate.to_le_bytes());
        for name in &self.channel_names {
            let b = name.as_bytes();
            let len = u16::try_from(b.len()).map_err(|_| Error::data("channel name too long"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.labels);
        out.extend_from_slice(&self.subject_ids);
        for v in self.data.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format(0, "bad magic, expected EPOC"));
        }
        let at = r.offset();
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::format(at, format!("unsupported version {version}")));
        }
        let n = r.u32("trial count")? as usize;
        let c = r.u32("channel count")? as usize;
        let s = r.u32("timestep count")? as usize;
        let k = r.u16("class count")? as usize;
        let fs = r.f32("sampling rate")?;
        if n == 0 || c == 0 || s == 0 {
            return Err(Error::format(6, "header has a zero dimension"));
        }
        let mut channel_names = Vec::with_capacity(c);
        for _ in 0..c {
            let at = r.offset();
            let len = r.u16("channel name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "channel name")?)
                .map_err(|_| Error::format(at + 2, "channel name is not UTF-8"))?;
            channel_names.push(name.to_owned());
        }
        let labels = r.take(n, "labels")?.to_vec();
        let subject_ids = r.take(n, "subject ids")?.to_vec();
        let payload_at = r.offset();
        let expected = n * c * s * 4;
        let remaining = bytes.len() - payload_at as usize;
        if remaining != expected {
            return Err(Error::format(
                payload_at,
                format!("payload has {remaining} bytes, header N*C*S needs {expected}"),
            ));
        }
        let payload = r.take(expected, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let data = Tensor::new(vec![n, c, s], data).map_err(|e| Error::format(payload_at, e.to_string()))?;
        let set = Self {
            data,
            labels,
            subject_ids,
            classes: k,
            sampling_rate: fs,
            channel_names,
        };
        set.validate().map_err(|e| Error::format(payload_at, e.to_string()))?;
        Ok(set)
    }
}

pub fn save_epochset(path: &Path, set: &EpochSet) -> Result<()> {
    write_atomic(path, &set.encode()?)
}

pub fn load_epochset(path: &Path) -> Result<EpochSet> {
    EpochSet::decode(&std::fs::read(path)?)
}
