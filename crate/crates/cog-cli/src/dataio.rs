//! Dataset files.
//!
//! The interchange format of record is JSON-lines: one header line with
//! metadata, then one transition per line. A mirrored binary container
//! (fixed-stride little-endian records guarded by an FNV-1a-64 checksum)
//! exists for speed; `load` sniffs the magic bytes and accepts either.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cog_core::data::{DataSource, Dataset, Transition, OBS_LAYOUT_VERSION};
use cog_core::env::ACT_DIM;

/// First line of a JSONL dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    v: u32,
    env: String,
    obs_dim: usize,
    act_dim: usize,
    reward_labeled: bool,
    seed: u64,
    source: String,
}

/// One transition line of a JSONL dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct Line {
    t: u32,
    traj: u32,
    obs: Vec<f64>,
    act: Vec<f64>,
    r: f64,
    next_obs: Vec<f64>,
}

const BIN_MAGIC: &[u8; 8] = b"COGDATA1";

/// Checks the invariants that only make sense at the file boundary, on top
/// of the core validation: declared reward labeling must match contents.
fn validate_loaded(ds: &Dataset, what: &str) -> Result<()> {
    ds.validate().with_context(|| format!("validating {what}"))?;
    if !ds.reward_labeled && ds.n_nonzero_rewards() > 0 {
        bail!("{what}: header says reward-free but {} rewards are nonzero", ds.n_nonzero_rewards());
    }
    Ok(())
}

/// Writes the JSON-lines form. Finite doubles survive the round-trip
/// bit-exactly (shortest-round-trip float printing).
pub fn save_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let header = Header {
        v: ds.layout_version,
        env: ds.env_id.clone(),
        obs_dim: ds.obs_dim,
        act_dim: ACT_DIM,
        reward_labeled: ds.reward_labeled,
        seed: ds.seed,
        source: ds.source.id().to_string(),
    };
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for tr in &ds.transitions {
        let line = Line {
            t: tr.t,
            traj: tr.traj,
            obs: tr.obs.clone(),
            act: tr.action.to_vec(),
            r: tr.reward,
            next_obs: tr.next_obs.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_jsonl(reader: impl BufRead, what: &str) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines
        .next()
        .with_context(|| format!("{what}: empty file, expected a header line"))?;
    let first = first.with_context(|| format!("{what}: reading line 1"))?;
    let header: Header =
        serde_json::from_str(&first).with_context(|| format!("{what}: malformed header (line 1)"))?;
    if header.v != OBS_LAYOUT_VERSION {
        bail!("{what}: observation layout v{} unsupported (expected v{OBS_LAYOUT_VERSION})", header.v);
    }
    if header.act_dim != ACT_DIM {
        bail!("{what}: act_dim {} != {ACT_DIM}", header.act_dim);
    }
    let source = DataSource::parse(&header.source)
        .with_context(|| format!("{what}: header source '{}'", header.source))?;
    let mut ds = Dataset::new(&header.env, header.obs_dim, header.seed, source);
    ds.reward_labeled = header.reward_labeled;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.with_context(|| format!("{what}: reading line {line_no}"))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line)
            .with_context(|| format!("{what}: malformed transition (line {line_no})"))?;
        if rec.act.len() != ACT_DIM {
            bail!("{what}: line {line_no}: action has {} dims, expected {ACT_DIM}", rec.act.len());
        }
        let mut action = [0.0; ACT_DIM];
        action.copy_from_slice(&rec.act);
        ds.transitions.push(Transition {
            obs: rec.obs,
            action,
            reward: rec.r,
            next_obs: rec.next_obs,
            traj: rec.traj,
            t: rec.t,
        });
    }
    validate_loaded(&ds, what)?;
    Ok(ds)
}

/// Little-endian binary writer used by the checksummed container.
struct CountingWriter<W: Write> {
    inner: W,
    hash: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<W: Write> CountingWriter<W> {
    fn new(inner: W) -> Self {
        CountingWriter { inner, hash: FNV_OFFSET }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        for &b in bytes {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(FNV_PRIME);
        }
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn put_u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    fn put_u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    fn put_f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }
}

/// Writes the binary mirror: header, fixed-stride f64 records, and a
/// trailing FNV-1a-64 checksum of everything before it.
pub fn save_binary(ds: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = CountingWriter::new(std::io::BufWriter::new(file));
    w.put(BIN_MAGIC)?;
    w.put_u32(ds.layout_version)?;
    let env = ds.env_id.as_bytes();
    w.put_u32(env.len() as u32)?;
    w.put(env)?;
    let source = ds.source.id().as_bytes();
    w.put_u32(source.len() as u32)?;
    w.put(source)?;
    w.put_u32(ds.obs_dim as u32)?;
    w.put_u32(ACT_DIM as u32)?;
    w.put(&[ds.reward_labeled as u8])?;
    w.put_u64(ds.seed)?;
    w.put_u64(ds.transitions.len() as u64)?;
    for tr in &ds.transitions {
        w.put_u32(tr.traj)?;
        w.put_u32(tr.t)?;
        w.put_f64(tr.reward)?;
        for &v in &tr.obs {
            w.put_f64(v)?;
        }
        for &v in &tr.action {
            w.put_f64(v)?;
        }
        for &v in &tr.next_obs {
            w.put_f64(v)?;
        }
    }
    let digest = w.hash;
    w.inner.write_all(&digest.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

/// Cursor over an in-memory binary file that reports byte offsets in its
/// error messages.
struct BinReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> BinReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!(
                "{}: truncated at byte offset {} (needed {} more bytes)",
                self.what,
                self.pos,
                n - (self.bytes.len() - self.pos)
            );
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_binary(bytes: &[u8], what: &str) -> Result<Dataset> {
    if bytes.len() < BIN_MAGIC.len() + 8 {
        bail!("{what}: too short to be a dataset container");
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let mut hash = FNV_OFFSET;
    for &b in body {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    if hash != stored {
        bail!("{what}: checksum mismatch (stored {stored:#018x}, computed {hash:#018x}) — file corrupt");
    }
    let mut r = BinReader { bytes: body, pos: 0, what };
    let magic = r.take(BIN_MAGIC.len())?;
    if magic != BIN_MAGIC {
        bail!("{what}: bad magic bytes");
    }
    let version = r.u32()?;
    if version != OBS_LAYOUT_VERSION {
        bail!("{what}: observation layout v{version} unsupported (expected v{OBS_LAYOUT_VERSION})");
    }
    let env_len = r.u32()? as usize;
    let env = String::from_utf8(r.take(env_len)?.to_vec())
        .with_context(|| format!("{what}: env id is not UTF-8"))?;
    let source_len = r.u32()? as usize;
    let source_id = String::from_utf8(r.take(source_len)?.to_vec())
        .with_context(|| format!("{what}: source id is not UTF-8"))?;
    let source = DataSource::parse(&source_id)?;
    let obs_dim = r.u32()? as usize;
    let act_dim = r.u32()? as usize;
    if act_dim != ACT_DIM {
        bail!("{what}: act_dim {act_dim} != {ACT_DIM}");
    }
    let reward_labeled = r.take(1)?[0] != 0;
    let seed = r.u64()?;
    let n = r.u64()? as usize;
    let mut ds = Dataset::new(&env, obs_dim, seed, source);
    ds.reward_labeled = reward_labeled;
    ds.transitions.reserve(n);
    for _ in 0..n {
        let traj = r.u32()?;
        let t = r.u32()?;
        let reward = r.f64()?;
        let mut obs = Vec::with_capacity(obs_dim);
        for _ in 0..obs_dim {
            obs.push(r.f64()?);
        }
        let mut action = [0.0; ACT_DIM];
        for a in action.iter_mut() {
            *a = r.f64()?;
        }
        let mut next_obs = Vec::with_capacity(obs_dim);
        for _ in 0..obs_dim {
            next_obs.push(r.f64()?);
        }
        ds.transitions.push(Transition { obs, action, reward, next_obs, traj, t });
    }
    if r.pos != body.len() {
        bail!("{what}: {} trailing bytes after the last record", body.len() - r.pos);
    }
    validate_loaded(&ds, what)?;
    Ok(ds)
}

/// Loads a dataset, accepting either format (detected by magic bytes).
pub fn load(path: &Path) -> Result<Dataset> {
    let what = path.display().to_string();
    let file = fs::File::open(path).with_context(|| format!("opening {what}"))?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().with_context(|| format!("reading {what}"))?;
    if head.starts_with(BIN_MAGIC) {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).with_context(|| format!("reading {what}"))?;
        parse_binary(&bytes, &what)
    } else {
        parse_jsonl(reader, &what)
    }
}

/// Writes a dataset, picking the container from the file extension
/// (`.bin` is binary, everything else JSONL).
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        save_binary(ds, path)
    } else {
        save_jsonl(ds, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cog_core::data::CollectKind;
    use cog_core::scripted::{collect, ScriptedConfig};

    fn sample_dataset() -> Dataset {
        collect("place_in_box", CollectKind::Task, 6, &ScriptedConfig::default(), 9).unwrap()
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = sample_dataset();
        save_jsonl(&ds, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = sample_dataset();
        save_binary(&ds, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn empty_dataset_round_trips_as_header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let ds = Dataset::new("place_in_box", 14, 3, DataSource::Randomized);
        save_jsonl(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1, "header only");
        let back = load(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, ds);
    }

    #[test]
    fn corrupting_binary_byte_100_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_binary(&sample_dataset(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        assert!(bytes.len() > 100);
        bytes[100] ^= 0x55;
        fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("checksum"), "got: {err}");
    }

    #[test]
    fn truncated_binary_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_binary(&sample_dataset(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn malformed_jsonl_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_jsonl(&sample_dataset(), &path).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        let third_start = text
            .char_indices()
            .filter(|(_, c)| *c == '\n')
            .nth(1)
            .map(|(i, _)| i + 1)
            .unwrap();
        text.insert_str(third_start, "not json ");
        fs::write(&path, &text).unwrap();
        let err = format!("{:#}", load(&path).unwrap_err());
        assert!(err.contains("line 3"), "got: {err}");
    }

    #[test]
    fn zero_reward_invariant_enforced_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut ds = sample_dataset();
        ds.reward_labeled = false; // lie: rewards are still present
        assert!(ds.n_nonzero_rewards() > 0, "fixture needs a reward");
        save_jsonl(&ds, &path).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("reward-free"), "got: {err}");
    }
}
