//! Index persistence: magic `RKMI1`, a version word, the build
//! configuration, then every component the engine needs to resume —
//! rotation, norm-order item ids, both rotated vector sets with their
//! original norms and partition parts, per-user scan states, and the
//! upper-bound table. Everything is little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rkm_core::preprocess::{Index, IndexConfig, TopBuffer, UpperBoundTable, UserState};
use rkm_core::transform::Rotation;
use rkm_core::vectors::{PartitionedVectors, Role, VectorSet};

const MAGIC: &[u8; 5] = b"RKMI1";
const VERSION: u32 = 1;

pub fn save_index(path: &Path, index: &Index) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    let cfg = index.config();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for v in [cfg.user_count, cfg.item_count, cfg.dim, cfg.split_dim, cfg.k_max] {
        out.write_all(&u32::try_from(v)?.to_le_bytes())?;
    }
    out.write_all(&cfg.uniform_budget.to_le_bytes())?;
    out.write_all(&cfg.dynamic_budget.to_le_bytes())?;
    for v in [cfg.alpha, cfg.beta, cfg.gamma] {
        out.write_all(&v.to_le_bytes())?;
    }
    write_floats(&mut out, index.rotation().matrix())?;
    for id in index.item_ids() {
        out.write_all(&id.to_le_bytes())?;
    }
    write_partitioned(&mut out, index.items())?;
    write_partitioned(&mut out, index.users())?;
    for state in index.user_states() {
        let entries = state.buffer().entries();
        out.write_all(&u32::try_from(entries.len())?.to_le_bytes())?;
        for &(pos, value) in entries {
            out.write_all(&pos.to_le_bytes())?;
            out.write_all(&value.to_le_bytes())?;
        }
        out.write_all(&state.frontier().to_le_bytes())?;
        out.write_all(&state.unseen_bound().to_le_bytes())?;
        out.write_all(&[state.is_certified() as u8])?;
    }
    for &count in index.table().counts() {
        out.write_all(&count.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn write_floats(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_partitioned(out: &mut impl Write, set: &PartitionedVectors) -> std::io::Result<()> {
    write_floats(out, set.vectors().data())?;
    write_floats(out, set.vectors().norms())?;
    write_floats(out, set.tail_norms())?;
    write_floats(out, set.heads())
}

pub fn load_index(path: &Path) -> Result<Index> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        bail!("{} is not an RKMI1 index file", path.display());
    }
    let version = r.u32()?;
    if version != VERSION {
        bail!("unsupported index version {version}");
    }
    let user_count = r.u32()? as usize;
    let item_count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let split_dim = r.u32()? as usize;
    let k_max = r.u32()? as usize;
    let config = IndexConfig {
        user_count,
        item_count,
        dim,
        split_dim,
        k_max,
        uniform_budget: r.u64()?,
        dynamic_budget: r.u64()?,
        alpha: r.f64()?,
        beta: r.f64()?,
        gamma: r.f64()?,
    };
    let rotation = Rotation::from_parts(dim, r.floats(dim * dim)?)?;
    let mut item_ids = Vec::with_capacity(item_count);
    for _ in 0..item_count {
        item_ids.push(r.u32()?);
    }
    let items = read_partitioned(&mut r, Role::Items, item_count, dim, split_dim)?;
    let users = read_partitioned(&mut r, Role::Users, user_count, dim, split_dim)?;
    let mut states = Vec::with_capacity(user_count);
    for _ in 0..user_count {
        let len = r.u32()? as usize;
        if len > k_max {
            bail!("user state holds {len} entries, index k_max is {k_max}");
        }
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            let pos = r.u32()?;
            let value = r.f64()?;
            entries.push((pos, value));
        }
        let buffer = TopBuffer::from_parts(k_max, entries)?;
        let frontier = r.u32()?;
        let unseen = r.f64()?;
        let certified = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => bail!("bad certified flag {other}"),
        };
        states.push(UserState::from_parts(buffer, frontier, unseen, certified)?);
    }
    let mut counts = Vec::with_capacity(item_count * k_max);
    for _ in 0..item_count * k_max {
        counts.push(r.u32()?);
    }
    let table = UpperBoundTable::from_parts(k_max, item_count, counts)?;
    if r.at != bytes.len() {
        bail!("{} trailing bytes after index body", bytes.len() - r.at);
    }
    Ok(Index::from_parts(config, rotation, item_ids, items, users, states, table)?)
}

fn read_partitioned(
    r: &mut Reader,
    role: Role,
    count: usize,
    dim: usize,
    split_dim: usize,
) -> Result<PartitionedVectors> {
    let data = r.floats(count * dim)?;
    let norms = r.floats(count)?;
    let tail_norms = r.floats(count)?;
    let heads = r.floats(count * split_dim)?;
    let vectors = VectorSet::from_parts(role, dim, data, norms)?;
    Ok(PartitionedVectors::from_parts(vectors, split_dim, heads, tail_norms)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            bail!("unexpected end of file at byte {}", self.at);
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
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

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
