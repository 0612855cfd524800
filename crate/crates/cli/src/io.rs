//! Vector set files. Two interchangeable encodings share one loader:
//!
//! * text: a `count dim` header line, then one whitespace-separated row per
//!   vector, floats printed exactly (round-trip formatting);
//! * binary: magic `RKMV1`, little-endian u32 count and dim, then the
//!   row-major f64 coordinates.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rkm_core::vectors::{Role, VectorSet};

const MAGIC: &[u8; 5] = b"RKMV1";

pub fn save_text(path: &Path, set: &VectorSet) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", set.count(), set.dim()));
    for i in 0..set.count() {
        let row = set.row(i);
        for (c, x) in row.iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn save_binary(path: &Path, set: &VectorSet) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    file.write_all(MAGIC)?;
    file.write_all(&u32::try_from(set.count())?.to_le_bytes())?;
    file.write_all(&u32::try_from(set.dim())?.to_le_bytes())?;
    for x in set.data() {
        file.write_all(&x.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

/// Loads either encoding, telling them apart by the magic prefix.
pub fn load_vectors(path: &Path, role: Role) -> Result<VectorSet> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        parse_binary(&bytes, role).with_context(|| format!("binary file {}", path.display()))
    } else {
        let text = std::str::from_utf8(&bytes)
            .with_context(|| format!("{} is neither RKMV1 nor UTF-8 text", path.display()))?;
        parse_text(text, role).with_context(|| format!("text file {}", path.display()))
    }
}

fn parse_binary(bytes: &[u8], role: Role) -> Result<VectorSet> {
    let body = &bytes[MAGIC.len()..];
    if body.len() < 8 {
        bail!("truncated header");
    }
    let count = u32::from_le_bytes(body[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(body[4..8].try_into().unwrap()) as usize;
    let data = &body[8..];
    let want = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .context("count * dim overflows")?;
    if data.len() != want {
        bail!("expected {want} data bytes for {count}x{dim}, found {}", data.len());
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VectorSet::new(role, dim, values)?)
}

fn parse_text(text: &str, role: Role) -> Result<VectorSet> {
    let mut lines = text.lines();
    let header = lines.next().context("empty file")?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .context("missing count in header")?
        .parse()
        .context("bad count in header")?;
    let dim: usize = parts
        .next()
        .context("missing dim in header")?
        .parse()
        .context("bad dim in header")?;
    if parts.next().is_some() {
        bail!("header must be exactly `count dim`");
    }
    let mut values = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for token in line.split_whitespace() {
            let x: f64 = token.parse().with_context(|| format!("row {}: bad float {token:?}", i + 1))?;
            values.push(x);
        }
        if values.len() - before != dim {
            bail!("row {} has {} values, expected {dim}", i + 1, values.len() - before);
        }
    }
    if values.len() != count * dim {
        bail!("found {} rows, header promised {count}", values.len() / dim.max(1));
    }
    Ok(VectorSet::new(role, dim, values)?)
}
