//! Checkpoint layout: a UTF-8 manifest followed by raw parameter data.
//!
//! ```text
//! optmarl-checkpoint 1
//! <name> <rows> <cols>      one line per array, in data order
//! end
//! <little-endian f64 values, row-major, arrays back to back>
//! ```

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::diffcore::{Matrix, ParameterStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "optmarl-checkpoint 1";

/// Writes every entry of each store, prefixing names with `<prefix>/`.
pub fn write_checkpoint<W: Write>(mut out: W, stores: &[(&str, &ParameterStore)]) -> Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    for (prefix, store) in stores {
        for (_, p) in store.iter() {
            let (r, c) = p.value.dim();
            writeln!(out, "{prefix}/{} {r} {c}", p.name)?;
        }
    }
    writeln!(out, "end")?;
    for (_, store) in stores {
        for (_, p) in store.iter() {
            for v in p.value.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads all named arrays of a checkpoint in file order.
pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<Vec<(String, Matrix)>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad header `{}`", line.trim_end())));
    }
    let mut manifest = Vec::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Checkpoint("manifest not terminated".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let mut parts = l.split_whitespace();
        let (Some(name), Some(r), Some(c), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Checkpoint(format!("bad manifest line `{l}`")));
        };
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("bad dimension in `{l}`")))
        };
        manifest.push((name.to_string(), dim(r)?, dim(c)?));
    }
    let mut arrays = Vec::with_capacity(manifest.len());
    let mut buf = [0u8; 8];
    for (name, r, c) in manifest {
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            input
                .read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("data for `{name}` truncated")))?;
            data.push(f64::from_le_bytes(buf));
        }
        let m = Array2::from_shape_vec((r, c), data).expect("length matches manifest");
        arrays.push((name, m));
    }
    if input.read(&mut buf)? != 0 {
        return Err(Error::Checkpoint("trailing data".into()));
    }
    Ok(arrays)
}

/// Loads arrays written by [`write_checkpoint`] into stores with the same
/// layout. Every entry of every store must be present with matching shape.
pub fn load_checkpoint_into<R: BufRead>(
    input: R,
    stores: &mut [(&str, &mut ParameterStore)],
) -> Result<()> {
    let arrays = read_checkpoint(input)?;
    let expected: usize = stores.iter().map(|(_, s)| s.len()).sum();
    if arrays.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{} arrays in file, {expected} expected",
            arrays.len()
        )));
    }
    for (name, m) in arrays {
        let (prefix, rest) = name
            .split_once('/')
            .ok_or_else(|| Error::Checkpoint(format!("unprefixed name `{name}`")))?;
        let (_, store) = stores
            .iter_mut()
            .find(|(p, _)| *p == prefix)
            .ok_or_else(|| Error::Checkpoint(format!("unknown prefix `{prefix}`")))?;
        let id = store
            .id(rest)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if store.value(id).dim() != m.dim() {
            return Err(Error::Checkpoint(format!("shape mismatch for `{name}`")));
        }
        store.value_mut(id).assign(&m);
    }
    Ok(())
}
