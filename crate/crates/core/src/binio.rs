//! Shared plumbing of the little-endian binary model formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::features::ensure_parent;

pub(crate) const VERSION: u32 = 1;

pub(crate) fn eof_as_format(kind: &'static str) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(kind, "truncated file")
        } else {
            Error::Io(e)
        }
    }
}

pub(crate) fn check_header(r: &mut impl Read, magic: &[u8; 8], kind: &'static str) -> Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).map_err(eof_as_format(kind))?;
    if &m != magic {
        return Err(Error::format(kind, "bad magic"));
    }
    let v = r.read_u32::<LE>().map_err(eof_as_format(kind))?;
    if v != VERSION {
        return Err(Error::format(kind, format!("unsupported version {v}")));
    }
    Ok(())
}

pub(crate) fn open_reader(path: &Path) -> Result<BufReader<File>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(BufReader::new(File::open(path)?))
}

pub(crate) fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    v.iter().try_for_each(|&x| w.write_f64::<LE>(x))
}

pub(crate) fn read_f64s(r: &mut impl Read, kind: &'static str, limit: usize) -> Result<Vec<f64>> {
    let n = r.read_u64::<LE>().map_err(eof_as_format(kind))? as usize;
    if n > limit {
        return Err(Error::format(kind, format!("vector length {n} exceeds {limit}")));
    }
    let mut v = vec![0f64; n];
    r.read_f64_into::<LE>(&mut v).map_err(eof_as_format(kind))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::format(kind, "non-finite value"));
    }
    Ok(v)
}
