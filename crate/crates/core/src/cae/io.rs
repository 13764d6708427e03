//! Binary layouts, all little-endian.
//!
//! Weights:
//!
//! ```text
//! magic "PDL1CAE\0" | version u32 = 1
//! input_size u32 | channels 3×u32 | kernels 3×u32 | hidden u32 | embed_dim u32
//! batch_norm u8 | activation u8 (0 relu, 1 identity) | squash_output u8
//! bn_momentum f64 | bn_eps f64
//! seed u64
//! n_params u64 | n_params × f32   (layer order; weight then bias, gamma then beta)
//! n_stats u64  | n_stats × f32    (per batch-norm layer: running means, then variances)
//! ```
//!
//! Embeddings of one slide:
//!
//! ```text
//! magic "PDL1EMB\0" | version u32 = 1
//! id_len u32 | slide_id (UTF-8) | tile_count u32 | dim u32
//! tile_count × dim × f32   (tile-grid order)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Activation, Cae, CaeConfig, TileEmbedding};
use crate::binio::{check_header, create_writer, eof_as_format, open_reader, VERSION};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"PDL1CAE\0";
pub const EMBEDDING_MAGIC: &[u8; 8] = b"PDL1EMB\0";
fn write_f32s(w: &mut impl Write, v: &[f32]) -> std::io::Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    v.iter().try_for_each(|&x| w.write_f32::<LE>(x))
}

fn read_f32s(r: &mut impl Read, kind: &'static str, limit: usize) -> Result<Vec<f32>> {
    let n = r.read_u64::<LE>().map_err(eof_as_format(kind))? as usize;
    if n > limit {
        return Err(Error::format(kind, format!("tensor length {n} exceeds {limit}")));
    }
    let mut v = vec![0f32; n];
    r.read_f32_into::<LE>(&mut v).map_err(eof_as_format(kind))?;
    Ok(v)
}

impl Cae<f32> {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let c = &self.config;
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(c.input_size as u32)?;
        for v in c.channels.iter().chain(&c.kernels) {
            w.write_u32::<LE>(*v as u32)?;
        }
        w.write_u32::<LE>(c.hidden as u32)?;
        w.write_u32::<LE>(c.embed_dim as u32)?;
        w.write_u8(c.batch_norm as u8)?;
        w.write_u8(match c.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        })?;
        w.write_u8(c.squash_output as u8)?;
        w.write_f64::<LE>(c.bn_momentum)?;
        w.write_f64::<LE>(c.bn_eps)?;
        w.write_u64::<LE>(self.seed)?;
        write_f32s(w, &self.params)?;
        write_f32s(w, &self.running)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "CAE weights";
        check_header(r, WEIGHTS_MAGIC, KIND)?;
        let eof = eof_as_format(KIND);
        let mut u = || r.read_u32::<LE>().map(|v| v as usize);
        let input_size = u().map_err(&eof)?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = u().map_err(&eof)?;
        }
        let hidden = u().map_err(&eof)?;
        let embed_dim = u().map_err(&eof)?;
        let batch_norm = match r.read_u8().map_err(&eof)? {
            0 => false,
            1 => true,
            v => return Err(Error::format(KIND, format!("bad batch-norm flag {v}"))),
        };
        let activation = match r.read_u8().map_err(&eof)? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            v => return Err(Error::format(KIND, format!("bad activation tag {v}"))),
        };
        let squash_output = match r.read_u8().map_err(&eof)? {
            0 => false,
            1 => true,
            v => return Err(Error::format(KIND, format!("bad squash flag {v}"))),
        };
        let bn_momentum = r.read_f64::<LE>().map_err(&eof)?;
        let bn_eps = r.read_f64::<LE>().map_err(&eof)?;
        let seed = r.read_u64::<LE>().map_err(&eof)?;
        let config = CaeConfig {
            input_size,
            channels: [dims[0], dims[1], dims[2]],
            kernels: [dims[3], dims[4], dims[5]],
            hidden,
            embed_dim,
            batch_norm,
            activation,
            squash_output,
            bn_momentum,
            bn_eps,
        };
        let probe = Cae::<f32>::init(config, 0).map_err(|e| Error::format(KIND, e.to_string()))?;
        let params = read_f32s(r, KIND, probe.params.len())?;
        let running = read_f32s(r, KIND, probe.running.len())?;
        if params.iter().chain(&running).any(|v| !v.is_finite()) {
            return Err(Error::format(KIND, "non-finite weights"));
        }
        Cae::from_parts(config, seed, params, running).map_err(|e| Error::format(KIND, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = create_writer(path.as_ref())?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut open_reader(path.as_ref())?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlideEmbeddings {
    pub slide_id: String,
    pub dim: usize,
    pub tiles: Vec<TileEmbedding>,
}

impl SlideEmbeddings {
    pub fn new(slide_id: impl Into<String>, tiles: Vec<TileEmbedding>) -> Result<Self> {
        let dim = tiles.first().map_or(0, Vec::len);
        if tiles.iter().any(|t| t.len() != dim) {
            return Err(Error::invalid("tile embeddings of unequal width"));
        }
        Ok(Self {
            slide_id: slide_id.into(),
            dim,
            tiles,
        })
    }

    /// Embeddings widened to `f64`.
    pub fn as_f64(&self) -> Vec<Vec<f64>> {
        self.tiles
            .iter()
            .map(|t| t.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

pub fn write_embeddings(e: &SlideEmbeddings, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create_writer(path.as_ref())?;
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(e.slide_id.len() as u32)?;
    w.write_all(e.slide_id.as_bytes())?;
    w.write_u32::<LE>(e.tiles.len() as u32)?;
    w.write_u32::<LE>(e.dim as u32)?;
    for t in &e.tiles {
        t.iter().try_for_each(|&x| w.write_f32::<LE>(x))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<SlideEmbeddings> {
    const KIND: &str = "embedding";
    let mut r = open_reader(path.as_ref())?;
    check_header(&mut r, EMBEDDING_MAGIC, KIND)?;
    let eof = eof_as_format(KIND);
    let id_len = r.read_u32::<LE>().map_err(&eof)? as usize;
    if id_len > 4096 {
        return Err(Error::format(KIND, "slide id too long"));
    }
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(&eof)?;
    let slide_id = String::from_utf8(id).map_err(|_| Error::format(KIND, "slide id is not UTF-8"))?;
    let count = r.read_u32::<LE>().map_err(&eof)? as usize;
    let dim = r.read_u32::<LE>().map_err(&eof)? as usize;
    if dim > 1 << 16 {
        return Err(Error::format(KIND, format!("implausible width {dim}")));
    }
    let mut tiles = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut t = vec![0f32; dim];
        r.read_f32_into::<LE>(&mut t).map_err(&eof)?;
        tiles.push(t);
    }
    Ok(SlideEmbeddings { slide_id, dim, tiles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cae.bin");
        let cae = Cae::<f32>::init(CaeConfig::tiny(), 4).unwrap();
        cae.save(&p).unwrap();
        assert_eq!(Cae::load(&p).unwrap(), cae);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Cae::load(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"PDL1EMB\0\x01\0\0\0").unwrap();
        assert!(matches!(Cae::load(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.emb");
        let e = SlideEmbeddings::new("slide-7", vec![vec![0.5; 32], vec![-1.25; 32]]).unwrap();
        write_embeddings(&e, &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), e);
    }
}
