//! Index file layout, all integers and floats little-endian:
//!
//! ```text
//! magic           8 bytes  "TRSSIDX\0"
//! version         u32
//! body length     u64      bytes between this field and the checksum
//! config          see `put_config`
//! store           u32 trajectory count, u32 store fingerprint
//! grid            f64 x_min, y_min, x_max, y_max, u32 m
//! upper layer     u32 node count, then per node: u32 id, u32 degree,
//!                 degree x (u32 target, u8 tag)
//! lower layer     u32 node count, then per node: u32 degree,
//!                 degree x (u32 target, u8 tag)
//! checksum        u32 crc32 of every preceding byte
//! ```
//!
//! Tags are 0 similar, 1 random, 2 dissimilar.

use std::fs;
use std::path::Path;

use super::{CndiGraph, Edge, EdgeTag, GariGraph, IndexBundle};
use crate::config::{Ablation, Config, GariCounts};
use crate::error::{LoadError, Result};
use crate::model::{Ground, TrajId};
use crate::similarity::{MetricKind, SimTransform};
use crate::spatial::{Grid, Mbr};

pub const MAGIC: &[u8; 8] = b"TRSSIDX\0";
pub const FORMAT_VERSION: u32 = 1;

const HEADER: usize = 8 + 4 + 8;

pub fn save_index(bundle: &IndexBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, bundle.to_bytes())?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<IndexBundle> {
    let bytes = fs::read(path)?;
    Ok(IndexBundle::from_bytes(&bytes)?)
}

impl IndexBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        put_config(&mut body, &self.config);
        put_u32(&mut body, self.store_len);
        put_u32(&mut body, self.store_crc);
        let b = self.grid.bounds;
        for v in [b.x_min, b.y_min, b.x_max, b.y_max] {
            put_f64(&mut body, v);
        }
        put_u32(&mut body, self.grid.m as u32);

        put_u32(&mut body, self.gari.len() as u32);
        for (id, edges) in self.gari.nodes().iter().zip(self.gari.adjacency()) {
            put_u32(&mut body, id.0);
            put_edges(&mut body, edges);
        }
        put_u32(&mut body, self.cndi.len() as u32);
        for edges in self.cndi.adjacency() {
            put_edges(&mut body, edges);
        }

        let mut out = Vec::with_capacity(HEADER + body.len() + 4);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LoadError> {
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) { LoadError::Truncated } else { LoadError::BadMagic });
        }
        if &bytes[..8] != MAGIC {
            return Err(LoadError::BadMagic);
        }
        let mut r = Reader { buf: bytes, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(LoadError::Version { found: version, expected: FORMAT_VERSION });
        }
        let body_len = r.u64()?;
        let want = (HEADER as u64).checked_add(body_len).and_then(|x| x.checked_add(4));
        match want {
            Some(w) if (bytes.len() as u64) < w => return Err(LoadError::Truncated),
            Some(w) if bytes.len() as u64 == w => {}
            _ => return Err(LoadError::Malformed("trailing bytes after checksum".into())),
        }
        let split = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[split..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..split]);
        if stored != computed {
            return Err(LoadError::Checksum { stored, computed });
        }

        let mut r = Reader { buf: &bytes[..split], pos: HEADER };
        let config = get_config(&mut r)?;
        let store_len = r.u32()?;
        let store_crc = r.u32()?;
        let bounds = Mbr::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let m = r.u32()? as usize;
        let grid = Grid::new(bounds, m).map_err(|e| LoadError::Malformed(e.to_string()))?;

        let g = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(g.min(1 << 16));
        let mut gadj = Vec::with_capacity(g.min(1 << 16));
        for _ in 0..g {
            nodes.push(TrajId(r.u32()?));
            gadj.push(get_edges(&mut r)?);
        }
        let c = r.u32()? as usize;
        let mut cadj = Vec::with_capacity(c.min(1 << 20));
        for _ in 0..c {
            cadj.push(get_edges(&mut r)?);
        }
        if r.pos != r.buf.len() {
            return Err(LoadError::Malformed(format!("{} unread bytes", r.buf.len() - r.pos)));
        }
        Ok(IndexBundle {
            config,
            grid,
            gari: GariGraph::from_parts(nodes, gadj),
            cndi: CndiGraph::from_adjacency(cadj),
            store_len,
            store_crc,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_edges(out: &mut Vec<u8>, edges: &[Edge]) {
    put_u32(out, edges.len() as u32);
    for e in edges {
        put_u32(out, e.to.0);
        out.push(e.tag.code());
    }
}

/// Optional values are a presence byte followed by the value when present.
fn put_config(out: &mut Vec<u8>, c: &Config) {
    put_f64(out, c.alpha);
    put_u32(out, c.grid_m as u32);
    put_u32(out, c.xi as u32);
    put_f64(out, c.delta);
    put_u32(out, c.gari_counts.similar as u32);
    put_u32(out, c.gari_counts.random as u32);
    put_u32(out, c.gari_counts.dissimilar as u32);
    put_u32(out, c.kappa_n as u32);
    put_u32(out, c.kappa_r as u32);
    put_u32(out, c.k as u32);
    out.push(match c.metric {
        MetricKind::Dtw => 0,
        MetricKind::Edr => 1,
        MetricKind::Erp => 2,
    });
    match c.edr_eps {
        Some(e) => {
            out.push(1);
            put_f64(out, e);
        }
        None => out.push(0),
    }
    put_f64(out, c.erp_gap.0);
    put_f64(out, c.erp_gap.1);
    put_u32(out, c.scorer.len() as u32);
    out.extend_from_slice(c.scorer.as_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.push(match c.sim_transform {
        SimTransform::Reciprocal => 0,
        SimTransform::Exponential => 1,
    });
    out.push(match c.ground {
        Ground::Planar => 0,
        Ground::Haversine => 1,
    });
    match c.min_candidates {
        Some(v) => {
            out.push(1);
            put_u32(out, v as u32);
        }
        None => out.push(0),
    }
    out.push(u8::from(c.ablation.no_gari));
    out.push(u8::from(c.ablation.no_random));
    out.push(u8::from(c.ablation.no_record));
}

fn get_config(r: &mut Reader) -> Result<Config, LoadError> {
    let alpha = r.f64()?;
    let grid_m = r.u32()? as usize;
    let xi = r.u32()? as usize;
    let delta = r.f64()?;
    let gari_counts = GariCounts { similar: r.u32()? as usize, random: r.u32()? as usize, dissimilar: r.u32()? as usize };
    let kappa_n = r.u32()? as usize;
    let kappa_r = r.u32()? as usize;
    let k = r.u32()? as usize;
    let metric = match r.u8()? {
        0 => MetricKind::Dtw,
        1 => MetricKind::Edr,
        2 => MetricKind::Erp,
        x => return Err(LoadError::Malformed(format!("metric code {x}"))),
    };
    let edr_eps = if r.flag()? { Some(r.f64()?) } else { None };
    let erp_gap = (r.f64()?, r.f64()?);
    let len = r.u32()? as usize;
    let scorer = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| LoadError::Malformed("scorer name is not UTF-8".into()))?;
    let seed = r.u64()?;
    let sim_transform = match r.u8()? {
        0 => SimTransform::Reciprocal,
        1 => SimTransform::Exponential,
        x => return Err(LoadError::Malformed(format!("transform code {x}"))),
    };
    let ground = match r.u8()? {
        0 => Ground::Planar,
        1 => Ground::Haversine,
        x => return Err(LoadError::Malformed(format!("ground code {x}"))),
    };
    let min_candidates = if r.flag()? { Some(r.u32()? as usize) } else { None };
    let ablation = Ablation { no_gari: r.flag()?, no_random: r.flag()?, no_record: r.flag()? };
    Ok(Config {
        alpha,
        grid_m,
        xi,
        delta,
        gari_counts,
        kappa_n,
        kappa_r,
        k,
        metric,
        edr_eps,
        erp_gap,
        scorer,
        seed,
        sim_transform,
        ground,
        min_candidates,
        ablation,
    })
}

fn get_edges(r: &mut Reader) -> Result<Vec<Edge>, LoadError> {
    let n = r.u32()? as usize;
    if n.saturating_mul(5) > r.buf.len() - r.pos {
        return Err(LoadError::Malformed(format!("edge count {n} exceeds the file")));
    }
    (0..n)
        .map(|_| {
            let to = TrajId(r.u32()?);
            let code = r.u8()?;
            let tag = EdgeTag::from_code(code).ok_or_else(|| LoadError::Malformed(format!("edge tag {code}")))?;
            Ok(Edge { to, tag })
        })
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LoadError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(LoadError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, LoadError> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool, LoadError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(LoadError::Malformed(format!("flag byte {x}"))),
        }
    }

    fn u32(&mut self) -> Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LoadError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LoadError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
