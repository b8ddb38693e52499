//! Binary field snapshots.
//!
//! Layout, all integers `u32` little-endian: the magic `NSKF`, version,
//! dim, n, field count; then per field the name length, the UTF-8 name and
//! `n^dim` little-endian `f64` values in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField, VectorField};
use crate::model::{FluidParams, PrimitiveState};

pub const MAGIC: [u8; 4] = *b"NSKF";
pub const VERSION: u32 = 1;

const MOMENTUM_NAMES: [&str; 3] = ["mom_x", "mom_y", "mom_z"];

/// Named scalar fields on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    grid: GridSpec,
    fields: Vec<(String, ScalarField)>,
}

impl Snapshot {
    pub fn new(grid: GridSpec, fields: Vec<(String, ScalarField)>) -> Result<Self> {
        if fields.iter().any(|(_, f)| f.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        if fields.len() > u32::MAX as usize || fields.iter().any(|(name, _)| name.len() > u32::MAX as usize) {
            return Err(Error::Snapshot("too many fields or name too long".into()));
        }
        Ok(Self { grid, fields })
    }

    /// `rho` and the momentum components `mom_x`, `mom_y`, `mom_z`.
    pub fn from_primitive(state: &PrimitiveState) -> Self {
        let mut fields = vec![("rho".to_string(), state.rho.clone())];
        for (a, c) in state.mom.comps().iter().enumerate() {
            fields.push((MOMENTUM_NAMES[a].to_string(), c.clone()));
        }
        Self { grid: state.grid(), fields }
    }

    /// Inverse of [`Snapshot::from_primitive`]; extra fields are ignored.
    pub fn to_primitive(&self, params: &FluidParams) -> Result<PrimitiveState> {
        let rho = self.field("rho").ok_or_else(|| Error::Snapshot("missing field rho".into()))?.clone();
        let comps = MOMENTUM_NAMES[..self.grid.dim()]
            .iter()
            .map(|name| self.field(name).cloned().ok_or_else(|| Error::Snapshot(format!("missing field {name}"))))
            .collect::<Result<Vec<_>>>()?;
        PrimitiveState::new(rho, VectorField::new(comps)?, params)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn fields(&self) -> &[(String, ScalarField)] {
        &self.fields
    }

    pub fn field(&self, name: &str) -> Option<&ScalarField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn encode(&self) -> Vec<u8> {
        let per_field = 8 * self.grid.len();
        let mut out = Vec::with_capacity(20 + self.fields.iter().map(|(n, _)| 4 + n.len() + per_field).sum::<usize>());
        out.extend_from_slice(&MAGIC);
        for v in [VERSION, self.grid.dim() as u32, self.grid.n() as u32, self.fields.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (name, f) in &self.fields {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for v in f.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a complete snapshot. A truncated input reports the offset of
    /// the first item that could not be read in full.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::MagicMismatch { found: magic });
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version });
        }
        let dim = cur.u32()? as usize;
        let n = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let grid = GridSpec::new(dim, n).map_err(|e| Error::Snapshot(e.to_string()))?;
        let mut fields = Vec::new();
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let at = cur.pos;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Snapshot(format!("field name at offset {at} is not UTF-8")))?
                .to_string();
            let raw = cur.take(8 * grid.len())?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            fields.push((name, ScalarField::new(grid, values)?));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Snapshot(format!("{} trailing bytes after offset {}", bytes.len() - cur.pos, cur.pos)));
        }
        Ok(Self { grid, fields })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::ShortRead { offset: self.pos }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
