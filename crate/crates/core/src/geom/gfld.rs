//! GFLD dense array files.
//!
//! Layout (little-endian): the magic `GFLD`, one dtype byte (0 = f32, 1 = f64),
//! a `u32` rank, `rank` `u32` dimensions, then the row-major payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::GeomError;

pub const MAGIC: &[u8; 4] = b"GFLD";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfldArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfldHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

impl GfldArray {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self { dtype, shape, data }
    }

    pub fn matrix(dtype: Dtype, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(dtype, vec![rows, cols], data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.shape.len() + self.data.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.push(self.dtype as u8);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match self.dtype {
            Dtype::F32 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Dtype::F64 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeomError> {
        let mut r = bytes;
        let header = read_header(&mut r)?;
        let count: usize = header.shape.iter().product();
        let need = count * header.dtype.size();
        if r.len() != need {
            return Err(parse_err(format!(
                "payload has {} bytes, expected {need}",
                r.len()
            )));
        }
        let data = match header.dtype {
            Dtype::F32 => r
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => r
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Ok(Self {
            dtype: header.dtype,
            shape: header.shape,
            data,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GeomError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, GeomError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn header(&self) -> GfldHeader {
        GfldHeader {
            dtype: self.dtype,
            shape: self.shape.clone(),
        }
    }
}

fn parse_err(msg: String) -> GeomError {
    GeomError::ParseError { line: 0, msg }
}

fn read_header(r: &mut impl Read) -> Result<GfldHeader, GeomError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| parse_err("truncated GFLD header".into()))?;
    if &magic != MAGIC {
        return Err(parse_err("missing GFLD magic".into()));
    }
    let mut b1 = [0u8; 1];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b1)
        .map_err(|_| parse_err("truncated GFLD header".into()))?;
    let dtype = Dtype::from_code(b1[0]).ok_or_else(|| parse_err(format!("unknown dtype code {}", b1[0])))?;
    r.read_exact(&mut b4)
        .map_err(|_| parse_err("truncated GFLD header".into()))?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank > 16 {
        return Err(parse_err(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut b4)
            .map_err(|_| parse_err("truncated GFLD dims".into()))?;
        shape.push(u32::from_le_bytes(b4) as usize);
    }
    Ok(GfldHeader { dtype, shape })
}

/// Reads only the header of a GFLD file.
pub fn read_gfld_header(path: impl AsRef<Path>) -> Result<GfldHeader, GeomError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r)
}
