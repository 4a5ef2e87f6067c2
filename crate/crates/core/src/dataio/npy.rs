//! NPY v1.0 container for little-endian `f4` / `f8` C-order arrays.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Npy(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_plane(plane: &Array2<f64>) -> Self {
        let (h, w) = plane.dim();
        Self {
            shape: vec![h, w],
            data: NpyData::F64(plane.iter().copied().collect()),
        }
    }

    pub fn from_plane_f32(plane: &Array2<f64>) -> Self {
        let (h, w) = plane.dim();
        Self {
            shape: vec![h, w],
            data: NpyData::F32(plane.iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F64(v) => v.clone(),
        }
    }

    pub fn to_plane(&self) -> Result<Array2<f64>> {
        let [h, w] = self.shape[..] else {
            return Err(Error::Npy(format!("expected a 2D array, found shape {:?}", self.shape)));
        };
        Array2::from_shape_vec((h, w), self.to_f64()).map_err(|e| Error::Npy(e.to_string()))
    }
}

pub fn encode_npy(array: &NpyArray) -> Vec<u8> {
    let shape = match array.shape.len() {
        1 => format!("({},)", array.shape[0]),
        _ => format!(
            "({})",
            array.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.data.descr(),
        shape
    );
    // magic + version + u16 length + header + '\n' is padded to 64 bytes
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + array.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &array.data {
        NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("bad magic bytes".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        _ => return Err(Error::Npy(format!("unsupported format version {major}.{minor}"))),
    };
    let data_start = start + header_len;
    if bytes.len() < data_start {
        return Err(Error::Npy("header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[start..data_start])
        .map_err(|_| Error::Npy("header is not valid text".into()))?;
    let (descr, fortran, shape) = parse_header(header)?;
    if fortran {
        return Err(Error::Npy("fortran_order arrays are not supported".into()));
    }
    let itemsize = match descr.as_str() {
        "<f4" => 4,
        "<f8" => 8,
        other => return Err(Error::Npy(format!("unsupported dtype '{other}' (expected <f4 or <f8)"))),
    };
    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    if payload.len() != count * itemsize {
        return Err(Error::LengthMismatch {
            expected: count * itemsize,
            found: payload.len(),
        });
    }
    let data = if itemsize == 4 {
        NpyData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        NpyData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    };
    Ok(NpyArray { shape, data })
}

fn parse_header(header: &str) -> Result<(String, bool, Vec<usize>)> {
    let bad = |what: &str| Error::Npy(format!("header parse failure: {what}"));
    let body = header.trim();
    if !body.starts_with('{') || !body.ends_with('}') {
        return Err(bad("not a dictionary"));
    }
    let value_after = |key: &str| -> Result<&str> {
        let pat = format!("'{key}':");
        let pos = body.find(&pat).ok_or_else(|| bad(&format!("missing key '{key}'")))?;
        Ok(body[pos + pat.len()..].trim_start())
    };

    let descr_rest = value_after("descr")?;
    let quote = descr_rest.chars().next().filter(|c| *c == '\'' || *c == '"').ok_or_else(|| bad("descr"))?;
    let end = descr_rest[1..].find(quote).ok_or_else(|| bad("descr"))?;
    let descr = descr_rest[1..1 + end].to_string();

    let fortran_rest = value_after("fortran_order")?;
    let fortran = if fortran_rest.starts_with("False") {
        false
    } else if fortran_rest.starts_with("True") {
        true
    } else {
        return Err(bad("fortran_order"));
    };

    let shape_rest = value_after("shape")?;
    if !shape_rest.starts_with('(') {
        return Err(bad("shape"));
    }
    let close = shape_rest.find(')').ok_or_else(|| bad("shape"))?;
    let shape = shape_rest[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad("shape entry")))
        .collect::<Result<Vec<_>>>()?;
    Ok((descr, fortran, shape))
}

pub fn read_array(path: impl AsRef<Path>) -> Result<NpyArray> {
    decode_npy(&std::fs::read(path)?)
}

pub fn write_array(path: impl AsRef<Path>, array: &NpyArray) -> Result<()> {
    super::write_atomic(path.as_ref(), &encode_npy(array))
}

pub fn read_plane(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_array(path)?.to_plane()
}

/// Writes a plane as `<f8`.
pub fn write_plane(path: impl AsRef<Path>, plane: &Array2<f64>) -> Result<()> {
    write_array(path, &NpyArray::from_plane(plane))
}
