//! Parameter files.
//!
//! Layout: magic `SDCKPT01`, a little-endian `u32` header length, a JSON
//! header, then for every array in header order a `u64` byte length and
//! an NPY payload, and finally the SHA-256 of all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{NetworkGraph, Variant};
use super::tensor::Real;
use crate::dataio::{decode_npy, encode_npy, write_atomic, NpyArray, NpyData};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SDCKPT01";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: Variant,
    pub n_in: usize,
    pub width_scale: f64,
    pub graph_hash: String,
    pub dtype: String,
    pub names: Vec<String>,
}

fn conv_layer_ids<T: Real>(net: &NetworkGraph<T>) -> Vec<usize> {
    use super::graph::LayerKind;
    net.layers()
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Conv3x3 { .. }))
        .map(|l| l.id)
        .collect()
}

fn to_npy<T: Real>(shape: Vec<usize>, v: &[T]) -> NpyArray {
    let data = if T::DESCR == "<f4" {
        NpyData::F32(v.iter().map(|x| x.as_f64() as f32).collect())
    } else {
        NpyData::F64(v.iter().map(|x| x.as_f64()).collect())
    };
    NpyArray { shape, data }
}

fn from_npy<T: Real>(a: &NpyArray, shape: &[usize], name: &str) -> Result<Vec<T>> {
    if a.shape != shape {
        return Err(Error::GraphMismatch(format!("{name} has shape {:?}, expected {shape:?}", a.shape)));
    }
    match (&a.data, T::DESCR) {
        (NpyData::F32(v), "<f4") => Ok(v.iter().map(|&x| T::of(x as f64)).collect()),
        (NpyData::F64(v), "<f8") => Ok(v.iter().map(|&x| T::of(x)).collect()),
        _ => Err(Error::Checkpoint(format!("{name} dtype differs from the network's {}", T::DESCR))),
    }
}

pub fn encode_checkpoint<T: Real>(net: &NetworkGraph<T>) -> Result<Vec<u8>> {
    let ids = conv_layer_ids(net);
    let mut names = Vec::new();
    let mut arrays = Vec::new();
    for (id, p) in ids.iter().zip(net.params()) {
        names.push(format!("layer{id}.weight"));
        arrays.push(to_npy(vec![p.out_channels, p.in_channels, 3, 3], &p.weight));
        names.push(format!("layer{id}.bias"));
        arrays.push(to_npy(vec![p.out_channels], &p.bias));
    }
    let header = CheckpointHeader {
        variant: net.variant(),
        n_in: net.n_in(),
        width_scale: net.width_scale(),
        graph_hash: net.graph_hash(),
        dtype: T::DESCR.to_string(),
        names,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for a in &arrays {
        let bytes = encode_npy(a);
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "checkpoint ends inside {what} ({} of {n} bytes present)",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Parses and verifies a checkpoint; returns the header and the arrays in
/// header order.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<NpyArray>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let len = u32::from_le_bytes(r.take(4, "header length")?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let mut payloads = Vec::with_capacity(header.names.len());
    for name in &header.names {
        let n = u64::from_le_bytes(r.take(8, name)?.try_into().unwrap());
        payloads.push(r.take(usize::try_from(n).unwrap_or(usize::MAX), name)?);
    }
    let body_end = r.pos;
    let digest = r.take(DIGEST_LEN, "checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch: file is corrupted".into()));
    }
    let arrays = payloads.into_iter().map(decode_npy).collect::<Result<Vec<_>>>()?;
    Ok((header, arrays))
}

/// Loads parameters into `net`, refusing any topology or dtype mismatch.
pub fn load_params_bytes<T: Real>(net: &mut NetworkGraph<T>, bytes: &[u8]) -> Result<()> {
    let (header, arrays) = decode_checkpoint(bytes)?;
    if header.variant != net.variant() || header.n_in != net.n_in() || header.graph_hash != net.graph_hash() {
        return Err(Error::GraphMismatch(format!(
            "checkpoint is a {:?} net with n_in = {}, network is {:?} with n_in = {}",
            header.variant,
            header.n_in,
            net.variant(),
            net.n_in()
        )));
    }
    if header.dtype != T::DESCR {
        return Err(Error::Checkpoint(format!("checkpoint dtype {} differs from {}", header.dtype, T::DESCR)));
    }
    let ids = conv_layer_ids(net);
    let mut params = net.params().to_vec();
    if arrays.len() != 2 * params.len() {
        return Err(Error::GraphMismatch(format!("{} arrays for {} conv layers", arrays.len(), params.len())));
    }
    for (k, (id, p)) in ids.iter().zip(params.iter_mut()).enumerate() {
        let (wn, bn) = (format!("layer{id}.weight"), format!("layer{id}.bias"));
        if header.names[2 * k] != wn || header.names[2 * k + 1] != bn {
            return Err(Error::GraphMismatch(format!("expected arrays {wn} and {bn}")));
        }
        p.weight = from_npy(&arrays[2 * k], &[p.out_channels, p.in_channels, 3, 3], &wn)?;
        p.bias = from_npy(&arrays[2 * k + 1], &[p.out_channels], &bn)?;
    }
    net.copy_params_from(&params)
}

pub fn save_params<T: Real>(net: &NetworkGraph<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(net)?)
}

pub fn load_params<T: Real>(net: &mut NetworkGraph<T>, path: impl AsRef<Path>) -> Result<()> {
    load_params_bytes(net, &std::fs::read(path)?)
}

/// Rebuilds the network described by a checkpoint header and loads it.
pub fn from_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<NetworkGraph<T>> {
    let bytes = std::fs::read(path)?;
    let (header, _) = decode_checkpoint(&bytes)?;
    let mut net = NetworkGraph::build(header.variant, header.n_in, header.width_scale)?;
    load_params_bytes(&mut net, &bytes)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{build_microscopy_unet, build_mri_unet, Tensor4};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = build_microscopy_unet::<f32>(3, 0.25).unwrap();
        net.init_he(7);
        let bytes = encode_checkpoint(&net).unwrap();
        let mut other = build_microscopy_unet::<f32>(3, 0.25).unwrap();
        load_params_bytes(&mut other, &bytes).unwrap();
        assert_eq!(other.params(), net.params());
        let x = Tensor4::<f32>::from_fn([1, 3, 16, 16], |[_, c, y, x]| (c + y * x) as f32 * 0.01);
        assert_eq!(net.forward_inference(&x).unwrap(), other.forward_inference(&x).unwrap());
    }

    #[test]
    fn topology_guard() {
        let net = build_mri_unet::<f32>(3, 0.25).unwrap();
        let bytes = encode_checkpoint(&net).unwrap();
        let mut other = build_mri_unet::<f32>(5, 0.25).unwrap();
        assert!(matches!(load_params_bytes(&mut other, &bytes), Err(Error::GraphMismatch(_))));
        let mut f64_net = build_mri_unet::<f64>(3, 0.25).unwrap();
        assert!(load_params_bytes(&mut f64_net, &bytes).is_err());
    }

    #[test]
    fn truncation_and_corruption_detected() {
        let net = build_mri_unet::<f32>(1, 0.25).unwrap();
        let bytes = encode_checkpoint(&net).unwrap();
        let mut other = net.clone();
        for cut in [1, 5, DIGEST_LEN + 3, bytes.len() / 2, bytes.len() - 10] {
            let r = load_params_bytes(&mut other, &bytes[..bytes.len() - cut]);
            assert!(matches!(r, Err(Error::Truncated(_))), "cut {cut}: {r:?}");
        }
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 40] ^= 0x55;
        assert!(matches!(load_params_bytes(&mut other, &bad), Err(Error::Checkpoint(_))));
    }
}
