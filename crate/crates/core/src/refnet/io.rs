//! `IIBN` network files: magic, `u16` version, `u16` layer count, then per
//! layer `u16` kernel, `u16` in, `u16` out, `u8` activation and the weights
//! followed by the biases as little-endian `f64`.

use std::fs;
use std::path::Path;

use crate::bytes::Reader;
use crate::error::{Error, Result};

use super::{Activation, ConvLayer, Network};

pub const NETWORK_MAGIC: [u8; 4] = *b"IIBN";
pub const NETWORK_VERSION: u16 = 1;

fn narrow(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidArchitecture(format!("{what} {v} exceeds u16")))
}

pub fn encode_network(net: &Network) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + net.param_count() * 8 + net.layers().len() * 7);
    out.extend_from_slice(&NETWORK_MAGIC);
    out.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
    out.extend_from_slice(&narrow(net.layers().len(), "layer count")?.to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&narrow(l.kernel, "kernel")?.to_le_bytes());
        out.extend_from_slice(&narrow(l.in_channels, "in channels")?.to_le_bytes());
        out.extend_from_slice(&narrow(l.out_channels, "out channels")?.to_le_bytes());
        out.push(l.activation.code());
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_network(buf: &[u8]) -> Result<Network> {
    let mut rd = Reader::new(buf);
    rd.magic(NETWORK_MAGIC)?;
    let version = rd.u16()?;
    if version != NETWORK_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = rd.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let kernel = rd.u16()? as usize;
        let in_channels = rd.u16()? as usize;
        let out_channels = rd.u16()? as usize;
        let code = rd.u8()?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::ArchitectureMismatch(format!("unknown activation code {code}")))?;
        let n_weights = out_channels * in_channels * kernel * kernel;
        rd.require((n_weights + out_channels) * 8)?;
        let weights = (0..n_weights).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        let biases = (0..out_channels).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        let layer = ConvLayer::new(kernel, in_channels, out_channels, weights, biases, activation)
            .map_err(as_mismatch)?;
        layers.push(layer);
    }
    rd.finish()?;
    Network::new(layers).map_err(as_mismatch)
}

fn as_mismatch(e: Error) -> Error {
    match e {
        Error::InvalidArchitecture(msg) => Error::ArchitectureMismatch(msg),
        other => other,
    }
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    fs::write(path, encode_network(net)?)?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    decode_network(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use crate::refnet::{init_default_network, init_network};

    #[test]
    fn roundtrip_is_bitwise() {
        let net = init_default_network(4, 21).unwrap();
        let back = decode_network(&encode_network(&net).unwrap()).unwrap();
        let bits = |n: &Network| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
        assert_eq!(back, net);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.iibn");
        let net = init_network(5, &[6, 5], &[3, 1], 2).unwrap();
        save_network(&path, &net).unwrap();
        assert_eq!(load_network(&path).unwrap(), net);
    }

    #[test]
    fn header_layout() {
        let net = init_network(2, &[3, 2], &[3, 1], 0).unwrap();
        let b = encode_network(&net).unwrap();
        assert_eq!(&b[..4], b"IIBN");
        assert_eq!(&b[4..8], &[1, 0, 2, 0]);
        // First layer: k=3, in=3, out=3, relu.
        assert_eq!(&b[8..15], &[3, 0, 3, 0, 3, 0, 1]);
        assert_eq!(b.len(), 8 + 7 + (81 + 3) * 8 + 7 + (6 + 2) * 8);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut b = encode_network(&init_default_network(4, 0).unwrap()).unwrap();
        assert!(matches!(decode_network(&b[..b.len() - 3]), Err(Error::Truncated { .. })));
        assert!(matches!(decode_network(&b[..6]), Err(Error::Truncated { .. })));
        b[0] = b'X';
        assert!(matches!(decode_network(&b), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn rejects_inconsistent_architecture() {
        let mut b = encode_network(&init_network(2, &[3, 2], &[1, 1], 0).unwrap()).unwrap();
        // Second layer header starts after the first layer block; bump its in-channel count.
        let second = 8 + 7 + (3 * 3 + 3) * 8;
        b[second + 2] = 4;
        let extra = vec![0u8; 2 * 8];
        b.extend_from_slice(&extra);
        assert!(matches!(decode_network(&b), Err(Error::ArchitectureMismatch(_))));
    }

    #[test]
    fn four_band_net_on_five_band_task() {
        let net = decode_network(&encode_network(&init_default_network(4, 0).unwrap()).unwrap()).unwrap();
        let err = net.forward(&Raster::zeros(5, 8, 8), &Raster::zeros(1, 8, 8)).unwrap_err();
        assert!(matches!(err, Error::ArchitectureMismatch(_)));
    }
}
