//! `.pvec` checkpoint files: one line of JSON describing the layout,
//! terminated by `\n`, followed by the values as little-endian `f64`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, ParamVector};
use crate::error::{Error, Result};

const FORMAT: &str = "pvec";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    len: usize,
    layout: Layout,
}

pub fn encode_pvec(params: &ParamVector) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        len: params.len(),
        layout: params.layout().clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(params.len() * 8);
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_pvec(bytes: &[u8]) -> Result<ParamVector> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::invalid("pvec header is not terminated"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::invalid(format!("unsupported pvec header {} v{}", header.format, header.version)));
    }
    let body = &bytes[nl + 1..];
    if body.len() != header.len * 8 {
        return Err(Error::DimensionMismatch { context: "pvec payload bytes", expected: header.len * 8, got: body.len() });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ParamVector::new(values, header.layout)
}

pub fn write_pvec(path: impl AsRef<Path>, params: &ParamVector) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pvec(params)?)?;
    Ok(())
}

pub fn read_pvec(path: impl AsRef<Path>) -> Result<ParamVector> {
    decode_pvec(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mlp_init, Activation, MlpConfig};
    use proptest::prelude::*;

    #[test]
    fn mlp_checkpoint_roundtrip() {
        let cfg = MlpConfig::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let p = mlp_init(&cfg, 4).unwrap();
        assert_eq!(decode_pvec(&encode_pvec(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let p = ParamVector::from_flat(vec![1.0, 2.0]);
        let mut bytes = encode_pvec(&p).unwrap();
        bytes.pop();
        assert!(decode_pvec(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn flat_roundtrip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let p = ParamVector::from_flat(values);
            let q = decode_pvec(&encode_pvec(&p).unwrap()).unwrap();
            let same = p.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same && p.len() == q.len());
        }
    }
}
