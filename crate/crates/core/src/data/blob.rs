//! Little-endian f64 payload encoding shared by datasets and checkpoints.

use sha2::{Digest, Sha256};

use crate::autodiff::C64;

pub(crate) fn push_real(buf: &mut Vec<u8>, v: &[f64]) {
    buf.reserve(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub(crate) fn push_complex(buf: &mut Vec<u8>, v: &[C64]) {
    buf.reserve(v.len() * 16);
    for z in v {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

pub(crate) fn read_real(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

pub(crate) fn read_complex(bytes: &[u8]) -> Vec<C64> {
    read_real(bytes)
        .chunks_exact(2)
        .map(|p| C64::new(p[0], p[1]))
        .collect()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `"MAJOR.MINOR"` and returns the major component.
pub(crate) fn major_version(v: &str) -> Option<u32> {
    let (major, minor) = v.split_once('.')?;
    minor.parse::<u32>().ok()?;
    major.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let reals = [0.0, -0.0, 1.5, f64::MIN_POSITIVE, 1e300];
        let mut buf = Vec::new();
        push_real(&mut buf, &reals);
        let back = read_real(&buf);
        assert!(reals
            .iter()
            .zip(&back)
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        let z = [C64::new(1.0, -2.0), C64::new(3.25, 0.1)];
        let mut buf = Vec::new();
        push_complex(&mut buf, &z);
        assert_eq!(buf.len(), 32);
        assert_eq!(read_complex(&buf), z);
        assert_eq!(&buf[..8], &1.0f64.to_le_bytes());
    }

    #[test]
    fn versions() {
        assert_eq!(major_version("1.0"), Some(1));
        assert_eq!(major_version("12.3"), Some(12));
        assert_eq!(major_version("1"), None);
        assert_eq!(major_version("x.0"), None);
    }
}
