//! LEB128 varints and zigzag mapping.

use crate::error::{Error, Result};

pub fn write_uvarint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn read_uvarint(buf: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *buf
            .get(*pos)
            .ok_or_else(|| Error::CorruptStream("truncated varint".into()))?;
        *pos += 1;
        if shift == 63 && b > 1 {
            return Err(Error::CorruptStream("varint overflow".into()));
        }
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::CorruptStream("varint too long".into()))
}

#[inline]
pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

#[inline]
pub fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub fn write_zigzag(out: &mut Vec<u8>, v: i64) {
    write_uvarint(out, zigzag(v));
}

pub fn read_zigzag(buf: &[u8], pos: &mut usize) -> Result<i64> {
    read_uvarint(buf, pos).map(unzigzag)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn zigzag_small_values() {
        assert_eq!(zigzag(0), 0);
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
        assert_eq!(zigzag(-2), 3);
    }

    #[test]
    fn truncated_varint_is_corrupt() {
        let mut pos = 0;
        assert!(read_uvarint(&[0x80, 0x80], &mut pos).is_err());
    }

    proptest! {
        #[test]
        fn varint_roundtrip(v in any::<i64>()) {
            let mut buf = Vec::new();
            write_zigzag(&mut buf, v);
            let mut pos = 0;
            prop_assert_eq!(read_zigzag(&buf, &mut pos).unwrap(), v);
            prop_assert_eq!(pos, buf.len());
        }
    }
}
