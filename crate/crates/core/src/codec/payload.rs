use super::varint::{read_uvarint, write_uvarint};
use super::{ac_decode, ac_encode};
use crate::error::{Error, Result};
use crate::quant::FrequencyTable;

/// Whether a payload's symbols are absolute latents or residuals against the previous group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentKind {
    Absolute = 0,
    Residual = 1,
}

/// One arithmetic-coded MLP tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorPayload {
    pub scale: f32,
    pub table: FrequencyTable,
    pub coded: Vec<u8>,
}

impl TensorPayload {
    pub fn encode(scale: f32, symbols: &[i64]) -> Result<Self> {
        let table = FrequencyTable::build(symbols)?;
        let coded = ac_encode(symbols, &table)?;
        Ok(Self {
            scale,
            table,
            coded,
        })
    }

    pub fn decode_symbols(&self, count: usize) -> Result<Vec<i64>> {
        ac_decode(&self.coded, &self.table, count)
    }
}

/// Everything the decoder needs for one frame group.
///
/// Body layout: `u32 group index`, `u8 kind`, `u16 tensor count`, then per
/// tensor `f32 scale`, frequency table, `varint length`, coded bytes; then
/// `u8 head mode`, `varint length`, head bytes. Little-endian throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPayload {
    pub group_index: u32,
    pub kind: LatentKind,
    pub tensors: Vec<TensorPayload>,
    /// One of the `HEAD_*` modes in [`super::head`].
    pub head_mode: u8,
    pub head: Vec<u8>,
}

impl GroupPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.group_index.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.tensors.len() as u16).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&t.scale.to_le_bytes());
            t.table.write(&mut out);
            write_uvarint(&mut out, t.coded.len() as u64);
            out.extend_from_slice(&t.coded);
        }
        out.push(self.head_mode);
        write_uvarint(&mut out, self.head.len() as u64);
        out.extend_from_slice(&self.head);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let group_index = u32::from_le_bytes(take::<4>(buf, &mut pos)?);
        let kind = match take::<1>(buf, &mut pos)?[0] {
            0 => LatentKind::Absolute,
            1 => LatentKind::Residual,
            k => return Err(Error::CorruptStream(format!("unknown latent kind {k}"))),
        };
        let n = u16::from_le_bytes(take::<2>(buf, &mut pos)?) as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let scale = f32::from_le_bytes(take::<4>(buf, &mut pos)?);
            let table = FrequencyTable::read(buf, &mut pos)?;
            let coded = take_vec(buf, &mut pos)?;
            tensors.push(TensorPayload {
                scale,
                table,
                coded,
            });
        }
        let head_mode = take::<1>(buf, &mut pos)?[0];
        let head = take_vec(buf, &mut pos)?;
        if pos != buf.len() {
            return Err(Error::CorruptStream("trailing bytes in group payload".into()));
        }
        Ok(Self {
            group_index,
            kind,
            tensors,
            head_mode,
            head,
        })
    }
}

fn take<const N: usize>(buf: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let end = pos
        .checked_add(N)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::CorruptStream("payload truncated".into()))?;
    let mut a = [0u8; N];
    a.copy_from_slice(&buf[*pos..end]);
    *pos = end;
    Ok(a)
}

fn take_vec(buf: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    let len = read_uvarint(buf, pos)? as usize;
    let end = pos
        .checked_add(len)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::CorruptStream("payload block truncated".into()))?;
    let v = buf[*pos..end].to_vec();
    *pos = end;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GroupPayload {
        GroupPayload {
            group_index: 3,
            kind: LatentKind::Residual,
            tensors: vec![
                TensorPayload::encode(0.02, &[0, 0, 1, -1, 0, 0]).unwrap(),
                TensorPayload::encode(-1.5, &[5]).unwrap(),
            ],
            head_mode: 1,
            head: vec![9, 8, 7],
        }
    }

    #[test]
    fn payload_roundtrip() {
        let p = sample();
        let bytes = p.to_bytes();
        let back = GroupPayload::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.tensors[0].decode_symbols(6).unwrap(), vec![0, 0, 1, -1, 0, 0]);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = sample().to_bytes();
        for cut in 1..bytes.len() {
            assert!(GroupPayload::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }
}
