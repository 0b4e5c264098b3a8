//! Versioned bitstream container.
//!
//! ```text
//! "NIRV" | u16 version | u32 N | u16 H | u16 W | u8 H_p | u8 W_p | u8 G
//! [16] config digest | u16 chunk count
//! chunk count × (u32 first group | u32 group count | u64 payload offset)
//! u32 config block length | config block | u32 CRC32 of all preceding bytes
//! payloads: u32 body length | body | u32 CRC32(body)
//! ```
//! All integers little-endian. Offsets are absolute file positions of the
//! first payload of each chunk.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"NIRV";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkEntry {
    pub first_group: u32,
    pub group_count: u32,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitstreamHeader {
    pub num_frames: u32,
    pub height: u16,
    pub width: u16,
    pub patch_h: u8,
    pub patch_w: u8,
    pub group_size: u8,
    pub config_digest: [u8; 16],
    /// Offsets are filled in by [`encode_container`].
    pub chunks: Vec<ChunkEntry>,
    /// Serialized model configuration and encoder settings.
    pub config_block: Vec<u8>,
}

impl BitstreamHeader {
    pub fn num_groups(&self) -> usize {
        (self.num_frames as usize).div_ceil(self.group_size.max(1) as usize)
    }

    fn encoded_len(&self) -> usize {
        4 + 2 + 4 + 2 + 2 + 3 + 16 + 2 + self.chunks.len() * 16 + 4 + self.config_block.len() + 4
    }

    fn write(&self, out: &mut Vec<u8>) {
        let start = out.len();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.num_frames.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&[self.patch_h, self.patch_w, self.group_size]);
        out.extend_from_slice(&self.config_digest);
        out.extend_from_slice(&(self.chunks.len() as u16).to_le_bytes());
        for c in &self.chunks {
            out.extend_from_slice(&c.first_group.to_le_bytes());
            out.extend_from_slice(&c.group_count.to_le_bytes());
            out.extend_from_slice(&c.offset.to_le_bytes());
        }
        out.extend_from_slice(&(self.config_block.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.config_block);
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
}

/// Serializes the header and payloads. `payloads[c]` holds the group bodies of chunk `c`.
pub fn encode_container(header: &BitstreamHeader, payloads: &[Vec<Vec<u8>>]) -> Result<Vec<u8>> {
    if payloads.len() != header.chunks.len() {
        return Err(Error::InvalidConfig(format!(
            "{} chunk entries but {} payload lists",
            header.chunks.len(),
            payloads.len()
        )));
    }
    let mut header = header.clone();
    let mut offset = header.encoded_len() as u64;
    let mut next_group = 0u32;
    for (entry, groups) in header.chunks.iter_mut().zip(payloads) {
        if entry.group_count as usize != groups.len() || entry.first_group != next_group {
            return Err(Error::InvalidConfig(format!(
                "chunk entry {entry:?} does not match {} payloads starting at group {next_group}",
                groups.len()
            )));
        }
        next_group += entry.group_count;
        entry.offset = offset;
        offset += groups.iter().map(|g| g.len() as u64 + 8).sum::<u64>();
    }
    if next_group as usize != header.num_groups() {
        return Err(Error::InvalidConfig(format!(
            "chunks cover {next_group} groups, stream needs {}",
            header.num_groups()
        )));
    }
    let mut out = Vec::with_capacity(offset as usize);
    header.write(&mut out);
    for body in payloads.iter().flatten() {
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(&crc32fast::hash(body).to_le_bytes());
    }
    Ok(out)
}

/// Writes the container to `path`, replacing any existing file only on success.
pub fn write_container(
    header: &BitstreamHeader,
    payloads: &[Vec<Vec<u8>>],
    path: impl AsRef<Path>,
) -> Result<()> {
    let bytes = encode_container(header, payloads)?;
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A parsed stream. Payloads are located lazily through the chunk table.
#[derive(Clone, Debug)]
pub struct Container {
    pub header: BitstreamHeader,
    /// Size of the header in bytes, including its checksum.
    pub header_len: usize,
    bytes: Vec<u8>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptStream("stream truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

pub fn read_container(bytes: Vec<u8>) -> Result<Container> {
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.bytes(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let num_frames = r.u32()?;
    let height = r.u16()?;
    let width = r.u16()?;
    let patch_h = r.u8()?;
    let patch_w = r.u8()?;
    let group_size = r.u8()?;
    let config_digest: [u8; 16] = r.bytes(16)?.try_into().unwrap();
    let n_chunks = r.u16()? as usize;
    let mut chunks = Vec::with_capacity(n_chunks);
    for _ in 0..n_chunks {
        chunks.push(ChunkEntry {
            first_group: r.u32()?,
            group_count: r.u32()?,
            offset: r.u64()?,
        });
    }
    let block_len = r.u32()? as usize;
    let config_block = r.bytes(block_len)?.to_vec();
    let header_end = r.pos;
    let crc = r.u32()?;
    if crc != crc32fast::hash(&bytes[..header_end]) {
        return Err(Error::CorruptStream("header checksum mismatch".into()));
    }
    let header = BitstreamHeader {
        num_frames,
        height,
        width,
        patch_h,
        patch_w,
        group_size,
        config_digest,
        chunks,
        config_block,
    };
    validate_chunk_table(&header, r.pos as u64, bytes.len() as u64)?;
    Ok(Container {
        header,
        header_len: r.pos,
        bytes,
    })
}

fn validate_chunk_table(h: &BitstreamHeader, header_len: u64, file_len: u64) -> Result<()> {
    if h.group_size == 0 {
        return Err(Error::CorruptStream("zero group size".into()));
    }
    let mut next_group = 0u32;
    let mut last_offset = None;
    for c in &h.chunks {
        if c.first_group != next_group || c.group_count == 0 {
            return Err(Error::CorruptStream("chunk table is not contiguous".into()));
        }
        if c.offset < header_len || c.offset > file_len || last_offset.is_some_and(|o| c.offset <= o) {
            return Err(Error::CorruptStream("chunk offsets out of order".into()));
        }
        last_offset = Some(c.offset);
        next_group += c.group_count;
    }
    if next_group as usize != h.num_groups() {
        return Err(Error::CorruptStream(format!(
            "chunk table covers {next_group} groups, expected {}",
            h.num_groups()
        )));
    }
    Ok(())
}

pub fn read_container_file(path: impl AsRef<Path>) -> Result<Container> {
    read_container(fs::read(path)?)
}

impl Container {
    pub fn file_len(&self) -> usize {
        self.bytes.len()
    }

    /// Checksummed payload bodies of chunk `c`, found through the offset table.
    pub fn chunk_payloads(&self, c: usize) -> Result<Vec<&[u8]>> {
        let entry = self
            .header
            .chunks
            .get(c)
            .ok_or_else(|| Error::InvalidConfig(format!("no chunk {c}")))?;
        let mut r = Reader {
            buf: &self.bytes,
            pos: entry.offset as usize,
        };
        let mut out = Vec::with_capacity(entry.group_count as usize);
        for _ in 0..entry.group_count {
            let len = r.u32()? as usize;
            let body = r.bytes(len)?;
            let crc = r.u32()?;
            if crc != crc32fast::hash(body) {
                return Err(Error::CorruptStream("payload checksum mismatch".into()));
            }
            out.push(body);
        }
        if let Some(next) = self.header.chunks.get(c + 1) {
            if r.pos as u64 != next.offset {
                return Err(Error::CorruptStream("chunk overruns its successor".into()));
            }
        } else if r.pos != self.bytes.len() {
            return Err(Error::CorruptStream("trailing bytes after last chunk".into()));
        }
        Ok(out)
    }

    /// Framed size (length prefix + body + checksum) of every payload, in group order.
    pub fn payload_sizes(&self) -> Result<Vec<usize>> {
        let mut sizes = Vec::new();
        for c in 0..self.header.chunks.len() {
            sizes.extend(self.chunk_payloads(c)?.iter().map(|b| b.len() + 8));
        }
        Ok(sizes)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn header(chunks: &[u32], frames: u32, group: u8) -> BitstreamHeader {
        let mut first = 0;
        BitstreamHeader {
            num_frames: frames,
            height: 64,
            width: 96,
            patch_h: 32,
            patch_w: 32,
            group_size: group,
            config_digest: [7; 16],
            chunks: chunks
                .iter()
                .map(|&n| {
                    let e = ChunkEntry {
                        first_group: first,
                        group_count: n,
                        offset: 0,
                    };
                    first += n;
                    e
                })
                .collect(),
            config_block: b"cfg".to_vec(),
        }
    }

    fn random_payloads(chunks: &[u32], rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<u8>>> {
        chunks
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| (0..rng.gen_range(1..100)).map(|_| rng.gen()).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn header_only_roundtrip() {
        let h = header(&[], 0, 3);
        let bytes = encode_container(&h, &[]).unwrap();
        let c = read_container(bytes.clone()).unwrap();
        assert_eq!(c.header, h);
        assert_eq!(c.header_len, bytes.len());
    }

    #[test]
    fn two_chunks_roundtrip_and_addressable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = header(&[3, 3], 18, 3);
        let payloads = random_payloads(&[3, 3], &mut rng);
        let bytes = encode_container(&h, &payloads).unwrap();
        let again = encode_container(&h, &payloads).unwrap();
        assert_eq!(bytes, again);
        let c = read_container(bytes.clone()).unwrap();
        assert_eq!(c.header.config_block, h.config_block);
        assert_eq!(c.header.num_frames, 18);
        for (i, chunk) in payloads.iter().enumerate() {
            let got: Vec<Vec<u8>> = c.chunk_payloads(i).unwrap().iter().map(|b| b.to_vec()).collect();
            assert_eq!(&got, chunk);
        }
        let total: usize = c.payload_sizes().unwrap().iter().sum();
        assert_eq!(total + c.header_len, bytes.len());
    }

    #[test]
    fn every_header_byte_flip_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = header(&[2, 1], 9, 3);
        let payloads = random_payloads(&[2, 1], &mut rng);
        let bytes = encode_container(&h, &payloads).unwrap();
        let header_len = read_container(bytes.clone()).unwrap().header_len;
        for i in 0..header_len {
            let mut bad = bytes.clone();
            bad[i] ^= 0x5a;
            match read_container(bad) {
                Err(Error::BadMagic) | Err(Error::CorruptStream(_)) | Err(Error::UnsupportedVersion(_)) => {}
                other => panic!("flip at {i} gave {other:?}"),
            }
        }
    }

    #[test]
    fn payload_flip_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = header(&[1], 3, 3);
        let payloads = random_payloads(&[1], &mut rng);
        let mut bytes = encode_container(&h, &payloads).unwrap();
        let n = bytes.len();
        bytes[n - 6] ^= 1;
        let c = read_container(bytes).unwrap();
        assert!(matches!(c.chunk_payloads(0), Err(Error::CorruptStream(_))));
    }

    #[test]
    fn mismatched_chunk_table_rejected() {
        let h = header(&[2], 9, 3);
        assert!(encode_container(&h, &[vec![vec![1], vec![2]]]).is_err());
    }
}
