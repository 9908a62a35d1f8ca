//! GSV: a raw GOP-sequence video container.
//!
//! The simulator writes shared videos in this format so the toolchain can
//! round-trip frame types and pixels without an external codec. Layout,
//! all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "GSV1"
//! hlen    u32      JSON header length
//! header  hlen     {"width":W,"height":H,"frames":N,"gop_length":G}
//! frames  N times  1 byte frame type ('I'|'P'|'B') + W*H*3 RGB bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::FrameKind;

pub const GSV_MAGIC: &[u8; 4] = b"GSV1";

#[derive(Debug, Serialize, Deserialize)]
struct GsvHeader {
    width: u32,
    height: u32,
    frames: u32,
    gop_length: u32,
}

/// One decoded frame: coding type plus interleaved RGB rows.
#[derive(Debug, Clone)]
pub struct GsvFrame {
    pub kind: FrameKind,
    pub rgb: Vec<u8>,
}

/// An in-memory GSV video.
#[derive(Debug, Clone)]
pub struct GsvVideo {
    pub width: u32,
    pub height: u32,
    pub gop_length: u32,
    pub frames: Vec<GsvFrame>,
}

impl GsvVideo {
    pub fn new(width: u32, height: u32, gop_length: u32) -> Self {
        GsvVideo {
            width,
            height,
            gop_length,
            frames: Vec::new(),
        }
    }

    pub fn push_frame(&mut self, kind: FrameKind, rgb: Vec<u8>) {
        debug_assert_eq!(rgb.len(), (self.width * self.height * 3) as usize);
        self.frames.push(GsvFrame { kind, rgb });
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = serde_json::to_vec(&GsvHeader {
            width: self.width,
            height: self.height,
            frames: self.frames.len() as u32,
            gop_length: self.gop_length,
        })
        .expect("header serializes");
        w.write_all(GSV_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for frame in &self.frames {
            w.write_all(&[frame.kind.as_char() as u8])?;
            w.write_all(&frame.rgb)?;
        }
        w.flush()
    }

    pub fn read_from(path: &Path) -> std::io::Result<GsvVideo> {
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GSV_MAGIC {
            return Err(bad("not a GSV file (bad magic)"));
        }
        let mut len_bytes = [0u8; 4];
        r.read_exact(&mut len_bytes)?;
        let hlen = u32::from_le_bytes(len_bytes) as usize;
        if hlen > 1 << 20 {
            return Err(bad("implausible GSV header length"));
        }
        let mut header_bytes = vec![0u8; hlen];
        r.read_exact(&mut header_bytes)?;
        let header: GsvHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| bad(&format!("bad GSV header: {e}")))?;
        let frame_len = (header.width * header.height * 3) as usize;
        let mut frames = Vec::with_capacity(header.frames as usize);
        for _ in 0..header.frames {
            let mut kind_byte = [0u8; 1];
            r.read_exact(&mut kind_byte)?;
            let kind = FrameKind::from_char(kind_byte[0] as char)
                .ok_or_else(|| bad("unknown frame type byte"))?;
            let mut rgb = vec![0u8; frame_len];
            r.read_exact(&mut rgb)?;
            frames.push(GsvFrame { kind, rgb });
        }
        Ok(GsvVideo {
            width: header.width,
            height: header.height,
            gop_length: header.gop_length,
            frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.gsv");
        let mut video = GsvVideo::new(4, 3, 2);
        video.push_frame(FrameKind::I, vec![1u8; 36]);
        video.push_frame(FrameKind::P, vec![2u8; 36]);
        video.push_frame(FrameKind::B, vec![3u8; 36]);
        video.write_to(&path).unwrap();
        let back = GsvVideo::read_from(&path).unwrap();
        assert_eq!(back.width, 4);
        assert_eq!(back.height, 3);
        assert_eq!(back.gop_length, 2);
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.frames[1].kind, FrameKind::P);
        assert_eq!(back.frames[2].rgb, vec![3u8; 36]);
    }

    #[test]
    fn truncated_file_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.gsv");
        let mut video = GsvVideo::new(4, 3, 2);
        video.push_frame(FrameKind::I, vec![1u8; 36]);
        video.write_to(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(GsvVideo::read_from(&path).is_err());
    }

    #[test]
    fn bad_magic_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.gsv");
        std::fs::write(&path, b"NOPExxxxxxxxxxxx").unwrap();
        assert!(GsvVideo::read_from(&path).is_err());
    }
}
