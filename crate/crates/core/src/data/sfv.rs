use std::io::{Read, Write};
use std::path::Path;

use super::{BoxLabel, Frames, RawVideo};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFV1";
const VERSION: u32 = 1;

fn put(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn count(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("too many {what} for SFV1")))
}

/// Writes the clip; the detection block is emitted only when boxes exist.
pub fn write_sfv1(video: &RawVideo, mut w: impl Write) -> Result<()> {
    let f = &video.frames;
    w.write_all(MAGIC)?;
    for v in [VERSION, count(f.t, "frames")?, count(f.h, "rows")?, count(f.w, "columns")?, count(f.c, "channels")?] {
        put(&mut w, v)?;
    }
    put(&mut w, count(video.labels.len(), "labels")?)?;
    for &l in &video.labels {
        put(&mut w, l)?;
    }
    let mut buf = Vec::with_capacity(f.data.len() * 4);
    for v in &f.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    if !video.boxes.is_empty() {
        put(&mut w, count(video.boxes.len(), "boxes")?)?;
        for b in &video.boxes {
            put(&mut w, b.t_index)?;
            for c in [b.x0, b.y0, b.x1, b.y1] {
                w.write_all(&c.to_le_bytes())?;
            }
            put(&mut w, count(b.labels.len(), "box labels")?)?;
            for &l in &b.labels {
                put(&mut w, l)?;
            }
        }
    }
    Ok(())
}

struct Reader<R> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("SFV1 clip is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.u32()?;
        (0..n).map(|_| self.u32()).collect()
    }
}

pub fn read_sfv1(r: impl Read) -> Result<RawVideo> {
    let mut rd = Reader { r };
    if &rd.bytes::<4>()? != MAGIC {
        return Err(Error::Format("not an SFV1 clip".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SFV1 version {version}")));
    }
    let (t, h, w, c) = (rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize);
    let labels = rd.u32s()?;
    let n = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format("SFV1 extents overflow".into()))?;
    let mut raw = vec![0u8; n * 4];
    rd.r.read_exact(&mut raw).map_err(|_| Error::Format("SFV1 pixel payload is truncated".into()))?;
    let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let frames = Frames::new(t, h, w, c, data)?;

    let mut boxes = Vec::new();
    let mut first = [0u8; 4];
    let got = read_some(&mut rd.r, &mut first)?;
    if got > 0 {
        if got < 4 {
            return Err(Error::Format("SFV1 detection block is truncated".into()));
        }
        for _ in 0..u32::from_le_bytes(first) {
            let t_index = rd.u32()?;
            let (x0, y0, x1, y1) = (rd.f32()?, rd.f32()?, rd.f32()?, rd.f32()?);
            boxes.push(BoxLabel { t_index, x0, y0, x1, y1, labels: rd.u32s()? });
        }
    }
    let video = RawVideo { frames, fps: 30.0, labels, boxes };
    video.validate()?;
    Ok(video)
}

fn read_some(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

pub fn write_sfv1_file(video: &RawVideo, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_sfv1(video, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_sfv1_file(path: impl AsRef<Path>) -> Result<RawVideo> {
    read_sfv1(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> RawVideo {
        let frames = Frames::new(2, 2, 3, 3, (0..36).map(|i| i as f32 / 36.0).collect()).unwrap();
        RawVideo::new(frames, vec![3]).unwrap()
    }

    #[test]
    fn round_trip_without_boxes() {
        let v = clip();
        let mut buf = Vec::new();
        write_sfv1(&v, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SFV1");
        assert_eq!(buf.len(), 4 + 6 * 4 + 4 + 36 * 4);
        assert_eq!(read_sfv1(&buf[..]).unwrap(), v);
    }

    #[test]
    fn round_trip_with_boxes() {
        let mut v = clip();
        v.boxes.push(BoxLabel { t_index: 1, x0: 0.1, y0: 0.2, x1: 0.5, y1: 0.9, labels: vec![0, 4] });
        let mut buf = Vec::new();
        write_sfv1(&v, &mut buf).unwrap();
        assert_eq!(read_sfv1(&buf[..]).unwrap(), v);
        assert!(matches!(read_sfv1(&buf[..buf.len() - 2]), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let mut v = clip();
        v.frames.data[0] = 1.5;
        let mut buf = Vec::new();
        write_sfv1(&v, &mut buf).unwrap();
        assert!(matches!(read_sfv1(&buf[..]), Err(Error::Data(_))));
    }
}
