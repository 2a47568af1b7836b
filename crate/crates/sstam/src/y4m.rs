//! YUV4MPEG2 container: one header line, then `FRAME` lines each followed by planar Y, Cb, Cr.

use std::io::Write;

use sstam_core::video::{chroma_dims, Frame, Plane, VideoSequence};

use crate::error::{malformed, Error, Result};

const SIGNATURE: &[u8] = b"YUV4MPEG2";
const FRAME: &[u8] = b"FRAME";
const ACCEPTED: [&str; 4] = ["420jpeg", "420paldv", "420mpeg2", "420"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps: (u32, u32),
}

fn line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let end = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..end], &bytes[end + 1..]))
}

fn parse_header(text: &[u8]) -> Result<Y4mHeader> {
    let text = std::str::from_utf8(text).map_err(|_| malformed("Y4M header", "not ASCII"))?;
    let (mut width, mut height, mut fps) = (None, None, None);
    let mut colorspace = "420jpeg";
    for tag in text.split(' ').skip(1).filter(|t| !t.is_empty()) {
        let (key, value) = tag.split_at(1);
        match key {
            "W" => {
                width = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| malformed("Y4M width", value))?,
                )
            }
            "H" => {
                height = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| malformed("Y4M height", value))?,
                )
            }
            "F" => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or_else(|| malformed("Y4M frame rate", value))?;
                let n = n
                    .parse::<u32>()
                    .map_err(|_| malformed("Y4M frame rate", value))?;
                let d = d
                    .parse::<u32>()
                    .map_err(|_| malformed("Y4M frame rate", value))?;
                fps = Some((n, d));
            }
            "C" => colorspace = value,
            "I" | "A" | "X" => {}
            _ => return Err(malformed("Y4M header tag", tag)),
        }
    }
    if !ACCEPTED.contains(&colorspace) {
        return Err(Error::UnsupportedColorspace(colorspace.to_string()));
    }
    let width = width.ok_or_else(|| malformed("Y4M header", "missing W"))?;
    let height = height.ok_or_else(|| malformed("Y4M header", "missing H"))?;
    let fps = fps.ok_or_else(|| malformed("Y4M header", "missing F"))?;
    if width == 0 || height == 0 || width % 2 == 1 || height % 2 == 1 {
        return Err(malformed(
            "Y4M geometry",
            format!("{width}x{height} (dimensions must be even and positive)"),
        ));
    }
    Ok(Y4mHeader { width, height, fps })
}

/// Bytes of one 4:2:0 frame payload.
pub fn frame_bytes(width: usize, height: usize) -> usize {
    let (cw, ch) = chroma_dims(width, height);
    width * height + 2 * cw * ch
}

pub(crate) fn frame_from_payload(payload: &[u8], width: usize, height: usize) -> Result<Frame> {
    let (cw, ch) = chroma_dims(width, height);
    let (y, rest) = payload.split_at(width * height);
    let (cb, cr) = rest.split_at(cw * ch);
    Ok(Frame::new(
        Plane::new(width, height, y.to_vec())?,
        Plane::new(cw, ch, cb.to_vec())?,
        Plane::new(cw, ch, cr.to_vec())?,
    )?)
}

pub fn parse_y4m(stream: &[u8]) -> Result<VideoSequence> {
    if !stream.starts_with(SIGNATURE)
        || stream
            .get(SIGNATURE.len())
            .is_some_and(|&b| b != b' ' && b != b'\n')
    {
        let shown =
            String::from_utf8_lossy(&stream[..stream.len().min(SIGNATURE.len())]).into_owned();
        return Err(Error::BadSignature(shown));
    }
    let (head, mut rest) =
        line(stream).ok_or_else(|| malformed("Y4M header", "no terminating newline"))?;
    let header = parse_header(head)?;
    let size = frame_bytes(header.width, header.height);
    let mut frames = Vec::new();
    while !rest.is_empty() {
        if !rest.starts_with(FRAME) {
            return Err(malformed(
                "Y4M frame marker",
                format!("frame {} does not start with FRAME", frames.len()),
            ));
        }
        let (_, payload) = line(rest).ok_or_else(|| Error::Truncated {
            frame: frames.len(),
            needed: size,
            available: 0,
        })?;
        if payload.len() < size {
            return Err(Error::Truncated {
                frame: frames.len(),
                needed: size,
                available: payload.len(),
            });
        }
        frames.push(frame_from_payload(
            &payload[..size],
            header.width,
            header.height,
        )?);
        rest = &payload[size..];
    }
    Ok(VideoSequence::new(frames, header.fps.0, header.fps.1)?)
}

/// Writes a canonical header (`Ip A1:1 C420jpeg`) and every frame; returns the byte count.
pub fn write_y4m(seq: &VideoSequence, sink: &mut impl Write) -> Result<usize> {
    let (n, d) = seq.fps();
    let header = format!(
        "YUV4MPEG2 W{} H{} F{n}:{d} Ip A1:1 C420jpeg\n",
        seq.width(),
        seq.height()
    );
    sink.write_all(header.as_bytes())?;
    let mut written = header.len();
    for f in seq.frames() {
        sink.write_all(b"FRAME\n")?;
        for p in [&f.y, &f.cb, &f.cr] {
            sink.write_all(p.samples())?;
        }
        written += 6 + f.byte_len();
    }
    Ok(written)
}

pub fn to_y4m_bytes(seq: &VideoSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + seq.len() * (6 + frame_bytes(seq.width(), seq.height())));
    write_y4m(seq, &mut out).expect("writing to a Vec cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(frames: usize) -> Vec<u8> {
        let mut s = b"YUV4MPEG2 W64 H48 F30:1 Ip A1:1 C420jpeg\n".to_vec();
        for t in 0..frames {
            s.extend_from_slice(b"FRAME\n");
            s.extend((0..4608).map(|i| ((i * 7 + t * 13) % 256) as u8));
        }
        s
    }

    #[test]
    fn parses_header_and_frames() {
        let seq = parse_y4m(&fixture(2)).unwrap();
        assert_eq!(
            (seq.width(), seq.height(), seq.fps(), seq.len()),
            (64, 48, (30, 1), 2)
        );
        assert_eq!(seq.frames()[1].cb.width(), 32);
        assert_eq!(to_y4m_bytes(&seq), fixture(2));
    }

    #[test]
    fn byte_count() {
        let seq = parse_y4m(&fixture(2)).unwrap();
        let header = "YUV4MPEG2 W64 H48 F30:1 Ip A1:1 C420jpeg\n".len();
        assert_eq!(
            write_y4m(&seq, &mut Vec::new()).unwrap(),
            header + 2 * (6 + 4608)
        );
    }

    #[test]
    fn errors_are_distinct() {
        let mut bad = fixture(1);
        bad[8] = b'9';
        assert!(matches!(parse_y4m(&bad), Err(Error::BadSignature(s)) if s == "YUV4MPEG9"));
        let mut s = b"YUV4MPEG2 W4 H4 F25:1 C422\n".to_vec();
        s.extend_from_slice(b"FRAME\n");
        assert!(matches!(parse_y4m(&s), Err(Error::UnsupportedColorspace(c)) if c == "422"));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 H4 F25:1 C420p10\n"),
            Err(Error::UnsupportedColorspace(_))
        ));
        let mut t = fixture(2);
        t.truncate(t.len() - 1);
        assert!(matches!(
            parse_y4m(&t),
            Err(Error::Truncated {
                frame: 1,
                needed: 4608,
                available: 4607
            })
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W3 H4 F25:1\n"),
            Err(Error::Malformed { .. })
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 H4 F25:1\n"),
            Err(Error::Core(_))
        ));
    }

    #[test]
    fn frame_parameters_and_default_colorspace() {
        let mut s = b"YUV4MPEG2 W2 H2 F25:1\n".to_vec();
        s.extend_from_slice(b"FRAME Ixyz\n");
        s.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let seq = parse_y4m(&s).unwrap();
        assert_eq!(seq.frames()[0].cr.samples(), &[6]);
    }
}
