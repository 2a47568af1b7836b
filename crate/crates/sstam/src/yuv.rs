//! Headerless planar I420: Y, then Cb, then Cr for each frame, geometry supplied out of band.

use std::io::Write;

use sstam_core::video::VideoSequence;

use crate::error::{malformed, Error, Result};
use crate::y4m::{frame_bytes, frame_from_payload};

pub fn read_raw_yuv420(
    stream: &[u8],
    width: usize,
    height: usize,
    fps: (u32, u32),
) -> Result<VideoSequence> {
    if width == 0 || height == 0 || width % 2 == 1 || height % 2 == 1 {
        return Err(malformed(
            "raw geometry",
            format!("{width}x{height} (dimensions must be even and positive)"),
        ));
    }
    let size = frame_bytes(width, height);
    if stream.is_empty() || stream.len() % size != 0 {
        return Err(Error::SizeMismatch {
            len: stream.len(),
            frame: size,
        });
    }
    let frames = stream
        .chunks_exact(size)
        .map(|c| frame_from_payload(c, width, height))
        .collect::<Result<_>>()?;
    Ok(VideoSequence::new(frames, fps.0, fps.1)?)
}

pub fn write_raw_yuv420(seq: &VideoSequence, sink: &mut impl Write) -> Result<usize> {
    let mut n = 0;
    for f in seq.frames() {
        for p in [&f.y, &f.cb, &f.cr] {
            sink.write_all(p.samples())?;
        }
        n += f.byte_len();
    }
    Ok(n)
}
