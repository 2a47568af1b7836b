//! Binary 8-bit PGM (`P5`) images, used for saliency inputs, masks and exported maps.

use sstam_core::saliency::{GroundTruthMask, SaliencyMap};
use sstam_core::video::{quantize, Plane};

use crate::error::{malformed, Result};

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(malformed("PGM header", "unexpected end of header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| malformed("PGM header", "not ASCII"))
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let t = token(bytes, pos)?;
    t.parse()
        .map_err(|_| malformed("PGM header", format!("{what} {t:?}")))
}

pub fn read_pgm(bytes: &[u8]) -> Result<Plane> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(malformed("PGM signature", magic));
    }
    let width = number(bytes, &mut pos, "width")?;
    let height = number(bytes, &mut pos, "height")?;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(malformed(
            "PGM maxval",
            format!("{maxval} (only 8-bit images are supported)"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != width * height {
        return Err(malformed(
            "PGM raster",
            format!(
                "{width}x{height} needs {} bytes, found {}",
                width * height,
                data.len()
            ),
        ));
    }
    Ok(Plane::new(width, height, data.to_vec())?)
}

pub fn write_pgm(plane: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width(), plane.height()).into_bytes();
    out.extend_from_slice(plane.samples());
    out
}

/// Object mask from a PGM whose samples are 0 or 255.
pub fn read_mask(bytes: &[u8]) -> Result<GroundTruthMask> {
    let plane = read_pgm(bytes)?;
    let mut labels = Vec::with_capacity(plane.samples().len());
    for &s in plane.samples() {
        labels.push(match s {
            0 => 0,
            255 => 1,
            v => return Err(malformed("mask sample", format!("{v} (expected 0 or 255)"))),
        });
    }
    Ok(GroundTruthMask::new(plane.width(), plane.height(), labels)?)
}

pub fn mask_plane(mask: &GroundTruthMask) -> Plane {
    let samples = mask.labels().iter().map(|&l| l * 255).collect();
    Plane::new(mask.width(), mask.height(), samples).expect("mask geometry is valid")
}

/// Probabilities scaled by 255 and rounded half up.
pub fn saliency_plane(map: &SaliencyMap) -> Plane {
    let samples = map.probs().iter().map(|&p| quantize(p * 255.0)).collect();
    Plane::new(map.width(), map.height(), samples).expect("map geometry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comments() {
        let p = Plane::from_fn(3, 2, |r, c| (r * 3 + c) as u8 * 40);
        let bytes = write_pgm(&p);
        assert_eq!(read_pgm(&bytes).unwrap(), p);
        let mut commented = b"P5 # made by hand\n3 2\n# max\n255\n".to_vec();
        commented.extend_from_slice(p.samples());
        assert_eq!(read_pgm(&commented).unwrap(), p);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(read_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(read_mask(b"P5\n2 1\n255\n\x00\x80").is_err());
    }

    #[test]
    fn mask_and_map_export() {
        let m = read_mask(b"P5\n2 1\n255\n\xff\x00").unwrap();
        assert_eq!(m.labels(), &[1, 0]);
        assert_eq!(write_pgm(&mask_plane(&m)), b"P5\n2 1\n255\n\xff\x00");
        let map = SaliencyMap::new(4, 1, vec![0.0, 1.0, 0.5, 127.5 / 255.0]).unwrap();
        assert_eq!(saliency_plane(&map).samples(), &[0, 255, 128, 128]);
    }
}
