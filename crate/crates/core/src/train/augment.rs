//! The eight rotations/reflections of a square tile.

use image::RgbImage;
use rand::Rng;

use crate::error::{Error, Result};

/// `rotations` quarter turns clockwise applied after an optional
/// horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub flip: bool,
    pub rotations: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { flip: false, rotations: 0 };

    pub fn all() -> [Dihedral; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Self::from_index(i as u8);
        }
        out
    }

    pub fn from_index(i: u8) -> Self {
        Self {
            flip: i >= 4,
            rotations: i % 4,
        }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self::from_index(rng.random_range(0..8))
    }

    /// Source pixel for output pixel `(x, y)` in an `n x n` tile.
    #[inline]
    pub fn source(self, x: usize, y: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        // Undo the rotation first, then the flip.
        let (sx, sy) = match self.rotations % 4 {
            0 => (x, y),
            1 => (y, m - x),
            2 => (m - x, m - y),
            _ => (m - y, x),
        };
        if self.flip {
            (m - sx, sy)
        } else {
            (sx, sy)
        }
    }
}

fn check_square(img: &RgbImage) -> Result<usize> {
    if img.width() != img.height() {
        return Err(Error::invalid(format!(
            "augmentation needs a square tile, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(img.width() as usize)
}

pub fn apply(img: &RgbImage, d: Dihedral) -> Result<RgbImage> {
    let n = check_square(img)?;
    Ok(RgbImage::from_fn(n as u32, n as u32, |x, y| {
        let (sx, sy) = d.source(x as usize, y as usize, n);
        *img.get_pixel(sx as u32, sy as u32)
    }))
}

pub fn rot90(img: &RgbImage) -> Result<RgbImage> {
    apply(img, Dihedral { flip: false, rotations: 1 })
}

pub fn flip(img: &RgbImage) -> Result<RgbImage> {
    apply(img, Dihedral { flip: true, rotations: 0 })
}

/// One of the eight transforms, uniformly.
pub fn augment(img: &RgbImage, rng: &mut impl Rng) -> Result<RgbImage> {
    apply(img, Dihedral::random(rng))
}

/// Interleaved RGB bytes of an `n x n` tile, transformed, to a CHW
/// network input in [0, 1].
pub fn to_input(raw: &[u8], n: usize, d: Dihedral) -> Vec<f64> {
    let plane = n * n;
    let mut out = vec![0.0; 3 * plane];
    for y in 0..n {
        for x in 0..n {
            let (sx, sy) = d.source(x, y, n);
            let s = (sy * n + sx) * 3;
            let o = y * n + x;
            for c in 0..3 {
                out[c * plane + o] = raw[s + c] as f64 / 255.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::chw_from_rgb;
    use std::collections::HashSet;

    fn fixture() -> RgbImage {
        RgbImage::from_fn(5, 5, |x, y| image::Rgb([(x * 10 + y) as u8, (x * y) as u8, (3 * x + 7 * y) as u8]))
    }

    #[test]
    fn group_identities() {
        let a = fixture();
        let mut r = a.clone();
        for _ in 0..4 {
            r = rot90(&r).unwrap();
        }
        assert_eq!(r, a);
        assert_eq!(flip(&flip(&a).unwrap()).unwrap(), a);
        assert_ne!(rot90(&a).unwrap(), a);
    }

    #[test]
    fn orbit_has_eight_elements() {
        let a = fixture();
        let orbit: HashSet<Vec<u8>> = Dihedral::all().iter().map(|&d| apply(&a, d).unwrap().into_raw()).collect();
        assert_eq!(orbit.len(), 8);
    }

    #[test]
    fn fused_input_matches_image_transform() {
        let a = fixture();
        for d in Dihedral::all() {
            let img = apply(&a, d).unwrap();
            assert_eq!(to_input(a.as_raw(), 5, d), chw_from_rgb(img.as_raw(), 5, 5));
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(rot90(&RgbImage::new(3, 4)).is_err());
    }
}
