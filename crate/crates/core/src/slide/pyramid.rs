use std::fs;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::pool2x2;

/// Levels are added while both dimensions stay at or above this size.
pub const MIN_LEVEL_DIM: u32 = 299;

pub const DEFAULT_MPP: f64 = 0.4536;
pub const DEFAULT_MAGNIFICATION: &str = "20X";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub factor: u32,
    pub raster: RgbImage,
}

/// Multi-resolution raster of one biopsy core.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidePyramid {
    pub slide_id: String,
    pub width0: u32,
    pub height0: u32,
    /// Microns per pixel at level 0; metadata only.
    pub mpp: f64,
    pub magnification: String,
    levels: Vec<PyramidLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevelEntry {
    pub factor: u32,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub slide_id: String,
    pub width0: u32,
    pub height0: u32,
    pub mpp: f64,
    pub magnification: String,
    pub levels: Vec<LevelEntry>,
}

/// Build a pyramid by repeated 2x2 area-average pooling of `base`.
pub fn build_pyramid(slide_id: impl Into<String>, base: RgbImage, mpp: f64) -> Result<SlidePyramid> {
    let (w, h) = base.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty base raster"));
    }
    if !(mpp > 0.0) || !mpp.is_finite() {
        return Err(Error::invalid(format!("mpp must be positive, got {mpp}")));
    }
    let mut levels = vec![PyramidLevel { factor: 1, raster: base }];
    loop {
        let last = levels.last().expect("level 0 present");
        let (lw, lh) = last.raster.dimensions();
        let (nw, nh) = (lw.div_ceil(2), lh.div_ceil(2));
        if nw.min(nh) < MIN_LEVEL_DIM {
            break;
        }
        let next = PyramidLevel {
            factor: last.factor * 2,
            raster: pool2x2(&last.raster),
        };
        levels.push(next);
    }
    Ok(SlidePyramid {
        slide_id: slide_id.into(),
        width0: w,
        height0: h,
        mpp,
        magnification: DEFAULT_MAGNIFICATION.to_string(),
        levels,
    })
}

impl SlidePyramid {
    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> Result<&PyramidLevel> {
        self.levels.get(level).ok_or(Error::InvalidLevel {
            level,
            available: self.levels.len(),
        })
    }

    pub fn base(&self) -> &RgbImage {
        &self.levels[0].raster
    }

    pub fn level_dimensions(&self, level: usize) -> Result<(u32, u32)> {
        Ok(self.level(level)?.raster.dimensions())
    }

    /// Copy a `w x h` window at `(x, y)` of the given level.
    pub fn read_region(&self, level: usize, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage> {
        let raster = &self.level(level)?.raster;
        let (lw, lh) = raster.dimensions();
        let fits = w > 0
            && h > 0
            && (x as u64 + w as u64) <= lw as u64
            && (y as u64 + h as u64) <= lh as u64;
        if !fits {
            return Err(Error::RegionOutOfBounds {
                x: x as i64,
                y: y as i64,
                w,
                h,
                width: lw,
                height: lh,
            });
        }
        let src = raster.as_raw();
        let mut buf = Vec::with_capacity(w as usize * h as usize * 3);
        let stride = lw as usize * 3;
        for row in y as usize..(y + h) as usize {
            let start = row * stride + x as usize * 3;
            buf.extend_from_slice(&src[start..start + w as usize * 3]);
        }
        Ok(RgbImage::from_raw(w, h, buf).expect("buffer sized to window"))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            slide_id: self.slide_id.clone(),
            width0: self.width0,
            height0: self.height0,
            mpp: self.mpp,
            magnification: self.magnification.clone(),
            levels: self
                .levels
                .iter()
                .enumerate()
                .map(|(k, l)| LevelEntry {
                    factor: l.factor,
                    file: format!("level_{k}.png"),
                })
                .collect(),
        }
    }

    /// Persist as `dir/manifest.json` plus one PNG per level.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (entry, level) in manifest.levels.iter().zip(&self.levels) {
            level.raster.save(dir.join(&entry.file))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        Self::from_manifest(dir, manifest)
    }

    fn from_manifest(dir: &Path, m: Manifest) -> Result<Self> {
        if m.levels.is_empty() || m.levels[0].factor != 1 {
            return Err(Error::invalid(format!("{}: level 0 missing", m.slide_id)));
        }
        let mut levels = Vec::with_capacity(m.levels.len());
        for (k, entry) in m.levels.iter().enumerate() {
            if entry.factor != 1u32 << k {
                return Err(Error::invalid(format!(
                    "{}: level {k} has factor {}, expected {}",
                    m.slide_id,
                    entry.factor,
                    1u32 << k
                )));
            }
            let raster = image::open(dir.join(&entry.file))?.to_rgb8();
            let expect = (m.width0.div_ceil(entry.factor), m.height0.div_ceil(entry.factor));
            if raster.dimensions() != expect {
                return Err(Error::invalid(format!(
                    "{}: level {k} is {:?}, expected {:?}",
                    m.slide_id,
                    raster.dimensions(),
                    expect
                )));
            }
            levels.push(PyramidLevel {
                factor: entry.factor,
                raster,
            });
        }
        Ok(SlidePyramid {
            slide_id: m.slide_id,
            width0: m.width0,
            height0: m.height0,
            mpp: m.mpp,
            magnification: m.magnification,
            levels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, image::Rgb([v, v, v]))
    }

    #[test]
    fn halving_stops_below_tile_size() {
        let p = build_pyramid("s", gray(1196, 598, 9), DEFAULT_MPP).unwrap();
        let dims: Vec<_> = (0..p.level_count()).map(|k| p.level_dimensions(k).unwrap()).collect();
        assert_eq!(dims, vec![(1196, 598), (598, 299)]);
        assert_eq!(p.levels()[1].factor, 2);
    }

    #[test]
    fn small_base_has_single_level() {
        let p = build_pyramid("s", gray(100, 100, 9), DEFAULT_MPP).unwrap();
        assert_eq!(p.level_count(), 1);
    }

    #[test]
    fn constant_base_stays_constant() {
        let p = build_pyramid("s", gray(1300, 700, 123), DEFAULT_MPP).unwrap();
        for l in p.levels() {
            assert!(l.raster.pixels().all(|px| px.0 == [123, 123, 123]));
        }
    }

    #[test]
    fn rejects_empty_and_bad_mpp() {
        assert!(matches!(
            build_pyramid("s", RgbImage::new(0, 5), 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(build_pyramid("s", gray(4, 4, 0), 0.0).is_err());
    }

    #[test]
    fn region_bounds() {
        let p = build_pyramid("s", gray(50, 40, 1), 1.0).unwrap();
        assert!(matches!(
            p.read_region(0, 50, 0, 1, 1),
            Err(Error::RegionOutOfBounds { .. })
        ));
        assert!(matches!(p.read_region(3, 0, 0, 1, 1), Err(Error::InvalidLevel { .. })));
        assert_eq!(p.read_region(0, 49, 39, 1, 1).unwrap().dimensions(), (1, 1));
    }

    #[test]
    fn write_then_open_round_trips() {
        let base = RgbImage::from_fn(700, 650, |x, y| image::Rgb([(x % 251) as u8, (y % 241) as u8, ((x ^ y) % 256) as u8]));
        let p = build_pyramid("slide-a", base.clone(), DEFAULT_MPP).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.write(dir.path()).unwrap();
        let q = SlidePyramid::open(dir.path()).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.read_region(0, 0, 0, 700, 650).unwrap(), base);
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        for key in ["slide_id", "width0", "height0", "mpp", "magnification", "levels", "factor", "file"] {
            assert!(text.contains(&format!("\"{key}\"")), "manifest lacks {key}");
        }
    }
}
