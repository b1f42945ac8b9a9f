use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::LabelMask;
use crate::tensor::Tensor;

/// Class index -> RGB color. Colors are unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

pub const BLACK: [u8; 3] = [0, 0, 0];
pub const MAGENTA: [u8; 3] = [255, 0, 255];

const EXTRA: [[u8; 3]; 6] = [
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [0, 255, 255],
    [255, 0, 0],
    [255, 255, 255],
];

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::param("palette", "needs at least one color"));
        }
        for (i, c) in colors.iter().enumerate() {
            if colors[..i].contains(c) {
                return Err(Error::param(
                    "palette",
                    format!("duplicate color {},{},{}", c[0], c[1], c[2]),
                ));
            }
        }
        Ok(Palette { colors })
    }

    /// Class 0 black (other), class 1 magenta (road).
    pub fn kitti_road() -> Self {
        Palette {
            colors: vec![BLACK, MAGENTA],
        }
    }

    /// Black, magenta, then a fixed list of saturated colors; deterministic
    /// for any class count, generated colors beyond the list.
    pub fn default_for(num_classes: usize) -> Self {
        let mut colors = vec![BLACK, MAGENTA];
        colors.extend(EXTRA);
        let mut k = 1u32;
        while colors.len() < num_classes {
            let c = [
                (k * 37 % 256) as u8,
                (k * 91 % 256) as u8,
                (k * 151 % 256) as u8,
            ];
            if !colors.contains(&c) {
                colors.push(c);
            }
            k += 1;
        }
        colors.truncate(num_classes.max(1));
        Palette { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, class: u16) -> Option<[u8; 3]> {
        self.colors.get(class as usize).copied()
    }

    pub fn class_of(&self, rgb: [u8; 3]) -> Option<u16> {
        self.colors.iter().position(|&c| c == rgb).map(|i| i as u16)
    }
}

impl FromStr for Palette {
    type Err = Error;

    /// `r,g,b;r,g,b;...` in class order.
    fn from_str(s: &str) -> Result<Self> {
        let colors = s
            .split(';')
            .map(|c| {
                let parts: Vec<_> = c
                    .trim()
                    .split(',')
                    .map(|v| v.trim().parse::<u8>())
                    .collect();
                match parts.as_slice() {
                    [Ok(r), Ok(g), Ok(b)] => Ok([*r, *g, *b]),
                    _ => Err(Error::param("palette", format!("bad color '{c}'"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Palette::new(colors)
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.colors.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{},{},{}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

fn byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Maps each pixel color to its palette index. Single-channel images are
/// read as gray `(v, v, v)`.
pub fn decode_gt_mask(image: &Tensor, palette: &Palette) -> Result<LabelMask> {
    let (h, w) = (image.height(), image.width());
    let planes: [&[f32]; 3] = match image.channels() {
        1 => [image.plane(0); 3],
        3 => [image.plane(0), image.plane(1), image.plane(2)],
        c => return Err(Error::shape("mask image channels", "1 or 3", c)),
    };
    let mut labels = Vec::with_capacity(h * w);
    let pixels = planes[0].iter().zip(planes[1]).zip(planes[2]);
    for (i, ((&r, &g), &b)) in pixels.enumerate() {
        let rgb = [byte(r), byte(g), byte(b)];
        match palette.class_of(rgb) {
            Some(l) => labels.push(l),
            None => {
                return Err(Error::UnknownColor {
                    r: rgb[0],
                    g: rgb[1],
                    b: rgb[2],
                    x: i % w,
                    y: i / w,
                })
            }
        }
    }
    LabelMask::new(h, w, labels)
}

pub fn encode_mask(mask: &LabelMask, palette: &Palette) -> Result<Vec<u8>> {
    mask.check_classes(palette.len())?;
    let rgb: Vec<u8> = mask
        .labels()
        .iter()
        .flat_map(|&l| palette.color(l).expect("checked above"))
        .collect();
    Ok(super::pnm::encode_rgb(mask.width(), mask.height(), &rgb))
}

pub fn write_mask(mask: &LabelMask, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_mask(mask, palette)?)
}

pub fn read_mask(path: impl AsRef<Path>, palette: &Palette) -> Result<LabelMask> {
    decode_gt_mask(&super::read_image(path)?, palette)
}
