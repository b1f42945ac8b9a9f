//! On-disk formats.
//!
//! * frames: binary PPM (`P6`) and PGM (`P5`), 8-bit, scaled to `[0, 1]`
//! * score maps: PFM (`Pf`, single channel, little-endian `f32`)
//! * masks: palette-colored PPM
//! * weights: the `CWFCN1` store, see [`weights`]
//! * sequences: plain-text manifests, see [`manifest`]

mod manifest;
mod mask;
mod pnm;
pub mod weights;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use manifest::{SequenceEntry, SequenceManifest};
pub use mask::{decode_gt_mask, encode_mask, read_mask, write_mask, Palette};
pub use pnm::{decode_image, decode_pfm, encode_pfm, encode_pgm, encode_ppm, read_pfm, write_pfm};
pub use weights::{
    decode_weights, encode_weights, gen_weights, read_weights, write_weights, WeightEntry,
    WeightStore,
};

pub fn read_image(path: impl AsRef<Path>) -> Result<crate::Tensor> {
    decode_image(&read_bytes(path.as_ref())?)
}

/// Writes a 1-channel tensor as PGM and a 3-channel tensor as PPM.
pub fn write_image(tensor: &crate::Tensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = match tensor.channels() {
        1 => encode_pgm(tensor)?,
        3 => encode_ppm(tensor)?,
        c => {
            return Err(Error::shape("image channels", "1 or 3", c));
        }
    };
    write_bytes(path.as_ref(), &bytes)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
