//! Raster payloads: `{width, height, data}` where `data` is standard base64 of
//! one byte per pixel in row-major order.
//!
//! * label rasters: 0 NonObject, 1 Object, 2 Unknown
//! * agreement rasters: 0 agree-object, 1 agree-non-object, 2 false positive,
//!   3 false negative, 4 undetermined
//! * instance rasters: `round(value * 255)`

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use miatt_forge::{AgreementClass, CellState, Instance, PartialLabeling};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: String,
}

pub fn label_code(c: CellState) -> u8 {
    match c {
        CellState::NonObject => 0,
        CellState::Object => 1,
        CellState::Unknown => 2,
    }
}

impl Raster {
    fn new(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self { width, height, data: STANDARD.encode(bytes) }
    }

    pub fn labels(t: &PartialLabeling) -> Self {
        let bytes: Vec<u8> = t.cells().iter().map(|&c| label_code(c)).collect();
        Self::new(t.width(), t.height(), &bytes)
    }

    pub fn agreement(width: usize, height: usize, classes: &[AgreementClass]) -> Self {
        let bytes: Vec<u8> = classes.iter().map(|c| c.code()).collect();
        Self::new(width, height, &bytes)
    }

    pub fn instance(d: &Instance) -> Self {
        let bytes: Vec<u8> = d.pixels().iter().map(|v| (v * 255.0).round() as u8).collect();
        Self::new(d.width(), d.height(), &bytes)
    }
}

/// Raw bytes of a raster, checked against its dimensions.
pub fn decode_raster(r: &Raster) -> Result<Vec<u8>, String> {
    let bytes = STANDARD.decode(&r.data).map_err(|e| e.to_string())?;
    if bytes.len() != r.width * r.height {
        return Err(format!("raster has {} bytes for {}x{}", bytes.len(), r.width, r.height));
    }
    Ok(bytes)
}
