//! Per-decision-step value-map images and their JSON sidecar.

use crate::eval::metrics::TrajPoint;
use crate::geometry::Cell;
use crate::valuemaps::{MapSource, ValueMap, Waypoint};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SIDECAR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("map dump io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image encoding failed for {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub format_version: u32,
    pub episode: String,
    pub step: usize,
    /// Semantic, action, trajectory, intuition, fused.
    pub maps: Vec<ValueMap>,
    pub trajectory: Vec<TrajPoint>,
    pub waypoint: Option<Waypoint>,
    pub path: Vec<Cell>,
}

/// Grayscale bytes, `v / max * 255` rounded; an all-zero map is black.
pub fn map_to_gray(map: &ValueMap) -> Vec<u8> {
    let max = map.max_value();
    map.values
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v.max(0.0) / max * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

pub fn map_filename(episode: &str, step: usize, source: MapSource) -> String {
    format!("{episode}_step{step:03}_{}.pgm", source.name())
}

pub fn sidecar_filename(episode: &str, step: usize) -> String {
    format!("{episode}_step{step:03}.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_pgm(path: &Path, map: &ValueMap) -> Result<(), DumpError> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &map_to_gray(map),
            map.grid.width as u32,
            map.grid.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| DumpError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    std::fs::write(path, buf).map_err(io_err(path))
}

/// Writes one image per map plus the sidecar; returns the written paths.
pub fn dump_maps(dir: &Path, sidecar: &MapSidecar) -> Result<Vec<PathBuf>, DumpError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for map in &sidecar.maps {
        let path = dir.join(map_filename(&sidecar.episode, sidecar.step, map.source));
        write_pgm(&path, map)?;
        written.push(path);
    }
    let path = dir.join(sidecar_filename(&sidecar.episode, sidecar.step));
    let text = serde_json::to_string(sidecar).expect("sidecar serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

pub fn read_sidecar(path: &Path) -> Result<MapSidecar, DumpError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DumpError::Sidecar {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
