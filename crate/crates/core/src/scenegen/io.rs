//! Dataset persistence: JSON-lines, one scene per line behind a header line.
//!
//! Pixels are stored as flat integers 0–255 (scenes are quantized to 1/255
//! steps at generation time, so save → load is exact). All other numbers are
//! `f64` and round-trip exactly through JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{
    BBox, Dataset, GtObject, Image, Scene, SceneRecord, Split, IMAGE_SIDE, NUM_CATEGORIES,
};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    h: usize,
    w: usize,
    c: usize,
    seed: u64,
    split: String,
    digest: String,
}

#[derive(Serialize, Deserialize)]
struct ObjectLine {
    cat: usize,
    #[serde(rename = "box")]
    box_: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct SceneLine {
    idx: usize,
    group: usize,
    pixels: Vec<u8>,
    objects: Vec<ObjectLine>,
    proposals: Vec<[f64; 4]>,
}

/// Writes a dataset as JSON-lines. Output bytes are a pure function of the
/// dataset value.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);

    let header = Header {
        version: FORMAT_VERSION,
        h: IMAGE_SIDE,
        w: IMAGE_SIDE,
        c: NUM_CATEGORIES,
        seed: ds.seed,
        split: ds.split.as_str().to_string(),
        digest: ds.config_digest.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(json_err)?)?;

    for (idx, rec) in ds.scenes.iter().enumerate() {
        let line = SceneLine {
            idx,
            group: rec.scene.context_group,
            pixels: rec
                .scene
                .image
                .data()
                .iter()
                .map(|&v| (v * 255.0).round() as u8)
                .collect(),
            objects: rec
                .scene
                .objects
                .iter()
                .map(|o| ObjectLine {
                    cat: o.category,
                    box_: o.box_.to_array(),
                })
                .collect(),
            proposals: rec.proposals.iter().map(BBox::to_array).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&line).map_err(json_err)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset back. Fails atomically: any malformed line aborts the load
/// with its 1-based line number, returning no partial dataset.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_text = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::parse_msg("empty dataset file: missing header")),
    };
    let header: Header = serde_json::from_str(&header_text).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    if header.h != IMAGE_SIDE || header.w != IMAGE_SIDE || header.c != NUM_CATEGORIES {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "header dims {}x{} with {} categories, expected {IMAGE_SIDE}x{IMAGE_SIDE} with {NUM_CATEGORIES}",
                header.h, header.w, header.c
            ),
        });
    }
    let split = Split::from_str(&header.split)?;

    let mut scenes = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2; // 1-based, after the header
        let text = line?;
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "blank line inside dataset".into(),
            });
        }
        let parsed: SceneLine = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if parsed.idx != i {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("scene index {} out of order (expected {i})", parsed.idx),
            });
        }
        let expected_len = IMAGE_SIDE * IMAGE_SIDE * super::types::IMAGE_CHANNELS;
        if parsed.pixels.len() != expected_len {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "pixel array length {} (expected {expected_len})",
                    parsed.pixels.len()
                ),
            });
        }
        let data: Vec<f64> = parsed.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        let image = Image::from_data(IMAGE_SIDE, data)?;
        let objects: Vec<GtObject> = parsed
            .objects
            .into_iter()
            .map(|o| GtObject {
                category: o.cat,
                box_: BBox::from_array(o.box_),
            })
            .collect();
        let scene = Scene {
            image,
            objects,
            context_group: parsed.group,
        };
        scene.validate().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let proposals: Vec<BBox> = parsed.proposals.into_iter().map(BBox::from_array).collect();
        for p in &proposals {
            p.validate(IMAGE_SIDE as f64).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        }
        scenes.push(SceneRecord { scene, proposals });
    }

    Ok(Dataset {
        scenes,
        split,
        seed: header.seed,
        config_digest: header.digest,
    })
}

fn json_err(e: serde_json::Error) -> Error {
    Error::parse_msg(format!("json serialization failed: {e}"))
}
