//! JSON-lines reading and writing for boxes and detections.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Box3D, Detection};

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Parses one value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Key that assigns a record to a frame; records without it belong to frame 0.
pub const FRAME_KEY: &str = "frame";

/// A record tagged with the frame it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Framed<T> {
    pub frame: u64,
    pub item: T,
}

/// Like [`read_jsonl`], additionally splitting off the optional `frame` key.
pub fn read_framed_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<Framed<T>>> {
    let values: Vec<serde_json::Value> = read_jsonl(r)?;
    values
        .into_iter()
        .enumerate()
        .map(|(n, mut v)| {
            let at = |e: String| Error::Parse(format!("record {}: {e}", n + 1));
            let frame = match v.as_object_mut().and_then(|o| o.remove(FRAME_KEY)) {
                None => 0,
                Some(f) => f.as_u64().ok_or_else(|| at(format!("`{FRAME_KEY}` must be a non-negative integer, got {f}")))?,
            };
            let item = serde_json::from_value(v).map_err(|e| at(e.to_string()))?;
            Ok(Framed { frame, item })
        })
        .collect()
}

/// One object per line with the `frame` key merged in.
pub fn framed_to_jsonl<T: Serialize>(items: &[Framed<T>]) -> Result<String> {
    let mut out = String::new();
    for f in items {
        let mut v = serde_json::to_value(&f.item).map_err(|e| Error::Parse(e.to_string()))?;
        let obj = v.as_object_mut().ok_or_else(|| Error::Parse("framed records must serialize to JSON objects".into()))?;
        obj.insert(FRAME_KEY.to_string(), f.frame.into());
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// A line holding either a full detection or a bare box.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoxOrDetection {
    Detection(Detection),
    Box(Box3D),
}

impl BoxOrDetection {
    pub fn into_box(self) -> Box3D {
        match self {
            BoxOrDetection::Detection(d) => d.bbox,
            BoxOrDetection::Box(b) => b,
        }
    }

    /// Bare boxes become detections with all scores 1.
    pub fn into_detection(self) -> Detection {
        match self {
            BoxOrDetection::Detection(d) => d,
            BoxOrDetection::Box(b) => Detection::certain(b),
        }
    }
}
