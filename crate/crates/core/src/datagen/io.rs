use std::fs;
use std::path::Path;

use super::record::SceneRecord;
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

/// One compact JSON document per line, newline-terminated.
pub fn scenes_to_jsonl(scenes: &[SceneRecord]) -> Result<String> {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_scenes(path: &Path, scenes: &[SceneRecord]) -> Result<()> {
    write_atomic(path, scenes_to_jsonl(scenes)?.as_bytes())
}

/// Parses JSONL; blank lines are skipped, errors carry 1-based line numbers.
pub fn parse_scenes(text: &str) -> Result<Vec<SceneRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    parse_scenes(&fs::read_to_string(path)?)
}
