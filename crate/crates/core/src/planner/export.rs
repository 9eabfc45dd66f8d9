use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, GridSpec};

/// `row,col` CSV with a header line.
pub fn write_path_csv(path: impl AsRef<Path>, cells: &[CellIndex]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("row,col\n");
    for c in cells {
        out.push_str(&format!("{},{}\n", c.row, c.col));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_path_csv(path: impl AsRef<Path>) -> Result<Vec<CellIndex>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "row,col" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header 'row,col'".into(),
            })
        }
    }
    let mut cells = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected 'row,col', got '{line}'"),
            })
        };
        let mut parts = line.split(',');
        let row = parse(parts.next())?;
        let col = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 'row,col', got '{line}'"),
            });
        }
        cells.push(CellIndex::new(row, col));
    }
    Ok(cells)
}

/// GeoJSON `Feature` with a `LineString` through the cell centers.
pub fn path_geojson(spec: &GridSpec, cells: &[CellIndex]) -> Result<Value> {
    let coords = cells
        .iter()
        .map(|&c| spec.cell_to_geo(c).map(|p| json!([p.x, p.y])))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": coords},
        "properties": {"cells": cells.len()},
    }))
}

pub fn write_path_geojson(path: impl AsRef<Path>, spec: &GridSpec, cells: &[CellIndex]) -> Result<()> {
    let path = path.as_ref();
    let v = path_geojson(spec, cells)?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
