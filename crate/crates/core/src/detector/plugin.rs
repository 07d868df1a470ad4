//! External detector processes.
//!
//! The plugin is launched once per batch. Each request is one line on its
//! stdin:
//!
//! ```text
//! {"tile_id":3,"side":640,"raster":"/run/tiles/tile_00003.png"}
//! ```
//!
//! and it must answer every request with one line on stdout, in any order:
//!
//! ```text
//! {"tile_id":3,"detections":[{"x_min":1.0,"y_min":2.0,"x_max":30.5,"y_max":40.0,"class_id":0,"score":0.91}]}
//! ```
//!
//! Coordinates are tile-local and must lie in `[0, side]`. Stdin is closed
//! after the last request; the plugin exits when it has answered everything.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;

use serde::{Deserialize, Serialize};

use super::{DetectionSet, DetectorKind, DetectorSpec, Frame};
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Colon-separated directories searched for bare plugin command names
/// before falling back to `PATH`.
pub const PLUGIN_PATH_ENV: &str = "TILEFUSE_PLUGIN_PATH";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRequest {
    pub tile_id: u32,
    pub side: u32,
    pub raster: PathBuf,
}

#[derive(Deserialize)]
struct Response {
    tile_id: u32,
    detections: Vec<WireBox>,
}

#[derive(Deserialize)]
struct WireBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    class_id: u32,
    score: f64,
}

/// Resolve a bare program name against [`PLUGIN_PATH_ENV`]; paths containing
/// a separator and unresolved names are returned unchanged.
pub fn resolve_command(program: &str) -> PathBuf {
    if program.contains(std::path::MAIN_SEPARATOR) {
        return PathBuf::from(program);
    }
    if let Some(dirs) = std::env::var_os(PLUGIN_PATH_ENV) {
        for dir in std::env::split_paths(&dirs) {
            let candidate = dir.join(program);
            if candidate.is_file() {
                return candidate;
            }
        }
    }
    PathBuf::from(program)
}

/// Run a plugin detector over a batch of tile rasters.
///
/// Returns one local-frame [`DetectionSet`] per request, in request order.
pub fn run_plugin(spec: &DetectorSpec, requests: &[TileRequest]) -> Result<Vec<DetectionSet>> {
    let DetectorKind::Plugin { command } = &spec.kind else {
        return Err(Error::Contract(format!(
            "detector `{}` is not a plugin",
            spec.name
        )));
    };
    spec.validate()?;
    if requests.is_empty() {
        return Ok(Vec::new());
    }

    let program = resolve_command(&command[0]);
    let mut child = Command::new(&program)
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::PluginFailed {
            name: spec.name.clone(),
            status: "spawn failed".into(),
            stderr: format!("{}: {e}", program.display()),
        })?;

    let mut payload = String::new();
    for req in requests {
        payload.push_str(&request_line(req));
        payload.push('\n');
    }
    let mut stdin = child.stdin.take().expect("stdin piped");
    // A plugin that dies early closes the pipe; that shows up in its exit
    // status and missing responses, so write errors are not reported here.
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(payload.as_bytes());
    });
    let mut stderr = child.stderr.take().expect("stderr piped");
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let stdout = child.stdout.take().expect("stdout piped");
    let mut lines = Vec::new();
    for line in BufReader::new(stdout).lines() {
        match line {
            Ok(l) => lines.push(l),
            Err(e) => {
                return Err(Error::Protocol {
                    name: spec.name.clone(),
                    tile_id: None,
                    message: format!("unreadable output: {e}"),
                })
            }
        }
    }
    let _ = writer.join();
    let status = child.wait().map_err(|e| Error::io(&program, e))?;
    let stderr_text = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::PluginFailed {
            name: spec.name.clone(),
            status: status.to_string(),
            stderr: stderr_text.trim().to_string(),
        });
    }

    collect_responses(&spec.name, requests, &lines)
}

fn request_line(req: &TileRequest) -> String {
    serde_json::to_string(req).expect("request serializes")
}

fn collect_responses(
    name: &str,
    requests: &[TileRequest],
    lines: &[String],
) -> Result<Vec<DetectionSet>> {
    let violation = |tile_id: Option<u32>, message: String| Error::Protocol {
        name: name.to_string(),
        tile_id,
        message,
    };
    let sides: HashMap<u32, u32> = requests.iter().map(|r| (r.tile_id, r.side)).collect();
    let mut answered: BTreeMap<u32, Vec<BBox>> = BTreeMap::new();

    for line in lines.iter().filter(|l| !l.trim().is_empty()) {
        let response: Response = serde_json::from_str(line).map_err(|e| {
            let tile_id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("tile_id")?.as_u64())
                .map(|id| id as u32);
            violation(tile_id, format!("malformed response: {e}"))
        })?;
        let id = response.tile_id;
        let side = *sides
            .get(&id)
            .ok_or_else(|| violation(Some(id), "response for a tile that was not requested".into()))?;
        if answered.contains_key(&id) {
            return Err(violation(Some(id), "duplicate response".into()));
        }
        let s = f64::from(side);
        let mut boxes = Vec::with_capacity(response.detections.len());
        for w in response.detections {
            let b = BBox::new(w.x_min, w.y_min, w.x_max, w.y_max, w.class_id, w.score)
                .map_err(|e| violation(Some(id), e.to_string()))?;
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > s || b.y_max() > s {
                return Err(violation(
                    Some(id),
                    format!("box {:?} outside [0, {side}]^2", b.corners()),
                ));
            }
            boxes.push(b);
        }
        answered.insert(id, boxes);
    }

    requests
        .iter()
        .map(|req| {
            let boxes = answered
                .remove(&req.tile_id)
                .ok_or_else(|| violation(Some(req.tile_id), "no response for tile".into()))?;
            Ok(DetectionSet {
                detector_name: name.to_string(),
                tile_id: req.tile_id,
                frame: Frame::Local,
                boxes,
            })
        })
        .collect()
}

/// Request records for the given tiles with rasters named `tile_{id:05}.png` under `dir`.
pub fn requests_for(dir: &Path, tiles: &[crate::tiling::Tile]) -> Vec<TileRequest> {
    tiles
        .iter()
        .map(|t| TileRequest {
            tile_id: t.tile_id,
            side: t.side,
            raster: dir.join(tile_file_name(t.tile_id)),
        })
        .collect()
}

pub fn tile_file_name(tile_id: u32) -> String {
    format!("tile_{tile_id:05}.png")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reqs() -> Vec<TileRequest> {
        (0..3)
            .map(|i| TileRequest {
                tile_id: i,
                side: 100,
                raster: PathBuf::from(format!("/tmp/t{i}.png")),
            })
            .collect()
    }

    #[test]
    fn request_line_is_exact() {
        assert_eq!(
            request_line(&reqs()[1]),
            r#"{"tile_id":1,"side":100,"raster":"/tmp/t1.png"}"#
        );
    }

    #[test]
    fn out_of_order_responses_accepted() {
        let lines: Vec<String> = [
            r#"{"tile_id":2,"detections":[]}"#,
            r#"{"tile_id":0,"detections":[{"x_min":1,"y_min":1,"x_max":5,"y_max":5,"class_id":3,"score":0.4}]}"#,
            r#"{"tile_id":1,"detections":[]}"#,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let sets = collect_responses("p", &reqs(), &lines).unwrap();
        assert_eq!(sets.iter().map(|s| s.tile_id).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(sets[0].boxes[0].class_id(), 3);
        assert_eq!(sets[0].boxes[0].score(), 0.4);
    }

    fn violation_tile(lines: &[&str]) -> Option<u32> {
        let lines: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        match collect_responses("p", &reqs(), &lines) {
            Err(Error::Protocol { tile_id, .. }) => tile_id,
            other => panic!("expected protocol violation, got {other:?}"),
        }
    }

    #[test]
    fn protocol_violations_name_the_tile() {
        let ok0 = r#"{"tile_id":0,"detections":[]}"#;
        let ok1 = r#"{"tile_id":1,"detections":[]}"#;
        assert_eq!(
            violation_tile(&[
                ok0,
                ok1,
                r#"{"tile_id":2,"detections":[{"x_min":1,"y_min":1,"x_max":101,"y_max":5,"class_id":0,"score":0.5}]}"#
            ]),
            Some(2)
        );
        assert_eq!(violation_tile(&[ok0, ok1]), Some(2));
        assert_eq!(violation_tile(&[ok0, ok1, r#"{"tile_id":2,"detections":"#]), None);
        assert_eq!(
            violation_tile(&[ok0, ok1, r#"{"tile_id":2,"detections":[{"x_min":1}]}"#]),
            Some(2)
        );
        assert_eq!(violation_tile(&[ok0, ok0]), Some(0));
        assert_eq!(violation_tile(&[r#"{"tile_id":9,"detections":[]}"#]), Some(9));
    }
}
