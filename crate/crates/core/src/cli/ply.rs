//! Binary little-endian PLY scene files.
//!
//! Every Gaussian parameter is stored as a 64-bit double in its optimizer
//! parameterization, so a save/load cycle is bitwise exact. Files written
//! with `float` properties by other tools are accepted on load.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::splat::GaussianScene;

pub const FORMAT_VERSION: &str = "scene-forge-v1";

/// Vertex properties in file order.
pub const PROPERTIES: [&str; 14] = [
    "x",
    "y",
    "z",
    "red",
    "green",
    "blue",
    "opacity_logit",
    "log_scale_x",
    "log_scale_y",
    "log_scale_z",
    "quat_w",
    "quat_x",
    "quat_y",
    "quat_z",
];

fn row(scene: &GaussianScene, i: usize) -> [f64; 14] {
    let (c, k, s, q) = (
        scene.centers[i],
        scene.colors[i],
        scene.log_scales[i],
        scene.rotations[i],
    );
    [
        c[0],
        c[1],
        c[2],
        k[0],
        k[1],
        k[2],
        scene.opacity_logits[i],
        s[0],
        s[1],
        s[2],
        q[0],
        q[1],
        q[2],
        q[3],
    ]
}

pub fn write_scene<W: Write>(scene: &GaussianScene, mut w: W) -> Result<()> {
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\ncomment {FORMAT_VERSION}\nelement vertex {}\n",
        scene.len()
    );
    for p in PROPERTIES {
        header.push_str(&format!("property double {p}\n"));
    }
    header.push_str("end_header\n");
    let mut buf = header.into_bytes();
    buf.reserve(scene.len() * 14 * 8);
    for i in 0..scene.len() {
        for v in row(scene, i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Scalar {
    F32,
    F64,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("ply: {}", msg.into()))
}

pub fn read_scene<R: Read>(r: R) -> Result<GaussianScene> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let mut next = |r: &mut BufReader<R>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err("unexpected end of header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next(&mut r)? != "ply" {
        return Err(format_err("missing magic"));
    }
    let mut versioned = false;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        let l = next(&mut r)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(format_err(format!("unsupported format {other}"))),
            ["comment", rest @ ..] => versioned |= rest.join(" ") == FORMAT_VERSION,
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| format_err(format!("bad vertex count {n}")))?)
            }
            ["element", name, ..] => return Err(format_err(format!("unexpected element {name}"))),
            ["property", ty, name] => {
                let t = match *ty {
                    "double" | "float64" => Scalar::F64,
                    "float" | "float32" => Scalar::F32,
                    _ => return Err(format_err(format!("property {name} has unsupported type {ty}"))),
                };
                props.push((name.to_string(), t));
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(format_err(format!("unrecognized header line {l:?}"))),
        }
    }
    if !versioned {
        return Err(format_err(format!("missing `comment {FORMAT_VERSION}`")));
    }
    let n = count.ok_or_else(|| format_err("no vertex element"))?;
    let slots: Vec<usize> = PROPERTIES
        .iter()
        .map(|want| {
            props
                .iter()
                .position(|(name, _)| name == want)
                .ok_or_else(|| format_err(format!("missing property {want}")))
        })
        .collect::<Result<_>>()?;
    let stride: usize = props
        .iter()
        .map(|(_, t)| match t {
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        })
        .sum();
    let offsets: Vec<usize> = props
        .iter()
        .scan(0, |acc, (_, t)| {
            let o = *acc;
            *acc += match t {
                Scalar::F32 => 4,
                Scalar::F64 => 8,
            };
            Some(o)
        })
        .collect();
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != n * stride {
        return Err(format_err(format!(
            "body has {} bytes, expected {} for {n} vertices",
            body.len(),
            n * stride
        )));
    }
    let mut scene = GaussianScene::with_capacity(n);
    for rec in body.chunks_exact(stride.max(1)).take(n) {
        let v: Vec<f64> = slots
            .iter()
            .map(|&s| {
                let o = offsets[s];
                match props[s].1 {
                    Scalar::F64 => f64::from_le_bytes(rec[o..o + 8].try_into().unwrap()),
                    Scalar::F32 => f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64,
                }
            })
            .collect();
        scene.centers.push([v[0], v[1], v[2]]);
        scene.colors.push([v[3], v[4], v[5]]);
        scene.opacity_logits.push(v[6]);
        scene.log_scales.push([v[7], v[8], v[9]]);
        scene.rotations.push([v[10], v[11], v[12], v[13]]);
    }
    scene
        .validate()
        .map_err(|e| format_err(format!("invalid scene: {e}")))?;
    Ok(scene)
}

pub fn save_scene(scene: &GaussianScene, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_scene(scene, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<GaussianScene> {
    read_scene(fs::File::open(path)?)
}
