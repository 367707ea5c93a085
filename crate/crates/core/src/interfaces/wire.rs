//! JSON wire format of the remote completion service.
//!
//! `POST /v1/complete` with
//! `{"trajectory": {"intrinsics": {..}, "poses": [{"rotation": [9], "translation": [3]}]},
//!   "frames": [base64 PNG], "alphas": [base64 PNG], "request_id": ".."}`
//! and a `{"frames": [..], "request_id": ".."}` reply. Images are 8-bit.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, Image, Plane};
use crate::trajectory::Trajectory;

pub const COMPLETE_PATH: &str = "/v1/complete";

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn png_bytes<P: image::PixelWithColorType>(buf: &ImageBuffer<P, Vec<P::Subpixel>>) -> Result<Vec<u8>>
where
    P::Subpixel: image::Primitive,
    [P::Subpixel]: image::EncodableLayout,
{
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}

pub fn encode_rgb_png(img: &Image) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.data.iter().map(|v| to_u8(*v)).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::shape("image buffer size"))?;
    png_bytes(&buf)
}

pub fn encode_gray_png(plane: &Plane) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = plane.values.iter().map(|v| to_u8(*v)).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(plane.width as u32, plane.height as u32, bytes)
        .ok_or_else(|| Error::shape("plane buffer size"))?;
    png_bytes(&buf)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Image::from_data(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

pub fn decode_gray_png(bytes: &[u8]) -> Result<Plane> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Plane::from_values(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

/// Rounds every value to the nearest 8-bit level, as a round trip through
/// the wire format would.
pub fn quantize(img: &Image) -> Image {
    Image {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|v| to_u8(*v) as f64 / 255.0).collect(),
    }
}

fn trajectory_json(t: &Trajectory) -> Value {
    let k = &t.intrinsics;
    json!({
        "intrinsics": {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height,
        },
        "poses": t.poses.iter().map(|p| json!({
            "rotation": p.rotation_row_major(),
            "translation": [p.translation.x, p.translation.y, p.translation.z],
        })).collect::<Vec<_>>(),
    })
}

pub fn encode_request(
    frames: &[Image],
    alphas: &[Plane],
    trajectory: &Trajectory,
    request_id: &str,
) -> Result<String> {
    let frames = frames
        .iter()
        .map(|f| Ok(B64.encode(encode_rgb_png(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let alphas = alphas
        .iter()
        .map(|a| Ok(B64.encode(encode_gray_png(a)?)))
        .collect::<Result<Vec<_>>>()?;
    let body = json!({
        "trajectory": trajectory_json(trajectory),
        "frames": frames,
        "alphas": alphas,
        "request_id": request_id,
    });
    Ok(body.to_string())
}

pub fn encode_response(frames: &[Image], request_id: &str) -> Result<String> {
    let frames = frames
        .iter()
        .map(|f| Ok(B64.encode(encode_rgb_png(f)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({"frames": frames, "request_id": request_id}).to_string())
}

/// A decoded completion request.
#[derive(Debug, Clone)]
pub struct CompleteRequest {
    pub trajectory: Trajectory,
    pub frames: Vec<Image>,
    pub alphas: Vec<Plane>,
    pub request_id: String,
}

fn field<'a>(v: &'a Value, path: &str, key: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::protocol(join(path, key), "missing field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::protocol(path, "expected a finite number"))
}

fn array<'a>(v: &'a Value, path: &str, len: Option<usize>) -> Result<&'a Vec<Value>> {
    let a = v
        .as_array()
        .ok_or_else(|| Error::protocol(path, "expected an array"))?;
    if let Some(n) = len {
        if a.len() != n {
            return Err(Error::protocol(path, format!("expected {n} entries, got {}", a.len())));
        }
    }
    Ok(a)
}

fn string<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::protocol(path, "expected a string"))
}

fn parse_body(body: &[u8]) -> Result<Value> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| Error::protocol("$", format!("invalid JSON: {e}")))?;
    if !v.is_object() {
        return Err(Error::protocol("$", "expected a JSON object"));
    }
    Ok(v)
}

fn decode_images(v: &Value, path: &str, n: Option<usize>, dims: Option<(usize, usize)>) -> Result<Vec<Image>> {
    array(v, path, n)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = format!("{path}[{i}]");
            let bytes = B64
                .decode(string(f, &p)?)
                .map_err(|e| Error::protocol(&p, format!("invalid base64: {e}")))?;
            let img = decode_rgb_png(&bytes).map_err(|e| Error::protocol(&p, e.to_string()))?;
            if let Some(d) = dims {
                if img.dims() != d {
                    return Err(Error::protocol(
                        &p,
                        format!("image is {}x{}, expected {}x{}", img.width, img.height, d.0, d.1),
                    ));
                }
            }
            Ok(img)
        })
        .collect()
}

fn parse_trajectory(v: &Value) -> Result<Trajectory> {
    let t = field(v, "", "trajectory")?;
    let k = field(t, "trajectory", "intrinsics")?;
    let kp = "trajectory.intrinsics";
    let num = |key: &str| number(field(k, kp, key)?, &join(kp, key));
    let dim = |key: &str| -> Result<usize> {
        field(k, kp, key)?
            .as_u64()
            .filter(|d| *d > 0)
            .map(|d| d as usize)
            .ok_or_else(|| Error::protocol(join(kp, key), "expected a positive integer"))
    };
    let intrinsics = CameraIntrinsics::new(
        num("fx")?,
        num("fy")?,
        num("cx")?,
        num("cy")?,
        dim("width")?,
        dim("height")?,
    )
    .map_err(|e| Error::protocol(kp, e.to_string()))?;
    let poses = array(field(t, "trajectory", "poses")?, "trajectory.poses", None)?;
    if poses.is_empty() {
        return Err(Error::protocol("trajectory.poses", "empty"));
    }
    let mut out = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        let pp = format!("trajectory.poses[{i}]");
        let rp = join(&pp, "rotation");
        let tp = join(&pp, "translation");
        let r = array(field(p, &pp, "rotation")?, &rp, Some(9))?;
        let tr = array(field(p, &pp, "translation")?, &tp, Some(3))?;
        let mut rot = [0.0; 9];
        for (j, x) in r.iter().enumerate() {
            rot[j] = number(x, &format!("{rp}[{j}]"))?;
        }
        let mut trans = [0.0; 3];
        for (j, x) in tr.iter().enumerate() {
            trans[j] = number(x, &format!("{tp}[{j}]"))?;
        }
        out.push(
            CameraPose::from_row_major(rot, trans)
                .map_err(|e| Error::protocol(&rp, e.to_string()))?,
        );
    }
    Trajectory::new(out, intrinsics).map_err(|e| Error::protocol("trajectory", e.to_string()))
}

/// Decodes and validates a request body, reporting the first bad field.
pub fn decode_request(body: &[u8]) -> Result<CompleteRequest> {
    let v = parse_body(body)?;
    let trajectory = parse_trajectory(&v)?;
    let n = trajectory.len();
    let dims = trajectory.intrinsics.dims();
    let frames = decode_images(field(&v, "", "frames")?, "frames", Some(n), Some(dims))?;
    let alphas = array(field(&v, "", "alphas")?, "alphas", Some(n))?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let p = format!("alphas[{i}]");
            let bytes = B64
                .decode(string(a, &p)?)
                .map_err(|e| Error::protocol(&p, format!("invalid base64: {e}")))?;
            let plane = decode_gray_png(&bytes).map_err(|e| Error::protocol(&p, e.to_string()))?;
            if plane.dims() != dims {
                return Err(Error::protocol(&p, "alpha map size does not match intrinsics"));
            }
            Ok(plane)
        })
        .collect::<Result<Vec<_>>>()?;
    let request_id = string(field(&v, "", "request_id")?, "request_id")?.to_string();
    Ok(CompleteRequest {
        trajectory,
        frames,
        alphas,
        request_id,
    })
}

/// Decodes a reply, requiring `n` frames of `dims` and the echoed id.
pub fn decode_response(body: &[u8], n: usize, dims: (usize, usize), request_id: &str) -> Result<Vec<Image>> {
    let v = parse_body(body)?;
    let id = string(field(&v, "", "request_id")?, "request_id")?;
    if id != request_id {
        return Err(Error::protocol(
            "request_id",
            format!("expected {request_id:?}, got {id:?}"),
        ));
    }
    decode_images(field(&v, "", "frames")?, "frames", Some(n), Some(dims))
}

/// Error reply body for a failed request.
pub fn error_body(err: &Error) -> String {
    match err {
        Error::Protocol { path, message } => {
            json!({"error": message, "path": path}).to_string()
        }
        e => json!({"error": e.to_string()}).to_string(),
    }
}
