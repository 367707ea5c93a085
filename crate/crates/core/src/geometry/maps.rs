use crate::error::{ensure_same_dims, Error, Result};

/// Row-major RGB image with interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f64; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [f64; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            values: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    /// Rec. 601 luma.
    pub fn luminance(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            values: self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Single-channel real grid (alpha maps, filter intermediates).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Plane {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(format!(
                "plane has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Per-pixel depth (camera-space z) with an explicit validity bitmap.
///
/// Invalid entries hold `0.0` and never enter statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_dense(width, height, vec![depth; width * height]).expect("constant depth")
    }

    /// All entries valid. Rejects negative or non-finite values.
    pub fn from_dense(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::from_parts(width, height, values, valid)
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::shape(format!(
                "depth map buffers ({}, {}) do not match {width}x{height}",
                values.len(),
                valid.len()
            )));
        }
        for (v, ok) in values.iter_mut().zip(&valid) {
            if *ok {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::param(format!("invalid depth value {v}")));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// Entries that are non-finite or negative become invalid.
    pub fn from_values_lossy(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite() && *v >= 0.0).collect();
        Self::from_parts(width, height, values, valid)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.values[i])
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// Raw buffer; invalid entries are `0.0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn set(&mut self, i: usize, depth: Option<f64>) {
        match depth {
            Some(d) if d.is_finite() && d >= 0.0 => {
                self.values[i] = d;
                self.valid[i] = true;
            }
            _ => {
                self.values[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter_map(|(v, ok)| ok.then_some(*v))
    }

    pub fn min_valid(&self) -> Option<f64> {
        self.valid_values().reduce(f64::min)
    }

    /// Multiplies valid entries by `k` (k ≥ 0).
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for (v, ok) in out.values.iter_mut().zip(&out.valid) {
            if *ok {
                *v *= k;
            }
        }
        out
    }

    /// Validity restricted to pixels where `mask` is true.
    pub fn restricted(&self, mask: &BinaryMask) -> Result<Self> {
        ensure_same_dims("restrict depth", self.dims(), mask.dims())?;
        let mut out = self.clone();
        for (i, m) in mask.values.iter().enumerate() {
            if !m {
                out.set(i, None);
            }
        }
        Ok(out)
    }
}

/// Median of a sample (average of the two middle elements for even length).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}

/// Height×width boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<bool>,
}

impl BinaryMask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(format!(
                "mask has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.values[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn not(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}
