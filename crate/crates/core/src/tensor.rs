//! Dense rank-3 tensor storage and the small kernel set the detection head
//! needs: 1x1 convolution, SiLU, and valid (unpadded) average pooling.
//!
//! Layout is row-major `(channel, row, column)` so pooling along the width is
//! contiguous. There is no batch dimension; the pipeline runs one image per
//! call. Values are held in f64 and all accumulation happens in f64, which
//! keeps the oracle comparisons in the test suite tight.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes of the tensor fixture container.
pub const TENSOR_MAGIC: [u8; 4] = *b"ASYT";
/// Current fixture format version.
pub const TENSOR_FORMAT_VERSION: u32 = 1;

/// Dense `(channels, height, width)` tensor of finite f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking dimensions and finiteness.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "tensor dimensions must all be >= 1, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::shape(
                "tensor construction",
                format!("{expected} values ({channels}x{height}x{width})"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "tensor contains non-finite value {bad}"
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Tensor::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    /// Builds a tensor by evaluating `f(channel, row, col)` at every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Tensor::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)` triple.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.height + i) * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        debug_assert!(c < self.channels && i < self.height && j < self.width);
        self.data[self.index(c, i, j)]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f64) {
        let idx = self.index(c, i, j);
        self.data[idx] = value;
    }

    /// Copies channels `[start, end)` into a new tensor with the same spatial
    /// extent. Used to split multi-anchor prediction maps into per-anchor
    /// 85-channel views.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.channels {
            return Err(Error::shape(
                "channel slice",
                format!("range within 0..{}", self.channels),
                format!("{start}..{end}"),
            ));
        }
        let plane = self.height * self.width;
        let data = self.data[start * plane..end * plane].to_vec();
        Tensor::new(end - start, self.height, self.width, data)
    }

    /// Writes the binary fixture container: magic, format version, dims as
    /// little-endian u32, then the data as little-endian f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(4 + 4 + 12 + 4 * self.data.len());
        bytes.extend_from_slice(&TENSOR_MAGIC);
        bytes.extend_from_slice(&TENSOR_FORMAT_VERSION.to_le_bytes());
        for dim in [self.channels, self.height, self.width] {
            let dim = u32::try_from(dim).map_err(|_| {
                Error::Validation(format!("dimension {dim} exceeds the u32 fixture limit"))
            })?;
            bytes.extend_from_slice(&dim.to_le_bytes());
        }
        for v in &self.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Loads a fixture container, validating magic, version, declared shape
    /// against the payload length, and value finiteness.
    pub fn load(path: &Path) -> Result<Tensor> {
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;

        let fail = |msg: String| Error::Validation(format!("{}: {msg}", path.display()));
        if bytes.len() < 20 {
            return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
        }
        if bytes[0..4] != TENSOR_MAGIC {
            return Err(fail("bad magic, not a tensor fixture".to_string()));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != TENSOR_FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported format version {version} (expected {TENSOR_FORMAT_VERSION})"
            )));
        }
        let channels = u32_at(8) as usize;
        let height = u32_at(12) as usize;
        let width = u32_at(16) as usize;
        let count = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| fail("declared shape overflows".to_string()))?;
        let expected_len = 20 + 4 * count;
        if bytes.len() != expected_len {
            return Err(fail(format!(
                "payload length {} does not match declared shape {channels}x{height}x{width} \
                 (expected {expected_len} bytes)",
                bytes.len()
            )));
        }
        let data = bytes[20..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Tensor::new(channels, height, width, data)
            .map_err(|e| fail(format!("invalid payload: {e}")))
    }
}

/// Row-major `rows x cols` matrix of finite f64 values; the weight carrier
/// for 1x1 convolutions (`rows` = output channels, `cols` = input channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix construction",
                format!("{} values ({rows}x{cols})", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "matrix contains non-finite value {bad}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Identity matrix of the given size.
    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    /// Number of values, i.e. the learnable parameter count of the matrix.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 1x1 convolution: every spatial position maps its channel vector through
/// `weights * v + bias`. Output shape is `(weights.rows, H, W)`.
pub fn conv1x1(input: &Tensor, weights: &Matrix, bias: &[f64]) -> Result<Tensor> {
    if weights.cols() != input.channels() {
        return Err(Error::shape(
            "conv1x1 weights",
            format!("{} input channels", weights.cols()),
            format!("{} input channels", input.channels()),
        ));
    }
    if bias.len() != weights.rows() {
        return Err(Error::shape(
            "conv1x1 bias",
            format!("{} values", weights.rows()),
            format!("{} values", bias.len()),
        ));
    }

    let plane = input.height() * input.width();
    let out_channels = weights.rows();
    let mut out = vec![0.0f64; out_channels * plane];
    for o in 0..out_channels {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(bias[o]);
        for c in 0..input.channels() {
            let w = weights.at(o, c);
            if w == 0.0 {
                continue;
            }
            let src = &input.data()[c * plane..(c + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    Tensor::new(out_channels, input.height(), input.width(), out)
}

/// SiLU activation, `x * sigmoid(x)`, applied elementwise.
pub fn silu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| x * sigmoid(x)).collect();
    // |silu(x)| <= |x|, so finiteness is preserved.
    Tensor::new(input.channels(), input.height(), input.width(), data)
        .expect("silu preserves shape and finiteness")
}

/// Valid (unpadded) average pooling over `kernel` windows with the given
/// stride. Output spatial dims are `((H-kh)/sh+1, (W-kw)/sw+1)`; channels
/// are preserved.
pub fn avg_pool(input: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor> {
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    if kh == 0 || kw == 0 {
        return Err(Error::Config(format!(
            "pooling kernel must be >= 1 in both dimensions, got ({kh},{kw})"
        )));
    }
    if sh == 0 || sw == 0 {
        return Err(Error::Config(format!(
            "pooling stride must be >= 1 in both dimensions, got ({sh},{sw})"
        )));
    }
    if kh > input.height() || kw > input.width() {
        return Err(Error::shape(
            "avg_pool kernel",
            format!("kernel within {}x{}", input.height(), input.width()),
            format!("({kh},{kw})"),
        ));
    }

    let out_h = (input.height() - kh) / sh + 1;
    let out_w = (input.width() - kw) / sw + 1;
    let window = (kh * kw) as f64;
    let mut data = Vec::with_capacity(input.channels() * out_h * out_w);
    for c in 0..input.channels() {
        for oi in 0..out_h {
            for oj in 0..out_w {
                let mut sum = 0.0f64;
                for di in 0..kh {
                    for dj in 0..kw {
                        sum += input.get(c, oi * sh + di, oj * sw + dj);
                    }
                }
                data.push(sum / window);
            }
        }
    }
    Tensor::new(input.channels(), out_h, out_w, data)
}
