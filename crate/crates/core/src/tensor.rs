//! Dense row-major `f64` matrices and the handful of kernels the alignment
//! and grounding stages are built from: products, softmax, row
//! normalization, affine layers and multi-head attention.
//!
//! Every kernel is a pure function of its inputs. Shape errors surface as
//! [`Error::Contract`]; nothing panics on bad shapes.

use std::io::Write;

use crate::error::{Error, Result};

/// A dense matrix in row-major order. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps `data` as a `rows x cols` matrix.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(
                "Matrix::new",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::contract(
                "Matrix::new",
                format!("non-finite entry at flat index {i}"),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::contract(
                    "Matrix::from_rows",
                    format!("row {i} has {} columns, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Gathers the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column slice `[start, start + width)` of every row.
    pub fn column_block(&self, start: usize, width: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::contract(
                "add",
                format!(
                    "{}x{} + {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn ensure_finite(self, op: &'static str) -> Result<Matrix> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(self)
        } else {
            Err(Error::contract(op, "result overflowed to a non-finite value"))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::contract(
            "matmul",
            format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    out.ensure_finite("matmul")
}

/// Softmax along each row, stabilized by subtracting the row maximum.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    if m.cols == 0 {
        return out;
    }
    for r in 0..m.rows {
        let row = &mut out.data[r * m.cols..(r + 1) * m.cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Scales every row to unit Euclidean norm.
///
/// Fails with [`Error::RowDegenerate`] on the first row whose norm is below
/// `eps`.
pub fn l2_normalize_rows(m: &Matrix, eps: f64) -> Result<Matrix> {
    if !(eps > 0.0) {
        return Err(Error::Parameter {
            name: "eps",
            value: eps,
            reason: "must be positive",
        });
    }
    let mut out = m.clone();
    for r in 0..m.rows {
        let n = norm(m.row(r));
        if n < eps {
            return Err(Error::RowDegenerate {
                row: r,
                norm: n,
                eps,
            });
        }
        for x in &mut out.data[r * m.cols..(r + 1) * m.cols] {
            *x /= n;
        }
    }
    Ok(out)
}

/// Affine layer `x * w + b`, with `b` broadcast over rows.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if b.len() != w.cols {
        return Err(Error::contract(
            "linear",
            format!("bias of length {} for {} output columns", b.len(), w.cols),
        ));
    }
    let mut out = matmul(x, w)?;
    for r in 0..out.rows {
        for (o, bias) in out.data[r * w.cols..(r + 1) * w.cols].iter_mut().zip(b) {
            *o += bias;
        }
    }
    out.ensure_finite("linear")
}

/// Head layout for [`multi_head_attention`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub num_heads: usize,
    pub model_dim: usize,
    /// Logit scale applied per head, `1 / sqrt(model_dim / num_heads)`.
    pub scale: f64,
}

impl AttentionConfig {
    pub fn new(num_heads: usize, model_dim: usize) -> Result<Self> {
        if num_heads == 0 || model_dim == 0 || !model_dim.is_multiple_of(num_heads) {
            return Err(Error::Config(format!(
                "model_dim {model_dim} must be a positive multiple of num_heads {num_heads}"
            )));
        }
        let head_dim = model_dim / num_heads;
        Ok(Self {
            num_heads,
            model_dim,
            scale: 1.0 / (head_dim as f64).sqrt(),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}

/// Optional input and output projections for attention. Omitting them is
/// equivalent to four identity matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
}

/// Scaled dot-product attention split over `cfg.num_heads` column blocks.
///
/// Each head attends with `softmax(q_h k_hᵀ * scale) v_h`; head outputs are
/// concatenated and passed through the output projection.
pub fn multi_head_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &AttentionConfig,
    weights: Option<&AttentionWeights>,
) -> Result<Matrix> {
    let d = cfg.model_dim;
    if q.cols != d || k.cols != d || v.cols != d {
        return Err(Error::contract(
            "multi_head_attention",
            format!(
                "q/k/v widths {}/{}/{} vs model_dim {d}",
                q.cols, k.cols, v.cols
            ),
        ));
    }
    if k.rows != v.rows {
        return Err(Error::contract(
            "multi_head_attention",
            format!("{} keys but {} values", k.rows, v.rows),
        ));
    }
    if k.rows == 0 {
        return Err(Error::contract("multi_head_attention", "no keys"));
    }
    if cfg.num_heads == 0 || !d.is_multiple_of(cfg.num_heads) {
        return Err(Error::contract(
            "multi_head_attention",
            format!("model_dim {d} not divisible by {} heads", cfg.num_heads),
        ));
    }

    let projected;
    let (q, k, v) = match weights {
        Some(w) => {
            projected = (
                matmul(q, &w.query)?,
                matmul(k, &w.key)?,
                matmul(v, &w.value)?,
            );
            (&projected.0, &projected.1, &projected.2)
        }
        None => (q, k, v),
    };

    let hd = cfg.head_dim();
    let mut out = Matrix::zeros(q.rows, d);
    for h in 0..cfg.num_heads {
        let qh = q.column_block(h * hd, hd);
        let kh = k.column_block(h * hd, hd);
        let vh = v.column_block(h * hd, hd);
        let logits = matmul(&qh, &kh.transpose())?.scaled(cfg.scale);
        let head = matmul(&row_softmax(&logits), &vh)?;
        for r in 0..q.rows {
            out.data[r * d + h * hd..r * d + (h + 1) * hd].copy_from_slice(head.row(r));
        }
    }
    match weights {
        Some(w) => matmul(&out, &w.output),
        None => Ok(out),
    }
}

const MAGIC: &[u8; 4] = b"OVGM";

/// Encodes as `"OVGM"`, little-endian `u32` rows and cols, then the `f64`
/// payload in row-major order.
pub fn to_bytes(m: &Matrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * m.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for x in &m.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing OVGM header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "{} payload bytes for a {rows}x{cols} matrix",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

/// Debug export, one matrix row per line.
pub fn write_csv<W: Write>(m: &Matrix, mut w: W) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
