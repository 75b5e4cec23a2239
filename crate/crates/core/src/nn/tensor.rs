use serde::{Deserialize, Serialize};

/// Dense row-major `rows x cols` array; signals are `channels x time`,
/// vectors are `len x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape {rows}x{cols} vs {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(n, 1, data)
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(1, 1, vec![v])
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Last column as a vector.
    pub fn last_col(&self) -> Tensor {
        Tensor::vector((0..self.rows).map(|r| self.get(r, self.cols - 1)).collect())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Causal dilated convolution kernel, `out x in x taps`; tap `i` multiplies
/// the input `i * dilation` steps in the past.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub taps: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn new(out_channels: usize, in_channels: usize, taps: usize, data: Vec<f64>) -> Self {
        assert_eq!(out_channels * in_channels * taps, data.len());
        Self {
            out_channels,
            in_channels,
            taps,
            data,
        }
    }

    pub fn zeros(out_channels: usize, in_channels: usize, taps: usize) -> Self {
        Self::new(out_channels, in_channels, taps, vec![0.0; out_channels * in_channels * taps])
    }
}

/// Raw causal dilated convolution producing the last `out_len` output
/// positions of an input with `x_cols` columns; reads before column 0 are zero.
///
/// Each output is `bias + sum over (in channel, tap)` accumulated in that
/// order, so two calls that see the same operands in the same positions give
/// bit-identical results.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    x: &[f64],
    x_cols: usize,
    w: &[f64],
    bias: Option<&[f64]>,
    cout: usize,
    cin: usize,
    taps: usize,
    dilation: usize,
    out_len: usize,
) -> Vec<f64> {
    debug_assert!(out_len <= x_cols);
    let off = x_cols - out_len;
    let mut y = vec![0.0; cout * out_len];
    for co in 0..cout {
        let yr = &mut y[co * out_len..(co + 1) * out_len];
        if let Some(b) = bias {
            yr.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..cin {
            let xr = &x[ci * x_cols..(ci + 1) * x_cols];
            for i in 0..taps {
                let wv = w[(co * cin + ci) * taps + i];
                let lag = dilation * i;
                // output j reads x[off + j - lag]; valid when off + j >= lag
                let j0 = lag.saturating_sub(off);
                if j0 >= out_len {
                    continue;
                }
                let src = &xr[off + j0 - lag..off + out_len - lag];
                for (yv, xv) in yr[j0..].iter_mut().zip(src) {
                    *yv += wv * xv;
                }
            }
        }
    }
    y
}

/// Accumulates gradients of [`conv_forward`] into `dx`, `dw`, `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    x_cols: usize,
    w: &[f64],
    dy: &[f64],
    cout: usize,
    cin: usize,
    taps: usize,
    dilation: usize,
    out_len: usize,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let off = x_cols - out_len;
    if let Some(db) = db {
        for co in 0..cout {
            db[co] += dy[co * out_len..(co + 1) * out_len].iter().sum::<f64>();
        }
    }
    for co in 0..cout {
        let dyr = &dy[co * out_len..(co + 1) * out_len];
        for ci in 0..cin {
            let base = ci * x_cols;
            for i in 0..taps {
                let lag = dilation * i;
                let j0 = lag.saturating_sub(off);
                if j0 >= out_len {
                    continue;
                }
                let widx = (co * cin + ci) * taps + i;
                let lo = base + off + j0 - lag;
                let hi = base + off + out_len - lag;
                if let Some(dw) = dw.as_deref_mut() {
                    let s: f64 = dyr[j0..].iter().zip(&x[lo..hi]).map(|(a, b)| a * b).sum();
                    dw[widx] += s;
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let wv = w[widx];
                    for (d, g) in dx[lo..hi].iter_mut().zip(&dyr[j0..]) {
                        *d += wv * g;
                    }
                }
            }
        }
    }
}
