//! Dense kernels over row-major slices. A matrix is `(data, cols)`; `off`
//! selects a column window so one stored matrix can act as several blocks.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[r] += Σ_k w[r, off + k] · x[k]` for `r < out.len()`.
pub fn gemv_acc(out: &mut [f64], w: &[f64], cols: usize, off: usize, x: &[f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols + off..r * cols + off + x.len()];
        *o += dot(row, x);
    }
}

/// `out[k] += Σ_r w[r, off + k] · y[r]` for `k < out.len()`.
pub fn gemv_t_acc(out: &mut [f64], w: &[f64], cols: usize, off: usize, y: &[f64]) {
    let n = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols + off..r * cols + off + n];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * yr;
        }
    }
}

/// `g[r, off + k] += y[r] · x[k]`.
pub fn outer_acc(g: &mut [f64], cols: usize, off: usize, y: &[f64], x: &[f64]) {
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols + off..r * cols + off + x.len()];
        for (gv, &xv) in row.iter_mut().zip(x) {
            *gv += yr * xv;
        }
    }
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax with max-subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
