//! Design matrix plus response, the common input of every solver.

use faer::Mat;

use crate::{Error, Result};

/// Column `j` of a column-major matrix as a contiguous slice.
pub(crate) fn col(x: &Mat<f64>, j: usize) -> &[f64] {
    x.col(j).try_as_col_major().expect("owned faer matrices store columns contiguously").as_slice()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `X beta`, skipping zero coefficients.
pub(crate) fn mat_vec(x: &Mat<f64>, beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, v) in out.iter_mut().zip(col(x, j)) {
                *o += v * b;
            }
        }
    }
    out
}

/// `X^T v`.
pub(crate) fn mat_t_vec(x: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..x.ncols()).map(|j| dot(col(x, j), v)).collect()
}

/// Regression data. When `standardized` is set, every column has mean 0 and
/// squared norm `n` (or is identically zero), and `y` has mean 0.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub standardized: bool,
    pub col_sq_norms: Vec<f64>,
}

/// Centering and scaling statistics of a training sample, reusable on
/// held-out rows.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
}

impl Standardizer {
    pub fn fit(x: &Mat<f64>, y: &[f64]) -> Self {
        let n = x.nrows() as f64;
        let mut x_mean = Vec::with_capacity(x.ncols());
        let mut x_scale = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let c = col(x, j);
            let m = c.iter().sum::<f64>() / n;
            let ss: f64 = c.iter().map(|v| (v - m) * (v - m)).sum();
            x_mean.push(m);
            // a constant column stays zero after centering
            x_scale.push(if ss > 0.0 { (ss / n).sqrt() } else { 1.0 });
        }
        let y_mean = y.iter().sum::<f64>() / n;
        Standardizer { x_mean, x_scale, y_mean }
    }

    pub fn apply(&self, x: &Mat<f64>, y: &[f64]) -> (Mat<f64>, Vec<f64>) {
        let xs = Mat::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_scale[j]);
        let ys = y.iter().map(|v| v - self.y_mean).collect();
        (xs, ys)
    }
}

impl Dataset {
    /// Wraps data as given, without transforming it.
    pub fn new(x: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::Config(format!("X has {n} rows but y has {} entries", y.len())));
        }
        if n == 0 || p == 0 {
            return Err(Error::Config("empty design".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite response".into()));
        }
        let mut col_sq_norms = Vec::with_capacity(p);
        for j in 0..p {
            let c = col(&x, j);
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite entry in column {j}")));
            }
            col_sq_norms.push(dot(c, c));
        }
        Ok(Dataset { x, y, n, p, standardized: false, col_sq_norms })
    }

    /// Centers every column and rescales it to squared norm `n`; centers `y`.
    pub fn standardize(x: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let raw = Dataset::new(x, y)?;
        let st = Standardizer::fit(&raw.x, &raw.y);
        let (xs, ys) = st.apply(&raw.x, &raw.y);
        let mut d = Dataset::new(xs, ys)?;
        d.standardized = true;
        Ok(d)
    }

    pub fn col(&self, j: usize) -> &[f64] {
        col(&self.x, j)
    }

    /// `y - X beta`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let fit = mat_vec(&self.x, beta);
        self.y.iter().zip(fit).map(|(y, f)| y - f).collect()
    }

    pub fn rss(&self, beta: &[f64]) -> f64 {
        self.residual(beta).iter().map(|r| r * r).sum()
    }

    /// Raw (untransformed) copy of the selected rows.
    pub fn rows(&self, idx: &[usize]) -> (Mat<f64>, Vec<f64>) {
        let x = Mat::from_fn(idx.len(), self.p, |i, j| self.x[(idx[i], j)]);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (x, y)
    }
}
