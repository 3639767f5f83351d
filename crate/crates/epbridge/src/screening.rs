//! Warm-started CD solution paths over the hyper-parameter `b`.
//!
//! Backward screening raises `b` along `b_l = g_l log(p)/p`, so shrinkage
//! grows and variables drop out. Forward screening raises `t = 1/b` from 0
//! (everything zero) to `p / log p`, letting variables in, and picks `t` by
//! K-fold cross-validation.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cdopt::{run_cd, CdConfig, CdSolution};
use crate::data::{mat_vec, Dataset, Standardizer};
use crate::distributions::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenPath {
    /// `b_l` (backward) or `t_l` (forward).
    pub grid: Vec<f64>,
    pub solutions: Vec<CdSolution>,
    pub direction: Direction,
    pub chosen_index: Option<usize>,
    /// Cross-validation error per grid point (forward only).
    pub cv_error: Option<Vec<f64>>,
}

impl ScreenPath {
    pub fn chosen(&self) -> Option<&CdSolution> {
        self.chosen_index.map(|i| &self.solutions[i])
    }

    /// One row per grid point: `grid_value, s_hat, sigma2_hat, loss,
    /// beta_sparse_triplets`, the last being `j=value` pairs (1-based `j`)
    /// separated by `;`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["grid_value", "s_hat", "sigma2_hat", "loss", "beta_sparse_triplets"])?;
        for (g, s) in self.grid.iter().zip(&self.solutions) {
            let triplets: Vec<String> = s
                .beta_hat
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, b)| format!("{}={b:e}", j + 1))
                .collect();
            w.write_record([
                format!("{g:e}"),
                s.s_hat.to_string(),
                s.sigma2_hat.map_or_else(|| "NA".to_owned(), |v| format!("{v:e}")),
                format!("{:e}", s.final_loss),
                triplets.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `g = 1, 2, ..., 100`.
pub fn default_backward_grid() -> Vec<f64> {
    (1..=100).map(f64::from).collect()
}

/// 100 evenly spaced `t` from 0 to `p / log p`.
pub fn default_forward_grid(p: usize) -> Vec<f64> {
    let top = p as f64 / (p as f64).ln();
    (0..100).map(|i| top * i as f64 / 99.0).collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Runs CD at each `b` in turn, each warm-started from the previous solution
/// (the first from zero).
fn walk(data: &Dataset, config: &CdConfig, bs: impl IntoIterator<Item = f64>) -> Result<Vec<CdSolution>> {
    let mut beta = vec![0.0; data.p];
    let mut out = Vec::new();
    for (index, b) in bs.into_iter().enumerate() {
        let sol =
            run_cd(data, &config.with_b(b), &beta).map_err(|e| Error::AtGridPoint { index, source: Box::new(e) })?;
        beta.clone_from(&sol.beta_hat);
        out.push(sol);
    }
    Ok(out)
}

/// Index minimizing the extended BIC
/// `n ln(RSS/n) + s_hat (ln n + 2 ln p)` over the unsaturated solutions
/// (`s_hat < n`); ties go to the earlier grid point.
pub fn ebic_index(data: &Dataset, solutions: &[CdSolution]) -> Option<usize> {
    let (n, p) = (data.n as f64, data.p as f64);
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in solutions.iter().enumerate() {
        if s.s_hat >= data.n {
            continue;
        }
        let rss = data.rss(&s.beta_hat).max(f64::MIN_POSITIVE);
        let score = n * (rss / n).ln() + s.s_hat as f64 * (n.ln() + 2.0 * p.ln());
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

/// Backward path over `b_l = g_l log(p) / p`, with the grid point chosen by
/// [`ebic_index`].
pub fn backward_screen(data: &Dataset, gamma: u32, grid_g: &[f64], config: &CdConfig) -> Result<ScreenPath> {
    if grid_g.is_empty() || !strictly_increasing(grid_g) || grid_g[0] <= 0.0 {
        return Err(Error::Config("backward grid must be positive and strictly increasing".into()));
    }
    let p = data.p as f64;
    let grid: Vec<f64> = grid_g.iter().map(|g| g * p.ln() / p).collect();
    let config = CdConfig { gamma, ..*config };
    let solutions = walk(data, &config, grid.iter().copied())?;
    Ok(ScreenPath {
        chosen_index: ebic_index(data, &solutions),
        grid,
        solutions,
        direction: Direction::Backward,
        cv_error: None,
    })
}

fn t_to_b(t: f64) -> f64 {
    if t == 0.0 {
        f64::INFINITY
    } else {
        1.0 / t
    }
}

/// Row indices of each fold: a seeded permutation cut into `k` contiguous
/// blocks whose sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    folds
}

/// Held-out squared error of every grid point for one fold. The training
/// rows are re-standardized and the validation rows mapped with the training
/// statistics.
fn fold_errors(data: &Dataset, held_out: &[usize], grid_b: &[f64], config: &CdConfig) -> Result<Vec<f64>> {
    let mut in_fold = vec![false; data.n];
    held_out.iter().for_each(|&i| in_fold[i] = true);
    let train: Vec<usize> = (0..data.n).filter(|&i| !in_fold[i]).collect();
    let (xt, yt) = data.rows(&train);
    let (xv, yv) = data.rows(held_out);
    let st = Standardizer::fit(&xt, &yt);
    let (xt, yt) = st.apply(&xt, &yt);
    let (xv, yv) = st.apply(&xv, &yv);
    let mut train_data = Dataset::new(xt, yt)?;
    train_data.standardized = true;
    let path = walk(&train_data, config, grid_b.iter().copied())?;
    Ok(path
        .iter()
        .map(|s| {
            let fit = mat_vec(&xv, &s.beta_hat);
            yv.iter().zip(fit).map(|(y, f)| (y - f) * (y - f)).sum()
        })
        .collect())
}

/// Forward path over `t` (`b = 1/t`, `t = 0` meaning `1/b = 0`) with `k`-fold
/// cross-validation. `Err_l = (1/n) sum_folds ||y_k - X_k beta^(k,l)||^2`;
/// the chosen index is the first minimizer (smallest `t`). The returned
/// solutions are the full-data warm-started walk, so `solutions[chosen]` is
/// the refit that walks `t_1..t_chosen`.
pub fn forward_screen_cv(
    data: &Dataset,
    gamma: u32,
    k: usize,
    grid_t: &[f64],
    config: &CdConfig,
    seed: u64,
) -> Result<ScreenPath> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if grid_t.is_empty() || !strictly_increasing(grid_t) || grid_t[0] < 0.0 {
        return Err(Error::Config("forward grid must be non-negative and strictly increasing".into()));
    }
    let folds = fold_assignment(data.n, k, seed);
    if folds.iter().any(|f| f.len() <= 1 || data.n - f.len() <= 1) {
        return Err(Error::Config(format!("{k} folds leave a fold or training set with at most one row")));
    }
    let config = CdConfig { gamma, ..*config };
    let grid_b: Vec<f64> = grid_t.iter().map(|t| t_to_b(*t)).collect();
    let per_fold: Vec<Vec<f64>> =
        folds.par_iter().map(|f| fold_errors(data, f, &grid_b, &config)).collect::<Result<_>>()?;
    let n = data.n as f64;
    let cv: Vec<f64> = (0..grid_t.len()).map(|l| per_fold.iter().map(|e| e[l]).sum::<f64>() / n).collect();
    let mut chosen = 0;
    for (l, e) in cv.iter().enumerate() {
        if *e < cv[chosen] {
            chosen = l;
        }
    }
    let solutions = walk(data, &config, grid_b.iter().copied())?;
    Ok(ScreenPath {
        grid: grid_t.to_vec(),
        solutions,
        direction: Direction::Forward,
        chosen_index: Some(chosen),
        cv_error: Some(cv),
    })
}
