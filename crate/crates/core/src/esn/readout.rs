//! Closed-form readout learning, the readout delay search and detection.

use log::warn;
use nalgebra::DMatrix;

use super::{ExtendedStateMatrix, Reservoir};
use crate::constellation::Constellation;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{energy, ridge_solve_cond, select_rows, CMat, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    /// `(cols of S) x outputs`.
    pub w_out: CMat,
    /// Readout delay chosen by the delay search (0 when fitted directly).
    pub chosen_delay: usize,
    /// Output columns whose pilot support was empty; their weights are zero.
    pub empty_columns: Vec<usize>,
    /// Largest condition number among the solved systems.
    pub condition: f64,
}

/// Absolute ridge from a factor relative to the mean diagonal of `S^H S`.
pub fn relative_ridge(s_bar: &CMat, factor: f64) -> f64 {
    if factor == 0.0 || s_bar.ncols() == 0 {
        return 0.0;
    }
    factor * energy(s_bar) / s_bar.ncols() as f64
}

/// `W_out = argmin ||S W - X||_F^2 + lambda ||W||_F^2`; `lambda = 0` gives `S^+ X`.
pub fn fit_full(s_bar: &CMat, x_train: &CMat, lambda: f64) -> Result<ReadoutWeights> {
    if s_bar.nrows() != x_train.nrows() {
        return Err(dim_err(
            format!("{} target rows", s_bar.nrows()),
            x_train.nrows(),
        ));
    }
    let (w_out, condition) = ridge_solve_cond(s_bar, x_train, lambda);
    Ok(ReadoutWeights {
        w_out,
        chosen_delay: 0,
        empty_columns: Vec::new(),
        condition,
    })
}

/// Column-separable masked least squares: output column `n` is fitted only on
/// the rows where `mask[:, n]` is set, i.e. `[diag(mask_n) S]^+ x_n` with ridge.
pub fn fit_masked(
    s_bar: &CMat,
    x_train: &CMat,
    mask: &DMatrix<bool>,
    lambda: f64,
) -> Result<ReadoutWeights> {
    if s_bar.nrows() != x_train.nrows() || x_train.shape() != mask.shape() {
        return Err(dim_err(
            format!("targets and mask of {} rows", s_bar.nrows()),
            format!("{:?} / {:?}", x_train.shape(), mask.shape()),
        ));
    }
    let mut w_out = CMat::zeros(s_bar.ncols(), x_train.ncols());
    let mut empty_columns = Vec::new();
    let mut condition: f64 = 0.0;
    // Columns sharing a support share one factorization.
    let mut done = vec![false; x_train.ncols()];
    for n in 0..x_train.ncols() {
        if done[n] {
            continue;
        }
        let group: Vec<usize> = (n..x_train.ncols())
            .filter(|&j| !done[j] && mask.column(j) == mask.column(n))
            .collect();
        for &j in &group {
            done[j] = true;
        }
        let rows: Vec<usize> = (0..mask.nrows()).filter(|&r| mask[(r, n)]).collect();
        if rows.is_empty() {
            warn!("readout columns {group:?} have no pilot support; weights left at zero");
            empty_columns.extend(group);
            continue;
        }
        let a = select_rows(s_bar, &rows);
        let b = CMat::from_fn(rows.len(), group.len(), |r, c| x_train[(rows[r], group[c])]);
        let (w, cond) = ridge_solve_cond(&a, &b, lambda);
        condition = condition.max(cond);
        for (c, &j) in group.iter().enumerate() {
            w_out.set_column(j, &w.column(c));
        }
    }
    empty_columns.sort_unstable();
    Ok(ReadoutWeights {
        w_out,
        chosen_delay: 0,
        empty_columns,
        condition,
    })
}

/// `Z = S W_out`.
pub fn predict(s_bar: &CMat, w: &ReadoutWeights) -> Result<CMat> {
    if s_bar.ncols() != w.w_out.nrows() {
        return Err(dim_err(
            format!("{} feature columns", w.w_out.nrows()),
            s_bar.ncols(),
        ));
    }
    Ok(s_bar * &w.w_out)
}

/// Outcome of the readout delay search.
#[derive(Debug, Clone)]
pub struct DelaySearch {
    pub weights: ReadoutWeights,
    /// Normalized training residual for every delay `0..=l_forget`.
    pub losses: Vec<f64>,
    /// Extended state of the test input aligned to the chosen delay.
    pub s_test: ExtendedStateMatrix,
}

fn masked_residual(target: &CMat, pred: &CMat, mask: Option<&DMatrix<bool>>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (t, p)) in target.iter().zip(pred.iter()).enumerate() {
        if mask.is_none_or(|m| m.as_slice()[i]) {
            num += (t - p).norm_sqr();
            den += t.norm_sqr();
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn pad_rows(inputs: &CMat, extra: usize) -> CMat {
    let mut out = CMat::zeros(inputs.nrows() + extra, inputs.ncols());
    out.rows_mut(0, inputs.nrows()).copy_from(inputs);
    out
}

/// Readout training with a search over the output delay.
///
/// For each `l` in `0..=l_forget` the input is extended with `l` zero rows,
/// the first `l` rows of the extended state are dropped so row `t` lines up
/// with target row `t`, and a readout is fitted (masked when `mask` is given).
/// The loss is `||mask . (X - S_l W)||_F / ||mask . X||_F`; the smallest loss
/// wins, ties going to the smaller delay. `y_test = None` means the test input
/// is the training input.
pub fn train_with_delay_search(
    r: &Reservoir,
    y_train: &CMat,
    y_test: Option<&CMat>,
    targets: &CMat,
    mask: Option<&DMatrix<bool>>,
) -> Result<DelaySearch> {
    let cfg = r.config();
    let steps = y_train.nrows();
    if cfg.l_forget >= steps {
        return Err(Error::Config(format!(
            "l_forget {} must be smaller than the sequence length {steps}",
            cfg.l_forget
        )));
    }
    if targets.nrows() != steps {
        return Err(dim_err(format!("{steps} target rows"), targets.nrows()));
    }
    if let Some(m) = mask {
        if !m.iter().any(|&b| b) {
            return Err(Error::TooFewPilots("empty pilot support".into()));
        }
    }
    // States depend only on past inputs, so one run with the longest padding
    // serves every delay.
    let train_full = r.run(&pad_rows(y_train, cfg.l_forget))?;
    let test_full = match y_test {
        Some(y) => Some(r.run(&pad_rows(y, cfg.l_forget))?),
        None => None,
    };

    let mut losses = Vec::with_capacity(cfg.l_forget + 1);
    let mut best: Option<(f64, ReadoutWeights)> = None;
    for l in 0..=cfg.l_forget {
        let s_l = train_full.slice(l, steps).s_bar;
        let lambda = relative_ridge(&s_l, cfg.ridge);
        let mut w = match mask {
            Some(m) => fit_masked(&s_l, targets, m, lambda)?,
            None => fit_full(&s_l, targets, lambda)?,
        };
        w.chosen_delay = l;
        let loss = masked_residual(targets, &predict(&s_l, &w)?, mask);
        losses.push(loss);
        // Losses within rounding of each other count as ties.
        if best.as_ref().is_none_or(|(b, _)| loss < *b - 1e-9 * b.max(1e-12)) {
            best = Some((loss, w));
        }
    }
    let (_, weights) = best.expect("at least one delay");
    let l = weights.chosen_delay;
    let s_test = test_full.as_ref().unwrap_or(&train_full).slice(l, steps);
    Ok(DelaySearch {
        weights,
        losses,
        s_test,
    })
}

/// Hard decisions from readout outputs.
///
/// `prediction` is `m x n` (one antenna). With `data_mask` the decisions are
/// taken on the cells where it is set and left at zero elsewhere (interleaved
/// pilots: the complement of the pilot support). `known_pilot` is subtracted
/// first (superimposed pilots), leaving the data plus the helper interference,
/// which the quantizer absorbs.
pub fn detect(
    prediction: &CMat,
    c: &Constellation,
    data_mask: Option<&DMatrix<bool>>,
    known_pilot: Option<&CMat>,
) -> CMat {
    let soft = match known_pilot {
        Some(p) => prediction - p,
        None => prediction.clone(),
    };
    CMat::from_fn(soft.nrows(), soft.ncols(), |r, k| {
        if data_mask.is_none_or(|m| m[(r, k)]) {
            c.quantize(soft[(r, k)])
        } else {
            ZERO
        }
    })
}
