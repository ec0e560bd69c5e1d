//! Splitting one frame across several reservoirs in the Doppler-frequency domain.
//!
//! Every antenna block of a wide `M x (N count)` matrix gets a unitary DFT
//! along its Doppler axis. Columns of the result are then split into `k`
//! contiguous groups and each group is handled by its own reservoir. A row of
//! the pilot support that is fully occupied stays fully occupied after the
//! transform, which is why interleaved pilots need whole pilot rows here.

use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{dft_rows, CMat};
use crate::pilots::{unstack, FrameDataset, PilotScheme};

/// Places `count` vertically stacked `M x N` blocks side by side.
pub fn widen(stacked: &CMat, count: usize) -> Result<CMat> {
    let blocks = unstack(stacked, count)?;
    let (m, n) = blocks[0].shape();
    let mut out = CMat::zeros(m, n * count);
    for (i, b) in blocks.iter().enumerate() {
        out.columns_mut(i * n, n).copy_from(b);
    }
    Ok(out)
}

/// Inverse of [`widen`].
pub fn narrow(wide: &CMat, count: usize) -> Result<CMat> {
    if count == 0 || !wide.ncols().is_multiple_of(count) {
        return Err(dim_err(format!("columns divisible by {count}"), wide.ncols()));
    }
    let n = wide.ncols() / count;
    let blocks: Vec<CMat> = (0..count)
        .map(|i| wide.columns(i * n, n).into_owned())
        .collect();
    Ok(crate::pilots::vstack(blocks.iter()))
}

/// Unitary Doppler-axis DFT applied to each `n`-column block.
pub fn doppler_dft(wide: &CMat, n: usize, inverse: bool) -> CMat {
    let mut out = wide.clone();
    for b in 0..wide.ncols() / n {
        let mut block = out.columns(b * n, n).into_owned();
        dft_rows(&mut block, inverse);
        out.columns_mut(b * n, n).copy_from(&block);
    }
    out
}

/// Column groups of a `k`-way split of `n` Doppler bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRcPartition {
    n: usize,
    groups: Vec<std::ops::Range<usize>>,
}

impl MultiRcPartition {
    /// `k` groups of width `n / k`; the last group absorbs the remainder.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Config(format!(
                "number of reservoirs {k} must lie in 1..={n}"
            )));
        }
        let width = n / k;
        let groups = (0..k)
            .map(|g| g * width..if g + 1 == k { n } else { (g + 1) * width })
            .collect();
        Ok(Self { n, groups })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[std::ops::Range<usize>] {
        &self.groups
    }

    /// Wide column indices of group `g` across `blocks` antenna blocks.
    pub fn columns(&self, g: usize, blocks: usize) -> Vec<usize> {
        (0..blocks)
            .flat_map(|b| self.groups[g].clone().map(move |c| b * self.n + c))
            .collect()
    }

    pub fn split(&self, wide: &CMat, blocks: usize) -> Vec<CMat> {
        (0..self.k())
            .map(|g| wide.select_columns(&self.columns(g, blocks)))
            .collect()
    }

    /// Reassembles per-group outputs into a wide matrix.
    pub fn merge(&self, parts: &[CMat], blocks: usize) -> Result<CMat> {
        if parts.len() != self.k() {
            return Err(dim_err(format!("{} parts", self.k()), parts.len()));
        }
        let m = parts[0].nrows();
        let mut out = CMat::zeros(m, self.n * blocks);
        for (g, part) in parts.iter().enumerate() {
            let cols = self.columns(g, blocks);
            if part.shape() != (m, cols.len()) {
                return Err(dim_err(
                    format!("{m}x{}", cols.len()),
                    format!("{:?}", part.shape()),
                ));
            }
            for (j, &c) in cols.iter().enumerate() {
                out.set_column(c, &part.column(j));
            }
        }
        Ok(out)
    }
}

/// Data for one sub-reservoir, in the Doppler-frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDataset {
    pub group: usize,
    /// `M x (width n_r)` training inputs.
    pub y_train: CMat,
    /// `M x (width n_r)` detection inputs.
    pub y_test: CMat,
    /// `M x (width n_t)` training targets.
    pub x_train: CMat,
    /// Rows the readout is fitted on (interleaved pilots only).
    pub mask: Option<DMatrix<bool>>,
}

/// Transforms a frame dataset and splits it into `k` sub-datasets.
pub fn partition_multi_rc(
    ds: &FrameDataset,
    k: usize,
) -> Result<(MultiRcPartition, Vec<SubDataset>)> {
    let omega = ds.mask.omega();
    let (m, n) = omega.shape();
    let part = MultiRcPartition::new(n, k)?;
    let row_mask = match ds.scheme {
        PilotScheme::Interleaved => {
            let partial = (0..m).any(|l| {
                let row = omega.row(l);
                row.iter().any(|&b| b) && !row.iter().all(|&b| b)
            });
            if partial {
                return Err(Error::Scheme(
                    "the Doppler-domain split needs pilots on whole delay rows".into(),
                ));
            }
            Some((0..m).map(|l| omega[(l, 0)]).collect::<Vec<_>>())
        }
        PilotScheme::Superimposed => None,
    };
    let to_freq = |stacked: &CMat, count: usize| -> Result<CMat> {
        Ok(doppler_dft(&widen(stacked, count)?, n, false))
    };
    let y_train = part.split(&to_freq(&ds.y_train, ds.n_r)?, ds.n_r);
    let y_test = part.split(&to_freq(&ds.y_test, ds.n_r)?, ds.n_r);
    let x_train = part.split(&to_freq(&ds.x_train, ds.n_t)?, ds.n_t);
    let subs = (0..part.k())
        .zip(y_train.into_iter().zip(y_test).zip(x_train))
        .map(|(g, ((y_train, y_test), x_train))| {
            let mask = row_mask
                .as_ref()
                .map(|rows| DMatrix::from_fn(m, x_train.ncols(), |l, _| rows[l]));
            SubDataset {
                group: g,
                y_train,
                y_test,
                x_train,
                mask,
            }
        })
        .collect();
    Ok((part, subs))
}
