//! Empirical distributions of scalar model outputs.
//!
//! Outputs are summarised on a uniform grid `η^j = lo + j·delta`, `j = 1..=steps`,
//! spanning the range of the sample the grid was built from. A [`DiscreteCdf`]
//! stores the cumulative fraction of the sample at each grid point, which is all
//! the regularizer needs to quantile-match one group's outputs onto the other's.
//!
//! Cells are half-open on the left: cell `j` (for `j` in `0..steps`) is
//! `(η^j, η^{j+1}]`, except the first one which is closed at `lo`. A sample value
//! therefore always contributes to the mass of the cell it is located in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid step substituted when every sample has the same value.
pub const GRID_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    lo: f64,
    delta: f64,
    steps: usize,
}

impl OutputGrid {
    pub fn new(lo: f64, delta: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Precondition(format!(
                "grid needs at least 2 steps, got {steps}"
            )));
        }
        if !lo.is_finite() || !delta.is_finite() || delta <= 0.0 {
            return Err(Error::Precondition(format!(
                "grid bounds must be finite with positive step (lo={lo}, delta={delta})"
            )));
        }
        Ok(Self { lo, delta, steps })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Upper end of the grid, `η^{steps}`.
    pub fn hi(&self) -> f64 {
        self.point(self.steps)
    }

    /// Grid point `η^j`; `j = 0` is the lower bound itself.
    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.delta
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi())
    }

    /// Index of the cell `(η^j, η^{j+1}]` containing `x`, in `0..steps`.
    ///
    /// Values below the grid fall in the first cell and values above it in the last.
    pub fn cell_of(&self, x: f64) -> usize {
        // Initial guess from arithmetic, corrected against the exact grid points so the
        // answer agrees with the `x <= η^j` comparisons used to build CDFs.
        let guess = ((x - self.lo) / self.delta).ceil();
        let mut k = if guess.is_nan() || guess < 1.0 {
            1
        } else {
            (guess as usize).clamp(1, self.steps)
        };
        while k > 1 && x <= self.point(k - 1) {
            k -= 1;
        }
        while k < self.steps && x > self.point(k) {
            k += 1;
        }
        k - 1
    }
}

/// Builds the output grid of a sample: `lo = min`, `delta = (max − min) / steps`.
pub fn build_grid(samples: &[f64], steps: usize) -> Result<OutputGrid> {
    if samples.is_empty() {
        return Err(Error::Precondition("cannot build a grid from an empty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("sample contains non-finite values".into()));
    }
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let mut delta = (max - min) / steps as f64;
    if !(delta > 0.0) {
        delta = GRID_EPSILON;
    }
    OutputGrid::new(min, delta, steps)
}

/// Cumulative distribution of a sample evaluated on an [`OutputGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCdf {
    grid: OutputGrid,
    /// `values[j - 1] = H(η^j)` for `j = 1..=steps`.
    values: Vec<f64>,
    count: usize,
}

impl DiscreteCdf {
    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of samples summarised.
    pub fn count(&self) -> usize {
        self.count
    }

    /// `H^j` for `j` in `0..=steps`, with `H^0 = 0` so that the first cell
    /// (closed at `lo`) carries the mass of the sample minimum.
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.values[j - 1]
        }
    }

    /// `H^{j+1} − H^j`, the fraction of the sample in cell `j`.
    pub fn cell_mass(&self, j: usize) -> f64 {
        self.at(j + 1) - self.at(j)
    }

    /// CDF value at the grid point closing the cell that contains `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.values[self.grid.cell_of(x)]
    }
}

/// `values[j] = #{x ≤ η^j} / n`. Samples outside the grid are clamped into it,
/// so the last value is always exactly 1.
pub fn empirical_cdf(samples: &[f64], grid: &OutputGrid) -> Result<DiscreteCdf> {
    if samples.is_empty() {
        return Err(Error::Precondition("cannot build a CDF from an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Precondition("sample contains NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n = sorted.len();
    let steps = grid.steps();
    let mut values = Vec::with_capacity(steps);
    let mut below = 0usize;
    for j in 1..steps {
        let eta = grid.point(j);
        while below < n && sorted[below] <= eta {
            below += 1;
        }
        values.push(below as f64 / n as f64);
    }
    values.push(1.0);

    Ok(DiscreteCdf {
        grid: *grid,
        values,
        count: n,
    })
}

/// Generalized inverse: the smallest grid point `η^j` with `H(η^j) ≥ p`.
pub fn inverse_cdf(cdf: &DiscreteCdf, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(inverse_unchecked(cdf, p))
}

#[inline]
fn inverse_unchecked(cdf: &DiscreteCdf, p: f64) -> f64 {
    let idx = cdf.values.partition_point(|&v| v < p);
    cdf.grid.point(idx.min(cdf.values.len() - 1) + 1)
}

/// Quantile-matched counterpart of `x` in the target distribution:
/// `H_target⁻¹(H_source(x))`. `x` is clamped into the source grid.
pub fn correction(cdf_target: &DiscreteCdf, cdf_source: &DiscreteCdf, x: f64) -> f64 {
    let x = cdf_source.grid.clamp(x);
    inverse_unchecked(cdf_target, cdf_source.evaluate(x))
}

/// The two group-conditional samples of one scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    group0: Vec<f64>,
    group1: Vec<f64>,
}

impl SamplePair {
    pub fn new(group0: Vec<f64>, group1: Vec<f64>) -> Result<Self> {
        for (name, sample) in [("group0", &group0), ("group1", &group1)] {
            if sample.is_empty() {
                return Err(Error::Precondition(format!("{name} sample is empty")));
            }
            if let Some(x) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Precondition(format!(
                    "{name} contains {x}, outside [0, 1]"
                )));
            }
        }
        Ok(Self { group0, group1 })
    }

    pub fn group0(&self) -> &[f64] {
        &self.group0
    }

    pub fn group1(&self) -> &[f64] {
        &self.group1
    }

    /// Both samples pooled, group 0 first.
    pub fn pooled(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.group0.len() + self.group1.len());
        all.extend_from_slice(&self.group0);
        all.extend_from_slice(&self.group1);
        all
    }
}

/// Squared 1-D Wasserstein-2 distance between the two groups of `pair`.
///
/// The quantile integral is evaluated with the midpoint rule on `steps` uniform
/// τ-cells (step `1 / steps`); each quantile is the left-continuous generalized
/// inverse of the group's empirical distribution.
pub fn w2_distance(pair: &SamplePair, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Precondition("w2_distance needs at least one τ step".into()));
    }
    let q0 = Quantiles::new(&pair.group0);
    let q1 = Quantiles::new(&pair.group1);
    let tau_step = 1.0 / steps as f64;
    let total: f64 = (0..steps)
        .map(|j| {
            let tau = (j as f64 + 0.5) * tau_step;
            let d = q0.at(tau) - q1.at(tau);
            d * d
        })
        .sum();
    Ok(total * tau_step)
}

/// Sorted sample with generalized-inverse lookup.
struct Quantiles(Vec<f64>);

impl Quantiles {
    fn new(sample: &[f64]) -> Self {
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self(sorted)
    }

    /// Smallest `x` with `F(x) ≥ tau`, i.e. the `⌈tau·n⌉`-th order statistic.
    fn at(&self, tau: f64) -> f64 {
        let n = self.0.len();
        let rank = (tau * n as f64).ceil() as usize;
        self.0[rank.clamp(1, n) - 1]
    }
}
