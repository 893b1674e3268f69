//! Pseudo-derivatives of the discretized W2 penalty with respect to individual
//! model outputs, and the per-batch reference sampling that feeds the CDFs.
//!
//! For an output `x` of group `s` falling in grid cell `j`,
//!
//! ```text
//! g(x) = Δτ · (x − cor(x)) / (n_s · (H_s^{j+1} − H_s^j))
//! ```
//!
//! where `cor(x) = H_{1−s}⁻¹(H_s(x))` is the quantile-matched value in the other
//! group and `n_s` is the number of *training* observations of the stratum. The
//! same expression serves the binary case (one output) and the per-class case
//! (output on the dimension of the example's true class).

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Group, StratumIndex};
use crate::distribution::{build_grid, correction, empirical_cdf, DiscreteCdf, OutputGrid};
use crate::error::{Error, Result};

/// The two group CDFs of one regularized output, on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCdfPair {
    cdf0: DiscreteCdf,
    cdf1: DiscreteCdf,
    n0: usize,
    n1: usize,
}

impl GroupCdfPair {
    pub fn new(cdf0: DiscreteCdf, cdf1: DiscreteCdf, n0: usize, n1: usize) -> Result<Self> {
        if cdf0.grid() != cdf1.grid() {
            return Err(Error::Precondition("group CDFs must share one output grid".into()));
        }
        if n0 == 0 || n1 == 0 {
            return Err(Error::Precondition(format!(
                "normalizing counts must be positive (n0 = {n0}, n1 = {n1})"
            )));
        }
        Ok(Self { cdf0, cdf1, n0, n1 })
    }

    /// Builds both CDFs on the grid spanned by the pooled samples.
    pub fn from_samples(
        sample0: &[f64],
        sample1: &[f64],
        steps: usize,
        n0: usize,
        n1: usize,
    ) -> Result<Self> {
        let mut pooled = Vec::with_capacity(sample0.len() + sample1.len());
        pooled.extend_from_slice(sample0);
        pooled.extend_from_slice(sample1);
        let grid = build_grid(&pooled, steps)?;
        Self::new(
            empirical_cdf(sample0, &grid)?,
            empirical_cdf(sample1, &grid)?,
            n0,
            n1,
        )
    }

    pub fn grid(&self) -> &OutputGrid {
        self.cdf0.grid()
    }

    pub fn cdf(&self, group: Group) -> &DiscreteCdf {
        match group {
            Group::Zero => &self.cdf0,
            Group::One => &self.cdf1,
        }
    }

    pub fn normalizer(&self, group: Group) -> usize {
        match group {
            Group::Zero => self.n0,
            Group::One => self.n1,
        }
    }
}

/// Pseudo-derivative of the W2 term with respect to one scalar output.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct PseudoGrad(pub f64);

impl PseudoGrad {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Pseudo-derivative for an output of `group` (see module docs).
///
/// The output is clamped into the shared grid, and an empty CDF cell is floored to
/// a mass of `1 / (4·count)`, so the result is always finite.
pub fn pseudo_grad(output: f64, group: Group, cdfs: &GroupCdfPair, tau_step: f64) -> PseudoGrad {
    let grid = cdfs.grid();
    let x = if output.is_nan() { grid.lo() } else { grid.clamp(output) };
    let own = cdfs.cdf(group);
    let other = cdfs.cdf(group.other());
    let n = cdfs.normalizer(group) as f64;

    let cell = grid.cell_of(x);
    let floor = 1.0 / (4.0 * own.count() as f64);
    let mass = own.cell_mass(cell).max(floor);
    let matched = correction(other, own, x);
    PseudoGrad(tau_step * (x - matched) / (n * mass))
}

/// One mini-batch output on the dimension of its true class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub output: f64,
    pub group: Group,
    pub class: usize,
}

/// Applies [`pseudo_grad`] to every element whose class is in `regularized`,
/// using that class's CDF pair. Everything else gets exactly zero.
pub fn batch_pseudo_grads(
    outputs: &[BatchOutput],
    regularized: &[usize],
    plans: &BTreeMap<usize, GroupCdfPair>,
    tau_step: f64,
) -> Result<Vec<(usize, PseudoGrad)>> {
    if let Some(c) = regularized.iter().find(|c| !plans.contains_key(c)) {
        return Err(Error::Config(format!("no CDF plan for regularized class {c}")));
    }
    Ok(outputs
        .iter()
        .map(|o| {
            let g = if regularized.contains(&o.class) {
                pseudo_grad(o.output, o.group, &plans[&o.class], tau_step)
            } else {
                PseudoGrad(0.0)
            };
            (o.class, g)
        })
        .collect())
}

/// Draws up to `m` training indices of stratum `(class, group)` uniformly without
/// replacement, skipping `exclude`. Returns fewer only when the stratum runs out;
/// the result is sorted.
pub fn draw_reference<R: Rng + ?Sized>(
    strata: &StratumIndex,
    class: usize,
    group: Group,
    m: usize,
    exclude: &HashSet<usize>,
    rng: &mut R,
) -> Vec<usize> {
    let candidates: Vec<usize> = strata
        .stratum(class, group)
        .iter()
        .copied()
        .filter(|i| !exclude.contains(i))
        .collect();
    if candidates.is_empty() {
        log::debug!("reference stratum (class {class}, group {group}) is empty");
        return Vec::new();
    }
    let take = m.min(candidates.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), take)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    picked.sort_unstable();
    picked
}
