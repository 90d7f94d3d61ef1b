use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How sampled columns outside the fully sampled center block are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPattern {
    /// Evenly spaced columns with a seeded offset.
    #[default]
    Equispaced,
    /// Seeded uniformly random columns.
    Random,
}

/// Binary Cartesian column mask `M`, applied uniformly down each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    columns: Vec<bool>,
    acceleration: u32,
    center_fraction: f64,
}

impl SamplingMask {
    /// Center fraction used for a given acceleration: 0.08 at 4×, 0.04 at 8×.
    pub fn default_center_fraction(acceleration: u32) -> f64 {
        0.32 / acceleration.max(1) as f64
    }

    /// Every column sampled.
    pub fn full(width: usize) -> Self {
        Self {
            columns: vec![true; width],
            acceleration: 1,
            center_fraction: 1.0,
        }
    }

    pub fn from_columns(
        columns: Vec<bool>,
        acceleration: u32,
        center_fraction: f64,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("mask needs at least one column"));
        }
        Ok(Self {
            columns,
            acceleration,
            center_fraction,
        })
    }

    /// Equispaced Cartesian mask; see [`SamplingMask::cartesian_with`].
    pub fn cartesian(
        width: usize,
        acceleration: u32,
        center_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::cartesian_with(
            width,
            acceleration,
            center_fraction,
            seed,
            MaskPattern::Equispaced,
        )
    }

    /// Fully samples the `⌊center_fraction·W⌋` central columns, then adds
    /// columns outside that block until `round(W/R)` columns are sampled.
    pub fn cartesian_with(
        width: usize,
        acceleration: u32,
        center_fraction: f64,
        seed: u64,
        pattern: MaskPattern,
    ) -> Result<Self> {
        if width < 8 {
            return Err(Error::invalid(format!("mask width {width} < 8")));
        }
        if acceleration == 0 {
            return Err(Error::invalid("acceleration must be at least 1"));
        }
        if !(center_fraction > 0.0 && center_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "center fraction {center_fraction} outside (0, 1)"
            )));
        }
        let center = (center_fraction * width as f64).floor() as usize;
        if center == 0 {
            return Err(Error::invalid(format!(
                "center fraction {center_fraction} selects no columns of {width}"
            )));
        }
        let quota = (width as f64 / acceleration as f64).round() as usize;
        if center > quota {
            return Err(Error::invalid(format!(
                "center block of {center} columns exceeds the {quota}-column budget for {acceleration}x"
            )));
        }

        let mut columns = vec![false; width];
        let start = (width - center + 1) / 2;
        columns[start..start + center]
            .iter_mut()
            .for_each(|c| *c = true);

        let outer: Vec<usize> = (0..width).filter(|&c| !columns[c]).collect();
        let extra = quota - center;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if extra > 0 {
            match pattern {
                MaskPattern::Equispaced => {
                    let spacing = outer.len() as f64 / extra as f64;
                    let offset = rng.random::<f64>() * spacing;
                    for j in 0..extra {
                        let idx =
                            ((offset + j as f64 * spacing).floor() as usize).min(outer.len() - 1);
                        columns[outer[idx]] = true;
                    }
                }
                MaskPattern::Random => {
                    for idx in rand::seq::index::sample(&mut rng, outer.len(), extra) {
                        columns[outer[idx]] = true;
                    }
                }
            }
        }
        Ok(Self {
            columns,
            acceleration,
            center_fraction,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[bool] {
        &self.columns
    }

    pub fn acceleration(&self) -> u32 {
        self.acceleration
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    pub fn sampled(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    /// Column mask as 0/1 weights.
    pub fn weights(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|&c| if c { 1.0 } else { 0.0 })
            .collect()
    }
}
