use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::model::{Arch, ModelConfig, BATCH_SIZES, LR_MAX, LR_MIN, WIDTHS};
use crate::quant::SUPPORTED_BITWIDTHS;

/// Searchable choices. Architecture and input length are fixed per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub arch: Arch,
    pub n: usize,
    pub bits: Vec<u8>,
    pub batch_sizes: Vec<usize>,
    pub widths: Vec<usize>,
    pub lr_min: f64,
    pub lr_max: f64,
}

/// Categorical genes are indices into the space's choice lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub bits: usize,
    pub batch: usize,
    pub width: usize,
    pub log_lr: f64,
}

pub const GENE_COUNT: usize = 4;

impl SearchSpace {
    pub fn new(arch: Arch, n: usize) -> Self {
        Self {
            arch,
            n,
            bits: SUPPORTED_BITWIDTHS.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            widths: WIDTHS.to_vec(),
            lr_min: LR_MIN,
            lr_max: LR_MAX,
        }
    }

    /// Every choice must decode to a valid configuration.
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.bits.is_empty() || self.batch_sizes.is_empty() || self.widths.is_empty() {
            return Err(SearchError::Space("empty choice list".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return Err(SearchError::Space(format!("lr range [{}, {}]", self.lr_min, self.lr_max)));
        }
        for &bits in &self.bits {
            for &batch_size in &self.batch_sizes {
                for &width in &self.widths {
                    for lr in [self.lr_min, self.lr_max] {
                        ModelConfig { arch: self.arch, n: self.n, width, bits, batch_size, lr }.validate()?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn log_lr_bounds(&self) -> (f64, f64) {
        (self.lr_min.log10(), self.lr_max.log10())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Genome {
        let (lo, hi) = self.log_lr_bounds();
        Genome {
            bits: rng.gen_range(0..self.bits.len()),
            batch: rng.gen_range(0..self.batch_sizes.len()),
            width: rng.gen_range(0..self.widths.len()),
            log_lr: if hi > lo { rng.gen_range(lo..=hi) } else { lo },
        }
    }

    pub fn decode(&self, g: &Genome) -> ModelConfig {
        let lr = 10f64.powf(g.log_lr).clamp(self.lr_min, self.lr_max);
        ModelConfig {
            arch: self.arch,
            n: self.n,
            width: self.widths[g.width],
            bits: self.bits[g.bits],
            batch_size: self.batch_sizes[g.batch],
            lr,
        }
    }

    /// Number of categorical combinations.
    pub fn grid_size(&self) -> usize {
        self.bits.len() * self.batch_sizes.len() * self.widths.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_is_valid() {
        for arch in [Arch::Lstm, Arch::Transformer] {
            let s = SearchSpace::new(arch, 12);
            s.validate().unwrap();
            assert_eq!(s.grid_size(), 384);
        }
        let mut s = SearchSpace::new(Arch::Lstm, 6);
        s.bits.push(5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn samples_decode_in_range() {
        let s = SearchSpace::new(Arch::Lstm, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let c = s.decode(&s.sample(&mut rng));
            c.validate().unwrap();
        }
    }
}
