use serde::{Deserialize, Serialize};

use super::DataError;

/// Sliding windows, stride 1, flattened row-major (`len × n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub n: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Position of each target in the (gap-filled, concatenated) source series.
    pub target_index: Vec<usize>,
}

impl WindowedDataset {
    pub fn empty(n: usize) -> Self {
        Self { n, inputs: Vec::new(), targets: Vec::new(), target_index: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n..(i + 1) * self.n]
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            n: self.n,
            inputs: self.inputs[range.start * self.n..range.end * self.n].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            target_index: self.target_index[range].to_vec(),
        }
    }

    /// First `count` rows, for quick experiments.
    pub fn head(&self, count: usize) -> Self {
        self.slice(0..count.min(self.len()))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            inputs: self.inputs.iter().map(|&v| f(v)).collect(),
            targets: self.targets.iter().map(|&v| f(v)).collect(),
            target_index: self.target_index.clone(),
        }
    }

    /// Every distinct series value a window touches, in series order.
    pub fn covered_values(&self) -> Vec<f64> {
        let mut seen = std::collections::BTreeMap::new();
        for i in 0..self.len() {
            let t = self.target_index[i];
            for (k, &v) in self.row(i).iter().enumerate() {
                seen.entry(t - self.n + k).or_insert(v);
            }
            seen.entry(t).or_insert(self.targets[i]);
        }
        seen.into_values().collect()
    }
}

pub fn make_windows(series: &[f64], n: usize) -> Result<WindowedDataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidWindow(n));
    }
    if series.len() <= n {
        return Err(DataError::TooShort { len: series.len(), n });
    }
    let mut ds = WindowedDataset::empty(n);
    push_windows(&mut ds, series, 0);
    Ok(ds)
}

fn push_windows(ds: &mut WindowedDataset, run: &[f64], offset: usize) {
    let n = ds.n;
    for t in n..run.len() {
        ds.inputs.extend_from_slice(&run[t - n..t]);
        ds.targets.push(run[t]);
        ds.target_index.push(offset + t);
    }
}

/// Window each contiguous run separately; runs shorter than `n + 1` are skipped.
pub fn windows_from_runs(runs: &[Vec<f64>], n: usize) -> Result<WindowedDataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidWindow(n));
    }
    let mut ds = WindowedDataset::empty(n);
    let mut offset = 0;
    for run in runs {
        push_windows(&mut ds, run, offset);
        offset += run.len();
    }
    if ds.is_empty() {
        let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
        return Err(DataError::TooShort { len: longest, n });
    }
    Ok(ds)
}

/// Where the held-out test segment starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestBoundary {
    /// Final fraction of windows.
    Fraction(f64),
    /// Windows whose target lies at or after this series position.
    TargetIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    /// Share of the first segment used for training; the rest validates.
    pub train_fraction: f64,
    pub test: TestBoundary,
}

impl Default for SplitSpec {
    /// Two years train+validation, final year test, 80/20 inside the first part.
    fn default() -> Self {
        Self { train_fraction: 0.8, test: TestBoundary::Fraction(1.0 / 3.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

pub fn chronological_split(ds: &WindowedDataset, spec: &SplitSpec) -> Result<Splits, DataError> {
    let len = ds.len();
    let first = match spec.test {
        TestBoundary::Fraction(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(DataError::InvalidSplit(format!("test fraction {f}")));
            }
            len - (len as f64 * f).round() as usize
        }
        TestBoundary::TargetIndex(t) => ds.target_index.partition_point(|&i| i < t),
    };
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!("train fraction {}", spec.train_fraction)));
    }
    let n_train = (first as f64 * spec.train_fraction).round() as usize;
    let splits = Splits { train: ds.slice(0..n_train), val: ds.slice(n_train..first), test: ds.slice(first..len) };
    for (name, part) in [("train", &splits.train), ("validation", &splits.val), ("test", &splits.test)] {
        if part.is_empty() {
            return Err(DataError::EmptySegment(name));
        }
    }
    Ok(splits)
}

/// z-score statistics of the training portion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn fit(values: &[f64]) -> Result<Self, DataError> {
        if values.is_empty() {
            return Err(DataError::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(DataError::ConstantSeries);
        }
        Ok(Self { mean, std })
    }

    /// Fit on exactly the series values the training windows can see.
    pub fn fit_dataset(train: &WindowedDataset) -> Result<Self, DataError> {
        Self::fit(&train.covered_values())
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_dataset(&self, ds: &WindowedDataset) -> WindowedDataset {
        ds.map_values(|v| self.apply(v))
    }

    /// MSE in original units from MSE in normalized units.
    pub fn denormalize_mse(&self, mse: f64) -> f64 {
        self.std * self.std * mse
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, DataError> {
    if pred.len() != target.len() {
        return Err(DataError::LengthMismatch { left: pred.len(), right: target.len() });
    }
    if pred.is_empty() {
        return Err(DataError::Empty);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kahan_mse(p: &[f64], t: &[f64]) -> f64 {
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for (a, b) in p.iter().zip(t).rev() {
            let y = (a - b) * (a - b) - c;
            let s = sum + y;
            c = (s - sum) - y;
            sum = s;
        }
        sum / p.len() as f64
    }

    #[test]
    fn windows_of_four() {
        let ds = make_windows(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(ds.inputs, vec![1.0, 2.0, 2.0, 3.0]);
        assert_eq!(ds.targets, vec![3.0, 4.0]);
        assert_eq!(ds.target_index, vec![2, 3]);
        assert!(matches!(make_windows(&[1.0, 2.0], 2), Err(DataError::TooShort { .. })));
    }

    #[test]
    fn row_count_is_len_minus_n() {
        let s: Vec<f64> = (0..57).map(f64::from).collect();
        for n in 1..20 {
            let ds = make_windows(&s, n).unwrap();
            assert_eq!(ds.len(), 57 - n);
            for i in 0..ds.len() {
                assert_eq!(ds.row(i)[n - 1] as usize + 1, ds.target_index[i]);
            }
        }
    }

    #[test]
    fn split_arithmetic() {
        let s: Vec<f64> = (0..1001).map(f64::from).collect();
        let ds = make_windows(&s, 1).unwrap();
        let spec = SplitSpec { train_fraction: 0.8, test: TestBoundary::Fraction(0.2) };
        let sp = chronological_split(&ds, &spec).unwrap();
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (640, 160, 200));
        assert!(sp.train.target_index.last() < sp.val.target_index.first());
        assert!(sp.val.target_index.last() < sp.test.target_index.first());
    }

    #[test]
    fn year_boundary_split() {
        let s = vec![1.0; 26_280];
        let ds = make_windows(&s, 24).unwrap();
        let spec = SplitSpec { train_fraction: 0.8, test: TestBoundary::TargetIndex(17_520) };
        let sp = chronological_split(&ds, &spec).unwrap();
        assert_eq!(sp.test.target_index[0], 17_520);
        assert_eq!(sp.test.len(), 8_760);
        assert_eq!(sp.train.len() + sp.val.len(), 17_520 - 24);
    }

    #[test]
    fn normalizer_properties() {
        let x: Vec<f64> = (0..100).map(|i| 3.0 + (i as f64 * 0.37).sin()).collect();
        let nz = Normalizer::fit(&x).unwrap();
        let z: Vec<f64> = x.iter().map(|&v| nz.apply(v)).collect();
        let m = z.iter().sum::<f64>() / 100.0;
        let sd = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        for &v in &x {
            assert!((nz.invert(nz.apply(v)) - v).abs() < 1e-12);
        }
        assert!(matches!(Normalizer::fit(&[2.0; 5]), Err(DataError::ConstantSeries)));
    }

    #[test]
    fn denormalized_mse_scales_by_variance() {
        let nz = Normalizer { mean: 2.0, std: 1.229 };
        let p = [0.1, -0.4, 1.3];
        let t = [0.0, -0.2, 1.0];
        let a = mse(&p.map(|v| nz.invert(v)), &t.map(|v| nz.invert(v))).unwrap();
        assert!((a - nz.denormalize_mse(mse(&p, &t).unwrap())).abs() < 1e-9);
        // Normalized vs original-unit test MSEs of two reported models share one factor.
        let (r1, r2): (f64, f64) = (0.0627 / 0.0415, 0.0646 / 0.0427);
        assert!((r1 - 1.511).abs() < 0.005 && (r2 - 1.511).abs() < 0.005);
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(DataError::LengthMismatch { .. })));
        let p: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.1).sin() * 1e3).collect();
        let t: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.07).cos()).collect();
        let (a, b) = (mse(&p, &t).unwrap(), kahan_mse(&p, &t));
        assert!((a - b).abs() <= 1e-12 * b, "{a} {b}");
    }
}
