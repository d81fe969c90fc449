//! Small statistical helpers shared by the estimators.

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean and standard error of the sample mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std_error: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    pub fn exact(mean: f64) -> Self {
        Self { mean, std_error: 0.0 }
    }
}

/// Running sums for a mean and standard error without storing samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Paths per work unit in [`parallel_estimates`]. Fixed so that results
/// do not depend on the thread count.
const CHUNK: usize = 64;

/// Runs `path(i, out)` for `i in 0..n_paths`, where `out` has `width`
/// slots, and returns the mean and standard error of every slot. Work is
/// split into fixed chunks and merged in chunk order, so the result is
/// bit-identical for any number of threads.
pub fn parallel_estimates<F>(n_paths: usize, width: usize, path: F) -> Vec<Estimate>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partial: Vec<Vec<Accumulator>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Accumulator::default(); width];
            let mut out = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                path(i as u64, &mut out);
                for (a, &v) in acc.iter_mut().zip(&out) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Accumulator::default(); width];
    for chunk in &partial {
        for (t, a) in total.iter_mut().zip(chunk) {
            t.merge(a);
        }
    }
    total.iter().map(Accumulator::estimate).collect()
}

/// Quantile of sorted data by linear interpolation, `p` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS test.
pub fn ks_critical(n: usize, m: usize, significance: f64) -> f64 {
    let c = (-0.5 * (significance / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn accumulator_matches_batch() {
        let xs = [1.0, 4.0, 2.5, -3.0, 0.25];
        let mut acc = Accumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let a = acc.estimate();
        let b = Estimate::from_samples(&xs);
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!((a.std_error - b.std_error).abs() < 1e-12);
    }

    #[test]
    fn parallel_estimates_are_ordered_and_exact() {
        let e = parallel_estimates(1000, 2, |i, out| {
            out[0] = 1.0;
            out[1] = i as f64;
        });
        assert_eq!(e[0].mean, 1.0);
        assert_eq!(e[0].std_error, 0.0);
        assert!((e[1].mean - 499.5).abs() < 1e-12);
    }

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[10.0, 11.0]), 1.0);
    }

    #[test]
    fn fits_a_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.2)).collect();
        assert!((log_log_slope(&x, &y) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
