//! Gaussian kernel density estimation over charging-event statistics:
//! 1-D for start/end clock times (circular, 24 h period) and 2-D joint for
//! (average power, energy).

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::{real, wrap, Real};
use crate::stats::{quantile, sample_std};

/// Wrap period for circular dimensions, in hours.
pub const CIRCULAR_PERIOD_H: f64 = 24.0;

const MODEL_MAGIC: &str = "evload-kde";
const MODEL_VERSION: u32 = 1;

/// Nonparametric density over 1 or 2 dimensions with per-dimension Gaussian
/// kernels. Circular dimensions wrap their samples into [0, 24) and treat
/// the density as periodic.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel<T> {
    columns: Vec<Vec<T>>,
    bandwidth: Vec<T>,
    circular: Vec<bool>,
}

/// Silverman's rule: `0.9 * min(std, IQR/1.34) * n^(-1/5)`.
///
/// A zero IQR (heavily duplicated samples) falls back to the std estimate;
/// zero spread is an error.
fn silverman_bandwidth<T: Real>(dim: usize, values: &[T]) -> Result<T> {
    let std = sample_std(values);
    if !(std > T::zero()) {
        return Err(Error::ZeroSpread(dim));
    }
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let spread = if iqr > T::zero() {
        std.min(iqr / real(1.34))
    } else {
        std
    };
    let n = real::<T>(values.len() as f64);
    Ok(real::<T>(0.9) * spread * n.powf(real(-0.2)))
}

impl<T: Real> KdeModel<T> {
    /// Fit from column-major observations; `columns[d][i]` is observation
    /// `i` in dimension `d`.
    pub fn fit(columns: Vec<Vec<T>>, circular: &[bool]) -> Result<Self> {
        if columns.is_empty() || columns.len() > 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: columns.len(),
            });
        }
        if circular.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: circular.len(),
            });
        }
        let n = columns[0].len();
        if n < 2 {
            return Err(Error::TooFewSamples);
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::LengthMismatch(columns[0].len(), columns[1].len()));
        }
        let period = real::<T>(CIRCULAR_PERIOD_H);
        let columns: Vec<Vec<T>> = columns
            .into_iter()
            .zip(circular)
            .map(|(col, &circ)| {
                if circ {
                    col.into_iter().map(|v| wrap(v, period)).collect()
                } else {
                    col
                }
            })
            .collect();
        for col in &columns {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "observations must be finite".into(),
                ));
            }
        }
        let bandwidth = columns
            .iter()
            .enumerate()
            .map(|(d, col)| silverman_bandwidth(d, col))
            .collect::<Result<Vec<T>>>()?;
        Ok(KdeModel {
            columns,
            bandwidth,
            circular: circular.to_vec(),
        })
    }

    pub fn fit_1d(samples: &[T], circular: bool) -> Result<Self> {
        Self::fit(vec![samples.to_vec()], &[circular])
    }

    pub fn fit_2d(samples: &[(T, T)], circular: (bool, bool)) -> Result<Self> {
        let xs = samples.iter().map(|&(x, _)| x).collect();
        let ys = samples.iter().map(|&(_, y)| y).collect();
        Self::fit(vec![xs, ys], &[circular.0, circular.1])
    }

    /// Override the fitted bandwidths with externally chosen widths.
    pub fn with_bandwidth(mut self, bandwidth: &[T]) -> Result<Self> {
        if bandwidth.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: bandwidth.len(),
            });
        }
        if bandwidth.iter().any(|b| !(*b > T::zero()) || !b.is_finite()) {
            return Err(Error::InvalidParameter(
                "bandwidths must be positive and finite".into(),
            ));
        }
        self.bandwidth = bandwidth.to_vec();
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // fit requires at least 2 observations
    }

    pub fn bandwidth(&self) -> &[T] {
        &self.bandwidth
    }

    pub fn circular(&self) -> &[bool] {
        &self.circular
    }

    pub fn column(&self, dim: usize) -> &[T] {
        &self.columns[dim]
    }

    /// Normal kernel in dimension `d` centered at `center`, with adjacent
    /// period images folded in for circular dimensions.
    fn kernel_1d(&self, d: usize, x: T, center: T) -> T {
        let h = self.bandwidth[d];
        let norm = (real::<T>(2.0) * T::PI()).sqrt() * h;
        let phi = |offset: T| {
            let z = (x - center - offset) / h;
            (-(z * z) / real(2.0)).exp() / norm
        };
        if self.circular[d] {
            let period = real::<T>(CIRCULAR_PERIOD_H);
            phi(T::zero()) + phi(period) + phi(-period)
        } else {
            phi(T::zero())
        }
    }

    /// Density at `x` (`x.len()` must equal `dims()`): the average over
    /// observations of the product kernel.
    pub fn pdf(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.dims(), "query dimension mismatch");
        let n = self.len();
        let mut total = T::zero();
        for i in 0..n {
            let mut k = T::one();
            for d in 0..self.dims() {
                k = k * self.kernel_1d(d, x[d], self.columns[d][i]);
            }
            total += k;
        }
        total / real(n as f64)
    }

    /// Draw one point: pick an observation uniformly and add kernel noise;
    /// circular dimensions are wrapped back into [0, 24).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        assert_eq!(out.len(), self.dims(), "output dimension mismatch");
        let i = rng.random_range(0..self.len());
        let period = real::<T>(CIRCULAR_PERIOD_H);
        for d in 0..self.dims() {
            let v = self.columns[d][i] + self.bandwidth[d] * T::std_normal(rng);
            out[d] = if self.circular[d] { wrap(v, period) } else { v };
        }
    }

    pub fn sample1<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let mut out = [T::zero()];
        self.sample_into(rng, &mut out);
        out[0]
    }

    pub fn sample2<R: Rng + ?Sized>(&self, rng: &mut R) -> (T, T) {
        let mut out = [T::zero(); 2];
        self.sample_into(rng, &mut out);
        (out[0], out[1])
    }

    /// Write the model file: a versioned header (magic, version, dims),
    /// per-dimension bandwidths and circular flags, then the raw samples as
    /// CSV rows.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{MODEL_MAGIC},{MODEL_VERSION},{}", self.dims()).expect("string write");
        let bw: Vec<String> = self.bandwidth.iter().map(|b| b.to_string()).collect();
        writeln!(out, "bandwidth,{}", bw.join(",")).expect("string write");
        let circ: Vec<&str> = self
            .circular
            .iter()
            .map(|&c| if c { "1" } else { "0" })
            .collect();
        writeln!(out, "circular,{}", circ.join(",")).expect("string write");
        writeln!(out, "samples,{}", self.len()).expect("string write");
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.dims())
                .map(|d| self.columns[d][i].to_string())
                .collect();
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        write_atomic(path, &out)
    }

    /// Read a model file written by [`save`](Self::save).
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = body.lines().enumerate();
        let mut next_line = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::malformed(path, 0, format!("missing {what} line")))
        };

        let (ln, header) = next_line("header")?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 3 || fields[0] != MODEL_MAGIC {
            return Err(Error::malformed(path, ln as u64 + 1, "not an evload-kde file"));
        }
        let version: u32 = fields[1]
            .parse()
            .map_err(|_| Error::malformed(path, ln as u64 + 1, "bad version"))?;
        if version != MODEL_VERSION {
            return Err(Error::malformed(
                path,
                ln as u64 + 1,
                format!("unsupported model version {version}"),
            ));
        }
        let dims: usize = fields[2]
            .parse()
            .map_err(|_| Error::malformed(path, ln as u64 + 1, "bad dims"))?;
        if !(1..=2).contains(&dims) {
            return Err(Error::DimensionMismatch { expected: 2, got: dims });
        }

        let parse_row = |ln: usize, line: &str, key: &str, want: usize| -> Result<Vec<String>> {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != want + 1 || fields[0] != key {
                return Err(Error::malformed(
                    path,
                    ln as u64 + 1,
                    format!("expected `{key}` row with {want} values"),
                ));
            }
            Ok(fields[1..].iter().map(|s| s.to_string()).collect())
        };

        let (ln, line) = next_line("bandwidth")?;
        let bandwidth = parse_row(ln, line, "bandwidth", dims)?
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .map(real::<T>)
                    .filter(|b| *b > T::zero())
                    .ok_or_else(|| Error::malformed(path, ln as u64 + 1, "bad bandwidth"))
            })
            .collect::<Result<Vec<T>>>()?;

        let (ln, line) = next_line("circular")?;
        let circular = parse_row(ln, line, "circular", dims)?
            .iter()
            .map(|s| match s.as_str() {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::malformed(path, ln as u64 + 1, "bad circular flag")),
            })
            .collect::<Result<Vec<bool>>>()?;

        let (ln, line) = next_line("samples")?;
        let count: usize = parse_row(ln, line, "samples", 1)?[0]
            .parse()
            .map_err(|_| Error::malformed(path, ln as u64 + 1, "bad sample count"))?;
        if count < 2 {
            return Err(Error::TooFewSamples);
        }

        let mut columns = vec![Vec::with_capacity(count); dims];
        for _ in 0..count {
            let (ln, line) = next_line("sample row")?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dims {
                return Err(Error::malformed(
                    path,
                    ln as u64 + 1,
                    format!("expected {dims} fields, got {}", fields.len()),
                ));
            }
            for (d, f) in fields.iter().enumerate() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::malformed(path, ln as u64 + 1, "bad sample value"))?;
                columns[d].push(real(v));
            }
        }

        Ok(KdeModel {
            columns,
            bandwidth,
            circular,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::mean;

    #[test]
    fn silverman_matches_hand_calculation() {
        let model = KdeModel::fit_1d(&[0.0_f64, 10.0], false).unwrap();
        // sigma = sqrt(50), IQR = 5 -> 0.9 * (5/1.34) * 2^(-0.2)
        assert!((model.bandwidth()[0] - 2.9234906976362374).abs() < 1e-12);
    }

    #[test]
    fn equal_samples_are_rejected() {
        assert!(matches!(
            KdeModel::fit_1d(&[3.0_f64, 3.0, 3.0], false),
            Err(Error::ZeroSpread(0))
        ));
        assert!(matches!(
            KdeModel::fit_1d(&[3.0_f64], false),
            Err(Error::TooFewSamples)
        ));
    }

    #[test]
    fn fit_recovers_gaussian_mean() {
        let mut rng = substream(21, &[0]);
        let samples: Vec<f64> = (0..1000).map(|_| 10.0 + 2.0 * f64::std_normal(&mut rng)).collect();
        let model = KdeModel::fit_1d(&samples, false).unwrap();
        // KDE mean equals the sample mean; compare against the source mean
        let m = mean(model.column(0));
        assert!((m - 10.0).abs() < 0.2, "fitted mean {m}");
    }

    #[test]
    fn single_center_pdf_peaks_at_standard_height() {
        // near-duplicated sample at 0 so the fit is legal, then force h = 1
        let model = KdeModel::fit_1d(&[0.0_f64, 1e-9], false)
            .unwrap()
            .with_bandwidth(&[1.0])
            .unwrap();
        let peak = model.pdf(&[0.0]);
        assert!((peak - 0.3989422804014327).abs() < 1e-6, "peak {peak}");
    }

    #[test]
    fn symmetric_samples_give_symmetric_pdf() {
        let model = KdeModel::fit_1d(&[-1.0_f64, 1.0], false).unwrap();
        for x in [0.1, 0.5, 1.3, 2.7] {
            assert!((model.pdf(&[x]) - model.pdf(&[-x])).abs() < 1e-14);
        }
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 0 { 2.0 } else { 4.0 } * f(lo + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn pdf_integrates_to_one() {
        let mut rng = substream(22, &[0]);
        let samples: Vec<f64> = (0..200).map(|_| 5.0 + 1.5 * f64::std_normal(&mut rng)).collect();
        let model = KdeModel::fit_1d(&samples, false).unwrap();
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let h = model.bandwidth()[0];
        let integral = simpson(|x| model.pdf(&[x]), lo - 8.0 * h, hi + 8.0 * h, 4000);
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn circular_pdf_integrates_to_one_over_a_period() {
        // start-time-like mass near midnight exercises the wrap
        let mut rng = substream(23, &[0]);
        let samples: Vec<f64> = (0..300)
            .map(|_| crate::scalar::wrap(23.0 + 1.5 * f64::std_normal(&mut rng), 24.0))
            .collect();
        let model = KdeModel::fit_1d(&samples, true).unwrap();
        let integral = simpson(|x| model.pdf(&[x]), 0.0, 24.0, 4000);
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn circular_samples_stay_in_period() {
        let mut rng = substream(24, &[0]);
        let samples: Vec<f64> = (0..100)
            .map(|_| crate::scalar::wrap(23.5 + 0.8 * f64::std_normal(&mut rng), 24.0))
            .collect();
        let model = KdeModel::fit_1d(&samples, true).unwrap();
        for _ in 0..10_000 {
            let x = model.sample1(&mut rng);
            assert!((0.0..24.0).contains(&x), "sample {x}");
        }
    }

    #[test]
    fn sample_mean_matches_mixture_mean() {
        let mut rng = substream(25, &[0]);
        let samples: Vec<f64> = (0..500).map(|_| 20.0 + 4.0 * f64::std_normal(&mut rng)).collect();
        let model = KdeModel::fit_1d(&samples, false).unwrap();
        let analytic = mean(model.column(0)); // kernel noise is zero-mean
        let mut acc = 0.0;
        let n = 100_000;
        for _ in 0..n {
            acc += model.sample1(&mut rng);
        }
        let sampled = acc / n as f64;
        assert!(
            (sampled - analytic).abs() < 0.02 * analytic.abs(),
            "sampled {sampled} vs analytic {analytic}"
        );
    }

    #[test]
    fn joint_sampling_preserves_correlation() {
        // correlated (power, energy) observations
        let mut rng = substream(26, &[0]);
        let obs: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let p = 5.0 + 13.0 * rng.random_range(0.0..1.0);
                let e = 2.0 * p + 3.0 * f64::std_normal(&mut rng);
                (p, e.max(0.5))
            })
            .collect();
        let model = KdeModel::fit_2d(&obs, (false, false)).unwrap();

        let corr = |pairs: &[(f64, f64)]| {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (mx, my) = (mean(&xs), mean(&ys));
            let mut cov = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for &(x, y) in pairs {
                cov += (x - mx) * (y - my);
                vx += (x - mx) * (x - mx);
                vy += (y - my) * (y - my);
            }
            cov / (vx * vy).sqrt()
        };

        let sampled: Vec<(f64, f64)> = (0..50_000).map(|_| model.sample2(&mut rng)).collect();
        let c_obs = corr(&obs);
        let c_sam = corr(&sampled);
        assert!(
            (c_obs - c_sam).abs() < 0.05,
            "correlation {c_sam} vs observed {c_obs}"
        );
    }

    #[test]
    fn fitting_is_order_invariant() {
        let samples = vec![4.0_f64, 9.5, 1.25, 7.0, 3.2, 8.8];
        let mut reversed = samples.clone();
        reversed.reverse();
        let a = KdeModel::fit_1d(&samples, false).unwrap();
        let b = KdeModel::fit_1d(&reversed, false).unwrap();
        assert_eq!(a.bandwidth()[0], b.bandwidth()[0]);
        for x in [0.0, 2.5, 5.0, 9.9] {
            assert!((a.pdf(&[x]) - b.pdf(&[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn model_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pe.kde");
        let obs: Vec<(f64, f64)> = (0..40)
            .map(|i| (5.0 + 0.33 * i as f64, 10.0 + 1.1 * i as f64))
            .collect();
        let model = KdeModel::fit_2d(&obs, (false, true)).unwrap();
        model.save(&path).unwrap();
        let loaded = KdeModel::<f64>::load(&path).unwrap();
        assert_eq!(model, loaded);

        std::fs::write(&path, "not-a-model,1,1\n").unwrap();
        assert!(KdeModel::<f64>::load(&path).is_err());
    }
}
