//! Coincidence reconstruction from two independently recorded tag streams.
//!
//! Alignment runs in two passes. A coarse pass bins both streams (1 ns by
//! default) and locates the cross-correlation peak, counting pairs directly
//! at low rates and by one FFT round trip otherwise. A fine pass then sweeps both sorted streams
//! with two pointers, binning every pair whose difference lies within the
//! window around the coarse offset.

use std::io::{self, Write};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::tags::{first_unsorted, TagStream, FS_PER_PS, FS_PER_S};

pub const DEFAULT_COARSE_BIN_FS: i64 = 1_000_000;
pub const DEFAULT_SEARCH_SPAN_FS: i64 = 1_000_000_000_000;
pub const DEFAULT_BIN_PS: f64 = 8.0;
pub const DEFAULT_WINDOW_PS: f64 = 2_000.0;

/// Family-wise false-alarm probability for declaring a coarse peak over the
/// whole searched lag range.
pub const COARSE_FALSE_ALARM: f64 = 1e-3;

/// Minimum number of first-stream tags per parallel chunk.
const PARALLEL_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseOffset {
    /// Recovered offset t_b − t_a, fs.
    pub offset_fs: i64,
    /// Correlogram value at the peak lag.
    pub peak: f64,
    /// Mean and standard deviation of the correlogram over the searched lags.
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

impl CoarseOffset {
    pub fn significance(&self) -> f64 {
        if self.std > 0.0 {
            (self.peak - self.mean) / self.std
        } else {
            f64::INFINITY
        }
    }
}

/// Above this many expected tag pairs within the search span, the coarse
/// correlogram is computed by FFT instead of by direct pair counting.
pub const DIRECT_PAIR_BUDGET: f64 = 1e8;

/// Locates the lag of maximal coincidence between `a` and `b` within
/// ±`search_span_fs`, at `coarse_bin_fs` resolution.
///
/// The correlogram counts pairs by lag = bin(t_b) − bin(t_a). When the
/// expected number of pairs inside the span is small it is counted exactly;
/// otherwise both streams are folded onto a circular grid and correlated by
/// FFT, which raises the per-lag background to |a|·|b|/grid.
pub fn coarse_offset(
    a: &TagStream,
    b: &TagStream,
    coarse_bin_fs: i64,
    search_span_fs: i64,
) -> Result<CoarseOffset> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "coarse alignment needs two nonempty streams".into(),
        ));
    }
    if coarse_bin_fs <= 0 || search_span_fs < 0 {
        return Err(Error::InvalidParameter(format!(
            "coarse bin ({coarse_bin_fs} fs) must be > 0 and search span ({search_span_fs} fs) >= 0"
        )));
    }
    let span = search_span_fs / coarse_bin_fs + 1;
    let ba: Vec<i64> = a
        .tags()
        .iter()
        .map(|t| t.div_euclid(coarse_bin_fs))
        .collect();
    let bb: Vec<i64> = b
        .tags()
        .iter()
        .map(|t| t.div_euclid(coarse_bin_fs))
        .collect();
    let correlogram = if expected_pairs(&ba, &bb, span) <= DIRECT_PAIR_BUDGET {
        correlogram_direct(&ba, &bb, span)
    } else {
        correlogram_fft(&ba, &bb, span)
    };
    locate_peak(&correlogram, span, coarse_bin_fs)
}

/// Pairs expected within ±`span` bins if both streams were uniform.
fn expected_pairs(ba: &[i64], bb: &[i64], span: i64) -> f64 {
    let lo = ba[0].min(bb[0]);
    let hi = ba[ba.len() - 1].max(bb[bb.len() - 1]);
    let extent = (hi as f64 - lo as f64 + 1.0).max(1.0);
    ba.len() as f64 * bb.len() as f64 * ((2 * span + 1) as f64 / extent).min(1.0)
}

/// Exact counts for lags −span..=span, index lag + span.
pub(crate) fn correlogram_direct(ba: &[i64], bb: &[i64], span: i64) -> Vec<f64> {
    let mut counts = vec![0u64; (2 * span + 1) as usize];
    let mut lo = 0usize;
    for &x in ba {
        while lo < bb.len() && bb[lo] < x.saturating_sub(span) {
            lo += 1;
        }
        let mut j = lo;
        while j < bb.len() && bb[j] <= x.saturating_add(span) {
            counts[(bb[j] - x + span) as usize] += 1;
            j += 1;
        }
    }
    counts.into_iter().map(|c| c as f64).collect()
}

/// Circular correlation on a power-of-two grid of at least 2·span + 1 bins;
/// searched lags stay distinct modulo the grid.
pub(crate) fn correlogram_fft(ba: &[i64], bb: &[i64], span: i64) -> Vec<f64> {
    let n = ((2 * span + 1) as usize).next_power_of_two().max(64);
    let modulus = n as i64;
    let mut buf = vec![Complex::new(0.0f64, 0.0); n];
    for &x in ba {
        buf[x.rem_euclid(modulus) as usize].re += 1.0;
    }
    for &x in bb {
        buf[x.rem_euclid(modulus) as usize].im += 1.0;
    }

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);

    // Both real spectra come out of one transform: A = (Z + Z*)/2, B = (Z − Z*)/2i
    // at mirrored frequencies. Correlation spectrum is conj(A)·B.
    let mut prod = vec![Complex::new(0.0f64, 0.0); n];
    for k in 0..n {
        let z = buf[k];
        let zm = buf[(n - k) % n].conj();
        let fa = (z + zm) * 0.5;
        let fb = (z - zm) * Complex::new(0.0, -0.5);
        prod[k] = fa.conj() * fb;
    }
    drop(buf);
    planner.plan_fft_inverse(n).process(&mut prod);
    let scale = 1.0 / n as f64;
    (-span..=span)
        .map(|lag| (prod[lag.rem_euclid(modulus) as usize].re * scale).round())
        .collect()
}

fn locate_peak(correlogram: &[f64], span: i64, coarse_bin_fs: i64) -> Result<CoarseOffset> {
    let value = |lag: i64| correlogram[(lag + span) as usize];
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut best = (0i64, f64::NEG_INFINITY);
    for lag in -span..=span {
        let v = value(lag);
        sum += v;
        sum2 += v * v;
        if v > best.1 {
            best = (lag, v);
        }
    }
    let count = correlogram.len() as f64;
    let mean = sum / count;
    let std = (sum2 / count - mean * mean).max(0.0).sqrt();
    let threshold = (mean + 5.0 * std).max(poisson_threshold(mean, count));

    let (peak_lag, peak) = best;
    if peak < threshold {
        return Err(Error::NoPeak {
            max: peak,
            threshold,
            mean,
            std,
        });
    }

    // Background-subtracted centroid of the peak lag and its neighbours.
    let mut wsum = 0.0;
    let mut lsum = 0.0;
    for lag in (peak_lag - 1).max(-span)..=(peak_lag + 1).min(span) {
        let w = (value(lag) - mean).max(0.0);
        wsum += w;
        lsum += w * lag as f64;
    }
    let centroid = if wsum > 0.0 {
        lsum / wsum
    } else {
        peak_lag as f64
    };
    Ok(CoarseOffset {
        offset_fs: (centroid * coarse_bin_fs as f64).round() as i64,
        peak,
        mean,
        std,
        threshold,
    })
}

/// Smallest count k with `lags`·P(X ≥ k) below the false-alarm level for a
/// Poisson background of mean `mean`.
fn poisson_threshold(mean: f64, lags: f64) -> f64 {
    if !(mean > 0.0) {
        return 1.0;
    }
    let Ok(dist) = Poisson::new(mean) else {
        return 1.0;
    };
    let target = COARSE_FALSE_ALARM / lags;
    // sf(k − 1) = P(X ≥ k)
    let tail = |k: u64| if k == 0 { 1.0 } else { dist.sf(k - 1) };
    let mut lo = mean.floor() as u64;
    let mut hi = (mean + 50.0 * mean.sqrt() + 50.0) as u64;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tail(mid) < target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo as f64
}

/// Binned coincidence counts versus t_b − t_a − offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Bin width, fs.
    pub bin_width_fs: i64,
    /// Left edge of bin 0 relative to the applied offset, fs.
    pub origin_fs: i64,
    pub counts: Vec<u64>,
    pub total_pairs: u64,
    pub offset_applied_fs: i64,
}

impl Histogram {
    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_fs as f64 / FS_PER_PS as f64
    }

    pub fn origin_ps(&self) -> f64 {
        self.origin_fs as f64 / FS_PER_PS as f64
    }

    /// Bin centers relative to the applied offset, ps.
    pub fn centers_ps(&self) -> Vec<f64> {
        let w = self.bin_width_ps();
        let o = self.origin_ps();
        (0..self.counts.len())
            .map(|i| o + (i as f64 + 0.5) * w)
            .collect()
    }

    /// Writes `bin_center_ps,counts,g2_normalized`. `normalized` must be
    /// aligned with `counts` when given; otherwise the column is empty.
    pub fn write_csv<W: Write>(&self, mut w: W, normalized: Option<&[f64]>) -> io::Result<()> {
        writeln!(w, "bin_center_ps,counts,g2_normalized")?;
        for (i, (c, n)) in self.centers_ps().iter().zip(&self.counts).enumerate() {
            match normalized {
                Some(g) => writeln!(w, "{c},{n},{}", g[i])?,
                None => writeln!(w, "{c},{n},")?,
            }
        }
        Ok(())
    }
}

/// Converts a ps quantity to whole fs, rejecting non-positive or non-finite values.
fn ps_to_fs(name: &str, ps: f64) -> Result<i64> {
    if !(ps > 0.0) || !ps.is_finite() || ps * 1e3 > i64::MAX as f64 / 4.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be a positive finite ps value, got {ps}"
        )));
    }
    Ok(((ps * FS_PER_PS as f64).round() as i64).max(1))
}

/// Histogram of all pair differences d = t_b − t_a − offset with |d| ≤ window.
///
/// Bins are aligned to the offset (edges at integer multiples of the bin
/// width) and half-open, except the last bin which also takes d = +window.
pub fn fine_histogram(
    a: &TagStream,
    b: &TagStream,
    offset_fs: i64,
    bin_width_ps: f64,
    window_ps: f64,
) -> Result<Histogram> {
    let bin = ps_to_fs("bin width", bin_width_ps)?;
    let window = ps_to_fs("window", window_ps)?;
    if window < bin {
        return Err(Error::InvalidParameter(format!(
            "window ({window_ps} ps) must be at least the bin width ({bin_width_ps} ps)"
        )));
    }
    histogram_tags(a.tags(), b.tags(), offset_fs, bin, window)
}

/// Same as [`fine_histogram`] on raw fs slices; rejects unsorted input.
pub fn histogram_tags(
    a: &[i64],
    b: &[i64],
    offset_fs: i64,
    bin_fs: i64,
    window_fs: i64,
) -> Result<Histogram> {
    if bin_fs <= 0 || window_fs < bin_fs {
        return Err(Error::InvalidParameter(format!(
            "need 0 < bin ({bin_fs} fs) <= window ({window_fs} fs)"
        )));
    }
    for (name, s) in [("first", a), ("second", b)] {
        if let Some(i) = first_unsorted(s) {
            return Err(Error::InvalidInput(format!(
                "{name} stream unsorted at index {i}: {} > {}",
                s[i - 1],
                s[i]
            )));
        }
    }
    let half_bins = (window_fs + bin_fs - 1) / bin_fs;
    let nbins = (2 * half_bins) as usize;
    let origin = -half_bins * bin_fs;
    let spec = Binning {
        offset: offset_fs as i128,
        window: window_fs as i128,
        bin: bin_fs as i128,
        origin: origin as i128,
        nbins,
    };

    let counts = if a.len() >= 2 * PARALLEL_CHUNK {
        a.par_chunks(PARALLEL_CHUNK)
            .map(|chunk| spec.sweep(chunk, b))
            .reduce(
                || vec![0u64; nbins],
                |mut acc, part| {
                    acc.iter_mut().zip(part).for_each(|(x, y)| *x += y);
                    acc
                },
            )
    } else {
        spec.sweep(a, b)
    };
    let total_pairs = counts.iter().sum();
    Ok(Histogram {
        bin_width_fs: bin_fs,
        origin_fs: origin,
        counts,
        total_pairs,
        offset_applied_fs: offset_fs,
    })
}

struct Binning {
    offset: i128,
    window: i128,
    bin: i128,
    origin: i128,
    nbins: usize,
}

impl Binning {
    /// Two-pointer sweep of a (sorted) chunk of the first stream against all of `b`.
    fn sweep(&self, a: &[i64], b: &[i64]) -> Vec<u64> {
        let mut counts = vec![0u64; self.nbins];
        let Some(&first) = a.first() else {
            return counts;
        };
        let lower = |t: i64| t as i128 + self.offset - self.window;
        let mut lo = b.partition_point(|&x| (x as i128) < lower(first));
        for &ta in a {
            let low = lower(ta);
            while lo < b.len() && (b[lo] as i128) < low {
                lo += 1;
            }
            let base = ta as i128 + self.offset;
            for &tb in &b[lo..] {
                let d = tb as i128 - base;
                if d > self.window {
                    break;
                }
                let idx = ((d - self.origin) / self.bin) as usize;
                counts[idx.min(self.nbins - 1)] += 1;
            }
        }
        counts
    }
}

/// Normalizes counts by the accidental level rate_a·rate_b·duration·bin_width.
pub fn g2_normalize(
    h: &Histogram,
    rate_a_hz: f64,
    rate_b_hz: f64,
    duration_s: f64,
) -> Result<Vec<f64>> {
    let accidental = rate_a_hz * rate_b_hz * duration_s * (h.bin_width_fs as f64 / FS_PER_S);
    if !(accidental > 0.0) || !accidental.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "accidental level must be positive (rates {rate_a_hz}, {rate_b_hz} Hz, duration {duration_s} s)"
        )));
    }
    Ok(h.counts.iter().map(|&c| c as f64 / accidental).collect())
}

/// Parses a histogram CSV written by [`Histogram::write_csv`]. Bin width and
/// origin are inferred from the bin centers, which must be evenly spaced.
pub fn read_histogram_csv(text: &str) -> Result<Histogram> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().starts_with("bin_center_ps,counts") => {}
        _ => {
            return Err(Error::InvalidInput(
                "missing `bin_center_ps,counts` header".into(),
            ))
        }
    }
    let mut centers = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in lines {
        let mut cols = line.split(',');
        let (Some(c), Some(n)) = (cols.next(), cols.next()) else {
            return Err(Error::InvalidInput(format!(
                "line {}: expected at least two columns",
                i + 1
            )));
        };
        let c: f64 = c
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("line {}: bad bin center: {e}", i + 1)))?;
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("line {}: bad count: {e}", i + 1)))?;
        if !c.is_finite() {
            return Err(Error::InvalidInput(format!(
                "line {}: non-finite bin center",
                i + 1
            )));
        }
        centers.push(c);
        counts.push(n);
    }
    if centers.len() < 2 {
        return Err(Error::InvalidInput(
            "histogram needs at least two bins".into(),
        ));
    }
    let width_ps = (centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64;
    if !(width_ps > 0.0) {
        return Err(Error::InvalidInput("bin centers must increase".into()));
    }
    for (i, w) in centers.windows(2).enumerate() {
        if ((w[1] - w[0]) - width_ps).abs() > 1e-6 * width_ps.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "uneven bin spacing at row {}",
                i + 2
            )));
        }
    }
    let bin_width_fs = ps_to_fs("bin width", width_ps)?;
    let origin_fs = ((centers[0] - 0.5 * width_ps) * FS_PER_PS as f64).round();
    if !origin_fs.is_finite() || origin_fs.abs() > i64::MAX as f64 / 2.0 {
        return Err(Error::InvalidInput("bin centers out of range".into()));
    }
    let total_pairs = counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .ok_or_else(|| Error::InvalidInput("counts overflow".into()))?;
    Ok(Histogram {
        bin_width_fs,
        origin_fs: origin_fs as i64,
        counts,
        total_pairs,
        offset_applied_fs: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(tags: Vec<i64>) -> TagStream {
        TagStream::from_sorted(tags, 1, 0).unwrap()
    }

    /// All-pairs reference.
    fn brute_force(a: &[i64], b: &[i64], offset: i64, bin: i64, window: i64) -> Vec<u64> {
        let half = (window + bin - 1) / bin;
        let n = (2 * half) as usize;
        let mut counts = vec![0u64; n];
        for &x in a {
            for &y in b {
                let d = y as i128 - x as i128 - offset as i128;
                if d.abs() <= window as i128 {
                    let k = (d + (half * bin) as i128).div_euclid(bin as i128) as usize;
                    counts[k.min(n - 1)] += 1;
                }
            }
        }
        counts
    }

    fn poisson_tags(rng: &mut ChaCha8Rng, n: usize, mean_gap: f64) -> Vec<i64> {
        let mut t = 0i64;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                t += (-(1.0 - u).ln() * mean_gap) as i64;
                t
            })
            .collect()
    }

    #[test]
    fn three_pairs_in_one_bin() {
        let a = stream(vec![1_000_000, 5_000_000, 9_000_000]);
        let b = stream(vec![1_040_000, 5_040_000, 9_040_000]);
        let h = fine_histogram(&a, &b, 0, 10.0, 100.0).unwrap();
        assert_eq!(h.total_pairs, 3);
        let occupied: Vec<usize> = (0..h.counts.len()).filter(|&i| h.counts[i] > 0).collect();
        assert_eq!(occupied.len(), 1);
        let i = occupied[0];
        assert_eq!(h.counts[i], 3);
        let left = h.origin_fs + i as i64 * h.bin_width_fs;
        assert_eq!((left, left + h.bin_width_fs), (40_000, 50_000));
    }

    #[test]
    fn window_edges_inclusive() {
        let a = stream(vec![0]);
        let b = stream(vec![-100_000, 100_000]);
        let h = fine_histogram(&a, &b, 0, 10.0, 100.0).unwrap();
        assert_eq!(h.total_pairs, 2);
        assert_eq!(h.counts[0], 1);
        assert_eq!(*h.counts.last().unwrap(), 1);
        let b = stream(vec![-100_001, 100_001]);
        assert_eq!(
            fine_histogram(&a, &b, 0, 10.0, 100.0).unwrap().total_pairs,
            0
        );
    }

    #[test]
    fn self_correlation_zero_bin() {
        let a = stream(vec![0, 10_000_000, 10_000_000, 25_000_000]);
        let h = fine_histogram(&a, &a, 0, 8.0, 2000.0).unwrap();
        let zero = (-h.origin_fs / h.bin_width_fs) as usize;
        assert!(h.counts[zero] >= a.len() as u64);
    }

    #[test]
    fn rejects_bad_parameters_and_unsorted() {
        let a = stream(vec![0, 1]);
        assert!(fine_histogram(&a, &a, 0, 10.0, 5.0).is_err());
        assert!(fine_histogram(&a, &a, 0, 0.0, 5.0).is_err());
        assert!(matches!(
            histogram_tags(&[3, 1], &[0], 0, 10, 100),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn large_streams_match_subsample_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = poisson_tags(&mut rng, 100_000, 2e9);
        let mut b: Vec<i64> = Vec::new();
        for &t in &a {
            if rng.random::<f64>() < 0.5 {
                b.push(t + 700_000 + (rng.random::<f64>() * 60_000.0) as i64);
            }
        }
        b.extend(poisson_tags(&mut rng, 50_000, 4e9));
        b.sort_unstable();
        let full = histogram_tags(&a, &b, 700_000, 8_000, 2_000_000).unwrap();
        assert!(full.total_pairs > 45_000);
        // partitioned sweep agrees with the serial one
        let serial = Binning {
            offset: 700_000,
            window: 2_000_000,
            bin: 8_000,
            origin: full.origin_fs as i128,
            nbins: full.counts.len(),
        }
        .sweep(&a, &b);
        assert_eq!(serial, full.counts);
        let sub_a = &a[..1000];
        let sub_b: Vec<i64> = b
            .iter()
            .copied()
            .filter(|&t| t <= sub_a[999] + 3_000_000)
            .collect();
        let h = histogram_tags(sub_a, &sub_b, 700_000, 8_000, 2_000_000).unwrap();
        assert_eq!(
            h.counts,
            brute_force(sub_a, &sub_b, 700_000, 8_000, 2_000_000)
        );
    }

    #[test]
    fn coarse_recovers_constructed_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = poisson_tags(&mut rng, 20_000, 83e9);
        let shift = 267_000_000_000i64;
        let b: Vec<i64> = a.iter().map(|&t| t + shift).collect();
        let c = coarse_offset(
            &stream(a.clone()),
            &stream(b),
            DEFAULT_COARSE_BIN_FS,
            DEFAULT_SEARCH_SPAN_FS,
        )
        .unwrap();
        assert!(
            (c.offset_fs - shift).abs() <= DEFAULT_COARSE_BIN_FS,
            "{}",
            c.offset_fs
        );
        let s = stream(a);
        let c = coarse_offset(&s, &s, DEFAULT_COARSE_BIN_FS, DEFAULT_SEARCH_SPAN_FS).unwrap();
        assert_eq!(c.offset_fs, 0);
    }

    #[test]
    fn coarse_rejects_independent_streams() {
        let span = DEFAULT_SEARCH_SPAN_FS / DEFAULT_COARSE_BIN_FS + 1;
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let a = poisson_tags(&mut rng, 60_000, 83.3e9);
            let b = poisson_tags(&mut rng, 60_000, 83.3e9);
            let (sa, sb) = (stream(a), stream(b));
            let err =
                coarse_offset(&sa, &sb, DEFAULT_COARSE_BIN_FS, DEFAULT_SEARCH_SPAN_FS).unwrap_err();
            assert!(matches!(err, Error::NoPeak { .. }), "{err}");
            let ba: Vec<i64> = sa
                .tags()
                .iter()
                .map(|t| t / DEFAULT_COARSE_BIN_FS)
                .collect();
            let bb: Vec<i64> = sb
                .tags()
                .iter()
                .map(|t| t / DEFAULT_COARSE_BIN_FS)
                .collect();
            let folded = correlogram_fft(&ba, &bb, span);
            let err = locate_peak(&folded, span, DEFAULT_COARSE_BIN_FS).unwrap_err();
            assert!(matches!(err, Error::NoPeak { .. }), "{err}");
        }
    }

    #[test]
    fn fft_correlogram_matches_direct_without_wraparound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let span = 100;
        for _ in 0..20 {
            let mut a: Vec<i64> = (0..300).map(|_| rng.random_range(0..150)).collect();
            let mut b: Vec<i64> = (0..300).map(|_| rng.random_range(0..150)).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(
                correlogram_fft(&a, &b, span),
                correlogram_direct(&a, &b, span)
            );
        }
    }

    #[test]
    fn fft_path_recovers_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = poisson_tags(&mut rng, 200_000, 1e9);
        let b: Vec<i64> = a
            .iter()
            .map(|&t| t - 267_000_000_000 + rng.random_range(0..50_000))
            .collect();
        let span = DEFAULT_SEARCH_SPAN_FS / DEFAULT_COARSE_BIN_FS + 1;
        let bin = |v: &[i64]| -> Vec<i64> {
            v.iter()
                .map(|t| t.div_euclid(DEFAULT_COARSE_BIN_FS))
                .collect()
        };
        let c = locate_peak(
            &correlogram_fft(&bin(&a), &bin(&b), span),
            span,
            DEFAULT_COARSE_BIN_FS,
        )
        .unwrap();
        assert!(
            (c.offset_fs + 267_000_000_000).abs() <= DEFAULT_COARSE_BIN_FS,
            "{}",
            c.offset_fs
        );
        assert!(c.mean > 1000.0);
    }

    #[test]
    fn coarse_rejects_empty() {
        let e = stream(vec![]);
        let s = stream(vec![1, 2]);
        assert!(matches!(
            coarse_offset(&e, &s, 1_000_000, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn poisson_threshold_is_conservative() {
        let lags = 2e6 + 1.0;
        let k = poisson_threshold(858.0, lags);
        // about 6.5σ above the mean at this lag count
        assert!(
            k > 858.0 + 6.0 * 858f64.sqrt() && k < 858.0 + 7.5 * 858f64.sqrt(),
            "{k}"
        );
        assert_eq!(poisson_threshold(2e-6, lags), 2.0);
    }

    #[test]
    fn normalization() {
        let h = Histogram {
            bin_width_fs: 8_000,
            origin_fs: -16_000,
            counts: vec![0; 4],
            total_pairs: 0,
            offset_applied_fs: 0,
        };
        assert_eq!(g2_normalize(&h, 12e3, 12e3, 5.0).unwrap(), vec![0.0; 4]);
        assert!(g2_normalize(&h, 0.0, 12e3, 5.0).is_err());
    }

    #[test]
    fn independent_streams_normalize_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = poisson_tags(&mut rng, 60_000, 83.3e9);
        let b = poisson_tags(&mut rng, 60_000, 83.3e9);
        let (sa, sb) = (stream(a), stream(b));
        // wide bins so the accidental level per bin is large enough to test
        let h = fine_histogram(&sa, &sb, 0, 20_000.0, 2_000_000.0).unwrap();
        let dur = sa.acquisition_span_fs() as f64 / FS_PER_S;
        let g = g2_normalize(&h, sa.rate_hz(), sb.rate_hz(), dur).unwrap();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let expected_per_bin = h.total_pairs as f64 / g.len() as f64;
        assert!(
            (mean - 1.0).abs() < 5.0 / (expected_per_bin * g.len() as f64).sqrt() + 0.01,
            "{mean}"
        );
    }

    #[test]
    fn csv_round_trip() {
        let h = Histogram {
            bin_width_fs: 4_000,
            origin_fs: -8_000,
            counts: vec![1, 7, 3, 0],
            total_pairs: 11,
            offset_applied_fs: 0,
        };
        let mut out = Vec::new();
        h.write_csv(&mut out, None).unwrap();
        let back = read_histogram_csv(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(back, h);
        assert!(read_histogram_csv("bin_center_ps,counts\n1,2\n2,3\n4,1\n").is_err());
        assert!(read_histogram_csv("x,y\n1,2\n").is_err());
    }

    fn arb_streams(max: usize) -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
        (
            prop::collection::vec(-2_000_000i64..2_000_000, 0..max),
            prop::collection::vec(-2_000_000i64..2_000_000, 0..max),
        )
            .prop_map(|(mut a, mut b)| {
                a.sort_unstable();
                b.sort_unstable();
                (a, b)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn equals_brute_force((a, b) in arb_streams(400), offset in -50_000i64..50_000,
                              bin in 1i64..20_000, wmul in 1i64..30) {
            let window = bin * wmul + (offset.abs() % bin);
            let h = histogram_tags(&a, &b, offset, bin, window).unwrap();
            prop_assert_eq!(h.counts, brute_force(&a, &b, offset, bin, window));
        }

        #[test]
        fn shift_invariance((a, b) in arb_streams(300), offset in -50_000i64..50_000, shift in -1_000_000_000i64..1_000_000_000) {
            let b2: Vec<i64> = b.iter().map(|t| t + shift).collect();
            let h1 = histogram_tags(&a, &b, offset, 7_000, 200_000).unwrap();
            let h2 = histogram_tags(&a, &b2, offset + shift, 7_000, 200_000).unwrap();
            prop_assert_eq!(h1.counts, h2.counts);
        }

        #[test]
        fn mirror_symmetry((a, b) in arb_streams(300), offset in -25_000i64..25_000) {
            // even tags on one side and odd on the other keep every difference off the
            // (even) bin edges, where half-open bins cannot mirror exactly
            let a: Vec<i64> = a.iter().map(|t| 2 * t).collect();
            let b: Vec<i64> = b.iter().map(|t| 2 * t + 1).collect();
            let offset = 2 * offset;
            let h1 = histogram_tags(&a, &b, offset, 8_000, 400_000).unwrap();
            let h2 = histogram_tags(&b, &a, -offset, 8_000, 400_000).unwrap();
            let mut rev = h2.counts.clone();
            rev.reverse();
            prop_assert_eq!(h1.counts, rev);
        }
    }
}
