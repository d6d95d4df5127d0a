//! Monte Carlo law of `∫₀¹ w_t² dt` for a standard Wiener process `w`.
//!
//! Sampled from the Karhunen–Loève expansion `Σ_k Z_k² / λ_k` with
//! `λ_k = ((k - 1/2)π)²`. The tail `k > K` is replaced by its mean. Sample
//! `i` draws its normals from stream `(seed, i)`, so tables with more terms
//! extend the same draws.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use crate::simulate::RngStream;
use crate::{Error, Result};

/// Seed of the reference run behind [`REFERENCE_C_05`] and [`REFERENCE_C_01`].
pub const REFERENCE_SEED: u64 = 20240601;
/// Sample size of the reference run.
pub const REFERENCE_N_MC: usize = 1_000_000;
/// Expansion terms of the reference run.
pub const REFERENCE_KL_TERMS: usize = 1000;
/// `c_{0.05}` from the reference run.
pub const REFERENCE_C_05: f64 = 1.655611;
/// Monte Carlo standard error of [`REFERENCE_C_05`].
pub const REFERENCE_C_05_SE: f64 = 0.003;
/// `c_{0.01}` from the reference run.
pub const REFERENCE_C_01: f64 = 2.794151;
/// Monte Carlo standard error of [`REFERENCE_C_01`].
pub const REFERENCE_C_01_SE: f64 = 0.008;

/// Exact mean `1/2` of `∫₀¹ w²`.
pub const LIMIT_MEAN: f64 = 0.5;
/// Exact variance `1/3` of `∫₀¹ w²`.
pub const LIMIT_VARIANCE: f64 = 1.0 / 3.0;

/// `1/λ_k` for `k = 1, ..., K`.
fn inverse_eigenvalues(kl_terms: usize) -> Vec<f64> {
    (1..=kl_terms)
        .map(|k| {
            let r = (k as f64 - 0.5) * PI;
            1.0 / (r * r)
        })
        .collect()
}

/// `Σ_{k>K} 1/λ_k`, from `Σ_{k≥1} 1/λ_k = 1/2`.
pub fn truncation_mean(kl_terms: usize) -> f64 {
    // summing small terms first keeps the difference accurate
    let head: f64 = inverse_eigenvalues(kl_terms).iter().rev().sum();
    (0.5 - head).max(0.0)
}

/// Sorted sample of `∫₀¹ w²` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLawTable {
    sample: Vec<f64>,
    n_mc: usize,
    kl_terms: usize,
    seed: u64,
}

/// One draw of the truncated expansion plus the tail mean.
fn draw(seed: u64, index: u64, inv_lambda: &[f64], tail: f64) -> f64 {
    let mut rng = RngStream::new(seed, index);
    let mut acc = 0.0;
    for w in inv_lambda {
        let z = rng.standard_normal();
        acc += z * z * w;
    }
    acc + tail
}

/// Draws `n_mc` values of `Σ_{k≤K} Z_k²/λ_k + Σ_{k>K} 1/λ_k`.
pub fn sample_limit_law(n_mc: usize, kl_terms: usize, seed: u64) -> Result<LimitLawTable> {
    if n_mc < 10_000 {
        return Err(Error::Invalid(format!("n_mc must be at least 10^4, got {n_mc}")));
    }
    if kl_terms < 100 {
        return Err(Error::Invalid(format!("kl_terms must be at least 100, got {kl_terms}")));
    }
    let inv = inverse_eigenvalues(kl_terms);
    let tail = truncation_mean(kl_terms);
    let mut sample: Vec<f64> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| draw(seed, i, &inv, tail))
        .collect();
    sample.par_sort_unstable_by(f64::total_cmp);
    Ok(LimitLawTable {
        sample,
        n_mc,
        kl_terms,
        seed,
    })
}

impl LimitLawTable {
    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    pub fn kl_terms(&self) -> usize {
        self.kl_terms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean(&self) -> f64 {
        self.sample.iter().sum::<f64>() / self.sample.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.sample.len() as f64;
        self.sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    }

    pub fn skewness(&self) -> f64 {
        let m = self.mean();
        let n = self.sample.len() as f64;
        let m2 = self.sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m3 = self.sample.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    /// Whether mean and variance lie within three standard errors of
    /// `1/2` and `1/3`.
    pub fn moments_consistent(&self) -> bool {
        let n = self.sample.len() as f64;
        let var = self.variance();
        let m = self.mean();
        let mean_se = (var / n).sqrt();
        let m4 = self.sample.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let var_se = ((m4 - var * var) / n).sqrt();
        (m - LIMIT_MEAN).abs() < 3.0 * mean_se && (var - LIMIT_VARIANCE).abs() < 3.0 * var_se
    }

    /// Empirical `p`-quantile, the `⌈pn⌉`-th order statistic.
    fn order_quantile(&self, p: f64) -> f64 {
        let n = self.sample.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.sample[k - 1]
    }

    /// `c_ε` with `P(∫w² > c_ε) ≈ ε`.
    pub fn quantile_c_eps(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain {
                value: eps,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(self.order_quantile(1.0 - eps))
    }

    /// Standard error of `c_ε` from `√(p(1-p)/n)/f(c_ε)`, with the density
    /// estimated from the quantile spacing over `p ± 0.005`.
    pub fn quantile_se(&self, eps: f64) -> Result<f64> {
        let p = 1.0 - eps;
        let h = 0.005_f64.min(eps / 2.0).min(p / 2.0);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain {
                value: eps,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let dq = self.order_quantile(p + h) - self.order_quantile(p - h);
        let n = self.sample.len() as f64;
        Ok((p * (1.0 - p) / n).sqrt() * dq / (2.0 * h))
    }

    /// Empirical CDF `#{s ≤ x}/n`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sample.partition_point(|&s| s <= x) as f64 / self.sample.len() as f64
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed,n_mc,kl_terms")?;
        writeln!(w, "{},{},{}", self.seed, self.n_mc, self.kl_terms)?;
        writeln!(w, "value")?;
        for v in &self.sample {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Invalid(format!("table cache ends before {what}")))
        };
        if next("header")?.trim() != "seed,n_mc,kl_terms" {
            return Err(Error::Invalid("table cache header must be `seed,n_mc,kl_terms`".into()));
        }
        let meta = next("metadata")?;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        let bad = || Error::Invalid(format!("malformed table cache metadata `{meta}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let seed: u64 = parts[0].parse().map_err(|_| bad())?;
        let n_mc: usize = parts[1].parse().map_err(|_| bad())?;
        let kl_terms: usize = parts[2].parse().map_err(|_| bad())?;
        if next("value header")?.trim() != "value" {
            return Err(Error::Invalid("table cache is missing the `value` header".into()));
        }
        let mut sample = Vec::with_capacity(n_mc);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            sample.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("table cache value `{line}`: {e}")))?,
            );
        }
        if sample.len() != n_mc {
            return Err(Error::Invalid(format!(
                "table cache holds {} values, header says {n_mc}",
                sample.len()
            )));
        }
        if sample.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("table cache sample is not sorted".into()));
        }
        Ok(LimitLawTable {
            sample,
            n_mc,
            kl_terms,
            seed,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_cache(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_cache(std::fs::File::open(path)?)
    }

    /// Loads `path` when it holds a table with these settings, otherwise
    /// samples one and writes it there.
    pub fn load_or_sample(path: &std::path::Path, n_mc: usize, kl_terms: usize, seed: u64) -> Result<Self> {
        if let Ok(t) = Self::load(path) {
            if t.n_mc == n_mc && t.kl_terms == kl_terms && t.seed == seed {
                return Ok(t);
            }
        }
        let t = sample_limit_law(n_mc, kl_terms, seed)?;
        t.save(path)?;
        Ok(t)
    }
}

/// Two-sample Kolmogorov–Smirnov distance between sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks_distance needs nonempty samples");
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
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

/// KS distance between a (not necessarily sorted) sample and a table.
pub fn ks_to_table(sample: &[f64], table: &LimitLawTable) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    ks_distance(&s, table.sample())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_mean_matches_tail_sum() {
        // Σ_{k>K} 1/((k-1/2)²π²) summed directly far enough for 1e-12
        for k in [100usize, 500, 1000] {
            let direct: f64 = (k + 1..10_000_000).rev().map(|j| 1.0 / (((j as f64 - 0.5) * PI).powi(2))).sum();
            let rest = 1.0 / (PI * PI * (10_000_000.0 - 1.0));
            assert!((truncation_mean(k) - (direct + rest)).abs() < 1e-12);
            assert!((truncation_mean(k) - 1.0 / (PI * PI * k as f64)).abs() < 1e-8);
        }
    }

    #[test]
    fn argument_checks() {
        assert!(sample_limit_law(9_999, 100, 1).is_err());
        assert!(sample_limit_law(10_000, 99, 1).is_err());
        let t = sample_limit_law(10_000, 100, 1).unwrap();
        assert!(matches!(t.quantile_c_eps(0.0), Err(Error::Domain { .. })));
        assert!(matches!(t.quantile_c_eps(1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn table_is_sorted_deterministic_and_positively_skewed() {
        let a = sample_limit_law(20_000, 200, 3).unwrap();
        let b = sample_limit_law(20_000, 200, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.sample().windows(2).all(|w| w[0] <= w[1]));
        assert!(a.skewness() > 0.0);
        assert!(a.moments_consistent());
        let median = a.sample()[a.n_mc() / 2 - 1];
        assert_eq!(a.quantile_c_eps(0.5).unwrap(), median);
        assert!(a.quantile_c_eps(0.01).unwrap() > a.quantile_c_eps(0.10).unwrap());
    }

    #[test]
    fn cache_round_trip_is_bit_identical() {
        let a = sample_limit_law(10_000, 100, 9).unwrap();
        let mut buf = Vec::new();
        a.write_cache(&mut buf).unwrap();
        let b = LimitLawTable::read_cache(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        assert!(LimitLawTable::read_cache("seed,n_mc,kl_terms\n1,2,3\nvalue\n0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn ks_edge_cases() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[1.0, 2.0]), 1.0);
        assert!((ks_distance(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_steps_at_sample_points() {
        let t = sample_limit_law(10_000, 100, 2).unwrap();
        let s = t.sample();
        assert_eq!(t.cdf(s[0] - 1.0), 0.0);
        assert_eq!(t.cdf(s[s.len() - 1]), 1.0);
        assert!((t.cdf(s[99]) - 100.0 / 10_000.0).abs() < 1e-15);
    }
}
