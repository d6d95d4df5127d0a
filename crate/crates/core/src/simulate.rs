//! Stationary Euler–Maruyama paths and their CSV form.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::models::{DiffusionModel, InvariantLaw};
use crate::{Error, Result};

/// Consecutive out-of-range steps tolerated before a path is declared exploded.
pub const EXPLOSION_STEPS: usize = 1000;
/// Width of the tolerated band beyond the law grid, in law-grid widths.
pub const EXPLOSION_MARGIN: f64 = 10.0;

/// Reproducible random stream identified by `(master_seed, stream_index)`.
///
/// Each pair selects an independent ChaCha8 stream: the seed fixes the key
/// and the index selects the stream word, so streams never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        RngStream {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Observations `X_{t_0}, ..., X_{t_n}` on the grid `t_i = iΔ`, `nΔ = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dt: f64,
    horizon: f64,
    values: Vec<f64>,
    seed: Option<(u64, u64)>,
}

impl Path {
    /// Path with `values.len() - 1` steps spanning `[0, horizon]`.
    pub fn new(horizon: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Invalid("a path needs at least two observations".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("path value {i} is not finite")));
        }
        let n = values.len() - 1;
        Ok(Path {
            dt: horizon / n as f64,
            horizon,
            values,
            seed: None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `(master_seed, stream_index)` when the path was simulated.
    pub fn seed_info(&self) -> Option<(u64, u64)> {
        self.seed
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps() {
            self.horizon
        } else {
            i as f64 * self.dt
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x")?;
        for (i, x) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), x)?;
        }
        Ok(())
    }

    /// Reads `t,x` rows; the time grid must start at 0 and be uniform.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (k, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if k == 0 {
                if line != "t,x" {
                    return Err(Error::Invalid(format!("expected header `t,x`, found `{line}`")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (t, x) = line
                .split_once(',')
                .ok_or_else(|| Error::Invalid(format!("line {}: expected two columns", k + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("line {}: {e}", k + 1)))
            };
            times.push(parse(t)?);
            values.push(parse(x)?);
        }
        if times.len() < 2 {
            return Err(Error::Invalid("path file holds fewer than two rows".into()));
        }
        let n = times.len() - 1;
        let horizon = times[n];
        let dt = horizon / n as f64;
        if times[0] != 0.0 {
            return Err(Error::Invalid("path must start at t = 0".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if (t - i as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::Invalid(format!("time grid is not uniform at row {}", i + 2)));
            }
        }
        Path::new(horizon, values)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Path::read_csv(std::fs::File::open(path)?)
    }
}

/// Euler–Maruyama path started from the invariant law.
///
/// `X₀ = F⁻¹(U)` with `U` uniform on `(ν, 1-ν)`, then
/// `X_{i+1} = X_i + S(θ,X_i)Δ + σ(X_i)√Δ Z_i`.
pub fn simulate_path(
    model: &dyn DiffusionModel,
    theta: &[f64],
    law: &InvariantLaw,
    horizon: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Path> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt <= horizon / 100.0) {
        return Err(Error::Invalid(format!("dt must lie in (0, T/100], got {dt} for T = {horizon}")));
    }
    let n = (horizon / dt).round() as usize;
    let dt = horizon / n as f64;
    let sq = dt.sqrt();
    let nu = law.nu_clip();
    let u = nu + (1.0 - 2.0 * nu) * rng.uniform();
    let width = law.x_hi() - law.x_lo();
    let lo = law.x_lo() - EXPLOSION_MARGIN * width;
    let hi = law.x_hi() + EXPLOSION_MARGIN * width;

    let mut values = Vec::with_capacity(n + 1);
    let mut x = law.quantile_clamped(u);
    values.push(x);
    let mut outside = 0usize;
    for i in 0..n {
        let z = rng.standard_normal();
        x += model.drift(theta, x) * dt + model.sigma(x) * sq * z;
        if !x.is_finite() {
            return Err(Error::Explosion { step: i + 1, value: x });
        }
        if x < lo || x > hi {
            outside += 1;
            if outside > EXPLOSION_STEPS {
                return Err(Error::Explosion { step: i + 1, value: x });
            }
        } else {
            outside = 0;
        }
        values.push(x);
    }
    Ok(Path {
        dt,
        horizon,
        values,
        seed: Some((rng.master_seed(), rng.stream_index())),
    })
}

/// Sup distance between the path's occupation-density histogram and the
/// bin averages of `f`, over 20 equal bins spanning `F ∈ [10⁻³, 1 - 10⁻³]`.
pub fn histogram_check(path: &Path, law: &InvariantLaw) -> f64 {
    const BINS: usize = 20;
    let nu = law.nu_clip().max(1e-3);
    let a = law.quantile_clamped(nu);
    let b = law.quantile_clamped(1.0 - nu);
    let w = (b - a) / BINS as f64;
    let mut counts = [0usize; BINS];
    let xs = &path.values()[..path.n_steps()];
    for &x in xs {
        if x >= a && x < b {
            counts[(((x - a) / w) as usize).min(BINS - 1)] += 1;
        }
    }
    let n = xs.len() as f64;
    (0..BINS)
        .map(|k| {
            let lo = a + k as f64 * w;
            let expected = (law.cdf_at(lo + w) - law.cdf_at(lo)) / w;
            let observed = counts[k] as f64 / (n * w);
            (observed - expected).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_invariant_law, AffineDrift, ScaledSigma};
    use std::sync::Arc;

    fn ou_law() -> InvariantLaw {
        build_invariant_law(&AffineDrift::ou(), &[1.0], 2000, 1e-4).unwrap()
    }

    #[test]
    fn same_stream_reproduces_bit_identically() {
        let law = ou_law();
        let m = AffineDrift::ou();
        let a = simulate_path(&m, &[1.0], &law, 10.0, 0.01, &mut RngStream::new(7, 3)).unwrap();
        let b = simulate_path(&m, &[1.0], &law, 10.0, 0.01, &mut RngStream::new(7, 3)).unwrap();
        let c = simulate_path(&m, &[1.0], &law, 10.0, 0.01, &mut RngStream::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        assert_eq!(a.seed_info(), Some((7, 3)));
        assert_eq!(a.n_steps(), 1000);
    }

    #[test]
    fn noise_free_path_is_euler_recursion() {
        let law = ou_law();
        let m = ScaledSigma::new(Arc::new(AffineDrift::ou()), 0.0);
        let p = simulate_path(&m, &[2.0], &law, 5.0, 0.01, &mut RngStream::new(1, 0)).unwrap();
        let v = p.values();
        for i in 1..v.len() {
            assert!((v[i] - v[i - 1] * (1.0 - 2.0 * 0.01)).abs() <= 1e-15 * v[i - 1].abs());
            assert!(v[i].abs() < v[i - 1].abs() || v[i] == 0.0);
        }
        assert!(histogram_check(&p, &law) > 1.0);
    }

    #[test]
    fn step_is_adjusted_to_divide_horizon() {
        let law = ou_law();
        let m = AffineDrift::ou();
        let p = simulate_path(&m, &[1.0], &law, 1.0, 0.003, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(p.n_steps(), 333);
        assert!((p.dt() * 333.0 - 1.0).abs() < 1e-15);
        assert!(simulate_path(&m, &[1.0], &law, 1.0, 0.02, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn explosive_model_is_caught() {
        let law = ou_law();
        let m = AffineDrift::custom("explosive", |_| 0.0, |x| x, |_| 1.0, vec![(0.1, 5.0)]);
        let r = simulate_path(&m, &[3.0], &law, 100.0, 0.01, &mut RngStream::new(1, 0));
        assert!(matches!(r, Err(Error::Explosion { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let law = ou_law();
        let m = AffineDrift::ou();
        let p = simulate_path(&m, &[1.0], &law, 2.0, 0.01, &mut RngStream::new(5, 0)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = Path::read_csv(buf.as_slice()).unwrap();
        assert_eq!(p.values(), q.values());
        assert_eq!(p.horizon(), q.horizon());
        assert!(Path::read_csv("t,y\n0,1\n".as_bytes()).is_err());
        assert!(Path::read_csv("t,x\n0,1\n1,2\n3,3\n".as_bytes()).is_err());
    }
}
