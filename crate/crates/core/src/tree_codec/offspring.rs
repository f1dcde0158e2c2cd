//! Critical offspring laws.

use std::fmt;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

const POISSON_CUTOFF: usize = 64;
const MOMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringPreset {
    /// `p_i = 2^{-i-1}`
    Geometric,
    /// `p_0 = p_2 = 1/2`
    Binary,
    /// Poisson(1) truncated at 64 and renormalized.
    Poisson,
}

impl OffspringPreset {
    pub fn name(self) -> &'static str {
        match self {
            OffspringPreset::Geometric => "geometric",
            OffspringPreset::Binary => "binary",
            OffspringPreset::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "geometric" | "geom" => Ok(OffspringPreset::Geometric),
            "binary" => Ok(OffspringPreset::Binary),
            "poisson" => Ok(OffspringPreset::Poisson),
            other => Err(Error::Domain(format!("unknown offspring preset '{other}'"))),
        }
    }
}

impl fmt::Display for OffspringPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    /// Trailing zeros of a uniform word are geometric(1/2).
    Geometric,
    Alias(WeightedAliasIndex<f64>),
}

impl Sampler {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            Sampler::Geometric => loop {
                let w: u64 = rng.random();
                if w != 0 {
                    break w.trailing_zeros();
                }
            },
            Sampler::Alias(table) => table.sample(rng) as u32,
        }
    }
}

/// A critical offspring distribution `(p_i)` with finite variance.
#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    name: String,
    /// Explicit masses; the geometric law is evaluated in closed form instead.
    pmf: Option<Vec<f64>>,
    mean: f64,
    sigma_p_sq: f64,
    support_gcd: u32,
    sampler: Sampler,
    tail_sampler: Sampler,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl OffspringDistribution {
    pub fn preset(preset: OffspringPreset) -> Self {
        match preset {
            OffspringPreset::Geometric => Self {
                name: preset.name().into(),
                pmf: None,
                mean: 1.0,
                sigma_p_sq: 2.0,
                support_gcd: 1,
                sampler: Sampler::Geometric,
                tail_sampler: Sampler::Geometric,
            },
            OffspringPreset::Binary => {
                Self::from_pmf(preset.name(), vec![0.5, 0.0, 0.5]).expect("binary law is critical")
            }
            OffspringPreset::Poisson => {
                let mut pmf = Vec::with_capacity(POISSON_CUTOFF + 1);
                let mut p = (-1.0f64).exp();
                for i in 0..=POISSON_CUTOFF {
                    if i > 0 {
                        p /= i as f64;
                    }
                    pmf.push(p);
                }
                let total: f64 = pmf.iter().sum();
                for p in &mut pmf {
                    *p /= total;
                }
                Self::from_pmf(preset.name(), pmf).expect("truncated Poisson(1) is critical")
            }
        }
    }

    pub fn geometric() -> Self {
        Self::preset(OffspringPreset::Geometric)
    }

    pub fn binary() -> Self {
        Self::preset(OffspringPreset::Binary)
    }

    pub fn poisson() -> Self {
        Self::preset(OffspringPreset::Poisson)
    }

    /// A finitely supported law; must sum to one and have mean one.
    pub fn from_pmf(name: &str, pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Distribution("masses must be finite and nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > MOMENT_TOL {
            return Err(Error::Distribution(format!("masses sum to {total}, not 1")));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
        if (mean - 1.0).abs() > MOMENT_TOL {
            return Err(Error::Distribution(format!("mean {mean} is not critical")));
        }
        let second: f64 = pmf.iter().enumerate().map(|(i, p)| (i * i) as f64 * p).sum();
        let sigma_p_sq = second - 1.0;
        if sigma_p_sq <= MOMENT_TOL {
            return Err(Error::Distribution("offspring law is degenerate".into()));
        }
        let support_gcd = pmf
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .fold(0, |g, (i, _)| gcd(g, i as u32));
        // P(D = j) = Σ_{i > j} p_i
        let mut tail = vec![0.0; pmf.len().saturating_sub(1)];
        let mut acc = 0.0;
        for j in (0..tail.len()).rev() {
            acc += pmf[j + 1];
            tail[j] = acc;
        }
        let alias = |w: Vec<f64>| {
            WeightedAliasIndex::new(w)
                .map(Sampler::Alias)
                .map_err(|e| Error::Distribution(format!("alias table: {e}")))
        };
        Ok(Self {
            name: name.into(),
            sampler: alias(pmf.clone())?,
            tail_sampler: alias(tail)?,
            pmf: Some(pmf),
            mean,
            sigma_p_sq,
            support_gcd,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma_p_sq(&self) -> f64 {
        self.sigma_p_sq
    }

    /// gcd of `{i : p_i > 0}`; a tree of size `n` has positive probability
    /// only if it divides `n - 1`.
    pub fn support_gcd(&self) -> u32 {
        self.support_gcd
    }

    pub fn pmf(&self, i: usize) -> f64 {
        match &self.pmf {
            None => 0.5f64.powi(i as i32 + 1),
            Some(p) => p.get(i).copied().unwrap_or(0.0),
        }
    }

    /// Law of the extra offspring of a spine vertex: `Σ_{i > j} p_i`.
    pub fn tail_pmf(&self, j: usize) -> f64 {
        match &self.pmf {
            None => 0.5f64.powi(j as i32 + 1),
            Some(p) => p.iter().skip(j + 1).sum(),
        }
    }

    /// Largest `i` with `p_i > 0`, or `None` for unbounded support.
    pub fn max_support(&self) -> Option<usize> {
        self.pmf.as_ref().map(|p| p.iter().rposition(|x| *x > 0.0).unwrap_or(0))
    }

    pub fn check_admissible(&self, n: u64) -> Result<()> {
        if n == 0 || (n - 1) % self.support_gcd as u64 != 0 {
            return Err(Error::Inadmissible {
                n,
                gcd: self.support_gcd,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sampler.sample(rng)
    }

    #[inline]
    pub fn sample_tail<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.tail_sampler.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_are_critical() {
        let g = OffspringDistribution::geometric();
        assert_eq!(g.sigma_p_sq(), 2.0);
        let s: f64 = (0..200).map(|i| g.pmf(i)).sum();
        assert!((s - 1.0).abs() < 1e-15);

        let b = OffspringDistribution::binary();
        assert_eq!(b.sigma_p_sq(), 1.0);
        assert_eq!(b.support_gcd(), 2);
        assert!(b.check_admissible(3).is_ok());
        assert!(matches!(b.check_admissible(4), Err(Error::Inadmissible { n: 4, gcd: 2 })));

        let p = OffspringDistribution::poisson();
        assert!((p.mean() - 1.0).abs() < 1e-12);
        assert!((p.sigma_p_sq() - 1.0).abs() < 1e-12);
        assert_eq!(p.max_support(), Some(64));
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(OffspringDistribution::from_pmf("x", vec![0.5, 0.5]).is_err());
        assert!(OffspringDistribution::from_pmf("x", vec![0.0, 1.0]).is_err());
        assert!(OffspringDistribution::from_pmf("x", vec![0.3, 0.3]).is_err());
    }

    #[test]
    fn tail_law_matches_definition() {
        let b = OffspringDistribution::binary();
        assert_eq!(b.tail_pmf(0), 0.5);
        assert_eq!(b.tail_pmf(1), 0.5);
        assert_eq!(b.tail_pmf(2), 0.0);
        let g = OffspringDistribution::geometric();
        for j in 0..10 {
            assert!((g.tail_pmf(j) - g.pmf(j)).abs() < 1e-16);
        }
    }

    #[test]
    fn samplers_hit_their_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dist in [
            OffspringDistribution::geometric(),
            OffspringDistribution::binary(),
            OffspringDistribution::poisson(),
        ] {
            let n = 200_000;
            let mean = (0..n).map(|_| dist.sample(&mut rng) as f64).sum::<f64>() / n as f64;
            let se = (dist.sigma_p_sq() / n as f64).sqrt();
            assert!((mean - 1.0).abs() < 5.0 * se, "{}: {mean}", dist.name());
            // the tail law has mean σ²/2
            let tail = (0..n).map(|_| dist.sample_tail(&mut rng) as f64).sum::<f64>() / n as f64;
            assert!((tail - dist.sigma_p_sq() / 2.0).abs() < 0.02, "{}: {tail}", dist.name());
        }
    }
}
