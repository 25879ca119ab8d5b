use rand::Rng;
use rand_distr::{Distribution as _, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How integers are drawn from a domain `[0, n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    #[default]
    Uniform,
    /// Centered on the domain with a standard deviation of `stddev_pct`
    /// percent of its width; draws outside the domain are redrawn.
    Normal { stddev_pct: f64 },
    /// Rank 1 (value 0) is the most popular.
    Zipf { s: f64 },
    /// Zipfian over the leading `prefix_digits` decimal digits, uniform below.
    PrefixZipf { s: f64, prefix_digits: u32 },
}

impl Distribution {
    pub const DEFAULT_NORMAL: Distribution = Distribution::Normal { stddev_pct: 34.0 };
    pub const DEFAULT_ZIPF: Distribution = Distribution::Zipf { s: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform => true,
            Distribution::Normal { stddev_pct } => stddev_pct > 0.0 && stddev_pct <= 100.0,
            Distribution::Zipf { s } => s > 0.0,
            Distribution::PrefixZipf { s, prefix_digits } => s > 0.0 && prefix_digits > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid distribution {self:?}")))
        }
    }

    /// Parses `uniform`, `normal[:pct]`, `zipf[:s]` or `prefixzipf[:s[:digits]]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let num = |p: Option<&str>, default: f64| -> Result<f64> {
            match p {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad distribution parameter '{v}'"))),
            }
        };
        let d = match name.as_str() {
            "uniform" => Distribution::Uniform,
            "normal" => Distribution::Normal {
                stddev_pct: num(parts.next(), 34.0)?,
            },
            "zipf" | "zipfian" => Distribution::Zipf {
                s: num(parts.next(), 1.0)?,
            },
            "prefixzipf" | "prefix_zipf" => Distribution::PrefixZipf {
                s: num(parts.next(), 1.0)?,
                prefix_digits: num(parts.next(), 2.0)? as u32,
            },
            other => return Err(Error::InvalidArgument(format!("unknown distribution '{other}'"))),
        };
        if parts.next().is_some() {
            return Err(Error::InvalidArgument(format!("too many parameters in '{text}'")));
        }
        d.validate()?;
        Ok(d)
    }

    pub fn label(&self) -> String {
        match *self {
            Distribution::Uniform => "uniform".into(),
            Distribution::Normal { stddev_pct } => format!("normal:{stddev_pct}"),
            Distribution::Zipf { s } => format!("zipf:{s}"),
            Distribution::PrefixZipf { s, prefix_digits } => format!("prefixzipf:{s}:{prefix_digits}"),
        }
    }
}

/// A distribution bound to a domain size.
#[derive(Clone, Debug)]
pub struct Sampler {
    n: u64,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Uniform,
    Normal(Normal<f64>),
    Zipf(Zipf<f64>),
    PrefixZipf { prefixes: Zipf<f64>, block: u64 },
}

impl Sampler {
    pub fn new(dist: Distribution, n: u64) -> Result<Self> {
        dist.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("cannot sample from an empty domain".into()));
        }
        let bad = |e: &dyn std::fmt::Display| Error::InvalidArgument(e.to_string());
        let kind = match dist {
            Distribution::Uniform => SamplerKind::Uniform,
            Distribution::Normal { stddev_pct } => SamplerKind::Normal(
                Normal::new(n as f64 / 2.0, n as f64 * stddev_pct / 100.0).map_err(|e| bad(&e))?,
            ),
            Distribution::Zipf { s } => SamplerKind::Zipf(Zipf::new(n as f64, s).map_err(|e| bad(&e))?),
            Distribution::PrefixZipf { s, prefix_digits } => {
                let prefixes = 10u64.saturating_pow(prefix_digits).min(n);
                let block = n / prefixes;
                SamplerKind::PrefixZipf {
                    prefixes: Zipf::new(prefixes as f64, s).map_err(|e| bad(&e))?,
                    block,
                }
            }
        };
        Ok(Self { n, kind })
    }

    pub fn domain(&self) -> u64 {
        self.n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            SamplerKind::Uniform => rng.random_range(0..self.n),
            SamplerKind::Normal(normal) => {
                for _ in 0..64 {
                    let x = normal.sample(rng).floor();
                    if x >= 0.0 && x < self.n as f64 {
                        return x as u64;
                    }
                }
                (normal.sample(rng).floor().max(0.0) as u64).min(self.n - 1)
            }
            SamplerKind::Zipf(z) => (z.sample(rng) as u64 - 1).min(self.n - 1),
            SamplerKind::PrefixZipf { prefixes, block } => {
                let p = prefixes.sample(rng) as u64 - 1;
                (p * block + rng.random_range(0..*block)).min(self.n - 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn uniform_passes_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = Sampler::new(Distribution::Uniform, 1000).unwrap();
        let bins = 100usize;
        let mut counts = vec![0f64; bins];
        let draws = 100_000;
        for _ in 0..draws {
            counts[(s.sample(&mut rng) / 10) as usize] += 1.0;
        }
        let expected = draws as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
        assert!(p > 0.01, "chi-square p = {p}");
    }

    #[test]
    fn zipf_top_two_ratio_is_two_to_the_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Sampler::new(Distribution::DEFAULT_ZIPF, 10_000).unwrap();
        let (mut first, mut second) = (0f64, 0f64);
        for _ in 0..100_000 {
            match s.sample(&mut rng) {
                0 => first += 1.0,
                1 => second += 1.0,
                _ => {}
            }
        }
        let ratio = first / second;
        assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
    }

    #[test]
    fn normal_stays_in_domain_and_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Sampler::new(Distribution::DEFAULT_NORMAL, 1000).unwrap();
        let draws: Vec<u64> = (0..20_000).map(|_| s.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&d| d < 1000));
        let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
        assert!((mean - 500.0).abs() < 15.0);
    }

    #[test]
    fn prefix_zipf_concentrates_on_low_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Sampler::new(
            Distribution::PrefixZipf {
                s: 1.0,
                prefix_digits: 2,
            },
            100_000,
        )
        .unwrap();
        let hot = (0..10_000).filter(|_| s.sample(&mut rng) < 1000).count();
        // prefix 0 carries about 1 / H(100) of the mass
        assert!(hot > 1500 && hot < 2400, "{hot}");
    }

    #[test]
    fn parses_labels() {
        for text in ["uniform", "normal:34", "zipf:1", "prefixzipf:1:2"] {
            let d = Distribution::parse(text).unwrap();
            assert_eq!(Distribution::parse(&d.label()).unwrap(), d);
        }
        assert!(Distribution::parse("zipf:-1").is_err());
        assert!(Distribution::parse("pareto").is_err());
    }
}
