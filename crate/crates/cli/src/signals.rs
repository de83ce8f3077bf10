use crate::error::{CliError, CliResult};
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tilebench::dyadic::Tile;
use tilebench::signal::Signal;
use tilebench::wavepackets::{wavelet, W_DICTIONARY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Indicator of a uniformly random set of `N 2^-density_exp` samples.
    Indicator,
    /// Unit-modulus samples with independent uniform phases.
    RandomPhase,
    /// A random combination of wave packets from the analysis dictionary.
    PacketSum,
}

/// Largest supported `L`; keeps FFT-sized buffers and tile tables in memory.
pub const MAX_L: u32 = 16;

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// Signal length is 2^L.
    #[arg(long = "L", default_value_t = 10)]
    #[serde(rename = "L")]
    pub l: u32,
    #[arg(long, value_enum, default_value_t = Family::Indicator)]
    pub family: Family,
    /// Seed of the signal generator; every family is randomized.
    #[arg(long)]
    pub seed: u64,
    /// Indicator family: the set has N 2^-density_exp samples.
    #[arg(long, default_value_t = 3)]
    #[serde(default = "default_density")]
    pub density_exp: u32,
    /// Packet-sum family: number of packets.
    #[arg(long, default_value_t = 8)]
    #[serde(default = "default_packets")]
    pub packets: usize,
}

fn default_density() -> u32 {
    3
}

fn default_packets() -> usize {
    8
}

impl SignalSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.l < 2 || self.l > MAX_L {
            return Err(CliError::Schema(format!("L = {} outside 2..={MAX_L}", self.l)));
        }
        if self.family == Family::Indicator && self.density_exp > self.l {
            return Err(CliError::Schema(format!("density exponent {} exceeds L = {}", self.density_exp, self.l)));
        }
        if self.family == Family::PacketSum && self.packets == 0 {
            return Err(CliError::Schema("packet-sum needs at least one packet".into()));
        }
        Ok(())
    }

    /// The `index`-th signal of the family; distinct indices use independent streams.
    pub fn generate(&self, index: u64) -> CliResult<Signal> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        Ok(match self.family {
            Family::Indicator => Signal::random_indicator(self.l, (1usize << self.l) >> self.density_exp, &mut rng),
            Family::RandomPhase => Signal::random_phase(self.l, &mut rng),
            Family::PacketSum => {
                let mut f = Signal::zeros(self.l);
                for _ in 0..self.packets {
                    let k = rng.gen_range(0..=self.l);
                    let tile = Tile::new(k, rng.gen_range(0..1u64 << (self.l - k)), rng.gen_range(0..1u64 << k));
                    let d = rng.gen_range(0..W_DICTIONARY.len());
                    let c = Complex64::from_polar(rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
                    f = f.add(&wavelet(self.l, &tile, d).scale(c));
                }
                f
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family) -> SignalSpec {
        SignalSpec { l: 6, family, seed: 7, density_exp: 3, packets: 4 }
    }

    #[test]
    fn families_are_seeded() {
        for fam in [Family::Indicator, Family::RandomPhase, Family::PacketSum] {
            let s = spec(fam);
            let a = s.generate(0).unwrap();
            assert_eq!(a.samples(), s.generate(0).unwrap().samples());
            assert_ne!(a.samples(), s.generate(1).unwrap().samples());
            assert!(!a.is_zero());
        }
        let ind = spec(Family::Indicator).generate(0).unwrap();
        assert_eq!(ind.abs().iter().filter(|v| **v == 1.0).count(), 8);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(Family::Indicator);
        s.density_exp = 9;
        assert!(matches!(s.generate(0), Err(CliError::Schema(_))));
        s.l = 40;
        assert!(s.validate().is_err());
    }
}
