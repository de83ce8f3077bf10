//! Periodic signals on `Z / 2^L`, Fourier multipliers, the discrete Carleson
//! maximal operator, Lorentz norms, maximal functions and Muckenhoupt weights.
//!
//! Conventions: `fhat[j] = sum_x f[x] e^{-2 pi i j x / N}` and the inverse carries
//! the `1/N`. A bin `j` has signed frequency `j` for `j < N/2` and `j - N` above.
//! The modulated operator is `H_{N0} f = sum_j m(s(j) - N0) fhat[j] e^{2 pi i j x/N} / N`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("empty input")]
    Empty,
    #[error("exponent p = {0} is not admissible here")]
    BadExponent(f64),
    #[error("weight must be strictly positive (found {0})")]
    NonPositiveWeight(f64),
    #[error("zero input signal")]
    ZeroSignal,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>> = OnceLock::new();

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let cell = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cell.lock().expect("fft planner poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((n, inverse))
        .or_insert_with(|| if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) })
        .clone()
}

/// Unnormalized forward DFT in place.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), false).process(buf);
    }
}

/// Inverse DFT in place, including the `1/N` factor.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n > 1 {
        plan(n, true).process(buf);
    }
    let s = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

#[inline]
pub fn signed_freq(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// A complex periodic signal of power-of-two length with a lazily cached DFT.
#[derive(Debug)]
pub struct Signal {
    samples: Vec<Complex64>,
    pub spacing: f64,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Clone for Signal {
    fn clone(&self) -> Self {
        let s = Signal { samples: self.samples.clone(), spacing: self.spacing, spectrum: OnceLock::new() };
        if let Some(sp) = self.spectrum.get() {
            let _ = s.spectrum.set(sp.clone());
        }
        s
    }
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl Signal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self, SignalError> {
        if samples.is_empty() || !samples.len().is_power_of_two() {
            return Err(SignalError::NotPowerOfTwo(samples.len()));
        }
        Ok(Signal { samples, spacing: 1.0, spectrum: OnceLock::new() })
    }

    pub fn from_real(v: &[f64]) -> Result<Self, SignalError> {
        Self::new(v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(l: u32) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); 1 << l]).unwrap()
    }

    pub fn from_spectrum(spec: Vec<Complex64>) -> Result<Self, SignalError> {
        let mut buf = spec.clone();
        ifft_in_place(&mut buf);
        let s = Self::new(buf)?;
        let _ = s.spectrum.set(spec);
        Ok(s)
    }

    /// `e^{2 pi i bin x / N}`.
    pub fn exponential(l: u32, bin: usize) -> Self {
        let n = 1usize << l;
        let v = (0..n)
            .map(|x| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ((bin * x) % n) as f64 / n as f64))
            .collect();
        Self::new(v).unwrap()
    }

    pub fn indicator(l: u32, set: &[usize]) -> Self {
        let mut v = vec![0.0; 1 << l];
        for &x in set {
            v[x] = 1.0;
        }
        Self::from_real(&v).unwrap()
    }

    /// Indicator of a uniformly random set of exactly `size` samples.
    pub fn random_indicator<R: Rng>(l: u32, size: usize, rng: &mut R) -> Self {
        let n = 1usize << l;
        let set = rand::seq::index::sample(rng, n, size.min(n)).into_vec();
        Self::indicator(l, &set)
    }

    /// Unit-modulus samples with independent uniform phases.
    pub fn random_phase<R: Rng>(l: u32, rng: &mut R) -> Self {
        let v = (0..1usize << l)
            .map(|_| Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU))
            .collect();
        Self::new(v).unwrap()
    }

    /// Standard complex Gaussian-like samples (uniform components, centered).
    pub fn random_complex<R: Rng>(l: u32, rng: &mut R) -> Self {
        let v = (0..1usize << l)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        Self::new(v).unwrap()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn l(&self) -> u32 {
        self.samples.len().trailing_zeros()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let mut buf = self.samples.clone();
            fft_in_place(&mut buf);
            buf
        })
    }

    pub fn abs(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|z| z.norm_sqr() == 0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        strong_lp_norm(&self.abs(), p, None)
    }

    /// Relative Parseval defect `| ||f||^2 - ||fhat||^2/N | / ||f||^2`.
    pub fn parseval_defect(&self) -> f64 {
        let a: f64 = self.samples.iter().map(|z| z.norm_sqr()).sum();
        let b: f64 = self.spectrum().iter().map(|z| z.norm_sqr()).sum::<f64>() / self.len() as f64;
        if a == 0.0 {
            b
        } else {
            (a - b).abs() / a
        }
    }

    pub fn add(&self, o: &Signal) -> Signal {
        Signal::new(self.samples.iter().zip(&o.samples).map(|(a, b)| a + b).collect()).unwrap()
    }

    pub fn sub(&self, o: &Signal) -> Signal {
        Signal::new(self.samples.iter().zip(&o.samples).map(|(a, b)| a - b).collect()).unwrap()
    }

    pub fn scale(&self, c: Complex64) -> Signal {
        Signal::new(self.samples.iter().map(|a| a * c).collect()).unwrap()
    }

    /// `Mod_bin f = e^{2 pi i bin x/N} f`.
    pub fn modulate(&self, bin: i64) -> Signal {
        let n = self.len() as i64;
        let v = self
            .samples
            .iter()
            .enumerate()
            .map(|(x, z)| {
                let ph = (bin * x as i64).rem_euclid(n) as f64 / n as f64;
                z * Complex64::from_polar(1.0, std::f64::consts::TAU * ph)
            })
            .collect();
        Signal::new(v).unwrap()
    }

    /// `Tr_a f = f(. - a)`.
    pub fn translate(&self, a: i64) -> Signal {
        let n = self.len() as i64;
        let v = (0..n).map(|x| self.samples[(x - a).rem_euclid(n) as usize]).collect();
        Signal::new(v).unwrap()
    }

    /// Pairing `<f, g> = sum f conj(g)`.
    pub fn inner(&self, g: &Signal) -> Complex64 {
        self.samples.iter().zip(&g.samples).map(|(a, b)| a * b.conj()).sum()
    }

    /// CSV with a version comment and `index,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SignalError> {
        writeln!(w, "# tilebench-v1")?;
        writeln!(w, "index,re,im")?;
        for (i, z) in self.samples.iter().enumerate() {
            writeln!(w, "{},{:e},{:e}", i, z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SignalError> {
        let mut v = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with("index") {
                continue;
            }
            let parts: Vec<&str> = t.split(',').collect();
            if parts.len() != 3 {
                return Err(SignalError::Parse(format!("bad row `{t}`")));
            }
            let idx: usize = parts[0].trim().parse().map_err(|_| SignalError::Parse(t.to_string()))?;
            if idx != v.len() {
                return Err(SignalError::Parse(format!("row index {idx} out of sequence")));
            }
            let re: f64 = parts[1].trim().parse().map_err(|_| SignalError::Parse(t.to_string()))?;
            let im: f64 = parts[2].trim().parse().map_err(|_| SignalError::Parse(t.to_string()))?;
            v.push(Complex64::new(re, im));
        }
        Self::new(v)
    }

    /// Binary format: magic `TBSG`, sample count as little-endian u64, then
    /// little-endian `(re, im)` f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SignalError> {
        w.write_all(b"TBSG")?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for z in &self.samples {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SignalError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TBSG" {
            return Err(SignalError::Parse("missing TBSG magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n > 1 << 30 {
            return Err(SignalError::Parse(format!("implausible length {n}")));
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            v.push(Complex64::new(re, im));
        }
        Self::new(v)
    }
}

/// Symbol families for the modulated multipliers.
#[derive(Clone, Debug, PartialEq)]
pub enum Multiplier {
    /// `1[xi >= t]`; `t = 1` is `1_(0,inf)` and `t = -1` is `1_[-1,inf)` on the lattice.
    HalfLine { t: i64 },
    /// `(1 + tanh(xi / w)) / 2`.
    Smoothed { width: f64 },
    Constant(Complex64),
}

impl Multiplier {
    pub fn positive_half() -> Self {
        Multiplier::HalfLine { t: 1 }
    }

    pub fn eval(&self, xi: f64) -> Complex64 {
        match self {
            Multiplier::HalfLine { t } => Complex64::new(if xi >= *t as f64 { 1.0 } else { 0.0 }, 0.0),
            Multiplier::Smoothed { width } => Complex64::new(0.5 * (1.0 + (xi / width).tanh()), 0.0),
            Multiplier::Constant(c) => *c,
        }
    }

    /// The symbol on the real line that the lattice version samples: half-line
    /// symbols jump at the origin there.
    fn continuum(&self, xi: f64) -> Complex64 {
        match self {
            Multiplier::HalfLine { .. } => Complex64::new(if xi > 0.0 { 1.0 } else { 0.0 }, 0.0),
            _ => self.eval(xi),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Multiplier::HalfLine { .. } => "half-line",
            Multiplier::Smoothed { .. } => "smoothed",
            Multiplier::Constant(_) => "constant",
        }
    }

    /// Largest `|xi|^a |m^(a)(xi)|` for `a <= order` on a log-spaced grid of
    /// `|xi| in [1e-3, 1e3]`, by central finite differences of step `1e-3 |xi|`.
    pub fn hormander_mihlin_max(&self, order: u32) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=240 {
            let mag = 10f64.powf(-3.0 + 6.0 * i as f64 / 240.0);
            for xi in [mag, -mag] {
                let h = 1e-3 * mag;
                for a in 0..=order {
                    // a-th central difference
                    let mut d = Complex64::new(0.0, 0.0);
                    for j in 0..=a {
                        let c = binomial(a, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
                        d += self.continuum(xi + (a as f64 / 2.0 - j as f64) * h) * c;
                    }
                    let deriv = d.norm() / h.powi(a as i32);
                    worst = worst.max(mag.powi(a as i32) * deriv);
                }
            }
        }
        worst
    }

    pub fn satisfies_hormander_mihlin(&self, order: u32, tol: f64) -> bool {
        self.hormander_mihlin_max(order) <= 1.0 + tol
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `H_{N0} f`: the spectrum multiplied by `m(s(j) - N0)`.
pub fn modulated_multiplier(f: &Signal, m: &Multiplier, n0: i64) -> Signal {
    let n = f.len();
    let spec: Vec<Complex64> = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(j, z)| z * m.eval((signed_freq(j, n) - n0) as f64))
        .collect();
    Signal::from_spectrum(spec).unwrap()
}

/// The modulation parameters scanned by the maximal operator. With signed
/// frequencies in `[-N/2, N/2)` this range realizes every partial sum of a
/// half-line symbol, including the empty and the full one.
pub fn modulation_range(n: usize) -> std::ops::RangeInclusive<i64> {
    -(n as i64) / 2 - 1..=(n as i64) / 2
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CarlesonMode {
    /// One inverse FFT per modulation.
    Fft,
    /// Running suffix sums over the frequencies; half-line symbols only.
    Pruned,
    /// Direct summation, for small `N` oracles.
    BruteForce,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarlesonResult {
    pub magnitudes: Vec<f64>,
    /// Maximizing modulation at each sample; ties go to the smallest value.
    pub argmax: Vec<i64>,
}

/// Values within this relative margin count as ties, resolved toward the
/// smaller modulation, so rounding noise cannot move the maximizer.
pub const TIE_TOL: f64 = 1e-12;

#[inline]
fn beats(v: f64, best: f64) -> bool {
    v > best + TIE_TOL * best.abs()
}

/// Fixed chunk width of the modulation range so the reduction does not depend on
/// the thread count.
const CHUNK: usize = 32;

/// `Cf(x) = sup_{N0} |H_{N0} f(x)|` over [`modulation_range`].
pub fn carleson_max(f: &Signal, m: &Multiplier, mode: CarlesonMode) -> CarlesonResult {
    match mode {
        CarlesonMode::Fft => carleson_fft(f, m),
        CarlesonMode::Pruned => carleson_pruned(f, m),
        CarlesonMode::BruteForce => carleson_brute(f, m),
    }
}

fn merge_into(best: &mut CarlesonResult, other: &CarlesonResult) {
    for x in 0..best.magnitudes.len() {
        if beats(other.magnitudes[x], best.magnitudes[x]) {
            best.magnitudes[x] = other.magnitudes[x];
            best.argmax[x] = other.argmax[x];
        }
    }
}

fn reduce_chunks(n: usize, chunks: Vec<CarlesonResult>) -> CarlesonResult {
    let mut best = CarlesonResult { magnitudes: vec![-1.0; n], argmax: vec![i64::MIN; n] };
    for c in &chunks {
        merge_into(&mut best, c);
    }
    best
}

fn carleson_fft(f: &Signal, m: &Multiplier) -> CarlesonResult {
    let n = f.len();
    let spec = f.spectrum();
    let mods: Vec<i64> = modulation_range(n).collect();
    let chunks: Vec<CarlesonResult> = mods
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut local = CarlesonResult { magnitudes: vec![-1.0; n], argmax: vec![i64::MIN; n] };
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for &n0 in chunk {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = spec[j] * m.eval((signed_freq(j, n) - n0) as f64);
                }
                ifft_in_place(&mut buf);
                for x in 0..n {
                    let v = buf[x].norm();
                    if beats(v, local.magnitudes[x]) {
                        local.magnitudes[x] = v;
                        local.argmax[x] = n0;
                    }
                }
            }
            local
        })
        .collect();
    reduce_chunks(n, chunks)
}

fn carleson_pruned(f: &Signal, m: &Multiplier) -> CarlesonResult {
    let t = match m {
        Multiplier::HalfLine { t } => *t,
        _ => return carleson_fft(f, m),
    };
    let n = f.len();
    let spec = f.spectrum();
    let tw: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0 / n as f64, std::f64::consts::TAU * i as f64 / n as f64))
        .collect();
    let half = (n / 2) as i64;
    let range = modulation_range(n);
    let (lo, hi) = (*range.start(), *range.end());
    let per_x: Vec<(f64, i64)> = (0..n)
        .into_par_iter()
        .map(|x| {
            // H_{N0} f(x) keeps frequencies s >= N0 + t. Walk s downward; after adding s the
            // partial sum equals H_{s-t}, which then stays constant until the next frequency.
            // Candidates run over N0 in ascending order to keep the smallest maximizer.
            let mut sums = Vec::with_capacity(n + 1);
            let mut acc = Complex64::new(0.0, 0.0);
            sums.push(acc.norm()); // no frequency kept
            for s in (-half..half).rev() {
                let j = s.rem_euclid(n as i64) as usize;
                acc += spec[j] * tw[(j * x) % n];
                sums.push(acc.norm());
            }
            // value for modulation N0: number of kept frequencies = #{s in [-half, half): s >= N0 + t}
            let mut best = (-1.0f64, i64::MIN);
            for n0 in lo..=hi {
                let cut = (n0 + t).clamp(-half, half);
                let kept = (half - cut) as usize;
                let v = sums[kept];
                if beats(v, best.0) {
                    best = (v, n0);
                }
            }
            best
        })
        .collect();
    CarlesonResult {
        magnitudes: per_x.iter().map(|p| p.0).collect(),
        argmax: per_x.iter().map(|p| p.1).collect(),
    }
}

fn carleson_brute(f: &Signal, m: &Multiplier) -> CarlesonResult {
    let n = f.len();
    let spec = f.spectrum();
    let mut out = CarlesonResult { magnitudes: vec![-1.0; n], argmax: vec![i64::MIN; n] };
    for x in 0..n {
        for n0 in modulation_range(n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, z) in spec.iter().enumerate() {
                let ph = std::f64::consts::TAU * ((j * x) % n) as f64 / n as f64;
                acc += z * m.eval((signed_freq(j, n) - n0) as f64) * Complex64::from_polar(1.0, ph);
            }
            let v = acc.norm() / n as f64;
            if beats(v, out.magnitudes[x]) {
                out.magnitudes[x] = v;
                out.argmax[x] = n0;
            }
        }
    }
    out
}

/// `||g||_{L^{p,inf}(mu)} = sup_t t mu{|g| > t}^{1/p}`, attained as `t` increases to
/// one of the sorted values: `max_i v_i mu{|g| >= v_i}^{1/p}`. Counting measure when
/// `weights` is `None`.
pub fn weak_lorentz_norm(g: &[f64], p: f64, weights: Option<&[f64]>) -> Result<f64, SignalError> {
    if g.is_empty() {
        return Err(SignalError::Empty);
    }
    if !(p > 0.0) {
        return Err(SignalError::BadExponent(p));
    }
    if let Some(w) = weights {
        if w.len() != g.len() {
            return Err(SignalError::LengthMismatch(w.len(), g.len()));
        }
    }
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    let mut best: f64 = 0.0;
    let mut mass = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let v = g[idx[i]].abs();
        // absorb ties
        while i < idx.len() && g[idx[i]].abs() == v {
            mass += weights.map_or(1.0, |w| w[idx[i]]);
            i += 1;
        }
        best = best.max(v * mass.powf(1.0 / p));
    }
    Ok(best)
}

pub fn strong_lp_norm(g: &[f64], p: f64, weights: Option<&[f64]>) -> f64 {
    if p.is_infinite() {
        return g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    }
    let s: f64 = g
        .iter()
        .enumerate()
        .map(|(i, &v)| v.abs().powf(p) * weights.map_or(1.0, |w| w[i]))
        .sum();
    s.powf(1.0 / p)
}

/// A discrete interval of samples `[start, start + len)` read periodically.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SampleInterval {
    pub start: i64,
    pub len: usize,
}

impl SampleInterval {
    pub fn dyadic(k: u32, n: u64) -> Self {
        SampleInterval { start: (n << k) as i64, len: 1 << k }
    }

    /// Center of the cell union, in sample coordinates where sample `x` is `[x, x+1)`.
    pub fn center(&self) -> f64 {
        self.start as f64 + self.len as f64 / 2.0
    }
}

/// Exponent of the tail weight in the tailed averages.
pub const TAIL_EXPONENT: i32 = 512;

/// `chi_I^M(x) = <(x - c_I)/l_I>^{-M}` at the cell center of sample `x`, with the
/// distance measured on the torus of `n` samples.
pub fn chi(x: usize, iv: &SampleInterval, n: usize, m: i32) -> f64 {
    let d = periodic_distance(x as f64 + 0.5, iv.center(), n as f64) / iv.len as f64;
    (1.0 + d * d).powf(-(m as f64) / 2.0)
}

pub fn periodic_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// `(<f>_{p,I}, <<f>>_{p,I})` for a nonnegative sample vector.
pub fn local_averages(f: &[f64], iv: &SampleInterval, p: f64) -> (f64, f64) {
    let n = f.len();
    let mut plain = 0.0;
    for i in 0..iv.len {
        let x = (iv.start + i as i64).rem_euclid(n as i64) as usize;
        plain += f[x].abs().powf(p);
    }
    let mut tailed = 0.0;
    for (x, v) in f.iter().enumerate() {
        if *v != 0.0 {
            tailed += v.abs().powf(p) * chi(x, iv, n, TAIL_EXPONENT);
        }
    }
    let len = iv.len as f64;
    ((plain / len).powf(1.0 / p), (tailed / len).powf(1.0 / p))
}

/// Sample offset of the blocks of the shifted grid `D_g` at scale `k`: the members
/// at scale `k` collect the samples `r + m 2^k .. r + (m+1) 2^k` (mod N), where a
/// sample belongs to the member containing its cell center.
pub fn grid_block_offset(grid: u8, k: u32) -> usize {
    let len = 1i128 << k;
    // offset o = 2^k s / 3 with s = g(-1)^k; first sample x with x + 1/2 >= o  <=>  6x >= 6o - 3
    let s = crate::dyadic::shift_thirds(grid, k as i32) as i128;
    let o6 = 2 * len * s; // 6 o
    let x = (o6 - 3).div_euclid(6) + if (o6 - 3).rem_euclid(6) == 0 { 0 } else { 1 };
    x.rem_euclid(len) as usize
}

/// `M_p f(x) = sup_I <f>_{p,I} 1_I(x)` over the members of `D_0, D_1, D_2` (read on the
/// torus) at scales `0..=L`.
pub fn maximal_function(f: &[f64], p: f64) -> Vec<f64> {
    maximal_over_grids(f, p, &[0, 1, 2])
}

pub fn maximal_over_grids(f: &[f64], p: f64, grids: &[u8]) -> Vec<f64> {
    let n = f.len();
    let l = n.trailing_zeros();
    let pw: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    let mut prefix = vec![0.0; 2 * n + 1];
    for i in 0..2 * n {
        prefix[i + 1] = prefix[i] + pw[i % n];
    }
    let mut out = vec![0.0f64; n];
    for &g in grids {
        for k in 0..=l {
            let len = 1usize << k;
            let r = grid_block_offset(g, k);
            let blocks = n / len;
            for b in 0..blocks {
                let s = r + b * len;
                let avg = ((prefix[s + len] - prefix[s]) / len as f64).max(0.0).powf(1.0 / p);
                for i in s..s + len {
                    let x = i % n;
                    if avg > out[x] {
                        out[x] = avg;
                    }
                }
            }
        }
    }
    out
}

/// `M_p f` over the standard grid only.
pub fn dyadic_maximal(f: &[f64], p: f64) -> Vec<f64> {
    maximal_over_grids(f, p, &[0])
}

/// A strictly positive weight, normalized to total mass one.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    pub w: Vec<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ApConstants {
    pub a1: f64,
    pub a_inf: f64,
    pub aq: f64,
    pub q: f64,
}

impl Weight {
    pub fn new(w: Vec<f64>) -> Result<Self, SignalError> {
        if w.is_empty() || !w.len().is_power_of_two() {
            return Err(SignalError::NotPowerOfTwo(w.len()));
        }
        if let Some(&bad) = w.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(SignalError::NonPositiveWeight(bad));
        }
        let total: f64 = w.iter().sum();
        Ok(Weight { w: w.into_iter().map(|v| v / total).collect() })
    }

    pub fn uniform(l: u32) -> Self {
        Weight::new(vec![1.0; 1 << l]).unwrap()
    }

    /// Power weight `|x - x0|^alpha` on the torus, regularized at the singular cell.
    pub fn power(l: u32, x0: usize, alpha: f64) -> Self {
        let n = 1usize << l;
        let w = (0..n)
            .map(|x| {
                let d = periodic_distance(x as f64 + 0.5, x0 as f64 + 0.5, n as f64).max(0.5);
                d.powf(alpha)
            })
            .collect();
        Weight::new(w).unwrap()
    }

    /// Averages of `w` over the standard dyadic intervals at scale `k`.
    fn level_averages(v: &[f64], k: u32) -> Vec<f64> {
        let len = 1usize << k;
        v.chunks(len).map(|c| c.iter().sum::<f64>() / len as f64).collect()
    }

    /// `[w]_{A1}`, `[w]_{A_inf}` (Fujii-Wilson) and `[w]_{A_q}` over the standard
    /// dyadic intervals of the torus.
    pub fn ap_constants(&self, q: f64) -> ApConstants {
        let n = self.w.len();
        let l = n.trailing_zeros();
        let mut a1: f64 = 0.0;
        let mut aq: f64 = 0.0;
        let dual: Vec<f64> = self.w.iter().map(|v| v.powf(-1.0 / (q - 1.0))).collect();
        // running dyadic maximal function of w restricted to the current ancestor
        let mut m: Vec<f64> = self.w.clone();
        let mut a_inf: f64 = 0.0;
        for k in 0..=l {
            let len = 1usize << k;
            let avg = Self::level_averages(&self.w, k);
            let davg = Self::level_averages(&dual, k);
            for (b, chunk) in self.w.chunks(len).enumerate() {
                let mn = chunk.iter().cloned().fold(f64::INFINITY, f64::min);
                a1 = a1.max(avg[b] / mn);
                aq = aq.max(avg[b] * davg[b].powf(q - 1.0));
                for x in b * len..(b + 1) * len {
                    m[x] = m[x].max(avg[b]);
                }
                let mavg = m[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64;
                a_inf = a_inf.max(mavg / avg[b]);
            }
        }
        ApConstants { a1, a_inf, aq, q }
    }

    /// `K(w,p) = A1^{1/p} A_inf^{1-1/p} (log_1 A_inf)^{2/p}`.
    pub fn k_constant(&self, p: f64) -> f64 {
        let c = self.ap_constants(2.0);
        k_of(c.a1, c.a_inf, p)
    }
}

pub fn log1(t: f64) -> f64 {
    t.ln().max(1.0)
}

pub fn k_of(a1: f64, a_inf: f64, p: f64) -> f64 {
    a1.powf(1.0 / p) * a_inf.powf(1.0 - 1.0 / p) * log1(a_inf).powf(2.0 / p)
}

/// `||Cf||_{L^{p,inf}(w)} (p-1) / (K(w,p) ||f||_{L^p(w)})`.
pub fn weighted_weak_ratio(f: &Signal, w: &Weight, p: f64, m: &Multiplier) -> Result<f64, SignalError> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(SignalError::BadExponent(p));
    }
    if f.is_zero() {
        return Err(SignalError::ZeroSignal);
    }
    if w.w.len() != f.len() {
        return Err(SignalError::LengthMismatch(w.w.len(), f.len()));
    }
    let cf = carleson_max(f, m, CarlesonMode::Pruned).magnitudes;
    let weak = weak_lorentz_norm(&cf, p, Some(&w.w))?;
    let strong = strong_lp_norm(&f.abs(), p, Some(&w.w));
    Ok(weak * (p - 1.0) / (w.k_constant(p) * strong))
}
