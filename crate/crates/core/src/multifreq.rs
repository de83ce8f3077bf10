//! Smooth multi-frequency decomposition on minimal tiles.
//!
//! Calderón–Zygmund intervals `CZ_K(J)` are the maximal dyadic `G` whose dilate
//! `9K^2 G` contains no source interval. Each `G` carries the `l_G` minimal tiles
//! `G x [j/l_G, (j+1)/l_G)`, which are ordinary tiles of the standard tiling, and
//! each tile carries the approximate projection `Pi_P f = (f 1_G) * eta_P`.
//!
//! The generator `eta` is a bump supported in `(-1, 1)` with `eta(0) = 1`, so on the
//! lattice the modulated dilates of one `G` sum to a Dirac mass and the expansion
//! reproduces `f` up to rounding.

use crate::dyadic::Tile;
use crate::signal::{fft_in_place, ifft_in_place, maximal_function, Signal};
use crate::treespace::{size_2_star, SpaceIv, TopData};
use crate::wavepackets::{local_tile_norm, transform_w_set, WaveletSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MultiFreqError {
    #[error("the source interval family is empty")]
    EmptyFamily,
    #[error("dilation factor must be at least 1, got {0}")]
    BadDilation(f64),
    #[error("invalid exponents p = {p}, t = {t}")]
    BadExponents { p: f64, t: f64 },
    #[error("counting parameter must be at least 1, got {0}")]
    BadCount(f64),
    #[error("tile {0} is not a minimal tile of the decomposition")]
    NotMinimal(String),
}

const EPS: f64 = 1e-9;

/// `eta(x) = exp(1 - 1/(1 - x^2))` on `(-1, 1)`, zero elsewhere.
pub fn eta(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// A real arc of the torus of `n` samples: center `c` and half-length `h`.
#[derive(Copy, Clone, Debug)]
pub struct Arc {
    pub c: f64,
    pub h: f64,
    pub n: f64,
}

impl Arc {
    /// `factor * I` for the dyadic interval `I`.
    pub fn dilate(i: &SpaceIv, factor: f64, l: u32) -> Arc {
        let len = i.len() as f64;
        Arc { c: i.left() as f64 + len / 2.0, h: factor * len / 2.0, n: (1u64 << l) as f64 }
    }

    pub fn is_full(&self) -> bool {
        2.0 * self.h >= self.n - EPS
    }

    fn left(&self) -> f64 {
        self.c - self.h
    }

    /// Whether `[a, a + len)` lies inside the arc.
    pub fn contains(&self, i: &SpaceIv) -> bool {
        if self.is_full() {
            return true;
        }
        let d = (i.left() as f64 - self.left()).rem_euclid(self.n);
        let d = if self.n - d < EPS { 0.0 } else { d };
        d + i.len() as f64 <= 2.0 * self.h + EPS
    }

    /// Whether `[a, a + len)` meets the arc in a set of positive length.
    pub fn meets(&self, i: &SpaceIv) -> bool {
        if self.is_full() {
            return true;
        }
        let a = i.left() as f64;
        (a - self.left()).rem_euclid(self.n) < 2.0 * self.h - EPS || (self.left() - a).rem_euclid(self.n) < i.len() as f64 - EPS
    }
}

/// `CZ_K(J)` on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzFamily {
    pub l: u32,
    pub k: f64,
    pub sources: Vec<SpaceIv>,
    /// Intervals in left-to-right order.
    pub intervals: Vec<SpaceIv>,
    /// Single samples emitted because no dyadic interval around them qualifies.
    pub forced: Vec<bool>,
}

/// Outcome of the structural checks on a CZ family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub partition: bool,
    /// Largest number of dilates `3G` over a single sample.
    pub overlap: usize,
    pub dichotomy: bool,
    /// `K l_G <= l_J` whenever `G` is inside `3KJ`, over non-forced `G`.
    pub scale: bool,
    pub forced: usize,
}

impl CzReport {
    pub fn ok(&self) -> bool {
        self.partition && self.dichotomy && self.scale
    }
}

pub fn cz_intervals(l: u32, sources: &[SpaceIv], k: f64) -> Result<CzFamily, MultiFreqError> {
    if sources.is_empty() {
        return Err(MultiFreqError::EmptyFamily);
    }
    if !(k >= 1.0) {
        return Err(MultiFreqError::BadDilation(k));
    }
    let mut sources = sources.to_vec();
    sources.sort();
    sources.dedup();
    let factor = 9.0 * k * k;
    let mut intervals = Vec::new();
    let mut forced = Vec::new();
    // qualification is inherited by children, so a top-down scan finds the maximal ones
    let mut stack = vec![SpaceIv::new(l, 0)];
    while let Some(g) = stack.pop() {
        let dil = Arc::dilate(&g, factor, l);
        if sources.iter().all(|j| !dil.contains(j)) {
            intervals.push(g);
            forced.push(false);
        } else if g.k == 0 {
            intervals.push(g);
            forced.push(true);
        } else {
            stack.push(SpaceIv::new(g.k - 1, 2 * g.n + 1));
            stack.push(SpaceIv::new(g.k - 1, 2 * g.n));
        }
    }
    Ok(CzFamily { l, k, sources, intervals, forced })
}

impl CzFamily {
    pub fn check(&self) -> CzReport {
        let n = 1usize << self.l;
        let mut cover = vec![0u32; n];
        let mut three = vec![0i64; n + 1];
        for g in &self.intervals {
            for x in g.left()..g.left() + g.len() {
                cover[x as usize] += 1;
            }
            let len = g.len() as i64;
            if 3 * len >= n as i64 {
                three[0] += 1;
                three[n] -= 1;
            } else {
                let s = (g.left() as i64 - len).rem_euclid(n as i64) as usize;
                let e = s + 3 * len as usize;
                three[s] += 1;
                if e <= n {
                    three[e] -= 1;
                } else {
                    three[n] -= 1;
                    three[0] += 1;
                    three[e - n] -= 1;
                }
            }
        }
        let partition = cover.iter().all(|&c| c == 1);
        let mut overlap = 0i64;
        let mut run = 0i64;
        for v in &three[..n] {
            run += v;
            overlap = overlap.max(run);
        }
        let mut dichotomy = true;
        let mut scale = true;
        for (g, &forced) in self.intervals.iter().zip(&self.forced) {
            for j in &self.sources {
                if !Arc::dilate(j, 9.0 * self.k, self.l).contains(g) && Arc::dilate(j, 3.0 * self.k, self.l).meets(g) {
                    dichotomy = false;
                }
                if !forced && Arc::dilate(j, 3.0 * self.k, self.l).contains(g) && self.k * g.len() as f64 > j.len() as f64 + EPS {
                    scale = false;
                }
            }
        }
        CzReport { partition, overlap: overlap as usize, dichotomy, scale, forced: self.forced.iter().filter(|&&b| b).count() }
    }

    /// `(sup_J inf_J Mh / sup_G inf_G Mh, sup_G inf_G Mh / (K^2 sup_J inf_J Mh))`, the
    /// two constants of the mutual control of maximal averages.
    pub fn mutual_control(&self, h: &[f64]) -> (f64, f64) {
        let m = maximal_function(h, 1.0);
        let inf_on = |i: &SpaceIv| {
            let s = i.left() as usize;
            m[s..s + i.len() as usize].iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let sj = self.sources.iter().map(inf_on).fold(0.0, f64::max);
        let sg = self.intervals.iter().map(inf_on).fold(0.0, f64::max);
        (sj / sg, sg / (self.k * self.k * sj))
    }

    /// Every minimal tile `G x [j/l_G, (j+1)/l_G)`.
    pub fn minimal_tiles(&self) -> Vec<Tile> {
        self.intervals.iter().flat_map(|g| (0..g.len()).map(move |j| Tile::new(g.k, g.n, j))).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# tilebench-v1")?;
        writeln!(w, "k,n,left,len,forced")?;
        for (g, f) in self.intervals.iter().zip(&self.forced) {
            writeln!(w, "{},{},{},{},{}", g.k, g.n, g.left(), g.len(), f)?;
        }
        Ok(())
    }
}

/// `Pi_W f` for a set of minimal tiles.
pub fn project_set(f: &Signal, tiles: &[Tile]) -> Signal {
    let l = f.l();
    let n = f.len();
    let mut groups: BTreeMap<SpaceIv, Vec<u64>> = BTreeMap::new();
    for t in tiles {
        groups.entry(SpaceIv::new(t.k, t.n)).or_default().push(t.f);
    }
    let parts: Vec<(SpaceIv, Vec<Complex64>)> = groups
        .into_par_iter()
        .map(|(g, js)| {
            let out = project_block(f, &g, &js, l);
            (g, out)
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (g, out) in parts {
        let len = g.len() as i64;
        for (i, v) in out.iter().enumerate() {
            let y = (g.left() as i64 + i as i64 - len + 1).rem_euclid(n as i64) as usize;
            acc[y] += v;
        }
    }
    Signal::new(acc).expect("length is a power of two")
}

/// `Pi_P f` for one minimal tile.
pub fn project(f: &Signal, p: &Tile) -> Signal {
    project_set(f, std::slice::from_ref(p))
}

/// `(f 1_G) * U_G` with `U_G = sum_{j in js} eta_{G, j}`, as a linear convolution over
/// the window `[left(G) - l_G + 1, left(G) + 2 l_G - 1)`.
fn project_block(f: &Signal, g: &SpaceIv, js: &[u64], _l: u32) -> Vec<Complex64> {
    let len = g.len() as usize;
    let zero = Complex64::new(0.0, 0.0);
    // s(r) = sum_{j in js} e^{2 pi i j r / len}
    let mut s = vec![zero; len];
    for &j in js {
        s[j as usize] += 1.0;
    }
    ifft_in_place(&mut s);
    let m = 4 * len;
    let mut u = vec![zero; m];
    for i in 0..2 * len - 1 {
        let x = i as i64 - (len as i64 - 1);
        let e = eta(x as f64 / len as f64);
        if e != 0.0 {
            // len * ifft gives the plain sum, and the L^1 dilation divides by len again
            u[i] = s[x.rem_euclid(len as i64) as usize] * e;
        }
    }
    let mut a = vec![zero; m];
    a[..len].copy_from_slice(&f.samples()[g.left() as usize..g.left() as usize + len]);
    fft_in_place(&mut a);
    fft_in_place(&mut u);
    for (x, y) in a.iter_mut().zip(&u) {
        *x *= y;
    }
    ifft_in_place(&mut a);
    a.truncate(3 * len - 1);
    a
}

/// Principal region and the per-top tail regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub principal: Vec<Tile>,
    /// `(Q'(T), Q''(T))` per top.
    pub tails: Vec<(Vec<Tile>, Vec<Tile>)>,
}

/// `scl(Q) |inf w_Q - xi_T|` with the frequency distance taken on the circle.
pub fn scaled_freq_distance(q: &Tile, top: &TopData, l: u32) -> f64 {
    let len = q.scl() as f64;
    let xi = top.xi as f64 / (1u64 << l) as f64 * len;
    let d = (q.f as f64 - xi).rem_euclid(len);
    d.min(len - d)
}

fn in_principal(q: &Tile, top: &TopData, k: f64, l: u32) -> bool {
    scaled_freq_distance(q, top, l) <= k + EPS && Arc::dilate(&top.i, 3.0 * k, l).contains(&SpaceIv::new(q.k, q.n))
}

pub fn regions(minimal: &[Tile], tops: &[TopData], k: f64, l: u32) -> Regions {
    let (principal, rest): (Vec<Tile>, Vec<Tile>) = minimal.iter().partition(|q| tops.iter().any(|t| in_principal(q, t, k, l)));
    let tails = tops
        .iter()
        .map(|t| rest.iter().partition(|q| scaled_freq_distance(q, t, l) > k + EPS))
        .collect();
    Regions { principal, tails }
}

/// `(#Q[G], 3K inf_G sum_T 1_{3K I_T})` for the principal region of `tops`.
pub fn tile_count_bound(g: &SpaceIv, tops: &[TopData], k: f64, l: u32) -> (usize, f64) {
    let count = (0..g.len()).filter(|&j| tops.iter().any(|t| in_principal(&Tile::new(g.k, g.n, j), t, k, l))).count();
    let inf = (g.left()..g.left() + g.len())
        .map(|x| tops.iter().filter(|t| Arc::dilate(&t.i, 3.0 * k, l).contains(&SpaceIv::new(0, x))).count())
        .min()
        .unwrap_or(0);
    (count, 3.0 * k * inf as f64)
}

/// Parameters of the good/bad split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbParams {
    /// The counting parameter `N >= 1`.
    pub count: f64,
    pub p: f64,
    pub t: f64,
    pub kappa: u32,
    /// Overrides the proof's choice of `K`.
    pub k: Option<f64>,
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

impl GbParams {
    fn validate(&self) -> Result<(), MultiFreqError> {
        if !(self.p > 1.0 && self.p <= 2.0 && self.t > 1.0) {
            return Err(MultiFreqError::BadExponents { p: self.p, t: self.t });
        }
        if !(self.count >= 1.0) {
            return Err(MultiFreqError::BadCount(self.count));
        }
        if let Some(k) = self.k {
            if !(k >= 1.0) {
                return Err(MultiFreqError::BadDilation(k));
            }
        }
        Ok(())
    }

    /// `M = 10 ceil(2^8 t')`.
    pub fn m(&self) -> f64 {
        10.0 * (256.0 * conjugate(self.t)).ceil()
    }

    /// `K = N^{(1/p')(10/M + 1/(5t'))}` unless overridden.
    pub fn dilation(&self) -> f64 {
        self.k.unwrap_or_else(|| {
            let e = (10.0 / self.m() + 1.0 / (5.0 * conjugate(self.t))) / conjugate(self.p);
            self.count.powf(e).max(1.0)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbReport {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub principal_tiles: usize,
    pub minimal_tiles: usize,
    /// `||g||_2 / (|J|^{1/2} N^{1/2 - 1/(t p')} [f]_{p,P})`.
    pub good_ratio: f64,
    /// `size_{2,*}(W[b], T) / (N^{-1/p'} [f]_{p,P})` per top.
    pub tail_ratios: Vec<f64>,
    /// `||f - g - Pi_{M \ Q} f||_2 / ||f||_2`.
    pub expansion_defect: f64,
}

pub struct GbSplit {
    pub good: Signal,
    pub bad: Signal,
    pub cz: CzFamily,
    pub report: GbReport,
}

/// Members of `tiles` in the maximal tree with top data `top`.
fn tree_members(tiles: &[Tile], top: &TopData, kappa: u32, l: u32) -> Vec<Tile> {
    tiles.iter().filter(|p| top.admits(p, kappa, l)).copied().collect()
}

/// `max_T size_{2,*}(W[h] 1_T, T)` over the maximal trees of `tiles` with the given tops.
pub fn max_tree_size(h: &Signal, tiles: &[Tile], tops: &[TopData], kappa: u32) -> Vec<f64> {
    let l = h.l();
    let mut all: Vec<Tile> = tops.iter().flat_map(|t| tree_members(tiles, t, kappa, l)).collect();
    all.sort();
    all.dedup();
    let w = transform_w_set(h, &all, &WaveletSpec::default());
    tops.iter()
        .map(|t| {
            let vals: Vec<(Tile, f64)> = tree_members(tiles, t, kappa, l).into_iter().map(|p| (p, w.get(&p))).collect();
            size_2_star(&vals, &t.i)
        })
        .collect()
}

/// `f = g + b` with `g = Pi_Q f` on the minimal tiles of `CZ_K({I_P})`.
pub fn gb_split(f: &Signal, tiles: &[Tile], tops: &[TopData], params: GbParams) -> Result<GbSplit, MultiFreqError> {
    params.validate()?;
    let l = f.l();
    let k = params.dilation();
    let sources: Vec<SpaceIv> = tiles.iter().map(SpaceIv::of_tile).collect();
    let cz = cz_intervals(l, &sources, k)?;
    let minimal = cz.minimal_tiles();
    let reg = regions(&minimal, tops, k, l);
    let good = project_set(f, &reg.principal);
    let bad = f.sub(&good);
    let tail: Vec<Tile> = {
        let set: std::collections::BTreeSet<Tile> = reg.principal.iter().copied().collect();
        minimal.iter().filter(|q| !set.contains(q)).copied().collect()
    };
    let bad_direct = project_set(f, &tail);
    let expansion_defect = if f.is_zero() { 0.0 } else { bad.sub(&bad_direct).l2_norm() / f.l2_norm() };
    let fp = local_tile_norm(&f.abs(), tiles, params.p);
    let pc = conjugate(params.p);
    let n_torus = f.len() as f64;
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let good_ratio = ratio(good.l2_norm(), n_torus.sqrt() * params.count.powf(0.5 - 1.0 / (params.t * pc)) * fp);
    let tail_ratios = max_tree_size(&bad, tiles, tops, params.kappa)
        .into_iter()
        .map(|s| ratio(s, params.count.powf(-1.0 / pc) * fp))
        .collect();
    let report = GbReport {
        k,
        m: params.m(),
        principal_tiles: reg.principal.len(),
        minimal_tiles: minimal.len(),
        good_ratio,
        tail_ratios,
        expansion_defect,
    };
    Ok(GbSplit { good, bad, cz, report })
}

/// `max_T size_{2,*}(W[Pi_{M \ Q} f], T) / [f]_{1,P}` for each `K` of a sweep.
pub fn tail_decay_sweep(f: &Signal, tiles: &[Tile], tops: &[TopData], kappa: u32, ks: &[f64]) -> Result<Vec<(f64, f64)>, MultiFreqError> {
    let f1 = local_tile_norm(&f.abs(), tiles, 1.0);
    ks.iter()
        .map(|&k| {
            let params = GbParams { count: 1.0, p: 2.0, t: 2.0, kappa, k: Some(k) };
            let split = gb_split(f, tiles, tops, params)?;
            let s = max_tree_size(&split.bad, tiles, tops, kappa).into_iter().fold(0.0, f64::max);
            Ok((k, if s == 0.0 { 0.0 } else { s / f1 }))
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`, ignoring nonpositive points.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sources<R: Rng>(l: u32, count: usize, r: &mut R) -> Vec<SpaceIv> {
        (0..count)
            .map(|_| {
                let k = r.gen_range(0..l);
                SpaceIv::new(k, r.gen_range(0..1u64 << (l - k)))
            })
            .collect()
    }

    /// Exhaustive scan over every dyadic interval: qualifying ones whose parent does
    /// not qualify.
    fn cz_oracle(l: u32, sources: &[SpaceIv], k: f64) -> Vec<SpaceIv> {
        let q = |g: &SpaceIv| sources.iter().all(|j| !Arc::dilate(g, 9.0 * k * k, l).contains(j));
        let mut out = Vec::new();
        for kk in 0..=l {
            for n in 0..(1u64 << (l - kk)) {
                let g = SpaceIv::new(kk, n);
                if q(&g) && (kk == l || !q(&g.parent())) {
                    out.push(g);
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn cz_examples() {
        let l = 8;
        let torus = [SpaceIv::new(l, 0)];
        let cz = cz_intervals(l, &torus, 1.0).unwrap();
        // 9 l_G < 256 means l_G <= 16
        assert!(cz.intervals.iter().all(|g| g.len() == 16));
        assert_eq!(cz.intervals.len(), 16);
        assert!(cz.check().ok());
        assert_eq!(cz_intervals(l, &[], 1.0), Err(MultiFreqError::EmptyFamily));
        let huge = cz_intervals(l, &[SpaceIv::new(2, 5)], 40.0).unwrap();
        assert!(huge.intervals.iter().all(|g| g.k == 0));
        assert!(huge.forced.iter().all(|&b| b));
    }

    #[test]
    fn cz_matches_oracle_and_properties() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let l = 9;
            let k = [1.0, 1.5, 2.0, 3.0][r.gen_range(0..4)];
            let src = random_sources(l, r.gen_range(1..6), &mut r);
            let cz = cz_intervals(l, &src, k).unwrap();
            let rep = cz.check();
            assert!(rep.ok(), "{rep:?}");
            assert!(rep.overlap <= 5, "{rep:?}");
            let mut got: Vec<SpaceIv> = cz.intervals.iter().zip(&cz.forced).filter(|(_, f)| !**f).map(|(g, _)| *g).collect();
            got.sort();
            assert_eq!(got, cz_oracle(l, &cz.sources, k));
            let h: Vec<f64> = (0..1 << l).map(|_| r.gen::<f64>()).collect();
            let (lo, hi) = cz.mutual_control(&h);
            assert!(lo.is_finite() && hi.is_finite() && lo < 10.0 && hi < 10.0, "{lo} {hi}");
        }
    }

    #[test]
    fn projection_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let l = 8;
        let f = Signal::random_complex(l, &mut r);
        let cz = cz_intervals(l, &random_sources(l, 3, &mut r), 1.0).unwrap();
        let tiles = cz.minimal_tiles();
        assert_eq!(tiles.len(), 1 << l);
        let sum = project_set(&f, &tiles);
        assert!(sum.sub(&f).l2_norm() / f.l2_norm() < 1e-12);
        assert!(project_set(&Signal::zeros(l), &tiles).is_zero());
        // support away from the tile: exact zero
        let p = tiles[0];
        let g = SpaceIv::new(p.k, p.n);
        let mut v = f.samples().to_vec();
        for x in g.left()..g.left() + g.len() {
            v[x as usize] = Complex64::new(0.0, 0.0);
        }
        assert!(project(&Signal::new(v).unwrap(), &p).is_zero());
        // support in 3 I_P
        let out = project(&f, &p);
        let three = Arc::dilate(&g, 3.0, l);
        for (x, z) in out.samples().iter().enumerate() {
            if !three.contains(&SpaceIv::new(0, x as u64)) {
                assert_eq!(z.norm(), 0.0);
            }
        }
        // additivity on disjoint unions
        let (a, b) = tiles.split_at(tiles.len() / 3);
        let d = project_set(&f, a).add(&project_set(&f, b)).sub(&sum);
        assert!(d.l2_norm() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn projection_matches_direct_sum() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let l = 6;
        let n = 1i64 << l;
        let f = Signal::random_complex(l, &mut r);
        for p in [Tile::new(3, 2, 5), Tile::new(6, 0, 17), Tile::new(0, 9, 0), Tile::new(5, 1, 30)] {
            let got = project(&f, &p);
            let len = p.scl() as f64;
            for y in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in p.space_left() as i64..(p.space_left() + p.scl()) as i64 {
                    for wrap in -1..=1 {
                        let d = (y - x + wrap * n) as f64;
                        let ph = 2.0 * std::f64::consts::PI * p.f as f64 * d / len;
                        acc += f.samples()[x as usize] * eta(d / len) / len * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                assert!((acc - got.samples()[y as usize]).norm() < 1e-12, "{p:?} at {y}");
            }
        }
    }

    #[test]
    fn region_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let l = 8;
        let cz = cz_intervals(l, &random_sources(l, 4, &mut r), 1.0).unwrap();
        let tiles = cz.minimal_tiles();
        assert!(regions(&tiles, &[], 2.0, l).principal.is_empty());
        let top = TopData { i: SpaceIv::new(4, 3), xi: 40 };
        let big = regions(&tiles, &[top], 1e6, l);
        for q in &tiles {
            if Arc::dilate(&top.i, 3e6, l).contains(&SpaceIv::new(q.k, q.n)) {
                assert!(big.principal.contains(q));
            }
        }
        let tops: Vec<TopData> = (0..3)
            .map(|_| {
                let k = r.gen_range(2..6);
                TopData { i: SpaceIv::new(k, r.gen_range(0..1u64 << (l - k))), xi: r.gen_range(0..256) }
            })
            .collect();
        let reg = regions(&tiles, &tops, 2.0, l);
        for (q1, q2) in &reg.tails {
            let mut all: Vec<Tile> = reg.principal.iter().chain(q1).chain(q2).copied().collect();
            all.sort();
            let before = all.len();
            all.dedup();
            assert_eq!(before, all.len());
            let mut t = tiles.clone();
            t.sort();
            assert_eq!(all, t);
        }
        for g in &cz.intervals {
            let (c, b) = tile_count_bound(g, &tops, 2.0, l);
            assert!(c as f64 <= b + 1e-9);
            let (c0, b0) = tile_count_bound(g, &[], 2.0, l);
            assert_eq!((c0, b0), (0, 0.0));
        }
    }

    #[test]
    fn gb_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let l = 8;
        let tiles: Vec<Tile> = (0..30)
            .map(|_| {
                let k = r.gen_range(0..5);
                Tile::new(k, r.gen_range(0..1u64 << (l - k)), r.gen_range(0..1u64 << k))
            })
            .collect();
        let params = GbParams { count: 4.0, p: 1.5, t: 2.0, kappa: 1, k: None };
        let tops = vec![TopData { i: SpaceIv::new(6, 1), xi: 10 }];
        let zero = gb_split(&Signal::zeros(l), &tiles, &tops, params).unwrap();
        assert!(zero.good.is_zero() && zero.bad.is_zero());
        let f = Signal::random_complex(l, &mut r);
        let none = gb_split(&f, &tiles, &[], params).unwrap();
        assert!(none.good.is_zero());
        assert!(none.bad.sub(&f).l2_norm() == 0.0);
        let tops: Vec<TopData> = (0..4).map(|i| TopData { i: SpaceIv::new(5, i * 2), xi: r.gen_range(0..256) }).collect();
        let s = gb_split(&f, &tiles, &tops, params).unwrap();
        assert!(s.good.add(&s.bad).sub(&f).l2_norm() <= 1e-12 * f.l2_norm());
        assert!(s.report.expansion_defect < 1e-12);
        assert!(s.report.good_ratio.is_finite());
        assert!(s.report.tail_ratios.iter().all(|v| v.is_finite()));
        assert!(gb_split(&f, &tiles, &tops, GbParams { p: 1.0, ..params }).is_err());
        assert!(gb_split(&f, &tiles, &tops, GbParams { count: 0.5, ..params }).is_err());
        // K from the proof formula: M = 10 ceil(256 * 2) = 5120
        assert_eq!(params.m(), 5120.0);
        let e = (10.0 / 5120.0 + 1.0 / 10.0) / 3.0;
        assert!((params.dilation() - 4f64.powf(e)).abs() < 1e-12);
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&k| (k, 3.0 * f64::powf(k, -2.0))).collect();
        assert!((loglog_slope(&pts) + 2.0).abs() < 1e-12);
    }
}
