//! The density of a function relative to a tile set and a linearizing frequency
//! function, and the forest decomposition that lowers it below a threshold.
//!
//! Densities only depend on tiles through the pair `(I_P', w_P'^{p(1)})`, so one
//! table over all such pairs of the torus serves every tile set: entry `D(k, n, g)`
//! holds the tailed average of `f 1_{N^{-1}(w)}` over `I = [n 2^k, (n+1) 2^k)`, with
//! `w` the interval of index `g` at level `k - 1`. A second table `R` takes running
//! maxima over coarser intervals and finer frequency descendants, which is exactly
//! the range `P <~ P'` of the inner supremum.

use crate::dyadic::{FreqIv, Tile, Tiling};
use crate::signal::{maximal_function, Signal, TAIL_EXPONENT};
use crate::treespace::{SpaceIv, TopData};
use crate::wavepackets::modulation_bin;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("tiles {0} and {1} are comparable")]
    Comparable(String, String),
    #[error("tile {0} has density {1} not above the threshold")]
    NotDense(String, f64),
    #[error("decomposition did not terminate within {0} iterations")]
    NoTermination(usize),
    #[error("linearizing function has {0} values for {1} samples")]
    LengthMismatch(usize, usize),
}

/// Frequency index of `w_P^{p(1)}` in the table convention: levels below `0` are
/// collapsed onto index `0` of level `0`.
#[inline]
fn parent_index(p: &Tile) -> u64 {
    p.f >> 1
}

/// Number of frequency indices stored at scale `k`.
#[inline]
fn width_at(k: u32) -> usize {
    1usize << k.saturating_sub(1)
}

/// Periodic window `|x + 1/2 - c| <= 4 len` outside which the tail weight is below
/// `1e-300` relative to the center.
const WINDOW: f64 = 4.0;

/// Tailed density table for one signal and one linearizing function.
#[derive(Clone, Debug)]
pub struct DensityTable {
    pub l: u32,
    /// `d[k][n * width + g]`.
    d: Vec<Vec<f64>>,
    /// Running maxima over `P' >~` the pair `(k, n, g)`.
    r: Vec<Vec<f64>>,
}

impl DensityTable {
    pub fn new(f: &Signal, nfun: &[i64]) -> Result<Self, SelectionError> {
        let n = f.len();
        if nfun.len() != n {
            return Err(SelectionError::LengthMismatch(nfun.len(), n));
        }
        let l = f.l();
        let absf = f.abs();
        let bins: Vec<u64> = nfun.iter().map(|&v| modulation_bin(v, n)).collect();
        let d: Vec<Vec<f64>> = (0..=l)
            .into_par_iter()
            .map(|k| {
                let len = 1usize << k;
                let width = width_at(k);
                let shift = if k == 0 { l } else { l - (k - 1) };
                let mut row = vec![0.0; (n / len) * width];
                for pos in 0..n / len {
                    let c = (pos as f64 + 0.5) * len as f64;
                    let half = (WINDOW * len as f64).ceil() as i64 + 1;
                    let (lo, hi) = if 2 * half as usize >= n { (0i64, n as i64) } else { (c as i64 - half, c as i64 + half) };
                    for xi in lo..hi {
                        let x = xi.rem_euclid(n as i64) as usize;
                        if absf[x] == 0.0 {
                            continue;
                        }
                        let dd = crate::signal::periodic_distance(x as f64 + 0.5, c, n as f64) / len as f64;
                        let w = (1.0 + dd * dd).powf(-(TAIL_EXPONENT as f64) / 2.0);
                        let g = if k <= 1 { 0 } else { (bins[x] >> shift) as usize };
                        row[pos * width + g] += absf[x] * w;
                    }
                    for g in 0..width {
                        row[pos * width + g] /= len as f64;
                    }
                }
                row
            })
            .collect();
        let mut r = d.clone();
        for k in (0..l).rev() {
            let width = width_at(k);
            let cw = width_at(k + 1);
            for pos in 0..(n >> k) {
                for g in 0..width {
                    let parent_pos = pos >> 1;
                    let children: &[usize] = if k == 0 { &[0] } else { &[2 * g, 2 * g + 1] };
                    let mut best = r[k as usize][pos * width + g];
                    for &cg in children {
                        if cg < cw {
                            best = best.max(r[k as usize + 1][parent_pos * cw + cg]);
                        }
                    }
                    r[k as usize][pos * width + g] = best;
                }
            }
        }
        Ok(DensityTable { l, d, r })
    }

    /// `<<f 1_{N^{-1}(w_P^{p(1)})}>>_{1, I_P}` for a single tile.
    pub fn tile_density(&self, p: &Tile) -> f64 {
        self.d[p.k as usize][p.n as usize * width_at(p.k) + parent_index(p) as usize]
    }

    /// `sup_{P' >~ P}` of the tile density.
    pub fn above(&self, p: &Tile) -> f64 {
        self.r[p.k as usize][p.n as usize * width_at(p.k) + parent_index(p) as usize]
    }

    /// `dense(f, P)`.
    pub fn density(&self, tiles: &[Tile]) -> f64 {
        tiles.iter().map(|p| self.above(p)).fold(0.0, f64::max)
    }

    /// Every pair above the threshold as a representative tile (lowest frequency of
    /// the two children), in scale-descending, leftmost, lowest-frequency order.
    fn offenders(&self, delta: f64) -> Vec<Tile> {
        let n = 1usize << self.l;
        let mut out = Vec::new();
        for k in (0..=self.l).rev() {
            let width = width_at(k);
            for pos in 0..(n >> k) {
                for g in 0..width {
                    if self.d[k as usize][pos * width + g] > delta {
                        out.push(Tile::new(k, pos as u64, if k == 0 { 0 } else { 2 * g as u64 }));
                    }
                }
            }
        }
        out
    }
}

/// `dense(f, P)` for the linearizing function `nfun`.
pub fn density(f: &Signal, tiles: &[Tile], nfun: &[i64]) -> Result<f64, SelectionError> {
    Ok(DensityTable::new(f, nfun)?.density(tiles))
}

/// Direct enumeration of `P' >~ P` with full tailed sums; the oracle for the table.
pub fn density_direct(f: &Signal, tiles: &[Tile], nfun: &[i64]) -> f64 {
    let l = f.l();
    let n = f.len();
    let tiling = Tiling::new(l);
    let absf = f.abs();
    let mut best = 0.0f64;
    for p in tiles {
        for q in tiling.all_tiles() {
            if !crate::dyadic::order_leq(p, &q, 1) {
                continue;
            }
            let w = q.freq().parent(1);
            let masked: Vec<f64> = (0..n)
                .map(|x| if w.contains_bin(modulation_bin(nfun[x], n), l) { absf[x] } else { 0.0 })
                .collect();
            let iv = crate::signal::SampleInterval::dyadic(q.k, q.n);
            let (_, tailed) = crate::signal::local_averages(&masked, &iv, 1.0);
            best = best.max(tailed);
        }
    }
    best
}

/// A density-increment forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub delta: f64,
    pub tops: Vec<TopData>,
    pub trees: Vec<Vec<Tile>>,
    pub residual: Vec<Tile>,
    /// Density of the residual set, recomputed from the table.
    pub residual_density: f64,
    /// Largest `delta sum_{I_T in J} |I_T| / (|J| inf_J M f)` over dyadic `J`.
    pub tops_constant: f64,
}

/// Splits `tiles` into 1-trees and a residual set with density at most `delta`.
/// Each round adopts the offending pair `(I_P', w_P'^{p(1)})` of largest scale, then
/// leftmost, then lowest frequency, among those lying above some remaining tile,
/// and sweeps every remaining tile below its top into a new tree.
pub fn density_decomposition(f: &Signal, tiles: &[Tile], nfun: &[i64], delta: f64) -> Result<Forest, SelectionError> {
    if !(delta > 0.0) {
        return Err(SelectionError::BadThreshold(delta));
    }
    let table = DensityTable::new(f, nfun)?;
    let l = f.l();
    let mut remaining: Vec<Tile> = tiles.to_vec();
    remaining.sort_by(|a, b| a.maximal_cmp(b));
    remaining.dedup();
    let offenders = table.offenders(delta);
    let mut tops = Vec::new();
    let mut trees = Vec::new();
    let guard = remaining.len() + 1;
    let mut cursor = 0usize;
    while table.density(&remaining) > delta {
        if tops.len() >= guard {
            return Err(SelectionError::NoTermination(guard));
        }
        // earlier offenders have no remaining tile below them, and removing tiles
        // never creates one, so the scan resumes where it stopped
        let (at, q) = offenders[cursor..]
            .iter()
            .enumerate()
            .find(|(_, q)| remaining.iter().any(|p| crate::dyadic::order_leq(p, q, 1)))
            .map(|(i, q)| (cursor + i, *q))
            .expect("a density above the threshold is realized by some offender");
        cursor = at;
        let w = q.freq().parent(1);
        let (start, width) = w.bin_range(l);
        let top = TopData { i: SpaceIv::new(q.k, q.n), xi: start + width / 2 };
        let (tree, rest): (Vec<Tile>, Vec<Tile>) = remaining.into_iter().partition(|p| top.admits(p, 1, l));
        debug_assert!(!tree.is_empty());
        remaining = rest;
        tops.push(top);
        trees.push(tree);
    }
    let residual_density = table.density(&remaining);
    let tops_constant = tops_packing_constant(f, &tops, delta);
    Ok(Forest { delta, tops, trees, residual: remaining, residual_density, tops_constant })
}

/// `max_J delta sum_{I_T in J} |I_T| / (|J| inf_J M_1 f)` over dyadic intervals `J`
/// containing at least one top; infinite if some such `J` has `inf_J M_1 f = 0`.
pub fn tops_packing_constant(f: &Signal, tops: &[TopData], delta: f64) -> f64 {
    if tops.is_empty() {
        return 0.0;
    }
    let l = f.l();
    let m = maximal_function(&f.abs(), 1.0);
    let mut best = 0.0f64;
    for k in 0..=l {
        for pos in 0..(1u64 << (l - k)) {
            let j = SpaceIv::new(k, pos);
            let mass: u64 = tops.iter().filter(|t| j.contains(&t.i)).map(|t| t.i.len()).sum();
            if mass == 0 {
                continue;
            }
            let s = j.left() as usize;
            let inf = m[s..s + j.len() as usize].iter().cloned().fold(f64::INFINITY, f64::min);
            let lhs = delta * mass as f64 / j.len() as f64;
            best = best.max(if inf > 0.0 { lhs / inf } else { f64::INFINITY });
        }
    }
    best
}

/// One stratum `P'_k` of the packing argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub k: u32,
    /// Selected tiles `B`, in selection order.
    pub selected: Vec<Tile>,
    /// `P'_k(P*)` for each selected `P*`.
    pub groups: Vec<Vec<Tile>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub strata: Vec<Stratum>,
    /// Tiles for which no `k` exists on the finite torus.
    pub unstratified: Vec<Tile>,
    pub total_length: u64,
    /// `delta sum |I_P| / (|J| inf_J M f)`.
    pub constant: f64,
    /// Whether every group has pairwise disjoint intervals inside `2^{k+2} I_{P*}`.
    pub groups_ok: bool,
}

/// A periodic arc `[start, start + len)` of the torus, `len <= n`.
#[derive(Copy, Clone, Debug)]
struct Arc {
    start: i64,
    len: i64,
}

impl Arc {
    fn dilate(p: &Tile, factor: u64, n: usize) -> Arc {
        let len = (p.scl() * factor).min(n as u64) as i64;
        let c2 = 2 * p.space_left() as i64 + p.scl() as i64; // twice the center
        Arc { start: (c2 - len).div_euclid(2), len }
    }

    fn intersects(&self, o: &Arc, n: usize) -> bool {
        let n = n as i64;
        if self.len >= n || o.len >= n {
            return true;
        }
        (o.start - self.start).rem_euclid(n) < self.len || (self.start - o.start).rem_euclid(n) < o.len
    }

    fn contains(&self, o: &Arc, n: usize) -> bool {
        let n = n as i64;
        if self.len >= n {
            return true;
        }
        let off = (o.start - self.start).rem_euclid(n);
        off + o.len <= self.len
    }
}

/// The smallest `k >= 0` with `int_{2^k I_P cap N^{-1}(w_P^{p(1)})} |f| >= 2^{6k} delta |I_P|`,
/// searched while `2^k |I_P|` fits in the torus.
pub fn k_of_tile(f: &Signal, nfun: &[i64], p: &Tile, delta: f64) -> Option<u32> {
    let l = f.l();
    let n = f.len();
    let w: FreqIv = p.freq().parent(1);
    let mut k = 0u32;
    loop {
        let arc = Arc::dilate(p, 1 << k, n);
        let mass: f64 = (0..arc.len)
            .map(|i| (arc.start + i).rem_euclid(n as i64) as usize)
            .filter(|&x| w.contains_bin(modulation_bin(nfun[x], n), l))
            .map(|x| f.samples()[x].norm())
            .sum();
        if mass >= 2f64.powi(6 * k as i32) * delta * p.scl() as f64 {
            return Some(k);
        }
        if arc.len >= n as i64 {
            return None;
        }
        k += 1;
    }
}

/// Checks the packing bound for a set of pairwise incomparable dense tiles inside
/// `J` and exposes the stratified selection behind it.
pub fn incomparable_packing_check(
    tiles: &[Tile],
    f: &Signal,
    nfun: &[i64],
    delta: f64,
    j: SpaceIv,
) -> Result<PackingReport, SelectionError> {
    if !(delta > 0.0) {
        return Err(SelectionError::BadThreshold(delta));
    }
    for (a, p) in tiles.iter().enumerate() {
        for q in &tiles[a + 1..] {
            if crate::dyadic::order_leq(p, q, 1) || crate::dyadic::order_leq(q, p, 1) {
                return Err(SelectionError::Comparable(p.encode(), q.encode()));
            }
        }
    }
    let table = DensityTable::new(f, nfun)?;
    for p in tiles {
        let d = table.tile_density(p);
        if d <= delta {
            return Err(SelectionError::NotDense(p.encode(), d));
        }
    }
    let n = f.len();
    let mut by_k: std::collections::BTreeMap<u32, Vec<Tile>> = Default::default();
    let mut unstratified = Vec::new();
    for p in tiles {
        match k_of_tile(f, nfun, p, delta) {
            Some(k) => by_k.entry(k).or_default().push(*p),
            None => unstratified.push(*p),
        }
    }
    let mut strata = Vec::new();
    let mut groups_ok = true;
    for (k, mut pk) in by_k {
        pk.sort_by(|a, b| a.maximal_cmp(b));
        let rect = |p: &Tile| (Arc::dilate(p, 1 << k, n), p.freq().parent(1));
        let hits = |a: &Tile, b: &Tile| {
            let (ra, wa) = rect(a);
            let (rb, wb) = rect(b);
            ra.intersects(&rb, n) && !wa.disjoint(&wb)
        };
        let mut avail: Vec<Tile> = pk.clone();
        let mut selected: Vec<Tile> = Vec::new();
        // pk is in maximal-first order, so the first admissible tile has maximal scale
        while let Some(pos) = avail.iter().position(|p| selected.iter().all(|b| !hits(p, b))) {
            selected.push(avail.remove(pos));
        }
        let mut groups: Vec<Vec<Tile>> = vec![Vec::new(); selected.len()];
        for p in &pk {
            let g = selected
                .iter()
                .position(|s| hits(p, s) && p.scl() <= s.scl())
                .expect("every tile meets a selected tile of at least its scale");
            groups[g].push(*p);
        }
        for (s, g) in selected.iter().zip(&groups) {
            let big = Arc::dilate(s, 1 << (k + 2), n);
            for (a, p) in g.iter().enumerate() {
                let ap = Arc::dilate(p, 1, n);
                if !big.contains(&ap, n) {
                    groups_ok = false;
                }
                for q in &g[a + 1..] {
                    if ap.intersects(&Arc::dilate(q, 1, n), n) {
                        groups_ok = false;
                    }
                }
            }
        }
        strata.push(Stratum { k, selected, groups });
    }
    let total_length: u64 = tiles.iter().map(|p| p.scl()).sum();
    let m = maximal_function(&f.abs(), 1.0);
    let s = j.left() as usize;
    let inf = m[s..s + j.len() as usize].iter().cloned().fold(f64::INFINITY, f64::min);
    let constant = if total_length == 0 {
        0.0
    } else if inf > 0.0 {
        delta * total_length as f64 / (j.len() as f64 * inf)
    } else {
        f64::INFINITY
    };
    Ok(PackingReport { strata, unstratified, total_length, constant, groups_ok })
}
