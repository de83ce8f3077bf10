//! Rank-1 trilinear tile forms: maps `eta = (eta_1, eta_2, eta_3)` from a base tile
//! set, the cube families along a line `Gamma'` that generate them, the sparse
//! pipeline for the extremal exponent tuple, the tree estimate, and a direct
//! evaluation of the bilinear Hilbert type form on the frequency lattice.
//!
//! Frequencies of cubes are signed: the level-`k` interval with index `f` of the
//! band `[0, 1)` is identified with `[a, a + 2^-k)` where `a = f 2^-k` for
//! `f < 2^(k-1)` and `a = f 2^-k - 1` otherwise.

use crate::dyadic::{order_leq, FreqIv, Tile, Tiling};
use crate::signal::{fft_in_place, maximal_function, signed_freq, Signal};
use crate::sparsedom::{sparse_maximal, stopping_collection_q, SparseError};
use crate::treespace::{is_lacunary, size_2_star, SpaceIv, TopData, Tree};
use crate::wavepackets::{local_tile_norm_from_maximal, transform_w_set, TileFunction, WaveletSpec};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Rank1Error {
    #[error("gamma = {0:?} has a vanishing coordinate")]
    Degenerate([f64; 3]),
    #[error("gamma = {0:?} does not lie in the plane xi_1 + xi_2 + xi_3 = 0")]
    NotInPlane([f64; 3]),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("cube {0:?} violates {1}")]
    Grid(Cube, &'static str),
    #[error("{count} cubes share the first component (level {level}, index {idx}); increase H or K")]
    Uniqueness { level: u32, idx: i64, count: usize },
    #[error("property {rule} fails for P = {p}, P' = {q}")]
    Axiom { rule: &'static str, p: Tile, q: Tile },
    #[error("tile {0} is not in the domain of the map")]
    NotInDomain(Tile),
    #[error("the tile set is not a 1-tree with the given top")]
    NotOneTree,
    #[error("epsilon(p) = {0} is not positive")]
    BadEpsilon(f64),
    #[error("f{0} vanishes identically")]
    ZeroFunction(usize),
    #[error("signals of different lengths")]
    LengthMismatch,
    #[error("symbol condition fails: weighted derivative {0} exceeds 1")]
    Symbol(f64),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Largest weighted derivative a symbol may show before it is rejected.
pub const SYMBOL_TOLERANCE: f64 = 1e-6;

/// Signed left endpoint index of the frequency interval `w`.
pub fn signed_index(w: FreqIv) -> i64 {
    let half = 1i64 << (w.level - 1);
    let f = w.idx as i64;
    if f < half {
        f
    } else {
        f - 2 * half
    }
}

fn unsigned_index(level: u32, idx: i64) -> u64 {
    idx.rem_euclid(1i64 << level) as u64
}

/// A cube `Q_1 x Q_2 x Q_3` of side `2^-level` with signed component indices.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub level: u32,
    pub idx: [i64; 3],
}

impl Cube {
    pub fn side(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    pub fn lower(&self) -> [f64; 3] {
        let s = self.side();
        [self.idx[0] as f64 * s, self.idx[1] as f64 * s, self.idx[2] as f64 * s]
    }

    /// The `j`-th component as a frequency interval of the band `[0, 1)`.
    pub fn component(&self, j: usize) -> FreqIv {
        FreqIv { level: self.level as i32, idx: unsigned_index(self.level, self.idx[j]) }
    }

    /// Whether the half-open cube meets `xi_1 + xi_2 + xi_3 = 0`.
    pub fn meets_plane(&self) -> bool {
        let s: i64 = self.idx.iter().sum();
        s <= 0 && 0 < s + 3
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn line_quadratic(x: &[f64; 3], g: &[f64; 3]) -> f64 {
    dot(x, x) - dot(x, g).powi(2)
}

/// Distance from the closed box `[lo, lo + side]^3` to the line spanned by the unit
/// vector `g`: the convex quadratic `|x|^2 - (g.x)^2` is minimized over the box by
/// enumerating which coordinates sit at a bound.
pub fn box_line_distance(lo: [f64; 3], side: f64, g: [f64; 3]) -> f64 {
    let hi = [lo[0] + side, lo[1] + side, lo[2] + side];
    let mut best = f64::INFINITY;
    for pattern in 0..27u32 {
        let mode = [pattern % 3, pattern / 3 % 3, pattern / 9];
        let free: Vec<usize> = (0..3).filter(|&i| mode[i] == 2).collect();
        let mut x = [0.0; 3];
        for i in 0..3 {
            x[i] = match mode[i] {
                0 => lo[i],
                1 => hi[i],
                _ => 0.0,
            };
        }
        match free.len() {
            0 => {}
            3 => {
                // the whole line is stationary: distance zero iff it crosses the box
                let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    let (u, v) = (lo[i] / g[i], hi[i] / g[i]);
                    a = a.max(u.min(v));
                    b = b.min(u.max(v));
                }
                if a <= b {
                    return 0.0;
                }
                continue;
            }
            _ => {
                // A_FF x_F = -A_FB x_B with A = I - g g^T
                let fixed: Vec<usize> = (0..3).filter(|&i| mode[i] != 2).collect();
                let gb: f64 = fixed.iter().map(|&i| g[i] * x[i]).sum();
                if free.len() == 1 {
                    let i = free[0];
                    x[i] = g[i] * gb / (1.0 - g[i] * g[i]);
                } else {
                    let (i, j) = (free[0], free[1]);
                    // (I - g_F g_F^T) x_F = g_F gb, solved by Sherman-Morrison
                    let nf = g[i] * g[i] + g[j] * g[j];
                    let c = gb / (1.0 - nf);
                    x[i] = g[i] * c;
                    x[j] = g[j] * c;
                }
                if free.iter().any(|&i| x[i] < lo[i] - 1e-15 || x[i] > hi[i] + 1e-15) {
                    continue;
                }
            }
        }
        best = best.min(line_quadratic(&x, &g));
    }
    best.max(0.0).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Parameters for the cube families of [`GammaFamily`].
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub gamma: [f64; 3],
    /// Scale separation: sides lie in `2^(H Z + h)`.
    pub big_h: u32,
    pub big_k: u32,
    pub h: u32,
}

impl GammaParams {
    /// The unit direction of `Gamma'`, validated.
    pub fn direction(&self) -> Result<[f64; 3], Rank1Error> {
        let g = self.gamma;
        if g.iter().any(|v| !v.is_finite()) || dot(&g, &g) == 0.0 {
            return Err(Rank1Error::Degenerate(g));
        }
        let g = normalize(g);
        if g.iter().any(|v| v.abs() < 1e-9) {
            return Err(Rank1Error::Degenerate(self.gamma));
        }
        if (g[0] + g[1] + g[2]).abs() > 1e-9 {
            return Err(Rank1Error::NotInPlane(self.gamma));
        }
        if self.big_h == 0 || self.h >= self.big_h || self.big_k == 0 {
            return Err(Rank1Error::BadParams(format!("H = {}, K = {}, h = {}", self.big_h, self.big_k, self.h)));
        }
        Ok(g)
    }

    fn level_admitted(&self, level: u32) -> bool {
        (level + self.h) % self.big_h == 0
    }
}

/// A finite cube collection along `Gamma' = R gamma` satisfying g1 to g3 with at
/// most one cube per first component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFamily {
    pub params: GammaParams,
    pub cubes: Vec<Cube>,
    #[serde(skip)]
    by_first: BTreeMap<FreqIv, usize>,
}

/// Options for [`GammaFamily::construct`].
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyOptions {
    /// Only first components whose index is a multiple of this are used, so that no
    /// two of them are siblings.
    pub spacing: u64,
    /// Frequency parent order used by the margin filter.
    pub kappa: u32,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions { spacing: 2, kappa: 10 }
    }
}

impl GammaFamily {
    /// Validates g1 to g3 and per-first-component uniqueness of `cubes`.
    pub fn from_cubes(params: GammaParams, cubes: Vec<Cube>) -> Result<Self, Rank1Error> {
        let g = params.direction()?;
        let mut counts: BTreeMap<(u32, i64), usize> = BTreeMap::new();
        for q in &cubes {
            if q.level == 0 || !params.level_admitted(q.level) {
                return Err(Rank1Error::Grid(*q, "g1"));
            }
            let half = 1i64 << (q.level - 1);
            if q.idx.iter().any(|&i| i < -half || i >= half) {
                return Err(Rank1Error::Grid(*q, "the signed frequency domain"));
            }
            if !q.meets_plane() {
                return Err(Rank1Error::Grid(*q, "g2"));
            }
            let d = box_line_distance(q.lower(), q.side(), g) / q.side();
            let k = params.big_k as f64;
            if d < k - 1e-9 || d > k * k + 1e-9 {
                return Err(Rank1Error::Grid(*q, "g3"));
            }
            *counts.entry((q.level, q.idx[0])).or_default() += 1;
        }
        if let Some((&(level, idx), &count)) = counts.iter().find(|(_, &c)| c > 1) {
            return Err(Rank1Error::Uniqueness { level, idx, count });
        }
        let by_first = cubes.iter().enumerate().map(|(i, q)| (q.component(0), i)).collect();
        Ok(GammaFamily { params, cubes, by_first })
    }

    /// Every cube with side at least `2^-l` satisfying g1 to g3, uniqueness aside.
    pub fn enumerate(params: GammaParams, l: u32) -> Result<Vec<Cube>, Rank1Error> {
        let g = params.direction()?;
        let k = params.big_k as f64;
        let mut out = Vec::new();
        for level in (1..=l).filter(|&v| params.level_admitted(v)) {
            let half = 1i64 << (level - 1);
            let side = 2f64.powi(-(level as i32));
            for i1 in -half..half {
                for i2 in -half..half {
                    // g2 leaves at most three choices for the third index
                    for i3 in (-i1 - i2 - 2)..=(-i1 - i2) {
                        if i3 < -half || i3 >= half {
                            continue;
                        }
                        let q = Cube { level, idx: [i1, i2, i3] };
                        let d = box_line_distance(q.lower(), side, g) / side;
                        if q.meets_plane() && d >= k - 1e-9 && d <= k * k + 1e-9 {
                            out.push(q);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// One cube per admissible first component: the cube containing the point of
    /// `Gamma` at distance `2 K side` from `Gamma'` along the normal of `Gamma'`
    /// inside `Gamma`, whose first coordinate is the center of the component.
    /// Points closer than `4 K side` to the boundary of a nontrivial
    /// `kappa`-parent of their cube are discarded, as are first components not
    /// on the `spacing` lattice.
    pub fn construct(params: GammaParams, l: u32, opts: FamilyOptions) -> Result<Self, Rank1Error> {
        let g = params.direction()?;
        if opts.spacing == 0 {
            return Err(Rank1Error::BadParams("spacing must be positive".into()));
        }
        let normal = normalize(cross(&g, &[1.0, 1.0, 1.0]));
        let k = params.big_k as f64;
        let mut cubes = Vec::new();
        for level in (1..=l).filter(|&v| params.level_admitted(v)) {
            let side = 2f64.powi(-(level as i32));
            let s = 2.0 * k * side;
            for f1 in (0..1u64 << level).step_by(opts.spacing as usize) {
                let i1 = signed_index(FreqIv { level: level as i32, idx: f1 });
                let c = (i1 as f64 + 0.5) * side;
                let t = (c - s * normal[0]) / g[0];
                let p = [c, t * g[1] + s * normal[1], t * g[2] + s * normal[2]];
                if p.iter().any(|&v| !(-0.5..0.5).contains(&v)) {
                    continue;
                }
                if level > opts.kappa {
                    let pw = 2f64.powi(opts.kappa as i32) * side;
                    let margin = 4.0 * k * side;
                    let central = p.iter().all(|&v| {
                        let r = (v + 0.5).rem_euclid(pw);
                        r >= margin && pw - r >= margin
                    });
                    if !central {
                        continue;
                    }
                }
                let idx = [i1, (p[1] / side).floor() as i64, (p[2] / side).floor() as i64];
                let q = Cube { level, idx };
                let d = box_line_distance(q.lower(), side, g) / side;
                if q.meets_plane() && d >= k && d <= k * k {
                    cubes.push(q);
                }
            }
        }
        Self::from_cubes(params, cubes)
    }

    /// The cube with first component `w`, if any.
    pub fn lookup(&self, w: FreqIv) -> Option<&Cube> {
        if self.by_first.is_empty() && !self.cubes.is_empty() {
            return self.cubes.iter().find(|q| q.component(0) == w);
        }
        self.by_first.get(&w).map(|&i| &self.cubes[i])
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// A map `eta: P -> S^3` satisfying r1 to r4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank1Map {
    pub l: u32,
    pub kappa: u32,
    pub tiles: Vec<Tile>,
    pub eta: Vec<[Tile; 3]>,
    #[serde(skip)]
    index: HashMap<Tile, usize>,
}

/// Which of r1 to r4 a pair of tiles breaks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub rule: &'static str,
    pub p: Tile,
    pub q: Tile,
}

impl Rank1Map {
    /// Builds the map and checks r1 to r4 on every pair of tiles.
    ///
    /// r3 is read with the same index on both sides, `eta_k(P) <=_kappa eta_k(P')`,
    /// which is how it is used to make `eta_k(S(Q))` a `kappa`-tree. In r4 the pair
    /// is taken with `P != P'`, since `P <=_1 P` for every tile.
    pub fn new(l: u32, kappa: u32, tiles: Vec<Tile>, eta: Vec<[Tile; 3]>) -> Result<Self, Rank1Error> {
        if tiles.len() != eta.len() {
            return Err(Rank1Error::BadParams("one image triple per tile is required".into()));
        }
        let index: HashMap<Tile, usize> = tiles.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        if index.len() != tiles.len() {
            return Err(Rank1Error::BadParams("repeated tiles in the base set".into()));
        }
        let map = Rank1Map { l, kappa, tiles, eta, index };
        if let Some(v) = map.violations(1).into_iter().next() {
            return Err(Rank1Error::Axiom { rule: v.rule, p: v.p, q: v.q });
        }
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn position(&self, p: &Tile) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn image(&self, p: &Tile, k: usize) -> Option<Tile> {
        self.position(p).map(|i| self.eta[i][k])
    }

    /// Up to `limit` violations of r1 to r4, found by exhaustive pair enumeration.
    pub fn violations(&self, limit: usize) -> Vec<AxiomViolation> {
        let tiling = Tiling::new(self.l);
        let mut out = Vec::new();
        for (p, e) in self.tiles.iter().zip(&self.eta) {
            for t in e {
                if !tiling.contains(t) {
                    out.push(AxiomViolation { rule: "tiling", p: *p, q: *t });
                }
                if t.k != p.k || t.n != p.n {
                    out.push(AxiomViolation { rule: "r2", p: *p, q: *t });
                }
            }
        }
        for j in 0..3 {
            let mut seen: HashMap<Tile, Tile> = HashMap::new();
            for (p, e) in self.tiles.iter().zip(&self.eta) {
                if let Some(prev) = seen.insert(e[j], *p) {
                    out.push(AxiomViolation { rule: "r1", p: prev, q: *p });
                }
            }
        }
        if !out.is_empty() {
            out.truncate(limit);
            return out;
        }
        let mut by_space: HashMap<(u32, u64), Vec<usize>> = HashMap::new();
        for (i, t) in self.tiles.iter().enumerate() {
            by_space.entry((t.k, t.n)).or_default().push(i);
        }
        let kappa = self.kappa;
        let found: Vec<AxiomViolation> = (0..self.tiles.len())
            .into_par_iter()
            .flat_map_iter(|a| {
                let p = self.tiles[a];
                let mut local = Vec::new();
                for k in p.k..=self.l {
                    let Some(list) = by_space.get(&(k, p.n >> (k - p.k))) else { continue };
                    for &b in list {
                        if a == b {
                            continue;
                        }
                        let (ea, eb) = (&self.eta[a], &self.eta[b]);
                        let related = (0..3).any(|j| order_leq(&ea[j], &eb[j], 1));
                        if !related {
                            continue;
                        }
                        if !(0..3).all(|j| order_leq(&ea[j], &eb[j], kappa)) {
                            local.push(AxiomViolation { rule: "r3", p, q: self.tiles[b] });
                            continue;
                        }
                        let primes = (0..3).filter(|&j| !order_leq(&ea[j], &eb[j], 1)).count();
                        if primes < 2 {
                            local.push(AxiomViolation { rule: "r4", p, q: self.tiles[b] });
                        }
                    }
                }
                local
            })
            .collect();
        out.extend(found.into_iter().take(limit));
        out
    }

    /// `F_k = W[f_k] o eta_k` as functions on the base tiles.
    pub fn transport(&self, f: [&Signal; 3]) -> Result<[TileFunction; 3], Rank1Error> {
        self.transport_on(&self.tiles, f)
    }

    fn transport_on(&self, tiles: &[Tile], f: [&Signal; 3]) -> Result<[TileFunction; 3], Rank1Error> {
        if f.iter().any(|s| s.l() != self.l) {
            return Err(Rank1Error::LengthMismatch);
        }
        let spec = WaveletSpec::default();
        let mut images: [Vec<Tile>; 3] = Default::default();
        for p in tiles {
            let i = self.position(p).ok_or(Rank1Error::NotInDomain(*p))?;
            for k in 0..3 {
                images[k].push(self.eta[i][k]);
            }
        }
        let out: Vec<TileFunction> = (0..3)
            .map(|k| {
                let w = transform_w_set(f[k], &images[k], &spec);
                TileFunction::from_pairs(tiles.iter().zip(&images[k]).map(|(p, e)| (*p, w.get(e))))
            })
            .collect();
        let [a, b, c]: [TileFunction; 3] = out.try_into().expect("three components");
        Ok([a, b, c])
    }
}

/// The map `eta(P) = (P, I_P x Q_2(w_P), I_P x Q_3(w_P))` on those tiles of `base`
/// whose frequency interval is the first component of a cube of `family`.
pub fn build_eta_from_gamma(family: &GammaFamily, base: &[Tile], l: u32, kappa: u32) -> Result<Rank1Map, Rank1Error> {
    let mut tiles = Vec::new();
    let mut eta = Vec::new();
    for p in base {
        if p.k == 0 || p.k > l {
            continue;
        }
        if let Some(q) = family.lookup(p.freq()) {
            tiles.push(*p);
            eta.push([*p, Tile::new(p.k, p.n, q.component(1).idx), Tile::new(p.k, p.n, q.component(2).idx)]);
        }
    }
    Rank1Map::new(l, kappa, tiles, eta)
}

/// Every tile of the tiling whose frequency interval starts a cube of `family`.
pub fn family_tiles(family: &GammaFamily, l: u32) -> Vec<Tile> {
    let mut out = Vec::new();
    for q in &family.cubes {
        if q.level > l {
            continue;
        }
        let w = q.component(0);
        for n in 0..1u64 << (l - q.level) {
            out.push(Tile::new(q.level, n, w.idx));
        }
    }
    out.sort_by(|a, b| a.maximal_cmp(b));
    out
}

/// `Lambda_{eta,Q}(f1, f2, f3) = sum_{P in Q} |I_P| prod_j W[f_j](eta_j(P))`.
pub fn rank1_form(map: &Rank1Map, subset: &[Tile], f: [&Signal; 3]) -> Result<f64, Rank1Error> {
    let fs = map.transport_on(subset, f)?;
    Ok(form_from(subset, &fs))
}

fn form_from(tiles: &[Tile], fs: &[TileFunction; 3]) -> f64 {
    tiles.iter().map(|p| p.scl() as f64 * fs[0].get(p) * fs[1].get(p) * fs[2].get(p)).sum()
}

/// `eps(p) = 2 - sum_{j=1,2} 1 / min(p_j, 2)`.
pub fn eps_of(p: [f64; 3]) -> f64 {
    2.0 - p[..2].iter().map(|&q| 1.0 / q.min(2.0)).sum::<f64>()
}

/// Largest stopping parameter the pipeline runs with.
pub const EPS_PIPELINE_MAX: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank1Node {
    pub s: SpaceIv,
    pub generation: usize,
    pub tiles: usize,
    pub form: f64,
    /// `[f_j]_{q_j, P(S)}` with the pipeline exponents.
    pub local_norms: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank1SparseReport {
    pub p: [f64; 3],
    pub eps: f64,
    /// Parameter of the stopping exponents `(1/(1-e), 2, 2)`, `min(eps, 1/2)`.
    pub eps_pipeline: f64,
    pub theta: f64,
    pub form: f64,
    /// `||M_p(f1, f2, f3)||_1`.
    pub maximal_l1: f64,
    /// `eps(p) Lambda / ||M_p||_1`.
    pub ratio: f64,
    /// `max_S eps Lambda_{P(S)} / (|S| prod_j [f_j]_{q_j, P(S)})`: the local Hölder
    /// step behind the sparse bound.
    pub local_constant: f64,
    pub generations: usize,
    pub stopping_constants: Vec<f64>,
    pub partition_defect: f64,
    pub nodes: Vec<Rank1Node>,
}

/// The sparse ratio of the rank-1 form on all of `map`, with the stopping
/// collection for the extremal tuple as the decomposition.
pub fn rank1_sparse_ratio(map: &Rank1Map, f: [&Signal; 3], p: [f64; 3], theta: Option<f64>) -> Result<Rank1SparseReport, Rank1Error> {
    if p.iter().any(|&q| !(q >= 1.0 && q.is_finite())) {
        return Err(Rank1Error::BadParams(format!("exponents {p:?}")));
    }
    let eps = eps_of(p);
    if !(eps > 0.0) {
        return Err(Rank1Error::BadEpsilon(eps));
    }
    if let Some(j) = f.iter().position(|s| s.is_zero()) {
        return Err(Rank1Error::ZeroFunction(j + 1));
    }
    if f.iter().any(|s| s.l() != map.l) {
        return Err(Rank1Error::LengthMismatch);
    }
    let abs: Vec<Vec<f64>> = f.iter().map(|s| s.abs()).collect();
    let refs: Vec<&[f64]> = abs.iter().map(|v| v.as_slice()).collect();
    let maximal_l1: f64 = sparse_maximal(&refs, &p)?.iter().sum();
    let fs = map.transport(f)?;
    let form = form_from(&map.tiles, &fs);

    let e = eps.min(EPS_PIPELINE_MAX);
    let q = [1.0 / (1.0 - e), 2.0, 2.0];
    let coll = stopping_collection_q(&refs, &q, &[], e, theta)?;
    let mut parts: Vec<Vec<Tile>> = vec![Vec::new(); coll.nodes.len()];
    for t in &map.tiles {
        parts[coll.owner(t).expect("the torus root covers every tile")].push(*t);
    }
    let maximal: Vec<Vec<f64>> = abs.iter().zip(q).map(|(a, qj)| maximal_function(a, qj)).collect();
    let mut nodes = Vec::with_capacity(parts.len());
    let mut total = 0.0;
    let mut local_constant = 0.0f64;
    for (node, part) in coll.nodes.iter().zip(&parts) {
        let form_s = form_from(part, &fs);
        total += form_s;
        let mut local_norms = [0.0; 3];
        for j in 0..3 {
            local_norms[j] = local_tile_norm_from_maximal(&maximal[j], part);
        }
        let denom = node.s.len() as f64 * local_norms.iter().product::<f64>();
        if denom > 0.0 {
            local_constant = local_constant.max(e * form_s / denom);
        }
        nodes.push(Rank1Node { s: node.s, generation: node.generation, tiles: part.len(), form: form_s, local_norms });
    }
    let partition_defect = if form > 0.0 { (total - form).abs() / form } else { total.abs() };
    Ok(Rank1SparseReport {
        p,
        eps,
        eps_pipeline: e,
        theta: coll.theta,
        form,
        maximal_l1,
        ratio: eps * form / maximal_l1,
        local_constant,
        generations: coll.generations(),
        stopping_constants: coll.stopping_constants,
        partition_defect,
        nodes,
    })
}

/// Constant in the tree estimate.
pub const TREE_CONSTANT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEstimate {
    /// `size_1(F_1 F_2 F_3, T)`.
    pub lhs: f64,
    /// `size_{2,*,k}(F_k, T)`.
    pub rhs: [f64; 3],
    /// `lhs / prod_k rhs_k`, zero when the left side vanishes.
    pub ratio: f64,
    pub passes: bool,
}

/// Checks `size_1(F_1 F_2 F_3, T) <= 3 prod_k size_{2,*,k}(F_k, T)` on a 1-tree
/// `T` inside the base set; `f[k]` holds the values `F_k(P)` on the base tiles.
pub fn tree_estimate_check(map: &Rank1Map, f: [&TileFunction; 3], tree: &Tree) -> Result<TreeEstimate, Rank1Error> {
    if tree.kappa != 1 || !tree.members.iter().all(|p| tree.top.admits(p, 1, map.l)) {
        return Err(Rank1Error::NotOneTree);
    }
    let top_len = tree.top.i.len() as f64;
    let mut lhs = 0.0;
    let mut images: [Vec<(Tile, f64)>; 3] = Default::default();
    for p in &tree.members {
        let i = map.position(p).ok_or(Rank1Error::NotInDomain(*p))?;
        let v = [f[0].get(p), f[1].get(p), f[2].get(p)];
        lhs += p.scl() as f64 * (v[0] * v[1] * v[2]).abs();
        for k in 0..3 {
            images[k].push((map.eta[i][k], v[k]));
        }
    }
    lhs /= top_len;
    let rhs = [0, 1, 2].map(|k| size_2_star(&images[k], &tree.top.i));
    let prod: f64 = rhs.iter().product();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / prod };
    let passes = lhs <= TREE_CONSTANT * prod * (1.0 + 1e-12);
    Ok(TreeEstimate { lhs, rhs, ratio, passes })
}

/// Splits `S(Q) = {P in S : P <=_1 Q}` into three parts such that `eta_k` of part
/// `j` is lacunary for every `k != j`. Returns `None` when no split is found.
pub fn lacunary_split(map: &Rank1Map, members: &[Tile]) -> Option<[Vec<Tile>; 3]> {
    let images = |part: &[Tile], k: usize| -> Vec<Tile> { part.iter().map(|p| map.image(p, k).expect("member of the base set")).collect() };
    for j in 0..3 {
        if (0..3).filter(|&k| k != j).all(|k| is_lacunary(&images(members, k))) {
            let mut out: [Vec<Tile>; 3] = Default::default();
            out[j] = members.to_vec();
            return Some(out);
        }
    }
    // greedy: coarsest frequency first, each tile to the first part that stays admissible
    let mut order = members.to_vec();
    order.sort_by_key(|p| p.k);
    let mut out: [Vec<Tile>; 3] = Default::default();
    'tiles: for p in order {
        for j in 0..3 {
            out[j].push(p);
            if (0..3).filter(|&k| k != j).all(|k| is_lacunary(&images(&out[j], k))) {
                continue 'tiles;
            }
            out[j].pop();
        }
        return None;
    }
    Some(out)
}

/// For every `Q` of the base set, checks that `S(Q)` is a 1-tree with top
/// `(I_Q, c(w_Q))` and that it admits a [`lacunary_split`]. Returns the tiles `Q`
/// where this fails.
pub fn structure_check(map: &Rank1Map) -> Vec<Tile> {
    map.tiles
        .par_iter()
        .filter(|q| {
            let members: Vec<Tile> = map.tiles.iter().filter(|p| order_leq(p, q, 1)).copied().collect();
            let (b0, width) = q.freq().bin_range(map.l);
            let top = TopData { i: SpaceIv::of_tile(q), xi: b0 + width / 2 };
            let tree_ok = members.iter().all(|p| top.admits(p, 1, map.l));
            !(tree_ok && lacunary_split(map, &members).is_some())
        })
        .copied()
        .collect()
}

/// A random 1-tree inside the base set with at most `max_size` tiles: a random
/// tile fixes the top frequency, a random dyadic ancestor of its interval the top
/// interval, and the members are drawn from the maximal tree with those data.
pub fn random_one_tree<R: Rng>(map: &Rank1Map, max_size: usize, rng: &mut R) -> Option<Tree> {
    if map.is_empty() || max_size == 0 {
        return None;
    }
    let seed = map.tiles[rng.gen_range(0..map.len())];
    let (b0, width) = seed.freq().bin_range(map.l);
    let top_k = rng.gen_range(seed.k..=map.l);
    let top = TopData { i: SpaceIv::new(top_k, seed.n >> (top_k - seed.k)), xi: b0 + rng.gen_range(0..width) };
    let mut pool: Vec<Tile> = map.tiles.iter().filter(|p| **p != seed && top.admits(p, 1, map.l)).copied().collect();
    let take = rng.gen_range(0..max_size).min(pool.len());
    for i in 0..take {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut members = vec![seed];
    members.extend_from_slice(&pool[..take]);
    Tree::new(map.l, 1, top, members).ok()
}

/// A symbol on `Gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BhtSymbol {
    Constant(f64),
    /// `1_{(0, inf)}(beta . xi)`.
    HalfSpace { beta: [f64; 3] },
    /// `c + sum_i a_i cos(2 pi w_i . xi)`.
    Trig { c: f64, terms: Vec<([f64; 3], f64)> },
}

impl BhtSymbol {
    /// The bilinear Hilbert transform symbol with parameter `beta = gamma x (1,1,1)`.
    pub fn bilinear_hilbert(gamma: [f64; 3]) -> Self {
        BhtSymbol::HalfSpace { beta: cross(&gamma, &[1.0, 1.0, 1.0]) }
    }

    pub fn eval(&self, xi: &[f64; 3]) -> f64 {
        match self {
            BhtSymbol::Constant(c) => *c,
            BhtSymbol::HalfSpace { beta } => {
                if dot(beta, xi) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            BhtSymbol::Trig { c, terms } => c + terms.iter().map(|(w, a)| a * (std::f64::consts::TAU * dot(w, xi)).cos()).sum::<f64>(),
        }
    }

    /// Largest `dist(xi, Gamma')^|a| |d^a m(xi)|`, `|a| <= 2`, over a deterministic
    /// sample of points of `Gamma` inside `[-1/2, 1/2]^3` off `Gamma'`. Derivatives
    /// are taken along `Gamma`, where the form lives, by central differences of step
    /// proportional to the distance.
    pub fn condition_max(&self, gamma: [f64; 3]) -> f64 {
        let g = normalize(gamma);
        let nrm = normalize(cross(&g, &[1.0, 1.0, 1.0]));
        let dirs = [g, nrm];
        let mut worst = 0.0f64;
        let steps = 41;
        for a in 0..steps {
            for b in 0..steps {
                let u = -0.9 + 1.8 * (a as f64 + 0.5) / steps as f64;
                let v = -0.9 + 1.8 * (b as f64 + 0.5) / steps as f64;
                let x = add(&scale(&g, u), &scale(&nrm, v));
                let d = v.abs();
                if d < 1e-3 || x.iter().any(|c| c.abs() > 0.5) {
                    continue;
                }
                let h = 1e-3 * d;
                worst = worst.max(self.eval(&x).abs());
                for ei in dirs.map(|e| scale(&e, h)) {
                    let d1 = (self.eval(&add(&x, &ei)) - self.eval(&sub(&x, &ei))) / (2.0 * h);
                    worst = worst.max(d * d1.abs());
                    for ej in dirs.map(|e| scale(&e, h)) {
                        let d2 = (self.eval(&add(&add(&x, &ei), &ej)) - self.eval(&add(&sub(&x, &ei), &ej)) - self.eval(&sub(&add(&x, &ei), &ej))
                            + self.eval(&sub(&sub(&x, &ei), &ej)))
                            / (4.0 * h * h);
                        worst = worst.max(d * d * d2.abs());
                    }
                }
            }
        }
        worst
    }
}

fn scale(a: &[f64; 3], c: f64) -> [f64; 3] {
    [a[0] * c, a[1] * c, a[2] * c]
}

fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `chi(r)`: zero for `r <= 1`, one for `r >= 2`, smooth in between.
pub fn smooth_step(r: f64) -> f64 {
    let psi = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let u = r - 1.0;
    psi(u) / (psi(u) + psi(1.0 - u))
}

/// The truncated symbol on the lattice point `(j1, j2, -j1-j2)` of `N` bins:
/// `m(xi) chi(dist(xi, Gamma') / (K/N))`.
pub fn truncated_symbol(m: &BhtSymbol, g: &[f64; 3], big_k: f64, n: usize, j1: usize, j2: usize) -> f64 {
    let s1 = signed_freq(j1, n) as f64 / n as f64;
    let s2 = signed_freq(j2, n) as f64 / n as f64;
    let xi = [s1, s2, -s1 - s2];
    let d = line_quadratic(&xi, g).max(0.0).sqrt();
    let chi = smooth_step(d / (big_k / n as f64));
    if chi == 0.0 {
        0.0
    } else {
        m.eval(&xi) * chi
    }
}

/// The signal `g` with `Lambda_m(f1, f2, f3) = sum_x g(x) f3(x)`, where `Lambda_m` is
/// the lattice sum of `m fhat_1(xi_1) fhat_2(xi_2) fhat_3(xi_3)` over the points of
/// `Gamma`, truncated smoothly below distance `2K/N` from `Gamma'`.
pub fn bht_direct(f1: &Signal, f2: &Signal, m: &BhtSymbol, gamma: [f64; 3], big_k: f64) -> Result<Signal, Rank1Error> {
    if f1.len() != f2.len() {
        return Err(Rank1Error::LengthMismatch);
    }
    let g = GammaParams { gamma, big_h: 1, big_k: 1, h: 0 }.direction()?;
    let worst = m.condition_max(g);
    if worst > 1.0 + SYMBOL_TOLERANCE {
        return Err(Rank1Error::Symbol(worst));
    }
    let n = f1.len();
    let (a, b) = (f1.spectrum(), f2.spectrum());
    // H(j3) = sum_{j1} m(j1, j2, j3) fhat_1(j1) fhat_2(j2), j2 = -j1-j3
    let mut h: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|j3| {
            let mut acc = Complex64::new(0.0, 0.0);
            for j1 in 0..n {
                let j2 = (2 * n - j1 - j3) % n;
                let s = truncated_symbol(m, &g, big_k, n, j1, j2);
                if s != 0.0 {
                    acc += a[j1] * b[j2] * s;
                }
            }
            acc
        })
        .collect();
    // g(x) = sum_j H(j) e^{-2 pi i j x / N}
    fft_in_place(&mut h);
    Ok(Signal::new(h).expect("power-of-two length"))
}

/// `sum_x g(x) f(x)`.
pub fn pairing(g: &Signal, f: &Signal) -> Complex64 {
    g.samples().iter().zip(f.samples()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treespace::size_2_star_bruteforce;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bht_gamma() -> [f64; 3] {
        normalize([1.0, -2.0, 1.0])
    }

    fn params(l: u32) -> (GammaParams, u32) {
        let _ = l;
        (GammaParams { gamma: bht_gamma(), big_h: 3, big_k: 4, h: 0 }, 10)
    }

    fn small_map(l: u32) -> Rank1Map {
        let (par, kappa) = params(l);
        let fam = GammaFamily::construct(par, l, FamilyOptions { spacing: 2, kappa }).unwrap();
        build_eta_from_gamma(&fam, &family_tiles(&fam, l), l, kappa).unwrap()
    }

    /// Golden-section minimization of the box distance along the line: the
    /// distance from `t gamma` to a box is convex in `t`.
    fn distance_oracle(lo: [f64; 3], side: f64, g: [f64; 3]) -> f64 {
        let d = |t: f64| -> f64 {
            (0..3)
                .map(|i| {
                    let x = t * g[i];
                    let c = x.clamp(lo[i], lo[i] + side);
                    (x - c).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        };
        let (mut a, mut b) = (-2.0f64, 2.0f64);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let e = a + r * (b - a);
            if d(c) < d(e) {
                b = e;
            } else {
                a = c;
            }
        }
        d(0.5 * (a + b))
    }

    #[test]
    fn box_distance_matches_line_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let g = normalize([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0]);
            let g = normalize([g[0], g[1], -g[0] - g[1]]);
            let side = 2f64.powi(-rng.gen_range(1..6));
            let lo = [0, 1, 2].map(|_| rng.gen_range(-0.5..0.5 - side));
            let a = box_line_distance(lo, side, g);
            let b = distance_oracle(lo, side, g);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // a box around the origin meets the line
        assert_eq!(box_line_distance([-0.1, -0.1, -0.1], 0.2, bht_gamma()), 0.0);
    }

    #[test]
    fn gamma_validation() {
        let bad = GammaParams { gamma: normalize([1.0, -1.0, 0.0]), big_h: 3, big_k: 4, h: 0 };
        assert!(matches!(bad.direction(), Err(Rank1Error::Degenerate(_))));
        let off = GammaParams { gamma: [1.0, 1.0, 1.0], big_h: 3, big_k: 4, h: 0 };
        assert!(matches!(off.direction(), Err(Rank1Error::NotInPlane(_))));
    }

    #[test]
    fn full_enumeration_breaks_uniqueness() {
        let par = GammaParams { gamma: bht_gamma(), big_h: 3, big_k: 4, h: 0 };
        let all = GammaFamily::enumerate(par, 6).unwrap();
        assert!(!all.is_empty());
        match GammaFamily::from_cubes(par, all) {
            Err(Rank1Error::Uniqueness { count, .. }) => assert!(count > 1),
            other => panic!("expected a uniqueness failure, got {other:?}"),
        }
    }

    #[test]
    fn constructed_family_satisfies_g1_to_g3() {
        let (par, kappa) = params(9);
        let fam = GammaFamily::construct(par, 9, FamilyOptions { spacing: 2, kappa }).unwrap();
        assert!(!fam.cubes.is_empty());
        let g = par.direction().unwrap();
        for q in &fam.cubes {
            assert_eq!((q.level + par.h) % par.big_h, 0);
            assert!(q.meets_plane());
            let d = distance_oracle(q.lower(), q.side(), g) / q.side();
            assert!(d >= 4.0 - 1e-9 && d <= 16.0 + 1e-9, "{q:?}: {d}");
        }
        // several scales are active
        let levels: std::collections::BTreeSet<u32> = fam.cubes.iter().map(|q| q.level).collect();
        assert!(levels.len() >= 2);
    }

    /// Independent restatement of r1 to r4 on every ordered pair, written against
    /// the raw definitions of the order relations.
    fn axioms_hold(map: &Rank1Map) -> bool {
        let leq = |p: &Tile, q: &Tile, kappa: u32| -> bool {
            let space = p.k <= q.k && (p.n >> (q.k - p.k)) == q.n;
            let par = |t: &Tile| -> (i64, u64) {
                let lv = t.k as i64 - kappa as i64;
                if lv <= 0 {
                    (0, 0)
                } else {
                    (lv, t.f >> kappa)
                }
            };
            let (lp, ip) = par(p);
            let (lq, iq) = par(q);
            // parent of q inside parent of p
            space && lq >= lp && (iq >> (lq - lp)) == ip
        };
        for i in 0..map.len() {
            for k in 0..3 {
                if map.eta[i][k].k != map.tiles[i].k || map.eta[i][k].n != map.tiles[i].n {
                    return false;
                }
            }
            for j in 0..map.len() {
                if i == j {
                    continue;
                }
                for k in 0..3 {
                    if map.eta[i][k] == map.eta[j][k] {
                        return false;
                    }
                }
                let (a, b) = (&map.eta[i], &map.eta[j]);
                if (0..3).any(|k| leq(&a[k], &b[k], 1)) {
                    if !(0..3).all(|k| leq(&a[k], &b[k], map.kappa)) {
                        return false;
                    }
                    if (0..3).filter(|&k| !leq(&a[k], &b[k], 1)).count() < 2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn constructed_map_satisfies_axioms() {
        let map = small_map(9);
        assert!(map.len() > 100);
        assert!(map.violations(10).is_empty());
        assert!(axioms_hold(&map));
        assert!(structure_check(&map).is_empty());
    }

    #[test]
    fn axiom_violations_are_detected() {
        let map = small_map(6);
        // sibling first components break r4 in the third component
        let mut tiles = map.tiles.clone();
        let mut eta = map.eta.clone();
        let p = tiles[0];
        let sib = Tile::new(p.k, p.n, p.f ^ 1);
        tiles.push(sib);
        eta.push([sib, Tile::new(p.k, p.n, eta[0][1].f ^ 1), Tile::new(p.k, p.n, eta[0][2].f ^ 1)]);
        let err = Rank1Map::new(map.l, map.kappa, tiles.clone(), eta.clone()).unwrap_err();
        assert!(matches!(err, Rank1Error::Axiom { rule: "r4", .. }), "{err:?}");
        // duplicate images break r1
        let last = eta.len() - 1;
        eta[last][1] = eta[0][1];
        assert!(matches!(Rank1Map::new(map.l, map.kappa, tiles, eta), Err(Rank1Error::Axiom { rule: "r1", .. })));
    }

    #[test]
    fn empty_base_set_gives_empty_map() {
        let (par, kappa) = params(6);
        let fam = GammaFamily::construct(par, 6, FamilyOptions::default()).unwrap();
        let map = build_eta_from_gamma(&fam, &[], 6, kappa).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn form_examples() {
        let l = 6;
        let map = small_map(l);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<Signal> = (0..3).map(|_| Signal::random_complex(l, &mut rng)).collect();
        let fr = [&f[0], &f[1], &f[2]];
        assert_eq!(rank1_form(&map, &[], fr).unwrap(), 0.0);
        let zero = Signal::zeros(l);
        assert_eq!(rank1_form(&map, &map.tiles, [&f[0], &zero, &f[2]]).unwrap(), 0.0);
        let outside = Tile::new(1, 0, 0);
        if map.position(&outside).is_none() {
            assert!(matches!(rank1_form(&map, &[outside], fr), Err(Rank1Error::NotInDomain(_))));
        }
        // one tile with matched packets: the product of three pairings, each
        // recomputed from the dictionary directly
        let p = map.tiles[map.len() / 2];
        let i = map.position(&p).unwrap();
        let packets: Vec<Signal> = (0..3).map(|k| crate::wavepackets::wavelet(l, &map.eta[i][k], 0)).collect();
        let got = rank1_form(&map, &[p], [&packets[0], &packets[1], &packets[2]]).unwrap();
        let spec = WaveletSpec::default();
        let direct: f64 = (0..3).map(|k| crate::wavepackets::transform_w(&packets[k], &map.eta[i][k], &spec)).product();
        assert!((got - p.scl() as f64 * direct).abs() <= 1e-10 * got.max(1e-300));
        assert!(got > 0.0);
    }

    #[test]
    fn form_is_monotone_in_each_dictionary_value() {
        let l = 6;
        let map = small_map(l);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<Signal> = (0..3).map(|_| Signal::random_complex(l, &mut rng)).collect();
        let mut fs = map.transport([&f[0], &f[1], &f[2]]).unwrap();
        let base = form_from(&map.tiles, &fs);
        let p = map.tiles[0];
        let v = fs[1].get(&p);
        fs[1].values.insert(p, v * 2.0 + 1.0);
        assert!(form_from(&map.tiles, &fs) >= base);
    }

    #[test]
    fn eps_examples() {
        assert_eq!(eps_of([2.0, 2.0, 2.0]), 1.0);
        let e = 0.125;
        assert!((eps_of([1.0 / (1.0 - e), 1.0 / (1.0 - e), 2.0]) - 2.0 * e).abs() < 1e-12);
        assert_eq!(eps_of([1.0, 1.0, 5.0]), 0.0);
    }

    #[test]
    fn sparse_ratio_examples() {
        let l = 8;
        let map = small_map(l);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<Signal> = (0..3).map(|_| Signal::random_indicator(l, 64, &mut rng)).collect();
        let zero = Signal::zeros(l);
        let p = [1.0 / (1.0 - 0.25), 2.0, 2.0];
        assert!(matches!(rank1_sparse_ratio(&map, [&zero, &f[1], &f[2]], p, None), Err(Rank1Error::ZeroFunction(1))));
        assert!(matches!(rank1_sparse_ratio(&map, [&f[0], &f[1], &f[2]], [1.0, 1.0, 2.0], None), Err(Rank1Error::BadEpsilon(_))));
        let r = rank1_sparse_ratio(&map, [&f[0], &f[1], &f[2]], p, None).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0);
        assert!(r.partition_defect < 1e-12);
        assert!((r.eps - (0.5 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn tree_estimate_with_exhaustive_oracle() {
        let l = 8;
        let map = small_map(l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<Signal> = (0..3).map(|_| Signal::random_complex(l, &mut rng)).collect();
        let fs = map.transport([&f[0], &f[1], &f[2]]).unwrap();
        let mut nontrivial = 0;
        for _ in 0..60 {
            let Some(tree) = random_one_tree(&map, 15, &mut rng) else { continue };
            let est = tree_estimate_check(&map, [&fs[0], &fs[1], &fs[2]], &tree).unwrap();
            assert!(est.passes, "{est:?}");
            for k in 0..3 {
                let vals: Vec<(Tile, f64)> = tree.members.iter().map(|p| (map.image(p, k).unwrap(), fs[k].get(p))).collect();
                let oracle = size_2_star_bruteforce(&vals, &tree.top.i);
                assert!((oracle - est.rhs[k]).abs() <= 1e-12 * oracle.max(1.0));
            }
            if tree.members.len() > 1 {
                nontrivial += 1;
            }
        }
        assert!(nontrivial > 10);
        // single tile: both sides are the product of the three values
        let p = map.tiles[5];
        let (b0, _) = p.freq().bin_range(l);
        let tree = Tree::new(l, 1, TopData { i: SpaceIv::of_tile(&p), xi: b0 }, vec![p]).unwrap();
        let est = tree_estimate_check(&map, [&fs[0], &fs[1], &fs[2]], &tree).unwrap();
        assert!((est.ratio - 1.0).abs() < 1e-12);
        // a vanishing component gives 0 <= 0
        let zero = TileFunction::from_pairs(map.tiles.iter().map(|t| (*t, 0.0)));
        let est = tree_estimate_check(&map, [&fs[0], &zero, &fs[2]], &tree).unwrap();
        assert!(est.passes && est.lhs == 0.0);
    }

    #[test]
    fn tree_estimate_rejects_non_trees() {
        let map = small_map(6);
        let fs: [TileFunction; 3] = Default::default();
        let p = map.tiles[0];
        let bad = Tree { l: 6, kappa: 1, top: TopData { i: SpaceIv::new(0, 63), xi: 0 }, members: vec![p] };
        assert!(matches!(tree_estimate_check(&map, [&fs[0], &fs[1], &fs[2]], &bad), Err(Rank1Error::NotOneTree)));
    }

    /// `N^2 sum_{x,a,b} K(a,b) f1(x-a) f2(x-b) f3(x)` with the kernel
    /// `K(a,b) = N^-2 sum_{j1,j2} m e^{2 pi i (a j1 + b j2)/N}`.
    fn space_side(f1: &Signal, f2: &Signal, f3: &Signal, m: &BhtSymbol, g: [f64; 3], big_k: f64) -> Complex64 {
        let n = f1.len();
        let g = normalize(g);
        let mut kern = vec![Complex64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j1 in 0..n {
                    for j2 in 0..n {
                        let s = truncated_symbol(m, &g, big_k, n, j1, j2);
                        let ph = std::f64::consts::TAU * ((a * j1 + b * j2) % n) as f64 / n as f64;
                        acc += Complex64::from_polar(s, ph);
                    }
                }
                kern[a * n + b] = acc;
            }
        }
        let (x1, x2, x3) = (f1.samples(), f2.samples(), f3.samples());
        let mut total = Complex64::new(0.0, 0.0);
        for x in 0..n {
            for a in 0..n {
                for b in 0..n {
                    total += kern[a * n + b] * x1[(x + n - a) % n] * x2[(x + n - b) % n] * x3[x];
                }
            }
        }
        total
    }

    #[test]
    fn bht_direct_examples() {
        let l = 4;
        let g = bht_gamma();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Vec<Signal> = (0..3).map(|_| Signal::random_complex(l, &mut rng)).collect();
        let out = bht_direct(&f[0], &f[1], &BhtSymbol::Constant(0.0), g, 1.0).unwrap();
        assert_eq!(pairing(&out, &f[2]).norm(), 0.0);
        // constant inputs interact only at the origin, which lies on Gamma'
        let c1 = Signal::exponential(l, 0);
        let c2 = Signal::exponential(l, 0);
        let out = bht_direct(&c1, &c2, &BhtSymbol::Constant(1.0), g, 1.0).unwrap();
        assert!(pairing(&out, &f[2]).norm() < 1e-9);
        for sym in [
            BhtSymbol::bilinear_hilbert(g),
            BhtSymbol::Trig { c: 0.3, terms: vec![([0.3, -0.2, 0.1], 0.05), ([0.1, 0.4, -0.3], 0.04)] },
        ] {
            let out = bht_direct(&f[0], &f[1], &sym, g, 1.0).unwrap();
            let a = pairing(&out, &f[2]);
            let b = space_side(&f[0], &f[1], &f[2], &sym, g, 1.0);
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "{a} vs {b}");
            assert!(b.norm() > 1e-6);
        }
    }

    #[test]
    fn symbol_condition_is_enforced() {
        let g = bht_gamma();
        assert!(BhtSymbol::bilinear_hilbert(g).condition_max(g) <= 1.0);
        let wild = BhtSymbol::Trig { c: 0.0, terms: vec![([3.0, -1.0, 0.0], 1.0)] };
        let f = Signal::zeros(3);
        assert!(matches!(bht_direct(&f, &f, &wild, g, 1.0), Err(Rank1Error::Symbol(_))));
    }
}
