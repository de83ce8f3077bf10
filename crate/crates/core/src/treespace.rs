//! Trees of tiles, the outer measure they generate on a local tile space, sizes,
//! and the outer Lorentz, `X` and `Y` quasinorms built from them.
//!
//! Every quantity here is an infimum or supremum over trees. On a finite tile set
//! these reduce to finite problems: a tree with top data `(I, xi)` only matters
//! through the set of tiles it contains, and that set depends on `xi` only through
//! which frequency intervals of the relevant tiles contain it. Candidate tops are
//! therefore all dyadic ancestors `I` of the tiles, paired with one frequency per
//! cell of the partition cut out by the endpoints of the frequency intervals.
//!
//! Outer measures are weighted set covers. The exact solver is a branch and
//! bound over candidate trees that splits the problem into independent components
//! first; the greedy solver picks the tree with the most uncovered mass per unit
//! top length.

use crate::dyadic::{FreqIv, Tile, Tiling};
use crate::wavepackets::TileFunction;
use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("tile {0} does not lie below the top data")]
    NotInTree(String),
    #[error("tile {0} lies outside the local space")]
    OutsideSpace(String),
    #[error("exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("top data do not cover tile {0}")]
    Uncovered(String),
}

/// A dyadic spatial interval `[n 2^k, (n+1) 2^k)` of the torus.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpaceIv {
    pub k: u32,
    pub n: u64,
}

impl SpaceIv {
    pub fn new(k: u32, n: u64) -> Self {
        SpaceIv { k, n }
    }

    pub fn of_tile(t: &Tile) -> Self {
        SpaceIv { k: t.k, n: t.n }
    }

    pub fn len(&self) -> u64 {
        1u64 << self.k
    }

    pub fn left(&self) -> u64 {
        self.n << self.k
    }

    pub fn parent(&self) -> SpaceIv {
        SpaceIv { k: self.k + 1, n: self.n >> 1 }
    }

    pub fn contains(&self, o: &SpaceIv) -> bool {
        o.k <= self.k && (o.n >> (self.k - o.k)) == self.n
    }

    pub fn contains_tile(&self, t: &Tile) -> bool {
        t.space_in(self.k, self.n)
    }

    /// Maximal-first order: longer first, then leftmost.
    pub fn maximal_cmp(&self, o: &SpaceIv) -> std::cmp::Ordering {
        o.k.cmp(&self.k).then_with(|| self.left().cmp(&o.left()))
    }
}

/// Top data `(I_T, xi_T)` with `xi_T` a DFT bin.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopData {
    pub i: SpaceIv,
    pub xi: u64,
}

impl TopData {
    /// Whether `P` belongs to the maximal `kappa`-tree with these top data.
    pub fn admits(&self, p: &Tile, kappa: u32, l: u32) -> bool {
        self.i.contains_tile(p) && p.freq().parent(kappa).contains_bin(self.xi, l)
    }

    pub fn canonical_cmp(&self, o: &TopData) -> std::cmp::Ordering {
        self.i.maximal_cmp(&o.i).then_with(|| self.xi.cmp(&o.xi))
    }
}

/// A `kappa`-tree on the torus with `2^l` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub l: u32,
    pub kappa: u32,
    pub top: TopData,
    pub members: Vec<Tile>,
}

impl Tree {
    pub fn new(l: u32, kappa: u32, top: TopData, mut members: Vec<Tile>) -> Result<Self, TreeError> {
        for p in &members {
            if !top.admits(p, kappa, l) {
                return Err(TreeError::NotInTree(p.encode()));
            }
        }
        members.sort_by(|a, b| a.maximal_cmp(b));
        members.dedup();
        Ok(Tree { l, kappa, top, members })
    }

    /// All tiles of `tiles` admitted by the top data.
    pub fn maximal(l: u32, kappa: u32, top: TopData, tiles: &[Tile]) -> Self {
        let members = tiles.iter().filter(|p| top.admits(p, kappa, l)).copied().collect();
        Tree::new(l, kappa, top, members).expect("filtered members are admitted")
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The number of tiles per spatial interval and per frequency scale; both are
    /// bounded by `2^kappa` for every tree.
    pub fn spectral_counts(&self) -> (usize, usize) {
        let mut per_i: BTreeMap<SpaceIv, usize> = BTreeMap::new();
        let mut per_scale: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
        for p in &self.members {
            *per_i.entry(SpaceIv::of_tile(p)).or_default() += 1;
            per_scale.entry(p.k).or_default().insert(p.f);
        }
        (
            per_i.values().copied().max().unwrap_or(0),
            per_scale.values().map(|s| s.len()).max().unwrap_or(0),
        )
    }

    pub fn satisfies_spectral_bound(&self) -> bool {
        let (a, b) = self.spectral_counts();
        let cap = 1usize << self.kappa;
        a <= cap && b <= cap
    }

    fn with_members(&self, members: Vec<Tile>) -> Tree {
        Tree { l: self.l, kappa: self.kappa, top: self.top, members }
    }

    /// Type of a tile: the index `j < 2^kappa` of `w_P` among the `kappa`-grandchildren
    /// of its `kappa`-parent.
    pub fn tile_type(p: &Tile, kappa: u32) -> u64 {
        p.f & ((1u64 << kappa) - 1)
    }

    /// `T = T_{|0} + ... + T_{|2^kappa - 1}` by type.
    pub fn split_types(&self) -> Vec<Tree> {
        let mut parts = vec![Vec::new(); 1usize << self.kappa];
        for p in &self.members {
            parts[Tree::tile_type(p, self.kappa) as usize].push(*p);
        }
        parts.into_iter().map(|m| self.with_members(m)).collect()
    }

    /// `(T^lac, T^ov)` with `T^ov` the tiles whose frequency interval contains `xi_T`.
    pub fn split_lac_ov(&self) -> (Tree, Tree) {
        let (ov, lac): (Vec<Tile>, Vec<Tile>) =
            self.members.iter().partition(|p| p.freq().contains_bin(self.top.xi, self.l));
        (self.with_members(lac), self.with_members(ov))
    }

    /// `T = T^0 + ... + T^{kappa-1}` with `T^u` the tiles of scale `2^k`, `k = u mod kappa`.
    pub fn structure_split(&self) -> Vec<Tree> {
        let mut parts = vec![Vec::new(); self.kappa as usize];
        for p in &self.members {
            parts[(p.k % self.kappa) as usize].push(*p);
        }
        parts.into_iter().map(|m| self.with_members(m)).collect()
    }

    /// Checks the two structural properties of every `T^u_{|j}`: its lacunary part is
    /// lacunary, and for each `j' != j` the `j'`-th grandchildren of the `kappa`-parents
    /// of its overlapping part are pairwise disjoint.
    pub fn check_structure(&self) -> bool {
        for tu in self.structure_split() {
            for (j, tj) in tu.split_types().into_iter().enumerate() {
                let (lac, ov) = tj.split_lac_ov();
                if !is_lacunary(&lac.members) {
                    return false;
                }
                for jp in 0..(1u64 << self.kappa) {
                    if jp == j as u64 {
                        continue;
                    }
                    let ivs: BTreeSet<FreqIv> =
                        ov.members.iter().map(|p| p.freq().parent(self.kappa).child(self.kappa, jp)).collect();
                    let ivs: Vec<FreqIv> = ivs.into_iter().collect();
                    for a in 0..ivs.len() {
                        for b in a + 1..ivs.len() {
                            if !ivs[a].disjoint(&ivs[b]) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }
}

/// Whether distinct frequency intervals of `tiles` are pairwise disjoint.
pub fn is_lacunary(tiles: &[Tile]) -> bool {
    let ivs: BTreeSet<FreqIv> = tiles.iter().map(|p| p.freq()).collect();
    let ivs: Vec<FreqIv> = ivs.into_iter().collect();
    for a in 0..ivs.len() {
        for b in a + 1..ivs.len() {
            if !ivs[a].disjoint(&ivs[b]) {
                return false;
            }
        }
    }
    true
}

/// A random `kappa`-tree with at most `size` tiles below a random top at scale `top_k`.
pub fn random_tree<R: Rng>(l: u32, kappa: u32, top_k: u32, size: usize, rng: &mut R) -> Tree {
    let top = TopData { i: SpaceIv::new(top_k, rng.gen_range(0..1u64 << (l - top_k))), xi: rng.gen_range(0..1u64 << l) };
    let mut members = Vec::new();
    for _ in 0..size {
        let k = rng.gen_range(0..=top_k);
        let n = (top.i.n << (top_k - k)) + rng.gen_range(0..1u64 << (top_k - k));
        let f = if k <= kappa {
            rng.gen_range(0..1u64 << k)
        } else {
            let parent = top.xi >> (l - (k - kappa));
            (parent << kappa) + rng.gen_range(0..1u64 << kappa)
        };
        members.push(Tile::new(k, n, f));
    }
    Tree::new(l, kappa, top, members).expect("random tree members are admitted by construction")
}

/// Which size a computation uses.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SizeKind {
    /// `size_p` for finite `p >= 1`.
    P(f64),
    /// `size_inf`, the supremum over the tree.
    Sup,
    /// `size_{2,*}`: the largest `size_2` over lacunary subtrees.
    TwoStar,
    /// `size_C = size_2(T^lac) + size_1(T^ov)`, meaningful with `kappa = 1`.
    Carleson,
}

/// `size_p(F, T)`; `F` is given as the (tile, value) pairs of the tree.
pub fn size_p(vals: &[(Tile, f64)], top_len: u64, p: f64) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let s: f64 = vals.iter().map(|(t, v)| t.scl() as f64 * v.abs().powf(p)).sum();
    (s / top_len as f64).powf(1.0 / p)
}

pub fn size_sup(vals: &[(Tile, f64)]) -> f64 {
    vals.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
}

/// `size_{2,*}(F, T)` by a dynamic program: for every dyadic `I'` inside the top
/// that contains some `I_P`, the best lacunary subset of the tiles below `I'` is a
/// maximum weight antichain in the laminar family of frequency intervals.
pub fn size_2_star(vals: &[(Tile, f64)], top: &SpaceIv) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let mut tops: BTreeSet<SpaceIv> = BTreeSet::new();
    for (t, _) in vals {
        let mut s = SpaceIv::of_tile(t);
        while s.k <= top.k {
            if !tops.insert(s) {
                break;
            }
            s = s.parent();
        }
    }
    let mut best = 0.0f64;
    for ip in &tops {
        let mut w: BTreeMap<FreqIv, f64> = BTreeMap::new();
        for (t, v) in vals {
            if ip.contains_tile(t) {
                *w.entry(t.freq()).or_default() += t.scl() as f64 * v * v;
            }
        }
        let total = max_weight_antichain(&w);
        best = best.max(total / ip.len() as f64);
    }
    best.sqrt()
}

/// Maximum total weight of pairwise disjoint intervals from a family of dyadic
/// frequency intervals.
fn max_weight_antichain(w: &BTreeMap<FreqIv, f64>) -> f64 {
    let mut keys: Vec<FreqIv> = w.keys().copied().collect();
    // finest first
    keys.sort_by(|a, b| b.level.cmp(&a.level).then(a.idx.cmp(&b.idx)));
    let min_level = keys.iter().map(|k| k.level).min().unwrap_or(0);
    let mut acc: HashMap<FreqIv, f64> = HashMap::new();
    let mut root = 0.0;
    for key in keys {
        let here = w[&key].max(acc.get(&key).copied().unwrap_or(0.0));
        let mut anc = key;
        let mut placed = false;
        while anc.level > min_level {
            anc = anc.parent(1);
            if w.contains_key(&anc) {
                *acc.entry(anc).or_default() += here;
                placed = true;
                break;
            }
        }
        if !placed {
            root += here;
        }
    }
    root
}

/// `size_C(F, T)` with the top frequency `xi` deciding the overlapping part.
pub fn size_carleson(vals: &[(Tile, f64)], top: &TopData, l: u32) -> f64 {
    let (ov, lac): (Vec<(Tile, f64)>, Vec<(Tile, f64)>) =
        vals.iter().partition(|(t, _)| t.freq().contains_bin(top.xi, l));
    size_p(&lac, top.i.len(), 2.0) + size_p(&ov, top.i.len(), 1.0)
}

pub fn size_of(kind: SizeKind, vals: &[(Tile, f64)], top: &TopData, l: u32) -> f64 {
    match kind {
        SizeKind::P(p) => size_p(vals, top.i.len(), p),
        SizeKind::Sup => size_sup(vals),
        SizeKind::TwoStar => size_2_star(vals, &top.i),
        SizeKind::Carleson => size_carleson(vals, top, l),
    }
}

/// The size of `F` on a tree.
pub fn tree_size(kind: SizeKind, f: &TileFunction, tree: &Tree) -> f64 {
    let vals: Vec<(Tile, f64)> = tree.members.iter().map(|t| (*t, f.get(t))).collect();
    size_of(kind, &vals, &tree.top, tree.l)
}

/// Exhaustive `size_{2,*}` over all subsets of a small tree; the oracle for the
/// dynamic program.
pub fn size_2_star_bruteforce(vals: &[(Tile, f64)], top: &SpaceIv) -> f64 {
    assert!(vals.len() <= 20, "exhaustive enumeration limited to 20 tiles");
    let mut best = 0.0f64;
    for mask in 1u32..(1u32 << vals.len()) {
        let sub: Vec<(Tile, f64)> = (0..vals.len()).filter(|i| mask >> i & 1 == 1).map(|i| vals[i]).collect();
        let tiles: Vec<Tile> = sub.iter().map(|(t, _)| *t).collect();
        if !is_lacunary(&tiles) {
            continue;
        }
        // smallest dyadic interval containing every I_P
        let mut iv = SpaceIv::of_tile(&tiles[0]);
        while !tiles.iter().all(|t| iv.contains_tile(t)) {
            iv = iv.parent();
        }
        debug_assert!(top.contains(&iv));
        let mass: f64 = sub.iter().map(|(t, v)| t.scl() as f64 * v * v).sum();
        best = best.max(mass / iv.len() as f64);
    }
    best.sqrt()
}

/// How outer measures are computed.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    Exact,
    Greedy,
}

/// The outer measure space `(S^J, T^{J,kappa}, mu^{J,kappa})` on the torus with `2^l`
/// samples.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterSpace {
    pub l: u32,
    pub j: SpaceIv,
    pub kappa: u32,
    pub mode: SolverMode,
}

impl OuterSpace {
    pub fn new(l: u32, j: SpaceIv, kappa: u32, mode: SolverMode) -> Self {
        assert!(j.k <= l && j.n < 1u64 << (l - j.k), "J must be a dyadic interval of the torus");
        assert!(kappa >= 1);
        OuterSpace { l, j, kappa, mode }
    }

    /// The whole torus as `J`.
    pub fn torus(l: u32, kappa: u32, mode: SolverMode) -> Self {
        OuterSpace::new(l, SpaceIv::new(l, 0), kappa, mode)
    }

    pub fn with_mode(&self, mode: SolverMode) -> Self {
        OuterSpace { mode, ..*self }
    }

    pub fn contains(&self, p: &Tile) -> bool {
        self.j.contains_tile(p) && Tiling::new(self.l).contains(p)
    }

    /// Outer measure of a tile set, normalized by `|J|`.
    pub fn measure(&self, a: &[Tile]) -> f64 {
        self.measure_cover(a).0
    }

    /// Outer measure together with the covering top data.
    pub fn measure_cover(&self, a: &[Tile]) -> (f64, Vec<TopData>) {
        let mut tiles: Vec<Tile> = a.to_vec();
        tiles.sort_by(|x, y| x.maximal_cmp(y));
        tiles.dedup();
        for p in &tiles {
            assert!(self.contains(p), "tile {p} outside the local space");
        }
        if tiles.is_empty() {
            return (0.0, Vec::new());
        }
        let cands = Candidates::build(self, &tiles, false);
        let mut all = FixedBitSet::with_capacity(tiles.len());
        all.insert_range(..);
        let (cost, chosen) = match self.mode {
            SolverMode::Exact => cands.exact_cover(&all),
            SolverMode::Greedy => cands.greedy_cover(&all),
        };
        (cost as f64 / self.j.len() as f64, chosen.into_iter().map(|c| cands.tops[c]).collect())
    }
}

/// Candidate trees over a fixed finite universe of tiles.
#[derive(Clone, Debug)]
pub struct Candidates {
    pub l: u32,
    pub kappa: u32,
    pub tiles: Vec<Tile>,
    pub tops: Vec<TopData>,
    pub sets: Vec<FixedBitSet>,
    pub costs: Vec<u64>,
    /// Mass `|I_P|` of each universe tile.
    pub mass: Vec<u64>,
}

impl Candidates {
    /// Builds the deduplicated candidate trees. With `keep_all_tops` every distinct
    /// (interval, membership) pair is kept, which size computations need since the
    /// size of a tree depends on its top length and, for `size_C`, on the exact top
    /// frequency pattern. Without it only the cheapest top per member set is kept,
    /// which is all a cover needs.
    pub fn build(space: &OuterSpace, tiles: &[Tile], keep_all_tops: bool) -> Candidates {
        let l = space.l;
        let kappa = space.kappa;
        let m = tiles.len();
        // spatial tops: dyadic ancestors of the tiles inside J
        let mut tiles_below: BTreeMap<SpaceIv, Vec<usize>> = BTreeMap::new();
        for (idx, t) in tiles.iter().enumerate() {
            let mut s = SpaceIv::of_tile(t);
            loop {
                tiles_below.entry(s).or_default().push(idx);
                if s.k >= space.j.k {
                    break;
                }
                s = s.parent();
            }
        }
        let mut ivs: Vec<SpaceIv> = tiles_below.keys().copied().collect();
        ivs.sort_by(|a, b| a.maximal_cmp(b));
        let mut seen: HashMap<FixedBitSet, usize> = HashMap::new();
        let mut seen_exact: BTreeSet<(SpaceIv, Vec<u32>)> = BTreeSet::new();
        let mut out = Candidates {
            l,
            kappa,
            tiles: tiles.to_vec(),
            tops: Vec::new(),
            sets: Vec::new(),
            costs: Vec::new(),
            mass: tiles.iter().map(|t| t.scl()).collect(),
        };
        for iv in ivs {
            let below = &tiles_below[&iv];
            // cell representatives: both endpoints of w_P and of its kappa-parent
            let mut reps: BTreeSet<u64> = BTreeSet::new();
            for &idx in below {
                let p = &tiles[idx];
                for w in [p.freq(), p.freq().parent(kappa)] {
                    let (s, b) = w.bin_range(l);
                    reps.insert(s);
                    if s + b < (1u64 << l) {
                        reps.insert(s + b);
                    }
                }
            }
            for xi in reps {
                let top = TopData { i: iv, xi };
                let mut set = FixedBitSet::with_capacity(m);
                for &idx in below {
                    if top.admits(&tiles[idx], kappa, l) {
                        set.insert(idx);
                    }
                }
                if set.count_ones(..) == 0 {
                    continue;
                }
                if keep_all_tops {
                    // the overlap pattern also matters for size_C
                    let mut key: Vec<u32> = set.ones().map(|i| i as u32).collect();
                    for i in set.ones() {
                        if tiles[i].freq().contains_bin(xi, l) {
                            key.push(u32::MAX - i as u32);
                        }
                    }
                    if seen_exact.insert((iv, key)) {
                        out.push(top, set);
                    }
                } else if !seen.contains_key(&set) {
                    // intervals are visited longest first, so a later visit is cheaper
                    seen.insert(set.clone(), out.tops.len());
                    out.push(top, set);
                } else {
                    let at = seen[&set];
                    if iv.len() < out.costs[at] {
                        out.tops[at] = top;
                        out.costs[at] = iv.len();
                    }
                }
            }
        }
        out
    }

    fn push(&mut self, top: TopData, set: FixedBitSet) {
        self.costs.push(top.i.len());
        self.tops.push(top);
        self.sets.push(set);
    }

    pub fn len(&self) -> usize {
        self.tops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tops.is_empty()
    }

    /// Indices of candidates in canonical order (longest top, leftmost, lowest
    /// frequency).
    fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.tops[a].canonical_cmp(&self.tops[b]));
        idx
    }

    /// Greedy cover of `target`: most uncovered mass per unit top length first.
    pub fn greedy_cover(&self, target: &FixedBitSet) -> (u64, Vec<usize>) {
        let order = self.canonical_order();
        let mut left = target.clone();
        let mut cost = 0u64;
        let mut chosen = Vec::new();
        while left.count_ones(..) > 0 {
            let mut best: Option<(usize, f64)> = None;
            for &c in &order {
                let gain: u64 = self.sets[c].intersection(&left).map(|i| self.mass[i]).sum();
                if gain == 0 {
                    continue;
                }
                let ratio = gain as f64 / self.costs[c] as f64;
                if best.map_or(true, |(_, r)| ratio > r) {
                    best = Some((c, ratio));
                }
            }
            let (c, _) = best.expect("every tile is covered by the tree with its own top");
            left.difference_with(&self.sets[c]);
            cost += self.costs[c];
            chosen.push(c);
        }
        (cost, chosen)
    }

    /// Minimum-cost cover of `target` by branch and bound.
    pub fn exact_cover(&self, target: &FixedBitSet) -> (u64, Vec<usize>) {
        let m = self.tiles.len();
        // restrict and drop dominated candidates
        let mut live: Vec<(usize, FixedBitSet)> = Vec::new();
        for c in self.canonical_order() {
            let mut s = self.sets[c].clone();
            s.intersect_with(target);
            if s.count_ones(..) > 0 {
                live.push((c, s));
            }
        }
        let mut keep = vec![true; live.len()];
        for a in 0..live.len() {
            for b in 0..live.len() {
                if a == b || !keep[b] {
                    continue;
                }
                let (ca, sa) = &live[a];
                let (cb, sb) = &live[b];
                let dominated = sa.is_subset(sb)
                    && (self.costs[*cb] < self.costs[*ca] || (self.costs[*cb] == self.costs[*ca] && (sa != sb || b < a)));
                if dominated {
                    keep[a] = false;
                    break;
                }
            }
        }
        let live: Vec<(usize, FixedBitSet)> = live.into_iter().zip(keep).filter(|(_, k)| *k).map(|(x, _)| x).collect();
        // connected components of the element graph
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for (_, s) in &live {
            let mut it = s.ones();
            if let Some(first) = it.next() {
                for o in it {
                    let (ra, rb) = (find(&mut parent, first), find(&mut parent, o));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut comps: BTreeMap<usize, FixedBitSet> = BTreeMap::new();
        for e in target.ones() {
            let r = find(&mut parent, e);
            comps.entry(r).or_insert_with(|| FixedBitSet::with_capacity(m)).insert(e);
        }
        let mut total = 0u64;
        let mut chosen = Vec::new();
        for (_, comp) in comps {
            let sub: Vec<(usize, FixedBitSet)> =
                live.iter().filter(|(_, s)| !s.is_disjoint(&comp)).cloned().collect();
            let (c, ch) = self.solve_component(&comp, &sub);
            total += c;
            chosen.extend(ch);
        }
        chosen.sort_by(|&a, &b| self.tops[a].canonical_cmp(&self.tops[b]));
        (total, chosen)
    }

    fn solve_component(&self, comp: &FixedBitSet, cands: &[(usize, FixedBitSet)]) -> (u64, Vec<usize>) {
        let m = self.tiles.len();
        let mut options: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (ci, (_, s)) in cands.iter().enumerate() {
            for e in s.ones() {
                options[e].push(ci);
            }
        }
        for o in options.iter_mut() {
            o.sort_by_key(|&ci| (self.costs[cands[ci].0], ci));
        }
        let min_cost: Vec<u64> =
            options.iter().map(|o| o.first().map(|&ci| self.costs[cands[ci].0]).unwrap_or(u64::MAX)).collect();
        // greedy incumbent
        let sub = Candidates {
            l: self.l,
            kappa: self.kappa,
            tiles: self.tiles.clone(),
            tops: cands.iter().map(|(c, _)| self.tops[*c]).collect(),
            sets: cands.iter().map(|(_, s)| s.clone()).collect(),
            costs: cands.iter().map(|(c, _)| self.costs[*c]).collect(),
            mass: self.mass.clone(),
        };
        let (g_cost, g_chosen) = sub.greedy_cover(comp);
        let mut best = (g_cost, g_chosen);
        let mut stack = Vec::new();
        self.branch(comp.clone(), 0, &mut stack, cands, &options, &min_cost, &mut best);
        (best.0, best.1.into_iter().map(|ci| cands[ci].0).collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &self,
        left: FixedBitSet,
        cost: u64,
        stack: &mut Vec<usize>,
        cands: &[(usize, FixedBitSet)],
        options: &[Vec<usize>],
        min_cost: &[u64],
        best: &mut (u64, Vec<usize>),
    ) {
        if left.count_ones(..) == 0 {
            if cost < best.0 {
                *best = (cost, stack.clone());
            }
            return;
        }
        let lb = left.ones().map(|e| min_cost[e]).max().unwrap_or(0);
        if cost + lb >= best.0 {
            return;
        }
        let e = left.ones().min_by_key(|&e| (options[e].len(), e)).unwrap();
        for &ci in &options[e] {
            let c = self.costs[cands[ci].0];
            if cost + c >= best.0 {
                break;
            }
            let mut next = left.clone();
            next.difference_with(&cands[ci].1);
            stack.push(ci);
            self.branch(next, cost + c, stack, cands, options, min_cost, best);
            stack.pop();
        }
    }
}

/// A nonincreasing right-continuous step function `F*(t) = g_i` on `[c_i, c_{i+1})`,
/// with `c_0 = 0` and the last value `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rearrangement {
    pub steps: Vec<(f64, f64)>,
}

impl Rearrangement {
    /// From (measure, remaining outer supremum) pairs; keeps the lower envelope.
    pub fn from_frontier(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        let mut steps: Vec<(f64, f64)> = Vec::new();
        for (c, g) in points {
            if steps.last().map_or(true, |&(_, lg)| g < lg) {
                if let Some(last) = steps.last_mut() {
                    if last.0 == c {
                        last.1 = g;
                        continue;
                    }
                }
                steps.push((c, g));
            }
        }
        if steps.is_empty() || steps[0].0 > 0.0 {
            // the empty removal always has cost zero, so the caller supplies it
            panic!("frontier must contain the point at measure zero");
        }
        if steps.last().unwrap().1 > 0.0 {
            panic!("frontier must end at remaining supremum zero");
        }
        Rearrangement { steps }
    }

    pub fn zero() -> Self {
        Rearrangement { steps: vec![(0.0, 0.0)] }
    }

    /// `F*(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.steps[0].1;
        for &(c, g) in &self.steps {
            if c <= t {
                v = g;
            }
        }
        v
    }

    /// `mu_s[F](tau)`: the least breakpoint measure whose value is at most `tau`.
    pub fn superlevel(&self, tau: f64) -> f64 {
        self.steps.iter().find(|&&(_, g)| g <= tau).map(|&(c, _)| c).unwrap()
    }

    /// Outer `L^{p,q}` quasinorm `|| t^{1/p} F*(t) ||_{L^q(dt/t)}`.
    pub fn lorentz(&self, p: f64, q: f64) -> f64 {
        assert!(p > 0.0 && q > 0.0, "exponents must be positive");
        if p.is_infinite() {
            return self.steps[0].1;
        }
        let n = self.steps.len();
        if q.is_infinite() {
            return (0..n - 1).map(|i| self.steps[i].1 * self.steps[i + 1].0.powf(1.0 / p)).fold(0.0, f64::max);
        }
        let s: f64 = (0..n - 1)
            .map(|i| {
                let (c0, g) = self.steps[i];
                let c1 = self.steps[i + 1].0;
                g.powf(q) * (p / q) * (c1.powf(q / p) - c0.powf(q / p))
            })
            .sum();
        s.powf(1.0 / q)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# tilebench-v1")?;
        writeln!(w, "t,rearrangement,tau,superlevel")?;
        for &(c, g) in &self.steps {
            writeln!(w, "{c:e},{g:e},{g:e},{c:e}")?;
        }
        Ok(())
    }
}

/// Working state for super-level computations on the support of `F`.
struct LevelProblem<'a> {
    space: &'a OuterSpace,
    kind: SizeKind,
    cands: Candidates,
    vals: Vec<f64>,
}

impl<'a> LevelProblem<'a> {
    fn new(space: &'a OuterSpace, f: &TileFunction, kind: SizeKind) -> Option<Self> {
        let mut tiles = Vec::new();
        let mut vals = Vec::new();
        for (t, v) in &f.values {
            assert!(space.contains(t), "tile {t} outside the local space");
            if *v > 0.0 {
                tiles.push(*t);
                vals.push(*v);
            }
        }
        if tiles.is_empty() {
            return None;
        }
        let cands = Candidates::build(space, &tiles, true);
        Some(LevelProblem { space, kind, cands, vals })
    }

    fn cand_size(&self, c: usize, alive: &FixedBitSet) -> f64 {
        let vals: Vec<(Tile, f64)> = self.cands.sets[c]
            .ones()
            .filter(|&i| alive.contains(i))
            .map(|i| (self.cands.tiles[i], self.vals[i]))
            .collect();
        size_of(self.kind, &vals, &self.cands.tops[c], self.space.l)
    }

    fn full(&self) -> FixedBitSet {
        let mut all = FixedBitSet::with_capacity(self.vals.len());
        all.insert_range(..);
        all
    }

    /// `(outsup, canonical index of the first maximizing candidate)`.
    fn outsup(&self, alive: &FixedBitSet) -> (f64, Option<usize>) {
        let mut best = (0.0, None);
        for c in self.cands.canonical_order() {
            if self.cands.sets[c].is_disjoint(alive) {
                continue;
            }
            let s = self.cand_size(c, alive);
            if s > best.0 {
                best = (s, Some(c));
            }
        }
        best
    }

    fn cover_cost(&self, target: &FixedBitSet, mode: SolverMode) -> u64 {
        if target.count_ones(..) == 0 {
            return 0;
        }
        match mode {
            SolverMode::Exact => self.cands.exact_cover(target).0,
            SolverMode::Greedy => self.cands.greedy_cover(target).0,
        }
    }

    fn norm(&self, cost: u64) -> f64 {
        cost as f64 / self.space.j.len() as f64
    }

    /// Exact frontier for `size_inf`: super-level sets are level sets.
    fn sup_frontier(&self, mode: SolverMode) -> Vec<(f64, f64)> {
        let mut levels: Vec<f64> = self.vals.clone();
        levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
        levels.dedup();
        let mut pts = vec![(0.0, levels[0])];
        for (i, &v) in levels.iter().enumerate() {
            let mut set = FixedBitSet::with_capacity(self.vals.len());
            for (idx, &x) in self.vals.iter().enumerate() {
                if x >= v {
                    set.insert(idx);
                }
            }
            let next = levels.get(i + 1).copied().unwrap_or(0.0);
            pts.push((self.norm(self.cover_cost(&set, mode)), next));
        }
        pts
    }

    /// Exact frontier of (cover cost, remaining outer supremum) for a monotone size.
    fn exact_frontier(&self) -> Vec<(f64, f64)> {
        let all = self.full();
        let cap = self.cover_cost(&all, SolverMode::Exact);
        let order = self.cands.canonical_order();
        let mut memo: HashMap<FixedBitSet, u64> = HashMap::new();
        let mut pts: Vec<(u64, f64)> = vec![(cap, 0.0)];
        self.frontier_dfs(all, 0, cap, &order, &mut memo, &mut pts);
        pts.into_iter().map(|(c, g)| (self.norm(c), g)).collect()
    }

    fn frontier_dfs(
        &self,
        alive: FixedBitSet,
        cost: u64,
        cap: u64,
        order: &[usize],
        memo: &mut HashMap<FixedBitSet, u64>,
        pts: &mut Vec<(u64, f64)>,
    ) {
        if let Some(&c) = memo.get(&alive) {
            if c <= cost {
                return;
            }
        }
        memo.insert(alive.clone(), cost);
        let (g, arg) = self.outsup(&alive);
        pts.push((cost, g));
        let Some(v) = arg else { return };
        let mut hit = self.cands.sets[v].clone();
        hit.intersect_with(&alive);
        let mut branches: Vec<usize> = order.iter().copied().filter(|&c| !self.cands.sets[c].is_disjoint(&hit)).collect();
        branches.sort_by_key(|&c| self.cands.costs[c]);
        for c in branches {
            let nc = cost + self.cands.costs[c];
            if nc >= cap {
                continue;
            }
            let mut next = alive.clone();
            next.difference_with(&self.cands.sets[c]);
            self.frontier_dfs(next, nc, cap, order, memo, pts);
        }
    }

    /// Greedy peeling at up to 64 thresholds; an upper bound for the rearrangement.
    fn peeling_frontier(&self) -> Vec<(f64, f64)> {
        let all = self.full();
        let (top, _) = self.outsup(&all);
        let mut levels: Vec<f64> = (0..self.cands.len()).map(|c| self.cand_size(c, &all)).filter(|&s| s > 0.0).collect();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        let levels: Vec<f64> = if levels.len() > 64 {
            (0..64).map(|i| levels[i * (levels.len() - 1) / 63]).collect()
        } else {
            levels
        };
        let mut pts = vec![(0.0, top), (self.norm(self.peel(0.0, &all).0), 0.0)];
        for &tau in &levels {
            if tau >= top {
                continue;
            }
            pts.push((self.norm(self.peel(tau, &all).0), tau));
        }
        pts
    }

    /// Removes offending trees, longest top first, until the remaining outer
    /// supremum is at most `tau`. Returns the charged cost and the removed set.
    fn peel(&self, tau: f64, all: &FixedBitSet) -> (u64, FixedBitSet) {
        let order = self.cands.canonical_order();
        let mut alive = all.clone();
        let mut cost = 0u64;
        loop {
            let offender = order.iter().copied().find(|&c| !self.cands.sets[c].is_disjoint(&alive) && self.cand_size(c, &alive) > tau);
            match offender {
                Some(c) => {
                    alive.difference_with(&self.cands.sets[c]);
                    cost += self.cands.costs[c];
                }
                None => break,
            }
        }
        let mut removed = all.clone();
        removed.difference_with(&alive);
        (cost, removed)
    }
}

/// The rearrangement `F^{*,s}` of a tile function on an outer space; exact or greedy
/// according to the solver mode.
pub fn rearrangement(f: &TileFunction, space: &OuterSpace, kind: SizeKind) -> Rearrangement {
    let Some(prob) = LevelProblem::new(space, f, kind) else {
        return Rearrangement::zero();
    };
    let pts = match (kind, space.mode) {
        (SizeKind::Sup, mode) => prob.sup_frontier(mode),
        (_, SolverMode::Exact) => prob.exact_frontier(),
        (_, SolverMode::Greedy) => prob.peeling_frontier(),
    };
    Rearrangement::from_frontier(pts)
}

/// Outer supremum `sup_T s(F, T)`.
pub fn outer_sup(f: &TileFunction, space: &OuterSpace, kind: SizeKind) -> f64 {
    match LevelProblem::new(space, f, kind) {
        Some(prob) => prob.outsup(&prob.full()).0,
        None => 0.0,
    }
}

pub fn outer_lorentz_norm(f: &TileFunction, space: &OuterSpace, kind: SizeKind, p: f64, q: f64) -> Result<f64, TreeError> {
    if !(p > 0.0) {
        return Err(TreeError::BadExponent(p));
    }
    if !(q > 0.0) {
        return Err(TreeError::BadExponent(q));
    }
    if p.is_infinite() {
        return Ok(outer_sup(f, space, kind));
    }
    Ok(rearrangement(f, space, kind).lorentz(p, q))
}

/// `Y^{p,inf}` norm: the larger of the weak outer `L^p` and outer `L^inf` norms.
pub fn y_norm(f: &TileFunction, space: &OuterSpace, kind: SizeKind, p: f64) -> Result<f64, TreeError> {
    if !(p > 0.0) {
        return Err(TreeError::BadExponent(p));
    }
    let r = rearrangement(f, space, kind);
    Ok(r.lorentz(p, f64::INFINITY).max(r.steps[0].1))
}

/// Lower proxy for the `X^{p,inf}_a` norm: the supremum runs over the sets removed by
/// greedy peeling at every threshold and over `random_sets` seeded random subsets of
/// the support. Sound as a lower bound when the space is in exact mode.
pub fn x_norm<R: Rng>(
    f: &TileFunction,
    space: &OuterSpace,
    kind: SizeKind,
    p: f64,
    a: f64,
    random_sets: usize,
    rng: &mut R,
) -> Result<f64, TreeError> {
    if !(p > 0.0) || !(a > 0.0) || a > p {
        return Err(TreeError::BadExponent(if a > p { a } else { p }));
    }
    let Some(prob) = LevelProblem::new(space, f, kind) else { return Ok(0.0) };
    let all = prob.full();
    let mut family: Vec<FixedBitSet> = vec![all.clone()];
    let mut levels: Vec<f64> = (0..prob.cands.len()).map(|c| prob.cand_size(c, &all)).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    for tau in levels {
        let (_, removed) = prob.peel(tau, &all);
        if removed.count_ones(..) > 0 {
            family.push(removed);
        }
    }
    let m = prob.vals.len();
    for _ in 0..random_sets {
        let mut s = FixedBitSet::with_capacity(m);
        for i in 0..m {
            if rng.gen_bool(0.5) {
                s.insert(i);
            }
        }
        if s.count_ones(..) > 0 {
            family.push(s);
        }
    }
    let mut best = 0.0f64;
    let mut seen = BTreeSet::new();
    for set in family {
        let key: Vec<usize> = set.ones().collect();
        if !seen.insert(key) {
            continue;
        }
        let restricted = TileFunction::from_pairs(set.ones().map(|i| (prob.cands.tiles[i], prob.vals[i])));
        let mu = prob.norm(prob.cover_cost(&set, space.mode));
        let num = rearrangement(&restricted, space, kind).lorentz(a, f64::INFINITY);
        best = best.max(num / mu.powf(1.0 / a - 1.0 / p));
    }
    Ok(best)
}

/// Checks the covering lemma for the lacunary size: the outer supremum of
/// `size_{2,*}` of `F 1_P` is at most `2^{kappa/2}` times the largest
/// `size_{2,*}` of `F` on the maximal trees `T(I, xi)` of the given tops.
/// Returns `(lhs, rhs)`.
pub fn tree_cover_size_bound(f: &TileFunction, tiles: &[Tile], tops: &[TopData], space: &OuterSpace) -> Result<(f64, f64), TreeError> {
    for p in tiles {
        if !tops.iter().any(|t| t.admits(p, space.kappa, space.l)) {
            return Err(TreeError::Uncovered(p.encode()));
        }
    }
    let restricted = f.restrict(tiles);
    let lhs = outer_sup(&restricted, space, SizeKind::TwoStar);
    let rhs = tops
        .iter()
        .map(|top| {
            let tree = Tree::maximal(space.l, space.kappa, *top, tiles);
            tree_size(SizeKind::TwoStar, f, &tree)
        })
        .fold(0.0, f64::max);
    Ok((lhs, 2f64.powf(space.kappa as f64 / 2.0) * rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tiles<R: Rng>(l: u32, count: usize, r: &mut R) -> Vec<Tile> {
        let mut out = BTreeSet::new();
        while out.len() < count {
            let k = r.gen_range(0..=l);
            out.insert(Tile::new(k, r.gen_range(0..1u64 << (l - k)), r.gen_range(0..1u64 << k)));
        }
        out.into_iter().collect()
    }

    /// Exhaustive cover oracle: every subset of candidate tops.
    fn brute_measure(space: &OuterSpace, tiles: &[Tile]) -> f64 {
        let cands = Candidates::build(space, tiles, false);
        let n = cands.len();
        assert!(n <= 22);
        let mut best = u64::MAX;
        for mask in 0u32..(1u32 << n) {
            let mut cov = FixedBitSet::with_capacity(tiles.len());
            let mut cost = 0;
            for c in 0..n {
                if mask >> c & 1 == 1 {
                    cov.union_with(&cands.sets[c]);
                    cost += cands.costs[c];
                }
            }
            if cov.count_ones(..) == tiles.len() {
                best = best.min(cost);
            }
        }
        best as f64 / space.j.len() as f64
    }

    #[test]
    fn split_types_partitions() {
        let mut r = rng(1);
        let single = random_tree(6, 2, 4, 1, &mut r);
        let parts = single.split_types();
        assert_eq!(parts.iter().filter(|t| !t.is_empty()).count(), 1);
        let empty = Tree::new(6, 2, single.top, vec![]).unwrap();
        assert_eq!(empty.split_types().len(), 4);
        for _ in 0..20 {
            let t = random_tree(7, 2, 5, 20, &mut r);
            let parts = t.split_types();
            for p in &t.members {
                let hits: Vec<usize> = (0..4).filter(|&j| parts[j].members.contains(p)).collect();
                assert_eq!(hits.len(), 1);
                let j = hits[0] as u64;
                assert_eq!(p.freq(), p.freq().parent(2).child(2, j));
            }
            assert_eq!(parts.iter().map(|x| x.len()).sum::<usize>(), t.len());
        }
    }

    #[test]
    fn lac_ov_split() {
        let l = 6;
        let top = TopData { i: SpaceIv::new(5, 1), xi: 37 };
        let p1 = Tile::new(2, 8, 2); // w = bins 32..48 contains 37
        let p2 = Tile::new(3, 4, 4); // w = bins 32..40 contains 37
        let t = Tree::new(l, 1, top, vec![p1, p2]).unwrap();
        let (lac, ov) = t.split_lac_ov();
        assert!(lac.is_empty() && ov.len() == 2);
        let p3 = Tile::new(3, 4, 5); // bins 40..48, parent bins 32..48 contains 37
        let t = Tree::new(l, 1, top, vec![p3]).unwrap();
        let (lac, ov) = t.split_lac_ov();
        assert!(ov.is_empty() && lac.len() == 1);
        let mut r = rng(2);
        for _ in 0..20 {
            let t = random_tree(7, 1, 5, 15, &mut r);
            let (lac, ov) = t.split_lac_ov();
            for p in &t.members {
                let in_ov = p.freq().contains_bin(t.top.xi, 7);
                assert_eq!(ov.members.contains(p), in_ov);
                assert_eq!(lac.members.contains(p), !in_ov);
            }
        }
    }

    #[test]
    fn structure_split_properties() {
        let mut r = rng(3);
        let t = Tree::new(6, 2, TopData { i: SpaceIv::new(4, 0), xi: 3 }, vec![Tile::new(2, 0, 0), Tile::new(2, 1, 1)]).unwrap();
        assert_eq!(t.structure_split().iter().filter(|x| !x.is_empty()).count(), 1);
        let t1 = random_tree(7, 1, 6, 20, &mut r);
        assert_eq!(t1.structure_split()[0].members, t1.members);
        for kappa in 1..=3 {
            for _ in 0..50 {
                let t = random_tree(8, kappa, 6, 25, &mut r);
                assert!(t.satisfies_spectral_bound());
                assert!(t.check_structure());
            }
        }
    }

    #[test]
    fn lacunarity_fails_without_the_split() {
        // a 1-tree with nested frequency intervals at two scales of the same residue
        // class would break (i) only if the split were skipped for kappa = 2
        let l = 6;
        let top = TopData { i: SpaceIv::new(4, 0), xi: 0 };
        let a = Tile::new(2, 0, 1);
        let b = Tile::new(3, 0, 2);
        let t = Tree::new(l, 2, top, vec![a, b]).unwrap();
        let (lac, _) = t.split_lac_ov();
        assert!(!is_lacunary(&lac.members));
        assert!(t.check_structure());
    }

    #[test]
    fn outer_measure_examples() {
        let l = 6;
        let space = OuterSpace::torus(l, 1, SolverMode::Exact);
        assert_eq!(space.measure(&[]), 0.0);
        let p = Tile::new(3, 2, 5);
        assert!((space.measure(&[p]) - 8.0 / 64.0).abs() < 1e-15);
        assert!((space.with_mode(SolverMode::Greedy).measure(&[p]) - 8.0 / 64.0).abs() < 1e-15);
        let mut r = rng(4);
        for _ in 0..30 {
            let a = random_tiles(5, 8, &mut r);
            let sp = OuterSpace::torus(5, 1, SolverMode::Exact);
            let exact = sp.measure(&a);
            let greedy = sp.with_mode(SolverMode::Greedy).measure(&a);
            assert!(greedy >= exact - 1e-15);
            let cands = Candidates::build(&sp, &a, false);
            if cands.len() <= 22 {
                assert!((brute_measure(&sp, &a) - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn outer_measure_monotone_subadditive() {
        let mut r = rng(5);
        let sp = OuterSpace::torus(5, 2, SolverMode::Exact);
        for _ in 0..40 {
            let a = random_tiles(5, 6, &mut r);
            let b = random_tiles(5, 5, &mut r);
            let mut ab = a.clone();
            ab.extend(&b);
            let (ma, mb, mab) = (sp.measure(&a), sp.measure(&b), sp.measure(&ab));
            assert!(mab <= ma + mb + 1e-15);
            assert!(mab >= ma - 1e-15 && mab >= mb - 1e-15);
        }
    }

    #[test]
    fn local_space_measure_normalized_by_j() {
        let space = OuterSpace::new(6, SpaceIv::new(3, 1), 1, SolverMode::Exact);
        assert!((space.measure(&[Tile::new(1, 5, 0)]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn size_examples() {
        let l = 5;
        let top = TopData { i: SpaceIv::new(3, 0), xi: 0 };
        // tiles partitioning I_T at one scale, all with xi in their parents
        let vals: Vec<(Tile, f64)> = (0..4).map(|n| (Tile::new(1, n, 0), 0.7)).collect();
        assert!((size_p(&vals, 8, 2.0) - 0.7).abs() < 1e-15);
        let single = vec![(Tile::new(1, 2, 1), 0.9)];
        assert!((size_p(&single, 8, 3.0) - 0.9 * (2.0f64 / 8.0).powf(1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(size_of(SizeKind::TwoStar, &[], &top, l), 0.0);
        let mut r = rng(6);
        for _ in 0..40 {
            let t = random_tree(6, r.gen_range(1..=2), 5, 12, &mut r);
            let vals: Vec<(Tile, f64)> = t.members.iter().map(|p| (*p, r.gen_range(0.0..1.0))).collect();
            let dp = size_2_star(&vals, &t.top.i);
            let bf = size_2_star_bruteforce(&vals, &t.top.i);
            assert!((dp - bf).abs() < 1e-12, "{dp} vs {bf}");
            assert!(size_sup(&vals) <= dp + 1e-12);
        }
    }

    #[test]
    fn carleson_size_holder() {
        let mut r = rng(7);
        for _ in 0..100 {
            let t = random_tree(6, 1, 5, 12, &mut r);
            let f: Vec<(Tile, f64)> = t.members.iter().map(|p| (*p, r.gen_range(0.0..1.0))).collect();
            let g: Vec<(Tile, f64)> = t.members.iter().map(|p| (*p, r.gen_range(0.0..1.0))).collect();
            let fg: Vec<(Tile, f64)> = f.iter().zip(&g).map(|((p, a), (_, b))| (*p, a * b)).collect();
            let lhs = size_p(&fg, t.top.i.len(), 1.0);
            let rhs = 2.0 * size_2_star(&f, &t.top.i) * size_carleson(&g, &t.top, t.l);
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn sup_rearrangement_of_single_tile() {
        let l = 5;
        let p = Tile::new(2, 3, 1);
        let f = TileFunction::from_pairs([(p, 2.5)]);
        let space = OuterSpace::torus(l, 1, SolverMode::Exact);
        let r = rearrangement(&f, &space, SizeKind::Sup);
        let mu = 4.0 / 32.0;
        assert_eq!(r.steps, vec![(0.0, 2.5), (mu, 0.0)]);
        assert_eq!(r.superlevel(1.0), mu);
        assert_eq!(r.superlevel(2.5), 0.0);
        assert_eq!(r.value(0.1), 2.5);
        assert_eq!(r.value(mu), 0.0);
        let ind = TileFunction::from_pairs([(p, 1.0)]);
        let n = outer_lorentz_norm(&ind, &space, SizeKind::Sup, 3.0, f64::INFINITY).unwrap();
        assert!((n - mu.powf(1.0 / 3.0)).abs() < 1e-15);
        let z = TileFunction::from_pairs([(p, 0.0)]);
        assert_eq!(outer_lorentz_norm(&z, &space, SizeKind::P(1.0), 2.0, 2.0).unwrap(), 0.0);
        assert!(outer_lorentz_norm(&z, &space, SizeKind::P(1.0), 0.0, 2.0).is_err());
    }

    #[test]
    fn peeling_dominates_exact() {
        let mut r = rng(8);
        let l = 4;
        for _ in 0..15 {
            let tiles = random_tiles(l, 8, &mut r);
            let f = TileFunction::from_pairs(tiles.iter().map(|t| (*t, r.gen_range(0.1..1.0))));
            let space = OuterSpace::torus(l, 1, SolverMode::Exact);
            for kind in [SizeKind::P(1.0), SizeKind::TwoStar] {
                let ex = rearrangement(&f, &space, kind);
                let gr = rearrangement(&f, &space.with_mode(SolverMode::Greedy), kind);
                for i in 0..200 {
                    let t = i as f64 / 100.0;
                    assert!(gr.value(t) >= ex.value(t) - 1e-12);
                }
                // outer supremum agrees
                assert!((gr.steps[0].1 - ex.steps[0].1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_frontier_matches_bruteforce_on_tiny_sets() {
        // enumerate every union of candidate trees and read off the lower envelope
        let mut r = rng(9);
        let l = 3;
        for _ in 0..10 {
            let tiles = random_tiles(l, 5, &mut r);
            let f = TileFunction::from_pairs(tiles.iter().map(|t| (*t, r.gen_range(0.1..1.0))));
            let space = OuterSpace::torus(l, 1, SolverMode::Exact);
            let kind = SizeKind::P(1.0);
            let prob = LevelProblem::new(&space, &f, kind).unwrap();
            let cover = Candidates::build(&space, &prob.cands.tiles, false);
            let n = cover.len();
            if n > 16 {
                continue;
            }
            let mut pts = Vec::new();
            for mask in 0u32..(1 << n) {
                let mut alive = prob.full();
                let mut cost = 0;
                for c in 0..n {
                    if mask >> c & 1 == 1 {
                        alive.difference_with(&cover.sets[c]);
                        cost += cover.costs[c];
                    }
                }
                pts.push((prob.norm(cost), prob.outsup(&alive).0));
            }
            let brute = Rearrangement::from_frontier(pts);
            let ex = rearrangement(&f, &space, kind);
            assert_eq!(brute.steps.len(), ex.steps.len());
            for (a, b) in brute.steps.iter().zip(&ex.steps) {
                assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn x_norm_below_weak_norm() {
        let mut r = rng(10);
        let l = 4;
        for _ in 0..20 {
            let tiles = random_tiles(l, 6, &mut r);
            let f = TileFunction::from_pairs(tiles.iter().map(|t| (*t, r.gen_range(0.0..1.0))));
            let space = OuterSpace::torus(l, 1, SolverMode::Exact);
            let p = 3.0;
            let x = x_norm(&f, &space, SizeKind::Sup, p, 2.0, 20, &mut r).unwrap();
            let w = outer_lorentz_norm(&f, &space, SizeKind::Sup, p, f64::INFINITY).unwrap();
            assert!(x <= 2f64.powf(1.0 / p) * w + 1e-12);
            let y = y_norm(&f, &space, SizeKind::Sup, p).unwrap();
            assert!(y >= w);
        }
    }

    #[test]
    fn tree_cover_lemma_examples() {
        let l = 5;
        let space = OuterSpace::torus(l, 1, SolverMode::Exact);
        let empty = TileFunction::new();
        let (a, b) = tree_cover_size_bound(&empty, &[], &[], &space).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let mut r = rng(11);
        for _ in 0..10 {
            let t = random_tree(l, 1, 5, 10, &mut r);
            let f = TileFunction::from_pairs(t.members.iter().map(|p| (*p, r.gen_range(0.0..1.0))));
            let (lhs, rhs) = tree_cover_size_bound(&f, &t.members, &[t.top], &space).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
        let p = Tile::new(1, 0, 0);
        assert!(tree_cover_size_bound(&empty, &[p], &[TopData { i: SpaceIv::new(1, 3), xi: 0 }], &space).is_err());
    }
}
