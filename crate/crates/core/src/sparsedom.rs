//! Stopping-time collections and the sparse bound for the Carleson model form.

use crate::dyadic::Tile;
use crate::signal::{grid_block_offset, maximal_over_grids, Signal};
use crate::treespace::{outer_lorentz_norm, x_norm, y_norm, OuterSpace, SizeKind, SolverMode, SpaceIv, TreeError};
use crate::wavepackets::{local_tile_norm, local_tile_norm_from_maximal, model_form_from, transform_a_set, transform_w_set, TileFunction, WaveletSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("need at least two functions, got {0}")]
    ShortTuple(usize),
    #[error("exponent {0} is not admissible")]
    BadExponent(f64),
    #[error("functions of different lengths")]
    LengthMismatch,
    #[error("epsilon must lie in (0, 1/2], got {0}")]
    BadEpsilon(f64),
    #[error("support of f{0} is not inside 3Q for Q = {1:?}")]
    Support(usize, SpaceIv),
    #[error("the initial intervals do not partition the torus")]
    NotPartition,
    #[error("packing fails at {0:?} with threshold {1}")]
    Packing(SpaceIv, f64),
    #[error("zero denominator: one of the functions vanishes")]
    ZeroDenominator,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Grids over which maximal averages are taken.
const GRIDS: [u8; 3] = [0, 1, 2];

/// Candidate thresholds tried, smallest first, when none is given.
pub const THETA_LADDER: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];

fn check_tuple(fs: &[&[f64]], p: &[f64]) -> Result<usize, SparseError> {
    if fs.len() < 2 || p.len() != fs.len() {
        return Err(SparseError::ShortTuple(fs.len().min(p.len())));
    }
    if let Some(&q) = p.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
        return Err(SparseError::BadExponent(q));
    }
    let n = fs[0].len();
    if fs.iter().any(|f| f.len() != n) || !n.is_power_of_two() {
        return Err(SparseError::LengthMismatch);
    }
    Ok(n)
}

/// `M_p(f_1, ..., f_m)(x) = sup_{Q ni x} prod_j <f_j>_{p_j, Q}` over the members of the
/// three shifted grids at every scale of the torus.
pub fn sparse_maximal(fs: &[&[f64]], p: &[f64]) -> Result<Vec<f64>, SparseError> {
    let n = check_tuple(fs, p)?;
    let l = n.trailing_zeros();
    let prefixes: Vec<Vec<f64>> = fs
        .iter()
        .zip(p)
        .map(|(f, &q)| {
            let mut pre = vec![0.0; 2 * n + 1];
            for i in 0..2 * n {
                pre[i + 1] = pre[i] + f[i % n].abs().powf(q);
            }
            pre
        })
        .collect();
    let mut out = vec![0.0f64; n];
    for g in GRIDS {
        for k in 0..=l {
            let len = 1usize << k;
            let r = grid_block_offset(g, k);
            for b in 0..n / len {
                let s = r + b * len;
                let v: f64 = prefixes
                    .iter()
                    .zip(p)
                    .map(|(pre, &q)| ((pre[s + len] - pre[s]) / len as f64).max(0.0).powf(1.0 / q))
                    .product();
                for i in s..s + len {
                    let x = i % n;
                    out[x] = out[x].max(v);
                }
            }
        }
    }
    Ok(out)
}

/// Direct evaluation: for each sample, every block containing it is averaged from
/// scratch. The oracle for [`sparse_maximal`].
pub fn sparse_maximal_direct(fs: &[&[f64]], p: &[f64]) -> Result<Vec<f64>, SparseError> {
    let n = check_tuple(fs, p)?;
    let l = n.trailing_zeros();
    Ok((0..n)
        .map(|x| {
            let mut best = 0.0f64;
            for g in GRIDS {
                for k in 0..=l {
                    let len = 1usize << k;
                    let r = grid_block_offset(g, k);
                    let start = r + ((x + n - r) % n) / len * len;
                    let v: f64 = fs
                        .iter()
                        .zip(p)
                        .map(|(f, &q)| {
                            let s: f64 = (start..start + len).map(|i| f[i % n].abs().powf(q)).sum();
                            (s / len as f64).powf(1.0 / q)
                        })
                        .product();
                    best = best.max(v);
                }
            }
            best
        })
        .collect())
}

/// Samples of the arc `3S` of the torus, each listed once.
fn triple(s: &SpaceIv, n: usize) -> Vec<usize> {
    let len = s.len() as usize;
    if 3 * len >= n {
        return (0..n).collect();
    }
    (0..3 * len).map(|i| (s.left() as usize + n + i - len) % n).collect()
}

fn average(f: &[f64], idx: &[usize], q: f64) -> f64 {
    (idx.iter().map(|&x| f[x].abs().powf(q)).sum::<f64>() / idx.len() as f64).powf(1.0 / q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopNode {
    pub s: SpaceIv,
    pub generation: usize,
    pub parent: Option<usize>,
    /// The stopping children `B(S)`.
    pub children: Vec<SpaceIv>,
    /// `|E_S|`.
    pub e_len: u64,
    /// `<f_j>_{q_j, 3S}`.
    pub averages: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub l: u32,
    pub eps: f64,
    pub theta: f64,
    pub q: Vec<f64>,
    pub nodes: Vec<StopNode>,
    /// `max_S sup_{x in E_S} M_{q_j} f_j(x) / <f_j>_{q_j,3S}` over nodes with a nonzero
    /// average.
    pub stopping_constants: Vec<f64>,
    /// Nodes where some average vanishes, excluded from the constants above.
    pub degenerate: usize,
}

impl SparseCollection {
    pub fn generations(&self) -> usize {
        self.nodes.iter().map(|s| s.generation + 1).max().unwrap_or(0)
    }

    /// Deepest stopping interval, as `L - min k`.
    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|s| self.l - s.s.k).max().unwrap_or(0)
    }

    /// Index of the node owning `P`: the deepest `S` containing `I_P` such that `I_P`
    /// is not inside a stopping child of `S`.
    pub fn owner(&self, p: &Tile) -> Option<usize> {
        let ip = SpaceIv::of_tile(p);
        let mut best: Option<usize> = None;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.s.contains(&ip) && !node.children.iter().any(|b| b.contains(&ip)) {
                best = match best {
                    Some(j) if self.nodes[j].s.k <= node.s.k => Some(j),
                    _ => Some(i),
                };
            }
        }
        best
    }

    /// Checks disjointness of the sets `E_S`, the packing `sum |B| <= |S|/4`, and
    /// `|S| <= 2 |E_S|`.
    pub fn check(&self) -> bool {
        let n = 1usize << self.l;
        let mut owner = vec![0u32; n];
        for node in &self.nodes {
            let packed: u64 = node.children.iter().map(|b| b.len()).sum();
            if 4 * packed > node.s.len() || node.s.len() > 2 * node.e_len {
                return false;
            }
            let mut e = 0;
            for x in node.s.left()..node.s.left() + node.s.len() {
                if !node.children.iter().any(|b| b.contains(&SpaceIv::new(0, x))) {
                    owner[x as usize] += 1;
                    e += 1;
                }
            }
            if e != node.e_len {
                return false;
            }
        }
        owner.iter().all(|&c| c <= 1)
    }
}

/// Maximal dyadic subintervals of `s` made only of flagged samples.
fn maximal_flagged(s: &SpaceIv, flag: &[bool]) -> Vec<SpaceIv> {
    let mut out = Vec::new();
    let mut stack = vec![*s];
    while let Some(i) = stack.pop() {
        let (a, b) = (i.left() as usize, (i.left() + i.len()) as usize);
        let cnt = flag[a..b].iter().filter(|&&v| v).count();
        if cnt == b - a {
            out.push(i);
        } else if cnt > 0 && i.k > 0 {
            stack.push(SpaceIv::new(i.k - 1, 2 * i.n + 1));
            stack.push(SpaceIv::new(i.k - 1, 2 * i.n));
        }
    }
    out.sort_by_key(|b| b.left());
    out
}

fn build(f: &[&[f64]], q: &[f64], roots: &[SpaceIv], theta: f64, l: u32) -> Result<Vec<StopNode>, SparseError> {
    let n = 1usize << l;
    let mut nodes: Vec<StopNode> = Vec::new();
    let mut frontier: Vec<(SpaceIv, usize, Option<usize>)> = roots.iter().map(|r| (*r, 0, None)).collect();
    while !frontier.is_empty() {
        let computed: Vec<Result<(Vec<SpaceIv>, u64, Vec<f64>), SparseError>> = frontier
            .par_iter()
            .map(|(s, _, _)| {
                let idx = triple(s, n);
                let averages: Vec<f64> = f.iter().zip(q).map(|(g, &qj)| average(g, &idx, qj)).collect();
                let mut flag = vec![false; n];
                for j in 0..f.len() {
                    if averages[j] == 0.0 {
                        continue;
                    }
                    let mut local = vec![0.0; n];
                    for &x in &idx {
                        local[x] = f[j][x];
                    }
                    let m = maximal_over_grids(&local, q[j], &GRIDS);
                    for x in s.left()..s.left() + s.len() {
                        if m[x as usize] > theta * averages[j] {
                            flag[x as usize] = true;
                        }
                    }
                }
                let children = maximal_flagged(s, &flag);
                let packed: u64 = children.iter().map(|b| b.len()).sum();
                if 4 * packed > s.len() {
                    return Err(SparseError::Packing(*s, theta));
                }
                Ok((children, s.len() - packed, averages))
            })
            .collect();
        let mut next = Vec::new();
        for ((s, generation, parent), res) in frontier.into_iter().zip(computed) {
            let (children, e_len, averages) = res?;
            let id = nodes.len();
            for b in &children {
                next.push((*b, generation + 1, Some(id)));
            }
            nodes.push(StopNode { s, generation, parent, children, e_len, averages });
        }
        frontier = next;
    }
    Ok(nodes)
}

/// The stopping collection for `(f1, f2)` with exponents `q = (1/(1-eps), 1)` started
/// from the partition `roots` (the whole torus when empty). With `theta = None` the
/// smallest threshold of [`THETA_LADDER`] achieving the packing is used.
pub fn stopping_collection(f1: &[f64], f2: &[f64], roots: &[SpaceIv], eps: f64, theta: Option<f64>) -> Result<SparseCollection, SparseError> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(SparseError::BadEpsilon(eps));
    }
    stopping_collection_q(&[f1, f2], &[1.0 / (1.0 - eps), 1.0], roots, eps, theta)
}

/// The same construction for an arbitrary tuple with exponents `q`; `eps` is only
/// recorded.
pub fn stopping_collection_q(
    fs: &[&[f64]],
    q: &[f64],
    roots: &[SpaceIv],
    eps: f64,
    theta: Option<f64>,
) -> Result<SparseCollection, SparseError> {
    let n = check_tuple(fs, q)?;
    let l = n.trailing_zeros();
    let roots: Vec<SpaceIv> = if roots.is_empty() { vec![SpaceIv::new(l, 0)] } else { roots.to_vec() };
    let mut cover = vec![0u32; n];
    for r in &roots {
        for x in r.left()..r.left() + r.len() {
            cover[x as usize] += 1;
        }
    }
    if cover.iter().any(|&c| c != 1) {
        return Err(SparseError::NotPartition);
    }
    for (j, f) in fs.iter().enumerate() {
        for r in &roots {
            let mut inside = vec![false; n];
            for x in triple(r, n) {
                inside[x] = true;
            }
            if f.iter().enumerate().any(|(x, v)| *v != 0.0 && !inside[x]) {
                return Err(SparseError::Support(j + 1, *r));
            }
        }
    }
    let (theta, nodes) = match theta {
        Some(t) => (t, build(fs, q, &roots, t, l)?),
        None => {
            let mut last = None;
            let mut found = None;
            for t in THETA_LADDER {
                match build(fs, q, &roots, t, l) {
                    Ok(nodes) => {
                        found = Some((t, nodes));
                        break;
                    }
                    Err(e) => last = Some(e),
                }
            }
            match found {
                Some(v) => v,
                None => return Err(last.expect("ladder is not empty")),
            }
        }
    };
    let maximal: Vec<Vec<f64>> = fs.iter().zip(q).map(|(f, &qj)| maximal_over_grids(f, qj, &GRIDS)).collect();
    let mut stopping_constants = vec![0.0f64; fs.len()];
    let mut degenerate = 0;
    for node in &nodes {
        if node.averages.iter().any(|&a| a == 0.0) {
            degenerate += 1;
            continue;
        }
        for j in 0..fs.len() {
            for x in node.s.left()..node.s.left() + node.s.len() {
                if !node.children.iter().any(|b| b.contains(&SpaceIv::new(0, x))) {
                    stopping_constants[j] = stopping_constants[j].max(maximal[j][x as usize] / node.averages[j]);
                }
            }
        }
    }
    Ok(SparseCollection { l, eps, theta, q: q.to_vec(), nodes, stopping_constants, degenerate })
}

/// Per-node summary of the sparse pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub s: SpaceIv,
    pub generation: usize,
    pub tiles: usize,
    /// `C_{P(S)}(f1, f2)`.
    pub form: f64,
    /// `[f_j]_{q_j, P(S)} / <f_j>_{q_j, 3S}`.
    pub cons: [f64; 2],
    /// `||W[f1] 1_{P(S)}||_{X_2^{2/eps, inf}(S, size_{2,*})}`, when requested.
    pub x_norm: Option<f64>,
    /// `||A[f2] 1_{P(S)}||_{Y^{1, inf}(S, size_C)}`, when requested.
    pub y_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseReport {
    pub eps: f64,
    pub theta: f64,
    pub form: f64,
    pub maximal_l1: f64,
    /// `eps C_P(f1, f2) / ||M_{(1/(1-eps), 1)}(f1, f2)||_1`.
    pub ratio: f64,
    pub generations: usize,
    pub max_depth: u32,
    pub stopping_constants: Vec<f64>,
    /// `max_S` of [`NodeReport::cons`] over nodes with nonzero averages.
    pub cons_constants: [f64; 2],
    /// `|sum_S C_{P(S)} - C_P| / C_P`.
    pub partition_defect: f64,
    pub nodes: Vec<NodeReport>,
}

/// Options for [`sparse_ratio`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseOptions {
    pub theta: Option<f64>,
    /// Outer norms per node in the given solver mode; skipped when `None`.
    pub norms: Option<SolverMode>,
    pub seed: u64,
}

impl Default for SparseOptions {
    fn default() -> Self {
        SparseOptions { theta: None, norms: None, seed: 0 }
    }
}

pub fn sparse_ratio(tiles: &[Tile], f1: &Signal, f2: &Signal, eps: f64, nfun: &[i64], opts: SparseOptions) -> Result<SparseReport, SparseError> {
    if f1.is_zero() || f2.is_zero() {
        return Err(SparseError::ZeroDenominator);
    }
    let a1 = f1.abs();
    let a2 = f2.abs();
    let coll = stopping_collection(&a1, &a2, &[], eps, opts.theta)?;
    let spec = WaveletSpec::default();
    let w = transform_w_set(f1, tiles, &spec);
    let a = transform_a_set(f2, tiles, nfun, &spec);
    let form = model_form_from(&w, &a);
    let q = coll.q.clone();
    let maximal = sparse_maximal(&[&a1, &a2], &q)?;
    let maximal_l1: f64 = maximal.iter().sum();
    let mut parts: Vec<Vec<Tile>> = vec![Vec::new(); coll.nodes.len()];
    for p in tiles {
        let o = coll.owner(p).expect("the roots cover every tile");
        parts[o].push(*p);
    }
    let mq = [crate::signal::maximal_function(&a1, q[0]), crate::signal::maximal_function(&a2, q[1])];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut nodes = Vec::with_capacity(coll.nodes.len());
    let mut cons_constants = [0.0f64; 2];
    let mut total = 0.0;
    for (node, part) in coll.nodes.iter().zip(&parts) {
        let wp = w.restrict(part);
        let ap = a.restrict(part);
        let f_s = model_form_from(&wp, &ap);
        total += f_s;
        let mut cons = [0.0; 2];
        for j in 0..2 {
            let v = local_tile_norm_from_maximal(&mq[j], part);
            cons[j] = if part.is_empty() { 0.0 } else if node.averages[j] > 0.0 { v / node.averages[j] } else { f64::INFINITY };
            if node.averages.iter().all(|&a| a > 0.0) {
                cons_constants[j] = cons_constants[j].max(cons[j]);
            }
        }
        let (xn, yn) = match opts.norms {
            Some(mode) if !part.is_empty() => {
                let space = OuterSpace::new(coll.l, node.s, 1, mode);
                (
                    Some(x_norm(&wp, &space, SizeKind::TwoStar, 2.0 / eps, 2.0, 4, &mut rng)?),
                    Some(y_norm(&ap, &space, SizeKind::Carleson, 1.0)?),
                )
            }
            _ => (None, None),
        };
        nodes.push(NodeReport { s: node.s, generation: node.generation, tiles: part.len(), form: f_s, cons, x_norm: xn, y_norm: yn });
    }
    let partition_defect = if form > 0.0 { (total - form).abs() / form } else { total.abs() };
    Ok(SparseReport {
        eps,
        theta: coll.theta,
        form,
        maximal_l1,
        ratio: eps * form / maximal_l1,
        generations: coll.generations(),
        max_depth: coll.max_depth(),
        stopping_constants: coll.stopping_constants,
        cons_constants,
        partition_defect,
        nodes,
    })
}

/// Which embedding inequality [`embedding_ratio`] measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    /// `||W[f] 1_P||_{Y^{2,inf}(size_{2,*})} / [f]_{2,P}`.
    W2,
    /// `||W[f] 1_P||_{X_2^{tp', inf}(size_{2,*})} / [f]_{p,P}`.
    Wp,
    /// `||A[f] 1_P||_{L^{1,inf}(size_C)} / [f]_{1,P}`.
    A1,
    /// `||A[f] 1_P||_{Y^{p,inf}(size_C)} / [f]_{1,P}`.
    Ap,
}

#[derive(Clone, Debug)]
pub struct EmbeddingSetup<'a> {
    pub kappa: u32,
    pub mode: SolverMode,
    /// Linearizing function for the `A` kinds.
    pub nfun: Option<&'a [i64]>,
    pub random_sets: usize,
    pub seed: u64,
}

/// Empirical ratio of the named embedding on the local tile space over `J`.
pub fn embedding_ratio(
    f: &Signal,
    tiles: &[Tile],
    j: SpaceIv,
    p: f64,
    t: f64,
    kind: EmbeddingKind,
    setup: &EmbeddingSetup,
) -> Result<f64, SparseError> {
    if !(p >= 1.0 && p.is_finite()) || (kind == EmbeddingKind::Wp && !(p > 1.0 && p <= 2.0 && t > 1.0)) {
        return Err(SparseError::BadExponent(p));
    }
    let l = f.l();
    let tiles: Vec<Tile> = tiles.iter().filter(|t| j.contains_tile(t)).copied().collect();
    if f.is_zero() || tiles.is_empty() {
        return Ok(0.0);
    }
    let spec = WaveletSpec::default();
    let kappa = match kind {
        EmbeddingKind::A1 | EmbeddingKind::Ap => 1,
        _ => setup.kappa,
    };
    let space = OuterSpace::new(l, j, kappa, setup.mode);
    let abs = f.abs();
    let (num, den) = match kind {
        EmbeddingKind::W2 => {
            let w = transform_w_set(f, &tiles, &spec);
            (y_norm(&w, &space, SizeKind::TwoStar, 2.0)?, local_tile_norm(&abs, &tiles, 2.0))
        }
        EmbeddingKind::Wp => {
            let w = transform_w_set(f, &tiles, &spec);
            let target = t * p / (p - 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            (x_norm(&w, &space, SizeKind::TwoStar, target, 2.0, setup.random_sets, &mut rng)?, local_tile_norm(&abs, &tiles, p))
        }
        EmbeddingKind::A1 | EmbeddingKind::Ap => {
            let nfun = setup.nfun.ok_or(SparseError::BadExponent(p))?;
            let a: TileFunction = transform_a_set(f, &tiles, nfun, &spec);
            let num = if kind == EmbeddingKind::A1 {
                outer_lorentz_norm(&a, &space, SizeKind::Carleson, 1.0, f64::INFINITY)?
            } else {
                y_norm(&a, &space, SizeKind::Carleson, p)?
            };
            (num, local_tile_norm(&abs, &tiles, 1.0))
        }
    };
    Ok(if num == 0.0 { 0.0 } else { num / den })
}
