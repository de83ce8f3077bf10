use crate::error::{finite, numerical, schema, CliError, CliResult};
use crate::signals::{Family, SignalSpec};
use crate::svg::{line_plot, Series};
use crate::table::{num, Table};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tilebench::dyadic::{DyadicGrid, Exact, Tile, Tiling};
use tilebench::multifreq::{gb_split, loglog_slope, tail_decay_sweep, GbParams, GbReport};
use tilebench::rank1::{
    build_eta_from_gamma, family_tiles, random_one_tree, rank1_sparse_ratio, structure_check, tree_estimate_check, FamilyOptions,
    GammaFamily, GammaParams, Rank1Error, Rank1Map,
};
use tilebench::signal::{carleson_max, strong_lp_norm, weak_lorentz_norm, CarlesonMode, Multiplier, Signal};
use tilebench::sparsedom::{embedding_ratio, sparse_ratio, EmbeddingKind, EmbeddingSetup, SparseOptions};
use tilebench::treespace::{SolverMode, SpaceIv, TopData};

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.into()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_svg(path: &Path, svg: &str) -> CliResult<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

fn check_p_grid(ps: &[f64], lo_open: f64, hi: f64) -> CliResult<()> {
    if ps.is_empty() {
        return Err(CliError::Schema("empty p grid".into()));
    }
    match ps.iter().find(|&&p| !(p > lo_open && p <= hi)) {
        Some(p) => Err(CliError::Schema(format!("p = {p} outside ({lo_open}, {hi}]"))),
        None => Ok(()),
    }
}

fn check_eps_grid(eps: &[f64]) -> CliResult<()> {
    if eps.is_empty() {
        return Err(CliError::Schema("empty epsilon grid".into()));
    }
    match eps.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
        Some(e) => Err(CliError::Schema(format!("epsilon = {e} outside (0, 1/2]"))),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Greedy,
}

impl From<Mode> for SolverMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => SolverMode::Exact,
            Mode::Greedy => SolverMode::Greedy,
        }
    }
}

// ---------------------------------------------------------------- grid

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid index g in {0, 1, 2}; grid g is shifted by g/3 of a unit at each scale.
    #[arg(long, default_value_t = 0)]
    pub shift: u8,
    #[arg(long, default_value_t = -2, allow_hyphen_values = true)]
    pub k_min: i32,
    #[arg(long, default_value_t = 4)]
    pub k_max: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn grid(a: &GridArgs) -> CliResult<()> {
    if a.shift > 2 || a.k_min > a.k_max || a.k_max - a.k_min > 12 || a.k_max > 20 {
        return Err(CliError::Schema("need shift <= 2, k_min <= k_max, k_max <= 20 and at most 13 scales".into()));
    }
    let g = DyadicGrid::new(a.shift, a.k_min, a.k_max);
    let mut t = Table::new(&["interval", "k", "left", "length"]);
    let mut all = Vec::new();
    for k in a.k_min..=a.k_max {
        let members = g.members_at(k);
        let covered = Exact(members.iter().map(|m| m.len().0).sum());
        if covered != g.torus_len() {
            return Err(CliError::Invariant(format!("scale {k} does not tile the torus")));
        }
        for m in &members {
            t.push(vec![m.encode(), k.to_string(), num(m.left().to_f64()), num(m.len().to_f64())]);
        }
        all.extend(members);
    }
    let bad = all
        .par_iter()
        .enumerate()
        .find_first(|(i, x)| all[i + 1..].iter().any(|y| x.intersects_geom(y) && !(x.contains_geom(y) || y.contains_geom(x))));
    if let Some((_, x)) = bad {
        return Err(CliError::Invariant(format!("{x} overlaps a member of the grid without nesting")));
    }
    t.emit(a.out.as_deref())
}

// ---------------------------------------------------------------- carleson

#[derive(Debug, Args)]
pub struct CarlesonArgs {
    #[command(flatten)]
    pub signal: SignalSpec,
    #[arg(long, value_delimiter = ',', default_value = "1.1,1.2,1.4,1.7,2.0")]
    pub p_grid: Vec<f64>,
    /// Number of independent signals drawn from the family.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log-log plot of the ratio against 1/(p-1).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn carleson(a: &CarlesonArgs) -> CliResult<()> {
    a.signal.validate()?;
    check_p_grid(&a.p_grid, 1.0, f64::INFINITY)?;
    if a.count == 0 {
        return Err(CliError::Schema("count must be positive".into()));
    }
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let f = a.signal.generate(i)?;
            let cf = carleson_max(&f, &Multiplier::positive_half(), CarlesonMode::Pruned).magnitudes;
            let abs = f.abs();
            a.p_grid
                .iter()
                .map(|&p| {
                    let weak = finite("weak norm", weak_lorentz_norm(&cf, p, None).map_err(numerical)?)?;
                    let strong = strong_lp_norm(&abs, p, None);
                    if strong == 0.0 {
                        return Err(CliError::Numerical("the signal vanishes".into()));
                    }
                    Ok((weak, strong, weak / strong))
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(&["signal", "p", "weak_norm", "lp_norm", "ratio", "ratio_times_p_minus_1"]);
    let mut series = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut pts = Vec::new();
        for (&p, &(weak, strong, ratio)) in a.p_grid.iter().zip(r) {
            t.push(vec![i.to_string(), num(p), num(weak), num(strong), num(ratio), num(ratio * (p - 1.0))]);
            pts.push((1.0 / (p - 1.0), ratio));
        }
        series.push(Series { name: format!("signal {i}"), points: pts });
    }
    t.emit(a.out.as_deref())?;
    if let Some(path) = &a.svg {
        write_svg(path, &line_plot("Carleson weak-type ratio", "1/(p-1)", "R(p)", &series, true))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- embed

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    W2,
    Wp,
    A1,
    Ap,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub signal: SignalSpec,
    #[arg(long, value_enum, default_value_t = Kind::Wp)]
    pub kind: Kind,
    #[arg(long, value_delimiter = ',', default_value = "1.05,1.1,1.2,1.5,2.0")]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1)]
    pub kappa: u32,
    #[arg(long, value_enum, default_value_t = Mode::Greedy)]
    pub mode: Mode,
    /// Only tiles of scale 2^k with k >= min_scale enter the tile set.
    #[arg(long, default_value_t = 3)]
    pub min_scale: u32,
    /// Random subsets added to the level-set family of the X norm.
    #[arg(long, default_value_t = 8)]
    pub random_sets: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn embed(a: &EmbedArgs) -> CliResult<()> {
    a.signal.validate()?;
    let l = a.signal.l;
    if l > 8 {
        return Err(CliError::Schema("embed works on the full tile set and needs L <= 8".into()));
    }
    if a.min_scale > l {
        return Err(CliError::Schema(format!("min scale {} exceeds L = {l}", a.min_scale)));
    }
    match a.kind {
        Kind::Wp => {
            check_p_grid(&a.p_grid, 1.0, 2.0)?;
            if !(a.t > 1.0) {
                return Err(CliError::Schema("t must exceed 1".into()));
            }
        }
        _ => {
            if let Some(p) = a.p_grid.iter().find(|&&p| !(p >= 1.0 && p.is_finite())) {
                return Err(CliError::Schema(format!("p = {p} must be finite and at least 1")));
            }
        }
    }
    let f = a.signal.generate(0)?;
    let tiles: Vec<Tile> = Tiling::new(l).all_tiles().into_iter().filter(|t| t.k >= a.min_scale).collect();
    let nfun = carleson_max(&f, &Multiplier::positive_half(), CarlesonMode::Pruned).argmax;
    let kind = match a.kind {
        Kind::W2 => EmbeddingKind::W2,
        Kind::Wp => EmbeddingKind::Wp,
        Kind::A1 => EmbeddingKind::A1,
        Kind::Ap => EmbeddingKind::Ap,
    };
    let setup = EmbeddingSetup { kappa: a.kappa, mode: a.mode.into(), nfun: Some(&nfun), random_sets: a.random_sets, seed: a.signal.seed };
    let ratios: Vec<f64> = a
        .p_grid
        .par_iter()
        .map(|&p| finite("embedding ratio", embedding_ratio(&f, &tiles, SpaceIv::new(l, 0), p, a.t, kind, &setup).map_err(numerical)?))
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(&["kind", "p", "t", "ratio"]);
    let name = format!("{:?}", a.kind).to_lowercase();
    for (&p, r) in a.p_grid.iter().zip(ratios) {
        t.push(vec![name.clone(), num(p), num(a.t), num(r)]);
    }
    t.emit(a.out.as_deref())
}

// ---------------------------------------------------------------- decompose

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub signal: SignalSpec,
    #[arg(long, default_value_t = 4)]
    pub tops: usize,
    #[arg(long, default_value_t = 20)]
    pub tiles_per_top: usize,
    #[arg(long, default_value_t = 1)]
    pub kappa: u32,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub k_grid: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-K split reports as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
}

#[derive(Serialize)]
struct DecomposeReport {
    slope: f64,
    tops: Vec<TopData>,
    tiles: usize,
    splits: Vec<GbReport>,
    max_reconstruction_error: f64,
}

/// Tops at scales in the upper half of the range, each with tiles up to three
/// scales below it that share its frequency point.
fn tree_layout<R: Rng>(l: u32, tops: usize, per_top: usize, rng: &mut R) -> (Vec<TopData>, Vec<Tile>) {
    let lo = (l / 2).max(3);
    let mut out_tops = Vec::new();
    let mut tiles = Vec::new();
    for _ in 0..tops {
        let tk = rng.gen_range(lo..=l);
        let top = TopData { i: SpaceIv::new(tk, rng.gen_range(0..1u64 << (l - tk))), xi: rng.gen_range(0..1u64 << l) };
        for _ in 0..per_top {
            let k = rng.gen_range(tk - 3..=tk);
            let n = (top.i.n << (tk - k)) + rng.gen_range(0..1u64 << (tk - k));
            tiles.push(Tile::new(k, n, top.xi >> (l - k)));
        }
        out_tops.push(top);
    }
    tiles.sort();
    tiles.dedup();
    (out_tops, tiles)
}

pub fn decompose(a: &DecomposeArgs) -> CliResult<()> {
    a.signal.validate()?;
    let l = a.signal.l;
    if l < 6 || a.tops == 0 || a.tiles_per_top == 0 {
        return Err(CliError::Schema("decompose needs L >= 6 and at least one top and tile".into()));
    }
    if !(a.p > 1.0 && a.p <= 2.0 && a.t > 1.0) || a.k_grid.is_empty() || a.k_grid.iter().any(|k| !(*k >= 1.0)) {
        return Err(CliError::Schema("need 1 < p <= 2, t > 1 and dilations K >= 1".into()));
    }
    let f = a.signal.generate(0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.signal.seed);
    rng.set_stream(1 << 32);
    let (tops, tiles) = tree_layout(l, a.tops, a.tiles_per_top, &mut rng);
    let sweep = tail_decay_sweep(&f, &tiles, &tops, a.kappa, &a.k_grid).map_err(numerical)?;
    let splits: Vec<(GbReport, f64)> = a
        .k_grid
        .par_iter()
        .map(|&k| {
            let params = GbParams { count: 1.0, p: a.p, t: a.t, kappa: a.kappa, k: Some(k) };
            let s = gb_split(&f, &tiles, &tops, params).map_err(numerical)?;
            let back = s.good.add(&s.bad);
            let err = back.samples().iter().zip(f.samples()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            Ok((s.report, err))
        })
        .collect::<CliResult<_>>()?;
    let max_err = splits.iter().map(|s| s.1).fold(0.0, f64::max);
    let mut t = Table::new(&["K", "tail_ratio", "good_ratio", "reconstruction_error"]);
    for ((k, r), (rep, err)) in sweep.iter().zip(&splits) {
        t.push(vec![num(*k), num(*r), num(rep.good_ratio), num(*err)]);
    }
    t.emit(a.out.as_deref())?;
    let slope = loglog_slope(&sweep);
    if let Some(path) = &a.report_json {
        let rep = DecomposeReport { slope, tops, tiles: tiles.len(), splits: splits.into_iter().map(|s| s.0).collect(), max_reconstruction_error: max_err };
        write_json(path, &rep)?;
    }
    if max_err > 1e-12 {
        return Err(CliError::Invariant(format!("g + b differs from f by {max_err:e}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- sparse-check

#[derive(Debug, Args)]
pub struct SparseArgs {
    /// f1 is signal 0 and f2 signal 1 of this family.
    #[command(flatten)]
    pub signal: SignalSpec,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.125,0.0625,0.03125")]
    pub eps_grid: Vec<f64>,
    /// Stopping threshold; calibrated automatically when absent.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full reports with per-node detail.
    #[arg(long)]
    pub detail_json: Option<PathBuf>,
}

pub fn sparse_check(a: &SparseArgs) -> CliResult<()> {
    a.signal.validate()?;
    check_eps_grid(&a.eps_grid)?;
    if a.signal.l > 10 {
        return Err(CliError::Schema("sparse-check uses every tile and needs L <= 10".into()));
    }
    if let Some(th) = a.theta {
        if !(th > 1.0) {
            return Err(CliError::Schema("theta must exceed 1".into()));
        }
    }
    let f1 = a.signal.generate(0)?;
    let f2 = a.signal.generate(1)?;
    let tiles = Tiling::new(a.signal.l).all_tiles();
    let nfun = carleson_max(&f1, &Multiplier::positive_half(), CarlesonMode::Pruned).argmax;
    let reports: Vec<_> = a
        .eps_grid
        .par_iter()
        .map(|&eps| {
            let opts = SparseOptions { theta: a.theta, seed: a.signal.seed, ..Default::default() };
            let r = sparse_ratio(&tiles, &f1, &f2, eps, &nfun, opts).map_err(numerical)?;
            finite("sparse ratio", r.ratio)?;
            Ok(r)
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(&["eps", "ratio", "generations", "theta", "max_depth"]);
    for r in &reports {
        t.push(vec![num(r.eps), num(r.ratio), r.generations.to_string(), num(r.theta), r.max_depth.to_string()]);
    }
    t.emit(a.out.as_deref())?;
    if let Some(path) = &a.detail_json {
        write_json(path, &reports)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- rank1-check

#[derive(Debug, Args)]
pub struct Rank1Args {
    /// JSON experiment descriptor.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub detail_json: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rank1Signals {
    pub family: Family,
    pub seed: u64,
    /// Number of independent triples.
    #[serde(default = "one")]
    pub count: u64,
    #[serde(default = "three")]
    pub density_exp: u32,
    #[serde(default = "eight")]
    pub packets: usize,
}

fn one() -> u64 {
    1
}
fn three() -> u32 {
    3
}
fn eight() -> usize {
    8
}
fn default_kappa() -> u32 {
    10
}
fn default_spacing() -> u64 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rank1Config {
    pub gamma: [f64; 3],
    #[serde(rename = "H")]
    pub big_h: u32,
    #[serde(rename = "K")]
    pub big_k: u32,
    pub h: u32,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(default = "default_kappa")]
    pub kappa: u32,
    #[serde(default = "default_spacing")]
    pub spacing: u64,
    pub eps_grid: Vec<f64>,
    pub signals: Rank1Signals,
    /// Random 1-trees fed to the tree estimate.
    #[serde(default)]
    pub trees: usize,
}

#[derive(Serialize)]
struct TreeSummary {
    trees: usize,
    failures: usize,
    max_ratio: f64,
}

fn rank1_error(e: Rank1Error) -> CliError {
    match e {
        Rank1Error::Degenerate(_) | Rank1Error::NotInPlane(_) | Rank1Error::BadParams(_) | Rank1Error::BadEpsilon(_) => schema(e),
        Rank1Error::Grid(..) | Rank1Error::Uniqueness { .. } | Rank1Error::Axiom { .. } => CliError::Invariant(e.to_string()),
        _ => numerical(e),
    }
}

pub fn load_rank1_config(path: &Path) -> CliResult<Rank1Config> {
    let text = std::fs::read_to_string(path)?;
    let c: Rank1Config = serde_json::from_str(&text).map_err(schema)?;
    check_eps_grid(&c.eps_grid)?;
    if c.l < 4 || c.l > 12 || c.signals.count == 0 || c.spacing < 1 {
        return Err(CliError::Schema("need 4 <= L <= 12, a positive signal count and spacing".into()));
    }
    Ok(c)
}

pub fn build_rank1_map(c: &Rank1Config) -> CliResult<Rank1Map> {
    let params = GammaParams { gamma: c.gamma, big_h: c.big_h, big_k: c.big_k, h: c.h };
    let family = GammaFamily::construct(params, c.l, FamilyOptions { spacing: c.spacing, kappa: c.kappa }).map_err(rank1_error)?;
    let base = family_tiles(&family, c.l);
    if base.is_empty() {
        return Err(CliError::Schema("the cube family leaves no tiles at this L; lower H or K, or raise kappa".into()));
    }
    build_eta_from_gamma(&family, &base, c.l, c.kappa).map_err(rank1_error)
}

pub fn rank1_check(a: &Rank1Args) -> CliResult<()> {
    let c = load_rank1_config(&a.config)?;
    let map = build_rank1_map(&c)?;
    let bad = structure_check(&map);
    if let Some(t) = bad.first() {
        return Err(CliError::Invariant(format!("{} tiles fail the lacunary decomposition, first {t}", bad.len())));
    }
    let spec = SignalSpec { l: c.l, family: c.signals.family, seed: c.signals.seed, density_exp: c.signals.density_exp, packets: c.signals.packets };
    spec.validate()?;
    let triples: Vec<[Signal; 3]> =
        (0..c.signals.count).map(|i| Ok([spec.generate(3 * i)?, spec.generate(3 * i + 1)?, spec.generate(3 * i + 2)?])).collect::<CliResult<_>>()?;
    let jobs: Vec<(f64, u64)> = c.eps_grid.iter().flat_map(|&e| (0..c.signals.count).map(move |i| (e, i))).collect();
    let reports: Vec<_> = jobs
        .par_iter()
        .map(|&(eps, i)| {
            let f = &triples[i as usize];
            let r = rank1_sparse_ratio(&map, [&f[0], &f[1], &f[2]], [1.0 / (1.0 - eps), 2.0, 2.0], None).map_err(rank1_error)?;
            finite("rank-1 sparse ratio", r.ratio)?;
            Ok(r)
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(&["eps", "p1", "eps_of_p", "trial", "ratio", "generations", "theta", "local_constant"]);
    for ((e, i), r) in jobs.iter().zip(&reports) {
        t.push(vec![num(*e), num(r.p[0]), num(r.eps), i.to_string(), num(r.ratio), r.generations.to_string(), num(r.theta), num(r.local_constant)]);
    }
    t.emit(a.out.as_deref())?;

    let mut summary = TreeSummary { trees: 0, failures: 0, max_ratio: 0.0 };
    if c.trees > 0 {
        let fs = map.transport([&triples[0][0], &triples[0][1], &triples[0][2]]).map_err(rank1_error)?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.signals.seed);
        rng.set_stream(1 << 32);
        let mut attempts = 0;
        while summary.trees < c.trees && attempts < 100 * c.trees {
            attempts += 1;
            let Some(tree) = random_one_tree(&map, 15, &mut rng) else { continue };
            let est = tree_estimate_check(&map, [&fs[0], &fs[1], &fs[2]], &tree).map_err(rank1_error)?;
            summary.trees += 1;
            summary.failures += usize::from(!est.passes);
            summary.max_ratio = summary.max_ratio.max(est.ratio);
        }
    }
    if let Some(path) = &a.detail_json {
        let mut detail = BTreeMap::new();
        detail.insert("tiles", serde_json::json!(map.len()));
        detail.insert("tree_estimate", serde_json::to_value(&summary).unwrap());
        detail.insert("reports", serde_json::to_value(&reports).unwrap());
        write_json(path, &detail)?;
    }
    if summary.failures > 0 {
        return Err(CliError::Invariant(format!("tree estimate fails on {} of {} trees", summary.failures, summary.trees)));
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `# tilebench-v1` CSV written by another subcommand.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub x: String,
    /// One or more y columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub y: Vec<String>,
    /// Splits each y column into one series per distinct value of this column.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub loglog: bool,
    #[arg(long, default_value = "tilebench")]
    pub title: String,
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let table = Table::parse(&std::fs::read_to_string(&a.input)?)?;
    let xs = table.column(&a.x)?;
    let groups: Vec<String> = match &a.group {
        Some(g) => {
            let j = table.header.iter().position(|h| h == g).ok_or_else(|| CliError::Schema(format!("no column `{g}`")))?;
            table.rows.iter().map(|r| r[j].clone()).collect()
        }
        None => vec![String::new(); xs.len()],
    };
    let mut series = Vec::new();
    for y in &a.y {
        let ys = table.column(y)?;
        let mut by_group: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for ((x, v), g) in xs.iter().zip(&ys).zip(&groups) {
            by_group.entry(g.as_str()).or_default().push((*x, *v));
        }
        for (g, points) in by_group {
            let name = if g.is_empty() { y.clone() } else { format!("{y} [{g}]") };
            series.push(Series { name, points });
        }
    }
    write_svg(&a.out, &line_plot(&a.title, &a.x, &a.y.join(", "), &series, a.loglog))
}
