//! Small exhaustive instances checked against independent routes.

use crate::error::{CliError, CliResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tilebench::dyadic::{DyadicGrid, Tile};
use tilebench::multifreq::{cz_intervals, project_set};
use tilebench::rank1::{build_eta_from_gamma, family_tiles, structure_check, FamilyOptions, GammaFamily, GammaParams};
use tilebench::signal::{carleson_max, CarlesonMode, Multiplier, Signal};
use tilebench::sparsedom::stopping_collection;
use tilebench::treespace::{random_tree, OuterSpace, SolverMode, SpaceIv};

type Check = fn() -> Result<String, String>;

fn grid_property() -> Result<String, String> {
    let mut pairs = 0usize;
    for shift in 0..3u8 {
        let g = DyadicGrid::new(shift, -2, 5);
        let all: Vec<_> = (-2..=5).flat_map(|k| g.members_at(k)).collect();
        for a in &all {
            for b in &all {
                pairs += 1;
                if a.intersects_geom(b) && !(a.contains_geom(b) || b.contains_geom(a)) {
                    return Err(format!("{a} and {b} overlap without nesting"));
                }
            }
        }
    }
    Ok(format!("{pairs} interval pairs nested or disjoint"))
}

fn reconstruction() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let l = 8;
        let f = Signal::random_complex(l, &mut rng);
        let sources = [SpaceIv::new(3, rng.gen_range(0..32)), SpaceIv::new(1, rng.gen_range(0..128))];
        let tiles = cz_intervals(l, &sources, 2.0).map_err(|e| e.to_string())?.minimal_tiles();
        worst = worst.max(project_set(&f, &tiles).sub(&f).l2_norm() / f.l2_norm());
    }
    if worst > 1e-9 {
        return Err(format!("relative error {worst:e}"));
    }
    Ok(format!("max relative error {worst:.1e}"))
}

fn carleson_routes() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let f = Signal::random_complex(7, &mut rng);
        let a = carleson_max(&f, &Multiplier::positive_half(), CarlesonMode::Fft).magnitudes;
        let b = carleson_max(&f, &Multiplier::positive_half(), CarlesonMode::Pruned).magnitudes;
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    if worst > 1e-9 {
        return Err(format!("FFT and pruned routes differ by {worst:e}"));
    }
    Ok(format!("FFT and pruned routes agree to {worst:.1e}"))
}

fn outer_measure() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = 4;
    let exact = OuterSpace::torus(l, 1, SolverMode::Exact);
    let greedy = exact.with_mode(SolverMode::Greedy);
    for _ in 0..50 {
        let a: Vec<Tile> = (0..rng.gen_range(1..=8))
            .map(|_| {
                let k = rng.gen_range(0..=l);
                Tile::new(k, rng.gen_range(0..1u64 << (l - k)), rng.gen_range(0..1u64 << k))
            })
            .collect();
        let (e, g) = (exact.measure(&a), greedy.measure(&a));
        if g < e - 1e-15 {
            return Err(format!("greedy {g} below exact {e}"));
        }
    }
    Ok("greedy cover never below the exact minimum on 50 sets".into())
}

fn trees() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kappa in 1..=3 {
        for _ in 0..100 {
            let t = random_tree(7, kappa, rng.gen_range(0..=7), rng.gen_range(1..30), &mut rng);
            if !t.satisfies_spectral_bound() || !t.check_structure() {
                return Err(format!("tree with top {:?} fails its structural checks", t.top));
            }
        }
    }
    Ok("300 random trees satisfy the spectral bound and lacunary splits".into())
}

fn stopping() -> Result<String, String> {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let f1 = Signal::random_indicator(8, rng.gen_range(4..64), &mut rng).abs();
        let f2 = Signal::random_indicator(8, rng.gen_range(4..64), &mut rng).abs();
        let c = stopping_collection(&f1, &f2, &[], 0.25, None).map_err(|e| e.to_string())?;
        if !c.check() {
            return Err(format!("stopping collection for seed {seed} fails its checks"));
        }
    }
    Ok("10 stopping collections are disjoint, sparse and packed".into())
}

fn rank1() -> Result<String, String> {
    let params = GammaParams { gamma: [1.0, -2.0, 1.0], big_h: 3, big_k: 4, h: 0 };
    let fam = GammaFamily::construct(params, 9, FamilyOptions::default()).map_err(|e| e.to_string())?;
    let map = build_eta_from_gamma(&fam, &family_tiles(&fam, 9), 9, 10).map_err(|e| e.to_string())?;
    let bad = structure_check(&map);
    if !bad.is_empty() {
        return Err(format!("{} tiles fail the lacunary decomposition", bad.len()));
    }
    Ok(format!("{} tiles satisfy r1-r4 and the lacunary decomposition", map.len()))
}

const CHECKS: [(&str, Check); 7] = [
    ("grid-property", grid_property),
    ("reconstruction", reconstruction),
    ("carleson-routes", carleson_routes),
    ("outer-measure", outer_measure),
    ("trees", trees),
    ("stopping", stopping),
    ("rank1-map", rank1),
];

pub fn run() -> CliResult<()> {
    let results: Vec<_> = CHECKS.par_iter().map(|(name, f)| (*name, f())).collect();
    let mut failed = Vec::new();
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("ok   {name}: {msg}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("selftest checks failed: {}", failed.join(", "))))
    }
}
