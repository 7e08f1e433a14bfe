//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use subtrack::detector::{detect, resolve_config};
use subtrack::evaluation::{
    cohen_kappa_pairs, hausdorff, internal_density, run_outcomes, BenchCell, ReplicationOutcome,
    ScenarioId,
};
use subtrack::generator::{build_toy, TOY_CHANGE_POINTS};
use subtrack::netdata::GraphSequence;
use subtrack::spectral::{
    proj_residual_norm, subspace_distance_sq, sym_eig, uevt, SubspaceBasis, SymMatrix,
};
use subtrack::statistics::{pi_eig_hat, pi_proj_hat, window_sum};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let spent = start.elapsed();
    if spent > limit {
        Err(format!("{detail}; took {spent:.1?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail}; {spent:.1?}"))
    }
}

fn sym(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::try_from_matrix(m).unwrap()
}

fn subspace_inequalities() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0x51AB);
    let n = 50;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for trial in 0..500 {
        let ru = rng.random_range(1..=5);
        let rv = rng.random_range(1..=5);
        let u = common::random_orthonormal(n, ru, &mut rng);
        // every third pair shares part of U so that the bounds get tight
        let v = if trial % 3 == 0 {
            let mut span = common::random_gaussianish(n, rv, &mut rng) * 1e-2;
            let shared = rv.min(ru);
            let mix = common::random_gaussianish(ru, shared, &mut rng);
            let overlap = &u * mix;
            let mut head = span.columns_mut(0, shared);
            head += overlap;
            common::gram_schmidt(&span)
        } else {
            common::random_orthonormal(n, rv, &mut rng)
        };
        let rv = v.ncols();
        let q = loop {
            let q = common::random_symmetric(rv, &mut rng);
            if common::jacobi_eigen(&q).0.iter().all(|x| x.abs() > 1e-3) {
                break q;
            }
        };
        let sigma_min = common::jacobi_eigen(&q)
            .0
            .iter()
            .fold(f64::INFINITY, |m, x| m.min(x.abs()));

        let bu = SubspaceBasis::from_orthonormal(u.clone()).unwrap();
        let bv = SubspaceBasis::from_orthonormal(v.clone()).unwrap();
        let dist = subspace_distance_sq(&bu, &bv).unwrap();
        let bound = (rv as f64 - ru as f64 + dist) / (2.0 * rv as f64);

        let perp = common::complement(&u);
        let lhs1 = common::top_singular(&(perp.transpose() * &v)).powi(2);
        let vvt = sym(&v * v.transpose());
        let lhs1_lib = proj_residual_norm(&bu, &vvt).unwrap().powi(2);
        let lhs2 = proj_residual_norm(&bu, &sym(&v * &q * v.transpose())).unwrap();
        let rhs2 = sigma_min * bound.max(0.0).sqrt();

        let gaps = [lhs1 - bound, lhs1_lib - bound, lhs2 - rhs2];
        for g in gaps {
            worst = worst.min(g);
            if g < -1e-10 {
                violations += 1;
            }
        }
    }
    let detail = format!("500 triples, {violations} violations, tightest margin {worst:.2e}");
    if violations > 0 {
        return Err(detail);
    }
    within(Duration::from_secs(30), start, detail)
}

fn spectral_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(0x0AC1E);
    let mut worst = [0.0f64; 4];
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let m = common::random_symmetric(n, &mut rng);
        let s = sym(m.clone());
        let (values, vectors) = common::jacobi_eigen(&m);

        let e = sym_eig(&s).unwrap();
        let mut err: f64 = values
            .iter()
            .zip(&e.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        for (k, lambda) in e.values.iter().enumerate() {
            let v = e.vectors.column(k);
            err = err.max((&m * v - v * *lambda).amax());
        }
        worst[0] = worst[0].max(err);

        // threshold halfway between two eigenvalues, or below all of them
        let cut = rng.random_range(0..=n);
        let h = match cut {
            0 => values[0] + 1.0,
            c if c == n => f64::NEG_INFINITY,
            c => 0.5 * (values[c - 1] + values[c]),
        };
        let kept = values.iter().filter(|&&x| x > h).count();
        let mut approx = DMatrix::zeros(n, n);
        for (k, lambda) in values.iter().enumerate().take(kept) {
            let v = vectors.column(k);
            approx += v * v.transpose() * *lambda;
        }
        let u = uevt(&s, h).unwrap();
        let mut err = (u.approx.as_matrix() - &approx).amax();
        if u.rank != kept {
            err = f64::INFINITY;
        }
        worst[1] = worst[1].max(err);

        let r = rng.random_range(0..n);
        let basis = common::random_orthonormal(n, r, &mut rng);
        let perp = common::complement(&basis);
        let expected = common::top_singular(&(perp.transpose() * &m));
        let got = proj_residual_norm(&SubspaceBasis::from_orthonormal(basis.clone()).unwrap(), &s)
            .unwrap();
        worst[2] = worst[2].max((got - expected).abs());

        let other = common::random_orthonormal(n, rng.random_range(0..=n.min(4)), &mut rng);
        let d = subspace_distance_sq(
            &SubspaceBasis::from_orthonormal(basis.clone()).unwrap(),
            &SubspaceBasis::from_orthonormal(other.clone()).unwrap(),
        )
        .unwrap();
        worst[3] = worst[3].max((d - common::projector_distance_sq(&basis, &other)).abs());
    }
    let detail = format!(
        "200 instances, max errors eig {:.1e}, uevt {:.1e}, residual {:.1e}, distance {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    if worst.iter().any(|&w| w.is_nan() || w > 1e-8) {
        return Err(detail);
    }
    within(Duration::from_secs(10), start, detail)
}

fn noiseless_dichotomy() -> Outcome {
    let model = common::four_segment_model();
    let len = 10;
    let b = 1.0;
    let bounds = [1, 31, 61, 91, 121];
    let mut inside = 0.0f64;
    for k in 0..4 {
        for last in bounds[k] + len - 1..bounds[k + 1] {
            let w = window_sum(&model, last, len).unwrap();
            inside = inside.max(pi_proj_hat(&w, &model.bases()[k]).unwrap());
        }
    }
    let mut after = f64::INFINITY;
    for (tau, old) in [(31, 0), (91, 2)] {
        for last in tau..tau + len {
            let w = window_sum(&model, last, len).unwrap();
            after = after.min(pi_proj_hat(&w, &model.bases()[old]).unwrap());
        }
    }
    let old_rank = model.bases()[1].rank();
    let mut collapsed = f64::NEG_INFINITY;
    for l in 61..=91 - len {
        let w = window_sum(&model, l + len - 1, len).unwrap();
        collapsed = collapsed.max(pi_eig_hat(&w, old_rank).unwrap());
    }
    ensure(
        inside <= 1e-8 && after > 10.0 * b && collapsed < b,
        format!(
            "b={b}: max proj inside {inside:.1e}, min proj after equal/increasing rank {after:.2}, max eig after decrease {collapsed:.1e}"
        ),
    )
}

fn toy_triggers() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let results: Vec<(u64, Vec<usize>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(5)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&seed| {
                            let (_, g) = build_toy(seed).unwrap();
                            let mut config = resolve_config(&g, None).unwrap();
                            config.window = 20;
                            config.auto_tune = false;
                            (seed, detect(&g, Some(config)).unwrap().coarse.points)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect()
    });
    let good = results
        .iter()
        .filter(|(_, pts)| {
            pts.len() == 3
                && pts
                    .iter()
                    .zip(TOY_CHANGE_POINTS)
                    .all(|(p, t)| p.abs_diff(t) <= 40)
        })
        .count();
    let example = &results[0].1;
    let detail = format!("{good}/20 seeds with 3 triggers within 40 (seed 0: {example:?})");
    if good < 18 {
        return Err(detail);
    }
    within(Duration::from_secs(120), start, detail)
}

fn scenario_outcomes(
    scenario: ScenarioId,
    t_len: usize,
    param: f64,
    seed: u64,
) -> Vec<ReplicationOutcome> {
    let cell = BenchCell {
        scenario,
        n: 100,
        t_len,
        param,
    };
    run_outcomes(&[cell], 20, seed)
        .remove(0)
        .into_iter()
        .map(|o| o.expect("replication succeeds"))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn scenario_one(outcomes: &[ReplicationOutcome], elapsed: Duration) -> Outcome {
    let count = mean(outcomes.iter().map(|o| o.refined_count_error as f64));
    let haus = mean(outcomes.iter().map(|o| o.refined_hausdorff));
    let detail =
        format!("R=20 refined: mean |K-K*| {count:.2}, mean Hausdorff {haus:.2}; {elapsed:.1?}");
    ensure(
        count <= 0.1 && haus <= 2.0 && elapsed < Duration::from_secs(300),
        detail,
    )
}

fn refinement_gain(outcomes: &[ReplicationOutcome]) -> Outcome {
    let better = outcomes
        .iter()
        .filter(|o| o.refined_hausdorff <= o.coarse_hausdorff)
        .count();
    let coarse = mean(outcomes.iter().map(|o| o.coarse_hausdorff));
    let refined = mean(outcomes.iter().map(|o| o.refined_hausdorff));
    let gain = if coarse > 0.0 {
        1.0 - refined / coarse
    } else {
        0.0
    };
    ensure(
        better >= 18 && gain >= 0.5,
        format!(
            "refined <= coarse in {better}/20 seeds; mean Hausdorff {coarse:.2} -> {refined:.2} ({:.0}% better)",
            gain * 100.0
        ),
    )
}

fn scenario_three() -> Outcome {
    let start = Instant::now();
    let outcomes = scenario_outcomes(ScenarioId::III, 150, 0.8, 0x3333);
    let count = mean(outcomes.iter().map(|o| o.refined_count_error as f64));
    let detail = format!("R=20, rho=80/n: refined mean |K-K*| {count:.2}");
    if count > 0.2 {
        return Err(detail);
    }
    within(Duration::from_secs(300), start, detail)
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_subtrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn determinism() -> Outcome {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        let d = dir.path();
        run_cli(
            &[
                "generate",
                "--scenario",
                "II",
                "--param",
                "0.2",
                "--seed",
                "77",
                "--out",
                "g.dnet",
            ],
            d,
        )?;
        run_cli(
            &["detect", "g.dnet", "--out", "r.json", "--trace", "t.csv"],
            d,
        )?;
        run_cli(
            &[
                "bench",
                "--scenario",
                "III",
                "--param",
                "50/n",
                "--reps",
                "3",
                "--n",
                "60",
                "--T",
                "120",
                "--seed",
                "5",
                "--out-dir",
                ".",
            ],
            d,
        )?;
    }
    let files = [
        "g.dnet",
        "g.truth.json",
        "r.json",
        "t.csv",
        "scenario_III.csv",
        "scenario_III.json",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            let a = std::fs::read(runs[0].path().join(f)).unwrap_or_default();
            let b = std::fs::read(runs[1].path().join(f)).unwrap_or_else(|_| vec![1]);
            a != b
        })
        .collect();
    ensure(
        differing.is_empty(),
        format!(
            "{} artifacts compared, differing: {differing:?}",
            files.len()
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = common::rng(0x4A05);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut draw = || -> Vec<usize> {
            let k = rng.random_range(0..6);
            let mut v: Vec<usize> = (0..k).map(|_| rng.random_range(1..300)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (a, b) = (draw(), draw());
        if hausdorff(&a, &b, 300).value != common::hausdorff_exhaustive(&a, &b, 300) {
            mismatches += 1;
        }
    }
    let g = GraphSequence::new(4, vec![vec![(0, 1), (2, 3), (0, 2)], vec![(0, 1)]]).unwrap();
    let density = internal_density(&g, &[0, 0, 1, 1], 1, 3).unwrap();
    let g3 =
        GraphSequence::new(3, vec![vec![(0, 2), (1, 2)], vec![(0, 2)], vec![], vec![]]).unwrap();
    let kappa = cohen_kappa_pairs(&g3, &[0, 0, 1], 1, 5).unwrap()[0]
        .values
        .clone();
    ensure(
        mismatches == 0 && density == vec![1.0, 0.5] && kappa == vec![0.5],
        format!("hausdorff mismatches {mismatches}/1000, density {density:?}, kappa {kappa:?}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {id}: {name}: {detail}");
    };
    report(1, "subspace distance inequalities", subspace_inequalities());
    report(2, "spectral oracles", spectral_oracles());
    report(3, "noiseless dichotomy", noiseless_dichotomy());
    report(4, "toy sequence triggers", toy_triggers());
    let start = Instant::now();
    let outcomes = scenario_outcomes(ScenarioId::I, 200, 0.1, 0x1111);
    let elapsed = start.elapsed();
    report(5, "scenario I accuracy", scenario_one(&outcomes, elapsed));
    report(6, "refinement improvement", refinement_gain(&outcomes));
    report(7, "scenario III sparsity", scenario_three());
    report(8, "determinism", determinism());
    report(9, "metric oracles", metric_oracles());
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
