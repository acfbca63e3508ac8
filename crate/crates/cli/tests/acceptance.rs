//! End-to-end acceptance checks on the default synthetic corpus.
//!
//! Runs the whole pipeline through the `svcnet` binary twice, then checks
//! every criterion against the written artifacts with independent
//! recomputation. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svcnet::model_io::model_to_text;
use svcnet::net::random_gradient_check;
use svcnet::ppc::PpcVector;
use svcnet::svc::{
    make_target, train_svcnet_on_streams, AccumulateMode, AccumulatorState, SoundLayout, SvcConfig,
};
use svcnet::SoundId;
use svcnet_cli::{Pipeline, RunConfig};

const BIN: &str = env!("CARGO_BIN_EXE_svcnet");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn svcnet(out: &Path, args: &[&str]) -> Duration {
    let start = Instant::now();
    let status = Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .stdout(Stdio::null())
        .status()
        .expect("binary runs");
    assert!(status.success(), "svcnet {args:?} failed with {status}");
    start.elapsed()
}

struct Run {
    dir: PathBuf,
    ppc_time: Duration,
    total: Duration,
}

fn full_pipeline(dir: &Path) -> Run {
    let start = Instant::now();
    svcnet(dir, &["gen"]);
    let ppc_time = svcnet(dir, &["train", "--stage", "ppc"]);
    svcnet(dir, &["train", "--stage", "svc"]);
    svcnet(dir, &["train", "--stage", "rec"]);
    svcnet(dir, &["eval"]);
    for kind in ["ppc_scatter", "svc_trajectory", "svc_halves"] {
        svcnet(dir, &["plot", "--kind", kind]);
    }
    Run {
        dir: dir.to_path_buf(),
        ppc_time,
        total: start.elapsed(),
    }
}

/// Data rows of a report, header line included, split on commas.
fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let check = random_gradient_check(120, 20_240_601, 1e-6, 1e-8).expect("gradient check runs");
    let secs = start.elapsed().as_secs_f64();
    outcome(
        check.max_error < 1e-4 && secs < 30.0,
        format!("{} nets, max relative error {:.3e}, {secs:.1}s", check.networks, check.max_error),
    )
}

fn criterion_2(pipeline: &Pipeline) -> Outcome {
    let corpus = pipeline.load_corpus().unwrap();
    let (train, _) = pipeline.split(&corpus).unwrap();
    let encoders = pipeline.load_encoders().unwrap();
    let layout = pipeline.layout(&encoders).unwrap();
    // two words per speaker, so part of the inventory goes unheard
    let streams: Vec<_> = pipeline
        .streams(&train, &encoders)
        .unwrap()
        .iter()
        .map(|s| s.words(0..2))
        .collect();
    let masked: usize = streams
        .iter()
        .map(|s| {
            let profile = svcnet::ppc::profile_from_stream(s.speaker, &s.presentations).unwrap();
            let (_, mask) = make_target(&profile, &layout).unwrap();
            mask.len() - mask.active_count()
        })
        .sum();
    let mut config = pipeline.config.svc_config().unwrap();
    config.train.epochs = 5;
    let run = |fill: f64| {
        let cfg = SvcConfig {
            unheard_fill: fill,
            ..config.clone()
        };
        train_svcnet_on_streams(&streams, &layout, &cfg).unwrap().0
    };
    let a = run(0.0);
    let b = run(0.77);
    let identical = model_to_text(a.net()) == model_to_text(b.net())
        && a.net().values().zip(b.net().values()).all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        masked > 0 && identical,
        format!("{masked} masked target slots, parameters identical: {identical}"),
    )
}

fn criterion_3(run: &Run) -> Outcome {
    let rows = table(&run.dir.join("reports/ppc_fit.csv"));
    let worst = rows
        .iter()
        .map(|r| num(&r[2]) / num(&r[1]))
        .fold(0.0f64, f64::max);
    let secs = run.ppc_time.as_secs_f64();
    outcome(
        !rows.is_empty() && worst <= 0.2 && secs < 120.0,
        format!("{} encoders, worst final/initial MSE {worst:.4}, {secs:.1}s", rows.len()),
    )
}

fn criterion_4(run: &Run) -> Outcome {
    let mut by_speaker: BTreeMap<u32, Vec<(usize, f64)>> = BTreeMap::new();
    for r in table(&run.dir.join("reports/stability.csv")) {
        by_speaker
            .entry(num(&r[0]) as u32)
            .or_default()
            .push((num(&r[1]) as usize, num(&r[2])));
    }
    let stable = by_speaker
        .values()
        .filter(|d| {
            let first = d.iter().find(|(k, _)| *k == 1).map(|(_, v)| *v).unwrap();
            let late: Vec<f64> = d.iter().filter(|(k, _)| *k >= 4).map(|(_, v)| *v).collect();
            !late.is_empty() && late.iter().sum::<f64>() / late.len() as f64 <= 0.25 * first
        })
        .count();
    let n = by_speaker.len();
    outcome(
        n > 0 && stable as f64 >= 0.7 * n as f64,
        format!("{stable}/{n} test speakers stable from word 4 on"),
    )
}

fn criterion_5(run: &Run) -> Outcome {
    let rows = table(&run.dir.join("reports/plot_svc_halves.csv"));
    let dim = (rows[0].len() - 1) / 2;
    let halves: Vec<(Vec<f64>, Vec<f64>)> = rows
        .iter()
        .map(|r| {
            let v: Vec<f64> = r[1..].iter().map(|s| num(s)).collect();
            (v[..dim].to_vec(), v[dim..].to_vec())
        })
        .collect();
    let closer = halves
        .iter()
        .enumerate()
        .filter(|(i, (first, second))| {
            let own = dist(first, second);
            let nearest_other = halves
                .iter()
                .enumerate()
                .filter(|(j, _)| j != i)
                .map(|(_, (_, other))| dist(first, other))
                .fold(f64::INFINITY, f64::min);
            own < nearest_other
        })
        .count();
    let n = halves.len();
    outcome(
        closer as f64 >= 0.7 * n as f64,
        format!("{closer}/{n} test speakers closer to their own second half"),
    )
}

/// Least-squares affine fit by normal equations and Gauss-Jordan elimination.
fn affine_r2(x_train: &[Vec<f64>], y_train: &[Vec<f64>], x_test: &[Vec<f64>], y_test: &[Vec<f64>]) -> f64 {
    let p = x_train[0].len() + 1;
    let row = |x: &[f64]| -> Vec<f64> { x.iter().copied().chain([1.0]).collect() };
    let q = y_train[0].len();
    let mut a = vec![vec![0.0; p + q]; p];
    for (x, y) in x_train.iter().zip(y_train) {
        let r = row(x);
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            for k in 0..q {
                a[i][p + k] += r[i] * y[k];
            }
        }
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, pivot);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                a[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for k in 0..q {
        let mean = y_test.iter().map(|y| y[k]).sum::<f64>() / y_test.len() as f64;
        for (x, y) in x_test.iter().zip(y_test) {
            let pred: f64 = row(x).iter().enumerate().map(|(i, v)| v * a[i][p + k]).sum();
            ss_res += (y[k] - pred).powi(2);
            ss_tot += (y[k] - mean).powi(2);
        }
    }
    1.0 - ss_res / ss_tot
}

fn criterion_6(run: &Run) -> Outcome {
    let latents: BTreeMap<u32, Vec<f64>> = table(&run.dir.join("latents.csv"))
        .into_iter()
        .map(|r| (num(&r[0]) as u32, r[1..].iter().map(|s| num(s)).collect()))
        .collect();
    let train: Vec<(u32, Vec<f64>)> = table(&run.dir.join("models/svc_codes.csv"))
        .into_iter()
        .map(|r| (num(&r[0]) as u32, r[1..].iter().map(|s| num(s)).collect()))
        .collect();
    // whole-stream code of a test speaker: mean of its trajectory
    let mut sums: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
    for r in table(&run.dir.join("reports/plot_svc_trajectory.csv")) {
        let code: Vec<f64> = r[3..].iter().map(|s| num(s)).collect();
        let e = sums
            .entry(num(&r[0]) as u32)
            .or_insert_with(|| (vec![0.0; code.len()], 0.0));
        e.0.iter_mut().zip(&code).for_each(|(s, c)| *s += c);
        e.1 += 1.0;
    }
    let test: Vec<(u32, Vec<f64>)> = sums
        .into_iter()
        .map(|(s, (sum, n))| (s, sum.into_iter().map(|v| v / n).collect()))
        .collect();
    let split = |set: &[(u32, Vec<f64>)]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        set.iter().map(|(s, c)| (c.clone(), latents[s].clone())).unzip()
    };
    let (xa, ya) = split(&train);
    let (xb, yb) = split(&test);
    let r2 = affine_r2(&xa, &ya, &xb, &yb);
    outcome(
        r2 >= 0.6,
        format!("R² {r2:.3} on {} test speakers, fit on {}", test.len(), train.len()),
    )
}

fn criterion_7(run: &Run) -> Outcome {
    let rows = table(&run.dir.join("reports/ablation.csv"));
    let rate = |flags: &str| {
        rows.iter()
            .find(|r| r[..3].join("") == flags)
            .map(|r| num(&r[3]))
            .unwrap()
    };
    let (all, none) = (rate("111"), rate("000"));
    outcome(
        rows.len() == 8 && all <= none,
        format!("error with code everywhere {all:.4}, average code everywhere {none:.4}"),
    )
}

fn criterion_8(run: &Run) -> Outcome {
    let rows: BTreeMap<String, (f64, f64)> = table(&run.dir.join("reports/word_subsets.csv"))
        .into_iter()
        .map(|r| (r[0].clone(), (num(&r[1]), num(&r[3]))))
        .collect();
    let (none, n) = rows["none"];
    let (disjoint, _) = rows["disjoint"];
    let (same, _) = rows["same"];
    let quantum = 1.0 / n;
    let pass = disjoint <= none && (disjoint - same).abs() <= 0.5 * same + quantum + 1e-12;
    outcome(
        pass,
        format!("none {none:.4}, disjoint {disjoint:.4}, same {same:.4}, quantum {quantum:.4}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..50 {
        let dim = rng.random_range(1..=4);
        let sounds: Vec<SoundId> = (0..rng.random_range(1..=6))
            .map(|p| SoundId::new(p, rng.random_range(0..3)))
            .collect();
        let layout = SoundLayout::new(sounds.iter().copied(), dim).unwrap();
        let mut acc = AccumulatorState::new(&layout, AccumulateMode::ZeroFill);
        let mut seen: BTreeMap<SoundId, Vec<Vec<f64>>> = BTreeMap::new();
        for _ in 0..rng.random_range(1..=200) {
            let s = layout.sounds()[rng.random_range(0..layout.sounds().len())];
            let code: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..2.0)).collect();
            acc.accumulate(&layout, s, &PpcVector(code.clone())).unwrap();
            seen.entry(s).or_default().push(code);
            for (sound, codes) in &seen {
                let mean = acc.mean(&layout, *sound).unwrap();
                for k in 0..dim {
                    let brute = codes.iter().map(|c| c[k]).sum::<f64>() / codes.len() as f64;
                    worst = worst.max((mean[k] - brute).abs());
                    checks += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checks} comparisons, max deviation {worst:.2e}"))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_10(a: &Run, b: &Run) -> Outcome {
    let fa = files_under(&a.dir);
    let fb = files_under(&b.dir);
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .collect();
    let secs = a.total.as_secs_f64().max(b.total.as_secs_f64());
    outcome(
        differing.is_empty() && secs < 600.0,
        format!(
            "{} files compared, {} differ, slowest pipeline {secs:.1}s",
            fa.len(),
            differing.len()
        ),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let a = full_pipeline(&root.path().join("a"));
    let b = full_pipeline(&root.path().join("b"));
    let pipeline = Pipeline::new(RunConfig::default(), &a.dir);

    let results = [
        ("gradient oracle", criterion_1()),
        ("masked-loss independence", criterion_2(&pipeline)),
        ("PPC reconstruction", criterion_3(&a)),
        ("SVC stability after four words", criterion_4(&a)),
        ("SVC independent of word content", criterion_5(&a)),
        ("latent recovery", criterion_6(&a)),
        ("code availability ablation", criterion_7(&a)),
        ("word-subset protocol", criterion_8(&a)),
        ("running-average oracle", criterion_9()),
        ("determinism and runtime", criterion_10(&a, &b)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
