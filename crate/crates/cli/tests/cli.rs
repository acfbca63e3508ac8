use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use svcnet::corpus::load_corpus;
use svcnet::ppc::{encode_frame, load_encoders};
use svcnet_cli::report::parse_prediction_log;
use svcnet_cli::{Pipeline, RunConfig};

const BIN: &str = env!("CARGO_BIN_EXE_svcnet");

const SMALL: &str = r#"
seed = 7

[corpus]
n_speakers = 6
n_words = 4

[ppc]
epochs = 60

[svc]
epochs = 15

[rec]
epochs = 10
"#;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

fn run_small(out: &Path, cfg: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--config", cfg.to_str().unwrap()];
    full.extend_from_slice(args);
    let o = run(out, &full);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn full_small(out: &Path, cfg: &Path) {
    for args in [
        &["gen"][..],
        &["train", "--stage", "ppc"],
        &["train", "--stage", "svc"],
        &["train", "--stage", "rec"],
        &["eval"],
    ] {
        run_small(out, cfg, args);
    }
}

fn body_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn gen_writes_expected_frames_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out = run_small(&a, &cfg, &["gen"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let spec = RunConfig::load(&cfg).unwrap().corpus_spec();
    assert!(stdout.contains(&format!("{} frames", spec.expected_frames())), "{stdout}");

    let text = fs::read_to_string(a.join("corpus.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("#svcnet-corpus v1"));
    assert_eq!(lines.count(), spec.expected_frames());
    assert!(a.join("latents.csv").exists());

    run_small(&b, &cfg, &["gen"]);
    assert_eq!(fs::read(a.join("corpus.csv")).unwrap(), fs::read(b.join("corpus.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    run_small(&tmp.path().join("a"), &cfg, &["gen"]);
    run_small(&tmp.path().join("b"), &cfg, &["--seed", "8", "gen"]);
    let a = fs::read(tmp.path().join("a/corpus.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/corpus.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unwritable_output_fails_without_partial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = run(&blocker.join("out"), &["gen"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    let left: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("file")]);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["train", "--stage", "rnn"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["train"]).status.code(), Some(1));
    let missing = tmp.path().join("none.toml");
    assert_eq!(
        run(tmp.path(), &["--config", missing.to_str().unwrap(), "gen"]).status.code(),
        Some(1)
    );
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[svc]\nmode = \"sometimes\"\n").unwrap();
    assert_eq!(run(tmp.path(), &["--config", bad.to_str().unwrap(), "gen"]).status.code(), Some(1));
}

#[test]
fn unknown_plot_kind_lists_valid_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["plot", "--kind", "bars"]);
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    for kind in ["ppc_scatter", "svc_trajectory", "svc_halves"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn svc_stage_without_encoders_names_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    run_small(tmp.path(), &cfg, &["gen"]);
    let out = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "train", "--stage", "svc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ppc_*"));

    let out = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "train", "--stage", "rec"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "eval"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_verb_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["gradcheck", "--networks", "30"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("networks=30"));
}

#[test]
fn pipeline_outputs_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path());
    let out = tmp.path().join("run");
    full_small(&out, &cfg_path);
    let config = RunConfig::load(&cfg_path).unwrap();
    let pipeline = Pipeline::new(config.clone(), &out);

    // one encoder file per sound the training speakers produced
    let corpus = pipeline.load_corpus().unwrap();
    let (train, test) = pipeline.split(&corpus).unwrap();
    let sounds: BTreeSet<_> = train.sound_counts().into_keys().collect();
    let files = fs::read_dir(out.join("models"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("ppc_"))
        .count();
    assert_eq!(files, sounds.len());

    // every report carries the provenance header
    let hash = config.hash();
    for name in ["metrics_ppc.csv", "metrics_svc.csv", "metrics_rec.csv", "ablation.csv", "word_subsets.csv"] {
        let text = fs::read_to_string(out.join("reports").join(name)).unwrap();
        assert!(text.contains(&format!("# config_hash={hash}")), "{name}");
        assert!(text.contains("# seeds corpus=7 split=8 ppc=9 svc=10 rec=11"), "{name}");
        assert!(text.contains("# corpus=corpus.csv"), "{name}");
    }

    for name in ["metrics_ppc.csv", "metrics_svc.csv", "metrics_rec.csv"] {
        let epochs: Vec<usize> = body_lines(&out.join("reports").join(name))[1..]
            .iter()
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(!epochs.is_empty());
        assert!(epochs.windows(2).all(|w| w[1] == w[0] + 1), "{name}");
    }

    let ablation = body_lines(&out.join("reports/ablation.csv"));
    assert_eq!(ablation[0], "acoustic,state,word,error_rate");
    assert_eq!(ablation.len(), 9);
    let subsets = body_lines(&out.join("reports/word_subsets.csv"));
    let labels: Vec<&str> = subsets[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["none", "disjoint", "same"]);

    // rates recounted from the prediction logs
    let log = parse_prediction_log(&fs::read_to_string(out.join("reports/predictions_ablation.log")).unwrap()).unwrap();
    for row in &ablation[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let flags: Vec<bool> = f[..3].iter().map(|v| *v == "1").collect();
        let recs: Vec<_> = log
            .iter()
            .filter(|r| [r.flags.acoustic, r.flags.state, r.flags.word] == flags[..])
            .collect();
        assert_eq!(recs.len(), test.utterances().len());
        let wrong = recs.iter().filter(|r| r.truth != r.predicted).count();
        assert_eq!(f[3].parse::<f64>().unwrap(), wrong as f64 / recs.len() as f64);
    }
    let log =
        parse_prediction_log(&fs::read_to_string(out.join("reports/predictions_word_subsets.log")).unwrap()).unwrap();
    for row in &subsets[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let recs: Vec<_> = log.iter().filter(|r| r.source.as_deref() == Some(f[0])).collect();
        let wrong = recs.iter().filter(|r| r.truth != r.predicted).count();
        assert_eq!(f[2].parse::<usize>().unwrap(), wrong);
        assert_eq!(f[3].parse::<usize>().unwrap(), recs.len());
        assert_eq!(f[1].parse::<f64>().unwrap(), wrong as f64 / recs.len() as f64);
    }

    let stability = body_lines(&out.join("reports/stability.csv"));
    assert_eq!(stability[0], "speaker,boundary,displacement");
    assert_eq!(stability.len() - 1, test.speakers().len() * (config.corpus.n_words - 1));
}

#[test]
fn plot_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path());
    let out = tmp.path().join("run");
    for args in [&["gen"][..], &["train", "--stage", "ppc"], &["train", "--stage", "svc"]] {
        run_small(&out, &cfg_path, args);
    }
    for kind in ["ppc_scatter", "svc_trajectory", "svc_halves"] {
        run_small(&out, &cfg_path, &["plot", "--kind", kind]);
    }
    let config = RunConfig::load(&cfg_path).unwrap();
    let pipeline = Pipeline::new(config.clone(), &out);
    let corpus = pipeline.load_corpus().unwrap();
    let (_, test) = pipeline.split(&corpus).unwrap();

    let halves = body_lines(&out.join("reports/plot_svc_halves.csv"));
    assert_eq!(halves.len() - 1, test.speakers().len());

    let scatter = body_lines(&out.join("reports/plot_ppc_scatter.csv"));
    assert!(scatter[1..].iter().all(|l| l.split(',').count() == 2 + config.ppc.code_dim));

    // rotation keeps pairwise distances of the raw codes
    let raw_corpus = load_corpus(&out.join("corpus.csv")).unwrap();
    let encoders = load_encoders(&out.join("models")).unwrap();
    let sound = *encoders.keys().next().unwrap();
    let rows: Vec<(usize, Vec<f64>)> = scatter[1..]
        .iter()
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            (v[1].parse().unwrap(), v[2..].iter().map(|x| x.parse().unwrap()).collect())
        })
        .collect();
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|(frame, _)| {
            let f = &raw_corpus.frames[*frame];
            encode_frame(&encoders[&sound], &f.features).unwrap().0
        })
        .collect();
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            assert!((d(&raw[i], &raw[j]) - d(&rows[i].1, &rows[j].1)).abs() < 1e-9);
        }
    }

    let traj = body_lines(&out.join("reports/plot_svc_trajectory.csv"));
    assert_eq!(traj[0], "speaker,step,word_index,svc_0,svc_1");
    let frames: usize = test.frames.len();
    assert_eq!(traj.len() - 1, frames);
}

#[test]
fn retraining_gives_identical_models() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    full_small(&a, &cfg);
    full_small(&b, &cfg);
    let names: Vec<_> = fs::read_dir(a.join("models")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() > 3);
    for n in names {
        assert_eq!(
            fs::read(a.join("models").join(&n)).unwrap(),
            fs::read(b.join("models").join(&n)).unwrap(),
            "{n:?}"
        );
    }
}
