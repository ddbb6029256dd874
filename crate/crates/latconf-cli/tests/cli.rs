use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn latconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latconf"))
        .args(args)
        .output()
        .expect("spawn latconf")
}

fn ok(args: &[&str]) -> Output {
    let out = latconf(args);
    assert!(
        out.status.success(),
        "latconf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(dir: &Path, seed: &str) {
    ok(&[
        "gen", "--out", path(dir), "--vocab", "15", "--utterances", "12", "--len-min", "3",
        "--len-max", "5", "--p-sub", "0.3", "--depth", "2", "--seed", seed,
    ]);
}

#[test]
fn full_pipeline_gen_tag_train_predict_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    gen_small(&corpus, "5");
    for f in ["refs.ctm", "refs.txt", "cn", "lat"] {
        assert!(corpus.join(f).exists(), "missing {f}");
    }

    let tags = tmp.path().join("tags.txt");
    let out = ok(&[
        "tag", "--mode", "cn", "--hyp", path(&corpus.join("cn")), "--ref",
        path(&corpus.join("refs.ctm")), "--out", path(&tags),
    ]);
    assert!(stderr(&out).contains("tagged 12 utterances"));

    let model = tmp.path().join("model.ckpt");
    let out = ok(&[
        "train", "--mode", "cn", "--data", path(&corpus), "--tags", path(&tags), "--merge",
        "attention", "--cell", "gated", "--d-h", "4", "--d-f", "0", "--epochs", "2", "--seed",
        "1", "--out", path(&model),
    ]);
    let log = stderr(&out);
    assert!(log.contains("epoch 0"), "missing baseline epoch: {log}");
    assert!(log.contains("selected epoch"), "missing selection line: {log}");

    let scores = tmp.path().join("scores.txt");
    ok(&["predict", "--model", path(&model), "--data", path(&corpus), "--out", path(&scores)]);
    let n_scores = fs::read_to_string(&scores).unwrap().lines().count();
    let n_tags = fs::read_to_string(&tags).unwrap().lines().count();
    assert_eq!(n_scores, n_tags);

    let report = tmp.path().join("report.txt");
    let pr = tmp.path().join("pr.tsv");
    let out = ok(&[
        "eval", "--scores", path(&scores), "--tags", path(&tags), "--report", path(&report),
        "--pr", path(&pr), "--baselines", "--mode", "cn", "--data", path(&corpus),
    ]);
    let text = stdout(&out);
    for section in ["== model ==", "== posterior baseline ==", "== tree baseline =="] {
        assert!(text.contains(section), "missing {section}:\n{text}");
    }
    assert_eq!(fs::read_to_string(&report).unwrap(), text);
    let pr_text = fs::read_to_string(&pr).unwrap();
    assert!(pr_text.lines().count() >= 2);
    for line in pr_text.lines() {
        assert_eq!(line.split('\t').count(), 3);
    }
}

#[test]
fn gen_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    gen_small(&a, "9");
    gen_small(&b, "9");
    gen_small(&c, "10");
    for f in ["refs.ctm", "refs.txt", "cn/u0000.cn", "lat/u0000.slf"] {
        let fa = fs::read(a.join(f)).unwrap();
        let fb = fs::read(b.join(f)).unwrap();
        assert_eq!(fa, fb, "{f} differs between identical seeds");
    }
    assert_ne!(
        fs::read(a.join("refs.ctm")).unwrap(),
        fs::read(c.join("refs.ctm")).unwrap(),
        "different seeds produced identical references"
    );
}

#[test]
fn predict_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    gen_small(&corpus, "3");
    let tags = tmp.path().join("tags.txt");
    ok(&[
        "tag", "--mode", "seq", "--hyp", path(&corpus.join("cn")), "--ref",
        path(&corpus.join("refs.txt")), "--out", path(&tags),
    ]);
    let model = tmp.path().join("model.ckpt");
    ok(&[
        "train", "--mode", "seq", "--data", path(&corpus), "--tags", path(&tags), "--merge",
        "mean", "--cell", "simple", "--d-h", "3", "--d-f", "0", "--epochs", "1", "--out",
        path(&model),
    ]);
    let s1 = tmp.path().join("s1.txt");
    let s2 = tmp.path().join("s2.txt");
    ok(&["predict", "--model", path(&model), "--data", path(&corpus), "--out", path(&s1)]);
    ok(&["predict", "--model", path(&model), "--data", path(&corpus), "--out", path(&s2)]);
    assert_eq!(fs::read(&s1).unwrap(), fs::read(&s2).unwrap());
}

#[test]
fn lattice_mode_round_trips_through_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    gen_small(&corpus, "4");
    let tags = tmp.path().join("tags.txt");
    ok(&[
        "tag", "--mode", "lat", "--hyp", path(&corpus.join("lat")), "--ref",
        path(&corpus.join("refs.ctm")), "--out", path(&tags),
    ]);
    let model = tmp.path().join("model.ckpt");
    ok(&[
        "train", "--mode", "lat", "--data", path(&corpus), "--tags", path(&tags), "--cell",
        "gated", "--merge", "posterior", "--d-h", "3", "--d-f", "0", "--epochs", "1", "--out",
        path(&model),
    ]);
    // The checkpoint remembers the mode: predict needs no mode flag and
    // must score exactly the tagged lattice arcs.
    let scores = tmp.path().join("scores.txt");
    ok(&["predict", "--model", path(&model), "--data", path(&corpus), "--out", path(&scores)]);
    let n_scores = fs::read_to_string(&scores).unwrap().lines().count();
    let n_tags = fs::read_to_string(&tags).unwrap().lines().count();
    assert_eq!(n_scores, n_tags);
}

#[test]
fn eval_two_point_pool_reproduces_frozen_nce() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("fix.scores");
    let tags = tmp.path().join("fix.tags");
    let report = tmp.path().join("fix.report");
    fs::write(&scores, "u1 0 0.900000\nu1 1 0.200000\nu1 2 0.500000\n").unwrap();
    fs::write(&tags, "u1 0 1 reduced_cnc\nu1 1 0 reduced_cnc\n").unwrap();
    let out = ok(&[
        "eval", "--scores", path(&scores), "--tags", path(&tags), "--report", path(&report),
    ]);
    let text = stdout(&out);
    assert!(text.contains("nce                   0.7630"), "unexpected report:\n{text}");
    assert!(text.contains("samples               2"));
    // The untagged third score is a deletion-side arc: excluded, noted.
    assert!(stderr(&out).contains("excluded 1 scored arcs"));
}

#[test]
fn tag_lattice_overlap_threshold_controls_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let slf = tmp.path().join("u1.slf");
    let refs = tmp.path().join("refs.ctm");
    // One arc spanning 0..2 against a reference "cat" spanning 1..3:
    // intersection 1, union 3. Ratio 1/3 passes at 0.3, fails at 0.5.
    fs::write(
        &slf,
        "UTTERANCE=u1\nN=2 L=1\nI=0 t=0.00\nI=1 t=2.00\nJ=0 S=0 E=1 W=cat p=1.000000\n",
    )
    .unwrap();
    fs::write(&refs, "u1 1 1.00 2.00 cat\n").unwrap();
    let loose = tmp.path().join("loose.tags");
    let strict = tmp.path().join("strict.tags");
    ok(&[
        "tag", "--mode", "lat", "--hyp", path(&slf), "--ref", path(&refs),
        "--overlap-threshold", "0.3", "--out", path(&loose),
    ]);
    ok(&[
        "tag", "--mode", "lat", "--hyp", path(&slf), "--ref", path(&refs),
        "--overlap-threshold", "0.5", "--out", path(&strict),
    ]);
    assert_eq!(fs::read_to_string(&loose).unwrap(), "u1 0 1 overlap\n");
    assert_eq!(fs::read_to_string(&strict).unwrap(), "u1 0 0 overlap\n");
}

#[test]
fn gradcheck_reports_small_error() {
    for mode in ["seq", "cn", "lat"] {
        let out = ok(&["gradcheck", "--mode", mode, "--d-h", "4", "--d-f", "3"]);
        assert!(stdout(&out).starts_with("max relative error"));
    }
}

#[test]
fn usage_errors_exit_two() {
    let cases: &[&[&str]] = &[
        &["--bogus"],
        &["gen", "--out", "/tmp/never", "--p-sub", "1.7"],
        &["gen", "--out", "/tmp/never", "--vocab", "3", "--depth", "9"],
        &["tag", "--mode", "bogus", "--hyp", "x", "--ref", "y", "--out", "z"],
        &["train"],
    ];
    for args in cases {
        let out = latconf(args);
        assert_eq!(out.status.code(), Some(2), "latconf {args:?}");
    }
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("s.txt");
    let tags = tmp.path().join("t.txt");
    fs::write(&scores, "u1 0 0.5\n").unwrap();
    fs::write(&tags, "u1 0 1 overlap\nu1 1 0 overlap\n").unwrap();
    let report = tmp.path().join("r.txt");
    let cases: &[&[&str]] = &[
        &["predict", "--model", "/nonexistent.ckpt", "--data", "/tmp", "--out", "/tmp/o"],
        &["tag", "--mode", "cn", "--hyp", "/nonexistent", "--ref", "/nonexistent", "--out", "/tmp/o"],
        // A tagged arc without a score is a hard failure, not an exclusion.
        &[
            "eval",
            "--scores",
            path(&scores),
            "--tags",
            path(&tags),
            "--report",
            path(&report),
        ],
    ];
    for args in cases {
        let out = latconf(args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "latconf {args:?}:\n{}",
            stderr(&out)
        );
    }
}

#[test]
fn gen_config_file_sets_values_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.cfg");
    fs::write(&cfg, "# comment\nvocab = 15\nutterances = 12\nlen_min = 3\nlen_max = 5\np_sub = 0.3\ndepth = 2\nseed = 9\n").unwrap();
    let from_cfg = tmp.path().join("from_cfg");
    let from_flags = tmp.path().join("from_flags");
    ok(&["gen", "--config", path(&cfg), "--out", path(&from_cfg)]);
    gen_small(&from_flags, "9");
    assert_eq!(
        fs::read(from_cfg.join("refs.ctm")).unwrap(),
        fs::read(from_flags.join("refs.ctm")).unwrap()
    );
    // A flag overrides the file's seed: different corpus.
    let overridden = tmp.path().join("overridden");
    ok(&["gen", "--config", path(&cfg), "--seed", "10", "--out", path(&overridden)]);
    assert_ne!(
        fs::read(from_cfg.join("refs.ctm")).unwrap(),
        fs::read(overridden.join("refs.ctm")).unwrap()
    );
    // Unknown keys are usage errors.
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "vocals = 11\n").unwrap();
    let out = latconf(&["gen", "--config", path(&bad), "--out", path(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}
