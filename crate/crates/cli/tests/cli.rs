use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spikesr::events::io::{load_events, save_events, EventFormat, LoadOptions};
use spikesr::{Event, EventStream, Polarity};

fn spikesr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikesr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spikesr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn load(p: &Path) -> EventStream {
    load_events(p, EventFormat::from_path(p).unwrap(), LoadOptions::default()).unwrap()
}

/// Synthesises and downsamples a small corpus; returns the manifest path.
fn corpus(dir: &Path, n: usize, size: &str) -> PathBuf {
    let c = dir.join("corpus");
    ok(&["synth", "--out", s(&c), "--n", &n.to_string(), "--size", size, "--dur", "24", "--seed", "5"]);
    ok(&["downsample", s(&c)]);
    c.join("manifest.txt")
}

#[test]
fn synth_writes_files_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--n", "10", "--size", "32x32", "--dur", "100", "--seed", "7", "--out", s(d)]);
    }
    let streams: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "evbin"))
        .collect();
    assert_eq!(streams.len(), 10);
    let listing = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(listing.lines().filter(|l| !l.starts_with('#')).count(), 10);
    for p in &streams {
        let name = p.file_name().unwrap();
        assert!(listing.contains(name.to_str().unwrap()));
        assert_eq!(fs::read(p).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn synth_rejects_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = spikesr(&["synth", "--n", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn downsample_halves_geometry_and_keeps_counts() {
    let dir = tempfile::tempdir().unwrap();
    let events: Vec<Event> = (0..500u64)
        .map(|i| Event::new(i * 37, (i * 7 % 34) as u16, (i * 13 % 34) as u16, if i % 3 == 0 { Polarity::Off } else { Polarity::On }))
        .collect();
    let src = dir.path().join("digit.evbin");
    save_events(&EventStream::from_unsorted(34, 34, events).unwrap(), &src, EventFormat::Evbin).unwrap();
    ok(&["downsample", s(&src)]);
    let lr = load(&dir.path().join("digit.lr.evbin"));
    assert_eq!((lr.width(), lr.height(), lr.len()), (17, 17, 500));
}

#[test]
fn downsample_reports_corrupt_files_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let good = EventStream::new(4, 4, vec![Event::new(0, 3, 3, Polarity::On)]).unwrap();
    save_events(&good, &dir.path().join("a.evbin"), EventFormat::Evbin).unwrap();
    fs::write(dir.path().join("b.evbin"), b"EVS1 garbage").unwrap();
    save_events(&good, &dir.path().join("c.csv"), EventFormat::Csv).unwrap();
    let out = spikesr(&["downsample", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("b.evbin"), "{stderr}");
    assert!(dir.path().join("a.lr.evbin").exists());
    assert!(dir.path().join("c.lr.csv").exists());
    assert!(!dir.path().join("b.lr.evbin").exists());

    let missing = spikesr(&["downsample", s(&dir.path().join("nope.evbin"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn train_writes_one_row_per_epoch_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 8, "16x16");
    let run = |tag: &str| {
        let ckpt = dir.path().join(format!("{tag}.evsrw"));
        let stdout = ok(&[
            "train", "--manifest", s(&m), "--epochs", "1", "--batch", "4", "--steps", "24",
            "--variant", "ultralight", "--mode", "dual_sequential", "--out", s(&ckpt),
        ]);
        assert!(stdout.contains("final val_rmse_st: "));
        ckpt
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let report = fs::read_to_string(a.with_extension("csv")).unwrap();
    let rows: Vec<&str> = report.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,train_loss,w1,w2,w3,val_rmse_st");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,"));

    let info = ok(&["info", "--checkpoint", s(&a)]);
    assert!(info.contains("params: 232"), "{info}");
}

#[test]
fn train_reads_config_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 4, "16x16");
    let cfg = dir.path().join("train.ini");
    fs::write(
        &cfg,
        format!(
            "[train]\nepochs = 2\nbatch = 2\nsteps = 24\n\n[model]\nvariant = dual_layer\n\n[data]\nmanifest = {}\ncheckpoint = from_config.evsrw\n",
            m.display()
        ),
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--epochs", "1"]);
    let ckpt = dir.path().join("from_config.evsrw");
    let report = fs::read_to_string(ckpt.with_extension("csv")).unwrap();
    assert_eq!(report.lines().filter(|l| !l.starts_with('#')).count(), 2);
    assert!(ok(&["info", "--checkpoint", s(&ckpt)]).contains("params: 464"));

    fs::write(&cfg, "[train]\nepochs = lots\n").unwrap();
    assert_eq!(spikesr(&["train", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn infer_modes_agree_and_double_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 4, "34x34");
    let ckpt = dir.path().join("m.evsrw");
    ok(&["train", "--manifest", s(&m), "--epochs", "1", "--batch", "2", "--steps", "24", "--out", s(&ckpt)]);
    let input = dir.path().join("corpus/bar_0000.lr.evbin");
    assert_eq!(load(&input).width(), 17);
    let (seq, conc) = (dir.path().join("seq.evbin"), dir.path().join("conc.evbin"));
    ok(&["infer", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&seq), "--mode", "dual_sequential"]);
    ok(&["infer", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&conc), "--mode", "dual_concurrent"]);
    assert_eq!(fs::read(&seq).unwrap(), fs::read(&conc).unwrap());
    let out = load(&seq);
    assert_eq!((out.width(), out.height()), (34, 34));

    let wrong = spikesr(&["infer", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&seq), "--variant", "dual_layer"]);
    assert_eq!(wrong.status.code(), Some(2));
    let joint = spikesr(&["infer", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&seq), "--mode", "joint"]);
    assert_eq!(joint.status.code(), Some(2));

    let empty = dir.path().join("empty.evbin");
    save_events(&EventStream::empty(17, 17), &empty, EventFormat::Evbin).unwrap();
    let eout = dir.path().join("empty_out.evbin");
    let res = spikesr(&["infer", "--checkpoint", s(&ckpt), "--input", s(&empty), "--output", s(&eout)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let e = load(&eout);
    assert!(e.is_empty());
    assert_eq!((e.width(), e.height()), (34, 34));
}

#[test]
fn eval_identity_batch_and_geometry_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 3, "16x16");
    let c = m.parent().unwrap();
    let hr = c.join("bar_0000.evbin");
    let kv = ok(&["eval", "--pred", s(&hr), "--gt", s(&hr)]);
    assert!(kv.lines().any(|l| l == "rmse_st=0"), "{kv}");
    assert!(kv.lines().any(|l| l == "pa_percent=100"), "{kv}");

    let listing = dir.path().join("pairs.txt");
    fs::write(&listing, "corpus/bar_0000.evbin,corpus/bar_0000.evbin\ncorpus/bar_0001.evbin,corpus/bar_0002.evbin\n").unwrap();
    let csv = ok(&["eval", "--manifest", s(&listing)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("name,rmse_st"));
    assert!(lines[1].starts_with("corpus/bar_0000.evbin,0,"));
    assert!(lines[3].starts_with("mean,"));

    let report = dir.path().join("report.txt");
    let bad = spikesr(&["eval", "--pred", s(&c.join("bar_0000.lr.evbin")), "--gt", s(&hr), "--out", s(&report)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!report.exists());
}

#[test]
fn render_frames_and_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    save_events(&EventStream::new(4, 4, vec![Event::new(500, 2, 1, Polarity::On)]).unwrap(), &one, EventFormat::Csv).unwrap();
    let img = dir.path().join("one.ppm");
    ok(&["render", "--input", s(&one), "--out", s(&img)]);
    let bytes = fs::read(&img).unwrap();
    let header = b"P6\n4 4\n255\n";
    assert!(bytes.starts_with(header));
    let px = &bytes[header.len()..];
    let coloured: Vec<&[u8]> = px.chunks(3).filter(|p| *p != [255, 255, 255]).collect();
    assert_eq!(coloured, vec![&[255u8, 0, 0][..]]);

    let span = dir.path().join("span.evbin");
    save_events(
        &EventStream::new(4, 4, vec![Event::new(0, 0, 0, Polarity::On), Event::new(10_000, 1, 1, Polarity::Off)]).unwrap(),
        &span,
        EventFormat::Evbin,
    )
    .unwrap();
    ok(&["render", "--input", s(&span), "--out", s(&dir.path().join("f.ppm")), "--every", "5"]);
    assert!(dir.path().join("f_0000.ppm").exists());
    assert!(dir.path().join("f_0001.ppm").exists());
    assert!(!dir.path().join("f_0002.ppm").exists());

    let zero = spikesr(&["render", "--input", s(&span), "--out", s(&img), "--window-ms", "0"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn info_reports_counts_and_flops() {
    let dual = ok(&["info", "--variant", "dual_layer", "--dims", "10x10x10"]);
    assert!(dual.lines().any(|l| l == "params: 464"));
    assert!(dual.lines().any(|l| l == "flops: 1312000"));
    assert!(ok(&["info", "--variant", "ultralight"]).lines().any(|l| l == "params: 232"));
    assert_eq!(spikesr(&["info", "--variant", "dual_layer", "--dims", "10x10"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["synth", "downsample", "train", "infer", "eval", "render", "info"] {
        assert!(ok(&[cmd, "--help"]).contains("Usage"));
    }
}
