use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndf::lfdata::{read_pfm, write_pfm, DisparityMap};

fn ndf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ndf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--hw", "32", "--grid", "3", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["synth", "--kind", "constant", "--d0", "1.5", "--hw", "64", "--grid", "5", "--out", p(&a)]);
    let pngs = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 25);
    let gt = read_pfm(&a.join("gt.pfm")).unwrap();
    assert_eq!((gt.width(), gt.height()), (64, 64));
    assert!(gt.values().iter().all(|&v| v == 1.5));
    let lf = ndf::lfdata::load_lightfield(&a.join("manifest.txt")).unwrap();
    assert_eq!(lf.view_count(), 25);

    let b = tmp.path().join("b");
    ok(&["synth", "--kind", "constant", "--d0", "1.5", "--hw", "64", "--grid", "5", "--out", p(&b)]);
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn two_layer_ground_truth_has_two_levels() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--kind", "two_layer"]);
    let gt = read_pfm(&tmp.path().join("gt.pfm")).unwrap();
    let mut levels: Vec<u64> = gt.values().iter().map(|v| v.to_bits()).collect();
    levels.sort_unstable();
    levels.dedup();
    assert_eq!(levels.len(), 2);
}

#[test]
fn reconstruct_render_eval_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--kind", "slanted", "--d0", "0.5"]);
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("cfg.txt");
    fs::write(&cfg, "mlp_hidden = 16\npatch_size = 16\npatches_per_step = 2\nlevels = 2\n").unwrap();
    ok(&[
        "reconstruct",
        "--manifest",
        p(&data.join("manifest.txt")),
        "--config",
        p(&cfg),
        "--iterations",
        "1",
        "--quiet",
        "--out",
        p(&run),
    ]);
    for f in ["disparity.pfm", "checkpoint.ndf", "log.csv", "metrics.json", "config.txt", "preview.png"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "step,train_loss,monitor_loss,sigma,lr");
    assert_eq!(log.lines().count(), 2);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["config_hash"].as_str().unwrap().len(), 64);
    assert!(fs::read_to_string(run.join("config.txt")).unwrap().contains("iterations = 1\n"));

    // Rendering at the training resolution reproduces the reconstruction.
    let rendered = tmp.path().join("render");
    ok(&["render", "--checkpoint", p(&run.join("checkpoint.ndf")), "--out", p(&rendered)]);
    assert_eq!(
        fs::read(run.join("disparity.pfm")).unwrap(),
        fs::read(rendered.join("disparity_32x32.pfm")).unwrap()
    );
    for res in ["512x512", "1024x1024"] {
        let out = ok(&["render", "--checkpoint", p(&run.join("checkpoint.ndf")), "--res", res, "--out", p(&rendered)]);
        assert!(String::from_utf8_lossy(&out.stderr).contains("disparity range"));
    }
    let big = read_pfm(&rendered.join("disparity_1024x1024.pfm")).unwrap();
    assert_eq!((big.width(), big.height()), (1024, 1024));
    assert!(rendered.join("disparity_512x512.pfm").is_file());
    assert!(rendered.join("preview_1024x1024.png").is_file());

    let eval_dir = tmp.path().join("eval");
    let gt = data.join("gt.pfm");
    let out = ok(&["eval", "--pred", p(&gt), "--gt", p(&gt), "--out", p(&eval_dir)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let thresholds: Vec<f64> = report["badpix"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            assert_eq!(e["percent"], 0.0);
            e["threshold"].as_f64().unwrap()
        })
        .collect();
    assert_eq!(thresholds, vec![0.01, 0.03, 0.07]);
    assert_eq!(report["mse100"], 0.0);
    assert!(eval_dir.join("metrics.json").is_file());

    let prof = tmp.path().join("prof");
    ok(&["profile", "--map", p(&gt), "--row", "3", "--out", p(&prof)]);
    let csv = fs::read_to_string(prof.join("profile_row3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
    let out = ndf(&["profile", "--map", p(&gt), "--row", "32", "--out", p(&prof)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_of_a_constant_map_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let map = tmp.path().join("flat.pfm");
    write_pfm(&DisparityMap::from_fn(7, 4, |_, _| 0.75).unwrap(), &map).unwrap();
    ok(&["profile", "--map", p(&map), "--row", "0", "--out", p(tmp.path())]);
    let csv = fs::read_to_string(tmp.path().join("profile_row0.csv")).unwrap();
    let values: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values.len(), 7);
    assert!(values.iter().all(|v| v.parse::<f64>().unwrap() == 0.75));
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere").join("manifest.txt");
    let out = ndf(&["reconstruct", "--manifest", p(&missing), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));

    assert_eq!(ndf(&["synth"]).status.code(), Some(1));
    assert_eq!(ndf(&["frobnicate"]).status.code(), Some(1));

    let cfg = tmp.path().join("bad.txt");
    fs::write(&cfg, "learning_rat = 0.1\n").unwrap();
    let out = ndf(&["reconstruct", "--manifest", p(&missing), "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    let ckpt = tmp.path().join("broken.ndf");
    fs::write(&ckpt, b"NDFCKPT\0\x09\0\0\0").unwrap();
    let out = ndf(&["render", "--checkpoint", p(&ckpt), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));

    let a = tmp.path().join("a.pfm");
    let b = tmp.path().join("b.pfm");
    write_pfm(&DisparityMap::from_fn(4, 4, |_, _| 0.0).unwrap(), &a).unwrap();
    write_pfm(&DisparityMap::from_fn(5, 4, |_, _| 0.0).unwrap(), &b).unwrap();
    assert_eq!(ndf(&["eval", "--pred", p(&a), "--gt", p(&b), "--out", p(tmp.path())]).status.code(), Some(2));
}

#[test]
fn every_subcommand_documents_its_flags() {
    for (cmd, flags) in [
        ("synth", &["--kind", "--d0", "--rect", "--hw", "--grid", "--seed", "--out"][..]),
        ("reconstruct", &["--manifest", "--config", "--iterations", "--selection", "--out"][..]),
        ("render", &["--checkpoint", "--res", "--out"][..]),
        ("eval", &["--pred", "--gt", "--thresholds", "--out"][..]),
        ("profile", &["--map", "--row", "--out"][..]),
    ] {
        let out = ok(&[cmd, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
