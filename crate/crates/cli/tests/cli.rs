//! Drives the `ctm` binary end to end and checks exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ctm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctm")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, kind: &str, dims: &str, seed: u64, dtype: &str) -> PathBuf {
    let out = dir.join(format!("{kind}-{seed}.{dtype}"));
    let o = ctm(&["synth", "--kind", kind, "--dims", dims, "--seed", &seed.to_string(), "--dtype", dtype, "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_f64(path: &Path) -> Vec<f64> {
    std::fs::read(path)
        .unwrap()
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// `key=value` from a single-line report.
fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
        .parse()
        .unwrap()
}

#[test]
fn compress_decompress_respects_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "banded", "20,24,28", 3, "f64le");
    let original = read_f64(&input);
    for predictor in ["lorenzo", "interpolation"] {
        for eb in ["1e-2", "1e-5"] {
            let arc = dir.path().join("a.ctm");
            let back = dir.path().join("back.f64");
            let o = ctm(&[
                "compress", "--input", p(&input), "--dims", "20,24,28", "--dtype", "f64le", "--eb", eb,
                "--predictor", predictor, "--out", p(&arc),
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            assert_eq!(field(&stdout(&o), "n") as usize, original.len());
            let o = ctm(&["decompress", "--input", p(&arc), "--out", p(&back)]);
            assert_eq!(code(&o), 0);
            let eb: f64 = eb.parse().unwrap();
            let recon = read_f64(&back);
            assert_eq!(recon.len(), original.len());
            assert!(original.iter().zip(&recon).all(|(a, b)| (a - b).abs() <= eb));
        }
    }
}

#[test]
fn timing_csv_gets_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "smooth", "16,16,16", 1, "f32le");
    let csv = dir.path().join("t.csv");
    for _ in 0..2 {
        let o = ctm(&[
            "compress", "--input", p(&input), "--dims", "16,16,16", "--eb", "1e-3", "--out",
            p(&dir.path().join("a.ctm")), "--timing-csv", p(&csv),
        ]);
        assert_eq!(code(&o), 0);
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_pq,t_freq_book,t_encode,t_lossless,t_total");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|&t| t >= 0.0));
        assert!(v[..4].iter().sum::<f64>() <= v[4] * 1.0001 + 1e-6);
    }
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ctm(&[])), 1);
    assert_eq!(code(&ctm(&["compress", "--eb", "1e-3"])), 1);
    assert_eq!(code(&ctm(&["--help"])), 0);
    let input = synth(dir.path(), "smooth", "8,8,8", 1, "f64le");
    let out = dir.path().join("a.ctm");
    let args = |eb: &'static str, dims: &'static str| {
        vec!["compress", "--input", p(&input), "--dims", dims, "--dtype", "f64le", "--eb", eb, "--out", p(&out)]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let run = |a: Vec<String>| code(&Command::new(env!("CARGO_BIN_EXE_ctm")).args(a).output().unwrap());
    assert_eq!(run(args("-1", "8,8,8")), 1);
    assert_eq!(run(args("1e-3", "8,8,0")), 1);
    assert_eq!(run(args("1e-3", "8,8,9")), 2);
    let missing = dir.path().join("missing.f64");
    assert_eq!(
        code(&ctm(&["compress", "--input", p(&missing), "--dims", "8", "--eb", "1e-3", "--out", p(&out)])),
        2
    );
    std::fs::write(&out, b"not an archive").unwrap();
    assert_eq!(code(&ctm(&["decompress", "--input", p(&out), "--out", p(&dir.path().join("x"))])), 2);
}

#[test]
fn calibrate_predict_select_search_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dims = "32,32,32";
    let train: Vec<PathBuf> = (1..=2).map(|s| synth(d, "smooth", dims, s, "f64le")).collect();
    let held = synth(d, "smooth", dims, 7, "f64le");
    let manifest = d.join("train.csv");
    let mut text = String::from("path,dims,dtype,name\n");
    for (i, t) in train.iter().enumerate() {
        text.push_str(&format!("{},\"{dims}\",f64le,train{i}\n", t.file_name().unwrap().to_str().unwrap()));
    }
    std::fs::write(&manifest, text).unwrap();
    let held_manifest = d.join("held.csv");
    std::fs::write(&held_manifest, format!("path,dims,dtype,name\n{},\"{dims}\",f64le,held\n", p(&held))).unwrap();
    let model = d.join("model.json");
    let records = d.join("records.csv");

    let o = ctm(&["calibrate", "--manifest", p(&manifest), "--repeats", "1", "--model-out", p(&model)]);
    assert_eq!(code(&o), 1);
    assert!(!model.exists());

    let o = ctm(&[
        "calibrate", "--manifest", p(&manifest), "--model-out", p(&model), "--records-csv", p(&records),
        "--machine", "ci", "--system-repeats", "6",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&stdout(&o), "records") as usize, 2 * 12 * 2);
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 1 + 48);

    let base = ["--input", p(&held), "--dims", dims, "--dtype", "f64le", "--model", p(&model)];
    let o = ctm(&[&["predict", "--eb", "1e-3", "--predictor", "interpolation"][..], &base[..]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let (t, lo, hi) = (field(&line, "t_total"), field(&line, "ci_low"), field(&line, "ci_high"));
    assert!(t > 0.0 && lo <= t && t <= hi, "{line}");

    let o = ctm(&[&["select-predictor", "--eb", "1e-4"][..], &base[..]].concat());
    assert_eq!(code(&o), 0);
    let last = stdout(&o).lines().last().unwrap().to_string();
    assert!(last.starts_with("chosen=lorenzo") || last.starts_with("chosen=interpolation"), "{last}");

    let o = ctm(&[&["search-eb", "--target-seconds", "1e-9"][..], &base[..]].concat());
    match code(&o) {
        0 => assert!(stdout(&o).contains("feasible=false"), "{}", stdout(&o)),
        3 => assert!(String::from_utf8_lossy(&o.stderr).contains("monotone")),
        c => panic!("exit {c}"),
    }
    assert_eq!(code(&ctm(&[&["search-eb", "--target-seconds", "-1"][..], &base[..]].concat())), 1);

    let cells = d.join("cells.csv");
    let o = ctm(&[
        "evaluate", "--manifest", p(&held_manifest), "--model", p(&model), "--eb-grid", "1e-2,1e-4",
        "--cells-csv", p(&cells),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).is_empty());
    assert_eq!(std::fs::read_to_string(&cells).unwrap().lines().count(), 1 + 4);

    let mut doc = std::fs::read_to_string(&model).unwrap();
    doc = doc.replacen("\"version\": 1", "\"version\": 2", 1);
    let bumped = d.join("v2.json");
    std::fs::write(&bumped, doc).unwrap();
    let o = ctm(&["predict", "--eb", "1e-3", "--input", p(&held), "--dims", dims, "--dtype", "f64le", "--model", p(&bumped)]);
    assert_eq!(code(&o), 3);
    std::fs::write(&bumped, "{}").unwrap();
    let o = ctm(&["predict", "--eb", "1e-3", "--input", p(&held), "--dims", dims, "--dtype", "f64le", "--model", p(&bumped)]);
    assert_eq!(code(&o), 3);
}
