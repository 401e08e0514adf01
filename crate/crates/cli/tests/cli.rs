use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featcraft")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Deterministic two-class CSV with a sign-product target.
fn csv(rows: usize, phase: f64) -> String {
    let mut s = String::from("a,b,c,label\n");
    for i in 0..rows {
        let t = i as f64;
        let a = (t * 0.7 + phase).sin() * 3.0;
        let b = (t * 1.3 + phase).cos() * 2.0;
        let c = (i % 7) as f64 + 0.5;
        let label = if a * b > 0.0 { "yes" } else { "no" };
        s.push_str(&format!("{a},{b},{c},{label}\n"));
    }
    s
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        fs::create_dir(&corpus).unwrap();
        fs::write(corpus.join("one.csv"), csv(60, 0.0)).unwrap();
        fs::write(corpus.join("two.csv"), csv(80, 0.4)).unwrap();
        fs::write(corpus.join("targets.txt"), "# file=target\none.csv=label\ntwo.csv=label\n").unwrap();
        fs::write(dir.path().join("input.csv"), csv(50, 1.1)).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        run(args, self.dir.path())
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (data, map, out) = (self.p("corpus"), self.p("corpus/targets.txt"), self.p(out));
        let mut args = vec!["train", "--data-dir", &data, "--target-map", &map, "--out", &out];
        args.extend_from_slice(extra);
        self.run(&args)
    }
}

#[test]
fn train_writes_one_scaler_record_per_dataset() {
    let f = Fixture::new();
    let o = f.train("m.trm", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("scaler records: 2"), "{}", stdout(&o));
    assert!(f.path("m.trm").exists());
}

#[test]
fn train_on_empty_directory_is_a_data_error() {
    let f = Fixture::new();
    fs::create_dir(f.path("empty")).unwrap();
    let (data, map, out) = (f.p("empty"), f.p("corpus/targets.txt"), f.p("m.trm"));
    let o = f.run(&["train", "--data-dir", &data, "--target-map", &map, "--out", &out]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let f = Fixture::new();
    fs::write(f.path("bad.cfg"), "depth=2\ncolour=red\n").unwrap();
    let cfg = f.p("bad.cfg");
    assert_eq!(code(&f.train("m.trm", &["--config", &cfg])), 2);
    assert_eq!(code(&f.run(&["print-config", "--config", &cfg])), 2);
}

#[test]
fn transform_respects_the_cap() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input, out) = (f.p("m.trm"), f.p("input.csv"), f.p("out.csv"));
    let o = f.run(&[
        "transform", "--trm", &trm, "--input", &input, "--target", "label", "--depth", "1", "--select", "1.0",
        "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    let columns = csv_fields(&header);
    // three originals, at most 2 * 3 generated, one target
    assert!((4..=3 + 6 + 1).contains(&columns), "{header}");
    assert!(f.path("out.csv.lineage.json").exists());
    assert!(stdout(&o).contains("selected originals: 3"));
}

fn csv_fields(line: &str) -> usize {
    let mut n = 1;
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => n += 1,
            _ => {}
        }
    }
    n
}

#[test]
fn bin_count_mismatch_is_a_config_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m8.trm", &["--bins", "8"])), 0);
    let (trm, input, out) = (f.p("m8.trm"), f.p("input.csv"), f.p("out.csv"));
    let o = f.run(&["transform", "--trm", &trm, "--input", &input, "--target", "label", "--out", &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_selection_is_a_config_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input, out) = (f.p("m.trm"), f.p("input.csv"), f.p("out.csv"));
    let o = f.run(&["transform", "--trm", &trm, "--input", &input, "--target", "label", "--select", "0", "--out", &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_is_deterministic() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input) = (f.p("m.trm"), f.p("input.csv"));
    let (r1, r2) = (f.p("r1.json"), f.p("r2.json"));
    let a = f.run(&["evaluate", "--trm", &trm, "--input", &input, "--target", "label", "--out", &r1]);
    let b = f.run(&["evaluate", "--trm", &trm, "--input", &input, "--target", "label", "--out", &r2]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("improved_any"));
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
}

#[test]
fn evaluate_writes_default_report_name() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input) = (f.p("m.trm"), f.p("input.csv"));
    let o = f.run(&["evaluate", "--trm", &trm, "--input", &input, "--target", "label", "--threads", "1"]);
    assert_eq!(code(&o), 0);
    assert!(f.path("input.report.json").exists());
}

#[test]
fn too_many_folds_is_a_data_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input) = (f.p("m.trm"), f.p("input.csv"));
    let o = f.run(&["evaluate", "--trm", &trm, "--input", &input, "--target", "label", "--k", "40"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_target_is_a_config_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.trm", &[])), 0);
    let (trm, input) = (f.p("m.trm"), f.p("input.csv"));
    assert_eq!(code(&f.run(&["evaluate", "--trm", &trm, "--input", &input])), 2);
}

#[test]
fn usage_errors_exit_with_config_status() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["frobnicate"])), 2);
    assert_eq!(code(&f.run(&["print-config", "--depth", "many"])), 2);
}

#[test]
fn print_config_applies_file_then_flags() {
    let f = Fixture::new();
    fs::write(f.path("c.cfg"), "# tuned\ndepth=3\ntau=0.7\n").unwrap();
    let cfg = f.p("c.cfg");
    let o = f.run(&["print-config", "--config", &cfg, "--tau", "0.9"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("depth=3\n") && text.contains("tau=0.9\n") && text.contains("select=0.8\n"), "{text}");
    let defaults = stdout(&f.run(&["print-config"]));
    for key in ["depth=2", "select=0.8", "tau=0.5", "gamma=0.05", "bins=10", "k=5", "seed=0", "cap_factor=2"] {
        assert!(defaults.lines().any(|l| l == key), "{key}");
    }
}
