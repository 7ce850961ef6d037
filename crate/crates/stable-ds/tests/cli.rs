use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use stable_ds::cli::{run, EXIT_DIVERGED, EXIT_INPUT, EXIT_OK};
use stable_ds::dataset::{load_demonstrations, LoadOptions};
use stable_ds::persist::load_model;
use stable_ds::report::{history_from_csv, report_from_json, RunManifest};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str], stdin: &str) -> Outcome {
    let mut input = Cursor::new(stdin.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("stable-ds").chain(args.iter().copied());
    let code = run(argv, &mut input, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Three arcs into the origin, 60 samples each, velocities estimated.
fn arcs(dir: &Path) -> PathBuf {
    let mut csv = String::from("demo,t,x1,x2\n");
    for d in 0..3 {
        let r = 10.0 + 2.0 * d as f64;
        for k in 0..60 {
            let s = k as f64 / 59.0;
            let a = std::f64::consts::FRAC_PI_2 * s;
            let (x, y) = (-r * (1.0 - s) * a.cos(), r * (1.0 - s) * a.sin());
            csv.push_str(&format!("{d},{},{x},{y}\n", 0.05 * k as f64));
        }
    }
    let p = dir.join("arcs.csv");
    fs::write(&p, csv).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["train", "--data", s(data), "--out", s(&out), "--iters", "40", "--batch", "16"];
    args.extend_from_slice(extra);
    let o = cli(&args, "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    out
}

#[test]
fn train_writes_model_manifest_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "m.json", &["--seed", "3"]);
    let model_text = fs::read_to_string(&model).unwrap();
    assert!(model_text.contains("\"learned\""));
    let m = load_model(&model).unwrap();
    assert_eq!(m.state_dim(), 2);

    let hist_path = dir.path().join("m.loss.csv");
    let hist = history_from_csv(&fs::read_to_string(&hist_path).unwrap(), &hist_path).unwrap();
    assert_eq!(hist.len(), 40);

    let man_path = dir.path().join("m.manifest.json");
    let man = RunManifest::from_json(&fs::read_to_string(&man_path).unwrap(), &man_path).unwrap();
    assert_eq!(man.seed, 3);
    assert_eq!(man.config.max_iterations, 40);
    assert_eq!(man.dataset_sha256.len(), 64);
    assert_eq!(RunManifest::from_json(&man.to_json(), &man_path).unwrap(), man);
}

#[test]
fn train_records_fixed_contraction_mode() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "f.json", &["--mode", "fixed-contraction"]);
    assert!(fs::read_to_string(model).unwrap().contains("\"mode\": \"fixed-contraction\""));
}

#[test]
fn bad_input_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = cli(&["train", "--data", s(&missing), "--out", s(&dir.path().join("m.json"))], "");
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("missing.csv"), "{}", o.stderr);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x1,x2\n0,1,2\n0.1,1,oops\n").unwrap();
    let o = cli(&["check", "--data", s(&bad)], "");
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("bad.csv:3"), "{}", o.stderr);

    assert_eq!(cli(&["train", "--data", s(&bad)], "").code, EXIT_INPUT);
    assert_eq!(cli(&["frobnicate"], "").code, EXIT_INPUT);
    assert_eq!(cli(&["--help"], "").code, EXIT_OK);
}

#[test]
fn divergence_exits_two_with_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("wild.csv");
    // velocities whose squares overflow make every loss non-finite
    fs::write(&data, "t,x1,x2,v1,v2\n0,1,1,1e200,0\n1,0.5,0.5,1e200,0\n2,0,0,1e200,0\n").unwrap();
    let out = dir.path().join("w.json");
    let o = cli(&["train", "--data", s(&data), "--out", s(&out), "--iters", "50"], "");
    assert_eq!(o.code, EXIT_DIVERGED, "{}", o.stderr);
    let snap = dir.path().join("w.snapshot.json");
    assert!(o.stderr.contains("w.snapshot.json"));
    assert!(load_model(&snap).is_ok());
    assert!(!out.exists());
}

#[test]
fn eval_reports_per_demo_rows_audit_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "m.json", &[]);
    let report = dir.path().join("r.json");
    let svg_dir = dir.path().join("plots");
    let o = cli(
        &["eval", "--model", s(&model), "--data", s(&data), "--out", s(&report), "--svg", s(&svg_dir), "--audit", "500"],
        "",
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("mean SEA") && o.stdout.contains("mean V_rmse"));
    let r = report_from_json(&fs::read_to_string(&report).unwrap(), &report).unwrap();
    assert_eq!(r.per_demo.len(), 3);
    assert!(r.per_demo.iter().all(|m| m.samples == 60));
    let audit = r.audit.unwrap();
    assert_eq!(audit.box_samples, 500);
    assert_eq!(audit.rate_violations, 0);

    let plots: Vec<_> = fs::read_dir(&svg_dir).unwrap().collect();
    assert_eq!(plots.len(), 1);
    let svg = fs::read_to_string(svg_dir.join("arcs.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    assert!(count("line") > 100);
    assert_eq!(count("polyline"), 6);
    assert!(doc.descendants().any(|n| n.attribute("class") == Some("target")));
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "m.json", &[]);
    let one_d = dir.path().join("line.csv");
    fs::write(&one_d, "t,x1\n0,1\n1,0.5\n2,0\n").unwrap();
    let o = cli(&["eval", "--model", s(&model), "--data", s(&one_d)], "");
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("1-D"), "{}", o.stderr);
}

#[test]
fn query_streams_velocities() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model_path = train_small(dir.path(), &data, "m.json", &[]);
    let model = load_model(&model_path).unwrap();
    let demos = load_demonstrations(&data, &LoadOptions::default()).unwrap();

    let mut input = String::from("0 0\nnot a state\n1 2 3\n");
    for x in &demos[1].states {
        input.push_str(&format!("{},{}\n", x[0], x[1]));
    }
    let o = cli(&["query", "--model", s(&model_path)], &input);
    assert_eq!(o.code, EXIT_OK);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines.len(), 3 + 60);
    assert_eq!(&lines[..3], &["0 0", "ERR", "ERR"]);
    for (line, x) in lines[3..].iter().zip(&demos[1].states) {
        let got: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(got, model.velocity(x).unwrap());
    }
}

#[test]
fn query_binary_answers_line_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "m.json", &[]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_stable-ds"))
        .args(["query", "--model", s(&model)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::{BufRead, BufReader, Write};
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    // each answer arrives before the next question is sent
    for (q, want) in [("0 0\n", "0 0"), ("x\n", "ERR")] {
        stdin.write_all(q.as_bytes()).unwrap();
        stdin.flush().unwrap();
        line.clear();
        stdout.read_line(&mut line).unwrap();
        assert_eq!(line.trim_end(), want);
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn rollout_and_field_outputs_reload() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let model = train_small(dir.path(), &data, "m.json", &[]);
    let roll = dir.path().join("roll.csv");
    let o = cli(&["rollout", "--model", s(&model), "--data", s(&data), "--out", s(&roll)], "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let back = load_demonstrations(&roll, &LoadOptions::default()).unwrap();
    assert_eq!(back.len(), 3);
    assert!(back.iter().all(|d| d.len() == 60));

    let o = cli(&["rollout", "--model", s(&model), "--start=-5,3", "--steps", "10", "--dt", "0.1"], "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(o.stdout.lines().count(), 12);
    assert_eq!(cli(&["rollout", "--model", s(&model), "--start=-5,3"], "").code, EXIT_INPUT);

    let field = dir.path().join("field.csv");
    let svg = dir.path().join("field.svg");
    let o = cli(
        &["field", "--model", s(&model), "--out", s(&field), "--resolution", "2", "--svg", s(&svg), "--data", s(&data)],
        "",
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = fs::read_to_string(&field).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    roxmltree::Document::parse(&fs::read_to_string(&svg).unwrap()).unwrap();
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = arcs(dir.path());
    let run = |tag: &str| {
        let model = train_small(dir.path(), &data, &format!("{tag}.json"), &["--seed", "11"]);
        let report = dir.path().join(format!("{tag}.report.json"));
        let o = cli(
            &["eval", "--model", s(&model), "--data", s(&data), "--out", s(&report), "--audit", "200", "--seed", "11"],
            "",
        );
        assert_eq!(o.code, EXIT_OK);
        (
            fs::read(&model).unwrap(),
            fs::read(dir.path().join(format!("{tag}.loss.csv"))).unwrap(),
            fs::read(&report).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn directory_datasets_load_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.csv"), "t,x1\n0,2\n1,0\n").unwrap();
    fs::write(dir.path().join("a.json"), r#"[{"dt": 0.5, "states": [[4], [2], [0]]}]"#).unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let demos = load_demonstrations(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(demos.len(), 2);
    assert_eq!((demos[0].len(), demos[1].len()), (3, 2));
    assert_eq!((demos[0].index, demos[1].index), (0, 1));
    let o = cli(&["check", "--data", s(dir.path())], "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
}
