use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use dmm_cli::{run, RunConfig, EXIT_IO, EXIT_LANGUAGE, EXIT_OK};

fn corpus(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus").join(file)
}

fn dmm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dmm")).args(args).output().unwrap()
}

fn write(dir: &Path, file: &str, text: &str) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, text).unwrap();
    p
}

const NET: &str = "#neuron sigmoid:a out:ya = #transformof in:xa;\n\
                   #neuron one:b out:one = #transformof;\n\
                   #weight xa ya = 0.5;\n\
                   #weight xa one = 1;\n";

#[test]
fn steps_flag_gives_one_record_per_tick() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "net.dmm", NET);
    let trace = dir.path().join("trace.jsonl");
    let out = dmm(&["--script", script.to_str().unwrap(), "--steps", "10", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 10);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["t"], serde_json::json!(i + 1));
        let ports: Vec<&str> = r["values"].as_array().unwrap().iter().map(|v| v["port"].as_str().unwrap()).collect();
        let mut sorted = ports.clone();
        sorted.sort();
        assert_eq!(ports, sorted);
        assert!(ports.contains(&"sigmoid:g0:out"));
    }
}

#[test]
fn cross_kind_weight_exits_with_language_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "bad.dmm", "#neuron relu:r out:y = #transformof in:x;\n\n  #weight x Self:Self:out = 1;\n");
    let out = dmm(&["--script", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(i32::from(EXIT_LANGUAGE)));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.dmm:3:3:"), "{stderr}");
    for needle in ["relu:g0:in", "Self:Self:out", "`scalar`", "`matrix`"] {
        assert!(stderr.contains(needle), "missing {needle} in {stderr}");
    }
}

#[test]
fn syntax_errors_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "bad.dmm", "#step 1\n");
    let out = dmm(&["--script", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(i32::from(EXIT_LANGUAGE)));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected `;`"));
    let out = dmm(&["--script", dir.path().join("absent.dmm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(i32::from(EXIT_IO)));
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let script = corpus("22_long.dmm");
    let mut traces = Vec::new();
    for run_no in 0..2 {
        let trace = dir.path().join(format!("t{run_no}.jsonl"));
        let out = dmm(&["--script", script.to_str().unwrap(), "--seed", "9", "--trace", trace.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        traces.push(std::fs::read(&trace).unwrap());
    }
    assert!(!traces[0].is_empty());
    assert_eq!(traces[0], traces[1]);
}

fn config(script: Option<PathBuf>, trace: PathBuf, repl: bool) -> RunConfig {
    RunConfig {
        script_path: script,
        steps: 0,
        seed: 3,
        trace_path: Some(trace),
        repl,
        show_matrix_every: None,
        entropy_seeded: false,
    }
}

#[test]
fn repl_matches_batch() {
    let dir = tempfile::tempdir().unwrap();
    for file in ["02_rnn.dmm", "10_gc.dmm", "19_sum_of_rows.dmm", "21_updateweights_neuron.dmm"] {
        let path = corpus(file);
        let batch = dir.path().join("batch.jsonl");
        let repl = dir.path().join("repl.jsonl");
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(&config(Some(path.clone()), batch.clone(), false), &mut Cursor::new(""), &mut o, &mut e);
        assert_eq!(code, EXIT_OK);
        let text = std::fs::read_to_string(&path).unwrap();
        let code = run(&config(None, repl.clone(), true), &mut Cursor::new(text), &mut o, &mut e);
        assert_eq!(code, EXIT_OK, "{}", String::from_utf8_lossy(&e));
        assert_eq!(std::fs::read(&batch).unwrap(), std::fs::read(&repl).unwrap(), "{file}");
    }
}

fn repl_session(input: &str) -> (String, String) {
    let dir = tempfile::tempdir().unwrap();
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(&config(None, dir.path().join("t.jsonl"), true), &mut Cursor::new(input), &mut o, &mut e);
    assert_eq!(code, EXIT_OK);
    (String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

#[test]
fn repl_shows_fresh_matrix() {
    let (out, err) = repl_session("#show matrix;\n");
    assert!(err.is_empty());
    assert!(out.contains("Self:Self:in\tSelf:Self:out\t1\n"), "{out}");
    assert_eq!(out.matches('\t').count(), 2);
}

#[test]
fn repl_survives_errors() {
    let input = "#neuron linear:n out:y = #transformof in:x;\n\
                 #weight x y = 2;\n\
                 #weight x nowhere = 1;\n\
                 #bogus;\n\
                 #updateweights x\n  += (-1) * x;\n\
                 #show matrix;\n\
                 #step 2;\n";
    let (out, err) = repl_session(input);
    let diags: Vec<&str> = err.lines().collect();
    assert_eq!(diags.len(), 2, "{err}");
    assert!(diags[0].starts_with("<stdin>:3:"), "{err}");
    assert!(diags[0].contains("nowhere"));
    assert!(diags[1].starts_with("<stdin>:4:1:"), "{err}");
    assert!(!out.contains("linear:g0:in"), "row not removed: {out}");
    assert!(out.contains("tick 2"));
}

#[test]
fn matrix_dumps_on_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "net.dmm", NET);
    let out = dmm(&["--script", script.to_str().unwrap(), "--steps", "6", "--show-matrix-every", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("-- matrix at tick").count(), 2);
    assert!(stdout.contains("sigmoid:g0:in\tone:g1:out\t1"));
}
