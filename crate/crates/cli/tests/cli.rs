use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exchmine_core::report::read_json;
use exchmine_core::session::load_session_file;

const BIN: &str = env!("CARGO_BIN_EXE_exchmine");

fn toy_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy.csv")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn exchmine")
}

fn run(args: &[&str]) -> Output {
    run_in(Path::new(env!("CARGO_MANIFEST_DIR")), args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    o
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden {name} differs; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn help_and_version() {
    let v = ok(run(&["--version"]));
    assert_eq!(stdout(&v).trim(), format!("exchmine {}", env!("CARGO_PKG_VERSION")));
    for cmd in ["mine", "test", "iterate", "split", "cluster", "contingency", "select", "serve"] {
        let h = ok(run(&[cmd, "--help"]));
        assert!(stdout(&h).contains("Usage: exchmine"), "{cmd}");
    }
}

#[test]
fn mine_writes_the_toy_family() {
    let toy = toy_csv();
    let o = ok(run(&["mine", "--input", toy.to_str().unwrap(), "--min-support", "3", "--max-size", "8"]));
    assert_eq!(stdout(&o).lines().count(), 23);
    golden("toy_mined.txt", &stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    ok(run_in(dir.path(), &["mine", "--input", toy.to_str().unwrap(), "--min-support", "10", "--out", "empty.txt"]));
    assert_eq!(std::fs::read_to_string(dir.path().join("empty.txt")).unwrap(), "");
}

#[test]
fn transactions_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.txt"), "#items: a b c\na b\nb c\na b c\n\n").unwrap();
    let o = ok(run_in(dir.path(), &["mine", "--input", "t.txt", "--format", "transactions", "--min-support", "2"]));
    assert_eq!(stdout(&o), "a: 2\nb: 3\nc: 2\na b: 2\nb c: 2\n");
}

#[test]
fn exit_codes() {
    let toy = toy_csv();
    let toy = toy.to_str().unwrap();
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["mine", "--input", "missing.csv", "--min-support", "3"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--model", "itemset-soft", "--min-support", "3"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--model", "cluster-margins", "--min-support", "3"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--samples", "0", "--min-support", "3", "--seed", "1"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--seed", "1"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--swaps", "many", "--min-support", "3"]), 2);
    assert_eq!(code(&["test", "--input", toy, "--model", "uniform"]), 2);
    assert_eq!(code(&["cluster", "--input", toy, "--k", "0", "--seed", "1"]), 2);

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "1,0\n1,2\n").unwrap();
    let o = run_in(dir.path(), &["mine", "--input", "bad.csv", "--min-support", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    std::fs::write(dir.path().join("c.txt"), "A Z\n").unwrap();
    let o = run_in(
        dir.path(),
        &["test", "--input", toy, "--model", "itemset-soft", "--itemsets", "c.txt", "--min-support", "3"],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(BIN)
        .args(["mine", "--input", toy, "--min-support", "3"])
        .env("EXCHMINE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_and_swaps_are_reported() {
    let toy = toy_csv();
    let o = ok(run(&["test", "--input", toy.to_str().unwrap(), "--min-support", "3", "--samples", "19"]));
    let err = stderr(&o);
    assert!(err.lines().any(|l| l.starts_with("seed: ") && l[6..].parse::<u64>().is_ok()), "{err}");
    assert!(err.contains("swap attempts: "), "{err}");
    let o = ok(run(&[
        "test",
        "--input",
        toy.to_str().unwrap(),
        "--min-support",
        "3",
        "--samples",
        "19",
        "--seed",
        "4",
        "--swaps",
        "100",
    ]));
    assert_eq!(stderr(&o), "");
}

#[test]
fn test_report_files_are_deterministic() {
    let toy = toy_csv();
    let dir = tempfile::tempdir().unwrap();
    let args = |report: &'static str| {
        vec![
            "test",
            "--input",
            toy.to_str().unwrap(),
            "--min-support",
            "3",
            "--max-size",
            "8",
            "--samples",
            "199",
            "--seed",
            "11",
            "--no-fdr",
            "--report",
            report,
        ]
    };
    ok(run_in(dir.path(), &args("a.tsv")));
    ok(run_in(dir.path(), &args("b.tsv")));
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.tsv"), read("b.tsv"));
    assert_eq!(read("a.json"), read("b.json"));
    let report = read_json(&read("a.json")[..]).unwrap();
    assert_eq!(report.seed, 11);
    assert_eq!(report.patterns.len(), 23);
    golden("toy_margins_seed11.tsv", &String::from_utf8(read("a.tsv")).unwrap());

    let single =
        Command::new(BIN).current_dir(dir.path()).args(args("c.tsv")).env("EXCHMINE_THREADS", "1").output().unwrap();
    assert!(single.status.success());
    assert_eq!(read("a.json"), read("c.json"));
}

#[test]
fn tails_and_statistics() {
    let toy = toy_csv();
    let toy = toy.to_str().unwrap();
    let o = ok(run(&[
        "test",
        "--input",
        toy,
        "--stat",
        "clustering-error",
        "--k",
        "2",
        "--samples",
        "99",
        "--seed",
        "3",
        "--swaps",
        "264",
    ]));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("clustering-error(k=2)\tclustering-error(k=2)\t9.2\t"));

    let o = ok(run(&[
        "test",
        "--input",
        toy,
        "--stat",
        "count",
        "--min-support",
        "3",
        "--max-size",
        "8",
        "--samples",
        "99",
        "--seed",
        "3",
        "--tail",
        "two-sided",
    ]));
    assert!(stdout(&o).lines().nth(1).unwrap().contains("\t23\t"));
}

#[test]
fn cluster_split_and_contingency() {
    let toy = toy_csv();
    let toy = toy.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = ok(run_in(dir.path(), &["cluster", "--input", toy, "--k", "2", "--seed", "5", "--out", "c.tsv"]));
    assert_eq!(stderr(&o), "clustering error: 9.2\n");
    golden("toy_clustering.tsv", &std::fs::read_to_string(dir.path().join("c.tsv")).unwrap());

    ok(run_in(dir.path(), &["split", "--input", toy, "--seed", "1", "--mining", "m.csv", "--testing", "t.csv"]));
    let m = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let t = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!((m.lines().count(), t.lines().count()), (6, 5));
    golden("toy_split_seed1.csv", &format!("{m}--\n{t}"));

    let common =
        ["--input", toy, "--min-support", "3", "--max-size", "8", "--samples", "199", "--seed", "2", "--no-fdr"];
    ok(run_in(dir.path(), &[&["test"][..], &common, &["--report", "margins.tsv"]].concat()));
    std::fs::write(dir.path().join("ab_bh.txt"), "A B\nB H\n").unwrap();
    ok(run_in(
        dir.path(),
        &[&["test"][..], &common, &["--model", "itemset-soft", "--itemsets", "ab_bh.txt", "--report", "soft.tsv"]]
            .concat(),
    ));
    ok(run_in(
        dir.path(),
        &[&["test"][..], &common, &["--model", "cluster-margins", "--clustering", "c.tsv", "--report", "clus.tsv"]]
            .concat(),
    ));
    let table = stdout(&ok(run_in(dir.path(), &["contingency", "margins.json", "soft.json"])));
    golden("toy_contingency.txt", &table);
    let table = stdout(&ok(run_in(dir.path(), &["contingency", "margins.json", "clus.json"])));
    assert!(table.lines().count() == 3);

    let top = stdout(&ok(run_in(dir.path(), &["select", "--input", toy, "--report", "margins.json", "--n", "2"])));
    assert_eq!(top.lines().count(), 2);
    let delta = stdout(&ok(run_in(
        dir.path(),
        &["select", "--input", toy, "--report", "margins.json", "--against", "soft.json", "--n", "3"],
    )));
    assert_eq!(delta.lines().count(), 3);
    golden("toy_select.txt", &format!("{top}--\n{delta}"));
    assert_eq!(
        run_in(dir.path(), &["select", "--input", toy, "--report", "margins.json", "--n", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(run_in(dir.path(), &["contingency", "margins.json", "missing.json"]).status.code(), Some(2));
}

#[test]
fn iterate_creates_and_resumes() {
    let toy = toy_csv();
    let toy = toy.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = ok(run_in(
        dir.path(),
        &[
            "iterate",
            "--input",
            toy,
            "--min-support",
            "3",
            "--max-size",
            "8",
            "--iterations",
            "10",
            "--samples",
            "999",
            "--seed",
            "1",
            "--session",
            "s.json",
        ],
    ));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 12);
    golden("toy_iterations_seed1.tsv", &out);
    let s = load_session_file(&dir.path().join("s.json")).unwrap();
    assert_eq!(s.history.len(), 11);
    assert!(s
        .history
        .iter()
        .zip(out.lines().skip(1))
        .all(|(r, l)| l.split('\t').nth(2) == Some(&r.significant_count.to_string()[..])));
    assert!(s.verify_replay().unwrap());

    let o = ok(run_in(dir.path(), &["iterate", "--input", toy, "--iterations", "2", "--session", "s.json"]));
    let out = stdout(&o);
    let numbers: Vec<&str> = out.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(numbers, ["11", "12"]);
    assert_eq!(load_session_file(&dir.path().join("s.json")).unwrap().history.len(), 13);

    std::fs::write(dir.path().join("other.csv"), "1,0\n0,1\n").unwrap();
    let o = run_in(dir.path(), &["iterate", "--input", "other.csv", "--session", "s.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn iterate_stops_when_candidates_run_out() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "1,1,0\n0,1,1\n1,0,1\n").unwrap();
    let o = ok(run_in(
        dir.path(),
        &[
            "iterate",
            "--input",
            "d.csv",
            "--min-support",
            "2",
            "--max-size",
            "1",
            "--iterations",
            "10",
            "--samples",
            "9",
            "--seed",
            "1",
            "--session",
            "s.json",
        ],
    ));
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(stderr(&o).contains("no candidates left"));
    assert_eq!(load_session_file(&dir.path().join("s.json")).unwrap().history.len(), 3);
}

#[test]
fn serve_rejects_missing_session() {
    let o = run(&["serve", "--session", "/nonexistent/s.json", "--port", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
