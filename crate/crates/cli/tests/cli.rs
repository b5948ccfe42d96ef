//! End-to-end runs of the `spir` binary.

use std::process::{Command, Output};

fn spir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spir")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Lines of the form `<server>: …`.
fn answer_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| l.split(':').next().is_some_and(|p| p.parse::<usize>().is_ok())).collect()
}

#[test]
fn run_general_scheme_prints_answers_and_decode() {
    let o = spir(&["run", "--graph", "path", "--n", "3", "--scheme", "general", "--target", "1", "--q", "3", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(answer_lines(&out).len(), 3, "{out}");
    assert!(out.lines().any(|l| l.starts_with("W_1 = ")), "{out}");
}

#[test]
fn run_is_deterministic_per_seed() {
    let args = ["run", "--graph", "cycle", "--n", "3", "--scheme", "fr-from-pir", "--target", "2", "--seed", "11"];
    let a = spir(&args);
    let b = spir(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut other = args.to_vec();
    *other.last_mut().unwrap() = "12";
    let c = spir(&other);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn run_cycle_conversion_downloads_eight_per_server() {
    let o = spir(&["run", "--graph", "cycle", "--n", "3", "--scheme", "gr-from-pir", "--target", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for line in answer_lines(&out) {
        let vals = line.split_once(": ").unwrap().1;
        assert_eq!(vals.split(',').count(), 8, "{line}");
    }
    assert!(out.contains("rate = 1/4"), "{out}");
}

#[test]
fn run_multigraph_downloads_21_symbols() {
    let o = spir(&["run", "--graph", "path", "--n", "3", "--r", "2", "--scheme", "fr-multigraph", "--target", "1,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("downloads = 21 (7+7+7)"), "{out}");
    assert!(out.contains("W_{1,1} = "), "{out}");
}

#[test]
fn symbolic_run_shows_pads() {
    let o = spir(&["run", "--graph", "star", "--n", "4", "--scheme", "fr-star", "--t", "2", "--symbolic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(answer_lines(&out).len(), 4);
    assert!(out.contains("+s"), "{out}");
    assert!(out.contains("rate = 3/7"), "{out}");
}

#[test]
fn verify_m_graph_passes() {
    let o = spir(&["verify", "--graph", "m", "--q", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("verdict=pass"));
}

#[test]
fn verify_sequential_matches_parallel() {
    let par = spir(&["verify", "--graph", "cycle", "--n", "3", "--q", "3"]);
    let seq = spir(&["verify", "--graph", "cycle", "--n", "3", "--q", "3", "--jobs", "1"]);
    assert_eq!(par.status.code(), Some(0));
    assert_eq!(par.stdout, seq.stdout);
}

#[test]
fn dropped_pads_fail_with_witness() {
    let o = spir(&["verify", "--graph", "path", "--n", "3", "--inject-fault", "drop-pad"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("check=db_privacy") && out.contains("witness="), "{out}");
    assert!(out.contains("summary") && out.contains("verdict=fail"));
}

#[test]
fn other_faults_fail_their_checks() {
    let o = spir(&["verify", "--graph", "cycle", "--n", "3", "--q", "3", "--inject-fault", "flip-sign", "--fault-column", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("check=reliability engine=exhaustive"));
    assert!(stdout(&o).lines().any(|l| l.starts_with("check=reliability") && l.contains("verdict=fail")));

    let o = spir(&["verify", "--graph", "path", "--n", "3", "--inject-fault", "unblind"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().any(|l| l.starts_with("check=user_privacy") && l.contains("verdict=fail")));

    let o = spir(&["verify", "--graph", "path", "--n", "3", "--scheme", "fr-from-pir", "--inject-fault", "reuse-pad"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn converted_schemes_verify() {
    for args in [
        ["--graph", "path", "--scheme", "gr-from-pir"],
        ["--graph", "star", "--scheme", "fr-star"],
    ] {
        let mut full = vec!["verify"];
        full.extend(args);
        let o = spir(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}{}", stdout(&o), stderr(&o));
    }
}

#[test]
fn oversized_exhaustive_request_is_refused() {
    let o = spir(&["verify", "--graph", "complete", "--n", "5", "--q", "3", "--engine", "exhaustive", "--budget", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("budget"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["run", "--q", "4"],
        vec!["run", "--graph", "complete", "--n", "4", "--scheme", "gr-from-pir"],
        vec!["run", "--graph", "path", "--scheme", "fr-star"],
        vec!["run", "--target", "9"],
        vec!["run", "--graph", "no/such/file"],
        vec!["run", "--scheme", "fr-from-pir", "--inject-fault", "unblind"],
        vec!["rates", "--family", "custom"],
        vec!["frobnicate"],
    ] {
        let o = spir(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn edge_list_graph_file() {
    let dir = std::env::temp_dir().join(format!("spir-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("tri.txt");
    std::fs::write(&file, "# triangle with a tail\n4\n1 2\n2 3\n1 3\n3 4\n").unwrap();
    let o = spir(&["verify", "--graph", file.to_str().unwrap(), "--q", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn rates_path_fr() {
    let out = stdout(&spir(&["rates", "--family", "path", "--n", "3", "--setting", "fr"]));
    assert!(out.contains("4/9") && out.contains("1/2"), "{out}");
    let out = stdout(&spir(&["rates", "--family", "path", "--n", "3", "--r", "2", "--setting", "fr"]));
    assert!(out.contains("8/21"), "{out}");
}

#[test]
fn rates_tsv_has_both_settings() {
    let out = stdout(&spir(&["rates", "--family", "cycle", "--n", "5", "--format", "tsv"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split('\t').count() == lines[0].split('\t').count()));
    assert!(lines[1].contains("\tgr\t") && lines[2].contains("\tfr\t"));
}

#[test]
fn table1_has_four_rows() {
    let out = stdout(&spir(&["table1"]));
    let golden = include_str!("../../core/tests/golden/table1.txt");
    assert_eq!(out, golden);
    let rows = out.lines().filter(|l| l.contains("_N")).count();
    assert_eq!(rows, 4);
    let at5 = stdout(&spir(&["table1", "--n", "5", "--format", "tsv"]));
    assert!(at5.contains("cycle_5\t1/3\t1/5\t1/6"), "{at5}");
}

#[test]
fn base_table_file_matches_builtin() {
    let dir = std::env::temp_dir().join(format!("spir-cli-base-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("p3.tbl");
    std::fs::write(
        &file,
        "graph path 3\nmode pir\nL 2\ntarget 1\nserver 1: a1\nserver 2: a2+b2\nserver 3: b2\n\
         target 2\nserver 1: a1\nserver 2: a1+b1\nserver 3: b2\n",
    )
    .unwrap();
    let path = file.to_str().unwrap();
    let common = ["--graph", "path", "--n", "3", "--scheme", "fr-from-pir", "--seed", "3"];
    let builtin = spir(&[&["run"][..], &common[..]].concat());
    let loaded = spir(&[&["run"][..], &common[..], &["--base", path][..]].concat());
    assert!(loaded.status.success(), "{}", stderr(&loaded));
    assert_eq!(builtin.stdout, loaded.stdout);
    let wrong = spir(&["run", "--graph", "cycle", "--n", "3", "--scheme", "gr-from-pir", "--base", path]);
    assert_eq!(wrong.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
