use std::process::{Command, Output};

fn distill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distill")).args(args).output().expect("binary runs")
}

fn value(out: &Output) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("value")).expect("value line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

fn measure(args: &[&str]) -> f64 {
    let out = distill(&[&["measure"], args].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    value(&out)
}

#[test]
fn measure_examples() {
    let w = measure(&["--theory", "ns", "--channel", "depolarizing:p=0.3", "--monotone", "weight"]);
    assert!((w - 0.3).abs() < 1e-6);
    let f = measure(&["--theory", "stab", "--state", "T", "--monotone", "fidelity"]);
    assert!((f - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-6);
    let f = measure(&["--theory", "ppt", "--channel", "identity:d=2", "--monotone", "fidelity"]);
    assert!((f - 0.5).abs() < 1e-6);
}

#[test]
fn measure_reports_certificate() {
    let out = distill(&["measure", "--theory", "ns", "--channel", "dephasing:p=0.2", "--monotone", "robustness"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("certificate verified"), "{text}");
    assert!((value(&out) - 3.2).abs() < 1e-6);
}

#[test]
fn state_and_channel_files() {
    let dir = std::env::temp_dir().join(format!("distill-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let state = dir.join("zero.txt");
    std::fs::write(&state, "2\n1 0 0 0\n0 0 0 0\n").unwrap();
    let w = measure(&["--theory", "coherence", "--state", state.to_str().unwrap(), "--monotone", "weight"]);
    assert!((w - 1.0).abs() < 1e-6);
    let channel = dir.join("id.txt");
    std::fs::write(&channel, distill_core::channels::Channel::identity(2).to_text()).unwrap();
    let r = measure(&["--theory", "ns", "--channel", channel.to_str().unwrap(), "--monotone", "robustness"]);
    assert!((r - 4.0).abs() < 1e-6);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["measure", "--theory", "ns", "--channel", "bogus", "--monotone", "weight"][..],
        &["measure", "--theory", "ns", "--channel", "depolarizing", "--monotone", "weight"],
        &["measure", "--theory", "stab", "--channel", "depolarizing:p=0.1,d=3", "--monotone", "weight"],
        &["measure", "--theory", "coherence", "--channel", "identity:d=2", "--monotone", "weight"],
        &["measure", "--theory", "nope", "--channel", "identity:d=2", "--monotone", "weight"],
        &["bound", "unitary", "-r", "0.5", "-w", "0.1", "-f", "0.5"],
        &["bound", "copies", "-r", "1.5"],
        &["fig", "--fig", "7c"],
        &["fig", "--fig", "2a", "--grid", "1.5"],
    ] {
        assert_eq!(distill(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bound_report() {
    let out = distill(&["bound", "copies", "-r", "1.1715728752538097", "-w", "0", "-f", "0.5625", "-m", "1", "--eps", "0.09"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let n_rob: f64 = text.lines().find(|l| l.starts_with("n_rob")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(n_rob > 3.0);
    assert!(text.contains("n_weight") && text.contains("inapplicable"));
}

#[test]
fn figure_csv_is_deterministic() {
    let dir = std::env::temp_dir().join(format!("distill-fig-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let path = dir.join(format!("f{i}.csv"));
        let out = distill(&["fig", "--fig", "2a", "--grid", "0.2,0.4", "--seed", "7", "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(&header[0], "p");
    assert!(header.iter().any(|h| h == "epsilon_ns"));
    let row = rows.records().nth(1).unwrap().unwrap();
    for col in ["epsilon_rob", "epsilon_weight", "epsilon_ns"] {
        let i = header.iter().position(|h| h == col).unwrap();
        let v: f64 = row[i].parse().unwrap();
        assert!((v - 0.3).abs() < 1e-6, "{col} = {v}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn copy_figure_to_stdout() {
    let out = distill(&["fig", "--fig", "4a", "--grid", "0.09"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let row = rows.records().next().unwrap().unwrap();
    let i = header.iter().position(|h| h == "n_rob").unwrap();
    assert!(row[i].parse::<f64>().unwrap() > 1.0);
}
