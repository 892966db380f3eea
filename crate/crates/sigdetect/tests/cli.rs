use std::process::Command;

fn sigdetect(args: &[&str], dir: &std::path::Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sigdetect"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = sigdetect(&["--help"], dir.path());
    assert_eq!(code, 0);
    for sub in ["train-classifier", "gen-adv", "sign", "train-detector", "eval-rq1", "eval-rq2", "export"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
    assert_eq!(sigdetect(&["eval-rq2", "--help"], dir.path()).0, 0);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sigdetect(&[], dir.path()).0, 1);
    assert_eq!(sigdetect(&["train-everything"], dir.path()).0, 1);
    assert_eq!(sigdetect(&["sign", "--seed", "abc"], dir.path()).0, 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = sigdetect(&["sign", "--config", "missing.toml"], dir.path());
    assert_eq!(code, 2);
    assert!(text.contains("missing.toml"));

    std::fs::write(dir.path().join("bad.toml"), "sed = 4\n").unwrap();
    assert_eq!(sigdetect(&["gen-adv", "--config", "bad.toml"], dir.path()).0, 2);

    std::fs::write(dir.path().join("empty.toml"), "work_dir = \"w\"\n[data]\nmnist_dir = \"nowhere\"\n").unwrap();
    for sub in ["train-classifier", "sign", "train-detector", "eval-rq1", "eval-rq2", "export"] {
        assert_eq!(sigdetect(&[sub, "--config", "empty.toml"], dir.path()).0, 2, "{sub}");
    }
}
