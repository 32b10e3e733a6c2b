//! Drives the `bernmix` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn bernmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bernmix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_run_and_score() {
    let root = tempfile::tempdir().unwrap();
    let sim = root.path().join("sim");
    let out = root.path().join("run");
    let o = bernmix(&[
        "simulate",
        "--n",
        "60",
        "--d",
        "12",
        "--k",
        "2",
        "--seed",
        "4",
        "--out",
        path(&sim),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bernmix(&[
        "run",
        "--data",
        path(&sim.join("data.csv")),
        "--out",
        path(&out),
        "--kmax",
        "6",
        "--n-chains",
        "2",
        "--m",
        "60",
        "--burn",
        "10",
        "--seed",
        "1",
        "--z-true",
        path(&sim.join("zTrue.csv")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for file in [
        "K.mcmc.csv",
        "K.allChains.csv",
        "parameters.ecr.mcmc.csv",
        "parameterSummary.ecr.csv",
        "classificationProbabilities.ecr.csv",
        "classificationProbabilities.stephens.csv",
        "clusterMembershipPerMethod.csv",
        "summary.json",
        "moveStats.json",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let k_lines = std::fs::read_to_string(out.join("K.mcmc.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(k_lines, 51);

    let o = bernmix(&[
        "score",
        "--membership",
        path(&out.join("clusterMembershipPerMethod.csv")),
        "--column",
        "ECR",
        "--truth",
        path(&sim.join("zTrue.csv")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("adjusted"), "{text}");
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("x.csv");
    std::fs::write(&data, "0,1\n1,0\n1,1\n").unwrap();
    let run = |data: &Path, out: &Path, extra: &[&str]| {
        let mut args = vec![
            "run",
            "--data",
            path(data),
            "--out",
            path(out),
            "--kmax",
            "3",
            "--m",
            "5",
            "--burn",
            "1",
        ];
        args.extend_from_slice(extra);
        bernmix(&args).status.code()
    };
    assert_eq!(run(&data, &root.path().join("ok"), &[]), Some(0));
    // the output directory now exists
    assert_eq!(run(&data, &root.path().join("ok"), &[]), Some(2));
    assert_eq!(
        run(
            &data,
            &root.path().join("a"),
            &["--n-chains", "2", "--heats", "0.9,0.8"]
        ),
        Some(2)
    );

    let bad = root.path().join("bad.csv");
    std::fs::write(&bad, "0,1\n2,0\n").unwrap();
    assert_eq!(run(&bad, &root.path().join("b"), &[]), Some(3));
    let blank = root.path().join("blank.csv");
    std::fs::write(&blank, "0,1\nNA,NA\n").unwrap();
    assert_eq!(run(&blank, &root.path().join("c"), &[]), Some(3));
}
