mod common;

use std::fs;

use sha2::{Digest, Sha256};

use common::{covmix, read_csv, write_inputs};

fn s(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

fn line_inputs(dir: &std::path::Path) {
    write_inputs(
        dir,
        &[
            ("A", "L1", 0.0, 0.0),
            ("B", "L1", 0.0, 1.0),
            ("C", "L2", 0.0, 2.0),
        ],
        &[("A", 1, 1.0, 0.5), ("B", 1, 2.0, 0.5), ("C", 1, -1.0, 0.5)],
        &[("A", "B"), ("B", "C")],
    );
}

#[test]
fn diagnose_three_area_example() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    line_inputs(&data);
    let r = covmix(&["--out", &s(&out), "diagnose", "--data", &s(&data)]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );

    let audit = read_csv(&out.join("weights_audit.csv"));
    assert_eq!(audit.len(), 3);
    let pruned: Vec<_> = audit.iter().filter(|r| r[2] == "pruned").collect();
    assert_eq!(pruned.len(), 1);
    assert_eq!(pruned[0][0], "C");
    assert_eq!(pruned[0][1], "0");
    let e1: f64 = audit[0][1].parse().unwrap();
    assert!((e1 - (-1.0f64).exp()).abs() < 1e-15);

    let moran: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("moran.json")).unwrap()).unwrap();
    assert_eq!(moran["moran"]["n"], 2);
    assert_eq!(moran["moran"]["I"], -1.0);
    assert!(moran["moran"]["p"].is_null());

    let vario = read_csv(&out.join("variogram.csv"));
    let subsets: Vec<&str> = vario.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(subsets.iter().filter(|s| **s == "all").count(), 3);
    assert_eq!(subsets.iter().filter(|s| **s == "undercount").count(), 1);
    assert_eq!(subsets.iter().filter(|s| **s == "overcount").count(), 0);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn empty_graph_exits_with_spatial_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_inputs(
        &data,
        &[("A", "L1", 0.0, 0.0), ("B", "L1", 0.0, 1.0)],
        &[("A", 1, 1.0, 0.5), ("B", 1, 2.0, 0.5)],
        &[],
    );
    let out = s(&tmp.path().join("out"));
    assert_eq!(
        covmix(&["--out", &out, "diagnose", "--data", &s(&data)])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        covmix(&[
            "--out",
            &out,
            "fit",
            "--data",
            &s(&data),
            "--model",
            "IV",
            "--iters",
            "300",
            "--burnin",
            "100"
        ])
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn usage_and_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    line_inputs(&data);
    let out = s(&tmp.path().join("out"));
    let d = s(&data);
    let code = |args: &[&str]| covmix(args).status.code();

    assert_eq!(
        code(&["--out", &out, "fit", "--data", &d, "--model", "VIII"]),
        Some(1)
    );
    assert_eq!(code(&["--out", &out, "fit"]), Some(1));
    assert_eq!(code(&["--out", &out, "frobnicate"]), Some(1));
    assert_eq!(
        code(&[
            "--out",
            &out,
            "fit",
            "--data",
            &d,
            "--iterations",
            "150",
            "--burn-in",
            "100"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&["--out", &out, "compare", "--data", &d, "--models", "V"]),
        Some(1)
    );
    assert_eq!(code(&["--help"]), Some(0));

    let missing = s(&tmp.path().join("nowhere"));
    assert_eq!(
        code(&["--out", &out, "diagnose", "--data", &missing]),
        Some(2)
    );

    let bad = tmp.path().join("bad");
    write_inputs(
        &bad,
        &[("A", "L1", 0.0, 0.0), ("B", "L1", 0.0, 1.0)],
        &[("A", 1, 1.0, 0.5), ("B", 1, 2.0, 0.0)],
        &[("A", "B")],
    );
    assert_eq!(
        code(&["--out", &out, "diagnose", "--data", &s(&bad)]),
        Some(2)
    );

    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "rho_gird_size = 51\n").unwrap();
    assert_eq!(
        code(&[
            "--config",
            &s(&cfg),
            "--out",
            &out,
            "diagnose",
            "--data",
            &d
        ]),
        Some(2)
    );
}

#[test]
fn intercept_model_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_inputs(
        &data,
        &[("A", "L1", 0.0, 0.0), ("B", "L1", 0.0, 1.0)],
        &[("A", 1, 1.0, 1.0), ("B", 1, 3.0, 1.0)],
        &[("A", "B")],
    );
    let out = tmp.path().join("out");
    let r = covmix(&[
        "--out",
        &s(&out),
        "--seed",
        "3",
        "fit",
        "--data",
        &s(&data),
        "--model",
        "VII",
        "--iterations",
        "10500",
        "--burn-in",
        "500",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let pred = read_csv(&out.join("predictions.csv"));
    assert_eq!(pred.len(), 2);
    for row in &pred {
        let theta: f64 = row[3].parse().unwrap();
        let sd: f64 = row[4].parse().unwrap();
        assert!((theta - 2.0).abs() < 0.05, "{theta}");
        assert!((sd / 0.5f64.sqrt() - 1.0).abs() < 0.05, "{sd}");
        assert_eq!(row[7], "VII");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_draws"], 20_000);
    assert_eq!(summary["convergence"]["any_flagged"], false);
    assert!((summary["dic"]["p_d"].as_f64().unwrap() - 1.0).abs() < 0.05);

    // one row per chain, retained iteration and reported scalar (mu, two thetas)
    let draws = read_csv(&out.join("draws.csv"));
    assert_eq!(draws.len(), 2 * 10_000 * 3);
    assert_eq!(draws[0][..3], ["0", "501", "mu"]);

    // predict from the stored draws reproduces the fit
    let again = tmp.path().join("again");
    let r = covmix(&[
        "--out",
        &s(&again),
        "predict",
        "--data",
        &s(&data),
        "--draws",
        &s(&out.join("draws.csv")),
        "--model",
        "VII",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let pred2 = read_csv(&again.join("predictions.csv"));
    for (a, b) in pred.iter().zip(&pred2) {
        assert_eq!(a[0], b[0]);
        let (x, y): (f64, f64) = (a[3].parse().unwrap(), b[3].parse().unwrap());
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn manifest_records_input_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    line_inputs(&data);
    let out = tmp.path().join("out");
    assert_eq!(
        covmix(&[
            "--out",
            &s(&out),
            "--seed",
            "17",
            "diagnose",
            "--data",
            &s(&data)
        ])
        .status
        .code(),
        Some(0)
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 17);
    assert_eq!(m["command"][0], "diagnose");
    assert_eq!(m["config"]["rho_grid_size"], "201");
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 4);
    for entry in inputs {
        let file = entry["file"].as_str().unwrap();
        let digest = hex::encode(Sha256::digest(fs::read(data.join(file)).unwrap()));
        assert_eq!(entry["sha256"], digest);
    }
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".tmp")
        })
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn compare_ranks_and_reports_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let r = covmix(&[
        "--out",
        &s(&data),
        "--seed",
        "5",
        "synth",
        "--model",
        "V",
        "--rows",
        "8",
        "--cols",
        "8",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let out = tmp.path().join("cmp");
    let r = covmix(&[
        "--out",
        &s(&out),
        "compare",
        "--data",
        &s(&data),
        "--models",
        "V,VI,VII",
        "--iterations",
        "1500",
        "--burn-in",
        "500",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let scores = read_csv(&out.join("model_scores.csv"));
    assert_eq!(scores.len(), 3);
    let dic: Vec<f64> = scores.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(dic.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(scores[0][0], "V");
    let res = read_csv(&out.join("residuals.csv"));
    assert!(!res.is_empty());
    for row in &res {
        let (y, t, sd, z): (f64, f64, f64, f64) = (
            row[1].parse().unwrap(),
            row[2].parse().unwrap(),
            row[3].parse().unwrap(),
            row[4].parse().unwrap(),
        );
        assert!(((y - t) / sd - z).abs() < 1e-12);
    }
}

#[test]
fn input_row_order_does_not_matter() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let r = covmix(&[
        "--out",
        &s(&data),
        "--seed",
        "8",
        "synth",
        "--model",
        "I",
        "--rows",
        "4",
        "--cols",
        "5",
        "--times",
        "2",
    ]);
    assert_eq!(r.status.code(), Some(0));

    let shuffled = tmp.path().join("shuffled");
    fs::create_dir_all(&shuffled).unwrap();
    for name in [
        "areas.csv",
        "estimates.csv",
        "covariates.csv",
        "adjacency.csv",
    ] {
        let text = fs::read_to_string(data.join(name)).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let mut body = vec![header];
        if name == "adjacency.csv" {
            let swapped: Vec<String> = lines
                .iter()
                .map(|l| {
                    let (a, b) = l.split_once(',').unwrap();
                    format!("{b},{a}")
                })
                .collect();
            let joined = [header.to_string()]
                .into_iter()
                .chain(swapped)
                .collect::<Vec<_>>()
                .join("\n");
            fs::write(shuffled.join(name), joined + "\n").unwrap();
            continue;
        }
        body.extend(lines);
        fs::write(shuffled.join(name), body.join("\n") + "\n").unwrap();
    }

    let fit = |dir: &std::path::Path, out: &std::path::Path| {
        let r = covmix(&[
            "--out",
            &s(out),
            "fit",
            "--data",
            &s(dir),
            "--model",
            "I",
            "--iterations",
            "400",
            "--burn-in",
            "100",
        ]);
        assert_eq!(
            r.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&r.stderr)
        );
    };
    let (a, b) = (tmp.path().join("fa"), tmp.path().join("fb"));
    fit(&data, &a);
    fit(&shuffled, &b);
    for name in ["predictions.csv", "draws.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn predict_rejects_unknown_areas() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    line_inputs(&data);
    let draws = tmp.path().join("draws.csv");
    fs::write(&draws, "chain,iter,parameter,value\n0,1,theta[Z],1.0\n").unwrap();
    let out = s(&tmp.path().join("out"));
    let r = covmix(&[
        "--out",
        &out,
        "predict",
        "--data",
        &s(&data),
        "--draws",
        &s(&draws),
        "--model",
        "V",
    ]);
    assert_eq!(r.status.code(), Some(2));
}
