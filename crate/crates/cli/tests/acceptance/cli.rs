use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use classmix_core::design::load_design;
use classmix_core::pipeline::ingest;
use serde_json::{json, Value};

use crate::{within, Check};

const BIN: &str = env!("CARGO_BIN_EXE_classmix");

fn run(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("classmix {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn json_file(path: &Path) -> Result<Value, String> {
    serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn expect_header(path: &Path, header: &[&str]) -> Result<usize, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let found: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if found != header {
        return Err(format!("{} has header {found:?}", path.display()));
    }
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        // Every column but the label columns is numeric.
        for (name, field) in header.iter().zip(record.iter()) {
            if !matches!(*name, "model" | "split") && field.parse::<f64>().is_err() {
                return Err(format!("{}: {name} = {field:?} is not a number", path.display()));
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(format!("{} has no rows", path.display()));
    }
    Ok(rows)
}

fn check_svg(path: &Path) -> Result<(), String> {
    let svg = read(path)?;
    if svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>") && svg.contains("<circle") {
        Ok(())
    } else {
        Err(format!("{} is not a plot", path.display()))
    }
}

pub fn end_to_end() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();

    let design = |out: &str, seed: &str| {
        run(
            dir,
            &[
                "design",
                "--classes",
                "5",
                "--subset-size",
                "100,200,300,400",
                "--cap",
                "100",
                "--rows",
                "6",
                "--opt-iters",
                "200",
                "--seed",
                seed,
                "--out",
                out,
            ],
        )
    };
    design("train_designs", "1")?;
    design("test_designs", "2")?;
    for size in [100, 200, 300, 400] {
        let csv = dir.join(format!("train_designs/design_s{size}.csv"));
        let d = load_design(&csv).map_err(|e| format!("{}: {e}", csv.display()))?;
        if d.points.len() != 6 || d.points.iter().any(|p| p.total() != size) {
            return Err(format!("{} has the wrong shape", csv.display()));
        }
    }

    let oracle = json!({
        "ground_truth": {
            "family": "powerlaw",
            "inner": "per_class_arctan2",
            "class_names": ["a", "b", "c", "d", "e"],
            "params": [0.4, 0.6, 0.05, 0.8, 3.0, 0.3, 6.0, 0.6, 2.0, 0.2, 8.0, 0.5, 4.0, 0.9, 5.0]
        },
        "noise_sigma": 0.01,
        "epoch_schedule": [5, 10, 15, 20, 25, 30, 35, 40, 45, 50],
        "e_max": 50,
        "rng_seed": 7
    });
    fs::write(dir.join("oracle.json"), oracle.to_string()).map_err(|e| e.to_string())?;
    run(dir, &["simulate", "--designs", "train_designs", "--oracle", "oracle.json", "--out", "train.csv"])?;
    run(dir, &["simulate", "--designs", "test_designs", "--oracle", "oracle.json", "--out", "test.csv"])?;
    for log in ["train.csv", "test.csv"] {
        let t = ingest(dir.join(log)).map_err(|e| format!("{log}: {e}"))?;
        // 4 sizes x 6 rows x 9 epochs from 10 on.
        if t.records.len() != 216 || t.class_names != ["a", "b", "c", "d", "e"] {
            return Err(format!("{log}: {} records, classes {:?}", t.records.len(), t.class_names));
        }
    }

    fs::create_dir(dir.join("results")).map_err(|e| e.to_string())?;
    fs::write(
        dir.join("full.json"),
        r#"{"name": "full arctan model", "family": "powerlaw", "inner": "per_class_arctan2"}"#,
    )
    .map_err(|e| e.to_string())?;
    fs::write(
        dir.join("total.json"),
        r#"{"name": "total_n linear model", "family": "powerlaw", "inner": "total_n_linear"}"#,
    )
    .map_err(|e| e.to_string())?;
    for m in ["full", "total"] {
        run(
            dir,
            &[
                "fit",
                "--model",
                &format!("{m}.json"),
                "--train",
                "train.csv",
                "--test",
                "test.csv",
                "--out",
                &format!("results/{m}.json"),
            ],
        )?;
    }
    run(dir, &["select", "--train", "train.csv", "--test", "test.csv", "--out", "results/path.json"])?;
    run(dir, &["report", "--results", "results", "--out", "report"])?;

    for name in ["full", "total", "path"] {
        let v = json_file(&dir.join(format!("results/{name}.json")))?;
        for key in ["name", "model", "scaling", "result"] {
            if v.get(key).is_none() {
                return Err(format!("results/{name}.json lacks {key}"));
            }
        }
        expect_header(
            &dir.join(format!("results/{name}_residuals.csv")),
            &["split", "measured", "predicted", "residual"],
        )?;
        check_svg(&dir.join(format!("report/{name}_train.svg")))?;
        check_svg(&dir.join(format!("report/{name}_test.svg")))?;
    }
    let path = json_file(&dir.join("results/path.json"))?;
    if !path["steps"].as_array().is_some_and(|s| !s.is_empty()) {
        return Err("selection admitted no features".into());
    }
    check_svg(&dir.join("report/full_forward.svg"))?;
    check_svg(&dir.join("report/accuracy_vs_epoch.svg"))?;
    check_svg(&dir.join("report/accuracy_vs_size.svg"))?;
    let models = expect_header(
        &dir.join("report/model_table.csv"),
        &["model", "train_loss", "test_loss", "train_r2", "test_r2"],
    )?;
    if models != 3 {
        return Err(format!("model table has {models} rows"));
    }
    expect_header(&dir.join("report/prediction_points.csv"), &["model", "measured", "predicted", "split"])?;
    if !read(&dir.join("report/model_table.txt"))?.contains("full arctan model") {
        return Err("model_table.txt lacks the full arctan model".into());
    }

    let predicted: f64 =
        run(dir, &["predict", "--model", "results/full.json", "--counts", "80,80,80,80,80", "--epoch", "40"])?
            .trim()
            .parse()
            .map_err(|e| format!("predict output: {e}"))?;
    if !(0.0..=1.0).contains(&predicted) {
        return Err(format!("predicted accuracy {predicted}"));
    }
    within(start.elapsed(), Duration::from_secs(120))
        .map(|t| format!("design, simulate, fit, select, report, predict in {t}"))
}
