use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use classmix_core::design::{generate_design_suite, load_design, save_design};
use classmix_core::fitting::{fit_and_score, forward_test, score};
use classmix_core::pipeline::{filter_epochs, save_records, TrainingRecord};
use classmix_core::report::{
    accuracy_vs_epoch_plot, accuracy_vs_size_plot, comparison_table, prediction_plot, read_points_csv, table_csv,
    table_text, Figure, ReportBundle, FORWARD, TEST, TRAIN,
};
use classmix_core::selection::{build_candidates, forward_select_limited, CandidateSet, PathRow, PathStep};
use classmix_core::simulator::run_experiments;
use classmix_core::{Design, DesignSpec, FeatureVector, FitResult, FittedModel, OracleSpec, SplitRule};
use serde::Serialize;

use crate::artifacts::{
    file_stem, load_config, load_model, read_json, read_log, residual_rows, residuals_path, train_test, write_json,
    write_residuals, ResultFile,
};
use crate::{DesignArgs, FitArgs, PredictArgs, ReportArgs, SelectArgs, SimulateArgs};

pub fn design(args: DesignArgs) -> anyhow::Result<()> {
    let template = DesignSpec::uniform(args.classes, args.subset_size[0], args.cap, args.rows)
        .with_opt_iters(args.opt_iters)
        .with_seed(args.seed)
        .with_candidate_batch(args.candidate_batch)
        .with_sampler(args.sampler.into());
    let designs = generate_design_suite(&args.subset_size, &template)?;
    let single_file = designs.len() == 1 && args.out.extension().is_some_and(|e| e == "csv");
    if !single_file {
        fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    }
    for d in &designs {
        let path =
            if single_file { args.out.clone() } else { args.out.join(format!("design_s{}.csv", d.subset_size())) };
        save_design(d, &path)?;
        println!("{}\tmaximin {:.4}", path.display(), d.maximin);
    }
    Ok(())
}

fn load_designs(dir: &Path) -> anyhow::Result<Vec<Design>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv") && p.with_extension("json").exists());
    let mut designs = paths
        .iter()
        .map(|p| load_design(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if designs.is_empty() {
        bail!("no designs (CSV with JSON sidecar) in {}", dir.display());
    }
    designs.sort_by_key(|d| (d.subset_size(), d.spec.rng_seed));
    Ok(designs)
}

pub fn simulate(args: SimulateArgs, min_epoch: u32) -> anyhow::Result<()> {
    let designs = load_designs(&args.designs)?;
    let oracle: OracleSpec = read_json(&args.oracle)?;
    let records = filter_epochs(&run_experiments(&designs, &oracle)?, min_epoch);
    save_records(&args.out, oracle.ground_truth.spec.class_names(), &records)?;
    println!("{} records from {} designs -> {}", records.len(), designs.len(), args.out.display());
    Ok(())
}

pub fn fit(args: FitArgs, min_epoch: u32) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let (dataset, test) = train_test(&args.train, &args.test, min_epoch)?;
    let (name, spec) = load_model(&args.model, &dataset.class_names)?;
    let train = dataset.observations();
    let result = fit_and_score(&spec, &train, &test, &config)?;
    let rule = match args.forward_at_most {
        Some(t) => SplitRule::TotalNAtMost(t),
        None => SplitRule::TotalNQuantile(args.forward_quantile),
    };
    let forward = match forward_test(&spec, &train, &test, rule, &config) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("forward test skipped: {e}");
            None
        }
    };
    let model = FittedModel::new(spec.clone(), result.params.clone())?;
    let mut rows = residual_rows(&model, &train, TRAIN)?;
    rows.extend(residual_rows(&model, &test, TEST)?);
    if let Some(f) = &forward {
        rows.extend(residual_rows(&FittedModel::new(spec, f.params.clone())?, &test, FORWARD)?);
    }
    write_residuals(&residuals_path(&args.out), &rows)?;
    println!(
        "{name}: train loss {:.6} test loss {:.6} train r2 {:.4} test r2 {:.4}",
        result.train_loss, result.test_loss, result.train_r2, result.test_r2
    );
    write_json(
        &args.out,
        &ResultFile {
            name,
            model,
            scaling: dataset.scaling,
            min_epoch,
            train: args.train,
            test: args.test,
            result,
            forward,
        },
    )
}

#[derive(Serialize)]
struct PathFile {
    #[serde(flatten)]
    result: ResultFile,
    stop_threshold: f64,
    base_rss: f64,
    table: Vec<PathRow>,
    steps: Vec<PathStep>,
    diagnostics: Vec<String>,
}

pub fn select(args: SelectArgs, min_epoch: u32) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let (dataset, test) = train_test(&args.train, &args.test, min_epoch)?;
    let candidates = if args.candidates.is_empty() {
        build_candidates(&dataset.class_names)?
    } else {
        CandidateSet::from_names(&dataset.class_names, &args.candidates)?
    };
    let train = dataset.observations();
    let path = forward_select_limited(&train, &candidates, args.stop, &config, args.max_features)?;
    let model = path.final_model()?;
    let train_score = score(&model.spec, &model.params, &train)?;
    let test_score = score(&model.spec, &model.params, &test)?;
    let result = FitResult {
        params: model.params.clone(),
        train_loss: train_score.mse,
        test_loss: test_score.mse,
        train_r2: train_score.r2,
        test_r2: test_score.r2,
        iterations_used: path.steps.last().map_or(0, |s| s.iterations_used),
        converged: path.steps.last().is_none_or(|s| s.converged),
    };
    let mut rows = residual_rows(&model, &train, TRAIN)?;
    rows.extend(residual_rows(&model, &test, TEST)?);
    write_residuals(&residuals_path(&args.out), &rows)?;
    for row in path.table() {
        match row.rss {
            Some(rss) => println!("{:<32} {:>10.4} {:>12.4}", row.parameter, row.value, rss),
            None => println!("{:<32} {:>10.4} {:>12}", row.parameter, row.value, "-"),
        }
    }
    println!("train r2 {:.4} test r2 {:.4}", result.train_r2, result.test_r2);
    let file = PathFile {
        result: ResultFile {
            name: file_stem(&args.out),
            model,
            scaling: dataset.scaling,
            min_epoch,
            train: args.train,
            test: args.test,
            result,
            forward: None,
        },
        stop_threshold: args.stop,
        base_rss: path.base_rss,
        table: path.table(),
        steps: path.steps,
        diagnostics: path.diagnostics,
    };
    write_json(&args.out, &file)
}

fn load_results(dir: &Path) -> anyhow::Result<Vec<(PathBuf, ResultFile)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    // Other JSON (oracles, sidecars) in the same directory is skipped.
    let results: Vec<(PathBuf, ResultFile)> =
        paths.into_iter().filter_map(|p| read_json::<ResultFile>(&p).ok().map(|r| (p, r))).collect();
    if results.is_empty() {
        bail!("no fit or select results in {}", dir.display());
    }
    Ok(results)
}

#[derive(Serialize)]
struct PointRow<'a> {
    model: &'a str,
    measured: f64,
    predicted: f64,
    split: &'a str,
}

pub fn report(args: ReportArgs, min_epoch: u32) -> anyhow::Result<()> {
    let results = load_results(&args.results)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut bundle = ReportBundle::default();
    let named: Vec<(String, FitResult)> = results.iter().map(|(_, r)| (r.name.clone(), r.result.clone())).collect();
    bundle.model_table = comparison_table(&named);

    let mut points_out = csv::Writer::from_path(args.out.join("prediction_points.csv"))?;
    for (path, r) in &results {
        let residuals = residuals_path(path);
        let points =
            read_points_csv(fs::File::open(&residuals).with_context(|| format!("opening {}", residuals.display()))?)?;
        for split in [TRAIN, TEST, FORWARD] {
            let subset: Vec<_> = points.iter().filter(|p| p.split == split).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            let title = format!("{} ({split})", r.name);
            bundle.figures.push(Figure {
                name: format!("{}_{split}.svg", file_stem(path)),
                svg: prediction_plot(&subset, &title)?,
            });
        }
        for p in &points {
            points_out.serialize(PointRow {
                model: &r.name,
                measured: p.measured,
                predicted: p.predicted,
                split: &p.split,
            })?;
        }
        bundle.prediction_points.extend(points);
    }
    points_out.flush()?;

    // Summaries over the logs behind the first result.
    let (_, first) = &results[0];
    let mut records: Vec<TrainingRecord> = Vec::new();
    for log in [&first.train, &first.test] {
        match read_log(log) {
            Ok(t) => records.extend(filter_epochs(&t.records, min_epoch)),
            Err(e) => log::warn!("summary plots skip {}: {e:#}", log.display()),
        }
    }
    if !records.is_empty() {
        bundle.figures.push(Figure { name: "accuracy_vs_epoch.svg".into(), svg: accuracy_vs_epoch_plot(&records)? });
        bundle.figures.push(Figure { name: "accuracy_vs_size.svg".into(), svg: accuracy_vs_size_plot(&records)? });
    }

    fs::write(args.out.join("model_table.csv"), table_csv(&bundle.model_table)?)?;
    let text = table_text(&bundle.model_table);
    fs::write(args.out.join("model_table.txt"), &text)?;
    for f in &bundle.figures {
        fs::write(args.out.join(&f.name), &f.svg)?;
    }
    print!("{text}");
    println!("{} figures -> {}", bundle.figures.len(), args.out.display());
    Ok(())
}

pub fn predict(args: PredictArgs, min_epoch: u32) -> anyhow::Result<()> {
    let r: ResultFile = read_json(&args.model)?;
    let k = r.model.spec.n_classes();
    if args.counts.len() != k {
        bail!("model has {k} classes, got {} counts", args.counts.len());
    }
    if args.epoch < min_epoch {
        log::warn!("epoch {} is below the minimum epoch {min_epoch} used in fitting", args.epoch);
    }
    let raw = FeatureVector::new(
        args.counts.iter().map(|&c| c as f64).collect(),
        args.counts.iter().sum::<u64>() as f64,
        args.epoch as f64,
    );
    let x = r.scaling.apply(&raw);
    let y = r.model.predict(&x)?;
    println!("{y}");
    Ok(())
}
