use anyhow::{bail, Context, Result};
use bpatch::data::{identity_spec, select_parents, write_dataset_csv};
use bpatch::evaluation::{
    confusion_metrics, cross_validate, feature_subset_eval, knn_cross_validate, runtime_profile,
    sensitivity_sweep, FeatureGroup, GridPoint, KnnMode, PlotSeries,
};
use bpatch::inference::{run_chain, PosteriorSamples};
use bpatch::model::{generate_synthetic, random_parents, Category};
use bpatch::prediction::{
    explain, explanation_table, feature_importance, predict_label_distribution, predict_many, Background,
};
use bpatch::{random, CategoricalDataset, Hyperparameters, ParentSet, Variant};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::run::{load_data, print_hyperparameters, RunDir};

pub fn dispatch(cli: Cli) -> Result<()> {
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => train(g, a),
        Command::Predict(a) => predict(g, a),
        Command::Explain(a) => explain_cmd(g, a),
        Command::Cv(a) => cv(g, a),
        Command::Sweep(a) => sweep(g, a),
        Command::Subsets(a) => subsets(g, a),
        Command::Runtime(a) => runtime(g, a),
        Command::Baseline(BaselineCommand::Knn(a)) => knn(g, a),
        Command::Generate(a) => generate(g, a),
    }
}

/// Names of the files a `train` run writes next to its config snapshot.
const ARCHIVE: &str = "archive.json";
const PARENTS: &str = "parents.json";
const META: &str = "meta.json";

#[derive(Serialize, Deserialize)]
struct TrainMeta {
    feature_names: Vec<String>,
    /// 1-based source rows of the parents.
    parent_rows: Vec<usize>,
    /// 1-based source rows of the modeled training cases.
    training_rows: Vec<usize>,
}

fn train(g: &GlobalArgs, a: &TrainArgs) -> Result<()> {
    let hp = a.model.hyperparameters();
    hp.validate()?;
    print_hyperparameters(&hp, Some(a.model.s));
    let (loaded, _) = load_data(&a.data, g.seed)?;
    let data = &loaded.dataset;
    let dir = RunDir::create(&a.out.out, "train", g, a, Some(&hp))?;
    let all: Vec<usize> = (0..data.n_cases()).collect();
    let parent_ids = select_parents(&all, a.model.s, &mut random::seeded(g.seed.wrapping_add(1)))?;
    let modeled: Vec<usize> = all.iter().copied().filter(|i| parent_ids.binary_search(i).is_err()).collect();
    let parents = ParentSet::from_dataset(data, &parent_ids)?;
    let train = data.select_rows(&modeled)?;
    let train = if a.model.unsupervised { train.without_labels() } else { train };
    let fitted = run_chain(&train, &parents, &hp, &a.model.chain(g.seed))?;
    fitted.save_json(&dir.file(ARCHIVE))?;
    dir.write_json(PARENTS, &parents)?;
    let rows = |ids: &[usize]| ids.iter().map(|&i| data.case_ids()[i] + 1).collect();
    dir.write_json(
        META,
        &TrainMeta {
            feature_names: data.feature_names().to_vec(),
            parent_rows: rows(&parent_ids),
            training_rows: rows(&modeled),
        },
    )?;
    let mut trace = String::from("iteration,log_posterior\n");
    for (t, lp) in fitted.log_posterior_trace.iter().enumerate() {
        trace.push_str(&format!("{},{lp}\n", t + 1));
    }
    dir.write_text("trace.csv", &trace)?;
    let importance = feature_importance(&fitted)?;
    dir.write_json("importance.json", &importance)?;
    let mut text = String::from("feature  q_mean  q25  median  q75  acceptance\n");
    for &j in &importance.ranking {
        let f = &importance.summaries[j];
        text.push_str(&format!(
            "{}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}\n",
            data.feature_names()[j],
            f.mean,
            f.q25,
            f.median,
            f.q75,
            fitted.acceptance_rate_q[j]
        ));
    }
    dir.write_text("importance.txt", &text)?;
    println!("{} retained states written to {}", fitted.states.len(), dir.path.display());
    Ok(())
}

struct Archive {
    fitted: PosteriorSamples,
    parents: ParentSet,
}

fn read_archive(path: &std::path::Path) -> Result<Archive> {
    let fitted = PosteriorSamples::load_json(&path.join(ARCHIVE))?;
    let parents_path = path.join(PARENTS);
    let text = std::fs::read_to_string(&parents_path)
        .map_err(|e| bpatch::Error::Io { path: parents_path.clone(), source: e })?;
    let parents: ParentSet =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", parents_path.display()))?;
    Ok(Archive { fitted, parents })
}

fn check_layout(data: &CategoricalDataset, parents: &ParentSet) -> Result<()> {
    if data.cardinalities() != parents.cardinalities() {
        bail!("dataset categories do not match the archive; use the discretization the model was trained with");
    }
    Ok(())
}

#[derive(Serialize)]
struct CasePrediction {
    /// 1-based source row.
    row: usize,
    theta: Vec<f64>,
    /// 1-based class.
    predicted: usize,
    truth: Option<usize>,
}

fn predict(g: &GlobalArgs, a: &PredictArgs) -> Result<()> {
    let archive = read_archive(&a.archive)?;
    let hp = archive.fitted.hyperparameters;
    print_hyperparameters(&hp, Some(archive.parents.size()));
    let (loaded, _) = load_data(&a.data, g.seed)?;
    let data = &loaded.dataset;
    check_layout(data, &archive.parents)?;
    let dir = RunDir::create(&a.out.out, "predict", g, a, Some(&hp))?;
    let background = Background::from_samples(&archive.fitted, a.predict.max_samples)?;
    let config = a.predict.config(g.seed);
    let results = predict_many(data, &background, &archive.parents, &hp, &config)?;
    let cases: Vec<CasePrediction> = results
        .iter()
        .enumerate()
        .map(|(i, (r, _))| CasePrediction {
            row: data.case_ids()[i] + 1,
            theta: r.theta.clone(),
            predicted: r.predicted_label as usize + 1,
            truth: data.label(i).map(|y| y as usize + 1),
        })
        .collect();
    dir.write_json("predictions.json", &cases)?;
    let mut text = String::from("row  theta  predicted  truth\n");
    for c in &cases {
        text.push_str(&format!(
            "{}  {:.4}  {}  {}\n",
            c.row,
            c.theta.last().copied().unwrap_or(0.0),
            c.predicted,
            c.truth.map(|t| t.to_string()).unwrap_or_else(|| "-".into())
        ));
    }
    if let Some(truth) = data.labels() {
        let predicted: Vec<Category> = results.iter().map(|(r, _)| r.predicted_label).collect();
        let positive = loaded.positive_class.unwrap_or(1);
        let m = confusion_metrics(&predicted, truth, data.n_classes(), positive)?;
        text.push_str(&format!("accuracy {:.4}\n", m.accuracy));
        dir.write_json("metrics.json", &m)?;
    }
    dir.write_text("predictions.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn explain_cmd(g: &GlobalArgs, a: &ExplainArgs) -> Result<()> {
    let archive = read_archive(&a.archive)?;
    let hp = archive.fitted.hyperparameters;
    print_hyperparameters(&hp, Some(archive.parents.size()));
    let (loaded, _) = load_data(&a.data, g.seed)?;
    let data = &loaded.dataset;
    check_layout(data, &archive.parents)?;
    let dir = RunDir::create(&a.out.out, "explain", g, a, Some(&hp))?;
    let selected: Vec<usize> = if a.cases.is_empty() {
        (0..data.n_cases()).collect()
    } else {
        a.cases
            .iter()
            .filter_map(|&row| {
                let found = data.case_ids().iter().position(|&c| c + 1 == row);
                if found.is_none() {
                    log::warn!("case {row} is not in the loaded data; skipped");
                    eprintln!("warning: case {row} is not in the loaded data; skipped");
                }
                found
            })
            .collect()
    };
    let background = Background::from_samples(&archive.fitted, a.predict.max_samples)?;
    let config = a.predict.config(g.seed);
    let mut all = Vec::with_capacity(selected.len());
    let mut text = String::new();
    for &i in &selected {
        let (_, draws) =
            predict_label_distribution(data.row(i), &background, &archive.parents, &hp, &config, i as u64)?;
        let e = explain(data.case_ids()[i], data.row(i), &draws, &archive.parents, a.top_k)?;
        text.push_str(&explanation_table(&e, data.row(i), &archive.parents, data.feature_names()));
        text.push('\n');
        all.push(e);
    }
    dir.write_json("explanations.json", &all)?;
    dir.write_text("explanations.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn positive_default(loaded: &bpatch::data::LoadedData) -> Category {
    loaded.positive_class.unwrap_or(1)
}

fn cv(g: &GlobalArgs, a: &CvArgs) -> Result<()> {
    let (loaded, _) = load_data(&a.data, g.seed)?;
    let config = experiment_config(a, g.seed, positive_default(&loaded));
    print_hyperparameters(&config.hp, Some(config.n_parents));
    let dir = RunDir::create(&a.out.out, "cv", g, a, Some(&config.hp))?;
    let data = &loaded.dataset;
    let plan = config.plan(data)?;
    dir.write_json("folds.json", &plan)?;
    let report = cross_validate(data, &config, &plan)?;
    dir.write_json("report.json", &report)?;
    let mut text = report.text_table();
    text.push_str("\nfeature ranking by q_j:\n");
    let q = report.q_mean();
    for &j in &report.feature_ranking() {
        text.push_str(&format!("  {}  {:.3}\n", data.feature_names()[j], q[j]));
    }
    dir.write_text("report.txt", &text)?;
    if a.emit_plot_data {
        let importance = PlotSeries {
            name: "feature importance".into(),
            x_label: "feature".into(),
            y_label: "q_j posterior mean".into(),
            x: (1..=q.len()).map(|j| j as f64).collect(),
            y: q.clone(),
        };
        importance.write_csv(&dir.file("plot_importance.csv"))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for f in &report.folds {
            for (k, &i) in plan.test_ids(f.fold).iter().enumerate() {
                x.push(data.label(i).map_or(0.0, |l| l as f64 + 1.0));
                y.push(f.theta[k].last().copied().unwrap_or(0.0));
            }
        }
        let probs = PlotSeries {
            name: "test-case probabilities".into(),
            x_label: "true class".into(),
            y_label: "theta".into(),
            x,
            y,
        };
        probs.write_csv(&dir.file("plot_theta.csv"))?;
        dir.write_json("plots.json", &[importance, probs])?;
    }
    print!("{text}");
    Ok(())
}

fn parse_grid(param: SweepParam, values: &[String]) -> Result<Vec<GridPoint>> {
    values
        .iter()
        .map(|v| {
            let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad grid value {s:?}"));
            Ok(match param {
                SweepParam::S => GridPoint::Parents {
                    s: v.trim().parse().with_context(|| format!("bad parent count {v:?}"))?,
                },
                SweepParam::Alpha => GridPoint::Alpha { alpha: num(v)? },
                SweepParam::Sigma2 => GridPoint::Sigma2 { sigma2: num(v)? },
                SweepParam::Shape => {
                    let (a, b) = v.split_once(':').context("shape values are written gamma:sigma1")?;
                    GridPoint::Shape {
                        gamma: num(a)?,
                        sigma1: num(b)?,
                    }
                }
            })
        })
        .collect()
}

fn sweep(g: &GlobalArgs, a: &SweepArgs) -> Result<()> {
    let grid = parse_grid(a.param, &a.values)?;
    let (loaded, _) = load_data(&a.cv.data, g.seed)?;
    let config = experiment_config(&a.cv, g.seed, positive_default(&loaded));
    print_hyperparameters(&config.hp, Some(config.n_parents));
    let dir = RunDir::create(&a.cv.out.out, "sweep", g, a, Some(&config.hp))?;
    let results = sensitivity_sweep(&loaded.dataset, &config, &grid)?;
    dir.write_json("sweep.json", &results)?;
    let mut text = String::from("point  mean_accuracy  sd\n");
    for r in &results {
        text.push_str(&format!(
            "{}  {:.2}  {:.2}\n",
            r.point.label(),
            100.0 * r.report.mean_accuracy(),
            100.0 * r.report.summary.sd[0]
        ));
    }
    dir.write_text("sweep.txt", &text)?;
    if a.cv.emit_plot_data {
        let series = PlotSeries::from_sweep(&format!("{:?}", a.param), &results);
        series.write_csv(&dir.file("plot_sweep.csv"))?;
        dir.write_json("plots.json", &[series])?;
    }
    print!("{text}");
    Ok(())
}

fn subsets(g: &GlobalArgs, a: &SubsetArgs) -> Result<()> {
    let (loaded, _) = load_data(&a.cv.data, g.seed)?;
    let config = experiment_config(&a.cv, g.seed, positive_default(&loaded));
    print_hyperparameters(&config.hp, Some(config.n_parents));
    let dir = RunDir::create(&a.cv.out.out, "subsets", g, a, Some(&config.hp))?;
    let data = &loaded.dataset;
    let plan = config.plan(data)?;
    let base = cross_validate(data, &config, &plan)?;
    let ranking = base.feature_ranking();
    let groups: Vec<FeatureGroup> = [FeatureGroup::Top3, FeatureGroup::Next3, FeatureGroup::Next3b]
        .into_iter()
        .filter(|g| g.select(&ranking).is_ok())
        .collect();
    let mut results = feature_subset_eval(data, &config, &plan, &ranking, &groups)?;
    results.push((FeatureGroup::All, base));
    dir.write_json("subsets.json", &results)?;
    let mut text = String::from("group  features  mean_accuracy\n");
    for (group, report) in &results {
        let cols = group.select(&ranking)?;
        let names: Vec<&str> = cols.iter().map(|&j| data.feature_names()[j].as_str()).collect();
        text.push_str(&format!("{group:?}  {}  {:.2}\n", names.join(","), 100.0 * report.mean_accuracy()));
    }
    dir.write_text("subsets.txt", &text)?;
    if a.cv.emit_plot_data {
        let series = PlotSeries {
            name: "accuracy by feature group".into(),
            x_label: "group".into(),
            y_label: "mean accuracy".into(),
            x: (1..=results.len()).map(|k| k as f64).collect(),
            y: results.iter().map(|(_, r)| r.mean_accuracy()).collect(),
        };
        series.write_csv(&dir.file("plot_subsets.csv"))?;
    }
    print!("{text}");
    Ok(())
}

fn runtime(g: &GlobalArgs, a: &RuntimeArgs) -> Result<()> {
    let dir = RunDir::create(&a.out.out, "runtime", g, a, None)?;
    let sizes: Vec<(usize, usize)> = a.n.iter().map(|&n| (n, a.p)).collect();
    let rows = runtime_profile(&sizes, &a.s, &[Variant::ModelI, Variant::ModelII], a.sweeps, g.seed)?;
    dir.write_json("runtime.json", &rows)?;
    let mut text = String::from("variant  N  P  S  sweeps  seconds  per_sweep\n");
    for r in &rows {
        text.push_str(&format!(
            "{}  {}  {}  {}  {}  {:.3}  {:.5}\n",
            r.variant, r.n_cases, r.n_features, r.n_parents, r.sweeps, r.total_seconds, r.per_sweep_seconds
        ));
    }
    dir.write_text("runtime.txt", &text)?;
    if a.emit_plot_data {
        let series = vec![
            PlotSeries::from_runtime("model1", &rows, Variant::ModelI),
            PlotSeries::from_runtime("model2", &rows, Variant::ModelII),
        ];
        for s in &series {
            s.write_csv(&dir.file(&format!("plot_runtime_{}.csv", s.name)))?;
        }
        dir.write_json("plots.json", &series)?;
    }
    print!("{text}");
    Ok(())
}

fn knn(g: &GlobalArgs, a: &KnnArgs) -> Result<()> {
    let (loaded, _) = load_data(&a.data, g.seed)?;
    let data = &loaded.dataset;
    let dir = RunDir::create(&a.out.out, "baseline-knn", g, a, None)?;
    let mode = match a.mode {
        KnnModeArg::Plain => KnnMode::Plain,
        KnnModeArg::Distance => KnnMode::DistanceWeighted,
        KnnModeArg::Feature => KnnMode::FeatureWeighted {
            weights: if a.weights.is_empty() {
                vec![1.0; data.n_features()]
            } else {
                a.weights.clone()
            },
        },
    };
    let plan = bpatch::data::kfold_split(data.n_cases(), data.labels(), a.folds, g.seed, a.stratified)?;
    let positive = a
        .positive_class
        .map(|c| c.saturating_sub(1) as Category)
        .unwrap_or(positive_default(&loaded));
    let mut report = knn_cross_validate(data, &plan, a.k, &mode, positive)?;
    report.name = format!("KNN ({}) {:?}", a.k, a.mode);
    dir.write_json("report.json", &report)?;
    let text = report.text_table();
    dir.write_text("report.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn generate(g: &GlobalArgs, a: &GenerateArgs) -> Result<()> {
    let hp = Hyperparameters::with_variant(a.variant.into());
    print_hyperparameters(&hp, Some(a.s));
    let dir = RunDir::create(&a.out.out, "generate", g, a, Some(&hp))?;
    let parents = random_parents(&vec![a.v; a.p], a.s, a.m, g.seed)?;
    let draw = generate_synthetic(&hp, &parents, a.n, g.seed.wrapping_add(1))?;
    dir.write_json("generative.json", &draw)?;
    dir.write_json(PARENTS, &parents)?;
    write_dataset_csv(&draw.dataset, &dir.file("data.csv"))?;
    dir.write_json("spec.json", &identity_spec(&draw.dataset))?;
    println!(
        "{} cases, {} parents, {} features written to {}",
        a.n,
        a.s,
        a.p,
        dir.path.display()
    );
    Ok(())
}
