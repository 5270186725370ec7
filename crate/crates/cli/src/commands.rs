use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use musanet::data::{
    batch_and_pad, build_examples, generate_synthetic, load_dataset, load_dataset_with_vocab, save_dataset,
    split_dataset, CategoryMap, Dataset, Example, GeneratorConfig, Label, LoadOptions, Split, Task, Vocabulary,
    PAPER_SPLIT,
};
use musanet::model::{attention_records, ModelConfig};
use musanet::train::{
    evaluate, metrics, model_gradcheck, predict, readmission_scores, train, Checkpoint, GradCheckSetup, TrainConfig,
    TrainContext,
};
use serde::Serialize;

use crate::args::{
    DataArgs, EvaluateArgs, ExplainArgs, GenDataArgs, GradcheckArgs, RobustnessArgs, ScoredArgs, TrainArgs,
};
use crate::Failure;

pub const DATA_FILE: &str = "data.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CATEGORIES_FILE: &str = "categories.tsv";

type Outcome = Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| musanet::Error::io(path, e).into())
}

/// Writes to `path`, or to standard output when absent.
fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => write_text(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Data(format!("writing to standard output: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value).map_err(musanet::Error::from)? + "\n")
}

pub fn gen_data(args: &GenDataArgs, patients_given: bool, dump: bool) -> Outcome {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| musanet::Error::io(path, e))?;
            serde_json::from_str(&text).map_err(musanet::Error::from)?
        }
        None => GeneratorConfig::default(),
    };
    if patients_given || args.config.is_none() {
        config.num_patients = args.patients;
    }
    config.validate()?;
    if dump {
        return emit(None, &to_json(&serde_json::json!({ "generator": config, "seed": args.seed }))?);
    }
    let cohort = generate_synthetic(&config, args.seed)?;
    fs::create_dir_all(&args.out).map_err(|e| musanet::Error::io(&args.out, e))?;
    save_dataset(&cohort.dataset, &args.out.join(DATA_FILE))?;
    cohort.dataset.vocab.save(&args.out.join(VOCAB_FILE))?;
    cohort.categories.save(&args.out.join(CATEGORIES_FILE), &cohort.dataset.vocab)?;

    let ds = &cohort.dataset;
    let visits: usize = ds.journeys.iter().map(|j| j.visits().len()).sum();
    let positives = build_examples(ds, Task::Readmission, None)?
        .iter()
        .filter(|e| e.label == Label::Readmission(true))
        .count();
    eprintln!(
        "wrote {} patients, {} codes, {:.3} visits per patient, readmission rate {:.4} to {}",
        ds.len(),
        ds.vocab.len(),
        visits as f64 / ds.len().max(1) as f64,
        positives as f64 / ds.len().max(1) as f64,
        args.out.display()
    );
    Ok(())
}

fn categories_path(explicit: Option<&PathBuf>, data: &Path) -> Option<PathBuf> {
    explicit.cloned().or_else(|| {
        let sibling = data.with_file_name(CATEGORIES_FILE);
        sibling.exists().then_some(sibling)
    })
}

fn load_training_data(args: &DataArgs, task: Task) -> Result<(Dataset, Option<CategoryMap>), Failure> {
    let dataset = match &args.vocab {
        Some(path) => load_dataset_with_vocab(&args.data, &Vocabulary::load(path)?)?,
        None => load_dataset(&args.data, LoadOptions { min_count: args.min_count })?,
    };
    if dataset.is_empty() {
        return Err(Failure::Data(format!("{}: no usable journeys", args.data.display())));
    }
    let categories = match task {
        Task::Readmission => None,
        Task::Diagnosis => {
            let path = categories_path(args.categories.as_ref(), &args.data)
                .ok_or_else(|| Failure::Usage("the dx task needs --categories".into()))?;
            Some(CategoryMap::load(&path, &dataset.vocab)?)
        }
    };
    Ok((dataset, categories))
}

fn part(split: Split, parts: (Dataset, Dataset, Dataset)) -> Dataset {
    match split {
        Split::Train => parts.0,
        Split::Valid => parts.1,
        Split::Test => parts.2,
    }
}

pub fn train_command(args: &TrainArgs, dump: bool) -> Outcome {
    let task: Task = args.task.into();
    let train_config = TrainConfig {
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        task,
        ..Default::default()
    };
    train_config.validate()?;
    let mut model = ModelConfig {
        d: args.d,
        max_visits: args.max_visits,
        max_codes: args.max_codes,
        vocab_size: 2,
        num_classes: 2,
        dropout: args.dropout,
        max_interval: args.max_interval,
        task,
        use_attention_pooling: !args.no_attn_pool,
        use_positional_mask: !args.no_posmask,
        use_interval_encoding: !args.no_interval,
        depth: args.depth,
    };
    model.validate()?;

    let (dataset, categories) = load_training_data(&args.data, task)?;
    model.vocab_size = dataset.vocab.table_size();
    if let Some(map) = &categories {
        model.num_classes = map.num_categories();
    }
    model.validate()?;
    if dump {
        return emit(None, &to_json(&serde_json::json!({ "model": model, "train": train_config }))?);
    }

    let (train_set, valid_set, _) = split_dataset(&dataset, PAPER_SPLIT, args.seed)?;
    let train_examples = build_examples(&train_set, task, categories.as_ref())?;
    let valid_examples = build_examples(&valid_set, task, categories.as_ref())?;
    eprintln!(
        "training on {} examples, validating on {}, {} parameters",
        train_examples.len(),
        valid_examples.len(),
        model.parameter_count()
    );
    let context = TrainContext {
        vocab: &dataset.vocab,
        categories: categories.as_ref(),
    };
    let outcome = train(&train_examples, &valid_examples, &model, &train_config, context)?;
    outcome.checkpoint.save(&args.out)?;
    if let Some(msg) = outcome.divergence {
        return Err(Failure::Numeric(format!(
            "{msg}; last finite parameters written to {}",
            args.out.display()
        )));
    }
    let ckpt = &outcome.checkpoint;
    for h in &ckpt.history {
        println!(
            "epoch {:>3}  train loss {:.5}  valid loss {}  valid metric {}",
            h.epoch,
            h.train_loss,
            h.valid_loss.map_or("-".into(), |v| format!("{v:.5}")),
            h.valid_metric.map_or("-".into(), |v| format!("{v:.5}"))
        );
    }
    println!("best epoch {} written to {}", ckpt.epoch, args.out.display());
    if let Some(path) = &args.report {
        let report = evaluate(ckpt, &valid_examples, &musanet::train::DEFAULT_KS)?;
        write_text(path, &report.to_json()?)?;
    }
    Ok(())
}

fn load_scored(args: &ScoredArgs) -> Result<(Checkpoint, Vec<Example>), Failure> {
    let mut ckpt = Checkpoint::load(&args.checkpoint)?;
    let dataset = load_dataset_with_vocab(&args.data, &ckpt.vocab)?;
    if ckpt.model.task == Task::Diagnosis && ckpt.categories.is_none() {
        let path = categories_path(args.categories.as_ref(), &args.data)
            .ok_or_else(|| Failure::Usage("diagnosis checkpoint has no categories; pass --categories".into()))?;
        ckpt.categories = Some(CategoryMap::load(&path, &ckpt.vocab)?);
    }
    let seed = args.seed.unwrap_or(ckpt.seed);
    let chosen = part(args.split.into(), split_dataset(&dataset, PAPER_SPLIT, seed)?);
    let examples = build_examples(&chosen, ckpt.model.task, ckpt.categories.as_ref())?;
    Ok((ckpt, examples))
}

pub fn evaluate_command(args: &EvaluateArgs, dump: bool) -> Outcome {
    if args.k.iter().any(|&k| k == 0) {
        return Err(Failure::Usage("--k values must be positive".into()));
    }
    let (ckpt, examples) = load_scored(&args.scored)?;
    if dump {
        return emit(None, &to_json(&serde_json::json!({ "model": ckpt.model, "train": ckpt.train, "k": args.k }))?);
    }
    let report = evaluate(&ckpt, &examples, &args.k)?;
    eprintln!("{report}");
    emit(args.out.as_deref(), &(report.to_json()? + "\n"))
}

#[derive(Serialize)]
struct LengthPoint {
    visits: usize,
    examples: usize,
    value: f64,
}

#[derive(Serialize)]
struct RobustnessReport {
    task: Task,
    metric: String,
    points: Vec<LengthPoint>,
    skipped: Vec<usize>,
}

pub fn robustness_command(args: &RobustnessArgs, dump: bool) -> Outcome {
    if args.min_length == 0 || args.min_length > args.max_length || args.k == 0 {
        return Err(Failure::Usage("need 1 <= --min-length <= --max-length and a positive --k".into()));
    }
    let (ckpt, examples) = load_scored(&args.scored)?;
    if dump {
        return emit(None, &to_json(&serde_json::json!({ "model": ckpt.model, "k": args.k }))?);
    }
    let task = ckpt.model.task;
    let metric = match task {
        Task::Readmission => "pr_auc".to_owned(),
        Task::Diagnosis => format!("precision@{}", args.k),
    };
    let mut report = RobustnessReport {
        task,
        metric,
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for length in args.min_length..=args.max_length {
        let bucket: Vec<Example> = examples.iter().filter(|e| e.visits.len() == length).cloned().collect();
        if bucket.is_empty() {
            eprintln!("no examples with {length} visits; skipped");
            report.skipped.push(length);
            continue;
        }
        let logits = predict(&ckpt.params, &ckpt.model, &bucket)?;
        let value = match task {
            Task::Readmission => {
                let labels: Vec<bool> = bucket.iter().map(|e| e.label == Label::Readmission(true)).collect();
                if !labels.contains(&true) {
                    eprintln!("no positive examples with {length} visits; skipped");
                    report.skipped.push(length);
                    continue;
                }
                metrics::pr_auc(&readmission_scores(&logits), &labels)?
            }
            Task::Diagnosis => {
                let scores: Vec<Vec<f64>> = (0..bucket.len()).map(|b| logits.row(b).to_vec()).collect();
                let labels: Vec<Vec<usize>> = bucket
                    .iter()
                    .map(|e| match &e.label {
                        Label::Diagnosis(y) => y.clone(),
                        Label::Readmission(_) => Vec::new(),
                    })
                    .collect();
                metrics::precision_at_k(&scores, &labels, args.k)?
            }
        };
        report.points.push(LengthPoint {
            visits: length,
            examples: bucket.len(),
            value,
        });
    }
    emit(args.out.as_deref(), &to_json(&report)?)
}

pub fn gradcheck_command(args: &GradcheckArgs, dump: bool) -> Outcome {
    if !(args.tolerance > 0.0) {
        return Err(Failure::Usage("--tolerance must be positive".into()));
    }
    let setups: Vec<GradCheckSetup> = [Task::Readmission, Task::Diagnosis]
        .into_iter()
        .map(|task| GradCheckSetup {
            d: args.d,
            visits: args.visits,
            codes: args.codes,
            seed: args.seed,
            ..GradCheckSetup::tiny(task)
        })
        .collect();
    if dump {
        let view: Vec<_> = setups
            .iter()
            .map(|s| serde_json::json!({ "task": s.task, "d": s.d, "visits": s.visits, "codes": s.codes, "classes": s.classes, "seed": s.seed }))
            .collect();
        return emit(None, &to_json(&view)?);
    }
    let mut worst = 0.0f64;
    for setup in &setups {
        let report = model_gradcheck(setup)?;
        println!(
            "{} head: {} parameters, max relative error {:.3e}",
            setup.task, report.checked, report.max_rel_error
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("max relative error: {worst:.3e}");
    if worst < args.tolerance {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient check failed: {worst:.3e} >= {:.1e}",
            args.tolerance
        )))
    }
}

#[derive(Serialize)]
struct CodeWeight {
    code: String,
    importance: f64,
}

#[derive(Serialize)]
struct VisitWeight {
    index: usize,
    day_offset: u32,
    importance_forward: f64,
    importance_backward: f64,
    codes: Vec<CodeWeight>,
}

#[derive(Serialize)]
struct Explanation {
    patient_id: String,
    visits: Vec<VisitWeight>,
}

pub fn explain_command(args: &ExplainArgs, dump: bool) -> Outcome {
    let (ckpt, mut examples) = load_scored(&args.scored)?;
    if dump {
        return emit(None, &to_json(&serde_json::json!({ "model": ckpt.model, "limit": args.limit }))?);
    }
    if !ckpt.model.use_attention_pooling {
        return Err(Failure::Usage(
            "explain needs a model trained with attention pooling (not --no-attn-pool)".into(),
        ));
    }
    if let Some(limit) = args.limit {
        examples.truncate(limit);
    }
    let mut out = String::new();
    for chunk in examples.chunks(256) {
        let batch = batch_and_pad(chunk, ckpt.model.max_visits, ckpt.model.max_codes)?;
        let records = attention_records(&batch, &ckpt.params, &ckpt.model)?;
        for (b, record) in records.iter().enumerate() {
            let positions = batch.positions(b);
            let visits = (0..record.visit_count)
                .map(|i| VisitWeight {
                    index: i,
                    day_offset: positions[i],
                    importance_forward: record.visit_importance_forward[i],
                    importance_backward: record.visit_importance_backward[i],
                    codes: batch
                        .visit_codes(b, i)
                        .enumerate()
                        .map(|(c, code)| CodeWeight {
                            code: ckpt.vocab.code(code).unwrap_or("?").to_owned(),
                            importance: record.code_importance[i][c],
                        })
                        .collect(),
                })
                .collect();
            let line = serde_json::to_string(&Explanation {
                patient_id: record.patient_id.clone(),
                visits,
            })
            .map_err(musanet::Error::from)?;
            out.push_str(&line);
            out.push('\n');
        }
    }
    emit(args.out.as_deref(), &out)
}
