use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use mtree_core::codec::{self, build_vocab, vectorize, CodeVocab};
use mtree_core::dataset::synth::{generate, to_json_lines, SynthConfig};
use mtree_core::dataset::{
    fold_manifest, load_corpus, low_resource_manifest, make_supervision, supervise_problem,
    CodesRecord, CorpusFormat, Dropped, LoadOptions, LoadedCorpus, Problem,
};
use mtree_core::mtree::eval_mtree;
use mtree_core::{canonical_mtree, PipelineError};
use mtree_model::{
    load_checkpoint, predict_answer, save_checkpoint, Checkpoint, ModelConfig, TrainConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::FileConfig;
use crate::{
    CanonicalizeArgs, CorpusArgs, DecodeArgs, EncodeArgs, PredictArgs, PreprocessArgs, StatsArgs,
    SynthArgs, TrainArgs,
};

/// Failure classes mapped to exit codes 2 (bad input) and 1 (runtime).
pub enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn input<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Input(e.into()))
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(e.into()))
}

/// The error and its causes, skipping causes the message already quotes.
fn render(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let s = cause.to_string();
        if !out.contains(&s) {
            out.push_str(": ");
            out.push_str(&s);
        }
    }
    out
}

pub fn report(f: Failure) -> ExitCode {
    let (e, code) = match f {
        Failure::Input(e) => (e, 2),
        Failure::Runtime(e) => (e, 1),
    };
    log::error!("{}", render(&e));
    ExitCode::from(code)
}

fn echo_config(command: &str, resolved: &impl Serialize) {
    match serde_json::to_string(resolved) {
        Ok(s) => log::info!("{command} config: {s}"),
        Err(e) => log::warn!("could not serialize config: {e}"),
    }
}

/// Writes to `path`, or stdout when absent.
fn writer(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f =
                runtime(fs::File::create(p).with_context(|| format!("creating {}", p.display())))?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::BufWriter::new(io::stdout()))),
    }
}

fn write_line(out: &mut dyn Write, v: &impl Serialize) -> Result<(), Failure> {
    let s = runtime(serde_json::to_string(v))?;
    runtime(writeln!(out, "{s}"))
}

#[derive(Debug, Clone, Serialize)]
struct ResolvedCorpus {
    input: PathBuf,
    format: String,
    pi: f64,
}

fn resolve_corpus(
    args: &CorpusArgs,
    file: &FileConfig,
) -> Result<(ResolvedCorpus, LoadOptions), Failure> {
    let name = args
        .format
        .clone()
        .or_else(|| file.format.clone())
        .unwrap_or_else(|| "synthetic-json".to_string());
    let format: CorpusFormat = input(name.parse::<CorpusFormat>().map_err(|e| anyhow!(e)))?;
    let mut options = LoadOptions::new(format);
    if let Some(pi) = args.pi.or(file.pi) {
        options.pi = pi;
    }
    let resolved = ResolvedCorpus {
        input: args.input.clone(),
        format: format.to_string(),
        pi: options.pi,
    };
    Ok((resolved, options))
}

fn load(path: &Path, options: &LoadOptions) -> Result<LoadedCorpus, Failure> {
    let corpus = input(load_corpus(path, options))?;
    if !corpus.dropped.is_empty() {
        log::warn!(
            "{}: {} records could not be loaded",
            path.display(),
            corpus.dropped.len()
        );
    }
    Ok(corpus)
}

pub fn canonicalize(args: &CanonicalizeArgs) -> CmdResult {
    echo_config("canonicalize", &json!({ "expression": args.expression }));
    let fail = |kind: &str, message: String| {
        let err = json!({ "error": kind, "message": message, "input": args.expression });
        eprintln!("{err}");
        Err(Failure::Input(anyhow!("{kind}: {message}")))
    };
    let tree = match canonical_mtree(&args.expression) {
        Ok(t) => t,
        Err(PipelineError::Parse(e)) => return fail("ParseError", e.to_string()),
        Err(PipelineError::Normalize(e)) => return fail("NormalizeError", e.to_string()),
    };
    let value = match eval_mtree(&tree) {
        Ok(v) if v.is_finite() => v,
        Ok(v) => return fail("EvalError", format!("value {v} is not finite")),
        Err(e) => return fail("EvalError", e.to_string()),
    };
    let mut out = writer(None)?;
    write_line(
        &mut out,
        &json!({ "mtree": tree.to_string(), "value": value }),
    )?;
    runtime(out.flush())
}

pub fn encode(args: &EncodeArgs, file: &FileConfig) -> CmdResult {
    let (resolved, options) = resolve_corpus(&args.corpus, file)?;
    let strict = args.strict || file.strict.unwrap_or(false);
    echo_config(
        "encode",
        &json!({ "corpus": resolved, "output": args.output, "strict": strict }),
    );
    let corpus = load(&args.corpus.input, &options)?;
    let results: Vec<Result<_, Dropped>> = corpus.problems.iter().map(supervise_problem).collect();
    let vocab = build_vocab(results.iter().flatten().map(|ex| ex.codes.as_slice()));
    let mut out = writer(args.output.as_deref())?;
    let mut failed = corpus.dropped.len();
    for r in results {
        match r {
            Ok(mut ex) => {
                ex.vectors = vectorize(&ex.codes, &vocab).ok();
                write_line(&mut out, &CodesRecord::from_example(&ex, &vocab))?;
            }
            Err(d) => {
                failed += 1;
                write_line(&mut out, &json!({ "id": d.id, "error": d.reason }))?;
            }
        }
    }
    for d in &corpus.dropped {
        write_line(&mut out, &json!({ "id": d.id, "error": d.reason }))?;
    }
    runtime(out.flush())?;
    log::info!(
        "encoded {} records, {failed} failed",
        corpus.problems.len() + corpus.dropped.len() - failed
    );
    if strict && failed > 0 {
        return Err(Failure::Input(anyhow!("{failed} records failed")));
    }
    Ok(())
}

fn decode_line(line: &str) -> Value {
    let v: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({ "id": null, "error": format!("JsonError: {e}") }),
    };
    if let Some(err) = v.get("error") {
        return json!({ "id": v.get("id"), "error": err });
    }
    let record: CodesRecord = match serde_json::from_value(v.clone()) {
        Ok(r) => r,
        Err(e) => return json!({ "id": v.get("id"), "error": format!("SchemaError: {e}") }),
    };
    let sets = match record.code_sets() {
        Ok(s) => s,
        Err(e) => return json!({ "id": record.id, "error": format!("CodeSyntaxError: {e}") }),
    };
    let tree = match codec::decode(&sets, &record.literals()) {
        Ok(t) => t,
        Err(e) => return json!({ "id": record.id, "error": e.kind(), "message": e.to_string() }),
    };
    match eval_mtree(&tree) {
        Ok(a) => json!({ "id": record.id, "answer": a }),
        Err(e) => json!({ "id": record.id, "error": "EvalError", "message": e.to_string() }),
    }
}

pub fn decode(args: &DecodeArgs, file: &FileConfig) -> CmdResult {
    let strict = args.strict || file.strict.unwrap_or(false);
    echo_config(
        "decode",
        &json!({ "input": args.input, "output": args.output, "strict": strict }),
    );
    let text = input(
        fs::read_to_string(&args.input)
            .with_context(|| format!("reading {}", args.input.display())),
    )?;
    let mut out = writer(args.output.as_deref())?;
    let mut failed = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v = decode_line(line);
        failed += usize::from(v.get("error").is_some());
        write_line(&mut out, &v)?;
    }
    runtime(out.flush())?;
    if strict && failed > 0 {
        return Err(Failure::Input(anyhow!("{failed} records failed")));
    }
    Ok(())
}

#[derive(Serialize)]
struct PreparedRecord<'a> {
    id: &'a str,
    tokens: &'a [String],
    values: Vec<f64>,
    positions: &'a [usize],
    answer: f64,
    codes: Vec<Vec<String>>,
    vectors: &'a Option<Vec<Vec<u32>>>,
}

fn write_examples(path: &Path, examples: &[mtree_core::dataset::Example]) -> Result<(), Failure> {
    let mut out = writer(Some(path))?;
    for ex in examples {
        let p = &ex.problem;
        write_line(
            &mut out,
            &PreparedRecord {
                id: &p.id,
                tokens: &p.tokens,
                values: p.values.iter().map(|v| v.value()).collect(),
                positions: &p.positions,
                answer: p.answer,
                codes: ex.code_strings(),
                vectors: &ex.vectors,
            },
        )?;
    }
    runtime(out.flush())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let s = runtime(serde_json::to_string_pretty(v))?;
    runtime(fs::write(path, s + "\n").with_context(|| format!("writing {}", path.display())))
}

fn load_split(
    args: &CorpusArgs,
    test: Option<&Path>,
    file: &FileConfig,
) -> Result<(ResolvedCorpus, LoadedCorpus, Option<LoadedCorpus>), Failure> {
    let (resolved, options) = resolve_corpus(args, file)?;
    let train = load(&args.input, &options)?;
    let test = test.map(|p| load(p, &options)).transpose()?;
    Ok((resolved, train, test))
}

fn all_dropped(
    sup_dropped: &[Dropped],
    train: &LoadedCorpus,
    test: &Option<LoadedCorpus>,
) -> Vec<Dropped> {
    let mut v: Vec<Dropped> = train.dropped.clone();
    if let Some(t) = test {
        v.extend(t.dropped.iter().cloned());
    }
    v.extend(sup_dropped.iter().cloned());
    v
}

pub fn preprocess(args: &PreprocessArgs, file: &FileConfig) -> CmdResult {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let (resolved, train, test) = load_split(&args.corpus, args.test_input.as_deref(), file)?;
    echo_config(
        "preprocess",
        &json!({
            "corpus": resolved, "test_input": args.test_input, "output": args.output,
            "folds": args.folds, "low_resource": args.low_resource, "seed": seed,
        }),
    );
    let empty = Vec::new();
    let test_problems = test.as_ref().map_or(&empty, |t| &t.problems);
    let sup = make_supervision(&train.problems, test_problems);
    runtime(
        fs::create_dir_all(&args.output)
            .with_context(|| format!("creating {}", args.output.display())),
    )?;
    write_examples(&args.output.join("train.jsonl"), &sup.train)?;
    write_examples(&args.output.join("test.jsonl"), &sup.test)?;
    write_json(&args.output.join("vocab.json"), &sup.vocab)?;
    let dropped = all_dropped(&sup.stats.dropped, &train, &test);
    let mut out = writer(Some(&args.output.join("dropped.jsonl")))?;
    for d in &dropped {
        write_line(&mut out, d)?;
    }
    runtime(out.flush())?;
    write_json(
        &args.output.join("stats.json"),
        &stats_json(&sup.stats, &sup.vocab, dropped.len()),
    )?;
    let ids: Vec<String> = sup.train.iter().map(|e| e.problem.id.clone()).collect();
    if let Some(k) = args.folds {
        if k < 2 {
            return Err(Failure::Input(anyhow!("--folds needs at least 2 folds")));
        }
        write_json(
            &args.output.join("folds.json"),
            &fold_manifest(&ids, k, seed),
        )?;
    }
    if let Some(f) = args.low_resource {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Failure::Input(anyhow!("--low-resource must be in (0, 1]")));
        }
        write_json(
            &args.output.join("low_resource.json"),
            &low_resource_manifest(&ids, f, seed),
        )?;
    }
    Ok(())
}

fn stats_json(
    stats: &mtree_core::dataset::SupervisionStats,
    vocab: &CodeVocab,
    dropped: usize,
) -> Value {
    json!({
        "vocab_size": vocab.len(),
        "coverage_pct": stats.coverage_pct,
        "train_size": stats.train_size,
        "test_size": stats.test_size,
        "dropped": dropped,
        "operand_histogram": stats.operand_histogram,
        "binary_tree": stats.binary_tree,
    })
}

pub fn stats(args: &StatsArgs, file: &FileConfig) -> CmdResult {
    let (resolved, train, test) = load_split(&args.corpus, args.test_input.as_deref(), file)?;
    echo_config(
        "stats",
        &json!({ "corpus": resolved, "test_input": args.test_input }),
    );
    let empty = Vec::new();
    let sup = make_supervision(
        &train.problems,
        test.as_ref().map_or(&empty, |t| &t.problems),
    );
    let dropped = all_dropped(&sup.stats.dropped, &train, &test);
    for d in &dropped {
        log::info!("dropped {}: {}", d.id, d.reason);
    }
    let mut out = writer(args.output.as_deref())?;
    write_line(&mut out, &stats_json(&sup.stats, &sup.vocab, dropped.len()))?;
    runtime(out.flush())
}

#[derive(Serialize)]
struct ResolvedTrain {
    corpus: ResolvedCorpus,
    dev_input: Option<PathBuf>,
    output: PathBuf,
    model: ModelConfig,
    training: TrainConfig,
}

fn resolve_train(
    args: &TrainArgs,
    file: &FileConfig,
    corpus: ResolvedCorpus,
) -> Result<ResolvedTrain, Failure> {
    let mut model = file.model.clone().unwrap_or_default();
    let mut training = file.training.clone().unwrap_or_default();
    if let Some(s) = args.seed.or(file.seed) {
        training.seed = s;
    }
    if let Some(v) = args.epochs {
        training.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        training.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        training.batch_size = v;
    }
    if let Some(v) = args.clip_norm {
        training.clip_norm = (v > 0.0).then_some(v);
    }
    if let Some(v) = &args.optimizer {
        training.optimizer = input(v.parse().map_err(|e: String| anyhow!(e)))?;
    }
    training.parallel |= args.parallel;
    training.record_time |= args.record_time;
    if let Some(v) = args.embedding_dim {
        model.embedding_dim = v;
    }
    if let Some(v) = args.hidden_dim {
        model.hidden_dim = v;
    }
    if args.attention_dim.is_some() {
        model.attention_dim = args.attention_dim;
    }
    if let Some(v) = &args.generator_dims {
        let &[a, b] = v.as_slice() else {
            return Err(Failure::Input(anyhow!(
                "--generator-dims takes exactly two sizes, got {}",
                v.len()
            )));
        };
        model.generator_dims = [a, b];
    }
    if let Some(v) = &args.activation {
        model.activation = input(v.parse().map_err(|e: String| anyhow!(e)))?;
    }
    if let Some(v) = args.max_words {
        model.max_words = v;
    }
    let dims = [
        model.embedding_dim,
        model.hidden_dim,
        model.attention_width(),
        model.generator_dims[0],
        model.generator_dims[1],
    ];
    if dims.contains(&0) {
        return Err(Failure::Input(anyhow!("model dimensions must be positive")));
    }
    Ok(ResolvedTrain {
        corpus,
        dev_input: args.dev_input.clone(),
        output: args.output.clone(),
        model,
        training,
    })
}

pub fn train(args: &TrainArgs, file: &FileConfig) -> CmdResult {
    let (resolved_corpus, train_corpus, dev_corpus) =
        load_split(&args.corpus, args.dev_input.as_deref(), file)?;
    let resolved = resolve_train(args, file, resolved_corpus)?;
    echo_config("train", &resolved);
    let empty = Vec::new();
    let sup = make_supervision(
        &train_corpus.problems,
        dev_corpus.as_ref().map_or(&empty, |t| &t.problems),
    );
    if !sup.stats.dropped.is_empty() {
        log::warn!(
            "{} problems dropped by the pipeline",
            sup.stats.dropped.len()
        );
    }
    let dev: Vec<Problem> = sup.test.iter().map(|e| e.problem.clone()).collect();
    let outcome = mtree_model::train(
        &sup.train,
        &dev,
        sup.vocab.clone(),
        resolved.model.clone(),
        &resolved.training,
    )
    .map_err(|e| match e {
        mtree_model::TrainError::EmptyCorpus | mtree_model::TrainError::InvalidConfig(_) => {
            Failure::Input(e.into())
        }
        other => Failure::Runtime(other.into()),
    })?;
    let mut out = writer(args.log_output.as_deref())?;
    for entry in &outcome.log {
        write_line(&mut out, entry)?;
    }
    runtime(out.flush())?;
    let ck = Checkpoint::from_model(&outcome.model, Some(resolved.training.clone()));
    runtime(save_checkpoint(&args.output, &ck))
}

pub fn predict(args: &PredictArgs, file: &FileConfig) -> CmdResult {
    let (resolved, options) = resolve_corpus(&args.corpus, file)?;
    echo_config(
        "predict",
        &json!({ "corpus": resolved, "checkpoint": args.checkpoint, "output": args.output }),
    );
    let model = input(load_checkpoint(&args.checkpoint))?.into_model();
    let corpus = load(&args.corpus.input, &options)?;
    let mut out = writer(args.output.as_deref())?;
    let mut correct = 0;
    for p in &corpus.problems {
        let pred = predict_answer(&model, p);
        let ok = pred.is_correct(p.answer);
        correct += usize::from(ok);
        write_line(
            &mut out,
            &json!({
                "id": p.id, "answer": pred.answer, "gold": p.answer, "correct": ok,
                "codes": pred.codes, "failure": pred.failure,
            }),
        )?;
    }
    runtime(out.flush())?;
    let total = corpus.problems.len() + corpus.dropped.len();
    let accuracy = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    let summary = json!({ "accuracy": accuracy, "correct": correct, "total": total });
    log::info!("{summary}");
    if args.output.is_some() {
        println!("{summary}");
    }
    Ok(())
}

pub fn synth(args: &SynthArgs, file: &FileConfig) -> CmdResult {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    echo_config(
        "synth",
        &json!({ "count": args.count, "seed": seed, "output": args.output }),
    );
    let records = generate(args.count, seed, &SynthConfig::default());
    let mut out = writer(args.output.as_deref())?;
    runtime(out.write_all(to_json_lines(&records).as_bytes()))?;
    runtime(out.flush())
}
