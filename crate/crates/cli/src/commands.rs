use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{Context, Result};
use serde_json::json;

use stancebench::backends::{Backend, BackendConfig, HttpBackend, ReplayBackend};
use stancebench::budget::{filter_by_budget, ModelProfile, TokenCounter};
use stancebench::corpus::{self, InputFormat};
use stancebench::eval::{self, ConditionTable};
use stancebench::gateway::ExperimentConfig;
use stancebench::jsonl;
use stancebench::postprocess;
use stancebench::promptlab;
use stancebench::runner::{self, RunOptions, RunState, StoreLock, DEFAULT_PARALLELISM};

use crate::args::*;
use crate::UsageError;

static STOP: AtomicBool = AtomicBool::new(false);

fn emit(out: &mut dyn Write, value: serde_json::Value) -> Result<()> {
    writeln!(out, "{value}")?;
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

pub fn split(args: &SplitArgs, out: &mut dyn Write) -> Result<()> {
    let rows = corpus::ingest(&args.corpus, InputFormat::from_path(&args.corpus))?;
    let posts = corpus::filter_unanimous(&rows);
    let split = corpus::stratified_split(&posts, args.seed)?;
    corpus::write_split_manifest(&split, &args.out)?;
    emit(
        out,
        json!({
            "rows": rows.len(),
            "unanimous": posts.len(),
            "train": split.train.len(),
            "test": split.test.len(),
            "train_counts": split.train_counts(),
            "test_counts": split.test_counts(),
            "out": args.out,
        }),
    )
}

pub fn gen_prompts(args: &GenPromptsArgs, out: &mut dyn Write) -> Result<()> {
    let split = corpus::read_split_manifest(&args.split)?;
    let prompts = promptlab::build_prompt_set(&split, args.seed)?;
    promptlab::write_prompt_set(&prompts, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let sidecar = args
        .templates_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("templates.json"));
    promptlab::write_template_sidecar(&sidecar)?;
    emit(
        out,
        json!({ "prompts": prompts.len(), "out": args.out, "templates": sidecar }),
    )
}

fn load_config(path: Option<&Path>) -> Result<Option<ExperimentConfig>> {
    path.map(ExperimentConfig::load).transpose().map_err(Into::into)
}

fn resolve_profile(model: &str, config: Option<&ExperimentConfig>) -> Result<ModelProfile> {
    if let Some(m) = config.and_then(|c| c.model(model)) {
        return Ok(m.profile.clone());
    }
    ModelProfile::builtin(model).ok_or_else(|| {
        let known: Vec<_> = ModelProfile::builtin_names().collect();
        UsageError(format!(
            "unknown model {model:?}; shipped profiles: {}",
            known.join(", ")
        ))
        .into()
    })
}

pub fn budget(args: &BudgetArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let profile = resolve_profile(&args.model, config.as_ref())?;
    let counter = match (&args.tokenizer_url, &config) {
        (Some(url), _) => TokenCounter::Remote {
            url: url.clone(),
            model: args.model.clone(),
        },
        (None, Some(c)) => c.counter.clone(),
        (None, None) => TokenCounter::default(),
    };
    let prompts = promptlab::read_prompt_set(&args.prompts)?;
    let outcome = filter_by_budget(&prompts, &profile, &counter)?;
    promptlab::write_prompt_set(&outcome.kept, &args.out)?;
    jsonl::write_all(&args.exclusions, &outcome.excluded)?;
    emit(
        out,
        json!({
            "model": profile.name,
            "counter": counter.to_string(),
            "kept": outcome.kept.len(),
            "excluded": outcome.excluded.len(),
        }),
    )
}

fn http_config(args: &RunArgs, config: Option<&ExperimentConfig>) -> Result<BackendConfig> {
    let model = args
        .model
        .as_deref()
        .ok_or_else(|| UsageError("run needs --model unless --replay is given".into()))?;
    let mut backend = match config.and_then(|c| c.model(model)) {
        Some(b) => b.clone(),
        None => {
            let profile = resolve_profile(model, config)?;
            let base = args
                .base_url
                .clone()
                .ok_or_else(|| UsageError(format!("no --base-url given and {model} is not in a config")))?;
            BackendConfig::new(profile, base)
        }
    };
    if let Some(url) = &args.base_url {
        backend.base_url = url.clone();
    }
    if let Some(var) = &args.api_key_env {
        backend.api_key_env = Some(var.clone());
    }
    Ok(backend)
}

fn state_json(state: &RunState) -> serde_json::Value {
    json!({
        "completed": state.completed.len(),
        "failed": state.failed.len(),
        "pending": state.pending.len(),
    })
}

pub fn run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let backend: Box<dyn Backend> = match &args.replay {
        Some(fixture) => {
            let model = args.model.clone().unwrap_or_else(|| "replay".into());
            Box::new(ReplayBackend::from_file(model, fixture)?)
        }
        None => Box::new(HttpBackend::new(http_config(args, config.as_ref())?)?),
    };
    let prompts = promptlab::read_prompt_set(&args.prompts)?;
    let _lock = StoreLock::acquire(&args.store)?;
    let options = RunOptions {
        parallelism: args
            .parallelism
            .or(config.as_ref().map(|c| c.parallelism))
            .unwrap_or(DEFAULT_PARALLELISM),
        resume: args.resume,
        retry_failed: args.retry_failed,
        run_id: args.run_id.clone(),
        counter_kind: args.counter_kind.clone(),
    };
    let _ = ctrlc::set_handler(|| STOP.store(true, Ordering::SeqCst));
    let state = runner::run_until(&prompts, backend.as_ref(), &args.store, &options, &STOP)?;
    let mut summary = state_json(&state);
    summary["interrupted"] = json!(STOP.load(Ordering::SeqCst));
    emit(out, summary)
}

pub fn status(args: &StoreArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = runner::RunStore::new(&args.store).manifest()?;
    let mut summary = state_json(&runner::status(&args.store)?);
    summary["run_id"] = json!(manifest.run_id);
    summary["model"] = json!(manifest.model);
    emit(out, summary)
}

pub fn repair(args: &StoreArgs, out: &mut dyn Write) -> Result<()> {
    let _lock = StoreLock::acquire(&args.store)?;
    let removed = runner::repair(&args.store)?;
    emit(out, json!({ "bytes_removed": removed }))
}

pub fn parse(args: &StoreArgs, out: &mut dyn Write) -> Result<()> {
    let _lock = StoreLock::acquire(&args.store)?;
    let summary = postprocess::parse_run(&args.store)?;
    emit(out, serde_json::to_value(summary)?)
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let split = corpus::read_split_manifest(&args.split)?;
    let table = eval::evaluate_run(&args.store, &split, args.support_threshold)?;
    write_or_print(args.out.as_deref(), &table.to_csv(), out)?;
    if let Some(path) = &args.plot {
        fs::write(path, eval::plot_csv(&eval::plot_data(&table)))?;
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_vec_pretty(&table)?)?;
    }
    Ok(())
}

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&args.table).with_context(|| format!("reading {}", args.table.display()))?;
    let mut table = ConditionTable::from_csv(&text)?;
    if let Some(m) = &args.model {
        table.model = m.clone();
    }
    let reference = match &args.reference {
        Some(path) => eval::read_reference(path)?,
        None => eval::reference_icl(),
    };
    let diff = eval::diff_against_reference(&table, &reference);
    write_or_print(args.out.as_deref(), &eval::diff_csv(&diff), out)
}

pub fn import_predictions(args: &ImportArgs, out: &mut dyn Write) -> Result<()> {
    let split = corpus::read_split_manifest(&args.split)?;
    let report = eval::import_predictions(&args.predictions, &split)?;
    let mut text = report.render(eval::IMPORT_DECIMALS);
    if let Some(model) = &args.reference_model {
        let refs = eval::reference_finetune();
        let r = refs
            .iter()
            .find(|r| &r.model == model)
            .ok_or_else(|| UsageError(format!("no fine-tune reference for {model:?}")))?;
        text.push_str(&format!(
            "# reference {}: micro_f1 {:.4}, macro_f1 {:.4}, weighted_f1 {:.4}\n",
            r.model, r.micro_f1, r.macro_f1, r.weighted_f1
        ));
    }
    write_or_print(args.out.as_deref(), &text, out)
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    if !config.store_root.is_dir() {
        anyhow::bail!("store_root {} does not exist", config.store_root.display());
    }
    let secret = match &args.secret_env {
        Some(var) => Some(std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?),
        None => None,
    };
    let state = crate::service::AppState::new(config, secret);
    let app = crate::service::router(state, args.ui_dir.as_deref());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.bind, args.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
