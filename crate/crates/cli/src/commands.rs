use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use walkdir::WalkDir;

use ayn_core::accounting::{carbon, round_to};
use ayn_core::datapipe::{
    clean_case_text, dedup_instructions, instruction_sequences, read_instructions_jsonl, split, token_stream, windows,
    write_shards, ShardManifest,
};
use ayn_core::evalmetrics::{
    judge_parse, judge_request, read_jsonl, score_judgements, score_summaries, JudgeEndpoint, JudgementRecord, Report,
    SummaryRecord,
};
use ayn_core::model::ModelConfig;
use ayn_core::textgen::{generate_streaming, judgement_prompt, summarization_prompt, JudgementParser, SamplerConfig};
use ayn_core::tokenizer::{train_bpe, Vocabulary, EOS};
use ayn_core::trainer::{
    finetune, pretrain, read_metrics, Checkpoint, JsonlSink, MetricsSink, SchedulerKind, StepRecord, TrainOptions,
    TrainPlan, Trainer, TrainerError,
};

use crate::settings::{Invocation, Origin, UsageError};

pub fn dispatch(inv: &mut Invocation) -> Result<()> {
    match inv.name() {
        "tokenizer-train" => tokenizer_train(inv),
        "pack" => pack(inv),
        "pretrain" => pretrain_cmd(inv),
        "finetune" => finetune_cmd(inv),
        "generate" => generate_cmd(inv),
        "evaluate" => evaluate(inv),
        "judge-format" => judge_format(inv),
        "report" => report(inv),
        other => unreachable!("undeclared subcommand {other}"),
    }
}

fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// A file is one document; a directory contributes its `.txt` files in path
/// order. Documents that are empty after cleaning are dropped.
fn read_documents(input: &Path, clean: bool) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if input.is_dir() {
        for entry in WalkDir::new(input).sort_by_file_name() {
            let entry = entry?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "txt") {
                files.push(entry.into_path());
            }
        }
    } else {
        files.push(input.to_path_buf());
    }
    let mut docs = Vec::new();
    for f in files {
        let raw = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let text = if clean { clean_case_text(&raw).text } else { raw };
        if !text.trim().is_empty() {
            docs.push(text);
        }
    }
    if docs.is_empty() {
        bail!("no text found under {}", input.display());
    }
    Ok(docs)
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading vocabulary {}", path.display()))?;
    Ok(Vocabulary::from_text(&text)?)
}

fn tokenizer_train(inv: &mut Invocation) -> Result<()> {
    let docs = read_documents(&inv.path("input")?, inv.flag("clean")?)?;
    let output = inv.path("output")?;
    let vocab = train_bpe(&docs, inv.parse("vocab_size")?)?;
    fs::write(&output, vocab.to_text()).with_context(|| format!("writing {}", output.display()))?;
    inv.write_manifest(&output)?;
    println!(
        "{} tokens, {} merges, {} documents -> {}",
        vocab.len(),
        vocab.merges().len(),
        docs.len(),
        output.display()
    );
    Ok(())
}

fn pack(inv: &mut Invocation) -> Result<()> {
    let docs = read_documents(&inv.path("input")?, inv.flag("clean")?)?;
    let vocab = load_vocab(&inv.path("vocab")?)?;
    let output = inv.path("output")?;
    let seed: u64 = inv.parse("seed")?;
    let (train, val) = split(&docs, inv.parse("train_fraction")?, seed)?;
    let manifest = write_shards(
        &output,
        &token_stream(&train, &vocab),
        &token_stream(&val, &vocab),
        &vocab,
        inv.parse("seq_len")?,
        seed,
    )?;
    inv.write_manifest(&output)?;
    println!(
        "{} train / {} val documents, {} / {} tokens -> {}",
        train.len(),
        val.len(),
        manifest.train.tokens,
        manifest.val.tokens,
        output.display()
    );
    Ok(())
}

/// Preset architecture with per-field overrides, recorded back into `inv`.
fn model_config(inv: &mut Invocation, vocab_size: usize) -> Result<ModelConfig> {
    let mut c = match inv.required("preset")? {
        "tiny" => ModelConfig::tiny(vocab_size),
        "base" => ModelConfig::base(vocab_size),
        other => return Err(UsageError(format!("--preset: unknown preset `{other}`")).into()),
    };
    macro_rules! field {
        ($($f:ident),*) => {$(
            if let Some(v) = inv.get(stringify!($f))? { c.$f = v; }
            inv.set_derived(stringify!($f), c.$f);
        )*};
    }
    field!(dim, n_layers, n_heads, n_kv_groups, ffn_hidden, max_context, rope_theta, shrink_factor);
    c.validate()?;
    Ok(c)
}

fn scheduler(s: &str) -> Result<SchedulerKind> {
    s.trim().parse::<SchedulerKind>().map_err(|e| UsageError(format!("scheduler `{s}`: {e}")).into())
}

/// Forwards records and prints a progress line at each validation.
struct Progress<S> {
    inner: S,
    quiet: bool,
}

impl<S: MetricsSink> MetricsSink for Progress<S> {
    fn on_step(&mut self, r: &StepRecord) -> Result<(), TrainerError> {
        if !self.quiet && (r.val_loss.is_some() || r.step == 1) {
            let val = r.val_loss.map(|v| format!(" val_loss {v:.4}")).unwrap_or_default();
            eprintln!("step {:>6} loss {:.4} lr {:.3e} grad_norm {:.3}{val}", r.step, r.loss, r.lr, r.grad_norm);
        }
        self.inner.on_step(r)
    }

    fn on_checkpoint(&mut self, step: u64, path: &Path) -> Result<(), TrainerError> {
        self.inner.on_checkpoint(step, path)
    }
}

fn pretrain_cmd(inv: &mut Invocation) -> Result<()> {
    let data = inv.path("data")?;
    let vocab = load_vocab(&inv.path("vocab")?)?;
    let shards = ShardManifest::load(&data)?;
    let (train_ids, val_ids) = shards.read_streams(&data, &vocab)?;
    let output = inv.path("output")?;
    let mut trainer = match inv.opt_path("resume") {
        Some(path) => {
            let mut t = Trainer::from_checkpoint(Checkpoint::load(&path)?)?;
            if inv.origin("max_steps") != Some(Origin::Default) {
                t.plan.max_steps = inv.parse("max_steps")?;
                t.plan.validate()?;
            }
            if t.config.vocab_size != vocab.len() {
                bail!("checkpoint vocabulary {} differs from {} in the vocab file", t.config.vocab_size, vocab.len());
            }
            t
        }
        None => {
            let config = model_config(inv, vocab.len())?;
            let max_lr: f64 = inv.parse("max_lr")?;
            let max_steps: u64 = inv.parse("max_steps")?;
            let mut plan = TrainPlan::pretraining(max_lr, inv.parse("warmup_steps")?, max_steps);
            plan.min_lr = inv.get("min_lr")?.unwrap_or(plan.min_lr);
            plan.lr_decay_steps = inv.get("lr_decay_steps")?.unwrap_or(max_steps);
            plan.seq_len = inv.get("seq_len")?.unwrap_or(shards.seq_len);
            plan.scheduler = scheduler(inv.required("scheduler")?)?;
            plan.batch_size = inv.parse("batch_size")?;
            plan.grad_accum_steps = inv.parse("grad_accum_steps")?;
            plan.grad_clip_norm = inv.parse("grad_clip_norm")?;
            plan.weight_decay = inv.parse("weight_decay")?;
            plan.beta1 = inv.parse("beta1")?;
            plan.beta2 = inv.parse("beta2")?;
            plan.seed = inv.parse("seed")?;
            inv.set_derived("min_lr", plan.min_lr);
            inv.set_derived("lr_decay_steps", plan.lr_decay_steps);
            inv.set_derived("seq_len", plan.seq_len);
            Trainer::new(config, plan)?
        }
    };
    let seq_len = trainer.plan.seq_len;
    let train = windows(&train_ids, seq_len)?;
    let val = if val_ids.len() >= 2 { windows(&val_ids, seq_len)? } else { Vec::new() };
    let metrics = inv.opt_path("metrics").unwrap_or_else(|| sidecar(&output, ".metrics.jsonl"));
    let options = TrainOptions {
        peak_flops: inv.parse("peak_flops")?,
        eval_interval: inv.parse("eval_interval")?,
        checkpoint_path: Some(output.clone()),
        checkpoint_every: inv.parse("checkpoint_every")?,
    };
    let mut sink = Progress { inner: JsonlSink::create(&metrics)?, quiet: inv.flag("quiet")? };
    if trainer.is_done() {
        trainer.checkpoint().save(&output)?;
    }
    let state = pretrain(&mut trainer, &train, &val, &options, &mut sink)?;
    inv.write_manifest(&output)?;
    let last = state.loss_window.last().copied().unwrap_or(f64::NAN);
    println!("{} updates, last loss {last:.4} -> {}", state.step, output.display());
    Ok(())
}

fn finetune_cmd(inv: &mut Invocation) -> Result<()> {
    let base = Checkpoint::load(&inv.path("checkpoint")?)?;
    let vocab = load_vocab(&inv.path("vocab")?)?;
    if base.config.vocab_size != vocab.len() {
        bail!("checkpoint vocabulary {} differs from {} in the vocab file", base.config.vocab_size, vocab.len());
    }
    let data = inv.path("data")?;
    let records = read_instructions_jsonl(BufReader::new(
        File::open(&data).with_context(|| format!("opening {}", data.display()))?,
    ))?;
    let (records, dropped) = dedup_instructions(&records);
    let seed: u64 = inv.parse("seed")?;
    let (train_recs, val_recs) = split(&records, inv.parse("train_fraction")?, seed)?;
    let kinds = inv.required("schedulers")?.split(',').map(scheduler).collect::<Result<Vec<_>>>()?;
    let seq_len = inv.get("seq_len")?.unwrap_or(512.min(base.config.max_context));
    inv.set_derived("seq_len", seq_len);
    let mask_prompt = inv.flag("mask_prompt")?;
    let train = instruction_sequences(&train_recs, &vocab, seq_len, mask_prompt)?;
    let val = instruction_sequences(&val_recs, &vocab, seq_len, mask_prompt)?;
    let mut template = TrainPlan::finetune(
        train.len(),
        inv.parse("batch_size")?,
        inv.parse("grad_accum_steps")?,
        inv.parse("epochs")?,
        kinds[0],
    );
    template.max_lr = inv.parse("max_lr")?;
    template.seq_len = seq_len;
    template.seed = seed;
    template.mask_prompt = mask_prompt;
    let output = inv.path("output")?;
    let metrics = inv.opt_path("metrics").unwrap_or_else(|| sidecar(&output, ".metrics.jsonl"));
    let options = TrainOptions { peak_flops: inv.parse("peak_flops")?, ..TrainOptions::default() };
    let mut sink = Progress { inner: JsonlSink::create(&metrics)?, quiet: true };
    let report = finetune(&base.config, &base.weights, &train, &val, &template, &kinds, &options, &mut sink)?;
    let best = report.best().context("no fine-tuning run")?;
    let plan = TrainPlan {
        scheduler: best.scheduler,
        ..TrainPlan::finetune(
            train.len(),
            template.batch_size,
            template.grad_accum_steps,
            template.epochs,
            best.scheduler,
        )
    };
    let plan = TrainPlan { max_lr: template.max_lr, seq_len, seed, mask_prompt, ..plan };
    let mut t = Trainer::with_weights(base.config.clone(), plan, best.weights.clone())?;
    t.state.step = best.steps;
    t.checkpoint().save(&output)?;
    let summary: Vec<_> = report
        .runs
        .iter()
        .map(|r| serde_json::json!({"scheduler": r.scheduler.name(), "val_loss": r.val_loss, "val_perplexity": r.val_perplexity, "steps": r.steps}))
        .collect();
    let summary = serde_json::json!({
        "train_examples": train.len(),
        "val_examples": val.len(),
        "duplicates_removed": dropped,
        "best": best.scheduler.name(),
        "runs": summary,
    });
    fs::write(sidecar(&output, ".finetune.json"), serde_json::to_string_pretty(&summary)?)?;
    inv.write_manifest(&output)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn generate_cmd(inv: &mut Invocation) -> Result<()> {
    let cfg = SamplerConfig {
        top_p: inv.parse("top_p")?,
        temperature: inv.parse("temperature")?,
        max_new_tokens: inv.parse("max_new_tokens")?,
        seed: inv.parse("seed")?,
        stop_ids: vec![EOS],
    };
    let ckpt = Checkpoint::load(&inv.path("checkpoint")?)?;
    let vocab = load_vocab(&inv.path("vocab")?)?;
    if ckpt.config.vocab_size != vocab.len() {
        bail!("checkpoint vocabulary {} differs from {} in the vocab file", ckpt.config.vocab_size, vocab.len());
    }
    let raw = match (inv.str("prompt"), inv.opt_path("prompt_file")) {
        (Some(p), _) => p.to_string(),
        (None, Some(f)) => fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?,
        (None, None) => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let prompt = match inv.required("template")? {
        "none" => raw,
        "judgement" => judgement_prompt(&raw),
        "summarization" => summarization_prompt(&raw),
        other => return Err(UsageError(format!("--template: unknown template `{other}`")).into()),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut write_err = None;
    let generation = generate_streaming(&ckpt.weights, &ckpt.config, &vocab, &prompt, &cfg, |piece| {
        if write_err.is_none() {
            write_err = out.write_all(piece.as_bytes()).and_then(|_| out.flush()).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writeln!(out)?;
    let new_tokens = generation.ids.len();
    eprintln!(
        "{}",
        serde_json::json!({
            "prompt_tokens": generation.prompt_tokens,
            "new_tokens": new_tokens,
            "stopped": generation.ids.last() == Some(&EOS),
            "top_p": cfg.top_p,
            "temperature": cfg.temperature,
            "seed": cfg.seed,
        })
    );
    if let Some(path) = inv.opt_path("output") {
        fs::write(&path, &generation.text)?;
        inv.write_manifest(&path)?;
    }
    Ok(())
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(f))?)
}

fn emit(inv: &Invocation, text: &str) -> Result<()> {
    println!("{text}");
    if let Some(path) = inv.opt_path("output") {
        fs::write(&path, format!("{text}\n"))?;
        inv.write_manifest(&path)?;
    }
    Ok(())
}

fn evaluate(inv: &mut Invocation) -> Result<()> {
    let input = inv.path("input")?;
    let kind: &str = match inv.required("kind")? {
        "auto" => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let first = text.lines().find(|l| !l.trim().is_empty()).context("no records")?;
            let v: serde_json::Value = serde_json::from_str(first)?;
            if v.get("candidate").is_some() {
                "summary"
            } else if v.get("prediction_text").is_some() {
                "judgement"
            } else {
                bail!("cannot tell record kind from the first line; pass --kind")
            }
        }
        "summary" => "summary",
        "judgement" => "judgement",
        other => return Err(UsageError(format!("--kind: unknown kind `{other}`")).into()),
    };
    inv.set_derived("kind", kind);
    let report: Report = if kind == "summary" {
        score_summaries(&read_lines::<SummaryRecord>(&input)?)
    } else {
        score_judgements(&read_lines::<JudgementRecord>(&input)?, &JudgementParser::default())?
    };
    emit(inv, &serde_json::to_string_pretty(&report)?)
}

#[derive(Deserialize)]
struct JudgeItem {
    #[serde(default)]
    id: String,
    instruction: String,
    #[serde(default)]
    input: Option<String>,
    response: String,
}

#[derive(Deserialize)]
struct JudgeReplyItem {
    #[serde(default)]
    id: String,
    reply: String,
}

fn judge_format(inv: &mut Invocation) -> Result<()> {
    let input = inv.path("input")?;
    let mut lines = Vec::new();
    if inv.flag("parse")? {
        let mut sums = [0.0; 4];
        let items = read_lines::<JudgeReplyItem>(&input)?;
        for item in &items {
            let s = judge_parse(&item.reply).with_context(|| format!("reply {}", item.id))?;
            for (acc, v) in sums.iter_mut().zip([s.clarity, s.relevance, s.completeness, s.legal_reasoning]) {
                *acc += v;
            }
            let mut v = serde_json::to_value(s)?;
            v["id"] = item.id.clone().into();
            lines.push(v.to_string());
        }
        let n = items.len().max(1) as f64;
        eprintln!(
            "{}",
            serde_json::json!({
                "replies": items.len(),
                "clarity": sums[0] / n,
                "relevance": sums[1] / n,
                "completeness": sums[2] / n,
                "legal_reasoning": sums[3] / n,
            })
        );
    } else {
        let endpoint = JudgeEndpoint {
            url: inv.str("url").unwrap_or_default().to_string(),
            token_env: inv.required("token_env")?.to_string(),
            model: inv.str("model").map(String::from),
        };
        for item in read_lines::<JudgeItem>(&input)? {
            let prompt = judge_request(&item.instruction, item.input.as_deref(), &item.response)
                .with_context(|| format!("record {}", item.id))?;
            let mut body: serde_json::Value = serde_json::from_str(&endpoint.request_body(&prompt))?;
            if !item.id.is_empty() {
                body["id"] = item.id.into();
            }
            lines.push(body.to_string());
        }
    }
    let text = lines.join("\n");
    match inv.opt_path("output") {
        Some(path) => {
            fs::write(&path, format!("{text}\n"))?;
            inv.write_manifest(&path)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn report(inv: &mut Invocation) -> Result<()> {
    let records = read_metrics(&inv.path("metrics")?)?;
    let last = records.last().context("metrics stream is empty")?;
    let n = records.len() as f64;
    let tokens: usize = records.iter().map(|r| r.tokens).sum();
    let mean = |f: fn(&StepRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let gpus: f64 = inv.parse("gpus")?;
    let gpu_hours = match inv.get::<f64>("gpu_hours")? {
        Some(h) => h,
        None => last.elapsed_sec / 3600.0 * gpus,
    };
    let c = carbon(gpu_hours, inv.parse("power_watts")?, inv.parse("pue")?, inv.parse("carbon_intensity")?)?;
    let val = records.iter().rev().find_map(|r| r.val_perplexity);
    let mut row: BTreeMap<&str, String> = BTreeMap::new();
    row.insert("steps", last.step.to_string());
    row.insert("tokens", tokens.to_string());
    row.insert("loss", format!("{:.4}", last.loss));
    row.insert("ppl", format!("{:.4}", last.perplexity));
    row.insert("val_ppl", val.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()));
    row.insert("tok/s", format!("{:.1}", mean(|r| r.tokens_per_sec)));
    row.insert("MFU", format!("{:.2}", mean(|r| r.mfu)));
    row.insert("gpu_h", format!("{gpu_hours:.4}"));
    row.insert("kWh", format!("{:.4}", c.kwh));
    row.insert("tCO2eq", format!("{:.4}", round_to(c.tco2eq, 4)));
    let columns = ["steps", "tokens", "loss", "ppl", "val_ppl", "tok/s", "MFU", "gpu_h", "kWh", "tCO2eq"];
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(row[c].len())).collect();
    let line =
        |cells: Vec<&str>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
    let text = format!("{}\n{}", line(columns.to_vec()), line(columns.iter().map(|c| row[c].as_str()).collect()));
    emit(inv, &text)
}
