//! Declared options, `key = value` config files and their precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, Command};

/// Bad arguments or settings; reported with exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Value,
    Bool,
}

#[derive(Debug)]
pub struct Opt {
    pub key: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
    pub kind: Kind,
}

const fn val(key: &'static str, default: Option<&'static str>, help: &'static str) -> Opt {
    Opt { key, default, help, kind: Kind::Value }
}

const fn flag(key: &'static str, default: &'static str, help: &'static str) -> Opt {
    Opt { key, default: Some(default), help, kind: Kind::Bool }
}

#[derive(Debug)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub opts: &'static [Opt],
}

const MODEL_OPTS: [Opt; 9] = [
    val("preset", Some("tiny"), "Base architecture: tiny or base"),
    val("dim", None, "Model width [preset]"),
    val("n_layers", None, "Decoder layers [preset]"),
    val("n_heads", None, "Query heads [preset]"),
    val("n_kv_groups", None, "Key/value heads [preset]"),
    val("ffn_hidden", None, "Feed-forward hidden width [preset]"),
    val("max_context", None, "Longest sequence the model accepts [preset]"),
    val("rope_theta", None, "Rotary base [preset]"),
    val("shrink_factor", None, "Position divisor [preset]"),
];

pub static COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "tokenizer-train",
        about: "Train a byte-level BPE vocabulary on text files",
        opts: &[
            val("input", None, "Text file, or directory of .txt files, one document each"),
            val("output", Some("vocab.txt"), "Vocabulary file to write"),
            val("vocab_size", Some("512"), "Target vocabulary size including byte and special tokens"),
            flag("clean", "true", "Strip header blocks and collapse whitespace first"),
        ],
    },
    CommandSpec {
        name: "pack",
        about: "Tokenize documents into train/validation shards",
        opts: &[
            val("input", None, "Text file, or directory of .txt files"),
            val("vocab", Some("vocab.txt"), "Vocabulary file"),
            val("output", Some("packed"), "Shard directory to write"),
            val("seq_len", Some("256"), "Training window length recorded in the shard manifest"),
            val("train_fraction", Some("0.95"), "Share of documents kept for training"),
            val("seed", Some("0"), "Split seed"),
            flag("clean", "true", "Strip header blocks and collapse whitespace first"),
        ],
    },
    CommandSpec {
        name: "pretrain",
        about: "Train a decoder from scratch on packed shards",
        opts: &{
            const PLAN: [Opt; 23] = [
                val("data", Some("packed"), "Shard directory"),
                val("vocab", Some("vocab.txt"), "Vocabulary file"),
                val("output", Some("model.ayn"), "Checkpoint to write"),
                val("metrics", None, "Metrics stream [<output>.metrics.jsonl]"),
                val("resume", None, "Continue from this checkpoint instead of fresh weights"),
                val("max_lr", Some("0.003"), "Peak learning rate"),
                val("min_lr", None, "Final learning rate [max_lr / 10]"),
                val("warmup_steps", Some("10"), "Linear warmup updates"),
                val("max_steps", Some("100"), "Optimizer updates"),
                val("lr_decay_steps", None, "Update where decay ends [max_steps]"),
                val("scheduler", Some("cosine"), "cosine, linear or constant"),
                val("batch_size", Some("4"), "Sequences per micro-batch"),
                val("grad_accum_steps", Some("1"), "Micro-batches per update"),
                val("seq_len", None, "Window length [shard manifest]"),
                val("grad_clip_norm", Some("1.0"), "Global gradient norm limit"),
                val("weight_decay", Some("0.1"), "Decoupled weight decay on matrices"),
                val("beta1", Some("0.9"), "AdamW first-moment decay"),
                val("beta2", Some("0.95"), "AdamW second-moment decay"),
                val("seed", Some("0"), "Initialization and data-order seed"),
                val("eval_interval", Some("10"), "Validate every N updates; 0 disables"),
                val("checkpoint_every", Some("0"), "Save every N updates; 0 saves at the end"),
                val("peak_flops", Some("1e12"), "Hardware peak for MFU"),
                flag("quiet", "false", "Suppress progress lines"),
            ];
            concat_opts::<32>(&PLAN, &MODEL_OPTS)
        },
    },
    CommandSpec {
        name: "finetune",
        about: "Instruction-tune a checkpoint once per learning-rate schedule and keep the best",
        opts: &[
            val("checkpoint", Some("model.ayn"), "Base checkpoint"),
            val("vocab", Some("vocab.txt"), "Vocabulary file"),
            val("data", None, "Instruction JSON lines {instruction, input, output}"),
            val("output", Some("finetuned.ayn"), "Checkpoint of the best run"),
            val("metrics", None, "Metrics stream [<output>.metrics.jsonl]"),
            val("schedulers", Some("cosine,constant,linear"), "Comma-separated schedules to try"),
            val("epochs", Some("3"), "Passes over the training examples"),
            val("batch_size", Some("4"), "Sequences per micro-batch"),
            val("grad_accum_steps", Some("1"), "Micro-batches per update"),
            val("seq_len", None, "Longest example in tokens [min(512, model context)]"),
            val("max_lr", Some("2e-5"), "Peak learning rate"),
            val("train_fraction", Some("0.9"), "Share of examples kept for training"),
            val("seed", Some("0"), "Split and data-order seed"),
            flag("mask_prompt", "false", "Train only on response tokens"),
            val("peak_flops", Some("1e12"), "Hardware peak for MFU"),
        ],
    },
    CommandSpec {
        name: "generate",
        about: "Sample a continuation and stream it to stdout",
        opts: &[
            val("checkpoint", Some("model.ayn"), "Checkpoint to load"),
            val("vocab", Some("vocab.txt"), "Vocabulary file"),
            val("prompt", None, "Prompt text"),
            val("prompt_file", None, "Read the prompt from this file [stdin if no prompt given]"),
            val("template", Some("none"), "Wrap the prompt: none, judgement or summarization"),
            val("top_p", Some("0.9"), "Nucleus mass"),
            val("temperature", Some("1.0"), "Softmax temperature"),
            val("max_new_tokens", Some("64"), "Tokens to generate at most"),
            val("seed", Some("0"), "Sampling seed"),
            val("output", None, "Also write the text here, with a manifest beside it"),
        ],
    },
    CommandSpec {
        name: "evaluate",
        about: "Score summaries (ROUGE, BLEU, METEOR) or judgements (accuracy, macro-F1)",
        opts: &[
            val("input", None, "JSON lines of {candidate, reference} or {prediction_text, truth_label}"),
            val("kind", Some("auto"), "summary, judgement or auto"),
            val("output", None, "Also write the report here"),
        ],
    },
    CommandSpec {
        name: "judge-format",
        about: "Build judge request bodies, or parse judge replies into scores",
        opts: &[
            val("input", None, "JSON lines of {instruction, input, response}, or of replies with --parse"),
            flag("parse", "false", "Treat the input as judge replies {id, reply}"),
            val("url", Some(""), "Judge endpoint URL recorded in the manifest"),
            val("token_env", Some("AYN_JUDGE_TOKEN"), "Environment variable holding the bearer token"),
            val("model", None, "Judge model name placed in request bodies"),
            val("output", None, "Write lines here instead of stdout"),
        ],
    },
    CommandSpec {
        name: "report",
        about: "Summarize a metrics stream with throughput, MFU and carbon columns",
        opts: &[
            val("metrics", None, "Metrics JSON lines from pretrain or finetune"),
            val("gpu_hours", None, "Device hours [last elapsed time x gpus]"),
            val("gpus", Some("1"), "Devices used"),
            val("power_watts", Some("250"), "Per-device power draw"),
            val("pue", Some("1.1"), "Datacenter power usage effectiveness"),
            val("carbon_intensity", Some("0.385"), "kg CO2eq per kWh"),
            val("output", None, "Also write the report here"),
        ],
    },
];

const fn concat_opts<const N: usize>(a: &[Opt], b: &[Opt]) -> [Opt; N] {
    assert!(a.len() + b.len() == N);
    let mut out = [const { val("", None, "") }; N];
    let mut i = 0;
    while i < a.len() {
        out[i] = Opt { key: a[i].key, default: a[i].default, help: a[i].help, kind: a[i].kind };
        i += 1;
    }
    let mut j = 0;
    while j < b.len() {
        out[i + j] = Opt { key: b[j].key, default: b[j].default, help: b[j].help, kind: b[j].kind };
        j += 1;
    }
    out
}

pub fn find(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

fn long(key: &str) -> String {
    key.replace('_', "-")
}

pub fn cli() -> Command {
    let mut root = Command::new("ayn")
        .about("Train, sample and evaluate small decoder-only language models")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help("Every flag can also be given as `key = value` in a --config file; flags win over the file, the file over defaults.");
    for spec in COMMANDS {
        let mut cmd = Command::new(spec.name)
            .about(spec.about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value settings file"));
        for opt in spec.opts {
            let help = match opt.default {
                Some(d) if !d.is_empty() => format!("{} [default: {d}]", opt.help),
                _ => opt.help.to_string(),
            };
            let arg = Arg::new(opt.key).long(long(opt.key)).help(help);
            cmd = cmd.arg(match opt.kind {
                Kind::Value => arg.value_name("VALUE").action(ArgAction::Set),
                Kind::Bool => arg.value_name("BOOL").num_args(0..=1).default_missing_value("true").require_equals(true),
            });
        }
        root = root.subcommand(cmd);
    }
    root
}

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a value in double quotes is a JSON string.
pub fn parse_config(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('-', "_");
        let v = v.trim();
        let value = if v.starts_with('"') {
            serde_json::from_str::<String>(v).map_err(|e| usage(format!("config line {}: {e}", n + 1)))?
        } else {
            v.to_string()
        };
        if key.is_empty() {
            return Err(usage(format!("config line {}: empty key", n + 1)));
        }
        out.insert(key, value);
    }
    Ok(out)
}

fn quote(v: &str) -> String {
    let plain = !v.is_empty() && v.trim() == v && !v.starts_with('"') && !v.contains(['\n', '\r']);
    if plain {
        v.to_string()
    } else {
        serde_json::to_string(v).expect("strings serialize")
    }
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Flag,
    File,
    Default,
    Derived,
}

/// A subcommand with every setting resolved.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub spec: &'static CommandSpec,
    pub config_path: Option<PathBuf>,
    values: BTreeMap<String, (String, Origin)>,
}

/// Parses `argv` (program name first) and applies flags > file > defaults.
pub fn resolve<I, T>(argv: I) -> Result<Invocation, Resolution>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(argv).map_err(Resolution::Clap)?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let spec = find(name).expect("declared subcommand");
    let config_path = sub.get_one::<String>("config").map(PathBuf::from);
    let file = match &config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Resolution::Error(usage(format!("cannot read config {}: {e}", p.display()))))?;
            parse_config(&text).map_err(Resolution::Error)?
        }
        None => BTreeMap::new(),
    };
    let mut values = BTreeMap::new();
    for (k, v) in &file {
        if k == "command" {
            if v != spec.name {
                return Err(Resolution::Error(usage(format!("config is for `{v}`, not `{}`", spec.name))));
            }
            continue;
        }
        if !spec.opts.iter().any(|o| o.key == k) {
            return Err(Resolution::Error(usage(format!("unknown setting `{k}` for `{}`", spec.name))));
        }
    }
    for opt in spec.opts {
        let from_flag = match sub.value_source(opt.key) {
            Some(ValueSource::CommandLine) => sub.get_one::<String>(opt.key).cloned(),
            _ => None,
        };
        let resolved = if let Some(v) = from_flag {
            Some((v, Origin::Flag))
        } else if let Some(v) = file.get(opt.key) {
            Some((v.clone(), Origin::File))
        } else {
            opt.default.map(|d| (d.to_string(), Origin::Default))
        };
        if let Some((v, origin)) = resolved {
            if opt.kind == Kind::Bool {
                parse_bool(opt.key, &v).map_err(Resolution::Error)?;
            }
            values.insert(opt.key.to_string(), (v, origin));
        }
    }
    Ok(Invocation { spec, config_path, values })
}

/// Why [`resolve`] did not produce an invocation.
#[derive(Debug)]
pub enum Resolution {
    Clap(clap::Error),
    Error(anyhow::Error),
}

fn parse_bool(key: &str, v: &str) -> anyhow::Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(usage(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        self.spec.name
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str()).filter(|v| !v.is_empty())
    }

    pub fn origin(&self, key: &str) -> Option<Origin> {
        self.values.get(key).map(|(_, o)| *o)
    }

    pub fn required(&self, key: &str) -> anyhow::Result<&str> {
        self.str(key).ok_or_else(|| usage(format!("`{}` needs --{}", self.spec.name, long(key))))
    }

    pub fn path(&self, key: &str) -> anyhow::Result<PathBuf> {
        self.required(key).map(PathBuf::from)
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(PathBuf::from)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.str(key)
            .map(|v| v.parse::<T>().map_err(|e| usage(format!("--{}: cannot parse `{v}`: {e}", long(key)))))
            .transpose()
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| usage(format!("`{}` needs --{}", self.spec.name, long(key))))
    }

    pub fn flag(&self, key: &str) -> anyhow::Result<bool> {
        match self.str(key) {
            Some(v) => parse_bool(key, v),
            None => Ok(false),
        }
    }

    /// Records a value computed from other settings so the manifest is complete.
    pub fn set_derived(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), (value.to_string(), Origin::Derived));
    }

    /// The settings as a config file that reproduces this run.
    pub fn manifest_text(&self) -> String {
        let mut s = format!("# ayn {} run manifest\ncommand = {}\n", env!("CARGO_PKG_VERSION"), self.spec.name);
        for (k, (v, _)) in &self.values {
            s.push_str(&format!("{k} = {}\n", quote(v)));
        }
        s
    }

    /// Writes the manifest next to `output`: inside it for a directory,
    /// otherwise as `<output>.manifest`.
    pub fn write_manifest(&self, output: &Path) -> anyhow::Result<PathBuf> {
        let path = manifest_path(output);
        std::fs::write(&path, self.manifest_text())?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("run.manifest")
    } else {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = parse_config("# comment\n\nvocab-size = 300\nprompt = \" padded \\n\"\nurl = http://x/?a=b\n").unwrap();
        assert_eq!(c["vocab_size"], "300");
        assert_eq!(c["prompt"], " padded \n");
        assert_eq!(c["url"], "http://x/?a=b");
        assert!(parse_config("novalue").is_err());
    }

    #[test]
    fn quoting_round_trips() {
        for v in ["plain", " lead", "two\nlines", "\"q\"", "", "a=b"] {
            let c = parse_config(&format!("k = {}", quote(v))).unwrap();
            assert_eq!(c["k"], v, "{v:?}");
        }
    }

    #[test]
    fn every_option_is_unique_and_declared() {
        for spec in COMMANDS {
            let mut keys: Vec<_> = spec.opts.iter().map(|o| o.key).collect();
            keys.sort();
            let n = keys.len();
            keys.dedup();
            assert_eq!(keys.len(), n, "{}", spec.name);
            assert!(!keys.contains(&"config") && !keys.contains(&"command"));
        }
        cli().debug_assert();
    }
}
