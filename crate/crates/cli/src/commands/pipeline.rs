use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use semid::data::{ItemTable, SequenceStore, Window, WindowPolicy, DEFAULT_MAX_LEN};
use semid::famae::{
    extract_item_representations, metric_collaborative, metric_discriminative, EncoderParameters, FamaeError,
    ModelConfig, TrainConfig,
};

use super::emit;
use crate::config::{check_outputs, required, usage};

fn load_items(path: &Path, fields: &Option<Vec<String>>) -> Result<ItemTable> {
    let names = fields.clone().unwrap_or_default();
    ItemTable::load(path, &names).with_context(|| format!("loading items {}", path.display()))
}

fn load_sequences(path: &Path, items: &ItemTable, max_len: usize) -> Result<SequenceStore> {
    let store = SequenceStore::load(path, items).with_context(|| format!("loading sequences {}", path.display()))?;
    Ok(store.with_max_len(max_len))
}

fn pairs_tsv(items: &ItemTable, windows: &[Window]) -> String {
    let mut out = String::new();
    for w in windows {
        let history: Vec<&str> = w.history.iter().map(|&i| items.item_token(i)).collect();
        out.push_str(items.item_token(w.target));
        out.push('\t');
        out.push_str(&history.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PrepareArgs {
    /// Tab-separated item table, item ID first.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// `user<TAB>item item ...` interaction file.
    #[arg(long)]
    pub sequences: Option<PathBuf>,
    /// Field names, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Directory receiving summary.json and {train,valid,test}.pairs.tsv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let items_path = required(args.items, "items")?;
    let seq_path = required(args.sequences, "sequences")?;
    let out_dir = required(args.out_dir, "out-dir")?;
    let max_len = args.max_len.unwrap_or(DEFAULT_MAX_LEN);
    let items = load_items(&items_path, &args.fields)?;
    let store = load_sequences(&seq_path, &items, max_len)?;
    let split = store.leave_one_out();

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let outputs: Vec<PathBuf> = ["summary.json", "train.pairs.tsv", "valid.pairs.tsv", "test.pairs.tsv"]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    check_outputs(
        &[&items_path, &seq_path],
        &outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
    )?;

    let schema = items.schema();
    let summary = json!({
        "items": items.len(),
        "fields": schema.field_names,
        "vocab_sizes": schema.vocab_sizes,
        "users": store.len(),
        "interactions": store.sequences().iter().map(Vec::len).sum::<usize>(),
        "max_len": max_len,
        "windows": {"train": split.train.len(), "valid": split.valid.len(), "test": split.test.len()},
    });
    fs::write(&outputs[0], serde_json::to_string_pretty(&summary)? + "\n")?;
    for (path, windows) in outputs[1..].iter().zip([&split.train, &split.valid, &split.test]) {
        fs::write(path, pairs_tsv(&items, windows)).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("prepared {} users, {} training windows", store.len(), split.train.len());
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub sequences: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Output parameter file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output JSON-lines metrics log, one record per epoch.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub field_weights: Option<Vec<f64>>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub full_softmax_limit: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Recall cutoff used for early stopping.
    #[arg(long)]
    pub eval_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainArgs {
    fn model(&self) -> ModelConfig {
        let d = ModelConfig::default();
        ModelConfig {
            dim: self.dim.unwrap_or(d.dim),
            layers: self.layers.unwrap_or(d.layers),
            heads: self.heads.unwrap_or(d.heads),
            ffn_dim: self.ffn.unwrap_or(d.ffn_dim),
            dropout: self.dropout.unwrap_or(d.dropout),
            field_weights: self.field_weights.clone().unwrap_or(d.field_weights),
            negatives: self.negatives.unwrap_or(d.negatives),
            full_softmax_limit: self.full_softmax_limit.unwrap_or(d.full_softmax_limit),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    fn training(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            batch_size: self.batch.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            patience: self.patience.unwrap_or(d.patience),
            eval_k: self.eval_k.unwrap_or(d.eval_k),
            ..d
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let items_path = required(args.items.clone(), "items")?;
    let seq_path = required(args.sequences.clone(), "sequences")?;
    let checkpoint = required(args.checkpoint.clone(), "checkpoint")?;
    let mut outputs = vec![checkpoint.as_path()];
    outputs.extend(args.log.as_deref());
    check_outputs(&[&items_path, &seq_path], &outputs)?;
    let (model, cfg) = (args.model(), args.training());
    let max_len = args.max_len.unwrap_or(DEFAULT_MAX_LEN);

    let items = load_items(&items_path, &args.fields)?;
    let split = load_sequences(&seq_path, &items, max_len)?.leave_one_out();
    log::info!(
        "training on {} windows, validating on {}",
        split.train.len(),
        split.valid.len()
    );
    let outcome = match semid::famae::train(&items, &split.train, &split.valid, &model, &cfg, max_len) {
        Ok(o) => o,
        Err(FamaeError::Diverged {
            epoch,
            window,
            last_good,
        }) => {
            let path = with_suffix(&checkpoint, ".last-good");
            last_good
                .write(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            bail!(
                "training diverged at epoch {epoch}, window {window}; last finite parameters saved to {}",
                path.display()
            );
        }
        Err(e) => return Err(e.into()),
    };

    outcome
        .params
        .write(&checkpoint)
        .with_context(|| format!("writing {}", checkpoint.display()))?;
    if let Some(path) = &args.log {
        let mut text = String::new();
        for entry in &outcome.log {
            text.push_str(&serde_json::to_string(entry)?);
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    for entry in &outcome.log {
        log::info!("epoch {}", serde_json::to_string(entry)?);
    }
    let summary = json!({
        "epochs_run": outcome.log.len(),
        "best_epoch": outcome.best_epoch,
        "stopped_early": outcome.stopped_early,
        "parameters": outcome.params.len(),
    });
    emit(None, &summary.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSplit {
    Train,
    Valid,
    #[default]
    Test,
    /// Every window of every sequence.
    All,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub sequences: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub split: Option<EvalSplit>,
    /// Recall cutoff.
    #[arg(long)]
    pub k: Option<usize>,
    /// Write the metrics JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = required(args.checkpoint, "checkpoint")?;
    let items_path = required(args.items, "items")?;
    let seq_path = required(args.sequences, "sequences")?;
    if let Some(out) = &args.out {
        check_outputs(&[&ckpt, &items_path, &seq_path], &[out])?;
    }
    let k = args.k.unwrap_or(10);
    let split_name = args.split.unwrap_or_default();
    let params = EncoderParameters::<f32>::read(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let items = load_items(&items_path, &args.fields)?;
    let store = load_sequences(&seq_path, &items, params.max_len)?;
    let split = store.leave_one_out();
    let windows = match split_name {
        EvalSplit::Train => split.train,
        EvalSplit::Valid => split.valid,
        EvalSplit::Test => split.test,
        EvalSplit::All => store.windows(WindowPolicy::Prefix, 1),
    };
    if windows.is_empty() {
        return Err(usage(format!("split {split_name:?} has no windows")));
    }
    let report = json!({
        "split": split_name,
        "windows": windows.len(),
        "k": k,
        "metric1": metric_collaborative(&params, &items, &windows, k)?,
        "metric2": metric_discriminative(&params, &items, &windows, k)?,
    });
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
    /// Output embedding file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn extract(args: ExtractArgs) -> Result<()> {
    let ckpt = required(args.checkpoint, "checkpoint")?;
    let items_path = required(args.items, "items")?;
    let out = required(args.out, "out")?;
    check_outputs(&[&ckpt, &items_path], &[&out])?;
    let params = EncoderParameters::<f32>::read(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let items = load_items(&items_path, &args.fields)?;
    let emb = extract_item_representations(&params, &items)?;
    emb.write(&out).with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "wrote {} x {} representations to {}",
        emb.rows(),
        emb.dim(),
        out.display()
    );
    Ok(())
}
