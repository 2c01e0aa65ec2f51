use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use semid::data::EmbeddingMatrix;
use semid::gaoq::{default_branching, Method, QuantizerConfig, DEFAULT_KMEANS_ITERS};

use super::emit;
use crate::config::{check_outputs, required, usage};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuantizeArgs {
    /// Input embedding file.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output SID table (TSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output codebook (JSON).
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// gaoq, hkmeans or rqkmeans.
    #[arg(long)]
    pub method: Option<String>,
    /// Branching factors of every level but the last, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub branching: Option<Vec<usize>>,
    /// `auto`, or anchor counts for the aligned levels below the root.
    #[arg(long)]
    pub anchors: Option<String>,
    /// Fixed last-level alphabet size.
    #[arg(long)]
    pub last_anchors: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_anchors(spec: &str) -> Result<Option<Vec<usize>>> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad anchor count '{s}'")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn quantize(args: QuantizeArgs) -> Result<()> {
    let input = required(args.input, "in")?;
    let out = required(args.out, "out")?;
    let mut outputs = vec![out.as_path()];
    outputs.extend(args.codebook.as_deref());
    check_outputs(&[&input], &outputs)?;

    let method: Method = args.method.as_deref().unwrap_or("gaoq").parse()?;
    let emb = EmbeddingMatrix::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let branching = args.branching.unwrap_or_else(|| default_branching(emb.rows()));
    let mut cfg = QuantizerConfig::new(method, branching, args.seed.unwrap_or(0));
    cfg.anchors = args.anchors.as_deref().map(parse_anchors).transpose()?.flatten();
    cfg.last_level_anchors = args.last_anchors;
    cfg.iters = args.iters.unwrap_or(DEFAULT_KMEANS_ITERS);

    let q = semid::gaoq::quantize(&emb, &cfg)?;
    q.sids
        .write_tsv(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = &args.codebook {
        q.codebook
            .write_json(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for group in &q.duplicates {
        let tokens: Vec<&str> = group.iter().map(|&i| q.sids.tokens[i].as_str()).collect();
        log::warn!("identical embeddings share a prefix: {}", tokens.join(" "));
    }
    let summary = json!({
        "method": method,
        "items": q.sids.len(),
        "levels": q.sids.num_levels(),
        "alphabet_sizes": q.sids.alphabet_sizes,
        "unique": q.sids.all_unique(),
        "duplicate_groups": q.duplicates.len(),
    });
    emit(None, &summary.to_string())
}
