use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use semid::data::EmbeddingMatrix;
use semid::diagnostics::{
    check_sufficiency_bound, diagnose as diagnose_sids, estimate_flops, exact_predictor, mask_weights, random_toy,
    BoundCheck, FamaeShape, GaoqLevelShape, GaoqShape, Predictor, SidCorpus, T5Shape, ToyJoint,
};
use semid::gaoq::{default_branching, SidTable, DEFAULT_KMEANS_ITERS};
use semid::rng::stream_rng;

use super::emit;
use crate::config::{check_outputs, required, usage};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// SID table (TSV).
    #[arg(long)]
    pub sids: Option<PathBuf>,
    /// Item representations, for intra-code cosine.
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// `target<TAB>history` pairs, for SID overlap.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Report entropies in bits instead of nats.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bits: Option<bool>,
}

pub fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let sids_path = required(args.sids, "sids")?;
    let mut inputs = vec![sids_path.as_path()];
    inputs.extend(args.emb.as_deref());
    inputs.extend(args.corpus.as_deref());
    if let Some(report) = &args.report {
        check_outputs(&inputs, &[report])?;
    }
    let sids = SidTable::read_tsv(&sids_path).with_context(|| format!("reading {}", sids_path.display()))?;
    let emb = match &args.emb {
        Some(p) => Some(EmbeddingMatrix::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let corpus = match &args.corpus {
        Some(p) => Some(SidCorpus::load(p, &sids).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let report = diagnose_sids(&sids, emb.as_ref(), corpus.as_ref(), args.bits.unwrap_or(false))?;
    emit(args.report.as_deref(), &serde_json::to_string_pretty(&report)?)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BoundCheckArgs {
    /// JSON instance `{"toy", "encoder", "predictor"?, "alphas"?}`; random instances otherwise.
    #[arg(long)]
    pub toy: Option<PathBuf>,
    #[arg(long)]
    pub instances: Option<usize>,
    /// Distinct inputs per random instance.
    #[arg(long)]
    pub inputs: Option<usize>,
    /// Field vocabulary sizes of random instances.
    #[arg(long, value_delimiter = ',')]
    pub vocab: Option<Vec<usize>>,
    /// Hidden states of random encoders.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Per-field loss weights before mask scaling; default 1.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Use the Bayes-optimal predictor instead of a random one.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exact: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ToyFile {
    toy: ToyJoint,
    encoder: Vec<usize>,
    predictor: Option<Predictor>,
    alphas: Option<Vec<f64>>,
}

pub fn bound_check(args: BoundCheckArgs) -> Result<()> {
    if let (Some(toy), Some(out)) = (&args.toy, &args.out) {
        check_outputs(&[toy], &[out])?;
    }
    let exact = args.exact.unwrap_or(false);
    let weights_for = |fields: usize| -> Result<Vec<f64>> {
        let alphas = args.alphas.clone().unwrap_or_else(|| vec![1.0; fields]);
        if alphas.len() != fields {
            return Err(usage(format!("{} alphas for {fields} fields", alphas.len())));
        }
        Ok(mask_weights(&alphas))
    };

    let mut results: Vec<BoundCheck> = Vec::new();
    if let Some(path) = &args.toy {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ToyFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let hidden = file.encoder.iter().max().map_or(1, |h| h + 1);
        let predictor = match file.predictor {
            Some(p) if !exact => p,
            _ => exact_predictor(&file.toy, &file.encoder, hidden),
        };
        let fields = file.toy.vocab_sizes.len();
        let weights = match file.alphas {
            Some(a) => mask_weights(&a),
            None => weights_for(fields)?,
        };
        results.push(check_sufficiency_bound(&file.toy, &file.encoder, &predictor, &weights)?);
    } else {
        let vocab = args.vocab.clone().unwrap_or_else(|| vec![3, 4]);
        let (inputs, hidden) = (args.inputs.unwrap_or(6), args.hidden.unwrap_or(3));
        let weights = weights_for(vocab.len())?;
        for i in 0..args.instances.unwrap_or(100) {
            let mut rng = stream_rng(args.seed.unwrap_or(0), &[i as u64]);
            let (toy, encoder, random) = random_toy(&mut rng, inputs, &vocab, hidden)?;
            let predictor = if exact {
                exact_predictor(&toy, &encoder, hidden)
            } else {
                random
            };
            results.push(check_sufficiency_bound(&toy, &encoder, &predictor, &weights)?);
        }
    }

    let failures = results.iter().filter(|r| !r.holds).count();
    let max_mismatch = results
        .iter()
        .map(|r| (r.gap - r.weighted_kl).abs())
        .fold(0.0, f64::max);
    let report = json!({
        "instances": results.len(),
        "holds": failures == 0,
        "failures": failures,
        "max_gap_kl_mismatch": max_mismatch,
        "results": results,
    });
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if failures > 0 {
        bail!("bound violated on {failures} of {} instances", results.len());
    }
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CostArgs {
    /// Encoder sequence length.
    #[arg(long)]
    pub seq_len: Option<u64>,
    /// Fields per item.
    #[arg(long)]
    pub fields: Option<u64>,
    /// Encoder width.
    #[arg(long)]
    pub dim: Option<u64>,
    /// Encoder layers.
    #[arg(long)]
    pub layers: Option<u64>,
    /// Item count; enables the quantizer estimate.
    #[arg(long)]
    pub items: Option<u64>,
    /// Representation width; defaults to fields x dim.
    #[arg(long)]
    pub qdim: Option<u64>,
    /// Branching factor of every quantizer level, including the last.
    #[arg(long, value_delimiter = ',')]
    pub branching: Option<Vec<u64>>,
    /// Anchor counts per level; defaults to the branching factors.
    #[arg(long, value_delimiter = ',')]
    pub anchors: Option<Vec<u64>>,
    /// K-means iterations per level.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub t5_enc_len: Option<u64>,
    #[arg(long)]
    pub t5_dec_len: Option<u64>,
    #[arg(long)]
    pub t5_dim: Option<u64>,
    #[arg(long)]
    pub t5_enc_layers: Option<u64>,
    #[arg(long)]
    pub t5_dec_layers: Option<u64>,
}

fn quantizer_shape(args: &CostArgs, items: u64, qdim: u64) -> Result<GaoqShape> {
    let branching = match &args.branching {
        Some(b) => b.clone(),
        None => {
            let mut b: Vec<u64> = default_branching(items as usize)
                .into_iter()
                .map(|x| x as u64)
                .collect();
            b.push(items.div_ceil(b.iter().product::<u64>()).max(1));
            b
        }
    };
    let anchors = args.anchors.clone().unwrap_or_else(|| branching.clone());
    if anchors.len() != branching.len() {
        return Err(usage(format!(
            "{} anchor counts for {} levels",
            anchors.len(),
            branching.len()
        )));
    }
    let iters = args.iters.unwrap_or(DEFAULT_KMEANS_ITERS as u64);
    let levels = branching
        .iter()
        .zip(&anchors)
        .map(|(&b, &g)| GaoqLevelShape {
            iters,
            branching: b,
            anchors: g,
        })
        .collect();
    Ok(GaoqShape {
        items,
        dim: qdim,
        levels,
    })
}

fn generator_shape(args: &CostArgs) -> Result<Option<T5Shape>> {
    let given = [
        args.t5_enc_len,
        args.t5_dec_len,
        args.t5_dim,
        args.t5_enc_layers,
        args.t5_dec_layers,
    ];
    match given {
        [None, None, None, None, None] => Ok(None),
        [Some(enc_len), Some(dec_len), Some(dim), Some(enc_layers), Some(dec_layers)] => {
            Ok(Some(T5Shape { enc_len, dec_len, dim, enc_layers, dec_layers }))
        }
        _ => Err(usage("the generator estimate needs all of --t5-enc-len, --t5-dec-len, --t5-dim, --t5-enc-layers and --t5-dec-layers")),
    }
}

pub fn cost(args: CostArgs) -> Result<()> {
    let encoder = FamaeShape {
        seq_len: args.seq_len.unwrap_or(32),
        fields: args.fields.unwrap_or(5),
        dim: args.dim.unwrap_or(128),
        layers: args.layers.unwrap_or(2),
    };
    let quantizer = args
        .items
        .map(|n| quantizer_shape(&args, n, args.qdim.unwrap_or(encoder.fields * encoder.dim)))
        .transpose()?;
    let generator = generator_shape(&args)?;
    let report = estimate_flops(Some(&encoder), quantizer.as_ref(), generator.as_ref())?;
    emit(None, &serde_json::to_string_pretty(&report)?)
}
