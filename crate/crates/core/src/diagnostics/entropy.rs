use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_level, DiagnosticsError};
use crate::gaoq::SidTable;

/// `-sum p ln p` of the empirical distribution given by `counts`. Zero counts are ignored.
pub fn plugin_entropy(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let n = counts.iter().sum::<usize>() as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn tally<K: Ord>(keys: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

fn nonempty(sids: &SidTable, level: usize) -> Result<(), DiagnosticsError> {
    if sids.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    check_level(sids.num_levels(), level)
}

/// Entropy of the level-`level` code.
pub fn marginal_entropy(sids: &SidTable, level: usize) -> Result<f64, DiagnosticsError> {
    nonempty(sids, level)?;
    Ok(plugin_entropy(tally(sids.codes.iter().map(|c| c[level])).into_values()))
}

/// Entropy of the level-`level` code given all earlier codes, averaged over observed prefixes.
pub fn prefix_conditional_entropy(sids: &SidTable, level: usize) -> Result<f64, DiagnosticsError> {
    nonempty(sids, level)?;
    let mut by_prefix: BTreeMap<&[usize], BTreeMap<usize, usize>> = BTreeMap::new();
    for c in &sids.codes {
        *by_prefix.entry(&c[..level]).or_default().entry(c[level]).or_insert(0) += 1;
    }
    let n = sids.len() as f64;
    Ok(by_prefix
        .values()
        .map(|children| {
            let size = children.values().sum::<usize>() as f64;
            size / n * plugin_entropy(children.values().copied())
        })
        .sum())
}

/// Entropy of the full code tuple.
pub fn joint_entropy(sids: &SidTable) -> Result<f64, DiagnosticsError> {
    if sids.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    Ok(plugin_entropy(
        tally(sids.codes.iter().map(|c| c.as_slice())).into_values(),
    ))
}

fn prefixes_observed(sids: &SidTable, level: usize) -> usize {
    tally(sids.codes.iter().map(|c| &c[..level])).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntropy {
    pub level: usize,
    pub alphabet_size: usize,
    pub marginal: f64,
    pub prefix_conditional: f64,
    /// Distinct earlier-code prefixes the conditional entropy averages over.
    pub prefixes_observed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub levels: Vec<LevelEntropy>,
    pub joint: f64,
}

impl EntropyReport {
    pub fn conditional_sum(&self) -> f64 {
        self.levels.iter().map(|l| l.prefix_conditional).sum()
    }
}

pub fn entropy_report(sids: &SidTable) -> Result<EntropyReport, DiagnosticsError> {
    let levels = (0..sids.num_levels())
        .map(|l| {
            Ok(LevelEntropy {
                level: l,
                alphabet_size: sids.alphabet_sizes[l],
                marginal: marginal_entropy(sids, l)?,
                prefix_conditional: prefix_conditional_entropy(sids, l)?,
                prefixes_observed: prefixes_observed(sids, l),
            })
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    Ok(EntropyReport {
        levels,
        joint: joint_entropy(sids)?,
    })
}

/// Label of each item's full code tuple, numbered in first-seen order. Used as a finite
/// stand-in for the continuous representation.
pub fn final_cell_proxy(sids: &SidTable) -> Vec<usize> {
    let mut ids: BTreeMap<&[usize], usize> = BTreeMap::new();
    sids.codes
        .iter()
        .map(|c| {
            let next = ids.len();
            *ids.entry(c.as_slice()).or_insert(next)
        })
        .collect()
}

/// `H(joint) - H(marginal)` for two tallies over the same items.
fn conditional<A, B>(joint: BTreeMap<A, usize>, marginal: BTreeMap<B, usize>) -> f64 {
    plugin_entropy(joint.into_values()) - plugin_entropy(marginal.into_values())
}

/// The three terms of `H(z | c_l) = H(z | c_l, C_<l) + I(z; C_<l | c_l)` for a discrete `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityIdentity {
    pub given_code: f64,
    pub given_code_and_prefix: f64,
    pub prefix_information: f64,
}

impl AmbiguityIdentity {
    pub fn residual(&self) -> f64 {
        self.given_code - self.given_code_and_prefix - self.prefix_information
    }
}

/// Each term is estimated separately from plug-in frequencies; the conditional mutual
/// information is summed directly rather than taken as a difference of entropies.
pub fn ambiguity_identity(sids: &SidTable, z: &[usize], level: usize) -> Result<AmbiguityIdentity, DiagnosticsError> {
    nonempty(sids, level)?;
    if z.len() != sids.len() {
        return Err(DiagnosticsError::Mismatch(format!(
            "{} labels for {} items",
            z.len(),
            sids.len()
        )));
    }
    let n = sids.len() as f64;
    let code = |i: usize| sids.codes[i][level];
    let prefix = |i: usize| &sids.codes[i][..level];
    let idx = 0..sids.len();
    let given_code = conditional(
        tally(idx.clone().map(|i| (z[i], code(i)))),
        tally(idx.clone().map(code)),
    );
    let given_code_and_prefix = conditional(
        tally(idx.clone().map(|i| (z[i], code(i), prefix(i)))),
        tally(idx.clone().map(|i| (code(i), prefix(i)))),
    );

    let zc = tally(idx.clone().map(|i| (z[i], code(i))));
    let cp = tally(idx.clone().map(|i| (code(i), prefix(i))));
    let c = tally(idx.clone().map(code));
    let prefix_information = tally(idx.map(|i| (z[i], code(i), prefix(i))))
        .into_iter()
        .map(|((zv, cv, pv), count)| {
            let p = count as f64 / n;
            let ratio = count as f64 * c[&cv] as f64 / (zc[&(zv, cv)] as f64 * cp[&(cv, pv)] as f64);
            p * ratio.ln()
        })
        .sum();
    Ok(AmbiguityIdentity {
        given_code,
        given_code_and_prefix,
        prefix_information,
    })
}
