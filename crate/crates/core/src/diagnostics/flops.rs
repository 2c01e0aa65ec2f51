use serde::{Deserialize, Serialize};

use super::DiagnosticsError;

/// Masked-field encoder dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamaeShape {
    pub seq_len: u64,
    pub fields: u64,
    pub dim: u64,
    pub layers: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaoqLevelShape {
    pub iters: u64,
    pub branching: u64,
    /// Anchor count; ignored at the first level.
    pub anchors: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaoqShape {
    pub items: u64,
    pub dim: u64,
    pub levels: Vec<GaoqLevelShape>,
}

/// Encoder-decoder generator dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct T5Shape {
    pub enc_len: u64,
    pub dec_len: u64,
    pub dim: u64,
    pub enc_layers: u64,
    pub dec_layers: u64,
}

/// Dominant multiply-accumulate counts with unit constants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopReport {
    pub famae: Option<u128>,
    pub gaoq: Option<u128>,
    pub t5: Option<u128>,
    pub total: u128,
}

/// Checked arithmetic over `u128`, failing with the stage name.
struct Acc(&'static str);

impl Acc {
    fn mul(&self, factors: &[u64]) -> Result<u128, DiagnosticsError> {
        factors
            .iter()
            .try_fold(1u128, |a, &f| a.checked_mul(u128::from(f)))
            .ok_or(DiagnosticsError::Overflow(self.0))
    }

    fn mul128(&self, a: u128, factors: &[u64]) -> Result<u128, DiagnosticsError> {
        a.checked_mul(self.mul(factors)?)
            .ok_or(DiagnosticsError::Overflow(self.0))
    }

    fn sum(&self, terms: &[u128]) -> Result<u128, DiagnosticsError> {
        terms
            .iter()
            .try_fold(0u128, |a, &t| a.checked_add(t))
            .ok_or(DiagnosticsError::Overflow(self.0))
    }
}

fn positive(stage: &str, dims: &[u64]) -> Result<(), DiagnosticsError> {
    if dims.contains(&0) {
        return Err(DiagnosticsError::Shape(format!("{stage} dimensions must be positive")));
    }
    Ok(())
}

fn famae_flops(s: &FamaeShape) -> Result<u128, DiagnosticsError> {
    positive("encoder", &[s.seq_len, s.fields, s.dim, s.layers])?;
    let a = Acc("encoder");
    let per_layer = a.sum(&[
        a.mul(&[s.seq_len, s.seq_len, s.dim])?,
        a.mul(&[s.seq_len, s.dim, s.dim])?,
    ])?;
    a.sum(&[a.mul(&[s.seq_len, s.fields, s.dim])?, a.mul128(per_layer, &[s.layers])?])
}

fn gaoq_flops(s: &GaoqShape) -> Result<u128, DiagnosticsError> {
    if s.levels.is_empty() {
        return Err(DiagnosticsError::Shape("quantizer needs at least one level".into()));
    }
    positive("quantizer", &[s.items, s.dim])?;
    let a = Acc("quantizer");
    let mut total = 0u128;
    let mut parents = 1u128;
    for (l, lv) in s.levels.iter().enumerate() {
        positive("quantizer level", &[lv.iters, lv.branching])?;
        let clustering = a.mul(&[lv.iters, s.items, lv.branching, s.dim])?;
        total = a.sum(&[total, clustering])?;
        if l > 0 {
            positive("quantizer level", &[lv.anchors])?;
            let centering = a.mul128(parents, &[lv.branching, s.dim])?;
            let anchors = a.mul(&[s.dim, lv.anchors, lv.anchors])?;
            let per_parent = a.sum(&[
                a.mul(&[lv.branching, lv.anchors, s.dim])?,
                a.mul(&[lv.branching, lv.branching, lv.branching])?,
            ])?;
            let matching = parents
                .checked_mul(per_parent)
                .ok_or(DiagnosticsError::Overflow("quantizer"))?;
            total = a.sum(&[total, centering, anchors, matching])?;
        }
        parents = a.mul128(parents, &[lv.branching])?;
    }
    Ok(total)
}

fn t5_flops(s: &T5Shape) -> Result<u128, DiagnosticsError> {
    positive("generator", &[s.enc_len, s.dec_len, s.dim, s.enc_layers, s.dec_layers])?;
    let a = Acc("generator");
    let enc = a.sum(&[
        a.mul(&[s.enc_len, s.enc_len, s.dim])?,
        a.mul(&[s.enc_len, s.dim, s.dim])?,
    ])?;
    let dec = a.sum(&[
        a.mul(&[s.dec_len, s.dec_len, s.dim])?,
        a.mul(&[s.dec_len, s.enc_len, s.dim])?,
        a.mul(&[s.dec_len, s.dim, s.dim])?,
        a.mul(&[s.enc_len, s.dim, s.dim])?,
    ])?;
    a.sum(&[a.mul128(enc, &[s.enc_layers])?, a.mul128(dec, &[s.dec_layers])?])
}

/// Evaluates the dominant-cost formulas of whichever stages are given.
pub fn estimate_flops(
    famae: Option<&FamaeShape>,
    gaoq: Option<&GaoqShape>,
    t5: Option<&T5Shape>,
) -> Result<FlopReport, DiagnosticsError> {
    let famae = famae.map(famae_flops).transpose()?;
    let gaoq = gaoq.map(gaoq_flops).transpose()?;
    let t5 = t5.map(t5_flops).transpose()?;
    let total = [famae, gaoq, t5]
        .into_iter()
        .flatten()
        .try_fold(0u128, |a, t| a.checked_add(t))
        .ok_or(DiagnosticsError::Overflow("total"))?;
    Ok(FlopReport { famae, gaoq, t5, total })
}
