use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::DiagnosticsError;

const MAX_ATOMS: usize = 10_000;
const TOLERANCE: f64 = 1e-9;

/// A fully enumerated joint distribution over (input, field values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyJoint {
    pub vocab_sizes: Vec<usize>,
    /// Input index of each atom.
    pub inputs: Vec<usize>,
    /// Field values of each atom.
    pub fields: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
}

/// Per-field predictive tables, indexed `[field][hidden state][value]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub tables: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Weighted mutual information between hidden state and each field.
    pub lhs: f64,
    /// Weighted field entropies minus the expected weighted cross-entropy loss.
    pub rhs: f64,
    pub expected_loss: f64,
    pub gap: f64,
    /// Weighted expected KL divergence from the true conditionals to the predictor.
    pub weighted_kl: f64,
    pub holds: bool,
}

/// Effective per-field weights under a uniform mask size and uniform subset: each field is
/// masked with probability `(J + 1) / 2J`.
pub fn mask_weights(alphas: &[f64]) -> Vec<f64> {
    let j = alphas.len() as f64;
    alphas.iter().map(|a| a * (j + 1.0) / (2.0 * j)).collect()
}

fn validate(
    toy: &ToyJoint,
    encoder: &[usize],
    predictor: &Predictor,
    weights: &[f64],
) -> Result<usize, DiagnosticsError> {
    let atoms = toy.probs.len();
    if atoms > MAX_ATOMS {
        return Err(DiagnosticsError::NotEnumerable(format!(
            "{atoms} atoms exceed {MAX_ATOMS}"
        )));
    }
    if toy.inputs.len() != atoms || toy.fields.len() != atoms {
        return Err(DiagnosticsError::Mismatch("atom arrays differ in length".into()));
    }
    let j = toy.vocab_sizes.len();
    if weights.len() != j || predictor.tables.len() != j {
        return Err(DiagnosticsError::Mismatch(format!(
            "{j} fields, {} weights, {} predictor tables",
            weights.len(),
            predictor.tables.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(DiagnosticsError::Distribution(format!("weight {w}")));
    }
    if toy.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(DiagnosticsError::Distribution(
            "negative or non-finite atom probability".into(),
        ));
    }
    let total: f64 = toy.probs.iter().sum();
    if (total - 1.0).abs() > TOLERANCE {
        return Err(DiagnosticsError::Distribution(format!(
            "atom probabilities sum to {total}"
        )));
    }
    let hidden = predictor.tables.first().map_or(0, Vec::len);
    for (a, (&x, f)) in toy.inputs.iter().zip(&toy.fields).enumerate() {
        let h = *encoder
            .get(x)
            .ok_or_else(|| DiagnosticsError::Mismatch(format!("atom {a}: input {x} has no encoding")))?;
        if h >= hidden {
            return Err(DiagnosticsError::Mismatch(format!(
                "atom {a}: hidden state {h} outside predictor"
            )));
        }
        if f.len() != j || f.iter().zip(&toy.vocab_sizes).any(|(v, s)| v >= s) {
            return Err(DiagnosticsError::Mismatch(format!(
                "atom {a}: field values {f:?} outside vocabularies"
            )));
        }
    }
    for (k, table) in predictor.tables.iter().enumerate() {
        if table.len() != hidden {
            return Err(DiagnosticsError::Mismatch(format!(
                "field {k}: {} hidden rows, expected {hidden}",
                table.len()
            )));
        }
        for (h, row) in table.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != toy.vocab_sizes[k]
                || row.iter().any(|q| !(q.is_finite() && *q >= 0.0))
                || (sum - 1.0).abs() > TOLERANCE
            {
                return Err(DiagnosticsError::Distribution(format!(
                    "field {k}, hidden {h}: not a distribution over the vocabulary"
                )));
            }
        }
    }
    Ok(hidden)
}

/// Joint of (hidden state, field-`k` value), indexed `[h][v]`.
fn hidden_field_joint(toy: &ToyJoint, encoder: &[usize], hidden: usize, k: usize) -> Vec<Vec<f64>> {
    let mut joint = vec![vec![0.0; toy.vocab_sizes[k]]; hidden];
    for ((&x, f), &p) in toy.inputs.iter().zip(&toy.fields).zip(&toy.probs) {
        joint[encoder[x]][f[k]] += p;
    }
    joint
}

fn xlogy_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (num / den).ln()
    }
}

/// Verifies by enumeration that the weighted mutual information between hidden states and
/// fields is at least the weighted field entropy minus the expected weighted cross-entropy,
/// and that the slack equals the weighted expected KL divergence of the predictor.
pub fn check_sufficiency_bound(
    toy: &ToyJoint,
    encoder: &[usize],
    predictor: &Predictor,
    weights: &[f64],
) -> Result<BoundCheck, DiagnosticsError> {
    let hidden = validate(toy, encoder, predictor, weights)?;
    let (mut lhs, mut entropy, mut loss, mut kl) = (0.0, 0.0, 0.0, 0.0);
    for (k, &w) in weights.iter().enumerate() {
        let joint = hidden_field_joint(toy, encoder, hidden, k);
        let ph: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let pv: Vec<f64> = (0..toy.vocab_sizes[k])
            .map(|v| joint.iter().map(|row| row[v]).sum())
            .collect();
        let q = &predictor.tables[k];
        let (mut info, mut h_field, mut ce, mut div) = (0.0, 0.0, 0.0, 0.0);
        for v in 0..pv.len() {
            h_field -= xlogy_ratio(pv[v], pv[v], 1.0);
        }
        for h in 0..hidden {
            for v in 0..pv.len() {
                let p = joint[h][v];
                if p == 0.0 {
                    continue;
                }
                if q[h][v] == 0.0 {
                    return Err(DiagnosticsError::Distribution(format!(
                        "field {k}: predictor gives zero probability to value {v} at hidden state {h}"
                    )));
                }
                info += xlogy_ratio(p, p, ph[h] * pv[v]);
                ce -= p * q[h][v].ln();
                div += xlogy_ratio(p, p / ph[h], q[h][v]);
            }
        }
        lhs += w * info;
        entropy += w * h_field;
        loss += w * ce;
        kl += w * div;
    }
    let rhs = entropy - loss;
    let gap = lhs - rhs;
    Ok(BoundCheck {
        lhs,
        rhs,
        expected_loss: loss,
        gap,
        weighted_kl: kl,
        holds: lhs >= rhs - TOLERANCE && (gap - kl).abs() <= TOLERANCE,
    })
}

/// The true conditionals `p(f_k | h)`; hidden states never reached get uniform rows.
pub fn exact_predictor(toy: &ToyJoint, encoder: &[usize], hidden: usize) -> Predictor {
    let tables = (0..toy.vocab_sizes.len())
        .map(|k| {
            hidden_field_joint(toy, encoder, hidden, k)
                .into_iter()
                .map(|row| {
                    let total: f64 = row.iter().sum();
                    if total == 0.0 {
                        vec![1.0 / row.len() as f64; row.len()]
                    } else {
                        row.iter().map(|p| p / total).collect()
                    }
                })
                .collect()
        })
        .collect();
    Predictor { tables }
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(sparsity) {
                0.0
            } else {
                rng.sample::<f64, _>(Exp1)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Random toy instance: a sparse joint over `inputs` inputs and fields with the given
/// vocabularies, a random encoder into `hidden` states, and a strictly positive random
/// predictor.
pub fn random_toy<R: Rng>(
    rng: &mut R,
    inputs: usize,
    vocab_sizes: &[usize],
    hidden: usize,
) -> Result<(ToyJoint, Vec<usize>, Predictor), DiagnosticsError> {
    if inputs == 0 || hidden == 0 || vocab_sizes.is_empty() || vocab_sizes.contains(&0) {
        return Err(DiagnosticsError::Shape(
            "inputs, hidden states and vocabularies must be non-empty".into(),
        ));
    }
    let combos = vocab_sizes
        .iter()
        .try_fold(inputs, |acc, &v| acc.checked_mul(v))
        .filter(|&a| a <= MAX_ATOMS);
    let Some(atoms) = combos else {
        return Err(DiagnosticsError::NotEnumerable(format!("more than {MAX_ATOMS} atoms")));
    };
    let probs = random_distribution(rng, atoms, 0.3);
    let mut toy = ToyJoint {
        vocab_sizes: vocab_sizes.to_vec(),
        inputs: Vec::with_capacity(atoms),
        fields: Vec::with_capacity(atoms),
        probs: Vec::with_capacity(atoms),
    };
    for (a, p) in probs.into_iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut rest = a;
        let mut fields = vec![0; vocab_sizes.len()];
        for (f, &v) in fields.iter_mut().zip(vocab_sizes).rev() {
            *f = rest % v;
            rest /= v;
        }
        toy.inputs.push(rest);
        toy.fields.push(fields);
        toy.probs.push(p);
    }
    let encoder = (0..inputs).map(|_| rng.random_range(0..hidden)).collect();
    let tables = vocab_sizes
        .iter()
        .map(|&v| (0..hidden).map(|_| random_distribution(rng, v, 0.0)).collect())
        .collect();
    Ok((toy, encoder, Predictor { tables }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn fixed_toy() -> (ToyJoint, Vec<usize>) {
        // Two inputs map to distinct hidden states; one field fully determined by the input,
        // the other independent of it.
        let toy = ToyJoint {
            vocab_sizes: vec![2, 2],
            inputs: vec![0, 0, 1, 1],
            fields: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            probs: vec![0.25; 4],
        };
        (toy, vec![0, 1])
    }

    #[test]
    fn exact_predictor_is_tight() {
        let (toy, enc) = fixed_toy();
        let q = exact_predictor(&toy, &enc, 2);
        let r = check_sufficiency_bound(&toy, &enc, &q, &[1.0, 1.0]).unwrap();
        assert!(r.holds);
        assert!(r.gap.abs() <= 1e-12);
        assert!((r.lhs - 2f64.ln()).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn uniform_predictor_slack_is_the_conditional_deficit() {
        let (toy, enc) = fixed_toy();
        let q = Predictor {
            tables: vec![vec![vec![0.5, 0.5]; 2]; 2],
        };
        let r = check_sufficiency_bound(&toy, &enc, &q, &[1.0, 1.0]).unwrap();
        // Loss is 2 ln 2; field entropies 2 ln 2; field 0 carries ln 2 of information.
        assert!(r.holds);
        assert!((r.rhs - 0.0).abs() < 1e-12);
        assert!((r.gap - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_sides() {
        let (toy, enc) = fixed_toy();
        let q = exact_predictor(&toy, &enc, 2);
        let r = check_sufficiency_bound(&toy, &enc, &q, &[0.0, 0.0]).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn random_instances_hold() {
        let mut rng = stream_rng(3, &[]);
        for _ in 0..50 {
            let (toy, enc, q) = random_toy(&mut rng, 6, &[3, 4, 2], 3).unwrap();
            let w = mask_weights(&[1.0, 0.5, 2.0]);
            let r = check_sufficiency_bound(&toy, &enc, &q, &w).unwrap();
            assert!(r.holds && r.gap >= -1e-12, "{r:?}");
        }
    }

    #[test]
    fn mask_weights_use_inclusion_probability() {
        assert_eq!(mask_weights(&[1.0, 1.0, 1.0]), vec![2.0 / 3.0; 3]);
        assert_eq!(mask_weights(&[2.0]), vec![2.0]);
    }

    #[test]
    fn rejects_oversized_and_invalid_inputs() {
        let mut rng = stream_rng(0, &[]);
        assert!(matches!(
            random_toy(&mut rng, 101, &[10, 10], 2),
            Err(DiagnosticsError::NotEnumerable(_))
        ));
        let (mut toy, enc) = fixed_toy();
        toy.probs[0] = 0.5;
        let q = Predictor {
            tables: vec![vec![vec![0.5, 0.5]; 2]; 2],
        };
        assert!(matches!(
            check_sufficiency_bound(&toy, &enc, &q, &[1.0, 1.0]),
            Err(DiagnosticsError::Distribution(_))
        ));
    }
}
