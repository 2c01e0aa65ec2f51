//! Analytic encoder gradients against central finite differences of the same loss evaluated
//! in 64-bit arithmetic.

use semid::data::{ItemTable, Window};
use semid::famae::{famae_loss, famae_loss_value, EncoderParameters, ModelConfig};

/// Denominator floor for the relative error; gradients below it are compared absolutely.
const FLOOR: f64 = 1e-4;
const SEED: u64 = 17;

fn toy_items() -> ItemTable {
    let rows: Vec<Vec<usize>> = (0..6).map(|i| vec![i, i % 3, i % 2]).collect();
    ItemTable::from_rows(vec!["id".into(), "a".into(), "b".into()], &[6, 3, 2], &rows).unwrap()
}

fn toy_windows() -> Vec<Window> {
    vec![
        Window::new(vec![0, 1, 2], 3),
        Window::new(vec![4], 5),
        Window::new(vec![5, 3], 1),
        Window::new(vec![2, 2, 0], 4),
    ]
}

/// Central differences with step `1e-3 * max(1, |theta|)`. The second-order stencil has
/// truncation error near 1e-4 relative at that step, which is fine against 32-bit gradients;
/// the 64-bit comparisons use the fourth-order stencil.
fn finite_difference(
    params: &EncoderParameters<f64>,
    items: &ItemTable,
    windows: &[Window],
    fourth_order: bool,
) -> Vec<f64> {
    let mut p = params.clone();
    (0..p.values.len())
        .map(|i| {
            let theta = p.values[i];
            let step = 1e-3 * theta.abs().max(1.0);
            let mut diff = |m: f64| {
                p.values[i] = theta + m * step;
                let up = famae_loss_value(&p, items, windows, SEED).unwrap();
                p.values[i] = theta - m * step;
                let down = famae_loss_value(&p, items, windows, SEED).unwrap();
                p.values[i] = theta;
                up - down
            };
            if fourth_order {
                (8.0 * diff(1.0) - diff(2.0)) / (12.0 * step)
            } else {
                diff(1.0) / (2.0 * step)
            }
        })
        .collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

fn check(cfg: &ModelConfig, single_precision: bool) -> (f64, usize) {
    let items = toy_items();
    let windows = toy_windows();
    let params = EncoderParameters::<f32>::init(cfg, &[6, 3, 2], 4).unwrap();
    let reference = params.cast::<f64>();
    let analytic: Vec<f64> = if single_precision {
        famae_loss(&params, &items, &windows, SEED)
            .unwrap()
            .grad
            .into_iter()
            .map(f64::from)
            .collect()
    } else {
        famae_loss(&reference, &items, &windows, SEED).unwrap().grad
    };
    let numeric = finite_difference(&reference, &items, &windows, !single_precision);
    (max_relative_error(&analytic, &numeric), analytic.len())
}

fn two_layer() -> ModelConfig {
    ModelConfig {
        dim: 8,
        layers: 2,
        heads: 2,
        ffn_dim: 16,
        dropout: 0.1,
        negatives: 0,
        seed: 5,
        ..ModelConfig::default()
    }
}

fn small() -> ModelConfig {
    ModelConfig {
        dim: 4,
        layers: 1,
        heads: 2,
        ffn_dim: 8,
        dropout: 0.1,
        negatives: 0,
        seed: 9,
        ..ModelConfig::default()
    }
}

#[test]
fn two_layer_single_precision_gradients() {
    let (err, _) = check(&two_layer(), true);
    assert!(err <= 1e-3, "max relative error {err}");
}

#[test]
fn small_model_single_precision_gradients() {
    let (err, n) = check(&small(), true);
    assert!(n <= 500, "{n} parameters");
    assert!(err <= 1e-3, "max relative error {err}");
}

#[test]
fn small_model_double_precision_gradients() {
    let (err, n) = check(&small(), false);
    assert!(n <= 500, "{n} parameters");
    assert!(err <= 1e-6, "max relative error {err}");
}

#[test]
fn sampled_negatives_gradients() {
    let items = ItemTable::from_rows(
        vec!["id".into(), "a".into()],
        &[12, 3],
        &(0..12).map(|i| vec![i, i % 3]).collect::<Vec<_>>(),
    )
    .unwrap();
    let cfg = ModelConfig {
        negatives: 4,
        full_softmax_limit: 4,
        ..small()
    };
    let params = EncoderParameters::<f64>::init(&cfg, &[12, 3], 4).unwrap();
    let windows = vec![Window::new(vec![0, 5], 7), Window::new(vec![11], 2)];
    let analytic = famae_loss(&params, &items, &windows, SEED).unwrap().grad;
    let numeric = finite_difference(&params, &items, &windows, true);
    let err = max_relative_error(&analytic, &numeric);
    assert!(err <= 1e-6, "max relative error {err}");
}
