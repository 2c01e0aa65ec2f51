use rand::Rng;
use semid::data::{ItemTable, Window};
use semid::famae::{extract_item_representations, train, EncoderParameters, ModelConfig, TrainConfig};
use semid::rng::stream_rng;

fn setup() -> (ItemTable, Vec<Window>, ModelConfig) {
    let rows: Vec<Vec<usize>> = (0..30).map(|i| vec![i, i % 3]).collect();
    let items = ItemTable::from_rows(vec!["id".into(), "cat".into()], &[30, 3], &rows).unwrap();
    let mut rng = stream_rng(8, &[]);
    let windows = (0..120)
        .map(|_| {
            Window::new(
                vec![rng.random_range(0..30), rng.random_range(0..30)],
                rng.random_range(0..30),
            )
        })
        .collect();
    let model = ModelConfig {
        dim: 8,
        layers: 1,
        heads: 2,
        ffn_dim: 16,
        seed: 4,
        ..ModelConfig::default()
    };
    (items, windows, model)
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 2,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let out = train(&items, &windows, &[], &model, &cfg, 3).unwrap();
    let init = EncoderParameters::<f32>::init(&model, &[30, 3], 3).unwrap();
    assert_eq!(out.params.values, init.values);
    assert_eq!(out.log.len(), 2);
    assert!(out.best_epoch.is_none());
}

#[test]
fn zero_epochs_return_initialisation_and_empty_log() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(&items, &windows, &windows, &model, &cfg, 3).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(
        out.params.to_bytes(),
        EncoderParameters::<f32>::init(&model, &[30, 3], 3).unwrap().to_bytes()
    );
}

#[test]
fn training_lowers_the_loss() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 8,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let out = train(&items, &windows, &[], &model, &cfg, 3).unwrap();
    assert!(out.log.last().unwrap().loss < out.log[0].loss, "{:?}", out.log);
    assert!(out.params.all_finite());
}

#[test]
fn returns_the_best_validation_epoch() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 10,
        patience: 2,
        batch_size: 16,
        eval_k: 3,
        ..TrainConfig::default()
    };
    let out = train(&items, &windows, &windows[..40], &model, &cfg, 3).unwrap();
    let best = out.best_epoch.unwrap();
    let best_metric = out.log[best - 1].metric1.unwrap();
    assert!(out.log.iter().all(|l| l.metric1.unwrap() <= best_metric));
    if out.stopped_early {
        assert_eq!(out.log.len(), best + cfg.patience);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let run = || {
        train(&items, &windows, &windows[..20], &model, &cfg, 3)
            .unwrap()
            .params
            .to_bytes()
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(single, multi);
}

#[test]
fn extraction_after_training_has_one_row_per_item() {
    let (items, windows, model) = setup();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = train(&items, &windows, &[], &model, &cfg, 3).unwrap();
    let emb = extract_item_representations(&out.params, &items).unwrap();
    assert_eq!((emb.rows(), emb.dim()), (30, 16));
    assert_eq!(emb.row_tokens(), items.item_tokens());
}
