//! Synthetic inputs shared by the benchmarks.

use rand::Rng;
use semid::data::{EmbeddingMatrix, ItemTable, Window};
use semid::gaoq::{Points, SidTable};
use semid::rng::stream_rng;

/// `rows` x `dim` uniform values in [-1, 1).
pub fn random_embeddings(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = stream_rng(seed, &[0]);
    let values = (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let tokens = (0..rows).map(|i| format!("i{i}")).collect();
    EmbeddingMatrix::new(rows, dim, values, tokens).expect("consistent shape")
}

pub fn random_points(n: usize, dim: usize, seed: u64) -> Points {
    let mut rng = stream_rng(seed, &[1]);
    Points::new((0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(), dim)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, &[2]);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Item table with an ID field and `side.len()` categorical fields, plus random windows.
pub fn random_catalog(
    items: usize,
    side: &[usize],
    windows: usize,
    history: usize,
    seed: u64,
) -> (ItemTable, Vec<Window>) {
    let mut rng = stream_rng(seed, &[3]);
    let mut names = vec!["id".to_string()];
    names.extend((0..side.len()).map(|k| format!("f{k}")));
    let mut sizes = vec![items];
    sizes.extend_from_slice(side);
    let rows: Vec<Vec<usize>> = (0..items)
        .map(|i| {
            std::iter::once(i)
                .chain(side.iter().map(|&v| rng.random_range(0..v)))
                .collect()
        })
        .collect();
    let table = ItemTable::from_rows(names, &sizes, &rows).expect("valid rows");
    let ws = (0..windows)
        .map(|_| {
            Window::new(
                (0..history).map(|_| rng.random_range(0..items)).collect(),
                rng.random_range(0..items),
            )
        })
        .collect();
    (table, ws)
}

/// Independent uniform codes over the given alphabets.
pub fn random_sids(n: usize, alphabets: &[usize], seed: u64) -> SidTable {
    let mut rng = stream_rng(seed, &[4]);
    let codes = (0..n)
        .map(|_| alphabets.iter().map(|&a| rng.random_range(0..a)).collect())
        .collect();
    SidTable::new((0..n).map(|i| format!("i{i}")).collect(), codes, alphabets.to_vec()).expect("valid table")
}
