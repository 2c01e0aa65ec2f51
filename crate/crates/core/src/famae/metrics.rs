use rayon::prelude::*;

use super::encoder::encode;
use super::mask::MaskSample;
use super::objective::window_rows;
use super::params::{EncoderParameters, Real};
use super::FamaeError;
use crate::data::{EmbeddingMatrix, ItemTable, Window};

/// Which target fields are hidden when ranking item IDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Every field of the target: the item must be inferred from history alone.
    AllFields,
    /// Only the item-ID field: the target's side fields stay visible.
    ItemIdOnly,
}

/// Fraction of windows whose true item ranks in the top `k` of the item-ID predictive
/// distribution. Ties go to the lower item index.
pub fn recall_at_k<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    k: usize,
    mode: MaskMode,
) -> Result<f64, FamaeError> {
    if windows.is_empty() {
        return Err(FamaeError::EmptySplit);
    }
    let n = params.vocab_sizes[0];
    if k >= n {
        return Ok(1.0);
    }
    let d = params.dim();
    let mut unit = Vec::with_capacity(n * d);
    for v in 0..n {
        let e = params.embedding(0, v);
        let norm = e.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(FamaeError::ZeroNorm("embedding row"));
        }
        unit.extend(e.iter().map(|&x| x / norm));
    }
    let mask = match mode {
        MaskMode::AllFields => MaskSample::all(params.num_fields()),
        MaskMode::ItemIdOnly => MaskSample::only(0),
    };
    let hits: Vec<Result<bool, FamaeError>> = windows
        .par_iter()
        .map(|w| {
            if w.history.is_empty() {
                return Err(FamaeError::EmptyHistory);
            }
            let rows = window_rows(items, w, params.max_len);
            let (target, history) = rows.split_last().expect("window has a target");
            let h = encode(params, history, target, &mask)?;
            let score = |v: usize| -> T { unit[v * d..(v + 1) * d].iter().zip(&h).map(|(&a, &b)| a * b).sum::<T>() };
            let t = w.target;
            let ts = score(t);
            let mut ahead = 0;
            for v in 0..n {
                let s = score(v);
                if s > ts || (s == ts && v < t) {
                    ahead += 1;
                    if ahead >= k {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })
        .collect();
    let mut count = 0usize;
    for h in hits {
        count += usize::from(h?);
    }
    Ok(count as f64 / windows.len() as f64)
}

/// Recall@k with every target field masked.
pub fn metric_collaborative<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    k: usize,
) -> Result<f64, FamaeError> {
    recall_at_k(params, items, windows, k, MaskMode::AllFields)
}

/// Recall@k with only the target's item-ID field masked.
pub fn metric_discriminative<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    k: usize,
) -> Result<f64, FamaeError> {
    recall_at_k(params, items, windows, k, MaskMode::ItemIdOnly)
}

/// Row `i` is the concatenation of item `i`'s field embeddings in schema order.
pub fn extract_item_representations<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
) -> Result<EmbeddingMatrix, FamaeError> {
    let j = params.num_fields();
    if items.num_fields() != j {
        return Err(FamaeError::Config(format!(
            "item table has {} fields, model has {j}",
            items.num_fields()
        )));
    }
    let d = params.dim();
    let mut values = Vec::with_capacity(items.len() * j * d);
    for i in 0..items.len() {
        for (field, &value) in items.row(i).iter().enumerate() {
            let size = params.vocab_sizes[field];
            if value >= size {
                return Err(FamaeError::OutOfVocabulary { field, value, size });
            }
            values.extend(
                params
                    .embedding(field, value)
                    .iter()
                    .map(|v| v.to_f32().expect("finite")),
            );
        }
    }
    Ok(EmbeddingMatrix::new(
        items.len(),
        j * d,
        values,
        items.item_tokens().to_vec(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::famae::ModelConfig;

    fn setup() -> (EncoderParameters<f32>, ItemTable) {
        let cfg = ModelConfig {
            dim: 2,
            layers: 1,
            heads: 1,
            ffn_dim: 4,
            ..ModelConfig::default()
        };
        let items = ItemTable::from_rows(
            vec!["id".into(), "cat".into()],
            &[3, 2],
            &[vec![0, 0], vec![1, 1], vec![2, 0]],
        )
        .unwrap();
        (EncoderParameters::init(&cfg, &[3, 2], 4).unwrap(), items)
    }

    #[test]
    fn extraction_concatenates_tables() {
        let (mut p, items) = setup();
        p.embedding_mut(0, 0).copy_from_slice(&[1.0, 2.0]);
        p.embedding_mut(0, 1).copy_from_slice(&[3.0, 4.0]);
        p.embedding_mut(0, 2).copy_from_slice(&[5.0, 6.0]);
        p.embedding_mut(1, 0).copy_from_slice(&[-1.0, -2.0]);
        p.embedding_mut(1, 1).copy_from_slice(&[7.0, 8.0]);
        let m = extract_item_representations(&p, &items).unwrap();
        assert_eq!(m.dim(), 4);
        assert_eq!(m.row(0), &[1.0, 2.0, -1.0, -2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0, 7.0, 8.0]);
        assert_eq!(m.row(2), &[5.0, 6.0, -1.0, -2.0]);
    }

    #[test]
    fn single_field_output_is_the_id_table() {
        let items = ItemTable::from_rows(vec!["id".into()], &[3], &[vec![0], vec![1], vec![2]]).unwrap();
        let cfg = ModelConfig {
            dim: 2,
            layers: 1,
            heads: 1,
            ffn_dim: 4,
            ..ModelConfig::default()
        };
        let p = EncoderParameters::<f32>::init(&cfg, &[3], 4).unwrap();
        let m = extract_item_representations(&p, &items).unwrap();
        assert_eq!(m.values(), p.tensor("field0.embedding").unwrap());
    }

    #[test]
    fn items_sharing_a_value_share_its_columns() {
        let (p, items) = setup();
        let m = extract_item_representations(&p, &items).unwrap();
        assert_eq!(m.row(0)[2..], m.row(2)[2..]);
        assert_ne!(m.row(0)[2..], m.row(1)[2..]);
    }

    #[test]
    fn large_k_is_perfect_recall() {
        let (p, items) = setup();
        let ws = vec![Window::new(vec![0], 1), Window::new(vec![1, 2], 0)];
        assert_eq!(metric_collaborative(&p, &items, &ws, 3).unwrap(), 1.0);
        assert_eq!(metric_discriminative(&p, &items, &ws, 5).unwrap(), 1.0);
        assert!(matches!(
            metric_collaborative(&p, &items, &[], 1),
            Err(FamaeError::EmptySplit)
        ));
    }
}
