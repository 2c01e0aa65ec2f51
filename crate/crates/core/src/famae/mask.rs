use rand::seq::index;
use rand::Rng;

use super::FamaeError;

/// Target fields hidden from the encoder (0-based, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSample {
    pub fields: Vec<usize>,
}

impl MaskSample {
    pub fn all(num_fields: usize) -> Self {
        Self {
            fields: (0..num_fields).collect(),
        }
    }

    pub fn only(field: usize) -> Self {
        Self { fields: vec![field] }
    }

    pub fn size(&self) -> usize {
        self.fields.len()
    }

    pub fn contains(&self, field: usize) -> bool {
        self.fields.binary_search(&field).is_ok()
    }
}

/// Draws `K ~ U{1..J}`, then a uniform `K`-subset of the fields.
pub fn sample_mask(num_fields: usize, rng: &mut impl Rng) -> Result<MaskSample, FamaeError> {
    if num_fields == 0 {
        return Err(FamaeError::NoFields);
    }
    let k = rng.random_range(1..=num_fields);
    let mut fields = index::sample(rng, num_fields, k).into_vec();
    fields.sort_unstable();
    Ok(MaskSample { fields })
}
