use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CaseRecord, DatasetError, Example, FeatureTable, EXAMPLE_DIM};

/// Age range used for min-max scaling, fitted on training records only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeStats {
    pub min: f64,
    pub max: f64,
}

impl AgeStats {
    /// Fits on the present ages; `None` if no record has an age.
    pub fn fit(ages: impl IntoIterator<Item = Option<f64>>) -> Option<AgeStats> {
        ages.into_iter().flatten().fold(None, |acc, age| {
            Some(match acc {
                None => AgeStats { min: age, max: age },
                Some(s) => AgeStats {
                    min: s.min.min(age),
                    max: s.max.max(age),
                },
            })
        })
    }

    /// Scaled age clamped to `[0, 1]`; missing ages and a degenerate range
    /// map to the midpoint.
    pub fn normalize(&self, age: Option<f64>) -> f64 {
        match age {
            Some(a) if self.max > self.min => ((a - self.min) / (self.max - self.min)).clamp(0.0, 1.0),
            _ => 0.5,
        }
    }
}

/// Joins features to metadata by image id and appends the normalized age
/// and implant flag. Output order follows the feature table.
///
/// With `age_stats = None` the age range is fitted on the joined records and
/// returned; otherwise the given range is applied unchanged.
pub fn assemble_examples(
    meta: &[CaseRecord],
    features: &FeatureTable,
    age_stats: Option<AgeStats>,
) -> Result<(Vec<Example>, AgeStats), DatasetError> {
    let mut by_image: HashMap<&str, &CaseRecord> = HashMap::with_capacity(meta.len());
    for record in meta {
        if by_image.insert(record.image_id.as_str(), record).is_some() {
            return Err(DatasetError::DuplicateImageId(record.image_id.clone()));
        }
    }
    let joined = features
        .rows()
        .iter()
        .map(|row| {
            by_image
                .get(row.image_id.as_str())
                .map(|rec| (row, *rec))
                .ok_or_else(|| DatasetError::UnmatchedImageId(row.image_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let stats = age_stats
        .or_else(|| AgeStats::fit(joined.iter().map(|(_, rec)| rec.age)))
        .unwrap_or(AgeStats { min: 0.0, max: 0.0 });

    let examples = joined
        .into_iter()
        .map(|(row, rec)| {
            let mut x = Vec::with_capacity(EXAMPLE_DIM);
            x.extend(row.values.iter().map(|&v| f64::from(v)));
            x.push(stats.normalize(rec.age));
            x.push(if rec.implant { 1.0 } else { 0.0 });
            Example {
                x,
                label: rec.cancer,
                patient_id: rec.patient_id.clone(),
                image_id: rec.image_id.clone(),
            }
        })
        .collect();
    Ok((examples, stats))
}
