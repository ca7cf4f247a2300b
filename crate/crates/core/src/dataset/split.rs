use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;

use super::{CaseRecord, DatasetError, Example};
use crate::rng;

/// Anything that belongs to a patient and carries a binary label.
pub trait PatientKeyed {
    fn patient_id(&self) -> &str;
    fn is_positive(&self) -> bool;
}

impl PatientKeyed for Example {
    fn patient_id(&self) -> &str {
        &self.patient_id
    }

    fn is_positive(&self) -> bool {
        self.label
    }
}

impl PatientKeyed for CaseRecord {
    fn patient_id(&self) -> &str {
        &self.patient_id
    }

    fn is_positive(&self) -> bool {
        self.cancer
    }
}

/// Splits items into `(train, validation)` by patient.
///
/// A patient counts as positive if any of their items is. Positive and
/// negative patients are shuffled separately and the validation quota
/// `round(val_fraction · patients)` is shared between them by largest
/// remainder, so both sides keep roughly the global positive rate. Both
/// sides always receive at least one patient. Item order is preserved.
pub fn split_by_patient<T: PatientKeyed>(
    items: Vec<T>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(val_fraction));
    }
    let mut patients: BTreeMap<&str, bool> = BTreeMap::new();
    for item in &items {
        *patients.entry(item.patient_id()).or_insert(false) |= item.is_positive();
    }
    let n = patients.len();
    if n < 2 {
        return Err(DatasetError::TooFewPatients(n));
    }
    let (mut pos, mut neg): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
    for (id, positive) in &patients {
        if *positive {
            pos.push(id);
        } else {
            neg.push(id);
        }
    }
    let mut rng = rng::stream(seed, rng::SPLIT);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let ideal_pos = n_val as f64 * pos.len() as f64 / n as f64;
    let ideal_neg = n_val as f64 - ideal_pos;
    let mut k_pos = ideal_pos.floor() as usize;
    let mut k_neg = ideal_neg.floor() as usize;
    while k_pos + k_neg < n_val {
        let pos_room = k_pos < pos.len();
        let neg_room = k_neg < neg.len();
        let prefer_pos = ideal_pos - k_pos as f64 > ideal_neg - k_neg as f64;
        if pos_room && (prefer_pos || !neg_room) {
            k_pos += 1;
        } else {
            k_neg += 1;
        }
    }

    let val_patients: HashSet<String> = pos[..k_pos]
        .iter()
        .chain(&neg[..k_neg])
        .map(|s| s.to_string())
        .collect();
    Ok(items
        .into_iter()
        .partition(|item| !val_patients.contains(item.patient_id())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Item {
        patient: String,
        positive: bool,
    }

    impl PatientKeyed for Item {
        fn patient_id(&self) -> &str {
            &self.patient
        }

        fn is_positive(&self) -> bool {
            self.positive
        }
    }

    fn items(patients: usize, per_patient: usize, positive_every: usize) -> Vec<Item> {
        (0..patients)
            .flat_map(|p| {
                (0..per_patient).map(move |i| Item {
                    patient: format!("p{p:03}"),
                    positive: positive_every > 0 && p % positive_every == 0 && i == 0,
                })
            })
            .collect()
    }

    fn patient_set(v: &[Item]) -> HashSet<String> {
        v.iter().map(|i| i.patient.clone()).collect()
    }

    #[test]
    fn ten_patients_thirty_percent() {
        let (train, val) = split_by_patient(items(10, 1, 3), 0.3, 11).unwrap();
        assert_eq!(patient_set(&val).len(), 3);
        assert_eq!(train.len(), 7);
        let (_, again) = split_by_patient(items(10, 1, 3), 0.3, 11).unwrap();
        assert_eq!(val, again);
    }

    #[test]
    fn patients_never_straddle() {
        let (train, val) = split_by_patient(items(25, 4, 5), 0.2, 3).unwrap();
        assert!(patient_set(&train).is_disjoint(&patient_set(&val)));
        assert_eq!(train.len() + val.len(), 100);
    }

    #[test]
    fn single_patient_is_rejected() {
        assert!(matches!(
            split_by_patient(items(1, 4, 1), 0.5, 0),
            Err(DatasetError::TooFewPatients(1))
        ));
    }

    #[test]
    fn fraction_bounds() {
        assert!(split_by_patient(items(4, 1, 2), 0.0, 0).is_err());
        assert!(split_by_patient(items(4, 1, 2), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn positive_rate_is_balanced(
            patients in 20usize..200,
            positive_every in 2usize..6,
            frac in 0.15f64..0.5,
            seed in any::<u64>(),
        ) {
            let all = items(patients, 2, positive_every);
            let global = all.iter().filter(|i| i.positive).count() as f64 / patients as f64;
            // Largest-remainder allocation is off by less than one patient, so
            // the ±50% band needs at least two expected positives per side.
            let n_val = (frac * patients as f64).round();
            prop_assume!(n_val * global >= 2.0);
            let (train, val) = split_by_patient(all, frac, seed).unwrap();
            for side in [&train, &val] {
                let ps = patient_set(side);
                let pos = side.iter().filter(|i| i.positive).map(|i| &i.patient).collect::<HashSet<_>>().len();
                let rate = pos as f64 / ps.len() as f64;
                prop_assert!((rate - global).abs() <= 0.5 * global, "rate {rate} vs {global}");
            }
        }
    }
}
