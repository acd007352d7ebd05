use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gait::GaitCycle;
use crate::seed::derive_seed;

const SPLIT_TAG: u64 = 0x5350_4C54;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Sorted by cycle id.
    pub train: Vec<GaitCycle>,
    pub val: Vec<GaitCycle>,
    /// Users kept out of validation for lack of cycles.
    pub warnings: Vec<String>,
}

/// Per-user stratified split. Each user contributes
/// `round(val_fraction · n)` cycles to validation (at least one, at most
/// `n − 1`), chosen by a seeded hash of the cycle id, so the result does
/// not depend on input order. Users with fewer than two cycles go to
/// training only.
pub fn split_dataset(cycles: &[GaitCycle], fractions: (f64, f64), seed: u64) -> Result<Split> {
    let (train_frac, val_frac) = fractions;
    if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&val_frac) || (train_frac + val_frac - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split fractions {train_frac} + {val_frac} must be in [0, 1] and sum to 1")));
    }
    let mut by_user: BTreeMap<u32, Vec<&GaitCycle>> = BTreeMap::new();
    for c in cycles {
        by_user.entry(c.user_id).or_default().push(c);
    }
    let mut split = Split { train: Vec::new(), val: Vec::new(), warnings: Vec::new() };
    for (user, mut group) in by_user {
        group.sort_by_key(|c| c.id);
        if let Some(w) = group.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Data(format!("duplicate cycle id {:#x}", w[0].id)));
        }
        let n = group.len();
        if n < 2 {
            split.warnings.push(format!("user {user} has {n} cycle(s); placed in training only"));
            split.train.extend(group.into_iter().cloned());
            continue;
        }
        let n_val = ((val_frac * n as f64).round() as usize).clamp(1, n - 1);
        let mut keyed: Vec<(u64, &GaitCycle)> = group.into_iter().map(|c| (derive_seed(seed, &[SPLIT_TAG, c.id]), c)).collect();
        keyed.sort_by_key(|&(k, c)| (k, c.id));
        split.val.extend(keyed[..n_val].iter().map(|(_, c)| (*c).clone()));
        split.train.extend(keyed[n_val..].iter().map(|(_, c)| (*c).clone()));
    }
    split.train.sort_by_key(|c| c.id);
    split.val.sort_by_key(|c| c.id);
    Ok(split)
}
