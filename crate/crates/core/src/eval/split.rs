use serde::{Deserialize, Serialize};

use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Leave-one-subject-out partition of an [`EpochSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub held_out_subject: u8,
    pub train: EpochSet,
    pub validation: EpochSet,
    pub within_population: EpochSet,
    pub cross_population: EpochSet,
    pub indices: SplitIndices,
}

/// Trial indices into the source set, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub within_population: Vec<usize>,
    pub cross_population: Vec<usize>,
}

/// `floor(frac * n)`, raised to 1 when `n >= 2` so both sides stay non-empty.
fn take_count(n: usize, frac: f64) -> usize {
    let k = (frac * n as f64).floor() as usize;
    if k == 0 && n >= 2 {
        1
    } else {
        k
    }
}

/// Splits `pool` per class, moving a shuffled `frac` of each class into the
/// first returned list.
fn stratified(set: &EpochSet, pool: &[usize], frac: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut taken = Vec::new();
    let mut rest = Vec::new();
    for class in 0..set.classes {
        let mut members: Vec<usize> = pool.iter().copied().filter(|&i| set.labels[i] as usize == class).collect();
        rng::shuffle(&mut members, rng);
        let k = take_count(members.len(), frac);
        taken.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    taken.sort_unstable();
    rest.sort_unstable();
    (taken, rest)
}

pub fn loso_partition(
    data: &EpochSet,
    held_out_subject: u8,
    within_frac: f64,
    val_frac: f64,
    rng: &mut Rng,
) -> Result<Split> {
    for (name, f) in [("within_frac", within_frac), ("val_frac", val_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let subjects = data.subjects();
    if subjects.len() < 2 {
        return Err(Error::data("leave-one-subject-out needs at least two subjects"));
    }
    if !subjects.contains(&held_out_subject) {
        return Err(Error::data(format!("subject {held_out_subject} not present")));
    }
    for &s in &subjects {
        for class in 0..data.classes {
            let present = (0..data.len()).any(|i| data.subject_ids[i] == s && data.labels[i] as usize == class);
            if !present {
                return Err(Error::data(format!("subject {s} has no trials of class {class}")));
            }
        }
    }

    let cross: Vec<usize> = (0..data.len()).filter(|&i| data.subject_ids[i] == held_out_subject).collect();
    let mut within = Vec::new();
    let mut pool = Vec::new();
    for &s in subjects.iter().filter(|&&s| s != held_out_subject) {
        let own: Vec<usize> = (0..data.len()).filter(|&i| data.subject_ids[i] == s).collect();
        let (w, rest) = stratified(data, &own, within_frac, rng);
        within.extend(w);
        pool.extend(rest);
    }
    within.sort_unstable();
    pool.sort_unstable();
    let (validation, train) = stratified(data, &pool, val_frac, rng);

    let indices = SplitIndices {
        train,
        validation,
        within_population: within,
        cross_population: cross,
    };
    Ok(Split {
        held_out_subject,
        train: data.subset(&indices.train)?,
        validation: data.subset(&indices.validation)?,
        within_population: data.subset(&indices.within_population)?,
        cross_population: data.subset(&indices.cross_population)?,
        indices,
    })
}
