//! Segmentation targets: skull-strip simulation, lesion dropout and the
//! projection onto the predicted label set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::volume::LabelVolume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkullStrip {
    None,
    /// Extracerebral labels and CSF removed.
    Perfect,
    /// Extracerebral labels removed, CSF kept.
    Imperfect,
}

impl SkullStrip {
    /// Branch for a uniform draw `u` in [0, 1).
    pub fn from_uniform(u: f64) -> Self {
        if u < 0.5 {
            SkullStrip::None
        } else if u < 0.75 {
            SkullStrip::Perfect
        } else {
            SkullStrip::Imperfect
        }
    }
}

/// Applies a given skull-strip branch.
pub fn apply_skullstrip(labels: &LabelVolume, schema: &LabelSchema, branch: SkullStrip) -> LabelVolume {
    match branch {
        SkullStrip::None => labels.clone(),
        SkullStrip::Perfect => {
            labels.map(|l| if schema.is_extracerebral(l) || schema.is_csf(l) { 0 } else { l })
        }
        SkullStrip::Imperfect => labels.map(|l| if schema.is_extracerebral(l) { 0 } else { l }),
    }
}

/// No stripping with probability 1/2, perfect and imperfect stripping with
/// probability 1/4 each.
pub fn simulate_skullstrip<R: Rng + ?Sized>(
    labels: &LabelVolume,
    schema: &LabelSchema,
    rng: &mut R,
) -> (LabelVolume, SkullStrip) {
    let branch = SkullStrip::from_uniform(rng.random::<f64>());
    (apply_skullstrip(labels, schema, branch), branch)
}

/// Replaces every lesion voxel by its host label.
pub fn drop_lesions(labels: &LabelVolume, schema: &LabelSchema) -> Result<LabelVolume> {
    for l in labels.labels() {
        if schema.entry(l).is_some_and(|e| e.lesion) && schema.lesion_host(l).is_none() {
            return Err(Error::config("schema", format!("lesion label {l} has no host label")));
        }
    }
    Ok(labels.map(|l| schema.lesion_host(l).unwrap_or(l)))
}

/// Keeps lesion labels with probability 1/2. Returns whether they were kept.
pub fn lesion_dropout<R: Rng + ?Sized>(
    labels: &LabelVolume,
    schema: &LabelSchema,
    rng: &mut R,
) -> Result<(LabelVolume, bool)> {
    let keep = rng.random::<f64>() < 0.5;
    if keep {
        Ok((labels.clone(), true))
    } else {
        Ok((drop_lesions(labels, schema)?, false))
    }
}

/// Maps sub-labels to their parents and resets every label that is not
/// predicted to background.
pub fn build_target(labels: &LabelVolume, schema: &LabelSchema) -> LabelVolume {
    labels.map(|l| schema.target_of(l).unwrap_or(0))
}
