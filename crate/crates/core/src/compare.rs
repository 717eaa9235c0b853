//! Per-pixel agreement between a binarized prediction and a partial labeling
//! (the LTT or a single target).

use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};
use crate::labeling::{CellState, PartialLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgreementClass {
    AgreeObject,
    AgreeNonObject,
    FalsePositive,
    FalseNegative,
    Undetermined,
}

impl AgreementClass {
    pub const ALL: [AgreementClass; 5] = [
        AgreementClass::AgreeObject,
        AgreementClass::AgreeNonObject,
        AgreementClass::FalsePositive,
        AgreementClass::FalseNegative,
        AgreementClass::Undetermined,
    ];

    /// Byte code used in raw payloads: the index in [`AgreementClass::ALL`].
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Overlay colour.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            AgreementClass::AgreeObject => [0, 200, 0],
            AgreementClass::AgreeNonObject => [40, 40, 40],
            AgreementClass::FalsePositive => [220, 0, 0],
            AgreementClass::FalseNegative => [0, 90, 255],
            AgreementClass::Undetermined => [128, 128, 128],
        }
    }

    pub fn from_rgb(rgb: [u8; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.rgb() == rgb)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementCounts {
    pub agree_object: u64,
    pub agree_nonobject: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub undetermined: u64,
}

impl AgreementCounts {
    pub fn tally(classes: &[AgreementClass]) -> Self {
        let mut c = Self::default();
        for class in classes {
            match class {
                AgreementClass::AgreeObject => c.agree_object += 1,
                AgreementClass::AgreeNonObject => c.agree_nonobject += 1,
                AgreementClass::FalsePositive => c.false_positive += 1,
                AgreementClass::FalseNegative => c.false_negative += 1,
                AgreementClass::Undetermined => c.undetermined += 1,
            }
        }
        c
    }
}

pub fn agreement_map(pred: &PartialLabeling, facts: &PartialLabeling) -> Result<Vec<AgreementClass>> {
    facts.check_shape(pred)?;
    pred.cells()
        .iter()
        .zip(facts.cells())
        .map(|(&p, &f)| {
            use CellState::*;
            Ok(match (f, p) {
                (Unknown, _) => AgreementClass::Undetermined,
                (Object, Object) => AgreementClass::AgreeObject,
                (NonObject, NonObject) => AgreementClass::AgreeNonObject,
                (NonObject, Object) => AgreementClass::FalsePositive,
                (Object, NonObject) => AgreementClass::FalseNegative,
                (_, Unknown) => {
                    return Err(MiattError::IndeterminatePrediction {
                        count: pred.len() - pred.fact_count(),
                    })
                }
            })
        })
        .collect()
}
