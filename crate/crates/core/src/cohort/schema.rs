use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Diagnosis supergroups used as the levels of `HCUPSGDC`.
pub const HCUPSGDC_LEVELS: [&str; 25] = [
    "Acute CVD",
    "AMI",
    "CAP",
    "Cardiac arrest",
    "CHF",
    "Coma; stupor; and brain damage",
    "Endocrine & related conditions",
    "Fluid and electrolyte disorders",
    "GI bleed",
    "Hematologic conditions",
    "Highly malignant cancer",
    "Hip fracture",
    "Ill-defined signs and symptoms",
    "Less severe cancer",
    "Liver and pancreatic disorders",
    "Miscellaneous GI conditions",
    "Miscellaneous neurological conditions",
    "Miscellaneous surgical conditions",
    "Other cardiac conditions",
    "Other infectious conditions",
    "Renal failure (all)",
    "Residual codes",
    "Sepsis",
    "Trauma",
    "UTI",
];

pub const DISCHDISP_LEVELS: [&str; 3] = ["Home", "Home Health", "Skilled Nursing"];

/// Numeric covariates of the readmission layout, in file order.
pub const NUMERIC_COVARIATES: [&str; 10] = [
    "AGE",
    "MALE",
    "DCO_4",
    "HOSP_PRIOR7_CT",
    "HOSP_PRIOR8_30_CT",
    "LOS_30",
    "MEDICARE",
    "LAPS2",
    "LAPS2DC",
    "COPS2",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, levels: &[S]) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|l| l.as_ref().to_string()).collect(),
            },
        }
    }

    /// Number of design-matrix columns this feature expands into.
    pub fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric => 1,
            FeatureKind::Categorical { levels } => levels.len(),
        }
    }
}

/// Ordered covariate list. Categorical features are one-hot expanded into
/// design columns named `NAME[level]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature {}", f.name)));
            }
            if crate::cohort::io::RESERVED_COLUMNS.contains(&f.name.as_str()) {
                return Err(Error::Schema(format!(
                    "feature name {} collides with a reserved column",
                    f.name
                )));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("categorical {} has no levels", f.name)));
                }
            }
        }
        Ok(Schema { features })
    }

    /// The hospitalization covariates: ten numeric columns plus the
    /// one-hot `DISCHDISP` and `HCUPSGDC` categoricals.
    pub fn readmission() -> Self {
        Self::readmission_with_noise(0)
    }

    /// [`Schema::readmission`] followed by `extra` numeric noise columns
    /// `NOISE_1..NOISE_extra`.
    pub fn readmission_with_noise(extra: usize) -> Self {
        let mut features: Vec<FeatureSpec> = NUMERIC_COVARIATES[..7]
            .iter()
            .map(|n| FeatureSpec::numeric(*n))
            .collect();
        features.push(FeatureSpec::categorical("DISCHDISP", &DISCHDISP_LEVELS));
        features.extend(NUMERIC_COVARIATES[7..].iter().map(|n| FeatureSpec::numeric(*n)));
        features.push(FeatureSpec::categorical("HCUPSGDC", &HCUPSGDC_LEVELS));
        features.extend((1..=extra).map(|k| FeatureSpec::numeric(format!("NOISE_{k}"))));
        Schema { features }
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Width of the expanded design vector.
    pub fn n_columns(&self) -> usize {
        self.features.iter().map(FeatureSpec::width).sum()
    }

    /// Offset of a feature's first design column.
    pub fn offset_of(&self, name: &str) -> Option<usize> {
        let mut offset = 0;
        for f in &self.features {
            if f.name == name {
                return Some(offset);
            }
            offset += f.width();
        }
        None
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_columns());
        for f in &self.features {
            match &f.kind {
                FeatureKind::Numeric => names.push(f.name.clone()),
                FeatureKind::Categorical { levels } => {
                    names.extend(levels.iter().map(|l| format!("{}[{}]", f.name, l)))
                }
            }
        }
        names
    }

    /// Design column index for a numeric feature name or a `NAME[level]`
    /// one-hot column.
    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.column_names().iter().position(|c| c == column)
    }

    /// Design column of a single categorical level.
    pub fn level_column(&self, feature: &str, level: &str) -> Result<usize> {
        let spec = self
            .feature(feature)
            .ok_or_else(|| Error::argument(format!("unknown feature {feature}")))?;
        match &spec.kind {
            FeatureKind::Categorical { levels } => {
                let k = levels.iter().position(|l| l == level).ok_or_else(|| {
                    Error::argument(format!("{feature} has no level {level:?}"))
                })?;
                Ok(self.offset_of(feature).unwrap_or(0) + k)
            }
            FeatureKind::Numeric => Err(Error::argument(format!("{feature} is numeric"))),
        }
    }

    /// Stable hex digest over names, kinds and level sets.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update([0u8]);
            match &f.kind {
                FeatureKind::Numeric => h.update(b"N"),
                FeatureKind::Categorical { levels } => {
                    h.update(b"C");
                    for l in levels {
                        h.update(l.as_bytes());
                        h.update([1u8]);
                    }
                }
            }
            h.update([2u8]);
        }
        hex::encode(h.finalize())
    }
}
