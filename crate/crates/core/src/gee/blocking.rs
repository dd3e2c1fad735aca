use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MblError, Result};
use crate::family::{MeanFamily, MeanModel};
use crate::model::ParamBlock;

/// A named set of coefficient indices updated together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBlock {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Ordered partition of the coefficient indices into update blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingScheme {
    pub blocks: Vec<IndexBlock>,
}

impl BlockingScheme {
    /// Every coefficient in one block (conventional scoring).
    pub fn single(p: usize) -> Self {
        Self { blocks: vec![IndexBlock { name: "all".into(), indices: (0..p).collect() }] }
    }

    pub fn from_param_blocks(blocks: &[ParamBlock]) -> Self {
        Self {
            blocks: blocks.iter().map(|b| IndexBlock { name: b.name.clone(), indices: b.range().collect() }).collect(),
        }
    }

    /// Merges named natural blocks into update blocks, e.g. `[["a", "b"], ["c1"], ...]`.
    pub fn group(natural: &[ParamBlock], groups: &[Vec<&str>]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(groups.len());
        for g in groups {
            let mut indices = Vec::new();
            for name in g {
                let b = natural
                    .iter()
                    .find(|b| b.name == *name)
                    .ok_or_else(|| MblError::Config(format!("unknown block `{name}`")))?;
                indices.extend(b.range());
            }
            blocks.push(IndexBlock { name: g.join("+"), indices });
        }
        Ok(Self { blocks })
    }

    /// Parses explicit index sets: `0,1;2,3;4` (zero-based, `;` between blocks).
    pub fn parse_indices(text: &str) -> Result<Self> {
        let blocks = text
            .split(';')
            .enumerate()
            .map(|(i, part)| {
                let indices = part
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| MblError::Config(format!("block `{part}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(IndexBlock { name: format!("block{}", i + 1), indices })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    /// Checks that the blocks are nonempty, disjoint and cover `0..p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(MblError::Config("blocking scheme has no blocks".into()));
        }
        let mut seen = vec![false; p];
        for b in &self.blocks {
            if b.indices.is_empty() {
                return Err(MblError::Config(format!("block `{}` is empty", b.name)));
            }
            for &i in &b.indices {
                if i >= p {
                    return Err(MblError::Config(format!("index {i} out of range for {p} coefficients")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(MblError::Config(format!("index {i} appears in more than one block")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(MblError::Config(format!("index {i} is not in any block")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Named schemes.
///
/// For the shared-curvature model: B-I is one block, B-II separates the link
/// coefficients from `beta`, B-III gives each response its own block followed
/// by `beta`. For the latent model: B-I is one block, B-II is `(a, b)` then
/// all link coefficients, B-III is `(a, b)` followed by one block per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemePreset {
    #[serde(rename = "B-I")]
    BI,
    #[serde(rename = "B-II")]
    BII,
    #[serde(rename = "B-III")]
    BIII,
}

impl FromStr for SchemePreset {
    type Err = MblError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B-I" | "BI" | "1" => Ok(SchemePreset::BI),
            "B-II" | "BII" | "2" => Ok(SchemePreset::BII),
            "B-III" | "BIII" | "3" => Ok(SchemePreset::BIII),
            other => Err(MblError::Config(format!("unknown blocking preset `{other}`"))),
        }
    }
}

impl SchemePreset {
    pub fn name(self) -> &'static str {
        match self {
            SchemePreset::BI => "B-I",
            SchemePreset::BII => "B-II",
            SchemePreset::BIII => "B-III",
        }
    }

    pub fn scheme(self, family: &MeanFamily) -> BlockingScheme {
        let natural = family.blocks();
        let p = family.n_params();
        match (self, family) {
            (SchemePreset::BI, _) => BlockingScheme::single(p),
            (SchemePreset::BII, MeanFamily::SharedBeta(spec)) => {
                let links: Vec<usize> = (0..spec.beta_index()).collect();
                BlockingScheme {
                    blocks: vec![
                        IndexBlock { name: "links".into(), indices: links },
                        IndexBlock { name: "beta".into(), indices: vec![spec.beta_index()] },
                    ],
                }
            }
            (SchemePreset::BIII, MeanFamily::SharedBeta(_)) => BlockingScheme::from_param_blocks(&natural),
            (SchemePreset::BII, MeanFamily::Latent(spec)) => {
                let split = spec.order_a + spec.order_b + 2;
                BlockingScheme {
                    blocks: vec![
                        IndexBlock { name: "a+b".into(), indices: (0..split).collect() },
                        IndexBlock { name: "links".into(), indices: (split..p).collect() },
                    ],
                }
            }
            (SchemePreset::BIII, MeanFamily::Latent(spec)) => {
                let split = spec.order_a + spec.order_b + 2;
                let mut blocks = vec![IndexBlock { name: "a+b".into(), indices: (0..split).collect() }];
                blocks.extend(
                    natural[2..].iter().map(|b| IndexBlock { name: b.name.clone(), indices: b.range().collect() }),
                );
                BlockingScheme { blocks }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::SharedBetaSpec;
    use crate::model::ModelSpec;

    #[test]
    fn shared_beta_presets() {
        let fam = MeanFamily::SharedBeta(SharedBetaSpec::new(3).unwrap());
        let b1 = SchemePreset::BI.scheme(&fam);
        assert_eq!(b1.len(), 1);
        let b2 = SchemePreset::BII.scheme(&fam);
        assert_eq!(b2.blocks[0].indices, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(b2.blocks[1].indices, vec![6]);
        let b3 = SchemePreset::BIII.scheme(&fam);
        assert_eq!(b3.len(), 4);
        assert_eq!(b3.blocks[1].indices, vec![2, 3]);
        for s in [b1, b2, b3] {
            s.validate(7).unwrap();
        }
    }

    #[test]
    fn latent_b3_has_nine_blocks_for_eight_responses() {
        let fam = MeanFamily::Latent(ModelSpec::uniform(8, 2));
        let s = SchemePreset::BIII.scheme(&fam);
        assert_eq!(s.len(), 9);
        assert_eq!(s.blocks[0].indices, (0..6).collect::<Vec<_>>());
        s.validate(30).unwrap();
        SchemePreset::BII.scheme(&fam).validate(30).unwrap();
    }

    #[test]
    fn validation_errors() {
        assert!(BlockingScheme::parse_indices("0,1;1,2").unwrap().validate(3).is_err());
        assert!(BlockingScheme::parse_indices("0,1").unwrap().validate(3).is_err());
        assert!(BlockingScheme::parse_indices("0,1;5").unwrap().validate(3).is_err());
        assert!(BlockingScheme::parse_indices("0,x").is_err());
        BlockingScheme::parse_indices("2;0,1").unwrap().validate(3).unwrap();
        assert!(BlockingScheme { blocks: vec![] }.validate(0).is_err());
    }

    #[test]
    fn preset_names() {
        assert_eq!("b-ii".parse::<SchemePreset>().unwrap(), SchemePreset::BII);
        assert!("B-IV".parse::<SchemePreset>().is_err());
    }

    #[test]
    fn grouping_by_name() {
        let spec = ModelSpec::uniform(2, 1);
        let s = BlockingScheme::group(&spec.block_layout(), &[vec!["a", "b"], vec!["c1", "c2"]]).unwrap();
        assert_eq!(s.blocks[0].name, "a+b");
        s.validate(8).unwrap();
        assert!(BlockingScheme::group(&spec.block_layout(), &[vec!["z"]]).is_err());
    }
}
