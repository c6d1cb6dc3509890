//! JSON file formats for states and channels.
//!
//! A state file is `{"dims": [dA, dB, dK], "matrix": {...}}`. A channel file is
//! `{"dims": [...], "kind": ..., "blocks": {...}}` where `kind` is one of
//! `structured`, `raw`, `product`, `computation`. Matrices use
//! [`MatrixJson`]. Everything is re-validated on load.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ComputationSpec, KrausChannel, StructuredChannelSpec};
use crate::error::{Error, Result};
use crate::fidelity;
use crate::linalg::{ComplexMatrix, MatrixJson};
use crate::space::{DensityOperator, SpaceDecomposition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub dims: [usize; 3],
    pub matrix: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "blocks", rename_all = "lowercase")]
pub enum ChannelBlocks {
    Structured {
        c: Vec<MatrixJson>,
        d: Vec<MatrixJson>,
        g: Vec<MatrixJson>,
    },
    Raw {
        kraus: Vec<MatrixJson>,
    },
    Product {
        ea: Vec<MatrixJson>,
        eb: Vec<MatrixJson>,
        ek: Vec<MatrixJson>,
    },
    Computation {
        fa: Vec<MatrixJson>,
        c: Vec<MatrixJson>,
        d: Vec<Vec<MatrixJson>>,
        g: Vec<Vec<MatrixJson>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub dims: [usize; 3],
    #[serde(flatten)]
    pub blocks: ChannelBlocks,
}

/// A validated channel together with the block data it was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelData {
    Structured(StructuredChannelSpec),
    Raw(KrausChannel),
    Product(KrausChannel),
    Computation(ComputationSpec),
}

impl ChannelData {
    pub fn kind(&self) -> &'static str {
        match self {
            ChannelData::Structured(_) => "structured",
            ChannelData::Raw(_) => "raw",
            ChannelData::Product(_) => "product",
            ChannelData::Computation(_) => "computation",
        }
    }

    pub fn kraus_channel(&self) -> KrausChannel {
        match self {
            ChannelData::Structured(s) => channel::assemble(s),
            ChannelData::Raw(k) | ChannelData::Product(k) => k.clone(),
            ChannelData::Computation(c) => channel::assemble_computation(c),
        }
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        match self {
            ChannelData::Structured(s) => s.decomposition(),
            ChannelData::Raw(k) | ChannelData::Product(k) => k.decomposition(),
            ChannelData::Computation(c) => c.decomposition(),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

fn decomposition(dims: [usize; 3]) -> Result<SpaceDecomposition> {
    SpaceDecomposition::new(dims[0], dims[1], dims[2])
}

fn matrix(j: &MatrixJson) -> Result<ComplexMatrix> {
    ComplexMatrix::try_from(j)
}

fn matrices(js: &[MatrixJson]) -> Result<Vec<ComplexMatrix>> {
    js.iter().map(matrix).collect()
}

fn nested(js: &[Vec<MatrixJson>]) -> Result<Vec<Vec<ComplexMatrix>>> {
    js.iter().map(|row| matrices(row)).collect()
}

fn to_json(ms: &[ComplexMatrix]) -> Vec<MatrixJson> {
    ms.iter().map(MatrixJson::from).collect()
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn state_from_json(text: &str) -> Result<DensityOperator> {
    let file: StateFile = parse(text)?;
    let d = decomposition(file.dims)?;
    DensityOperator::new(d, matrix(&file.matrix)?)
}

pub fn state_to_json(rho: &DensityOperator) -> String {
    pretty(&StateFile {
        dims: rho.decomposition().dims(),
        matrix: MatrixJson::from(rho.matrix()),
    })
}

pub fn channel_from_json(text: &str) -> Result<ChannelData> {
    let file: ChannelFile = parse(text)?;
    let d = decomposition(file.dims)?;
    Ok(match &file.blocks {
        ChannelBlocks::Structured { c, d: dd, g } => {
            ChannelData::Structured(StructuredChannelSpec::new(d, matrices(c)?, matrices(dd)?, matrices(g)?)?)
        }
        ChannelBlocks::Raw { kraus } => ChannelData::Raw(KrausChannel::new(d, matrices(kraus)?)?),
        ChannelBlocks::Product { ea, eb, ek } => {
            ChannelData::Product(channel::assemble_local_product(d, &matrices(ea)?, &matrices(eb)?, &matrices(ek)?)?)
        }
        ChannelBlocks::Computation { fa, c, d: dd, g } => ChannelData::Computation(ComputationSpec::new(
            d,
            matrices(fa)?,
            matrices(c)?,
            nested(dd)?,
            nested(g)?,
        )?),
    })
}

pub fn structured_to_json(spec: &StructuredChannelSpec) -> String {
    pretty(&ChannelFile {
        dims: spec.decomposition().dims(),
        blocks: ChannelBlocks::Structured {
            c: to_json(spec.c()),
            d: to_json(spec.d()),
            g: to_json(spec.g()),
        },
    })
}

pub fn raw_to_json(ch: &KrausChannel) -> String {
    pretty(&ChannelFile {
        dims: ch.decomposition().dims(),
        blocks: ChannelBlocks::Raw {
            kraus: to_json(ch.kraus()),
        },
    })
}

pub fn product_to_json(
    d: SpaceDecomposition,
    ea: &[ComplexMatrix],
    eb: &[ComplexMatrix],
    ek: &[ComplexMatrix],
) -> String {
    pretty(&ChannelFile {
        dims: d.dims(),
        blocks: ChannelBlocks::Product {
            ea: to_json(ea),
            eb: to_json(eb),
            ek: to_json(ek),
        },
    })
}

pub fn computation_to_json(spec: &ComputationSpec) -> String {
    let rows = |v: &[Vec<ComplexMatrix>]| v.iter().map(|r| to_json(r)).collect();
    pretty(&ChannelFile {
        dims: spec.decomposition().dims(),
        blocks: ChannelBlocks::Computation {
            fa: to_json(spec.fa()),
            c: to_json(spec.c()),
            d: rows(spec.d()),
            g: rows(spec.g()),
        },
    })
}

/// Round to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().expect("formatted float parses")
}

/// `{"FA", "fA_term", "K_term", "angle"}` rounded to 12 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaRecord {
    #[serde(rename = "FA")]
    pub fa: f64,
    #[serde(rename = "fA_term")]
    pub code_term: f64,
    #[serde(rename = "K_term")]
    pub k_term: f64,
    pub angle: f64,
}

pub fn fa_record(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<FaRecord> {
    let terms = fidelity::subsystem_fidelity_terms(tau, upsilon)?;
    let angle = fidelity::angle_subsystem(tau, upsilon)?;
    Ok(FaRecord {
        fa: round_sig(terms.value, 12),
        code_term: round_sig(terms.code_term, 12),
        k_term: round_sig(terms.k_term, 12),
        angle: round_sig(angle, 12),
    })
}
