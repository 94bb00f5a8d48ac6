//! On-disk formats: problem instances in, result documents out.
//!
//! All reals serialize through the shortest decimal representation that
//! round-trips the underlying double exactly (at most 17 significant
//! digits), so reading a result file back reproduces bit-identical values.
//! Unknown fields are rejected on input: a typo in an instance file is a
//! hard error, not a silently ignored key.

use awdist::coupling::BlockContraction;
use awdist::gausslaw::{make_law, ProcessLaw};
use awdist::matcore::Mat;
use awdist::AwError;
use serde::{Deserialize, Serialize};

/// A pair of Gaussian process laws plus solve parameters.
///
/// `A` and `B` are the full `dT x dT` covariance matrices in row-major
/// array-of-rows form. The optional `P` supplies per-step coupling blocks
/// (each `d x d`) to evaluate or interpolate instead of the optimizer; the
/// optional `times` is a default interpolation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub d: usize,
    #[serde(rename = "T")]
    pub time_steps: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub cov_a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub cov_b: Vec<Vec<f64>>,
    pub lambda: f64,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p_blocks: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

impl InstanceFile {
    /// Validates and builds the two process laws.
    pub fn to_laws(&self) -> awdist::Result<(ProcessLaw, ProcessLaw)> {
        let mu = make_law(
            self.d,
            self.time_steps,
            self.a.clone(),
            rows_to_mat(&self.cov_a)?,
        )?;
        let nu = make_law(
            self.d,
            self.time_steps,
            self.b.clone(),
            rows_to_mat(&self.cov_b)?,
        )?;
        Ok((mu, nu))
    }

    /// Parses the optional coupling-parameter override.
    pub fn p_override(&self) -> awdist::Result<Option<BlockContraction>> {
        let Some(blocks) = &self.p_blocks else {
            return Ok(None);
        };
        if blocks.len() != self.time_steps {
            return Err(AwError::DimensionMismatch {
                context: format!(
                    "P override has {} blocks, instance has {} steps",
                    blocks.len(),
                    self.time_steps
                ),
            });
        }
        let mats = blocks.iter().map(|b| rows_to_mat(b)).collect::<awdist::Result<Vec<_>>>()?;
        Ok(Some(BlockContraction::new(self.d, mats)?))
    }
}

/// Additive pieces of the reported value:
/// `value = mean + trace - coupling + entropy`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakdown {
    pub mean: f64,
    pub trace: f64,
    pub coupling: f64,
    pub entropy: f64,
}

/// Classical (non-adapted) companion solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct W2Section {
    pub value: f64,
    pub coupling_covariance: Vec<Vec<f64>>,
}

/// Verification results; present only when an oracle was requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_search_value: Option<f64>,
    /// Absolute gap between the search optimum and the closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_gap: Option<f64>,
    /// Number of search candidates tied with the optimum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_tie_count: Option<u64>,
    /// Tied parameters (embedded block-diagonal matrices, capped list).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_ties: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested_sinkhorn_value: Option<f64>,
    /// Relative gap between backward induction and the closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_relative_gap: Option<f64>,
    pub within_tolerance: bool,
}

/// Full solve/verify output document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub lambda: f64,
    pub zero_mode: String,
    pub value: f64,
    pub value_breakdown: Breakdown,
    #[serde(rename = "S_diag")]
    pub s_diag: Vec<f64>,
    #[serde(rename = "D_lambda_diag")]
    pub d_lambda_diag: Vec<f64>,
    /// Optimal per-step parameter blocks.
    #[serde(rename = "P")]
    pub p_blocks: Vec<Vec<Vec<f64>>>,
    /// Joint covariance of the optimal coupling (`2dT x 2dT`).
    pub coupling_covariance: Vec<Vec<f64>>,
    pub unique: bool,
    pub monge: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w2: Option<W2Section>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

/// Row-major nested arrays to a matrix; rows must be rectangular.
pub fn rows_to_mat(rows: &[Vec<f64>]) -> awdist::Result<Mat> {
    Mat::from_rows(rows)
}

/// Matrix to row-major nested arrays.
pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.to_rows()
}
