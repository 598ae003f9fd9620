//! Machine-readable audit document for a [`SpectralReport`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::format::{system_to_json, to_canonical_string};
use crate::spectral::SpectralReport;
use crate::system::MatrixSystem;

pub const SCHEMA: &str = "repgrowth/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub equivalent_to_twin: bool,
    pub intertwiner_nullity: usize,
    pub intertwiner_gap: f64,
    pub spectral_radius: f64,
    pub multiplicity_one: usize,
    /// Eigenvalue-1 count per slot pair `hat|hat, hat|plain, plain|hat, plain|plain`.
    pub cluster_per_block: [usize; 4],
    pub cluster_eigenvalues: Vec<[f64; 2]>,
    pub jordan_profile: Vec<usize>,
    pub jordan_ranks: Vec<usize>,
    pub kernel_dims: Vec<usize>,
    pub singular_ladders: Vec<Vec<f64>>,
    pub k_zero: f64,
    pub e_zero: Option<f64>,
    pub e_zero_three_term: Option<f64>,
    pub cocycle_residual: Option<f64>,
    pub lambda_defect: Option<f64>,
    pub q_residual: Option<f64>,
    pub w_residual: Option<f64>,
    pub alpha: usize,
    pub verdict: String,
    pub verdict_text: String,
    pub justification: String,
    pub size_two_in_equivalent_case: bool,
    pub peripheral_spectrum: Vec<[f64; 2]>,
    pub normalization_scale: f64,
    pub normalization_residual: f64,
    /// The normalized system, in the input file format.
    pub system: Value,
}

fn pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

impl ReportDocument {
    pub fn new(report: &SpectralReport, normalized: &MatrixSystem) -> Self {
        let d = report.defect.as_ref();
        Self {
            schema: SCHEMA.to_string(),
            equivalent_to_twin: report.equivalent_to_twin,
            intertwiner_nullity: report.intertwiner_nullity,
            intertwiner_gap: report.intertwiner_gap,
            spectral_radius: report.spectral_radius,
            multiplicity_one: report.cluster.count,
            cluster_per_block: report.cluster.per_block,
            cluster_eigenvalues: report.cluster.eigenvalues.iter().map(pair).collect(),
            jordan_profile: report.jordan.sizes.clone(),
            jordan_ranks: report.jordan.ranks.clone(),
            kernel_dims: report.jordan.kernel_dims.clone(),
            singular_ladders: report.jordan.ladders.clone(),
            k_zero: report.k_zero,
            e_zero: d.map(|d| d.e_zero.sum_of_squares),
            e_zero_three_term: d.map(|d| d.e_zero.three_term),
            cocycle_residual: d.map(|d| d.e_zero.cocycle_residual),
            lambda_defect: d.map(|d| d.lambda_defect),
            q_residual: d.map(|d| d.q_residual),
            w_residual: d.and_then(|d| d.w_residual),
            alpha: report.alpha,
            verdict: report.verdict.label().to_string(),
            verdict_text: report.verdict.text().to_string(),
            justification: report.justification.clone(),
            size_two_in_equivalent_case: report.size_two_in_equivalent_case,
            peripheral_spectrum: report.peripheral.iter().map(pair).collect(),
            normalization_scale: report.normalization_scale,
            normalization_residual: report.normalization_residual,
            system: system_to_json(normalized),
        }
    }

    pub fn to_canonical(&self) -> String {
        to_canonical_string(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
        if doc.schema != SCHEMA {
            return Err(Error::Syntax(format!("unsupported schema \"{}\"", doc.schema)));
        }
        Ok(doc)
    }

    pub fn system(&self) -> Result<MatrixSystem> {
        crate::format::system_from_json(&self.system)
    }
}
