use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Algorithm;
use crate::datagen::DatasetParams;
use crate::djica::IterationRecord;
use crate::linalg::{RealMatrix, RealVector};
use crate::{CapeError, Result};

/// Overall privacy spent by one run. `None` marks an accountant that does
/// not apply (non-private runs, or Gaussian accountants for the pure-DP
/// baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub iterations: usize,
    pub eps_naive: Option<f64>,
    pub delta_naive: Option<f64>,
    pub eps_rdp: Option<f64>,
    pub eps_ma: Option<f64>,
    pub pca_epsilon: Option<f64>,
    pub pca_delta: Option<f64>,
    /// Naive sum of the ICA (RDP, else naive) and PCA budgets.
    pub eps_with_pca: Option<f64>,
}

impl LedgerTotals {
    pub fn nonprivate(iterations: usize) -> Self {
        Self {
            iterations,
            eps_naive: None,
            delta_naive: None,
            eps_rdp: None,
            eps_ma: None,
            pca_epsilon: None,
            pca_delta: None,
            eps_with_pca: None,
        }
    }
}

/// Everything produced by one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub dataset: DatasetParams,
    /// Per-iteration `ε` used for the ICA releases (`None` when non-private).
    pub epsilon_i: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub q_ngi: f64,
    pub history: Vec<IterationRecord>,
    pub ledger: LedgerTotals,
    /// Unmixing matrix acting on the reduced data.
    pub w: RealMatrix,
    pub b: RealVector,
    /// Map from observations to the space `w` acts on.
    pub reduction: RealMatrix,
    pub wall_clock_ms: u64,
    /// SHA-256 of the record with this field empty.
    pub digest: String,
}

impl RunRecord {
    pub fn compute_digest(&self) -> String {
        let mut copy = self.clone();
        copy.digest.clear();
        let json = serde_json::to_vec(&copy).expect("record serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn seal(mut self) -> Self {
        self.digest = self.compute_digest();
        self
    }

    pub fn verify(&self) -> Result<()> {
        let expect = self.compute_digest();
        if expect == self.digest {
            Ok(())
        } else {
            Err(CapeError::Format(format!(
                "record digest mismatch: stored {}, computed {expect}",
                self.digest
            )))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CapeError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a record and checks its digest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rec: Self = serde_json::from_str(&text).map_err(|e| CapeError::Format(e.to_string()))?;
        rec.verify()?;
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> RunRecord {
        RunRecord {
            config_hash: "abc".into(),
            algorithm: Algorithm::CapeDjica,
            seed: 1,
            dataset: DatasetParams::default(),
            epsilon_i: Some(0.1 + 0.2),
            iterations: 1,
            converged: false,
            q_ngi: 0.25,
            history: vec![IterationRecord {
                iteration: 1,
                delta_w_norm: 0.5,
                delta_b_norm: 0.1,
                rho: 0.01,
                objective: None,
            }],
            ledger: LedgerTotals::nonprivate(1),
            w: RealMatrix::identity(2, 2),
            b: RealVector::zeros(2),
            reduction: RealMatrix::from_element(2, 4, 1.0 / 3.0),
            wall_clock_ms: 5,
            digest: String::new(),
        }
        .seal()
    }

    #[test]
    fn save_load_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let rec = record();
        rec.save(&path).unwrap();
        let back = RunRecord::load(&path).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn tampering_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let mut rec = record();
        rec.q_ngi = 0.01;
        rec.save(&path).unwrap();
        assert!(matches!(RunRecord::load(&path), Err(CapeError::Format(_))));
    }
}
