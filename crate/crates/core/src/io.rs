//! Ensemble files: a little-endian f64 matrix (one row per path) plus a
//! JSON sidecar describing how it was produced.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{Grid, HurstParam, PathEnsemble, Regularization, SamplerTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub h: HurstParam,
    pub n: usize,
    pub span: f64,
    pub count: usize,
    pub seed: u64,
    pub sampler_tag: SamplerTag,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_variant: Option<String>,
}

impl EnsembleSidecar {
    pub fn describe(ensemble: &PathEnsemble) -> Self {
        EnsembleSidecar {
            h: ensemble.h,
            n: ensemble.grid.len(),
            span: ensemble.grid.span(),
            count: ensemble.len(),
            seed: ensemble.seed,
            sampler_tag: ensemble.sampler,
            regularization: ensemble.regularization.clone(),
            series_terms: None,
            series_variant: None,
        }
    }
}

pub fn ensemble_bytes(ensemble: &PathEnsemble) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * ensemble.len() * ensemble.grid.len());
    for p in &ensemble.paths {
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_ensemble(ensemble: &PathEnsemble, sidecar: &EnsembleSidecar, bin: &Path, json: &Path) -> Result<()> {
    fs::write(bin, ensemble_bytes(ensemble))?;
    fs::write(json, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

pub fn read_ensemble(bin: &Path, json: &Path) -> Result<(PathEnsemble, EnsembleSidecar)> {
    let sidecar: EnsembleSidecar = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    let n = sidecar.n;
    if bytes.len() != 8 * n * sidecar.count {
        return Err(Error::Format(format!(
            "{} holds {} bytes, sidecar promises {} paths of {} points",
            bin.display(),
            bytes.len(),
            sidecar.count,
            n
        )));
    }
    let values: Vec<Vec<f64>> = bytes
        .chunks_exact(8 * n)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect();
    let grid = Grid::with_span(n, sidecar.span)?;
    let ensemble = PathEnsemble::new(
        grid,
        sidecar.h,
        sidecar.seed,
        sidecar.sampler_tag,
        values,
        sidecar.regularization.clone(),
    )?;
    Ok((ensemble, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::sample_circulant;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = sample_circulant(HurstParam::new(0.3).unwrap(), Grid::new(17).unwrap(), 4, 8).unwrap();
        let side = EnsembleSidecar::describe(&e);
        let (b, j) = (dir.path().join("e.bin"), dir.path().join("e.json"));
        write_ensemble(&e, &side, &b, &j).unwrap();
        let (back, side2) = read_ensemble(&b, &j).unwrap();
        assert_eq!(back, e);
        assert_eq!(side2, side);
        fs::write(&b, [0u8; 12]).unwrap();
        assert!(matches!(read_ensemble(&b, &j), Err(Error::Format(_))));
    }
}
