//! Least-squares fitting of occupancy models from measured samples.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::profile::{Anchor, OccupancyModel};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} distinct occupancies, got {got}")]
    DegenerateSamples { needed: usize, got: usize },
    #[error("segment count must be at least 1")]
    NoSegments,
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("bad sample file: {0}")]
    Csv(#[from] csv::Error),
    #[error("sample file must have header `occupancy,latency_ms`")]
    Header,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub occupancy: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: OccupancyModel,
    pub rms_residual_ms: f64,
}

/// Reads `occupancy,latency_ms` rows.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<Sample>, FitError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?;
    if headers.len() != 2 || &headers[0] != "occupancy" || &headers[1] != "latency_ms" {
        return Err(FitError::Header);
    }
    rdr.deserialize().map(|r| r.map_err(FitError::from)).collect()
}

/// Knot positions: quantiles of the distinct occupancies.
fn knots(xs: &[f64], segments: usize) -> Vec<f64> {
    let m = xs.len();
    (0..=segments)
        .map(|j| {
            let idx = (j as f64 * (m - 1) as f64 / segments as f64).round() as usize;
            xs[idx]
        })
        .collect()
}

/// Continuous piecewise-linear least-squares fit with `segments` pieces.
/// Residuals below floating-point noise are reported as zero.
pub fn fit_occupancy_model(samples: &[Sample], segments: usize) -> Result<FitResult, FitError> {
    if segments == 0 {
        return Err(FitError::NoSegments);
    }
    if let Some(i) = samples.iter().position(|s| !s.occupancy.is_finite() || !s.latency_ms.is_finite()) {
        return Err(FitError::NonFinite(i));
    }
    let mut xs: Vec<f64> = samples.iter().map(|s| s.occupancy).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < segments + 1 {
        return Err(FitError::DegenerateSamples { needed: segments + 1, got: xs.len() });
    }
    let k = knots(&xs, segments);

    let n = samples.len();
    let mut a = DMatrix::<f64>::zeros(n, k.len());
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.latency_ms));
    for (row, s) in samples.iter().enumerate() {
        let j = k.partition_point(|&x| x <= s.occupancy).clamp(1, segments);
        let t = (s.occupancy - k[j - 1]) / (k[j] - k[j - 1]);
        a[(row, j - 1)] = 1.0 - t;
        a[(row, j)] = t;
    }
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).expect("svd with both factors");
    let model = OccupancyModel {
        anchors: k.iter().zip(coef.iter()).map(|(&occupancy, &latency_ms)| Anchor { occupancy, latency_ms }).collect(),
    };
    let ss: f64 = samples.iter().map(|s| (model.eval(s.occupancy) - s.latency_ms).powi(2)).sum();
    let mut rms = (ss / n as f64).sqrt();
    let scale = samples.iter().map(|s| s.latency_ms.abs()).fold(1.0, f64::max);
    if rms <= 1e-9 * scale {
        rms = 0.0;
    }
    Ok(FitResult { model, rms_residual_ms: rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                Sample { occupancy: x, latency_ms: 2.0 + 10.0 * x }
            })
            .collect()
    }

    #[test]
    fn exact_line_is_reproduced() {
        for segs in 1..4 {
            let fit = fit_occupancy_model(&line(21), segs).unwrap();
            assert_eq!(fit.rms_residual_ms, 0.0);
            for s in line(21) {
                assert!((fit.model.eval(s.occupancy) - s.latency_ms).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn knots_are_quantiles() {
        let fit = fit_occupancy_model(&line(11), 2).unwrap();
        let xs: Vec<f64> = fit.model.anchors.iter().map(|a| a.occupancy).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn degenerate() {
        let one = vec![Sample { occupancy: 0.3, latency_ms: 1.0 }; 5];
        assert!(matches!(fit_occupancy_model(&one, 1), Err(FitError::DegenerateSamples { needed: 2, got: 1 })));
        assert!(matches!(fit_occupancy_model(&line(3), 3), Err(FitError::DegenerateSamples { .. })));
        assert!(matches!(fit_occupancy_model(&line(3), 0), Err(FitError::NoSegments)));
    }

    #[test]
    fn csv_input() {
        let text = "occupancy,latency_ms\n0.0,2\n0.5, 7\n1.0,12\n";
        let samples = read_samples(text.as_bytes()).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[1], Sample { occupancy: 0.5, latency_ms: 7.0 });
        assert!(matches!(read_samples("x,y\n1,2\n".as_bytes()), Err(FitError::Header)));
        assert!(read_samples("occupancy,latency_ms\n1,abc\n".as_bytes()).is_err());
    }
}
