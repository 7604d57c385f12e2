//! Region accuracy, point error and confusion matrices.

use fgl_core::dataset::Dataset;
use fgl_core::geometry::Vec3;
use fgl_core::topology::{region_centroid, Topology};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub region_accuracy_pct: f64,
    pub mean_point_error_m: f64,
    /// `None` for classes without test sets.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`, indexed by region id.
    pub confusion: Vec<Vec<u64>>,
    pub train_time_s: Option<f64>,
    /// Test sets without detections, scored as a heart prediction.
    pub undetected: usize,
}

/// Distance from the predicted region's centroid to the true event position.
pub fn point_error(t: &Topology, predicted_region: usize, true_position_m: Vec3) -> Result<f64> {
    let c = region_centroid(t, predicted_region)?;
    Ok(c.iter().zip(&true_position_m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// Scores `predict` on every test set. Sets without usable values are never
/// passed to `predict`; they are attributed to the heart region, so their point
/// error is the distance from the heart centroid.
pub fn evaluate<F>(predict: F, test: &Dataset, t: &Topology) -> Result<Metrics>
where
    F: Fn(&[f64]) -> fgl_models::Result<usize>,
{
    if test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let n = t.region_ids().last().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0u64; n]; n];
    let mut err_sum = 0.0;
    let mut undetected = 0;
    for s in &test.sets {
        if s.label >= n {
            return Err(Error::Evaluation(format!("test label {} is not a region", s.label)));
        }
        let predicted = if s.is_usable() {
            predict(&s.values)?
        } else {
            undetected += 1;
            t.heart_id
        };
        if predicted >= n {
            return Err(fgl_core::Error::UnknownRegion(predicted).into());
        }
        err_sum += point_error(t, predicted, s.event_position_m)?;
        confusion[s.label][predicted] += 1;
    }
    let total = test.len() as f64;
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let count: u64 = row.iter().sum();
            (count > 0).then(|| 100.0 * row[i] as f64 / count as f64)
        })
        .collect();
    Ok(Metrics {
        region_accuracy_pct: 100.0 * correct as f64 / total,
        mean_point_error_m: err_sum / total,
        per_class_accuracy,
        confusion,
        train_time_s: None,
        undetected,
    })
}

impl Metrics {
    pub fn confusion_csv(&self) -> String {
        let n = self.confusion.len();
        let mut out = String::from("true");
        for j in 0..n {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&i.to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgl_core::topology::default_topology;

    #[test]
    fn point_error_is_centroid_distance() {
        let t = default_topology(16, 0).unwrap();
        let c = region_centroid(&t, 3).unwrap();
        assert_eq!(point_error(&t, 3, c).unwrap(), 0.0);
        let up = [c[0], c[1] + 0.1, c[2]];
        assert!((point_error(&t, 3, up).unwrap() - 0.1).abs() < 1e-12);
        assert!(point_error(&t, 99, c).is_err());
    }
}
