//! Evaluation toolkit: matching metrics, distance correlation,
//! embedding-distance reports, and the grid experiment driver.

pub mod dcor;
pub mod experiment;
pub mod metrics;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::matrix::euclidean;

pub use dcor::dcor;
pub use experiment::{
    apply_iv_noise, apply_iv_source, run_cell, run_experiment, ExperimentConfig, IvSource,
    ResultRow, ResultTable, SummaryRow,
};
pub use metrics::{metrics, MetricReport};

/// Mean Euclidean distance between same-id vectors of two sets.
pub fn distance_report(
    a: &BTreeMap<String, Vec<f64>>,
    b: &BTreeMap<String, Vec<f64>>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (id, va) in a {
        let Some(vb) = b.get(id) else { continue };
        if va.len() != vb.len() {
            return Err(Error::Shape(format!(
                "id {id}: dimensions {} and {} differ",
                va.len(),
                vb.len()
            )));
        }
        sum += euclidean(va, vb);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input("no shared ids".into()));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        pairs
            .iter()
            .map(|(id, v)| (id.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let a = set(&[("x", vec![1.0, 2.0]), ("y", vec![-1.0, 0.5])]);
        assert_eq!(distance_report(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_in_one_coordinate_gives_one() {
        let a = set(&[("x", vec![1.0, 2.0]), ("y", vec![0.0, 0.0])]);
        let b = set(&[("x", vec![2.0, 2.0]), ("y", vec![0.0, 1.0])]);
        assert_eq!(distance_report(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn only_shared_ids_count() {
        let a = set(&[("x", vec![0.0]), ("only_a", vec![9.0])]);
        let b = set(&[("x", vec![3.0]), ("only_b", vec![-9.0])]);
        assert_eq!(distance_report(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn disjoint_sets_are_an_input_error() {
        let a = set(&[("x", vec![0.0])]);
        let b = set(&[("y", vec![0.0])]);
        assert!(matches!(distance_report(&a, &b), Err(Error::Input(_))));
    }

    #[test]
    fn mixed_dimensions_are_a_shape_error() {
        let a = set(&[("x", vec![0.0, 1.0])]);
        let b = set(&[("x", vec![0.0])]);
        assert!(matches!(distance_report(&a, &b), Err(Error::Shape(_))));
    }
}
