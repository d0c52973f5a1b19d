//! Method dispatch shared by `solve` and `bench`.

use qcrf::{
    enumerate_optimum, exact_binary, icm_pixel, icm_superpixel, mean_field, solve_binary,
    solve_multilabel, Labeling, SuperpixelPartition, UnaryCosts, WeightTable,
};

use crate::config::{Method, SolverConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub labeling: Labeling,
    pub energy: f64,
}

fn non_increasing(trace: &[f64], what: &str) -> Result<()> {
    if let Some(i) = trace.windows(2).position(|t| t[1] > t[0]) {
        return Err(CliError::Invariant(format!(
            "{what} energy rose from {} to {} at step {}",
            trace[i],
            trace[i + 1],
            i + 1
        )));
    }
    Ok(())
}

/// Runs one method. ICM variants start from the unary argmin.
pub fn run_method(
    method: Method,
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    solver: &SolverConfig,
) -> Result<Outcome> {
    let (labeling, energy) = match method {
        Method::Expansion if unary.num_labels() == 2 => {
            let sol = solve_binary(unary, partition, weights, &solver.binary())?;
            non_increasing(&sol.trace, "binary expansion")?;
            (sol.labeling, sol.energy)
        }
        Method::Expansion => {
            let sol = solve_multilabel(unary, partition, weights, &solver.multilabel())?;
            non_increasing(&sol.trace, "multi-label expansion")?;
            (sol.labeling, sol.energy)
        }
        Method::Meanfield => {
            let r = mean_field(unary, partition, weights, &solver.mean_field())?;
            (r.labeling, r.energy)
        }
        Method::Icm => {
            let r = icm_pixel(unary, partition, weights, &unary.argmin_labeling(), &solver.icm())?;
            non_increasing(&r.trace, "pixel ICM")?;
            (r.labeling, r.energy)
        }
        Method::Spicm => {
            let init = unary.argmin_labeling();
            let r = icm_superpixel(unary, partition, weights, &init, &solver.icm())?;
            non_increasing(&r.trace, "superpixel ICM")?;
            (r.labeling, r.energy)
        }
        Method::Exact if unary.num_labels() == 2 => exact_binary(unary, partition, weights)?,
        Method::Exact => enumerate_optimum(unary, partition, weights)?,
    };
    Ok(Outcome { labeling, energy })
}
