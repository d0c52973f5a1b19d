//! Energy-gap sweeps over the pairwise strength `λ`.
//!
//! Every `(instance, method, λ)` cell yields one row. For two labels the gap
//! is measured against the pixel-level graph-cut optimum; otherwise against
//! the lowest energy any method reached on that `(instance, λ)`. A failing
//! method leaves an error marker in its row and the sweep moves on.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qcrf::{build_weights, exact_binary, EnergyParams, SuperpixelPartition, UnaryCosts};
use serde::{Deserialize, Serialize};

use crate::config::{Method, SolverConfig};
use crate::error::Result;
use crate::pipeline::run_method;
use crate::synth::{generate, SynthSpec};

pub const CSV_HEADER: [&str; 6] = ["instance", "method", "lambda", "energy", "gap", "wall_time_seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub instances: usize,
    /// Instance `i` is generated from seed `seed + i`.
    pub seed: u64,
    pub synth: SynthSpec,
    pub params: crate::config::ParamsConfig,
    pub methods: Vec<Method>,
    pub solver: SolverConfig,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            seed: 0,
            synth: SynthSpec::default(),
            params: binary_bench_params(SynthSpec::default().width * SynthSpec::default().height).into(),
            methods: vec![Method::Expansion, Method::Meanfield, Method::Icm, Method::Spicm],
            solver: SolverConfig::default(),
            threads: 0,
        }
    }
}

/// Weight parameters for the synthetic sweeps. The kernels are narrowed to
/// the image scale and both amplitudes shrink with the pixel count, so at
/// `λ ≈ 1` a pixel's total pairwise pull is comparable to its unary margin.
pub fn binary_bench_params(num_pixels: usize) -> EnergyParams {
    let amplitude = 32.0 / num_pixels as f64;
    EnergyParams {
        lambda1: amplitude,
        lambda2: amplitude,
        beta1: 10.0,
        beta2: 16.0,
        beta3: 13.0,
        smoothness: 1.0,
    }
}

/// A named problem: unaries over a partition with its statistics.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub name: String,
    pub unary: UnaryCosts,
    pub partition: SuperpixelPartition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance: String,
    pub method: Method,
    pub lambda: f64,
    /// Energy, or the error that prevented one.
    pub energy: std::result::Result<f64, String>,
    /// Relative gap; `None` when no reference energy exists.
    pub gap: Option<f64>,
    pub wall_time_seconds: f64,
}

/// `(E − E*) / E*`; zero when both vanish, infinite for a positive `E` over
/// a zero reference.
pub fn relative_gap(energy: f64, reference: f64) -> f64 {
    let diff = energy - reference;
    if reference == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY * diff.signum()
        }
    } else {
        diff / reference.abs()
    }
}

pub fn synthetic_instances(config: &BenchConfig) -> Result<Vec<BenchInstance>> {
    (0..config.instances)
        .map(|i| {
            let seed = config.seed + i as u64;
            let inst = generate(&config.synth, seed)?;
            Ok(BenchInstance {
                name: format!("synth-{seed}"),
                unary: inst.unary,
                partition: inst.partition,
            })
        })
        .collect()
}

fn sweep_instance(
    inst: &BenchInstance,
    params: &EnergyParams,
    lambdas: &[f64],
    methods: &[Method],
    solver: &SolverConfig,
) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    let base = match build_weights(&inst.partition, params) {
        Ok(w) => w,
        Err(e) => {
            for &lambda in lambdas {
                for &method in methods {
                    rows.push(BenchRow {
                        instance: inst.name.clone(),
                        method,
                        lambda,
                        energy: Err(e.to_string()),
                        gap: None,
                        wall_time_seconds: 0.0,
                    });
                }
            }
            return rows;
        }
    };
    for &lambda in lambdas {
        let weights = base.scaled(lambda);
        let mut cell: Vec<BenchRow> = methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let energy = run_method(method, &inst.unary, &inst.partition, &weights, solver)
                    .map(|o| o.energy)
                    .map_err(|e| e.to_string());
                BenchRow {
                    instance: inst.name.clone(),
                    method,
                    lambda,
                    energy,
                    gap: None,
                    wall_time_seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect();
        let reference = if inst.unary.num_labels() == 2 {
            let from_rows = cell
                .iter()
                .find(|r| r.method == Method::Exact)
                .and_then(|r| r.energy.clone().ok());
            from_rows.or_else(|| exact_binary(&inst.unary, &inst.partition, &weights).ok().map(|r| r.1))
        } else {
            cell.iter().filter_map(|r| r.energy.clone().ok()).min_by(f64::total_cmp)
        };
        if let Some(best) = reference {
            for row in &mut cell {
                row.gap = row.energy.as_ref().ok().map(|&e| relative_gap(e, best));
            }
        }
        rows.extend(cell);
    }
    rows
}

/// Runs every method at every `λ` on every instance. Instances are spread
/// over worker threads; rows come back in (instance, λ, method) order.
pub fn bench_sweep(
    instances: &[BenchInstance],
    params: &EnergyParams,
    lambdas: &[f64],
    methods: &[Method],
    solver: &SolverConfig,
    threads: usize,
) -> Vec<BenchRow> {
    let threads = match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(instances.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Vec<BenchRow>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(inst) = instances.get(i) else { break };
                let rows = sweep_instance(inst, params, lambdas, methods, solver);
                results.lock().expect("no poisoned workers").push((i, rows));
            });
        }
    });
    let mut results = results.into_inner().expect("no poisoned workers");
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().flat_map(|(_, rows)| rows).collect()
}

/// CSV with columns exactly [`CSV_HEADER`]. Failed cells read
/// `error: <message>` in the energy column and leave the gap empty.
pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let energy = match &r.energy {
            Ok(e) => format!("{e}"),
            Err(msg) => format!("error: {msg}"),
        };
        let gap = r.gap.map(|g| format!("{g}")).unwrap_or_default();
        w.write_record([
            r.instance.as_str(),
            r.method.name(),
            &format!("{}", r.lambda),
            &energy,
            &gap,
            &format!("{:.6}", r.wall_time_seconds),
        ])?;
    }
    w.flush().map_err(|e| csv::Error::from(e))?;
    Ok(())
}
