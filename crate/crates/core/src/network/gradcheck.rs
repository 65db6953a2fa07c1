//! Central finite-difference verification of the analytic gradients.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    backward_bptt, forward, init_params_with, loss, NetworkConfig, NetworkVariant, Parameters,
};

const STEP: f64 = 1e-5;
/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
const FLOOR: f64 = 1e-6;
const SEQUENCE_LENGTH: usize = 5;

#[derive(Clone, Debug, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub variant: NetworkVariant,
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares analytic gradients with central differences on a random
/// sentence and random parameters.
pub fn gradient_check(config: &NetworkConfig, seed: u64, tolerance: f64) -> GradCheckReport {
    gradient_check_with(config, seed, tolerance, None)
}

/// Like [`gradient_check`]; `corruption` is added to the first analytic
/// gradient entry of every block as a negative control.
pub fn gradient_check_with(
    config: &NetworkConfig,
    seed: u64,
    tolerance: f64,
    corruption: Option<f64>,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params_with(config, &mut rng);
    // biases start at constants; move them off so every path is exercised
    let jitter = Uniform::new(-0.5, 0.5).expect("range");
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    params.for_each_mut(|idx, m| {
        if !names[idx].contains(".W") {
            for v in m.as_mut_slice() {
                *v += jitter.sample(&mut rng);
            }
        }
    });
    let inputs: Vec<Vec<f64>> = (0..SEQUENCE_LENGTH)
        .map(|_| {
            (0..config.input_dim)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let gold: Vec<usize> = (0..SEQUENCE_LENGTH)
        .map(|_| rng.random_range(0..config.n_classes))
        .collect();

    let (_, acts) = forward(&inputs, config, &params).expect("shapes are consistent");
    let analytic = backward_bptt(&acts, &gold, config, &params).expect("shapes are consistent");

    let objective = |p: &Parameters| -> f64 {
        let (y, _) = forward(&inputs, config, p).expect("shapes are consistent");
        loss(&y, &gold)
    };

    let blocks = analytic
        .tensors()
        .into_iter()
        .enumerate()
        .map(|(block, (name, grad))| {
            let errors: Vec<(f64, f64)> = (0..grad.as_slice().len())
                .into_par_iter()
                .map(|entry| {
                    let numeric = {
                        let mut plus = params.clone();
                        let mut minus = params.clone();
                        plus.for_each_mut(|i, m| {
                            if i == block {
                                m.as_mut_slice()[entry] += STEP;
                            }
                        });
                        minus.for_each_mut(|i, m| {
                            if i == block {
                                m.as_mut_slice()[entry] -= STEP;
                            }
                        });
                        (objective(&plus) - objective(&minus)) / (2.0 * STEP)
                    };
                    let mut a = grad.as_slice()[entry];
                    if entry == 0 {
                        a += corruption.unwrap_or(0.0);
                    }
                    (relative_error(a, numeric), (a - numeric).abs())
                })
                .collect();
            BlockCheck {
                name,
                entries: errors.len(),
                max_rel_error: errors.iter().map(|e| e.0).fold(0.0, f64::max),
                max_abs_error: errors.iter().map(|e| e.1).fold(0.0, f64::max),
            }
        })
        .collect::<Vec<_>>();

    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        variant: config.variant,
        tolerance,
        passed: max_rel_error < tolerance,
        blocks,
        max_rel_error,
    }
}
