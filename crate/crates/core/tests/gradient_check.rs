//! Analytic gradients against central finite differences, over every head
//! shape including the structure-sum energy loss.
//!
//! Finite differences only approximate the derivative away from the ReLU
//! kinks, so candidate cases whose hidden preactivations come within a
//! safety margin of zero are re-drawn (deterministically) before checking.

use ndarray::Array2;
use pdrl_core::heads::{head_layout, HeadKind};
use pdrl_core::mlp::{mlp_init, MlpModel};
use pdrl_core::rng::{self, ChaCha8Rng};
use pdrl_core::train::{AtomSamples, StructureSamples, SupervisedSet};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Minimum distance of any hidden preactivation from the ReLU kink.
const KINK_MARGIN: f64 = 1e-3;

pub enum Case {
    Atoms(AtomSamples),
    Structures(StructureSamples),
}

impl Case {
    pub fn set(&self) -> &dyn SupervisedSet {
        match self {
            Case::Atoms(s) => s,
            Case::Structures(s) => s,
        }
    }

    pub fn inputs(&self) -> &Array2<f64> {
        match self {
            Case::Atoms(s) => &s.inputs,
            Case::Structures(s) => &s.atoms,
        }
    }
}

/// Smallest |preactivation| across all hidden (rectifier) layers.
pub fn min_abs_hidden_preactivation(model: &MlpModel, inputs: &Array2<f64>) -> f64 {
    let mut a = inputs.to_owned();
    let mut min_abs = f64::INFINITY;
    let last = model.weights.len() - 1;
    for l in 0..last {
        let z = a.dot(&model.weights[l].t()) + &model.biases[l];
        for v in z.iter() {
            min_abs = min_abs.min(v.abs());
        }
        a = z.mapv(|v| v.max(0.0));
    }
    min_abs
}

fn perturbed(model: &MlpModel, layer: usize, bias: bool, index: usize, delta: f64) -> MlpModel {
    let mut m = model.clone();
    if bias {
        m.biases[layer][index] += delta;
    } else {
        let cols = m.weights[layer].ncols();
        m.weights[layer][[index / cols, index % cols]] += delta;
    }
    m
}

/// Max relative error between analytic and finite-difference gradients over
/// every parameter of the model, for a full-set batch.
pub fn max_gradient_error(model: &MlpModel, set: &dyn SupervisedSet) -> f64 {
    let units: Vec<usize> = (0..set.n_units()).collect();
    let (_, grads) = set.batch_loss_grad(model, &units).unwrap();
    let mut worst = 0.0f64;
    for layer in 0..model.weights.len() {
        for (bias, count) in [(false, model.weights[layer].len()), (true, model.biases[layer].len())] {
            for index in 0..count {
                let plus = set
                    .batch_loss_grad(&perturbed(model, layer, bias, index, FD_STEP), &units)
                    .unwrap()
                    .0;
                let minus = set
                    .batch_loss_grad(&perturbed(model, layer, bias, index, -FD_STEP), &units)
                    .unwrap()
                    .0;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let analytic = if bias {
                    grads.biases[layer][index]
                } else {
                    let cols = model.weights[layer].ncols();
                    grads.weights[layer][[index / cols, index % cols]]
                };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng::uniform_in(rng, -1.0, 1.0))
}

fn candidate(kind: HeadKind, seed: u64) -> (MlpModel, Case) {
    let mut rng = rng::seeded(seed);
    let d = 3;
    let model = mlp_init(&head_layout(kind, d, 4), seed ^ 0x9e37).unwrap();
    let case = match kind {
        HeadKind::FNorm | HeadKind::FDiff => {
            let n = 2 + rng::uniform_usize(&mut rng, 5);
            let inputs = random_matrix(&mut rng, n, d, 1.5);
            let targets = random_matrix(&mut rng, n, kind.output_dim(), 1.0);
            Case::Atoms(AtomSamples::new(inputs, targets).unwrap())
        }
        HeadKind::ENorm | HeadKind::EDiff => {
            let n_structs = 2 + rng::uniform_usize(&mut rng, 3);
            let structures: Vec<(Array2<f64>, f64)> = (0..n_structs)
                .map(|_| {
                    let atoms = 1 + rng::uniform_usize(&mut rng, 4);
                    (
                        random_matrix(&mut rng, atoms, d, 1.5),
                        rng::uniform_in(&mut rng, -2.0, 2.0),
                    )
                })
                .collect();
            Case::Structures(StructureSamples::from_structures(&structures).unwrap())
        }
    };
    (model, case)
}

/// Random (model, batch) pair for one head kind, re-drawn until every hidden
/// preactivation is clear of the kink.
pub fn random_case(kind: HeadKind, seed: u64) -> (MlpModel, Case) {
    for attempt in 0.. {
        let (model, case) = candidate(kind, seed.wrapping_add(attempt * 9973));
        if min_abs_hidden_preactivation(&model, case.inputs()) >= KINK_MARGIN {
            return (model, case);
        }
    }
    unreachable!()
}

#[test]
fn gradients_match_finite_differences_for_all_head_kinds() {
    for (i, kind) in HeadKind::ALL.iter().enumerate() {
        for rep in 0..5 {
            let seed = (i * 100 + rep) as u64;
            let (model, case) = random_case(*kind, seed);
            let err = max_gradient_error(&model, case.set());
            assert!(
                err < REL_TOL,
                "kind {kind:?} seed {seed}: max relative error {err:.3e}"
            );
        }
    }
}

#[test]
fn softplus_head_gradient_checks_too() {
    // Dedicated run at larger magnitudes, where softplus curvature matters.
    for seed in 0..5 {
        let (model, case) = random_case(HeadKind::FNorm, seed + 500);
        let err = max_gradient_error(&model, case.set());
        assert!(err < REL_TOL, "seed {seed}: {err:.3e}");
    }
}
