//! Peer compatibility scoring and trust-aware aggregation: cross-evaluation
//! on a fixed local validation subset, vacuity-driven trust with an adaptive
//! acceptance threshold and EMA smoothing, plus a FedAvg baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidential::{forward, MlpParams};

/// Trust-aware aggregation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustParams {
    /// w_a: share of the trust score driven by validation accuracy.
    pub accuracy_weight: f64,
    /// Vacuity level above which the exponential penalty kicks in.
    pub uncertainty_threshold: f64,
    /// tau_min^(0): acceptance threshold before tightening.
    pub initial_min_trust: f64,
    /// Depth of the early-round relaxation, in [0, 1).
    pub tighten_depth: f64,
    /// Rate at which the relaxation decays over rounds.
    pub tighten_rate: f64,
    /// EMA momentum: weight of the newest raw score.
    pub ema_momentum: f64,
    /// When false, raw scores are used directly.
    pub ema_enabled: bool,
    /// Fraction of the local model kept in the final blend.
    pub self_weight: f64,
    /// Cross-evaluation cap on validation samples per neighbor.
    pub max_eval_samples: usize,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            accuracy_weight: 0.5,
            uncertainty_threshold: 0.5,
            initial_min_trust: 0.3,
            tighten_depth: 0.5,
            tighten_rate: 3.0,
            ema_momentum: 0.6,
            ema_enabled: true,
            self_weight: 0.5,
            max_eval_samples: 100,
        }
    }
}

/// Per-neighbor smoothed trust history, owned by one node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    history: BTreeMap<usize, f64>,
}

impl TrustState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, neighbor: usize) -> Option<f64> {
        self.history.get(&neighbor).copied()
    }
}

/// Everything one node decided about its neighbors in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub node: usize,
    /// tau_min^(t) applied this round.
    pub threshold: f64,
    pub neighbors: Vec<NeighborReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    pub neighbor: usize,
    pub mean_vacuity: f64,
    pub accuracy: f64,
    pub raw_trust: f64,
    pub smoothed_trust: f64,
    pub accepted: bool,
    /// Normalized aggregation weight among accepted neighbors; zero if
    /// rejected.
    pub weight: f64,
}

/// Run a peer model over the evaluation subset: mean vacuity and accuracy,
/// one forward pass per sample.
pub fn evaluate_peer(
    peer: &MlpParams,
    dataset: &Dataset,
    eval_indices: &[usize],
) -> Result<(f64, f64)> {
    if eval_indices.is_empty() {
        return Err(Error::Evaluation("empty validation subset".into()));
    }
    let mut vacuity_sum = 0.0;
    let mut correct = 0usize;
    for &i in eval_indices {
        let out = forward(peer, dataset.sample(i))?;
        vacuity_sum += out.vacuity;
        if out.predicted == dataset.label(i) {
            correct += 1;
        }
    }
    let n = eval_indices.len() as f64;
    Ok((vacuity_sum / n, correct as f64 / n))
}

/// Base trust (1 - u) * (w_a * acc + 1 - w_a), with an exponential penalty
/// once mean vacuity exceeds the uncertainty threshold.
pub fn trust_score(mean_vacuity: f64, accuracy: f64, params: &TrustParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mean_vacuity));
    debug_assert!((0.0..=1.0).contains(&accuracy));
    let w_a = params.accuracy_weight;
    let mut trust = (1.0 - mean_vacuity) * (w_a * accuracy + (1.0 - w_a));
    if mean_vacuity > params.uncertainty_threshold {
        trust *= (-(mean_vacuity - params.uncertainty_threshold)).exp();
    }
    trust
}

/// tau_min^(t) = tau_min^(0) * (1 - gamma_tau * exp(-kappa * t / T)):
/// lenient early, tightening toward tau_min^(0).
pub fn adaptive_threshold(round_t: usize, total_rounds: usize, params: &TrustParams) -> f64 {
    debug_assert!(round_t >= 1 && round_t <= total_rounds);
    let progress = round_t as f64 / total_rounds as f64;
    params.initial_min_trust * (1.0 - params.tighten_depth * (-params.tighten_rate * progress).exp())
}

/// Blend the newest raw trust into the per-neighbor history. The first
/// observation passes through unchanged.
pub fn ema_update(state: &mut TrustState, neighbor: usize, raw_trust: f64, momentum: f64) -> f64 {
    let smoothed = match state.history.get(&neighbor) {
        None => raw_trust,
        Some(prev) => momentum * raw_trust + (1.0 - momentum) * prev,
    };
    state.history.insert(neighbor, smoothed);
    smoothed
}

/// Weighted elementwise combination of parameter sets. Weights need not be
/// normalized by the caller beyond what the algorithm requires.
pub fn average_params(models: &[(&MlpParams, f64)]) -> Result<MlpParams> {
    let (first, _) = models
        .first()
        .ok_or_else(|| Error::Aggregation("no models to average".into()))?;
    let mut out = first.zeros_like();
    for (model, weight) in models {
        if !model.same_shape(first) {
            return Err(Error::Aggregation("model shapes differ".into()));
        }
        for (acc, layer) in out.layers.iter_mut().zip(&model.layers) {
            for (a, w) in acc.weights.iter_mut().zip(&layer.weights) {
                *a += weight * w;
            }
            for (a, b) in acc.bias.iter_mut().zip(&layer.bias) {
                *a += weight * b;
            }
        }
    }
    Ok(out)
}

/// Trust-aware aggregation for one node: score every neighbor on the local
/// validation subset, filter by the adaptive threshold, and blend the
/// accepted trust-weighted peer average with the local model. Falls back to
/// the unchanged local model when nobody passes.
#[allow(clippy::too_many_arguments)]
pub fn trust_aware_aggregate(
    node_id: usize,
    local: &MlpParams,
    neighbors: &[(usize, &MlpParams)],
    dataset: &Dataset,
    eval_indices: &[usize],
    round_t: usize,
    total_rounds: usize,
    params: &TrustParams,
    state: &mut TrustState,
) -> Result<(MlpParams, TrustReport)> {
    let threshold = adaptive_threshold(round_t, total_rounds, params);
    let mut reports = Vec::with_capacity(neighbors.len());
    for &(neighbor, peer) in neighbors {
        if !peer.same_shape(local) {
            return Err(Error::Aggregation(format!(
                "neighbor {neighbor} has an incompatible parameter shape"
            )));
        }
        let (mean_vacuity, accuracy) = evaluate_peer(peer, dataset, eval_indices)?;
        let raw_trust = trust_score(mean_vacuity, accuracy, params);
        let smoothed_trust = if params.ema_enabled {
            ema_update(state, neighbor, raw_trust, params.ema_momentum)
        } else {
            state.history.insert(neighbor, raw_trust);
            raw_trust
        };
        reports.push(NeighborReport {
            neighbor,
            mean_vacuity,
            accuracy,
            raw_trust,
            smoothed_trust,
            accepted: smoothed_trust >= threshold,
            weight: 0.0,
        });
    }

    let accepted_total: f64 = reports
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.smoothed_trust)
        .sum();

    let new_params = if accepted_total > 0.0 {
        for r in &mut reports {
            if r.accepted {
                r.weight = r.smoothed_trust / accepted_total;
            }
        }
        let peer_models: Vec<(&MlpParams, f64)> = neighbors
            .iter()
            .zip(&reports)
            .filter(|(_, r)| r.accepted)
            .map(|(&(_, peer), r)| (peer, r.weight))
            .collect();
        let peers = average_params(&peer_models)?;
        let alpha = params.self_weight;
        average_params(&[(local, alpha), (&peers, 1.0 - alpha)])?
    } else {
        local.clone()
    };

    Ok((
        new_params,
        TrustReport {
            node: node_id,
            threshold,
            neighbors: reports,
        },
    ))
}

/// Decentralized FedAvg: uniform elementwise mean over the node itself and
/// all of its neighbors.
pub fn fedavg_aggregate(local: &MlpParams, neighbors: &[&MlpParams]) -> Result<MlpParams> {
    if neighbors.is_empty() {
        return Ok(local.clone());
    }
    let weight = 1.0 / (neighbors.len() + 1) as f64;
    let mut models: Vec<(&MlpParams, f64)> = vec![(local, weight)];
    models.extend(neighbors.iter().map(|m| (*m, weight)));
    average_params(&models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_node, standardize, synth_blobs};
    use crate::evidential::{local_train, TrainConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_model(value: f64) -> MlpParams {
        let mut m = MlpParams::zeros(&[1, 1], 10.0);
        m.layers[0].weights[0] = value;
        m
    }

    #[test]
    fn trust_score_hand_values() {
        let params = TrustParams {
            accuracy_weight: 0.5,
            uncertainty_threshold: 0.5,
            ..TrustParams::default()
        };
        assert_abs_diff_eq!(trust_score(0.2, 0.9, &params), 0.76, epsilon = 1e-12);
        assert_abs_diff_eq!(trust_score(0.0, 1.0, &params), 1.0, epsilon = 1e-12);
        let penalized = trust_score(0.7, 1.0, &params);
        assert_abs_diff_eq!(penalized, 0.3 * (-0.2f64).exp(), epsilon = 1e-12);
        assert!((penalized - 0.2456).abs() < 1e-4);
    }

    #[test]
    fn trust_score_continuous_at_penalty_boundary() {
        let params = TrustParams::default();
        let below = trust_score(params.uncertainty_threshold - 1e-9, 0.8, &params);
        let above = trust_score(params.uncertainty_threshold + 1e-9, 0.8, &params);
        assert!((below - above).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn trust_score_bounded_and_monotone(
            u in 0.0f64..=1.0,
            acc in 0.0f64..=1.0,
            w_a in 0.0f64..=1.0,
            tau_u in 0.05f64..0.95,
        ) {
            let params = TrustParams {
                accuracy_weight: w_a,
                uncertainty_threshold: tau_u,
                ..TrustParams::default()
            };
            let t = trust_score(u, acc, &params);
            prop_assert!((0.0..=1.0).contains(&t));
            // nonincreasing in vacuity
            let t_worse = trust_score((u + 0.05).min(1.0), acc, &params);
            prop_assert!(t_worse <= t + 1e-12);
            // nondecreasing in accuracy
            let t_better = trust_score(u, (acc + 0.05).min(1.0), &params);
            prop_assert!(t_better + 1e-12 >= t);
        }
    }

    #[test]
    fn adaptive_threshold_examples() {
        let constant = TrustParams {
            initial_min_trust: 0.4,
            tighten_depth: 0.0,
            ..TrustParams::default()
        };
        for t in 1..=10 {
            assert_abs_diff_eq!(adaptive_threshold(t, 10, &constant), 0.4, epsilon = 1e-15);
        }

        let params = TrustParams {
            initial_min_trust: 0.3,
            tighten_depth: 0.5,
            tighten_rate: 3.0,
            ..TrustParams::default()
        };
        // t/T = 0.5 -> 0.3 * (1 - 0.5 e^{-1.5})
        let mid = adaptive_threshold(5, 10, &params);
        assert_abs_diff_eq!(mid, 0.3 * (1.0 - 0.5 * (-1.5f64).exp()), epsilon = 1e-12);
        assert!((mid - 0.2665).abs() < 1e-4);

        // strictly increasing, asymptote below tau_min^(0)
        let mut prev = 0.0;
        for t in 1..=1000 {
            let v = adaptive_threshold(t, 1000, &params);
            assert!(v > prev);
            assert!(v < params.initial_min_trust);
            prev = v;
        }
        assert!(params.initial_min_trust - prev < 0.01);
    }

    #[test]
    fn ema_update_behaviour() {
        let mut state = TrustState::new();
        assert_abs_diff_eq!(ema_update(&mut state, 3, 0.4, 0.6), 0.4, epsilon = 1e-15);
        // prev = 0.4, raw = 0.8, gamma = 0.6 -> 0.64
        assert_abs_diff_eq!(ema_update(&mut state, 3, 0.8, 0.6), 0.64, epsilon = 1e-15);

        let mut state = TrustState::new();
        ema_update(&mut state, 1, 0.2, 1.0);
        assert_abs_diff_eq!(ema_update(&mut state, 1, 0.9, 1.0), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_peer_zero_model() {
        let ds = synth_blobs(4, 3, 25, 5.0, 0.5, 3);
        let indices: Vec<usize> = (0..ds.len()).collect();
        let zero = MlpParams::zeros(&[3, 4], 10.0);
        let (u, acc) = evaluate_peer(&zero, &ds, &indices).unwrap();
        assert_eq!(u, 0.5);
        // argmax ties break to class 0, so accuracy equals class 0 frequency
        let class0 = indices.iter().filter(|&&i| ds.label(i) == 0).count() as f64;
        assert_abs_diff_eq!(acc, class0 / indices.len() as f64, epsilon = 1e-15);

        assert!(matches!(
            evaluate_peer(&zero, &ds, &[]),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn overfit_peer_scores_high_and_foreign_peer_scores_low() {
        // Two disjoint 2-class problems in one feature space.
        let ds = standardize(&synth_blobs(4, 6, 60, 8.0, 0.8, 9));
        let all: Vec<usize> = (0..ds.len()).collect();
        let (low, high): (Vec<usize>, Vec<usize>) =
            all.iter().partition(|&&i| ds.label(i) < 2);

        let split = split_node(&low, (0.7, 0.15, 0.15), 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            local_epochs: 40,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = MlpParams::init(&[6, 16, 4], 10.0, &mut rng);
        let feats: Vec<&[f64]> = split.train.iter().map(|&i| ds.sample(i)).collect();
        let labels: Vec<usize> = split.train.iter().map(|&i| ds.label(i)).collect();
        let memorizer = local_train(&init, &feats, &labels, &cfg, 2, 10, &mut rng)
            .unwrap()
            .params;

        // Same-distribution evaluation: accurate and confident.
        let (u_id, acc_id) = evaluate_peer(&memorizer, &ds, &split.val).unwrap();
        assert!(acc_id > 0.9, "in-distribution accuracy {acc_id}");
        assert!(u_id < 0.5, "in-distribution vacuity {u_id}");

        // Foreign-cluster evaluation of the same model: much more vacuous.
        let foreign: Vec<usize> = high.iter().take(40).copied().collect();
        let (u_ood, _) = evaluate_peer(&memorizer, &ds, &foreign).unwrap();
        assert!(
            u_ood > u_id + 0.1,
            "foreign vacuity {u_ood} not above local {u_id}"
        );
    }

    #[test]
    fn blend_weights_match_scalar_hand_computation() {
        // trusts 0.6 and 0.3 normalize to (2/3, 1/3); with self-weight 0.5
        // the effective weights are (0.5, 1/3, 1/6).
        let local = scalar_model(10.0);
        let n1 = scalar_model(40.0);
        let n2 = scalar_model(-20.0);
        let total = 0.6 + 0.3;
        let peers = average_params(&[(&n1, 0.6 / total), (&n2, 0.3 / total)]).unwrap();
        let blended = average_params(&[(&local, 0.5), (&peers, 0.5)]).unwrap();
        let expected = 0.5 * 10.0 + (1.0 / 3.0) * 40.0 + (1.0 / 6.0) * (-20.0);
        assert_abs_diff_eq!(blended.layers[0].weights[0], expected, epsilon = 1e-12);
    }

    fn quick_dataset() -> (Dataset, Vec<usize>) {
        let ds = synth_blobs(3, 4, 30, 6.0, 0.6, 21);
        let indices: Vec<usize> = (0..30).collect();
        (ds, indices)
    }

    #[test]
    fn no_accepted_neighbors_keeps_local_bit_identical() {
        let (ds, eval) = quick_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let local = MlpParams::init(&[4, 8, 3], 10.0, &mut rng);
        let peer = MlpParams::init(&[4, 8, 3], 10.0, &mut rng);
        let params = TrustParams {
            initial_min_trust: 1.0,
            tighten_depth: 0.0,
            ..TrustParams::default()
        };
        let mut state = TrustState::new();
        let (out, report) = trust_aware_aggregate(
            0,
            &local,
            &[(1, &peer)],
            &ds,
            &eval,
            3,
            10,
            &params,
            &mut state,
        )
        .unwrap();
        assert_eq!(out, local);
        assert!(report.neighbors.iter().all(|r| !r.accepted));
        assert!(report.neighbors.iter().all(|r| r.weight == 0.0));
    }

    #[test]
    fn single_accepted_neighbor_with_zero_self_weight_copies_neighbor() {
        let (ds, eval) = quick_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let local = MlpParams::init(&[4, 8, 3], 10.0, &mut rng);
        let peer = MlpParams::init(&[4, 8, 3], 10.0, &mut rng);
        let params = TrustParams {
            initial_min_trust: 1e-6,
            self_weight: 0.0,
            ..TrustParams::default()
        };
        let mut state = TrustState::new();
        let (out, report) = trust_aware_aggregate(
            0,
            &local,
            &[(1, &peer)],
            &ds,
            &eval,
            1,
            10,
            &params,
            &mut state,
        )
        .unwrap();
        assert_eq!(report.neighbors[0].weight, 1.0);
        for (a, b) in out.layers.iter().zip(&peer.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn accepted_weights_normalize_and_blend_stays_in_envelope() {
        let (ds, eval) = quick_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let local = MlpParams::init(&[4, 8, 3], 10.0, &mut rng);
        let peers: Vec<MlpParams> = (0..3)
            .map(|_| MlpParams::init(&[4, 8, 3], 10.0, &mut rng))
            .collect();
        let neighbor_refs: Vec<(usize, &MlpParams)> =
            peers.iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
        let params = TrustParams {
            initial_min_trust: 1e-6,
            ..TrustParams::default()
        };
        let mut state = TrustState::new();
        let (out, report) = trust_aware_aggregate(
            0,
            &local,
            &neighbor_refs,
            &ds,
            &eval,
            2,
            10,
            &params,
            &mut state,
        )
        .unwrap();
        let weight_sum: f64 = report
            .neighbors
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.weight)
            .sum();
        assert_abs_diff_eq!(weight_sum, 1.0, epsilon = 1e-12);

        // every coordinate within the [min, max] envelope of inputs
        let mut all: Vec<&MlpParams> = vec![&local];
        all.extend(peers.iter());
        for (li, layer) in out.layers.iter().enumerate() {
            for (wi, w) in layer.weights.iter().enumerate() {
                let coords: Vec<f64> = all.iter().map(|m| m.layers[li].weights[wi]).collect();
                let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(*w >= lo - 1e-12 && *w <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_names_the_neighbor() {
        let (ds, eval) = quick_dataset();
        let local = MlpParams::zeros(&[4, 8, 3], 10.0);
        let bad = MlpParams::zeros(&[4, 6, 3], 10.0);
        let mut state = TrustState::new();
        let err = trust_aware_aggregate(
            0,
            &local,
            &[(7, &bad)],
            &ds,
            &eval,
            1,
            10,
            &TrustParams::default(),
            &mut state,
        )
        .unwrap_err();
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn fedavg_trivial_cases() {
        let local = scalar_model(1.0);
        assert_eq!(fedavg_aggregate(&local, &[]).unwrap(), local);

        let twin = scalar_model(1.0);
        let avg = fedavg_aggregate(&local, &[&twin]).unwrap();
        assert_abs_diff_eq!(avg.layers[0].weights[0], 1.0, epsilon = 1e-15);

        let two = scalar_model(2.0);
        let three = scalar_model(3.0);
        let avg = fedavg_aggregate(&local, &[&two, &three]).unwrap();
        assert_abs_diff_eq!(avg.layers[0].weights[0], 2.0, epsilon = 1e-15);

        let bad = MlpParams::zeros(&[2, 1], 10.0);
        assert!(matches!(
            fedavg_aggregate(&local, &[&bad]),
            Err(Error::Aggregation(_))
        ));
    }
}
