//! Synchronous round protocol: parallel local training on round-start
//! parameters, then parallel per-node aggregation over the post-training
//! snapshots of neighbors. Per-node RNG streams are pre-derived from the
//! master seed so scheduling cannot alter results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    fedavg_aggregate, trust_aware_aggregate, TrustParams, TrustReport, TrustState,
};
use crate::config::{derive_seed, seed_tags, ExperimentConfig};
use crate::data::{
    load_csv, partition_by_subject, partition_clustered, partition_dirichlet, split_node,
    standardize, synth_blobs, Dataset, NodeData,
};
use crate::error::{Error, Result};
use crate::evidential::{forward, local_train, MlpParams, TrainConfig};
use crate::topology::TopologyGraph;

/// Which aggregation rule every node applies.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregatorChoice {
    FedAvg,
    EvidentialTrust(TrustParams),
}

/// One node's complete simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: usize,
    pub params: MlpParams,
    pub data: NodeData,
    pub trust_state: TrustState,
    /// Base seed of this node's per-round shuffle streams.
    pub shuffle_seed: u64,
    /// Fixed cross-evaluation subset of the validation split.
    pub eval_subset: Vec<usize>,
}

/// Accuracy snapshot across nodes after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub per_node_acc: Vec<f64>,
    pub trust_reports: Vec<TrustReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_mean_acc: f64,
    pub final_std_acc: f64,
    /// First round within 1% of the run's best mean accuracy; absent for
    /// zero-round runs.
    pub rounds_to_peak: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub history: Vec<RoundMetrics>,
    pub summary: Summary,
}

/// The per-round local-training RNG of one node. Stateless in the round
/// index, so any schedule of node execution reproduces the same stream.
pub fn round_rng(shuffle_seed: u64, round_t: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(shuffle_seed, seed_tags::ROUND, round_t as u64))
}

/// A fully prepared experiment: dataset, topology, partitioned and split
/// node states, ready to run rounds.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub graph: TopologyGraph,
    pub nodes: Vec<NodeState>,
    pub aggregator: AggregatorChoice,
    pub train: TrainConfig,
}

impl Experiment {
    /// Build everything from a validated config and its master seed.
    pub fn prepare(config: ExperimentConfig) -> Result<Experiment> {
        config.validate()?;
        let master = config.master_seed;

        let dataset = match &config.dataset {
            crate::config::DatasetConfig::Synthetic(s) => {
                let raw = synth_blobs(
                    s.num_classes,
                    s.dim,
                    s.samples_per_class,
                    s.separation,
                    s.noise_sigma,
                    derive_seed(master, seed_tags::DATASET, 0),
                );
                standardize(&raw)
            }
            crate::config::DatasetConfig::Csv(c) => {
                let raw = load_csv(&c.path, &c.options())?;
                standardize(&raw)
            }
        };

        let graph = config
            .topology
            .build(derive_seed(master, seed_tags::TOPOLOGY, 0))?;
        let n = graph.n();

        let parts = match config.partition.mode {
            crate::config::PartitionMode::Dirichlet => partition_dirichlet(
                &dataset,
                n,
                config.partition.concentration.unwrap_or(0.5),
                config.partition.min_per_node.unwrap_or(20),
                derive_seed(master, seed_tags::PARTITION, 0),
            )?,
            crate::config::PartitionMode::BySubject => partition_by_subject(&dataset, n)?,
            crate::config::PartitionMode::Clustered => partition_clustered(
                &dataset,
                n,
                config.partition.num_clusters.unwrap_or(2),
                derive_seed(master, seed_tags::PARTITION, 0),
            )?,
        };

        let train = config.training.to_train_config();
        let trust = match config.aggregator.to_choice()? {
            AggregatorChoice::EvidentialTrust(t) => Some(t),
            AggregatorChoice::FedAvg => None,
        };
        let max_eval = trust.as_ref().map(|t| t.max_eval_samples).unwrap_or(100);

        let mut dims = vec![dataset.dim()];
        dims.extend_from_slice(&config.model.hidden);
        dims.push(dataset.num_classes());

        let fractions = config.split.fractions();
        let mut nodes = Vec::with_capacity(n);
        for (i, part) in parts.iter().enumerate() {
            let data = split_node(part, fractions, derive_seed(master, seed_tags::NODE_SPLIT, i as u64))
                .map_err(|e| Error::Split(format!("node {i}: {e}")))?;
            let mut init_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(master, seed_tags::NODE_INIT, i as u64));
            let params = MlpParams::init(&dims, train.logit_clamp, &mut init_rng);

            let mut eval_subset = data.val.clone();
            let mut subset_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(master, seed_tags::VAL_SUBSET, i as u64));
            crate::evidential::shuffle(&mut eval_subset, &mut subset_rng);
            eval_subset.truncate(max_eval);

            nodes.push(NodeState {
                node_id: i,
                params,
                data,
                trust_state: TrustState::new(),
                shuffle_seed: derive_seed(master, seed_tags::NODE_SHUFFLE, i as u64),
                eval_subset,
            });
        }

        let aggregator = config.aggregator.to_choice()?;
        Ok(Experiment {
            config,
            dataset,
            graph,
            nodes,
            aggregator,
            train,
        })
    }

    /// One synchronous round: every node trains from its round-start
    /// parameters, then every node aggregates over the post-training
    /// snapshots. No node observes another's aggregated result within the
    /// round.
    pub fn run_round(&mut self, round_t: usize) -> Result<Vec<TrustReport>> {
        let total = self.config.training.rounds;
        let dataset = &self.dataset;
        let train = &self.train;

        let trained: Vec<MlpParams> = self
            .nodes
            .par_iter()
            .map(|node| {
                let feats: Vec<&[f64]> =
                    node.data.train.iter().map(|&i| dataset.sample(i)).collect();
                let labels: Vec<usize> = node.data.train.iter().map(|&i| dataset.label(i)).collect();
                let mut rng = round_rng(node.shuffle_seed, round_t);
                local_train(&node.params, &feats, &labels, train, round_t, total, &mut rng)
                    .map(|outcome| outcome.params)
                    .map_err(|e| Error::Config(format!("round {round_t}, node {}: {e}", node.node_id)))
            })
            .collect::<Result<Vec<_>>>()?;

        let graph = &self.graph;
        let aggregator = &self.aggregator;
        let results: Vec<(MlpParams, TrustState, Option<TrustReport>)> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(i, node)| match aggregator {
                AggregatorChoice::FedAvg => {
                    let neighbor_refs: Vec<&MlpParams> =
                        graph.neighbors(i).iter().map(|&j| &trained[j]).collect();
                    let params = fedavg_aggregate(&trained[i], &neighbor_refs)
                        .map_err(|e| Error::Aggregation(format!("round {round_t}, node {i}: {e}")))?;
                    Ok((params, node.trust_state.clone(), None))
                }
                AggregatorChoice::EvidentialTrust(trust) => {
                    let neighbor_refs: Vec<(usize, &MlpParams)> =
                        graph.neighbors(i).iter().map(|&j| (j, &trained[j])).collect();
                    let mut state = node.trust_state.clone();
                    let (params, report) = trust_aware_aggregate(
                        i,
                        &trained[i],
                        &neighbor_refs,
                        dataset,
                        &node.eval_subset,
                        round_t,
                        total,
                        trust,
                        &mut state,
                    )
                    .map_err(|e| Error::Aggregation(format!("round {round_t}, node {i}: {e}")))?;
                    Ok((params, state, Some(report)))
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut reports = Vec::new();
        for (node, (params, state, report)) in self.nodes.iter_mut().zip(results) {
            node.params = params;
            node.trust_state = state;
            if let Some(r) = report {
                reports.push(r);
            }
        }
        Ok(reports)
    }

    /// Personalized evaluation: every node scored on its own test split.
    pub fn evaluate_all(&self) -> RoundMetrics {
        let per_node_acc: Vec<f64> = self
            .nodes
            .par_iter()
            .map(|node| accuracy(&node.params, &self.dataset, &node.data.test))
            .collect();
        let n = per_node_acc.len() as f64;
        let mean = per_node_acc.iter().sum::<f64>() / n;
        let var = per_node_acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        RoundMetrics {
            round: 0,
            mean_acc: mean,
            std_acc: var.sqrt(),
            per_node_acc,
            trust_reports: Vec::new(),
        }
    }

    /// Execute all configured rounds and collect the full metric history.
    pub fn run(&mut self) -> Result<ExperimentResult> {
        let total = self.config.training.rounds;
        let mut history = Vec::with_capacity(total);
        for t in 1..=total {
            let reports = self.run_round(t)?;
            let mut metrics = self.evaluate_all();
            metrics.round = t;
            metrics.trust_reports = reports;
            history.push(metrics);
        }
        let last = history.last().cloned().unwrap_or_else(|| self.evaluate_all());
        let summary = Summary {
            final_mean_acc: last.mean_acc,
            final_std_acc: last.std_acc,
            rounds_to_peak: if history.is_empty() {
                None
            } else {
                Some(rounds_to_peak(&history))
            },
        };
        Ok(ExperimentResult {
            config: self.config.clone(),
            history,
            summary,
        })
    }
}

/// Fraction of correctly predicted samples.
pub fn accuracy(params: &MlpParams, dataset: &Dataset, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for &i in indices {
        if let Ok(out) = forward(params, dataset.sample(i)) {
            if out.predicted == dataset.label(i) {
                correct += 1;
            }
        }
    }
    correct as f64 / indices.len() as f64
}

/// Prepare and run in one step.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentResult> {
    Experiment::prepare(config)?.run()
}

/// First round whose mean accuracy is within 1% of the run's best.
pub fn rounds_to_peak(history: &[RoundMetrics]) -> usize {
    assert!(!history.is_empty(), "rounds_to_peak needs at least one round");
    let best = history
        .iter()
        .map(|m| m.mean_acc)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = 0.99 * best;
    for m in history {
        if m.mean_acc >= cutoff {
            return m.round;
        }
    }
    history.last().unwrap().round
}

/// Accuracy drop from the IID run to the non-IID run, in percentage points.
pub fn degradation(result_iid: &ExperimentResult, result_noniid: &ExperimentResult) -> f64 {
    (result_iid.summary.final_mean_acc - result_noniid.summary.final_mean_acc) * 100.0
}
