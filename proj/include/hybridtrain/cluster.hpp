#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hybridtrain/datagen.hpp"
#include "hybridtrain/models.hpp"
#include "hybridtrain/rng.hpp"
#include "hybridtrain/runlog.hpp"
#include "hybridtrain/solvers.hpp"

namespace hybridtrain {

struct NetworkModel {
    double latency_s = 1e-5;
    double bandwidth_Bps = 1e9;
    double jitter_sigma = 0.0;  // lognormal sigma, multiplicative per message

    void validate() const;
};

struct ComputeModel {
    double base_seconds_per_sample = 1.25e-3;
    /// Relative throughput vs per-node minibatch; interpolated on log2(batch),
    /// clamped at the table ends.
    std::map<std::size_t, double> efficiency = {
        {1, 0.25}, {2, 0.4}, {4, 0.6}, {8, 0.8}, {16, 0.92}, {32, 1.0}};
    double straggler_prob = 0.0;
    double straggler_slowdown = 1.0;
    /// Solver-update / IO time that executes no model FLOPs.
    double nonflop_overhead_frac = 0.125;

    void validate() const;
    double efficiency_at(std::size_t batch_per_node) const;
};

/// Node layout: PS nodes first, then num_groups contiguous worker ranges
/// (root = first node of each range), idle nodes last.
struct ClusterPlan {
    std::size_t total_nodes = 0;
    std::size_t num_groups = 1;
    std::size_t ps_nodes = 0;
    std::size_t workers_per_group = 0;
    std::size_t idle_nodes = 0;
    std::map<std::size_t, double> degradation;  // worker node id -> slowdown

    std::size_t worker_node(std::size_t group, std::size_t k) const {
        return ps_nodes + group * workers_per_group + k;
    }
    std::size_t root_node(std::size_t group) const { return worker_node(group, 0); }
    bool is_worker(std::size_t node) const {
        return node >= ps_nodes && node < ps_nodes + num_groups * workers_per_group;
    }
};

ClusterPlan plan_cluster(std::size_t total_nodes, std::size_t groups,
                         std::size_t trainable_layers);
ClusterPlan plan_cluster(std::size_t total_nodes, std::size_t groups, const Network& model);

/// Permanent slowdown (>= 1) for one worker for the rest of the run.
ClusterPlan inject_degradation(ClusterPlan plan, std::size_t node_id, double slowdown);

/// Ring model: 2(p-1) steps of (bytes/p)/bandwidth (jittered) + latency each.
double allreduce_time(std::uint64_t message_bytes, std::size_t group_size,
                      const NetworkModel& net, Rng& rng);
/// Tree model: ceil(log2 p) rounds of latency + bytes/bandwidth (jittered).
double broadcast_time(std::uint64_t message_bytes, std::size_t group_size,
                      const NetworkModel& net, Rng& rng);

/// A dataset bound to a loss, chunk-wise. Gradient math over a batch is split
/// into fixed 16-sample chunks reduced in chunk order, so results never depend
/// on host thread count.
class TrainingProblem {
public:
    virtual ~TrainingProblem() = default;
    virtual std::size_t train_size() const = 0;
    virtual std::size_t train_index(std::size_t i) const = 0;
    /// Mean loss over the chunk; accumulates mean grads into `net`
    /// (zeroed grads expected).
    virtual double chunk_loss_grads(Network& net,
                                    const std::vector<std::size_t>& dataset_indices) const = 0;
};

class HepProblem : public TrainingProblem {
public:
    explicit HepProblem(const HepDataset& ds);
    std::size_t train_size() const override { return train_.size(); }
    std::size_t train_index(std::size_t i) const override { return train_[i]; }
    double chunk_loss_grads(Network& net,
                            const std::vector<std::size_t>& idx) const override;

private:
    const HepDataset* ds_;
    std::vector<std::size_t> train_;
};

class ClimateProblem : public TrainingProblem {
public:
    ClimateProblem(const ClimateDataset& ds, ClimateLossWeights weights = {});
    std::size_t train_size() const override { return train_.size(); }
    std::size_t train_index(std::size_t i) const override { return train_[i]; }
    double chunk_loss_grads(Network& net,
                            const std::vector<std::size_t>& idx) const override;

private:
    const ClimateDataset* ds_;
    ClimateLossWeights weights_;
    std::vector<std::size_t> train_;
};

/// Batch gradients averaged over `batch` (dataset indices), written into
/// net's grad buffers. Host parallelism capped by HYBRIDTRAIN_THREADS.
double compute_loss_grads(Network& net, const TrainingProblem& problem,
                          const std::vector<std::size_t>& batch);

struct SimOptions {
    std::size_t iterations = 100;  // per group
    std::size_t batch_per_group = 32;
    std::uint64_t seed = 0;
    /// Start the next compute at PS-apply time instead of waiting for the
    /// model return transfer.
    bool overlap = false;
    std::size_t checkpoint_every = 10;  // 0 disables
    double checkpoint_seconds = 0.0;
};

/// Event-driven hybrid training. `net` holds the (initialized) starting
/// parameters and is left at the final parameters. Pure function of
/// (arguments, opts.seed); on divergence the log is marked and the run stops.
RunLog run_training(const ClusterPlan& plan, Network& net, const TrainingProblem& problem,
                    const SolverConfig& solver, const NetworkModel& netmodel,
                    const ComputeModel& compute, const SimOptions& opts);

/// Plain synchronous loop sharing the exact sampling / gradient / solver code
/// paths with the simulator; bit-identical to a G=1 run_training trajectory.
std::vector<double> run_reference_sync(Network& net, const TrainingProblem& problem,
                                       const SolverConfig& solver, std::size_t batch,
                                       std::size_t iterations, std::uint64_t seed);

} // namespace hybridtrain
