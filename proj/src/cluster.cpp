#include "hybridtrain/cluster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <thread>

#include "hybridtrain/errors.hpp"
#include "hybridtrain/perf.hpp"

namespace hybridtrain {

void NetworkModel::validate() const {
    if (latency_s < 0) throw ValidationError("NetworkModel: latency must be >= 0");
    if (bandwidth_Bps <= 0) throw ValidationError("NetworkModel: bandwidth must be > 0");
    if (jitter_sigma < 0) throw ValidationError("NetworkModel: jitter sigma must be >= 0");
}

void ComputeModel::validate() const {
    if (base_seconds_per_sample <= 0)
        throw ValidationError("ComputeModel: base seconds-per-sample must be > 0");
    if (efficiency.empty()) throw ValidationError("ComputeModel: empty efficiency curve");
    double prev = 0.0;
    for (const auto& [batch, mult] : efficiency) {
        if (batch == 0) throw ValidationError("ComputeModel: efficiency batch key must be > 0");
        if (mult <= 0.0 || mult > 1.0)
            throw ValidationError("ComputeModel: efficiency multipliers must be in (0,1]");
        if (mult < prev)
            throw ValidationError("ComputeModel: efficiency curve must be non-decreasing");
        prev = mult;
    }
    if (straggler_prob < 0 || straggler_prob > 1)
        throw ValidationError("ComputeModel: straggler probability must be in [0,1]");
    if (straggler_slowdown < 1)
        throw ValidationError("ComputeModel: straggler slowdown must be >= 1");
    if (nonflop_overhead_frac < 0)
        throw ValidationError("ComputeModel: non-FLOP overhead must be >= 0");
}

double ComputeModel::efficiency_at(std::size_t batch_per_node) const {
    if (batch_per_node == 0)
        throw ValidationError("efficiency_at: batch must be > 0");
    if (batch_per_node <= efficiency.begin()->first) return efficiency.begin()->second;
    auto hi = efficiency.lower_bound(batch_per_node);
    if (hi == efficiency.end()) return efficiency.rbegin()->second;
    if (hi->first == batch_per_node) return hi->second;
    auto lo = std::prev(hi);
    const double x = std::log2(static_cast<double>(batch_per_node));
    const double x0 = std::log2(static_cast<double>(lo->first));
    const double x1 = std::log2(static_cast<double>(hi->first));
    const double t = (x - x0) / (x1 - x0);
    return lo->second + t * (hi->second - lo->second);
}

ClusterPlan plan_cluster(std::size_t total_nodes, std::size_t groups,
                         std::size_t trainable_layers) {
    if (groups < 1) throw ValidationError("plan_cluster: need at least one group");
    if (trainable_layers < 1)
        throw ValidationError("plan_cluster: model has no trainable layers");
    // every group needs at least one worker on top of the parameter servers
    if (total_nodes < groups + trainable_layers)
        throw ValidationError(
            "plan_cluster: " + std::to_string(total_nodes) + " nodes cannot host " +
            std::to_string(trainable_layers) + " parameter servers plus " +
            std::to_string(groups) + " non-empty compute groups");
    ClusterPlan p;
    p.total_nodes = total_nodes;
    p.num_groups = groups;
    p.ps_nodes = trainable_layers;
    p.workers_per_group = (total_nodes - trainable_layers) / groups;
    p.idle_nodes = total_nodes - trainable_layers - groups * p.workers_per_group;
    return p;
}

ClusterPlan plan_cluster(std::size_t total_nodes, std::size_t groups, const Network& model) {
    return plan_cluster(total_nodes, groups, model.trainable_layer_count());
}

ClusterPlan inject_degradation(ClusterPlan plan, std::size_t node_id, double slowdown) {
    if (slowdown < 1.0)
        throw ValidationError("inject_degradation: slowdown must be >= 1");
    if (!plan.is_worker(node_id))
        throw ValidationError("inject_degradation: node " + std::to_string(node_id) +
                              " is not a worker");
    if (slowdown > 1.0) plan.degradation[node_id] = slowdown;
    return plan;
}

double allreduce_time(std::uint64_t message_bytes, std::size_t group_size,
                      const NetworkModel& net, Rng& rng) {
    if (group_size < 1) throw ValidationError("allreduce_time: group size must be >= 1");
    if (group_size == 1) return 0.0;
    const double chunk = static_cast<double>(message_bytes) / static_cast<double>(group_size);
    double t = 0.0;
    for (std::size_t s = 0; s < 2 * (group_size - 1); ++s)
        t += chunk / net.bandwidth_Bps * rng.lognormal_jitter(net.jitter_sigma) +
             net.latency_s;
    return t;
}

double broadcast_time(std::uint64_t message_bytes, std::size_t group_size,
                      const NetworkModel& net, Rng& rng) {
    if (group_size <= 1) return 0.0;
    const std::size_t rounds =
        static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(group_size))));
    double t = 0.0;
    for (std::size_t r = 0; r < rounds; ++r)
        t += net.latency_s + static_cast<double>(message_bytes) / net.bandwidth_Bps *
                                 rng.lognormal_jitter(net.jitter_sigma);
    return t;
}

// ---------------------------------------------------------------------------
// training problems

HepProblem::HepProblem(const HepDataset& ds)
    : ds_(&ds), train_(split_indices(ds.seed, ds.samples.size(), Split::train)) {
    if (train_.empty()) throw ValidationError("HepProblem: empty training split");
}

double HepProblem::chunk_loss_grads(Network& net, const std::vector<std::size_t>& idx) const {
    const std::size_t n = idx.size();
    const HepSample& first = ds_->samples.at(idx.at(0));
    const std::size_t c = first.image.shape[0], h = first.image.shape[1],
                      w = first.image.shape[2];
    HepBatch batch;
    batch.images = Tensor::zeros({n, c, h, w});
    batch.labels.resize(n);
    const std::size_t stride = c * h * w;
    for (std::size_t i = 0; i < n; ++i) {
        const HepSample& s = ds_->samples.at(idx[i]);
        std::copy(s.image.data.begin(), s.image.data.end(),
                  batch.images.data.begin() + i * stride);
        batch.labels[i] = s.label;
    }
    return hep_loss_grads(net, batch);
}

ClimateProblem::ClimateProblem(const ClimateDataset& ds, ClimateLossWeights weights)
    : ds_(&ds), weights_(weights),
      train_(split_indices(ds.seed, ds.samples.size(), Split::train)) {
    weights_.validate();
    if (train_.empty()) throw ValidationError("ClimateProblem: empty training split");
}

double ClimateProblem::chunk_loss_grads(Network& net,
                                        const std::vector<std::size_t>& idx) const {
    const std::size_t n = idx.size();
    const ClimateSample& first = ds_->samples.at(idx.at(0));
    const std::size_t c = first.image.shape[0], h = first.image.shape[1],
                      w = first.image.shape[2];
    ClimateBatch batch;
    batch.images = Tensor::zeros({n, c, h, w});
    batch.boxes.resize(n);
    const std::size_t stride = c * h * w;
    for (std::size_t i = 0; i < n; ++i) {
        const ClimateSample& s = ds_->samples.at(idx[i]);
        std::copy(s.image.data.begin(), s.image.data.end(),
                  batch.images.data.begin() + i * stride);
        batch.boxes[i] = s.boxes;
    }
    return climate_loss_grads(net, batch, weights_);
}

// ---------------------------------------------------------------------------
// chunked batch gradients

namespace {

constexpr std::size_t kChunk = 16;

std::vector<Tensor*> grad_tensors(Network& n) {
    std::vector<Tensor*> out;
    for (auto& b : n.param_blocks())
        for (Tensor* g : b.grads) out.push_back(g);
    return out;
}

std::size_t host_threads() {
    if (const char* e = std::getenv("HYBRIDTRAIN_THREADS")) {
        const long v = std::strtol(e, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

} // namespace

double compute_loss_grads(Network& net, const TrainingProblem& problem,
                          const std::vector<std::size_t>& batch) {
    if (batch.empty()) throw ValidationError("compute_loss_grads: empty batch");
    net.zero_grads();
    const std::size_t nchunks = (batch.size() + kChunk - 1) / kChunk;

    struct ChunkOut {
        std::vector<Tensor> grads;
        double loss = 0;
        std::size_t n = 0;
    };
    std::vector<ChunkOut> outs(nchunks);

    auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(lo + kChunk, batch.size());
        const std::vector<std::size_t> idx(batch.begin() + lo, batch.begin() + hi);
        Network clone = net;
        ChunkOut& o = outs[c];
        o.loss = problem.chunk_loss_grads(clone, idx);
        o.n = idx.size();
        for (Tensor* g : grad_tensors(clone)) o.grads.push_back(std::move(*g));
    };

    const std::size_t threads = std::min(host_threads(), nchunks);
    if (threads <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr err;
        std::mutex err_mu;
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t c = next.fetch_add(1);
                    if (c >= nchunks) return;
                    try {
                        run_chunk(c);
                    } catch (...) {
                        std::lock_guard<std::mutex> lk(err_mu);
                        if (!err) err = std::current_exception();
                        return;
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    }

    // fixed chunk-order reduction: identical result for any thread count
    const double n_total = static_cast<double>(batch.size());
    std::vector<Tensor*> dst = grad_tensors(net);
    double loss = 0.0;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const double w = static_cast<double>(outs[c].n) / n_total;
        loss += w * outs[c].loss;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const std::vector<double>& src = outs[c].grads[i].data;
            std::vector<double>& acc = dst[i]->data;
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * src[k];
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// the simulator

namespace {

std::vector<std::size_t> sample_batch(const TrainingProblem& prob, std::uint64_t seed,
                                      std::size_t group, std::uint64_t iter,
                                      std::size_t batch) {
    Rng r = stream(seed, "batch", group, iter);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = prob.train_index(r.uniform_int(prob.train_size()));
    return idx;
}

std::vector<const Tensor*> const_ptrs(const std::vector<Tensor*>& v) {
    return std::vector<const Tensor*>(v.begin(), v.end());
}

} // namespace

RunLog run_training(const ClusterPlan& plan, Network& net, const TrainingProblem& problem,
                    const SolverConfig& solver, const NetworkModel& netmodel,
                    const ComputeModel& compute, const SimOptions& opts) {
    netmodel.validate();
    compute.validate();
    solver.validate();
    if (opts.iterations == 0) throw ValidationError("run_training: iterations must be > 0");
    if (opts.batch_per_group == 0)
        throw ValidationError("run_training: batch per group must be > 0");
    if (plan.workers_per_group < 1)
        throw ValidationError("run_training: plan has empty compute groups");
    if (plan.ps_nodes != net.trainable_layer_count())
        throw ValidationError("run_training: plan expects " + std::to_string(plan.ps_nodes) +
                              " parameter servers, model has " +
                              std::to_string(net.trainable_layer_count()) +
                              " trainable layers");

    const std::size_t G = plan.num_groups;
    const std::size_t wpg = plan.workers_per_group;
    std::vector<Network::Block> blocks = net.param_blocks();
    std::vector<SolverState> ps;
    ps.reserve(blocks.size());
    for (const auto& b : blocks)
        ps.emplace_back(solver, const_ptrs(b.params), b.name);

    const double model_bytes = 4.0 * static_cast<double>(net.param_count());
    const std::uint64_t flops_per_update = model_flops(net, opts.batch_per_group).total();

    struct GroupState {
        Network work;          // params as read + this iteration's grads
        std::uint64_t iter = 0;
        std::uint64_t read_step = 0;
        double start = 0, apply_at = 0, loss = 0;
        bool active = true;
    };
    std::vector<GroupState> gs(G);

    RunLog log;
    std::uint64_t global_step = 0;

    // Computes group g's next update from the current central parameters and
    // schedules its simulated PS arrival.
    auto launch = [&](std::size_t g, double start_time, bool first) {
        GroupState& s = gs[g];
        s.start = start_time;
        s.read_step = global_step;
        s.work = net;
        s.loss = compute_loss_grads(
            s.work, problem,
            sample_batch(problem, opts.seed, g, s.iter, opts.batch_per_group));

        Rng nr = stream(opts.seed, "net", g, s.iter);
        double t = 0.0;
        const bool fetch = first || !opts.overlap;
        if (fetch) {
            if (!first) {
                // fresh model, per-layer PS -> root in parallel
                double ret = 0.0;
                for (const auto& b : blocks)
                    ret = std::max(ret, netmodel.latency_s +
                                            4.0 * static_cast<double>(b.param_count) /
                                                netmodel.bandwidth_Bps *
                                                nr.lognormal_jitter(netmodel.jitter_sigma));
                t += ret;
            }
            t += broadcast_time(static_cast<std::uint64_t>(model_bytes), wpg, netmodel, nr);
        }

        Rng sr = stream(opts.seed, "straggler", g, s.iter);
        double comp = 0.0;
        for (std::size_t w = 0; w < wpg; ++w) {
            const std::size_t nw =
                opts.batch_per_group / wpg + (w < opts.batch_per_group % wpg ? 1 : 0);
            double straggle = 1.0;
            if (compute.straggler_prob > 0.0 && sr.uniform() < compute.straggler_prob)
                straggle = compute.straggler_slowdown;
            if (nw == 0) continue;
            double tw = static_cast<double>(nw) * compute.base_seconds_per_sample /
                        compute.efficiency_at(nw) * straggle;
            auto deg = plan.degradation.find(plan.worker_node(g, w));
            if (deg != plan.degradation.end()) tw *= deg->second;
            comp = std::max(comp, tw);
        }
        t += comp * (1.0 + compute.nonflop_overhead_frac);

        t += allreduce_time(static_cast<std::uint64_t>(model_bytes), wpg, netmodel, nr);
        double send = 0.0;
        for (const auto& b : blocks)
            send = std::max(send, netmodel.latency_s +
                                      4.0 * static_cast<double>(b.param_count) /
                                          netmodel.bandwidth_Bps *
                                          nr.lognormal_jitter(netmodel.jitter_sigma));
        t += send;
        if (opts.checkpoint_every > 0 && (s.iter + 1) % opts.checkpoint_every == 0)
            t += opts.checkpoint_seconds;
        s.apply_at = start_time + t;
    };

    // Initial model distribution: the parameter servers send the model to the
    // group roots one group at a time, which staggers the groups' cadences.
    const double stagger = netmodel.latency_s + model_bytes / netmodel.bandwidth_Bps;
    for (std::size_t g = 0; g < G; ++g)
        launch(g, static_cast<double>(g) * stagger, /*first=*/true);

    const std::uint64_t total_updates = static_cast<std::uint64_t>(G) * opts.iterations;
    for (std::uint64_t u = 0; u < total_updates; ++u) {
        // next PS arrival: earliest simulated time, ties by group id
        std::size_t g = G;
        for (std::size_t c = 0; c < G; ++c)
            if (gs[c].active && (g == G || gs[c].apply_at < gs[g].apply_at)) g = c;
        if (g == G) throw std::runtime_error("run_training: no runnable event");
        GroupState& s = gs[g];

        RunRecord rec;
        rec.iter = s.iter;
        rec.group = static_cast<std::uint32_t>(g);
        rec.sim_time_start_s = s.start;
        rec.sim_time_end_s = s.apply_at;
        rec.loss = s.loss;
        rec.staleness = global_step - s.read_step;
        rec.flops = flops_per_update;

        if (!std::isfinite(s.loss)) {
            rec.global_step = global_step;
            log.records.push_back(rec);
            log.diverged = true;
            log.divergence_global_step = global_step;
            return log;
        }
        try {
            std::vector<Network::Block> wb = s.work.param_blocks();
            for (std::size_t i = 0; i < blocks.size(); ++i)
                ps[i].step(blocks[i].params, const_ptrs(wb[i].grads));
        } catch (const DivergenceError&) {
            rec.global_step = global_step;
            log.records.push_back(rec);
            log.diverged = true;
            log.divergence_global_step = global_step;
            return log;
        }
        ++global_step;
        rec.global_step = global_step;
        log.records.push_back(rec);

        ++s.iter;
        if (s.iter < opts.iterations)
            launch(g, s.apply_at, /*first=*/false);
        else
            s.active = false;
    }
    return log;
}

std::vector<double> run_reference_sync(Network& net, const TrainingProblem& problem,
                                       const SolverConfig& solver, std::size_t batch,
                                       std::size_t iterations, std::uint64_t seed) {
    solver.validate();
    if (batch == 0) throw ValidationError("run_reference_sync: batch must be > 0");
    std::vector<Network::Block> blocks = net.param_blocks();
    std::vector<SolverState> ps;
    ps.reserve(blocks.size());
    for (const auto& b : blocks)
        ps.emplace_back(solver, const_ptrs(b.params), b.name);

    std::vector<double> losses;
    for (std::size_t it = 0; it < iterations; ++it) {
        Network work = net;
        const double loss = compute_loss_grads(
            work, problem, sample_batch(problem, seed, 0, it, batch));
        losses.push_back(loss);
        if (!std::isfinite(loss))
            throw DivergenceError("run_reference_sync: non-finite loss at iteration " +
                                  std::to_string(it));
        std::vector<Network::Block> wb = work.param_blocks();
        for (std::size_t i = 0; i < blocks.size(); ++i)
            ps[i].step(blocks[i].params, const_ptrs(wb[i].grads));
    }
    return losses;
}

} // namespace hybridtrain
