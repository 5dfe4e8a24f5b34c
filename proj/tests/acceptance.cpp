// Acceptance gate: one [PASS]/[FAIL] line per PRIMARY criterion in spec.md.
// Exit code = number of failed criteria. DERIVED thresholds (criteria 8 and
// 12) were frozen from independent oracle runs; see tests/golden/ and the
// comments at each criterion.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hybridtrain/cluster.hpp"
#include "hybridtrain/datagen.hpp"
#include "hybridtrain/harness.hpp"
#include "hybridtrain/models.hpp"
#include "hybridtrain/perf.hpp"
#include "hybridtrain/rng.hpp"
#include "test_util.hpp"

using namespace hybridtrain;
using testutil::counted_forward_flops;
using testutil::finite_diff;
using testutil::max_rel_err;
using testutil::rand_tensor;
using testutil::shape_after;

#ifndef HYBRIDTRAIN_GOLDEN_DIR
#define HYBRIDTRAIN_GOLDEN_DIR "tests/golden"
#endif

namespace {

int g_failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", id, what,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void criterion(int id, const char* what, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        auto [ok, detail] = fn();
        report(id, what, ok, detail);
    } catch (const std::exception& e) {
        report(id, what, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---- shared reduced-scale fixtures --------------------------------------

const HepDataset& small_hep() {
    static HepDataset ds = gen_hep(3, 400, 0.3, HepGenParams{16, 16});
    return ds;
}

Network small_net() {
    Network n = build_hep_mini(16, 16, 3, 4);
    n.init_params(42);
    return n;
}

SolverConfig small_solver() {
    SolverConfig s;
    s.kind = SolverKind::sgd_momentum;
    s.lr = 0.05;
    s.momentum = 0.7;
    return s;
}

// ---- criteria -----------------------------------------------------------

std::pair<bool, std::string> c1_gradients() {
    // End-to-end: both mini topologies, 2-sample batches. Dense random inputs
    // keep central differences off the max-pool/ReLU kinks that the sparse
    // generated images sit on; eps 1e-5 for hep (dataset-scale gradients),
    // 1e-4 for climate (several gradients are ~1e-8, where 1e-5 differences
    // are roundoff-dominated).
    Rng hrng(12);
    HepBatch hb;
    hb.images = rand_tensor({2, 3, 16, 16}, hrng, 0.5);
    hb.labels = {0, 1};
    Network hnet = small_net();
    GradCheckTargets ht;
    ht.hep = &hb;
    const double herr = grad_check(hnet, ht, 1e-5);

    ClimateGenParams cp;
    cp.height = 16;
    cp.width = 16;
    cp.max_boxes = 2;
    ClimateDataset cds = gen_climate(5, 4, cp);
    ClimateBatch cb;
    cb.images = Tensor::zeros({2, 8, 16, 16});
    const std::size_t cstride = 8 * 16 * 16;
    for (std::size_t i = 0; i < 2; ++i) {
        std::copy(cds.samples[i].image.data.begin(), cds.samples[i].image.data.end(),
                  cb.images.data.begin() + i * cstride);
        cb.boxes.push_back(cds.samples[i].boxes);
    }
    Network cnet = build_climate_mini(16, 16, 8, 2, 3, 3, 4);
    cnet.init_params(9);
    GradCheckTargets ct;
    ct.climate = &cb;
    const double cerr = grad_check(cnet, ct, 1e-4);

    // Per-layer central differences < 1e-6 on every primitive.
    double layer_worst = 0.0;
    {
        Rng rng(303);
        ConvSpec spec{2, 3, 3, 3, 2, 1};
        Tensor x = rand_tensor({2, 2, 5, 5}, rng);
        Tensor w = rand_tensor({3, 2, 3, 3}, rng, 0.5);
        Tensor b = rand_tensor({3}, rng, 0.1);
        Tensor probe = rand_tensor({2, 3, 3, 3}, rng);
        auto loss = [&] {
            Tensor y = conv2d_forward(x, w, b, spec);
            return std::inner_product(y.data.begin(), y.data.end(), probe.data.begin(), 0.0);
        };
        ConvGrads g = conv2d_backward(x, w, probe, spec);
        layer_worst = std::max({layer_worst, max_rel_err(g.grad_input.data, finite_diff(x, loss)),
                                max_rel_err(g.grad_weights.data, finite_diff(w, loss)),
                                max_rel_err(g.grad_bias.data, finite_diff(b, loss))});
    }
    {
        Rng rng(304);
        ConvSpec spec{3, 2, 3, 3, 2, 1};  // conv whose backward-data this deconv is
        Tensor x = rand_tensor({2, 2, 3, 3}, rng);
        Tensor w = rand_tensor({2, 3, 3, 3}, rng, 0.5);
        Tensor y0 = deconv2d_forward(x, w, spec);
        Tensor probe = rand_tensor(y0.shape, rng);
        auto loss = [&] {
            Tensor y = deconv2d_forward(x, w, spec);
            return std::inner_product(y.data.begin(), y.data.end(), probe.data.begin(), 0.0);
        };
        DeconvGrads g = deconv2d_backward(x, w, probe, spec);
        layer_worst = std::max({layer_worst, max_rel_err(g.grad_input.data, finite_diff(x, loss)),
                                max_rel_err(g.grad_weights.data, finite_diff(w, loss))});
    }
    {
        Rng rng(305);
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor w = rand_tensor({4, 2}, rng);
        Tensor b = rand_tensor({2}, rng, 0.1);
        Tensor probe = rand_tensor({3, 2}, rng);
        auto loss = [&] {
            Tensor y = dense_forward(x, w, b);
            return std::inner_product(y.data.begin(), y.data.end(), probe.data.begin(), 0.0);
        };
        DenseGrads g = dense_backward(x, w, probe);
        layer_worst = std::max({layer_worst, max_rel_err(g.grad_input.data, finite_diff(x, loss)),
                                max_rel_err(g.grad_weights.data, finite_diff(w, loss)),
                                max_rel_err(g.grad_bias.data, finite_diff(b, loss))});
    }
    for (PoolKind pk : {PoolKind::max2x2_stride2, PoolKind::global_avg}) {
        Rng rng(306);
        Tensor x = rand_tensor({2, 2, 4, 4}, rng);
        PoolResult r0 = pool_forward(x, pk);
        Tensor probe = rand_tensor(r0.output.shape, rng);
        auto loss = [&] {
            PoolResult r = pool_forward(x, pk);
            return std::inner_product(r.output.data.begin(), r.output.data.end(),
                                      probe.data.begin(), 0.0);
        };
        Tensor gi = pool_backward(probe, r0);
        layer_worst = std::max(layer_worst, max_rel_err(gi.data, finite_diff(x, loss)));
    }
    {
        Rng rng(307);
        Tensor x = rand_tensor({2, 3, 4, 4}, rng);  // |x| ~ 1 keeps FD off the kink
        Tensor probe = rand_tensor(x.shape, rng);
        auto loss = [&] {
            Tensor y = relu_forward(x);
            return std::inner_product(y.data.begin(), y.data.end(), probe.data.begin(), 0.0);
        };
        Tensor gi = relu_backward(probe, x);
        layer_worst = std::max(layer_worst, max_rel_err(gi.data, finite_diff(x, loss)));
    }

    const bool ok = herr < 1e-4 && cerr < 1e-4 && layer_worst < 1e-6;
    return {ok, fmt("hep end-to-end %.2e, climate end-to-end %.2e (< 1e-4); per-layer %.2e (< 1e-6)",
                    herr, cerr, layer_worst)};
}

std::pair<bool, std::string> c2_deconv_identity() {
    Rng rng(771);
    std::size_t checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cin = 1 + rng.uniform_int(3);
        const std::size_t cout = 1 + rng.uniform_int(3);
        const std::size_t k = 2 + rng.uniform_int(3);
        const std::size_t stride = 1 + rng.uniform_int(2);
        const std::size_t pad = rng.uniform_int(k > 2 ? 2 : 1);
        const std::size_t h = 3 + rng.uniform_int(4), w = 3 + rng.uniform_int(4);
        ConvSpec spec{cout, cin, k, k, stride, pad};
        Tensor input = rand_tensor({2, cin, h, w}, rng);
        Tensor weights = rand_tensor({cin, cout, k, k}, rng);
        const std::size_t oh = (h - 1) * stride + k - 2 * pad;
        const std::size_t ow = (w - 1) * stride + k - 2 * pad;
        Tensor a = deconv2d_forward(input, weights, spec);
        Tensor ref = conv2d_backward_data(input, weights, spec, oh, ow);
        if (a != ref)
            return {false, fmt("mismatch at trial %d (cin=%zu cout=%zu k=%zu s=%zu p=%zu)",
                               trial, cin, cout, k, stride, pad)};
        ++checked;
    }
    return {true, fmt("%zu random shape/seed combinations bit-identical", checked)};
}

std::pair<bool, std::string> c3_sync_equivalence() {
    HepProblem prob(small_hep());
    const std::size_t iters = 100, batch = 32;

    Network sim_net = small_net();
    ClusterPlan plan = plan_cluster(8 + sim_net.trainable_layer_count(), 1, sim_net);
    SimOptions opts;
    opts.iterations = iters;
    opts.batch_per_group = batch;
    opts.seed = 13;
    RunLog log = run_training(plan, sim_net, prob, small_solver(), NetworkModel{},
                              ComputeModel{}, opts);

    Network ref_net = small_net();
    std::vector<double> ref = run_reference_sync(ref_net, prob, small_solver(), batch, iters, 13);

    if (log.records.size() != iters) return {false, "update count mismatch"};
    for (std::size_t i = 0; i < iters; ++i)
        if (log.records[i].loss != ref[i])
            return {false, fmt("loss series diverges at iteration %zu", i)};
    auto sa = sim_net.snapshot_params(), sb = ref_net.snapshot_params();
    for (std::size_t i = 0; i < sa.size(); ++i)
        if (sa[i] != sb[i]) return {false, "final parameters differ"};
    return {true, fmt("%zu losses and all %zu parameter blocks bit-identical (8 workers)",
                      iters, sa.size())};
}

std::pair<bool, std::string> c4_staleness_law() {
    HepProblem prob(small_hep());
    for (std::size_t G : {2ul, 4ul, 8ul}) {
        Network net = small_net();
        ClusterPlan plan = plan_cluster(net.trainable_layer_count() + 2 * G, G, net);
        SimOptions opts;
        opts.iterations = 30;
        opts.batch_per_group = 8;
        opts.seed = 5;
        RunLog log = run_training(plan, net, prob, small_solver(), NetworkModel{},
                                  ComputeModel{}, opts);
        for (std::size_t i = 2 * G; i < log.records.size(); ++i)
            if (log.records[i].staleness != G - 1)
                return {false, fmt("G=%zu: staleness %llu != %zu at record %zu", G,
                                   (unsigned long long)log.records[i].staleness, G - 1, i)};
    }
    // jitter sigma = 0.1, mean over 500 post-warm-up updates within +-0.5
    const std::size_t G = 4;
    Network net = small_net();
    ClusterPlan plan = plan_cluster(net.trainable_layer_count() + 2 * G, G, net);
    NetworkModel nm;
    nm.jitter_sigma = 0.1;
    SimOptions opts;
    opts.iterations = 127;  // 508 updates, 500 post-warm-up
    opts.batch_per_group = 8;
    opts.seed = 5;
    RunLog log = run_training(plan, net, prob, small_solver(), nm, ComputeModel{}, opts);
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 2 * G; i < log.records.size(); ++i) {
        acc += static_cast<double>(log.records[i].staleness);
        ++n;
    }
    const double mean = acc / static_cast<double>(n);
    const bool ok = n >= 500 && std::fabs(mean - 3.0) < 0.5;
    return {ok, fmt("exact G-1 for G in {2,4,8}; jittered mean %.3f over %zu updates (target 3 +- 0.5)",
                    mean, n)};
}

std::pair<bool, std::string> c5_strong_scaling() {
    HepProblem prob(small_hep());
    NetworkModel nm;
    nm.jitter_sigma = 0.1;
    const std::size_t total_batch = 2048;

    std::vector<RunLog> logs;
    std::vector<ScalingRun> runs;
    logs.reserve(12);
    for (std::size_t p = 1; p <= 1024; p *= 2) {
        Network net = small_net();
        ClusterPlan plan = plan_cluster(p + net.trainable_layer_count(), 1, net);
        SimOptions opts;
        opts.iterations = 5;
        opts.batch_per_group = total_batch;
        opts.seed = 7;
        logs.push_back(run_training(plan, net, prob, small_solver(), nm, ComputeModel{}, opts));
        runs.push_back({p, 1, "sync", &logs.back()});
    }
    {
        // hybrid: 4 groups, each processing the full batch per update
        Network net = small_net();
        ClusterPlan plan = plan_cluster(1024 + net.trainable_layer_count(), 4, net);
        SimOptions opts;
        opts.iterations = 5;
        opts.batch_per_group = total_batch;
        opts.seed = 7;
        logs.push_back(run_training(plan, net, prob, small_solver(), nm, ComputeModel{}, opts));
        runs.push_back({1024, 4, "hybrid4", &logs.back()});
    }
    std::vector<ScalingEntry> rep = scaling_report(runs, ScalingKind::strong);
    auto find = [&](const std::string& mode, std::size_t nodes) -> const ScalingEntry* {
        for (const auto& e : rep)
            if (e.mode == mode && e.nodes == nodes) return &e;
        return nullptr;
    };
    const ScalingEntry* s256 = find("sync", 256);
    const ScalingEntry* s1024 = find("sync", 1024);
    const ScalingEntry* h1024 = find("hybrid4", 1024);
    if (!s256 || !s1024 || !h1024) return {false, "missing scaling entries"};
    const bool ok = s1024->speedup < s256->speedup && h1024->speedup >= 1.5 * s1024->speedup;
    return {ok, fmt("sync speedup 256: %.1fx, 1024: %.1fx; hybrid4 @1024: %.1fx (>= 1.5x sync)",
                    s256->speedup, s1024->speedup, h1024->speedup)};
}

std::pair<bool, std::string> c6_weak_scaling() {
    HepProblem prob(small_hep());
    const std::size_t per_node = 8, P = 1024;

    ComputeModel hep_profile;  // defaults: 1.25 ms/sample, 12.5% non-flop
    ComputeModel climate_profile;
    climate_profile.base_seconds_per_sample = 37.5e-3;  // 30x the HEP per-sample compute
    climate_profile.nonflop_overhead_frac = 0.02;

    auto weak_effs = [&](const ComputeModel& cm) {
        std::vector<RunLog> logs;
        std::vector<ScalingRun> runs;
        logs.reserve(4);
        struct Cell { std::size_t nodes, groups; const char* mode; };
        for (const Cell& c : {Cell{1, 1, "sync"}, Cell{P, 1, "sync"},
                              Cell{P, 4, "hybrid4"}, Cell{P, P, "async"}}) {
            Network net = small_net();
            ClusterPlan plan = plan_cluster(c.nodes + net.trainable_layer_count(), c.groups, net);
            SimOptions opts;
            opts.iterations = 3;
            opts.batch_per_group = per_node * plan.workers_per_group;
            opts.seed = 3;
            logs.push_back(run_training(plan, net, prob, small_solver(), NetworkModel{}, cm, opts));
            runs.push_back({c.nodes, c.groups, c.mode, &logs.back()});
        }
        std::vector<ScalingEntry> rep = scaling_report(runs, ScalingKind::weak);
        std::map<std::string, double> eff;
        for (const auto& e : rep)
            if (e.nodes == P) eff[e.mode] = e.efficiency;
        return eff;
    };

    std::map<std::string, double> hep_eff = weak_effs(hep_profile);
    std::map<std::string, double> cli_eff = weak_effs(climate_profile);
    bool ok = hep_eff.size() == 3 && cli_eff.size() == 3;
    for (const auto& [mode, e] : cli_eff) {
        if (e < 0.85) ok = false;
        if (!(hep_eff.count(mode) && hep_eff[mode] < e)) ok = false;
    }
    return {ok, fmt("climate eff @1024 sync %.3f hybrid4 %.3f async %.3f (>= 0.85); "
                    "hep sync %.3f hybrid4 %.3f async %.3f (strictly lower)",
                    cli_eff["sync"], cli_eff["hybrid4"], cli_eff["async"],
                    hep_eff["sync"], hep_eff["hybrid4"], hep_eff["async"])};
}

std::pair<bool, std::string> c7_plan_accounting() {
    ClusterPlan hep = plan_cluster(9600, 9, 6);
    ClusterPlan cli = plan_cluster(9622, 8, 14);
    const std::size_t hep_workers = hep.num_groups * hep.workers_per_group;
    const std::size_t cli_workers = cli.num_groups * cli.workers_per_group;
    const bool ok = hep_workers == 9594 && hep.ps_nodes == 6 && hep.workers_per_group == 1066 &&
                    hep.idle_nodes == 0 && cli_workers == 9608 && cli.ps_nodes == 14 &&
                    cli.workers_per_group == 1201 && cli.idle_nodes == 0;
    return {ok, fmt("(9600,9,6)->%zu workers/%zu PS/%zu per group; (9622,8,14)->%zu workers/%zu PS",
                    hep_workers, hep.ps_nodes, hep.workers_per_group, cli_workers, cli.ps_nodes)};
}

std::pair<bool, std::string> c8_classifier_vs_baseline() {
    // Frozen DERIVED protocol: dataset gen_hep(1, 20000, 0.2); baseline cut fit
    // on the train split at target FPR 0.0015 (25% safety margin so the
    // operating point generalizes); both classifiers scored on the full
    // dataset at FPR 0.002. Golden value in tests/golden/hep_baseline_tpr.txt.
    std::ifstream gf(std::string(HYBRIDTRAIN_GOLDEN_DIR) + "/hep_baseline_tpr.txt");
    double golden = 0;
    if (!(gf >> golden) || golden <= 0) return {false, "cannot read golden baseline TPR"};

    HepDataset ds = gen_hep(1, 20000, 0.2);
    auto tr = split_indices(ds.seed, ds.samples.size(), Split::train);
    std::vector<HepSample> fit;
    fit.reserve(tr.size());
    for (auto i : tr) fit.push_back(ds.samples[i]);
    std::vector<int> labels;
    labels.reserve(ds.samples.size());
    for (auto& s : ds.samples) labels.push_back(s.label);
    BaselineCut cut = fit_baseline_cut(fit, 0.0015);
    const double btpr = roc_tpr_at_fpr(baseline_cut_scores(cut, ds.samples), labels, 0.002);
    if (std::fabs(btpr - golden) > 1e-12)
        return {false, fmt("recomputed baseline TPR %.12f != golden %.12f", btpr, golden)};

    Network net = build_hep_mini();  // full-size 32x32, 16 filters
    net.init_params(7);
    HepProblem prob(ds);
    SolverConfig sol;
    sol.kind = SolverKind::adam;
    sol.lr = 1e-3;
    ClusterPlan plan = plan_cluster(64 + net.trainable_layer_count(), 2, net);
    SimOptions opts;
    opts.iterations = 150;  // 150 per group x 2 groups = 300 applied updates
    opts.batch_per_group = 128;
    opts.seed = 0;
    RunLog log = run_training(plan, net, prob, sol, NetworkModel{}, ComputeModel{}, opts);
    if (log.diverged) return {false, "training diverged"};

    std::vector<double> scores;
    scores.reserve(ds.samples.size());
    const std::size_t stride = 3 * ds.height * ds.width;
    for (std::size_t lo = 0; lo < ds.samples.size(); lo += 64) {
        const std::size_t n = std::min<std::size_t>(64, ds.samples.size() - lo);
        Tensor imgs = Tensor::zeros({n, 3, ds.height, ds.width});
        for (std::size_t i = 0; i < n; ++i)
            std::copy(ds.samples[lo + i].image.data.begin(), ds.samples[lo + i].image.data.end(),
                      imgs.data.begin() + i * stride);
        Tensor logits = hep_forward_logits(net, imgs);
        for (std::size_t i = 0; i < n; ++i) scores.push_back(logits.at2(i, 1) - logits.at2(i, 0));
    }
    const double ctpr = roc_tpr_at_fpr(scores, labels, 0.002);
    const bool ok = ctpr > btpr && ctpr >= 1.2 * btpr;
    return {ok, fmt("baseline TPR@FPR0.002 = %.4f (golden), CNN = %.4f, ratio %.2fx (>= 1.2x)",
                    btpr, ctpr, ctpr / btpr)};
}

std::pair<bool, std::string> c9_flop_accounting() {
    // analytic layer_flops == instrumented counter for every layer, both minis
    for (int which = 0; which < 2; ++which) {
        Network net = which == 0 ? build_hep_mini() : build_climate_mini();
        const std::size_t batch = 2;
        std::array<std::size_t, 3> in{net.input_c, net.input_h, net.input_w};
        for (const Layer& l : net.trunk) {
            if (layer_flops(l, in, batch).forward != counted_forward_flops(l, in, batch))
                return {false, fmt("trunk layer '%s' analytic != counted", l.name.c_str())};
            in = shape_after(l, in);
        }
        for (const Layer& l : net.heads)
            if (layer_flops(l, in, batch).forward != counted_forward_flops(l, in, batch))
                return {false, fmt("head '%s' analytic != counted", l.name.c_str())};
        std::array<std::size_t, 3> din = in;
        for (const Layer& l : net.decoder) {
            if (layer_flops(l, din, batch).forward != counted_forward_flops(l, din, batch))
                return {false, fmt("decoder layer '%s' analytic != counted", l.name.c_str())};
            din = shape_after(l, din);
        }
    }

    // peak >= sustained and exact conservation of work on a hybrid runlog
    HepProblem prob(small_hep());
    Network net = small_net();
    const std::size_t G = 2, iters = 20, batch = 16;
    ClusterPlan plan = plan_cluster(net.trainable_layer_count() + 2 * G, G, net);
    NetworkModel nm;
    nm.jitter_sigma = 0.1;
    SimOptions opts;
    opts.iterations = iters;
    opts.batch_per_group = batch;
    opts.seed = 11;
    RunLog log = run_training(plan, net, prob, small_solver(), nm, ComputeModel{}, opts);

    const std::uint64_t per_update = model_flops(net, batch).total();
    std::uint64_t total = 0, step = 0;
    for (const auto& r : log.records) {
        if (r.flops != per_update) return {false, "record FLOPs != model FLOPs"};
        if (r.global_step != ++step) return {false, "global_step sequence broken"};
        total += r.flops;
    }
    if (total != per_update * G * iters) return {false, "total FLOPs not conserved"};
    PeakSustained ps = peak_sustained(log, 5);
    if (!(ps.peak_flops_per_s >= ps.sustained_flops_per_s))
        return {false, fmt("peak %.3e < sustained %.3e", ps.peak_flops_per_s,
                           ps.sustained_flops_per_s)};
    return {true, fmt("all layers exact in both minis; %zu records conserve %.3e FLOPs; "
                      "peak %.3e >= sustained %.3e FLOP/s",
                      log.records.size(), (double)total, ps.peak_flops_per_s,
                      ps.sustained_flops_per_s)};
}

std::pair<bool, std::string> c10_determinism() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "hybridtrain_acceptance_c10";
    fs::remove_all(base);
    fs::create_directories(base);

    ExperimentConfig cfg;
    cfg.model.kind = "hep_mini";
    cfg.model.height = cfg.model.width = 16;
    cfg.model.filters = 4;
    cfg.data.seed = 3;
    cfg.data.n = 200;
    cfg.data.signal_fraction = 0.3;
    cfg.solver.solver = small_solver();
    cfg.cluster.nodes = {4};
    cfg.cluster.groups = {2};
    cfg.cluster.total_batch = 32;
    cfg.run.iterations = 10;
    cfg.run.seed = 9;
    cfg.out_dir = (base / "out").string();
    cfg.validate();

    write_manifest(cfg, (base / "manifest.json").string());
    const std::uint64_t hash0 = input_content_hash(cfg);

    auto run_once = [&](const char* threads, const fs::path& dir) {
        setenv("HYBRIDTRAIN_THREADS", threads, 1);
        fs::create_directories(dir);
        // rerun "from the manifest": round-trip the config through its
        // serialized form, exactly as a rerun would load it
        ExperimentConfig rc = parse_config(serialize_config(cfg));
        if (input_content_hash(rc) != hash0) throw ValidationError("content hash drifted");
        LoadedData data = obtain_data(rc);
        Network final_net = build_model(rc.model);
        RunLog log = run_cell(rc, data, 4, 2, &final_net);
        save_runlog_csv(log, (dir / "log.csv").string());
        save_model(final_net, (dir / "model.bin").string());
    };
    run_once("1", base / "a");
    run_once("4", base / "b");
    run_once("1", base / "c");
    unsetenv("HYBRIDTRAIN_THREADS");

    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    for (const char* name : {"log.csv", "model.bin"}) {
        const std::string a = slurp(base / "a" / name);
        if (a.empty()) return {false, fmt("%s missing or empty", name)};
        if (a != slurp(base / "b" / name) || a != slurp(base / "c" / name))
            return {false, fmt("%s differs across reruns", name)};
    }
    fs::remove_all(base);
    return {true, "runlog CSV and final model bit-identical across reruns with "
                  "HYBRIDTRAIN_THREADS in {1,4}"};
}

std::pair<bool, std::string> c11_straggler_resilience() {
    HepProblem prob(small_hep());

    auto sync_tpu = [&](bool degraded) {
        Network net = small_net();
        ClusterPlan plan = plan_cluster(64 + net.trainable_layer_count(), 1, net);
        if (degraded) plan.degradation[plan.worker_node(0, 3)] = 10.0;
        SimOptions opts;
        opts.iterations = 3;
        opts.batch_per_group = 2048;
        opts.seed = 17;
        RunLog log = run_training(plan, net, prob, small_solver(), NetworkModel{},
                                  ComputeModel{}, opts);
        return log.time_per_update();
    };
    const double sync_clean = sync_tpu(false), sync_slow = sync_tpu(true);

    // hybrid cadence: applied updates per simulated second, measured up to the
    // first group's finish time so idle-tail effects do not distort the rate
    auto hybrid_cadence = [&](bool degraded) {
        Network net = small_net();
        ClusterPlan plan = plan_cluster(64 + net.trainable_layer_count(), 4, net);
        if (degraded) plan.degradation[plan.worker_node(0, 3)] = 10.0;
        SimOptions opts;
        opts.iterations = 10;
        opts.batch_per_group = 512;
        opts.seed = 17;
        RunLog log = run_training(plan, net, prob, small_solver(), NetworkModel{},
                                  ComputeModel{}, opts);
        std::map<std::uint32_t, double> group_finish;
        for (const auto& r : log.records)
            group_finish[r.group] = std::max(group_finish[r.group], r.sim_time_end_s);
        double horizon = 1e300;
        for (const auto& [g, t] : group_finish) horizon = std::min(horizon, t);
        std::size_t applied = 0;
        for (const auto& r : log.records)
            if (r.sim_time_end_s <= horizon) ++applied;
        return static_cast<double>(applied) / horizon;
    };
    const double cad_clean = hybrid_cadence(false), cad_slow = hybrid_cadence(true);

    const double sync_degrade = sync_slow / sync_clean;
    const double hybrid_degrade = cad_clean / cad_slow;
    const bool ok = sync_degrade >= 5.0 && hybrid_degrade <= 1.5;
    return {ok, fmt("10x slowdown on 1 of 64: sync time-per-update %.2fx worse (>= 5x); "
                    "hybrid4 cadence %.2fx worse (<= 1.5x)",
                    sync_degrade, hybrid_degrade)};
}

std::pair<bool, std::string> c12_detection() {
    // monotonicity: every box kept at 0.95 is kept at 0.8, on random preds
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        ClimatePreds preds;
        preds.conf = rand_tensor({2, 1, 8, 8}, rng, 2.0);
        preds.cls = rand_tensor({2, 2, 8, 8}, rng);
        preds.xy = rand_tensor({2, 2, 8, 8}, rng, 0.2);
        preds.wh = rand_tensor({2, 2, 8, 8}, rng, 0.2);
        for (std::size_t s = 0; s < 2; ++s) {
            auto hi = infer_boxes(preds, s, 0.95);
            auto lo = infer_boxes(preds, s, 0.8);
            if (hi.size() > lo.size()) return {false, "candidate count not monotone"};
            for (const auto& b : hi) {
                bool found = false;
                for (const auto& c : lo)
                    found = found || (c.cell_i == b.cell_i && c.cell_j == b.cell_j);
                if (!found) return {false, "box kept at 0.95 missing at 0.8"};
            }
        }
    }

    // Frozen DERIVED training recipe (oracle: val cyclone recall@0.8 = 0.86):
    // gen_climate(4, 600); climate-mini 64x64, 8 filters; conf_obj weight 5
    // (the default 1 lets the 63 empty cells per 64-cell grid squash the
    // confidence head); Adam lr 2e-3, batch 16, 400 iterations, seed 21.
    ClimateDataset ds = gen_climate(4, 600);
    Network net = build_climate_mini(64, 64, 8, 2, 3, 3, 8);
    net.init_params(11);
    ClimateLossWeights w;
    w.conf_obj = 5.0;
    ClimateProblem prob(ds, w);
    SolverConfig sol;
    sol.kind = SolverKind::adam;
    sol.lr = 2e-3;
    run_reference_sync(net, prob, sol, 16, 400, 21);

    auto va = split_indices(ds.seed, ds.samples.size(), Split::val);
    std::size_t cyclones = 0, recovered = 0;
    for (std::size_t i : va) {
        const ClimateSample& s = ds.samples[i];
        Tensor img = Tensor::zeros({1, 8, 64, 64});
        std::copy(s.image.data.begin(), s.image.data.end(), img.data.begin());
        ClimateForward fw = climate_forward(net, img);
        std::vector<BoxPrediction> boxes = infer_boxes(fw.preds, 0, 0.8);
        for (const BoxTarget& t : s.boxes) {
            if (t.class_id != 0) continue;  // cyclones only
            ++cyclones;
            auto [ci, cj] = target_cell(t, net.grid_h, net.grid_w);
            for (const auto& b : boxes)
                if (b.cell_i == ci && b.cell_j == cj) {
                    ++recovered;
                    break;
                }
        }
    }
    const double recall = static_cast<double>(recovered) / static_cast<double>(cyclones);
    const bool ok = cyclones > 0 && recall >= 0.5;
    return {ok, fmt("monotone at 0.8/0.95; trained detector recovers %zu/%zu val vortices "
                    "(recall %.3f >= 0.5)",
                    recovered, cyclones, recall)};
}

}  // namespace

int main() {
    criterion(1, "gradient fidelity (end-to-end < 1e-4, per-layer < 1e-6)", c1_gradients);
    criterion(2, "deconv forward == conv backward-data, 50 random combos, exact",
              c2_deconv_identity);
    criterion(3, "G=1 simulator bit-identical to synchronous reference (100 iters)",
              c3_sync_equivalence);
    criterion(4, "staleness settles at exactly G-1 (jittered mean within +-0.5)",
              c4_staleness_law);
    criterion(5, "strong-scaling shape of Fig. 6 (sync stalls, hybrid scales)",
              c5_strong_scaling);
    criterion(6, "weak-scaling shape of Fig. 7 (climate profile >= 0.85 at 1024)",
              c6_weak_scaling);
    criterion(7, "plan_cluster reproduces the paper node arithmetic exactly",
              c7_plan_accounting);
    criterion(8, "trained HEP-mini beats the frozen baseline-cut golden by >= 1.2x",
              c8_classifier_vs_baseline);
    criterion(9, "FLOP accounting exact; peak >= sustained; work conserved", c9_flop_accounting);
    criterion(10, "manifest reruns bit-identical under HYBRIDTRAIN_THREADS {1,4}",
              c10_determinism);
    criterion(11, "straggler: sync degrades >= 5x, hybrid cadence <= 1.5x",
              c11_straggler_resilience);
    criterion(12, "detection: infer_boxes monotone; trained recall >= 0.5 at 0.8",
              c12_detection);
    if (g_failures == 0)
        std::printf("acceptance: all 12 criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return g_failures;
}
