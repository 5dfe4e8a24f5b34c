#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hybridtrain/models.hpp"
#include "hybridtrain/runlog.hpp"

namespace hybridtrain {

struct LayerFlops {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
};

/// Analytic FLOP count for one layer at the given input (C,H,W) and batch.
/// Multiply-add counts as 2 FLOPs; pooling and ReLU as 1 per output element.
LayerFlops layer_flops(const Layer& layer, std::array<std::size_t, 3> in_chw,
                       std::size_t batch);

struct FlopModel {
    struct Entry {
        std::string name;
        LayerFlops flops;
    };
    std::vector<Entry> layers;
    std::uint64_t forward_total = 0;
    std::uint64_t backward_total = 0;
    std::uint64_t total() const { return forward_total + backward_total; }
};

/// Walks the network's shape graph (trunk, heads, decoder) at the given batch.
FlopModel model_flops(const Network& net, std::size_t batch);

struct PeakSustained {
    double peak_flops_per_s = 0;
    double sustained_flops_per_s = 0;
};

/// peak = iteration FLOPs / fastest iteration; sustained = best contiguous
/// window of summed iteration times.
PeakSustained peak_sustained(const RunLog& log, std::size_t window);

enum class ScalingKind { strong, weak };

struct ScalingEntry {
    std::size_t nodes = 0;   // compute nodes (parameter servers excluded)
    std::size_t groups = 1;
    std::string mode;        // "sync", "hybrid2", ...
    double time_per_update = 0;  // span / applied updates, all groups pooled
    double speedup = 0;
    double efficiency = 0;
};

struct ScalingRun {
    std::size_t nodes = 0;
    std::size_t groups = 1;
    std::string mode;
    const RunLog* log = nullptr;
};

/// Baseline is the nodes==1 entry. strong: speedup = T1 / time-per-update(P),
/// efficiency = speedup/P. weak: per-node sample throughput relative to the
/// baseline — each group's update covers only its own workers' samples, so
/// the per-group cadence (time_per_update * groups) is what must stay flat:
/// efficiency = T1 / (TP * G), speedup = efficiency * P.
std::vector<ScalingEntry> scaling_report(const std::vector<ScalingRun>& runs,
                                         ScalingKind kind);

void save_scaling_csv(const std::vector<ScalingEntry>& entries, const std::string& path);
/// Minimal standalone line chart, speedup vs nodes, one polyline per mode.
void save_scaling_svg(const std::vector<ScalingEntry>& entries, const std::string& path);

} // namespace hybridtrain
