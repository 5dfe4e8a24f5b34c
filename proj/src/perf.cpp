#include "hybridtrain/perf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace hybridtrain {

LayerFlops layer_flops(const Layer& layer, std::array<std::size_t, 3> in_chw,
                       std::size_t batch) {
    if (batch == 0) throw ValidationError("layer_flops: batch must be > 0");
    const std::uint64_t N = batch;
    const std::size_t C = in_chw[0], H = in_chw[1], W = in_chw[2];
    LayerFlops f;
    switch (layer.kind) {
        case LayerKind::conv: {
            const ConvSpec& s = layer.spec;
            const std::uint64_t ho = (H + 2 * s.pad - s.kernel_h) / s.stride + 1;
            const std::uint64_t wo = (W + 2 * s.pad - s.kernel_w) / s.stride + 1;
            f.forward = 2ULL * s.kernel_h * s.kernel_w * s.in_channels * s.out_channels *
                        ho * wo * N;
            f.backward = 2 * f.forward;  // data pass + weight pass
            break;
        }
        case LayerKind::deconv: {
            // counted via the equivalent convolution, whose output is this
            // layer's input
            const ConvSpec& s = layer.spec;
            f.forward = 2ULL * s.kernel_h * s.kernel_w * s.in_channels * s.out_channels *
                        H * W * N;
            f.backward = 2 * f.forward;
            break;
        }
        case LayerKind::pool: {
            if (layer.pool == PoolKind::max2x2_stride2)
                f.forward = N * C * (H / 2) * (W / 2);
            else
                f.forward = N * C;
            f.backward = f.forward;
            break;
        }
        case LayerKind::relu: {
            f.forward = N * C * H * W;
            f.backward = f.forward;
            break;
        }
        case LayerKind::dense: {
            f.forward = 2ULL * layer.in_dim * layer.out_dim * N;
            f.backward = 2 * f.forward;
            break;
        }
    }
    return f;
}

namespace {

std::array<std::size_t, 3> layer_out_shape(const Layer& l, std::array<std::size_t, 3> in) {
    switch (l.kind) {
        case LayerKind::conv: {
            const ConvSpec& s = l.spec;
            return {s.out_channels, (in[1] + 2 * s.pad - s.kernel_h) / s.stride + 1,
                    (in[2] + 2 * s.pad - s.kernel_w) / s.stride + 1};
        }
        case LayerKind::deconv: {
            const ConvSpec& s = l.spec;
            return {s.in_channels, (in[1] - 1) * s.stride + s.kernel_h - 2 * s.pad,
                    (in[2] - 1) * s.stride + s.kernel_w - 2 * s.pad};
        }
        case LayerKind::pool:
            if (l.pool == PoolKind::max2x2_stride2) return {in[0], in[1] / 2, in[2] / 2};
            return {in[0], 1, 1};
        case LayerKind::relu:
            return in;
        case LayerKind::dense:
            return {l.out_dim, 1, 1};
    }
    return in;
}

} // namespace

FlopModel model_flops(const Network& net, std::size_t batch) {
    FlopModel m;
    std::array<std::size_t, 3> cur = {net.input_c, net.input_h, net.input_w};
    auto add = [&m](const Layer& l, const LayerFlops& f) {
        m.layers.push_back({l.name, f});
        m.forward_total += f.forward;
        m.backward_total += f.backward;
    };
    for (const Layer& l : net.trunk) {
        add(l, layer_flops(l, cur, batch));
        cur = layer_out_shape(l, cur);
    }
    const std::array<std::size_t, 3> enc = cur;
    for (const Layer& l : net.heads) add(l, layer_flops(l, enc, batch));
    cur = enc;
    for (const Layer& l : net.decoder) {
        add(l, layer_flops(l, cur, batch));
        cur = layer_out_shape(l, cur);
    }
    return m;
}

PeakSustained peak_sustained(const RunLog& log, std::size_t window) {
    if (window == 0) throw ValidationError("peak_sustained: window must be >= 1");
    if (log.records.size() < window)
        throw ValidationError("peak_sustained: window larger than run log");
    PeakSustained r;
    double min_dt = 0.0;
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        const double dt = log.records[i].sim_time_end_s - log.records[i].sim_time_start_s;
        if (i == 0 || dt < min_dt) min_dt = dt;
    }
    const double flops = static_cast<double>(log.records.front().flops);
    r.peak_flops_per_s = flops / min_dt;

    double best_window = 0.0;
    for (std::size_t i = 0; i + window <= log.records.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < window; ++j)
            sum += log.records[i + j].sim_time_end_s - log.records[i + j].sim_time_start_s;
        if (i == 0 || sum < best_window) best_window = sum;
    }
    r.sustained_flops_per_s = flops * static_cast<double>(window) / best_window;
    return r;
}

std::vector<ScalingEntry> scaling_report(const std::vector<ScalingRun>& runs,
                                         ScalingKind kind) {
    double t1 = -1.0;
    for (const ScalingRun& r : runs)
        if (r.nodes == 1) t1 = r.log->time_per_update() * static_cast<double>(r.groups);
    if (t1 < 0.0)
        throw ValidationError("scaling_report: missing 1-node baseline run");
    std::vector<ScalingEntry> out;
    for (const ScalingRun& r : runs) {
        ScalingEntry e;
        e.nodes = r.nodes;
        e.groups = r.groups;
        e.mode = r.mode;
        e.time_per_update = r.log->time_per_update();
        if (kind == ScalingKind::strong) {
            e.speedup = t1 / e.time_per_update;
            e.efficiency = e.speedup / static_cast<double>(r.nodes);
        } else {
            e.efficiency = t1 / (e.time_per_update * static_cast<double>(r.groups));
            e.speedup = e.efficiency * static_cast<double>(r.nodes);
        }
        out.push_back(e);
    }
    return out;
}

void save_scaling_csv(const std::vector<ScalingEntry>& entries, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << "nodes,groups,mode,time_per_update_s,speedup,efficiency\n";
    os.precision(17);
    for (const ScalingEntry& e : entries)
        os << e.nodes << "," << e.groups << "," << e.mode << "," << e.time_per_update
           << "," << e.speedup << "," << e.efficiency << "\n";
}

void save_scaling_svg(const std::vector<ScalingEntry>& entries, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    const int w = 640, h = 480, margin = 56;
    double max_speedup = 1.0, max_nodes = 1.0;
    for (const ScalingEntry& e : entries) {
        max_speedup = std::max(max_speedup, e.speedup);
        max_nodes = std::max(max_nodes, static_cast<double>(e.nodes));
    }
    const double lx = std::log2(std::max(max_nodes, 2.0));
    auto X = [&](double nodes) {
        return margin + (w - 2 * margin) * std::log2(std::max(nodes, 1.0)) / lx;
    };
    auto Y = [&](double sp) { return h - margin - (h - 2 * margin) * sp / max_speedup; };

    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin
       << "' y2='" << h - margin << "' stroke='black'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << h - margin << "' stroke='black'/>\n";
    os << "<text x='" << w / 2 << "' y='" << h - 12 << "' font-size='13'>nodes (log2)</text>\n";
    os << "<text x='12' y='" << h / 2 << "' font-size='13' transform='rotate(-90 12 "
       << h / 2 << ")'>speedup</text>\n";

    std::set<std::string> modes;
    for (const ScalingEntry& e : entries) modes.insert(e.mode);
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    int ci = 0;
    int ly = margin;
    for (const std::string& mode : modes) {
        std::vector<std::pair<double, double>> pts;
        for (const ScalingEntry& e : entries)
            if (e.mode == mode) pts.push_back({static_cast<double>(e.nodes), e.speedup});
        std::sort(pts.begin(), pts.end());
        os << "<polyline fill='none' stroke='" << colors[ci % 5] << "' stroke-width='2' points='";
        for (auto& [n, sp] : pts) os << X(n) << "," << Y(sp) << " ";
        os << "'/>\n";
        os << "<text x='" << w - margin - 120 << "' y='" << ly << "' fill='" << colors[ci % 5]
           << "' font-size='13'>" << mode << "</text>\n";
        ly += 16;
        ++ci;
    }
    os << "</svg>\n";
}

} // namespace hybridtrain
