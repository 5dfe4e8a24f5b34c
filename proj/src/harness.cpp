#include "hybridtrain/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hybridtrain/datagen.hpp"
#include "hybridtrain/errors.hpp"
#include "hybridtrain/runlog.hpp"

namespace hybridtrain {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& allowed) {
    if (!j.is_object())
        throw ValidationError("config: '" + section + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ValidationError("config: unknown key '" +
                                  (section.empty() ? key : section + "." + key) + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_size_map(const json& j, const char* key, const std::string& section,
                   std::map<std::size_t, double>& out) {
    if (!j.contains(key)) return;
    const json& m = j.at(key);
    if (!m.is_object())
        throw ValidationError("config: '" + section + "." + key + "' must be an object");
    out.clear();
    for (const auto& [k, v] : m.items()) {
        std::size_t idx = 0;
        try {
            idx = static_cast<std::size_t>(std::stoull(k));
        } catch (...) {
            throw ValidationError("config: non-integer key '" + k + "' in " + section +
                                  "." + key);
        }
        out[idx] = v.get<double>();
    }
}

SolverKind parse_solver_kind(const std::string& s) {
    if (s == "sgd_momentum") return SolverKind::sgd_momentum;
    if (s == "adam") return SolverKind::adam;
    throw ValidationError("config: unknown solver.kind '" + s + "'");
}

std::string solver_kind_name(SolverKind k) {
    return k == SolverKind::sgd_momentum ? "sgd_momentum" : "adam";
}

} // namespace

void ExperimentConfig::validate() const {
    if (model.kind != "hep_mini" && model.kind != "climate_mini")
        throw ValidationError("config: model.kind must be hep_mini or climate_mini");
    if (data.n == 0 && data.path.empty())
        throw ValidationError("config: data.n must be > 0");
    solver.solver.validate();
    if (solver.solver.kind == SolverKind::sgd_momentum) {
        const auto& g = solver.momentum_grid;
        if (std::find(g.begin(), g.end(), solver.solver.momentum) == g.end())
            throw ValidationError("config: solver.momentum not in the declared grid");
    }
    if (cluster.nodes.empty()) throw ValidationError("config: cluster.nodes is empty");
    if (cluster.groups.empty()) throw ValidationError("config: cluster.groups is empty");
    if (cluster.batch_mode != "strong" && cluster.batch_mode != "weak")
        throw ValidationError("config: cluster.batch_mode must be strong or weak");
    if (cluster.batch_mode == "strong") {
        if (cluster.total_batch == 0)
            throw ValidationError("config: cluster.total_batch must be > 0");
        for (std::size_t g : cluster.groups)
            if (g == 0 || cluster.total_batch % g != 0)
                throw ValidationError(
                    "config: cluster.total_batch must be divisible by every groups entry");
    } else if (cluster.batch_per_node == 0) {
        throw ValidationError("config: cluster.batch_per_node must be > 0");
    }
    network.validate();
    compute.validate();
    if (run.iterations == 0) throw ValidationError("config: run.iterations must be > 0");
    if (run.sustained_window == 0)
        throw ValidationError("config: run.sustained_window must be >= 1");
    if (out_dir.empty()) throw ValidationError("config: out_dir is empty");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: malformed JSON: ") + e.what());
    }
    reject_unknown(j, "", {"model", "data", "solver", "cluster", "network", "compute",
                           "run", "out_dir"});
    ExperimentConfig c;
    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown(m, "model",
                       {"kind", "height", "width", "channels", "filters", "classes",
                        "encoder_convs", "decoder_deconvs", "init_seed"});
        read_field(m, "kind", c.model.kind);
        read_field(m, "height", c.model.height);
        read_field(m, "width", c.model.width);
        read_field(m, "channels", c.model.channels);
        read_field(m, "filters", c.model.filters);
        read_field(m, "classes", c.model.classes);
        read_field(m, "encoder_convs", c.model.encoder_convs);
        read_field(m, "decoder_deconvs", c.model.decoder_deconvs);
        read_field(m, "init_seed", c.model.init_seed);
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, "data", {"seed", "n", "signal_fraction", "path"});
        read_field(d, "seed", c.data.seed);
        read_field(d, "n", c.data.n);
        read_field(d, "signal_fraction", c.data.signal_fraction);
        read_field(d, "path", c.data.path);
    }
    if (j.contains("solver")) {
        const json& s = j["solver"];
        reject_unknown(s, "solver", {"kind", "lr", "momentum", "beta1", "beta2",
                                     "epsilon", "momentum_grid"});
        std::string kind = solver_kind_name(c.solver.solver.kind);
        read_field(s, "kind", kind);
        c.solver.solver.kind = parse_solver_kind(kind);
        read_field(s, "lr", c.solver.solver.lr);
        read_field(s, "momentum", c.solver.solver.momentum);
        read_field(s, "beta1", c.solver.solver.beta1);
        read_field(s, "beta2", c.solver.solver.beta2);
        read_field(s, "epsilon", c.solver.solver.epsilon);
        read_field(s, "momentum_grid", c.solver.momentum_grid);
    }
    if (j.contains("cluster")) {
        const json& cl = j["cluster"];
        reject_unknown(cl, "cluster",
                       {"nodes", "groups", "batch_mode", "total_batch", "batch_per_node",
                        "overlap", "checkpoint_every", "checkpoint_seconds",
                        "degradations"});
        read_field(cl, "nodes", c.cluster.nodes);
        read_field(cl, "groups", c.cluster.groups);
        read_field(cl, "batch_mode", c.cluster.batch_mode);
        read_field(cl, "total_batch", c.cluster.total_batch);
        read_field(cl, "batch_per_node", c.cluster.batch_per_node);
        read_field(cl, "overlap", c.cluster.overlap);
        read_field(cl, "checkpoint_every", c.cluster.checkpoint_every);
        read_field(cl, "checkpoint_seconds", c.cluster.checkpoint_seconds);
        read_size_map(cl, "degradations", "cluster", c.cluster.degradations);
    }
    if (j.contains("network")) {
        const json& n = j["network"];
        reject_unknown(n, "network", {"latency_s", "bandwidth_Bps", "jitter_sigma"});
        read_field(n, "latency_s", c.network.latency_s);
        read_field(n, "bandwidth_Bps", c.network.bandwidth_Bps);
        read_field(n, "jitter_sigma", c.network.jitter_sigma);
    }
    if (j.contains("compute")) {
        const json& cm = j["compute"];
        reject_unknown(cm, "compute",
                       {"base_seconds_per_sample", "efficiency", "straggler_prob",
                        "straggler_slowdown", "nonflop_overhead_frac"});
        read_field(cm, "base_seconds_per_sample", c.compute.base_seconds_per_sample);
        read_size_map(cm, "efficiency", "compute", c.compute.efficiency);
        read_field(cm, "straggler_prob", c.compute.straggler_prob);
        read_field(cm, "straggler_slowdown", c.compute.straggler_slowdown);
        read_field(cm, "nonflop_overhead_frac", c.compute.nonflop_overhead_frac);
    }
    if (j.contains("run")) {
        const json& r = j["run"];
        reject_unknown(r, "run",
                       {"iterations", "seed", "sustained_window", "target_loss"});
        read_field(r, "iterations", c.run.iterations);
        read_field(r, "seed", c.run.seed);
        read_field(r, "sustained_window", c.run.sustained_window);
        read_field(r, "target_loss", c.run.target_loss);
    }
    read_field(j, "out_dir", c.out_dir);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json j;
    j["model"] = {{"kind", c.model.kind},
                  {"height", c.model.height},
                  {"width", c.model.width},
                  {"channels", c.model.channels},
                  {"filters", c.model.filters},
                  {"classes", c.model.classes},
                  {"encoder_convs", c.model.encoder_convs},
                  {"decoder_deconvs", c.model.decoder_deconvs},
                  {"init_seed", c.model.init_seed}};
    j["data"] = {{"seed", c.data.seed},
                 {"n", c.data.n},
                 {"signal_fraction", c.data.signal_fraction},
                 {"path", c.data.path}};
    j["solver"] = {{"kind", solver_kind_name(c.solver.solver.kind)},
                   {"lr", c.solver.solver.lr},
                   {"momentum", c.solver.solver.momentum},
                   {"beta1", c.solver.solver.beta1},
                   {"beta2", c.solver.solver.beta2},
                   {"epsilon", c.solver.solver.epsilon},
                   {"momentum_grid", c.solver.momentum_grid}};
    json deg = json::object();
    for (const auto& [k, v] : c.cluster.degradations) deg[std::to_string(k)] = v;
    j["cluster"] = {{"nodes", c.cluster.nodes},
                    {"groups", c.cluster.groups},
                    {"batch_mode", c.cluster.batch_mode},
                    {"total_batch", c.cluster.total_batch},
                    {"batch_per_node", c.cluster.batch_per_node},
                    {"overlap", c.cluster.overlap},
                    {"checkpoint_every", c.cluster.checkpoint_every},
                    {"checkpoint_seconds", c.cluster.checkpoint_seconds},
                    {"degradations", deg}};
    j["network"] = {{"latency_s", c.network.latency_s},
                    {"bandwidth_Bps", c.network.bandwidth_Bps},
                    {"jitter_sigma", c.network.jitter_sigma}};
    json eff = json::object();
    for (const auto& [k, v] : c.compute.efficiency) eff[std::to_string(k)] = v;
    j["compute"] = {{"base_seconds_per_sample", c.compute.base_seconds_per_sample},
                    {"efficiency", eff},
                    {"straggler_prob", c.compute.straggler_prob},
                    {"straggler_slowdown", c.compute.straggler_slowdown},
                    {"nonflop_overhead_frac", c.compute.nonflop_overhead_frac}};
    j["run"] = {{"iterations", c.run.iterations},
                {"seed", c.run.seed},
                {"sustained_window", c.run.sustained_window},
                {"target_loss", c.run.target_loss}};
    j["out_dir"] = c.out_dir;
    return j.dump(2);
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("--set expects key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: malformed JSON: ") + e.what());
    }
    json parsed_value = json::parse(value, nullptr, /*allow_exceptions=*/false);
    if (parsed_value.is_discarded()) parsed_value = value;

    json* cur = &j;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        if (key.empty())
            throw ValidationError("--set: empty key component in '" + path + "'");
        if (dot == std::string::npos) {
            // scalar --set on a list-valued field replaces the whole list
            if (cur->contains(key) && (*cur)[key].is_array() && !parsed_value.is_array())
                (*cur)[key] = json::array({parsed_value});
            else
                (*cur)[key] = parsed_value;
            break;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
    return j.dump(2);
}

Network build_model(const ModelConfig& mc) {
    Network net;
    if (mc.kind == "hep_mini")
        net = build_hep_mini(mc.height, mc.width, mc.channels, mc.filters);
    else if (mc.kind == "climate_mini")
        net = build_climate_mini(mc.height, mc.width, mc.channels, mc.classes,
                                 mc.encoder_convs, mc.decoder_deconvs, mc.filters);
    else
        throw ValidationError("config: model.kind must be hep_mini or climate_mini");
    net.init_params(mc.init_seed);
    return net;
}

LoadedData obtain_data(const ExperimentConfig& cfg) {
    LoadedData out;
    const bool hep = cfg.model.kind == "hep_mini";
    if (!cfg.data.path.empty()) {
        const DatasetKind kind = peek_dataset_kind(cfg.data.path);
        if (hep != (kind == DatasetKind::hep))
            throw ValidationError("config: data.path dataset kind does not match model.kind");
        if (hep)
            out.hep = load_hep_dataset(cfg.data.path);
        else
            out.climate = load_climate_dataset(cfg.data.path);
        return out;
    }
    if (hep) {
        HepGenParams p;
        p.height = cfg.model.height;
        p.width = cfg.model.width;
        out.hep = gen_hep(cfg.data.seed, cfg.data.n, cfg.data.signal_fraction, p);
    } else {
        ClimateGenParams p;
        p.channels = cfg.model.channels;
        p.height = cfg.model.height;
        p.width = cfg.model.width;
        out.climate = gen_climate(cfg.data.seed, cfg.data.n, p);
    }
    return out;
}

std::unique_ptr<TrainingProblem> make_problem(const LoadedData& data) {
    if (data.hep) return std::make_unique<HepProblem>(*data.hep);
    if (data.climate) return std::make_unique<ClimateProblem>(*data.climate);
    throw ValidationError("make_problem: no dataset loaded");
}

std::optional<double> time_to_loss(const RunLog& log, double target_loss) {
    constexpr std::size_t kTrail = 5;
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        const std::size_t lo = i + 1 >= kTrail ? i + 1 - kTrail : 0;
        double sum = 0;
        for (std::size_t k = lo; k <= i; ++k) sum += log.records[k].loss;
        if (sum / static_cast<double>(i - lo + 1) <= target_loss)
            return log.records[i].sim_time_end_s;
    }
    return std::nullopt;
}

void save_model(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os.write("DLSM", 4);
    const std::uint32_t version = 1;
    const std::uint64_t count = net.param_count();
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&count), 8);
    for (const Tensor& t : net.snapshot_params())
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!os) throw ValidationError("write failed: " + path);
}

void load_model(Network& net, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DLSM", 4) != 0)
        throw FormatError("bad model file magic in " + path);
    std::uint32_t version;
    std::uint64_t count;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&count), 8);
    if (!is || version != 1) throw FormatError("bad model file header in " + path);
    if (count != net.param_count())
        throw ValidationError("model file has " + std::to_string(count) +
                              " parameters, network expects " +
                              std::to_string(net.param_count()));
    std::vector<Tensor> snap = net.snapshot_params();
    for (Tensor& t : snap) {
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw FormatError("model file truncated: " + path);
    }
    net.restore_params(snap);
}

std::uint64_t input_content_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<std::uint8_t>(p[i]);
            h *= 0x100000001b3ULL;
        }
    };
    const std::string cj = serialize_config(cfg);
    mix(cj.data(), cj.size());
    if (!cfg.data.path.empty()) {
        std::ifstream is(cfg.data.path, std::ios::binary);
        if (!is) throw ValidationError("config: cannot open '" + cfg.data.path + "'");
        char buf[65536];
        while (is.read(buf, sizeof buf) || is.gcount() > 0)
            mix(buf, static_cast<std::size_t>(is.gcount()));
    }
    return h;
}

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
    json m;
    m["config"] = json::parse(serialize_config(cfg));
    m["seed"] = cfg.run.seed;
    char hex[19];
    std::snprintf(hex, sizeof hex, "0x%016llx",
                  static_cast<unsigned long long>(input_content_hash(cfg)));
    m["content_hash"] = hex;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << m.dump(2) << "\n";
}

RunLog run_cell(const ExperimentConfig& cfg, const LoadedData& data, std::size_t nodes,
                std::size_t groups, Network* final_net) {
    Network net = build_model(cfg.model);
    ClusterPlan plan =
        plan_cluster(nodes + net.trainable_layer_count(), groups, net);
    for (const auto& [node, slow] : cfg.cluster.degradations)
        plan = inject_degradation(plan, node, slow);

    SimOptions opts;
    opts.iterations = cfg.run.iterations;
    opts.seed = cfg.run.seed;
    opts.overlap = cfg.cluster.overlap;
    opts.checkpoint_every = cfg.cluster.checkpoint_every;
    opts.checkpoint_seconds = cfg.cluster.checkpoint_seconds;
    opts.batch_per_group = cfg.cluster.batch_mode == "strong"
                               ? cfg.cluster.total_batch
                               : cfg.cluster.batch_per_node * plan.workers_per_group;

    std::unique_ptr<TrainingProblem> problem = make_problem(data);
    RunLog log = run_training(plan, net, *problem, cfg.solver.solver, cfg.network,
                              cfg.compute, opts);
    if (final_net) *final_net = std::move(net);
    return log;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, const LoadedData& data,
                                 ScalingKind kind, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<SweepCell> cells;
    for (std::size_t nodes : cfg.cluster.nodes)
        for (std::size_t groups : cfg.cluster.groups) {
            SweepCell cell;
            cell.nodes = nodes;
            cell.groups = groups;
            cell.mode = groups == 1 ? "sync" : "hybrid" + std::to_string(groups);
            if (nodes < groups) {  // would leave a group without workers
                cell.feasible = false;
                cells.push_back(std::move(cell));
                continue;
            }
            cell.log = run_cell(cfg, data, nodes, groups);
            cell.log_csv = out_dir + "/run_" + cell.mode + "_n" +
                           std::to_string(nodes) + ".csv";
            save_runlog_csv(cell.log, cell.log_csv);
            cells.push_back(std::move(cell));
        }

    std::vector<ScalingRun> runs;
    for (const SweepCell& c : cells)
        if (c.feasible && !c.log.diverged)
            runs.push_back({c.nodes, c.groups, c.mode, &c.log});
    const std::string tag = kind == ScalingKind::strong ? "strong" : "weak";
    const std::vector<ScalingEntry> entries = scaling_report(runs, kind);
    save_scaling_csv(entries, out_dir + "/scaling_" + tag + ".csv");
    save_scaling_svg(entries, out_dir + "/scaling_" + tag + ".svg");

    json manifest;
    manifest["kind"] = tag;
    manifest["cells"] = json::array();
    for (const SweepCell& c : cells)
        manifest["cells"].push_back({{"nodes", c.nodes},
                                     {"groups", c.groups},
                                     {"mode", c.mode},
                                     {"feasible", c.feasible},
                                     {"diverged", c.feasible && c.log.diverged},
                                     {"csv", c.log_csv}});
    std::ofstream os(out_dir + "/sweep_manifest.json", std::ios::trunc);
    os << manifest.dump(2) << "\n";
    return cells;
}

namespace {

std::string load_config_text(const std::string& path,
                             const std::vector<std::string>& overrides) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    std::string text = ss.str();
    for (const std::string& o : overrides) text = apply_override(text, o);
    return text;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const LoadedData data = obtain_data(cfg);
    const std::string path =
        cfg.out_dir + (data.hep ? "/hep.dlsd" : "/climate.dlsd");
    if (data.hep)
        save_dataset(*data.hep, path);
    else
        save_dataset(*data.climate, path);
    write_manifest(cfg, cfg.out_dir + "/manifest.json");
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const LoadedData data = obtain_data(cfg);
    Network net;
    const RunLog log =
        run_cell(cfg, data, cfg.cluster.nodes.front(), cfg.cluster.groups.front(), &net);
    save_runlog_csv(log, cfg.out_dir + "/runlog.csv");
    save_runlog(log, cfg.out_dir + "/runlog.dlsd");
    save_model(net, cfg.out_dir + "/model.dlsm");
    write_manifest(cfg, cfg.out_dir + "/manifest.json");
    if (log.records.size() >= cfg.run.sustained_window) {
        const PeakSustained ps = peak_sustained(log, cfg.run.sustained_window);
        std::ofstream os(cfg.out_dir + "/peak_sustained.csv", std::ios::trunc);
        os.precision(17);
        os << "peak_flops_per_s,sustained_flops_per_s\n"
           << ps.peak_flops_per_s << "," << ps.sustained_flops_per_s << "\n";
    }
    if (log.diverged) {
        std::cerr << "run diverged at global step " << log.divergence_global_step << "\n";
        return 2;
    }
    std::cout << "wrote " << cfg.out_dir << "/runlog.csv (" << log.records.size()
              << " updates)\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, ScalingKind kind) {
    const LoadedData data = obtain_data(cfg);
    const std::vector<SweepCell> cells = run_sweep(cfg, data, kind, cfg.out_dir);
    write_manifest(cfg, cfg.out_dir + "/manifest.json");
    bool diverged = false;
    for (const SweepCell& c : cells)
        if (c.feasible && c.log.diverged) diverged = true;
    std::cout << "wrote " << cfg.out_dir << "/scaling_"
              << (kind == ScalingKind::strong ? "strong" : "weak") << ".csv\n";
    return diverged ? 2 : 0;
}

int cmd_sweep_groups(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const LoadedData data = obtain_data(cfg);
    std::ofstream table(cfg.out_dir + "/time_to_loss.csv", std::ios::trunc);
    table.precision(17);
    table << "momentum,groups,diverged,time_to_target_s\n";
    for (double mu : cfg.solver.momentum_grid)
        for (std::size_t groups : cfg.cluster.groups) {
            ExperimentConfig cell = cfg;
            cell.solver.solver.momentum = mu;
            const RunLog log = run_cell(cell, data, cfg.cluster.nodes.front(), groups);
            std::ostringstream name;
            name << cfg.out_dir << "/groups_m" << mu << "_g" << groups << ".csv";
            save_runlog_csv(log, name.str());
            const std::optional<double> t = time_to_loss(log, cfg.run.target_loss);
            table << mu << "," << groups << "," << (log.diverged ? 1 : 0) << ",";
            if (t)
                table << *t << "\n";
            else
                table << "never\n";
        }
    write_manifest(cfg, cfg.out_dir + "/manifest.json");
    std::cout << "wrote " << cfg.out_dir << "/time_to_loss.csv\n";
    return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
    const std::string manifest_path = cfg.out_dir + "/sweep_manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw ValidationError("report: cannot open '" + manifest_path + "'");
    json m;
    try {
        is >> m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: malformed sweep manifest: ") + e.what());
    }
    const std::string tag = m.at("kind").get<std::string>();
    const ScalingKind kind = tag == "strong" ? ScalingKind::strong : ScalingKind::weak;
    std::vector<RunLog> logs;
    std::vector<ScalingRun> runs;
    for (const json& c : m.at("cells")) {
        if (!c.at("feasible").get<bool>() || c.at("diverged").get<bool>()) continue;
        logs.push_back(load_runlog_csv(c.at("csv").get<std::string>()));
        runs.push_back({c.at("nodes").get<std::size_t>(), c.at("groups").get<std::size_t>(),
                        c.at("mode").get<std::string>(), nullptr});
    }
    for (std::size_t i = 0; i < runs.size(); ++i) runs[i].log = &logs[i];
    const std::vector<ScalingEntry> entries = scaling_report(runs, kind);
    save_scaling_csv(entries, cfg.out_dir + "/scaling_" + tag + ".csv");
    save_scaling_svg(entries, cfg.out_dir + "/scaling_" + tag + ".svg");
    std::cout << "rebuilt " << cfg.out_dir << "/scaling_" << tag << ".csv from "
              << runs.size() << " runs\n";
    return 0;
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Hybrid sync/async distributed-training simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string subcommand;
    for (const char* name : {"gen-data", "train", "sweep-strong", "sweep-weak",
                             "sweep-groups", "report"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--set", overrides, "override: section.key=value");
        sub->callback([&subcommand, name] { subcommand = name; });
    }

    try {
        app.parse(argc, argv);
        const ExperimentConfig cfg =
            parse_config(load_config_text(config_path, overrides));
        if (subcommand == "gen-data") return cmd_gen_data(cfg);
        if (subcommand == "train") return cmd_train(cfg);
        if (subcommand == "sweep-strong") return cmd_sweep(cfg, ScalingKind::strong);
        if (subcommand == "sweep-weak") return cmd_sweep(cfg, ScalingKind::weak);
        if (subcommand == "sweep-groups") return cmd_sweep_groups(cfg);
        if (subcommand == "report") return cmd_report(cfg);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace hybridtrain
