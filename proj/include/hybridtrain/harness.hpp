#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hybridtrain/cluster.hpp"
#include "hybridtrain/models.hpp"
#include "hybridtrain/perf.hpp"
#include "hybridtrain/solvers.hpp"

namespace hybridtrain {

struct ModelConfig {
    std::string kind = "hep_mini";  // or "climate_mini"
    std::size_t height = 32, width = 32, channels = 3, filters = 16;
    std::size_t classes = 2, encoder_convs = 3, decoder_deconvs = 3;
    std::uint64_t init_seed = 7;
};

struct DataConfig {
    std::uint64_t seed = 1;
    std::size_t n = 2000;
    double signal_fraction = 0.2;  // hep only
    std::string path;              // if set, load instead of generate
};

struct SolverSection {
    SolverConfig solver;
    std::vector<double> momentum_grid = {0.0, 0.4, 0.7};
};

struct ClusterConfig {
    /// Compute nodes per sweep cell; parameter servers are added on top
    /// (the paper counts "N compute nodes plus L parameter servers").
    std::vector<std::size_t> nodes = {64};
    std::vector<std::size_t> groups = {1};
    std::string batch_mode = "strong";  // "strong" | "weak"
    std::size_t total_batch = 2048;     // strong: every group runs the full batch
    std::size_t batch_per_node = 8;     // weak
    bool overlap = false;
    std::size_t checkpoint_every = 10;
    double checkpoint_seconds = 0.0;
    std::map<std::size_t, double> degradations;  // worker node id -> slowdown
};

struct RunSection {
    std::size_t iterations = 100;  // per group
    std::uint64_t seed = 0;
    std::size_t sustained_window = 10;
    double target_loss = 0.5;  // for time-to-loss tables
};

struct ExperimentConfig {
    ModelConfig model;
    DataConfig data;
    SolverSection solver;
    ClusterConfig cluster;
    NetworkModel network;
    ComputeModel compute;
    RunSection run;
    std::string out_dir = "out";

    void validate() const;
};

/// Strict JSON parse: unknown keys are errors naming the offending field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Applies one `--set section.key=value` override (value parsed as JSON when
/// possible, else taken as a string) to raw JSON text.
std::string apply_override(const std::string& json_text, const std::string& assignment);

Network build_model(const ModelConfig& mc);

struct LoadedData {
    std::optional<HepDataset> hep;
    std::optional<ClimateDataset> climate;
};

/// Generates from data.seed or loads data.path, matching model.kind.
LoadedData obtain_data(const ExperimentConfig& cfg);
std::unique_ptr<TrainingProblem> make_problem(const LoadedData& data);

/// First simulated time at which the trailing-5 mean loss reaches the target;
/// nullopt = never.
std::optional<double> time_to_loss(const RunLog& log, double target_loss);

void save_model(const Network& net, const std::string& path);
void load_model(Network& net, const std::string& path);

/// FNV-1a content hash of the serialized config plus the dataset bytes
/// (or generator parameters); stored in the manifest for reproducibility.
std::uint64_t input_content_hash(const ExperimentConfig& cfg);
void write_manifest(const ExperimentConfig& cfg, const std::string& path);

struct SweepCell {
    std::size_t nodes = 0, groups = 1;
    std::string mode;
    std::string log_csv;  // path written
    bool feasible = true;
    RunLog log;
};

/// One training run at `nodes` compute nodes / `groups` groups; batch per
/// group follows cfg.cluster.batch_mode. Model is freshly initialized from
/// model.init_seed so every cell starts identically.
RunLog run_cell(const ExperimentConfig& cfg, const LoadedData& data,
                std::size_t nodes, std::size_t groups, Network* final_net = nullptr);

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, const LoadedData& data,
                                 ScalingKind kind, const std::string& out_dir);

/// CLI entry point (subcommands gen-data / train / sweep-strong / sweep-weak /
/// sweep-groups / report). Returns the process exit code: 0 ok, 1 validation
/// or usage error, 2 divergence.
int cli_main(int argc, char** argv);

} // namespace hybridtrain
