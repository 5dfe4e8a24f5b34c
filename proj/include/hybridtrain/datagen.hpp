#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hybridtrain/models.hpp"
#include "hybridtrain/tensor.hpp"

namespace hybridtrain {

/// Synthetic calorimeter-style event. Channels: electromagnetic-like,
/// hadronic-like, track-count-like. Row index increases with y (bottom-up).
struct HepSample {
    Tensor image;  // [3,H,W]
    int label = 0; // 1 = signal
    std::array<double, 3> features{};  // total energy, hit count, max-cluster energy
};

struct ClimateSample {
    Tensor image;  // [C,H,W]
    std::vector<BoxTarget> boxes;
};

struct HepDataset {
    std::uint64_t seed = 0;
    std::size_t height = 32, width = 32;
    std::vector<HepSample> samples;
};

struct ClimateDataset {
    std::uint64_t seed = 0;
    std::size_t channels = 8, height = 64, width = 64;
    std::vector<ClimateSample> samples;
};

enum class Split { train, val, test };

/// 80/10/10 split from a per-sample hash of (dataset seed, index).
Split sample_split(std::uint64_t dataset_seed, std::uint64_t index);

struct HepGenParams {
    std::size_t height = 32, width = 32;
    double cluster_rate = 4.0;        // Poisson mean of background clusters
    double energy_scale = 8.0;        // exponential mean of cluster amplitude
    double signal_energy_boost = 2.0; // motif clusters vs background clusters
    std::size_t motif_clusters = 3;
    double motif_radius = 3.0;
};

HepDataset gen_hep(std::uint64_t seed, std::size_t n, double signal_fraction,
                   const HepGenParams& params = {});

struct ClimateGenParams {
    std::size_t channels = 8, height = 64, width = 64;
    std::size_t max_boxes = 3;
};

ClimateDataset gen_climate(std::uint64_t seed, std::size_t n,
                           const ClimateGenParams& params = {});

void save_dataset(const HepDataset& ds, const std::string& path);
void save_dataset(const ClimateDataset& ds, const std::string& path);

enum class DatasetKind : std::uint32_t { hep = 0, climate = 1, runlog = 2 };

DatasetKind peek_dataset_kind(const std::string& path);
HepDataset load_hep_dataset(const std::string& path);
ClimateDataset load_climate_dataset(const std::string& path);

std::vector<std::size_t> split_indices(std::uint64_t dataset_seed, std::size_t n, Split split);

} // namespace hybridtrain
