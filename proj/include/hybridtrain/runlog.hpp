#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hybridtrain {

struct RunRecord {
    std::uint64_t iter = 0;      // per-group iteration index
    std::uint32_t group = 0;
    double sim_time_start_s = 0;
    double sim_time_end_s = 0;
    double loss = 0;
    std::uint64_t global_step = 0;  // value after this update was applied
    std::uint64_t staleness = 0;
    std::uint64_t flops = 0;
};

struct RunLog {
    std::vector<RunRecord> records;  // in PS application order
    bool diverged = false;
    std::uint64_t divergence_global_step = 0;

    double span_seconds() const;
    double time_per_update() const;  // span / updates
};

inline constexpr const char* kRunLogCsvHeader =
    "iter,group,sim_time_start_s,sim_time_end_s,loss,global_step,staleness,flops";

void save_runlog_csv(const RunLog& log, const std::string& path);
RunLog load_runlog_csv(const std::string& path);

// binary container (same DLSD framing as the dataset files)
void save_runlog(const RunLog& log, const std::string& path);
RunLog load_runlog(const std::string& path);

} // namespace hybridtrain
