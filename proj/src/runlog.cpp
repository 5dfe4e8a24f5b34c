#include "hybridtrain/runlog.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hybridtrain/errors.hpp"

namespace hybridtrain {

double RunLog::span_seconds() const {
    if (records.empty()) return 0.0;
    double lo = records.front().sim_time_start_s;
    double hi = records.front().sim_time_end_s;
    for (const RunRecord& r : records) {
        lo = std::min(lo, r.sim_time_start_s);
        hi = std::max(hi, r.sim_time_end_s);
    }
    return hi - lo;
}

double RunLog::time_per_update() const {
    if (records.empty()) throw ValidationError("time_per_update on empty run log");
    return span_seconds() / static_cast<double>(records.size());
}

void save_runlog_csv(const RunLog& log, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ValidationError("cannot open for writing: " + path);
    std::fprintf(f, "%s\n", kRunLogCsvHeader);
    for (const RunRecord& r : log.records)
        std::fprintf(f, "%" PRIu64 ",%u,%.17g,%.17g,%.17g,%" PRIu64 ",%" PRIu64 ",%" PRIu64 "\n",
                     r.iter, r.group, r.sim_time_start_s, r.sim_time_end_s, r.loss,
                     r.global_step, r.staleness, r.flops);
    std::fclose(f);
}

RunLog load_runlog_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kRunLogCsvHeader)
        throw FormatError("bad run log CSV header in " + path);
    RunLog log;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        RunRecord r;
        unsigned group = 0;
        if (std::sscanf(line.c_str(),
                        "%" SCNu64 ",%u,%lg,%lg,%lg,%" SCNu64 ",%" SCNu64 ",%" SCNu64,
                        &r.iter, &group, &r.sim_time_start_s, &r.sim_time_end_s, &r.loss,
                        &r.global_step, &r.staleness, &r.flops) != 8)
            throw FormatError("bad run log CSV row: " + line);
        r.group = group;
        log.records.push_back(r);
    }
    return log;
}

namespace {

constexpr char kMagic[4] = {'D', 'L', 'S', 'D'};

} // namespace

void save_runlog(const RunLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    const std::uint32_t version = 1, kind = 2;
    const std::uint32_t count = static_cast<std::uint32_t>(log.records.size());
    const std::uint32_t diverged = log.diverged ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&count), 4);
    os.write(reinterpret_cast<const char*>(&kind), 4);
    os.write(reinterpret_cast<const char*>(&diverged), 4);
    os.write(reinterpret_cast<const char*>(&log.divergence_global_step), 8);
    for (const RunRecord& r : log.records)
        os.write(reinterpret_cast<const char*>(&r), sizeof(RunRecord));
    if (!os) throw ValidationError("write failed: " + path);
}

RunLog load_runlog(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad run log magic");
    std::uint32_t version, count, kind, diverged;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&count), 4);
    is.read(reinterpret_cast<char*>(&kind), 4);
    is.read(reinterpret_cast<char*>(&diverged), 4);
    RunLog log;
    is.read(reinterpret_cast<char*>(&log.divergence_global_step), 8);
    if (!is || version != 1 || kind != 2)
        throw FormatError("bad run log header");
    log.diverged = diverged != 0;
    log.records.resize(count);
    for (RunRecord& r : log.records) {
        is.read(reinterpret_cast<char*>(&r), sizeof(RunRecord));
        if (!is) throw FormatError("run log truncated");
    }
    return log;
}

} // namespace hybridtrain
