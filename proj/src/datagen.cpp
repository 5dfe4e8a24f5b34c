#include "hybridtrain/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace hybridtrain {

Split sample_split(std::uint64_t dataset_seed, std::uint64_t index) {
    const std::uint64_t h = derive_seed(dataset_seed, "split", index) % 10;
    if (h < 8) return Split::train;
    return h == 8 ? Split::val : Split::test;
}

std::vector<std::size_t> split_indices(std::uint64_t dataset_seed, std::size_t n, Split split) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
        if (sample_split(dataset_seed, i) == split) idx.push_back(i);
    return idx;
}

namespace {

struct Cluster {
    double cx, cy, sigma, amplitude, em_frac;
};

// splash a Gaussian blob onto EM/HAD channels; tracks land on the center pixel
void deposit_cluster(Tensor& img, const Cluster& c, Rng& rng) {
    const std::size_t H = img.shape[2], W = img.shape[3];  // img is [1,3,H,W]
    const long r = static_cast<long>(std::ceil(2.0 * c.sigma));
    const long icx = static_cast<long>(std::lround(c.cx));
    const long icy = static_cast<long>(std::lround(c.cy));
    for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
            const long x = icx + dx, y = icy + dy;
            if (x < 0 || y < 0 || x >= static_cast<long>(W) || y >= static_cast<long>(H))
                continue;
            const double ddx = static_cast<double>(x) - c.cx;
            const double ddy = static_cast<double>(y) - c.cy;
            const double v = c.amplitude *
                             std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * c.sigma * c.sigma));
            if (v < 1e-3) continue;
            img.at4(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
                v * c.em_frac;
            img.at4(0, 1, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
                v * (1.0 - c.em_frac);
        }
    if (icx >= 0 && icy >= 0 && icx < static_cast<long>(W) && icy < static_cast<long>(H))
        img.at4(0, 2, static_cast<std::size_t>(icy), static_cast<std::size_t>(icx)) +=
            static_cast<double>(rng.poisson(2.0) + 1);
}

struct HepEvent {
    Tensor image;
    std::array<double, 3> features;
    double total_energy;
};

HepEvent make_hep_event(Rng& rng, const HepGenParams& p, bool signal) {
    HepEvent ev;
    ev.image = Tensor::zeros({1, 3, p.height, p.width});
    const double margin = 2.0;
    std::vector<Cluster> clusters;
    std::size_t k = std::min<std::uint64_t>(rng.poisson(p.cluster_rate), 6);
    for (std::size_t i = 0; i < k; ++i) {
        Cluster c;
        c.cx = margin + rng.uniform() * (static_cast<double>(p.width) - 2 * margin);
        c.cy = margin + rng.uniform() * (static_cast<double>(p.height) - 2 * margin);
        c.sigma = 0.6 + 0.5 * rng.uniform();
        c.amplitude = -p.energy_scale * std::log(std::max(rng.uniform(), 1e-12));
        c.em_frac = 0.3 + 0.6 * rng.uniform();
        clusters.push_back(c);
    }
    if (signal) {
        const double mx = margin + p.motif_radius +
                          rng.uniform() * (static_cast<double>(p.width) -
                                           2 * (margin + p.motif_radius));
        const double my = margin + p.motif_radius +
                          rng.uniform() * (static_cast<double>(p.height) -
                                           2 * (margin + p.motif_radius));
        for (std::size_t i = 0; i < p.motif_clusters; ++i) {
            const double ang = rng.uniform() * 6.283185307179586;
            const double rad = rng.uniform() * p.motif_radius;
            Cluster c;
            c.cx = mx + rad * std::cos(ang);
            c.cy = my + rad * std::sin(ang);
            c.sigma = 0.6 + 0.3 * rng.uniform();
            c.amplitude = p.signal_energy_boost * -p.energy_scale *
                          std::log(std::max(rng.uniform(), 1e-12));
            c.em_frac = 0.3 + 0.6 * rng.uniform();
            clusters.push_back(c);
        }
    }
    double max_cluster = 0.0;
    for (const Cluster& c : clusters) {
        deposit_cluster(ev.image, c, rng);
        max_cluster = std::max(max_cluster, c.amplitude);
    }
    double total = 0.0;
    std::size_t hits = 0;
    const std::size_t px = p.height * p.width;
    for (std::size_t i = 0; i < 2 * px; ++i) total += ev.image.data[i];
    for (std::size_t i = 0; i < px; ++i) {
        bool hit = false;
        for (std::size_t ch = 0; ch < 3; ++ch)
            if (ev.image.data[ch * px + i] != 0.0) hit = true;
        if (hit) ++hits;
    }
    ev.total_energy = total;
    ev.features = {total, static_cast<double>(hits), max_cluster};
    return ev;
}

} // namespace

HepDataset gen_hep(std::uint64_t seed, std::size_t n, double signal_fraction,
                   const HepGenParams& params) {
    if (n == 0) throw ValidationError("gen_hep: n must be > 0");
    if (!(signal_fraction > 0.0 && signal_fraction < 1.0))
        throw ValidationError("gen_hep: signal_fraction must be in (0,1)");

    HepDataset ds;
    ds.seed = seed;
    ds.height = params.height;
    ds.width = params.width;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = stream(seed, "hep", i);
        const bool signal = rng.uniform() < signal_fraction;
        HepEvent ev = make_hep_event(rng, params, signal);
        HepSample s;
        s.image = Tensor({3, params.height, params.width}, std::move(ev.image.data));
        s.label = signal ? 1 : 0;
        s.features = ev.features;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

void clamp_box(BoxTarget& b) {
    b.x = std::clamp(b.x, 0.0, 1.0);
    b.y = std::clamp(b.y, 0.0, 1.0);
    b.w = std::min(b.w, 1.0 - b.x);
    b.h = std::min(b.h, 1.0 - b.y);
    b.w = std::max(b.w, 1e-3);
    b.h = std::max(b.h, 1e-3);
}

} // namespace

ClimateDataset gen_climate(std::uint64_t seed, std::size_t n,
                           const ClimateGenParams& p) {
    if (n == 0) throw ValidationError("gen_climate: n must be > 0");
    ClimateDataset ds;
    ds.seed = seed;
    ds.channels = p.channels;
    ds.height = p.height;
    ds.width = p.width;
    ds.samples.reserve(n);
    const double W = static_cast<double>(p.width), H = static_cast<double>(p.height);
    const std::size_t grid_h = p.height / 8, grid_w = p.width / 8;

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = stream(seed, "climate", i);
        ClimateSample s;
        s.image = Tensor::zeros({p.channels, p.height, p.width});
        // smooth background: three low-frequency sinusoids per channel
        for (std::size_t c = 0; c < p.channels; ++c) {
            for (int m = 0; m < 3; ++m) {
                const double kx = 1.0 + rng.uniform_int(3);
                const double ky = 1.0 + rng.uniform_int(3);
                const double amp = 0.2 + 0.3 * rng.uniform();
                const double phase = rng.uniform() * 6.283185307179586;
                double* base = &s.image.data[c * p.height * p.width];
                for (std::size_t y = 0; y < p.height; ++y)
                    for (std::size_t x = 0; x < p.width; ++x)
                        base[y * p.width + x] +=
                            amp * std::sin(6.283185307179586 *
                                               (kx * static_cast<double>(x) / W +
                                                ky * static_cast<double>(y) / H) +
                                           phase);
            }
        }

        const std::size_t nboxes = rng.uniform_int(p.max_boxes + 1);
        std::set<std::pair<std::size_t, std::size_t>> used_cells;
        for (std::size_t b = 0; b < nboxes; ++b) {
            for (int attempt = 0; attempt < 24; ++attempt) {
                const bool cyclone = rng.uniform() < 0.5;
                BoxTarget box;
                if (cyclone) {
                    const double R = 4.0 + 3.0 * rng.uniform();
                    const double cx = R + 1 + rng.uniform() * (W - 2 * R - 2);
                    const double cy = R + 1 + rng.uniform() * (H - 2 * R - 2);
                    box.class_id = 0;
                    box.x = (cx - R) / W;
                    box.y = (cy - R) / H;
                    box.w = 2 * R / W;
                    box.h = 2 * R / H;
                    clamp_box(box);
                    auto cell = target_cell(box, grid_h, grid_w);
                    if (!used_cells.insert(cell).second) continue;
                    const double A = 3.0 + rng.uniform();
                    const double sig = R / 2.0;
                    const long r = static_cast<long>(std::ceil(R));
                    for (long dy = -r; dy <= r; ++dy)
                        for (long dx = -r; dx <= r; ++dx) {
                            const long x = static_cast<long>(cx) + dx;
                            const long y = static_cast<long>(cy) + dy;
                            if (x < 0 || y < 0 || x >= static_cast<long>(p.width) ||
                                y >= static_cast<long>(p.height))
                                continue;
                            const double rr = static_cast<double>(dx * dx + dy * dy);
                            const double g = std::exp(-rr / (2.0 * sig * sig));
                            // magnitude bump plus a rotational field on two channels
                            s.image.at3(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += A * g;
                            s.image.at3(1, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += -A * g * static_cast<double>(dy) / R;
                            s.image.at3(2, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += A * g * static_cast<double>(dx) / R;
                        }
                    s.boxes.push_back(box);
                } else {
                    // elongated diagonal filament
                    const double len = 25.0 + 15.0 * rng.uniform();
                    const double x0 = 2.0 + rng.uniform() * (W - len / 1.2 - 4);
                    const double y0 = 2.0 + rng.uniform() * (H - len / 1.2 - 4);
                    const double ang = 0.6 + 0.35 * rng.uniform();  // roughly diagonal
                    const double ux = std::cos(ang), uy = std::sin(ang);
                    const double x1 = std::min(x0 + ux * len, W - 2);
                    const double y1 = std::min(y0 + uy * len, H - 2);
                    const double sig = 1.6;
                    box.class_id = 1;
                    box.x = (std::min(x0, x1) - 2 * sig) / W;
                    box.y = (std::min(y0, y1) - 2 * sig) / H;
                    box.w = (std::abs(x1 - x0) + 4 * sig) / W;
                    box.h = (std::abs(y1 - y0) + 4 * sig) / H;
                    clamp_box(box);
                    auto cell = target_cell(box, grid_h, grid_w);
                    if (!used_cells.insert(cell).second) continue;
                    const double A = 2.5 + rng.uniform();
                    const long xlo = static_cast<long>(std::floor(std::min(x0, x1) - 3 * sig));
                    const long xhi = static_cast<long>(std::ceil(std::max(x0, x1) + 3 * sig));
                    const long ylo = static_cast<long>(std::floor(std::min(y0, y1) - 3 * sig));
                    const long yhi = static_cast<long>(std::ceil(std::max(y0, y1) + 3 * sig));
                    for (long y = std::max(ylo, 0L);
                         y <= std::min(yhi, static_cast<long>(p.height) - 1); ++y)
                        for (long x = std::max(xlo, 0L);
                             x <= std::min(xhi, static_cast<long>(p.width) - 1); ++x) {
                            // distance to segment
                            const double px_ = static_cast<double>(x) - x0;
                            const double py_ = static_cast<double>(y) - y0;
                            double t = (px_ * (x1 - x0) + py_ * (y1 - y0)) /
                                       ((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
                            t = std::clamp(t, 0.0, 1.0);
                            const double dx_ = px_ - t * (x1 - x0);
                            const double dy_ = py_ - t * (y1 - y0);
                            const double d2 = dx_ * dx_ + dy_ * dy_;
                            const double g = std::exp(-d2 / (2.0 * sig * sig));
                            if (g < 1e-3) continue;
                            s.image.at3(3, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += A * g;
                            s.image.at3(4, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += 0.7 * A * g;
                        }
                    s.boxes.push_back(box);
                }
                break;
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// on-disk container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'L', 'S', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_f32(std::ostream& os, float v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw FormatError("dataset file truncated");
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw FormatError("dataset file truncated");
    return v;
}
float read_f32(std::istream& is) {
    float v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw FormatError("dataset file truncated");
    return v;
}

void write_header(std::ostream& os, DatasetKind kind, std::uint32_t count,
                  std::uint64_t seed) {
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, count);
    write_u32(os, static_cast<std::uint32_t>(kind));
    write_u64(os, seed);
}

struct Header {
    DatasetKind kind;
    std::uint32_t count;
    std::uint64_t seed;
};

Header read_header(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad dataset magic (expected DLSD)");
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version));
    Header h;
    h.count = read_u32(is);
    h.kind = static_cast<DatasetKind>(read_u32(is));
    h.seed = read_u64(is);
    return h;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape) write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data) write_f32(os, static_cast<float>(v));
}

Tensor read_tensor(std::istream& is) {
    const std::uint32_t rank = read_u32(is);
    if (rank == 0 || rank > 8) throw FormatError("bad tensor rank in dataset file");
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = read_u32(is);
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data[i] = static_cast<double>(read_f32(is));
    return t;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open for reading: " + path);
    return is;
}

} // namespace

void save_dataset(const HepDataset& ds, const std::string& path) {
    std::ofstream os = open_out(path);
    write_header(os, DatasetKind::hep, static_cast<std::uint32_t>(ds.samples.size()), ds.seed);
    for (const HepSample& s : ds.samples) {
        write_tensor(os, s.image);
        write_u32(os, static_cast<std::uint32_t>(s.label));
        for (double f : s.features) write_f32(os, static_cast<float>(f));
    }
    if (!os) throw ValidationError("write failed: " + path);
}

void save_dataset(const ClimateDataset& ds, const std::string& path) {
    std::ofstream os = open_out(path);
    write_header(os, DatasetKind::climate, static_cast<std::uint32_t>(ds.samples.size()),
                 ds.seed);
    for (const ClimateSample& s : ds.samples) {
        write_tensor(os, s.image);
        write_u32(os, static_cast<std::uint32_t>(s.boxes.size()));
        for (const BoxTarget& b : s.boxes) {
            write_u32(os, static_cast<std::uint32_t>(b.class_id));
            write_f32(os, static_cast<float>(b.x));
            write_f32(os, static_cast<float>(b.y));
            write_f32(os, static_cast<float>(b.w));
            write_f32(os, static_cast<float>(b.h));
        }
    }
    if (!os) throw ValidationError("write failed: " + path);
}

DatasetKind peek_dataset_kind(const std::string& path) {
    std::ifstream is = open_in(path);
    return read_header(is).kind;
}

HepDataset load_hep_dataset(const std::string& path) {
    std::ifstream is = open_in(path);
    Header h = read_header(is);
    if (h.kind != DatasetKind::hep)
        throw FormatError("not a HEP dataset: " + path);
    if (h.count == 0) throw ValidationError("dataset is empty: " + path);
    HepDataset ds;
    ds.seed = h.seed;
    for (std::uint32_t i = 0; i < h.count; ++i) {
        HepSample s;
        s.image = read_tensor(is);
        if (s.image.rank() != 3) throw FormatError("HEP sample image must be rank 3");
        s.label = static_cast<int>(read_u32(is));
        for (double& f : s.features) f = static_cast<double>(read_f32(is));
        ds.samples.push_back(std::move(s));
    }
    ds.height = ds.samples[0].image.shape[1];
    ds.width = ds.samples[0].image.shape[2];
    return ds;
}

ClimateDataset load_climate_dataset(const std::string& path) {
    std::ifstream is = open_in(path);
    Header h = read_header(is);
    if (h.kind != DatasetKind::climate)
        throw FormatError("not a climate dataset: " + path);
    if (h.count == 0) throw ValidationError("dataset is empty: " + path);
    ClimateDataset ds;
    ds.seed = h.seed;
    for (std::uint32_t i = 0; i < h.count; ++i) {
        ClimateSample s;
        s.image = read_tensor(is);
        if (s.image.rank() != 3) throw FormatError("climate sample image must be rank 3");
        const std::uint32_t nb = read_u32(is);
        if (nb > 64) throw FormatError("implausible box count in climate dataset");
        for (std::uint32_t b = 0; b < nb; ++b) {
            BoxTarget t;
            t.class_id = static_cast<int>(read_u32(is));
            t.x = read_f32(is);
            t.y = read_f32(is);
            t.w = read_f32(is);
            t.h = read_f32(is);
            s.boxes.push_back(t);
        }
        ds.samples.push_back(std::move(s));
    }
    ds.channels = ds.samples[0].image.shape[0];
    ds.height = ds.samples[0].image.shape[1];
    ds.width = ds.samples[0].image.shape[2];
    return ds;
}

} // namespace hybridtrain
