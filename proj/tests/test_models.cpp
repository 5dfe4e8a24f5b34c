#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "hybridtrain/datagen.hpp"
#include "hybridtrain/models.hpp"
#include "test_util.hpp"

using namespace hybridtrain;
using testutil::rand_tensor;

namespace {

HepBatch small_hep_batch(std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                         std::uint64_t seed) {
    Rng rng(seed);
    HepBatch b;
    b.images = rand_tensor({n, c, h, w}, rng, 0.5);
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.labels[i] = static_cast<int>(i % 2);
    return b;
}

ClimateBatch small_climate_batch(std::size_t n, std::size_t h, std::size_t w,
                                 std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    ClimateBatch b;
    b.images = rand_tensor({n, c, h, w}, rng, 0.5);
    b.boxes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        BoxTarget t;
        t.class_id = static_cast<int>(i % 2);
        t.x = 0.1 + 0.3 * static_cast<double>(i % 2);
        t.y = 0.15;
        t.w = 0.2;
        t.h = 0.25;
        b.boxes[i] = {t};
    }
    return b;
}

} // namespace

TEST_CASE("hep-mini wiring: shapes, block structure, layer count") {
    Network net = build_hep_mini(32, 32, 3, 8);
    net.init_params(1);
    CHECK(net.trainable_layer_count() == 6);  // 5 convs + dense
    auto blocks = net.param_blocks();
    CHECK(blocks.size() == 6);
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.param_count;
    CHECK(total == net.param_count());

    Tensor logits = hep_forward_logits(net, small_hep_batch(3, 32, 32, 3, 2).images);
    CHECK(logits.shape == std::vector<std::size_t>{3, 2});
    CHECK(logits.all_finite());
}

TEST_CASE("hep-mini rejects spatial dims not divisible by 16") {
    CHECK_THROWS_AS(build_hep_mini(30, 32, 3, 8), ValidationError);
}

TEST_CASE("climate-mini wiring: grid, heads fold into the last encoder block") {
    Network net = build_climate_mini(32, 32, 4, 2, 3, 3, 8);
    net.init_params(1);
    CHECK(net.trainable_layer_count() == 6);  // 3 encoder convs + 3 deconvs
    CHECK(net.grid_h == 4);                   // 32 / 2^3
    auto blocks = net.param_blocks();
    CHECK(blocks.size() == 6);
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.param_count;
    CHECK(total == net.param_count());
    // the last encoder block carries its conv plus all four heads
    std::size_t head_params = 0;
    for (const Layer& h : net.heads) head_params += h.param_count();
    CHECK(blocks[2].param_count > head_params);

    ClimateForward f = climate_forward(net, small_climate_batch(2, 32, 32, 4, 3).images);
    CHECK(f.preds.conf.shape == std::vector<std::size_t>{2, 1, 4, 4});
    CHECK(f.preds.cls.shape == std::vector<std::size_t>{2, 2, 4, 4});
    CHECK(f.preds.xy.shape == std::vector<std::size_t>{2, 2, 4, 4});
    CHECK(f.reconstruction.shape == std::vector<std::size_t>{2, 4, 32, 32});
}

TEST_CASE("climate-mini rejects dims the encoder cannot downsample") {
    CHECK_THROWS_AS(build_climate_mini(30, 32, 4, 2, 3, 3, 8), ValidationError);
}

TEST_CASE("init_params is a pure function of the seed") {
    Network a = build_hep_mini(32, 32, 3, 8);
    Network b = build_hep_mini(32, 32, 3, 8);
    a.init_params(42);
    b.init_params(42);
    CHECK(a.snapshot_params() == b.snapshot_params());
    b.init_params(43);
    CHECK(a.snapshot_params() != b.snapshot_params());
}

TEST_CASE("snapshot/restore round-trips parameters exactly") {
    Network net = build_hep_mini(32, 32, 3, 8);
    net.init_params(5);
    auto snap = net.snapshot_params();
    net.init_params(6);
    net.restore_params(snap);
    CHECK(net.snapshot_params() == snap);
}

TEST_CASE("end-to-end gradient check on reduced hep-mini") {
    Network net = build_hep_mini(16, 16, 3, 4);
    net.init_params(11);
    HepBatch batch = small_hep_batch(2, 16, 16, 3, 12);
    GradCheckTargets t;
    t.hep = &batch;
    CHECK(grad_check(net, t, 1e-5) < 1e-6);
}

TEST_CASE("end-to-end gradient check on reduced climate-mini") {
    Network net = build_climate_mini(16, 16, 3, 2, 3, 3, 4);
    net.init_params(13);
    ClimateBatch batch = small_climate_batch(2, 16, 16, 3, 14);
    GradCheckTargets t;
    t.climate = &batch;
    // wider eps than the hep check: several climate gradients are ~1e-8 and
    // central differences at 1e-5 are roundoff-dominated there
    CHECK(grad_check(net, t, 1e-4) < 1e-4);
}

TEST_CASE("hep loss on balanced random inputs starts near ln 2") {
    Network net = build_hep_mini(16, 16, 3, 4);
    net.init_params(17);
    HepBatch batch = small_hep_batch(8, 16, 16, 3, 18);
    net.zero_grads();
    const double loss = hep_loss_grads(net, batch);
    CHECK(loss > 0.3);
    CHECK(loss < 1.5);
}

TEST_CASE("target_cell maps box centers onto the bottom-up grid") {
    BoxTarget t;
    t.x = 0.1; t.y = 0.1; t.w = 0.2; t.h = 0.2;  // center (0.2, 0.2)
    CHECK(target_cell(t, 4, 4) == std::pair<std::size_t, std::size_t>{0, 0});
    t.x = 0.8; t.y = 0.5; t.w = 0.2; t.h = 0.2;  // center (0.9, 0.6)
    CHECK(target_cell(t, 4, 4) == std::pair<std::size_t, std::size_t>{2, 3});
    t.x = 0.9; t.y = 0.9; t.w = 0.2; t.h = 0.2;  // center clamped to last cell
    CHECK(target_cell(t, 4, 4) == std::pair<std::size_t, std::size_t>{3, 3});
    t.w = -1;
    CHECK_THROWS_AS(target_cell(t, 4, 4), ValidationError);
}

TEST_CASE("climate_loss: term decomposition, near-perfect predictions, cell clash") {
    const std::size_t N = 1, gh = 2, gw = 2;
    ClimatePreds p;
    p.conf = Tensor::full({N, 1, gh, gw}, -12.0);
    p.cls = Tensor::zeros({N, 2, gh, gw});
    p.xy = Tensor::zeros({N, 2, gh, gw});
    p.wh = Tensor::zeros({N, 2, gh, gw});
    BoxTarget t;
    t.class_id = 1;
    t.x = 0.05; t.y = 0.1; t.w = 0.3; t.h = 0.2;  // center (0.2,0.2) -> cell (0,0)
    p.conf.at4(0, 0, 0, 0) = 12.0;
    p.cls.at4(0, 1, 0, 0) = 14.0;
    p.xy.at4(0, 0, 0, 0) = t.x;
    p.xy.at4(0, 1, 0, 0) = t.y;
    p.wh.at4(0, 0, 0, 0) = std::sqrt(t.w);
    p.wh.at4(0, 1, 0, 0) = std::sqrt(t.h);
    Tensor img = Tensor::full({N, 1, 4, 4}, 0.25);
    ClimateLossResult r = climate_loss(p, {{t}}, img, img, ClimateLossWeights{});
    CHECK(r.loss ==
          doctest::Approx(r.term_conf_obj + r.term_conf_noobj + r.term_cls +
                          r.term_box + r.term_recon));
    CHECK(r.loss < 1e-4);  // every head already matches its target

    // a wrong reconstruction contributes the mean-MSE recon term exactly
    Tensor rec = Tensor::full({N, 1, 4, 4}, 0.75);
    ClimateLossResult r2 = climate_loss(p, {{t}}, img, rec, ClimateLossWeights{});
    CHECK(r2.term_recon == doctest::Approx(0.25));  // (0.5)^2 * weight 1

    // two boxes whose centers share a cell are rejected
    BoxTarget clash = t;
    CHECK_THROWS_AS(climate_loss(p, {{t, clash}}, img, img, ClimateLossWeights{}),
                    ValidationError);
}

TEST_CASE("infer_boxes honors the threshold and is monotone in it") {
    Rng rng(23);
    ClimatePreds p;
    p.conf = rand_tensor({1, 1, 4, 4}, rng, 3.0);
    p.cls = rand_tensor({1, 2, 4, 4}, rng);
    p.xy = rand_tensor({1, 2, 4, 4}, rng, 0.2);
    p.wh = rand_tensor({1, 2, 4, 4}, rng, 0.2);
    auto lo = infer_boxes(p, 0, 0.8);
    auto hi = infer_boxes(p, 0, 0.95);
    CHECK(hi.size() <= lo.size());
    std::set<std::pair<std::size_t, std::size_t>> lo_cells;
    for (const auto& b : lo) {
        CHECK(b.confidence > 0.8);
        lo_cells.insert({b.cell_i, b.cell_j});
    }
    for (const auto& b : hi) {
        CHECK(b.confidence > 0.95);
        CHECK(lo_cells.count({b.cell_i, b.cell_j}) == 1);
    }
    CHECK_THROWS_AS(infer_boxes(p, 0, 1.5), ValidationError);
}

TEST_CASE("roc_tpr_at_fpr matches a brute-force threshold scan") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores;
        std::vector<int> labels;
        const std::size_t n = 30 + rng.uniform_int(40);
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(static_cast<int>(rng.uniform_int(2)));
            scores.push_back(rng.normal() + labels.back());
        }
        const double target = 0.05 + 0.2 * rng.uniform();
        // oracle: try every observed score as "positive iff score >= thr"
        double best = 0.0;
        std::size_t pos = 0, neg = 0;
        for (int l : labels) (l ? pos : neg)++;
        for (double thr : scores) {
            std::size_t tp = 0, fp = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (scores[i] >= thr) (labels[i] ? tp : fp)++;
            const double fpr = neg ? static_cast<double>(fp) / neg : 0.0;
            if (fpr <= target)
                best = std::max(best, pos ? static_cast<double>(tp) / pos : 0.0);
        }
        CHECK(roc_tpr_at_fpr(scores, labels, target) == doctest::Approx(best));
    }
}

TEST_CASE("roc edge cases follow the contract") {
    // perfectly separated: TPR 1 at any positive budget
    CHECK(roc_tpr_at_fpr({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}, 0.01) == doctest::Approx(1.0));
    // all scores equal: no usable threshold below 1/negatives
    CHECK(roc_tpr_at_fpr({0.5, 0.5, 0.5, 0.5}, {0, 0, 1, 1}, 0.25) == doctest::Approx(0.0));
    CHECK_THROWS_AS(roc_tpr_at_fpr({0.1, 0.2}, {1, 1}, 0.1), ValidationError);
    CHECK_THROWS_AS(roc_tpr_at_fpr({0.1, 0.2}, {0, 1}, 0.0), ValidationError);
}

TEST_CASE("fit_baseline_cut respects the FPR budget and separates planted data") {
    Rng rng(31);
    std::vector<HepSample> fit;
    for (int i = 0; i < 400; ++i) {
        HepSample s;
        s.label = i % 4 == 0 ? 1 : 0;
        const double lift = s.label ? 2.0 : 0.0;
        s.features = {5 + rng.normal() + lift, 20 + 4 * rng.normal() + 2 * lift,
                      2 + 0.5 * rng.normal() + 0.5 * lift};
        fit.push_back(s);
    }
    BaselineCut cut = fit_baseline_cut(fit, 0.05);
    CHECK(cut.fit_fpr <= 0.05);
    CHECK(cut.fit_tpr > 0.2);
    std::vector<double> scores = baseline_cut_scores(cut, fit);
    REQUIRE(scores.size() == fit.size());
    for (double s : scores) {
        CHECK(s >= 0.0);
        CHECK(s <= 3.0);
    }
}
