#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hybridtrain/rng.hpp"
#include "hybridtrain/tensor.hpp"

namespace hybridtrain {

enum class LayerKind { conv, deconv, pool, relu, dense };

struct Layer {
    LayerKind kind = LayerKind::relu;
    std::string name;
    ConvSpec spec;                       // conv / deconv
    PoolKind pool = PoolKind::max2x2_stride2;
    std::size_t in_dim = 0, out_dim = 0; // dense
    Tensor weights, bias, grad_weights, grad_bias;

    bool has_params() const {
        return kind == LayerKind::conv || kind == LayerKind::deconv || kind == LayerKind::dense;
    }
    bool has_bias() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
    std::size_t param_count() const;
};

Layer make_conv(std::string name, ConvSpec spec);
Layer make_deconv(std::string name, ConvSpec spec);
Layer make_pool(std::string name, PoolKind kind);
Layer make_relu(std::string name);
Layer make_dense(std::string name, std::size_t in_dim, std::size_t out_dim);

// Per-layer forward cache for the backward pass.
struct TapeEntry {
    Tensor input;
    PoolResult pool;
    std::vector<std::size_t> pre_dense_shape;  // 4D shape flattened for a dense layer
};

Tensor seq_forward(const std::vector<Layer>& layers, const Tensor& x,
                   std::vector<TapeEntry>* tape);
// Accumulates into each layer's grad_weights/grad_bias; returns grad wrt input.
Tensor seq_backward(std::vector<Layer>& layers, const std::vector<TapeEntry>& tape,
                    const Tensor& grad_output);

/// Axis-aligned ground-truth box; x,y is the bottom-left corner, all four
/// values are fractions of the image.
struct BoxTarget {
    int class_id = 0;
    double x = 0, y = 0, w = 0, h = 0;
};

struct BoxPrediction {
    std::size_t cell_i = 0, cell_j = 0;  // grid row (from bottom) / column
    double confidence = 0;
    int class_id = 0;
    double x = 0, y = 0, w = 0, h = 0;
};

struct ClimateLossWeights {
    double conf_obj = 1.0;
    double conf_noobj = 0.5;
    double cls = 1.0;
    double box = 5.0;
    double recon = 1.0;

    void validate() const;
};

/// One network: either the supervised classifier or the semi-supervised
/// detector (shared encoder + four 1x1 heads + deconv decoder).
struct Network {
    enum class Topology { hep, climate };
    Topology topology = Topology::hep;
    std::vector<Layer> trunk;    // hep: the whole stack; climate: encoder
    std::vector<Layer> heads;    // climate: conf, cls, xy, wh (in that order)
    std::vector<Layer> decoder;  // climate
    std::size_t input_c = 0, input_h = 0, input_w = 0;
    std::size_t grid_h = 0, grid_w = 0, num_classes = 0;

    // One block per core trainable layer; the detection heads ride along with
    // the last encoder conv's block so the PS count matches the layer count.
    struct Block {
        std::string name;
        std::vector<Tensor*> params;
        std::vector<Tensor*> grads;
        std::size_t param_count = 0;
    };
    std::vector<Block> param_blocks();
    std::size_t trainable_layer_count() const;
    std::size_t param_count() const;

    void zero_grads();
    void init_params(std::uint64_t seed);  // He normal, biases zero

    std::vector<Tensor> snapshot_params() const;
    void restore_params(const std::vector<Tensor>& snap);
};

/// 5x (conv3x3 s1 p1 + ReLU [+ max pool 2x2]) with global average pooling
/// after the fifth unit, then a dense layer to 2 logits.
Network build_hep_mini(std::size_t in_h = 32, std::size_t in_w = 32,
                       std::size_t in_c = 3, std::size_t filters = 16);

/// Strided-conv encoder (first 3 convs stride 2), 1x1 detection heads over
/// the coarse grid, deconv decoder reconstructing the input.
Network build_climate_mini(std::size_t in_h = 64, std::size_t in_w = 64,
                           std::size_t in_c = 8, std::size_t num_classes = 2,
                           std::size_t encoder_convs = 3, std::size_t decoder_deconvs = 3,
                           std::size_t filters = 16);

struct HepBatch {
    Tensor images;            // [N,C,H,W]
    std::vector<int> labels;  // 0 = background, 1 = signal
};

struct ClimateBatch {
    Tensor images;
    std::vector<std::vector<BoxTarget>> boxes;  // per sample
};

Tensor hep_forward_logits(const Network& net, const Tensor& images);
/// Accumulates grads (call net.zero_grads() first); returns mean loss.
double hep_loss_grads(Network& net, const HepBatch& batch);

struct ClimatePreds {
    Tensor conf;  // [N,1,gh,gw] logits
    Tensor cls;   // [N,classes,gh,gw] logits
    Tensor xy;    // [N,2,gh,gw] absolute fractions
    Tensor wh;    // [N,2,gh,gw] sqrt-width/height
};

struct ClimateForward {
    ClimatePreds preds;
    Tensor reconstruction;
};

ClimateForward climate_forward(const Network& net, const Tensor& images);

struct ClimateLossResult {
    double loss = 0;
    double term_conf_obj = 0, term_conf_noobj = 0, term_cls = 0, term_box = 0, term_recon = 0;
    ClimatePreds grad_preds;
    Tensor grad_recon;
};

/// The five-term detection + reconstruction objective, normalized per sample.
/// Gradients are wrt the raw head outputs and the reconstruction.
ClimateLossResult climate_loss(const ClimatePreds& preds,
                               const std::vector<std::vector<BoxTarget>>& targets,
                               const Tensor& input, const Tensor& reconstruction,
                               const ClimateLossWeights& weights);

double climate_loss_grads(Network& net, const ClimateBatch& batch,
                          const ClimateLossWeights& weights);

/// Cells whose sigmoid(confidence) exceeds the threshold, one candidate per cell.
std::vector<BoxPrediction> infer_boxes(const ClimatePreds& preds, std::size_t sample,
                                       double threshold = 0.8);

/// Map a target to its grid cell (by box center). Row 0 is the bottom row.
std::pair<std::size_t, std::size_t> target_cell(const BoxTarget& t,
                                                std::size_t grid_h, std::size_t grid_w);

/// Best TPR achievable with a score threshold whose FPR <= target_fpr.
double roc_tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& labels,
                      double target_fpr);

struct BaselineCut {
    std::array<double, 3> thresholds{};  // total energy, hit count, max-cluster energy
    double fit_tpr = 0, fit_fpr = 0;
};

struct HepSample;  // datagen.hpp

BaselineCut fit_baseline_cut(const std::vector<HepSample>& fit_split, double target_fpr);
/// Score = number of feature thresholds passed (0..3).
std::vector<double> baseline_cut_scores(const BaselineCut& cut,
                                        const std::vector<HepSample>& samples);

struct GradCheckTargets {
    // exactly one of the two is used, matching the network topology
    const HepBatch* hep = nullptr;
    const ClimateBatch* climate = nullptr;
    ClimateLossWeights climate_weights;
};

/// Central finite differences on a deterministic parameter subsample
/// (>= 200 per layer, or all); returns max relative error with
/// denominator max(|a|,|b|,1e-12).
double grad_check(Network& net, const GradCheckTargets& targets, double eps);

} // namespace hybridtrain
