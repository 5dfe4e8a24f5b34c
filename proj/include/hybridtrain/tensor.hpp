#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hybridtrain/errors.hpp"

namespace hybridtrain {

/// Dense N-dimensional array of doubles, row-major.
/// Image data uses N,C,H,W order throughout.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // rank-4 accessor (N,C,H,W)
    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    // rank-3 accessor (C,H,W)
    double& at3(std::size_t c, std::size_t h, std::size_t w) {
        return data[(c * shape[1] + h) * shape[2] + w];
    }
    double at3(std::size_t c, std::size_t h, std::size_t w) const {
        return data[(c * shape[1] + h) * shape[2] + w];
    }
    // rank-2 accessor
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
    bool operator!=(const Tensor& o) const { return !(*this == o); }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Geometry of a convolution. Also describes the conv a deconv layer reuses.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    std::size_t out_extent(std::size_t in) const;
    void validate(std::size_t in_h, std::size_t in_w) const;
};

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, const ConvSpec& spec);

struct ConvGrads {
    Tensor grad_input;
    Tensor grad_weights;
    Tensor grad_bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, const ConvSpec& spec);

// Data-gradient pass in isolation. deconv2d_forward is defined as exactly
// this computation, so the two share one code path (same op order).
Tensor conv2d_backward_data(const Tensor& grad_output, const Tensor& weights,
                            const ConvSpec& spec, std::size_t in_h, std::size_t in_w);

Tensor conv2d_backward_weights(const Tensor& input, const Tensor& grad_output,
                               const ConvSpec& spec);

/// Transposed convolution. input: [N,Cin,H,W], weights: [Cin,Cout,Kh,Kw],
/// spec describes the conv whose backward-data pass this reuses
/// (spec.in_channels == Cout, spec.out_channels == Cin).
/// Output spatial extent: (in-1)*stride + kernel - 2*pad.
Tensor deconv2d_forward(const Tensor& input, const Tensor& weights, const ConvSpec& spec);

struct DeconvGrads {
    Tensor grad_input;
    Tensor grad_weights;
};

DeconvGrads deconv2d_backward(const Tensor& input, const Tensor& weights,
                              const Tensor& grad_output, const ConvSpec& spec);

enum class PoolKind { max2x2_stride2, global_avg };

struct PoolResult {
    Tensor output;
    PoolKind kind;
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> argmax;  // flat input index per output element (max pool)
};

PoolResult pool_forward(const Tensor& input, PoolKind kind);
Tensor pool_backward(const Tensor& grad_output, const PoolResult& saved);

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
    Tensor grad_input;
    Tensor grad_weights;
    Tensor grad_bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& grad_output, const Tensor& forward_input);

struct SoftmaxXentResult {
    double loss = 0.0;
    Tensor grad_logits;
    Tensor probs;  // softmax rows, handy for inference/ROC
};

/// Mean cross-entropy over the batch; max-subtracted softmax.
SoftmaxXentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels);

} // namespace hybridtrain
