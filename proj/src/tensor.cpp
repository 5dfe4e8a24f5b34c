#include "hybridtrain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hybridtrain {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::size_t ConvSpec::out_extent(std::size_t in) const {
    std::size_t padded = in + 2 * pad;
    if (padded < kernel_h && padded < kernel_w) return 0;
    return (padded - kernel_h) / stride + 1;  // callers use square kernels; see validate
}

void ConvSpec::validate(std::size_t in_h, std::size_t in_w) const {
    if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0)
        throw ValidationError("conv spec extents must be positive");
    if (in_h + 2 * pad < kernel_h || in_w + 2 * pad < kernel_w)
        throw ShapeError("conv kernel larger than padded input");
}

namespace {

void check_rank4(const Tensor& t, const char* name) {
    if (t.rank() != 4)
        throw ShapeError(std::string(name) + " must be rank 4, got shape " + shape_str(t.shape));
}

// output spatial extent for one axis
std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, const ConvSpec& spec) {
    check_rank4(input, "conv input");
    check_rank4(weights, "conv weights");
    const std::size_t N = input.shape[0], Cin = input.shape[1];
    const std::size_t H = input.shape[2], W = input.shape[3];
    spec.validate(H, W);
    if (Cin != spec.in_channels)
        throw ShapeError("conv input channels " + std::to_string(Cin) +
                         " != spec in_channels " + std::to_string(spec.in_channels));
    if (weights.shape != std::vector<std::size_t>{spec.out_channels, spec.in_channels,
                                                  spec.kernel_h, spec.kernel_w})
        throw ShapeError("conv weights shape " + shape_str(weights.shape) + " invalid for spec");
    if (bias.shape != std::vector<std::size_t>{spec.out_channels})
        throw ShapeError("conv bias shape " + shape_str(bias.shape) + " invalid for spec");

    const std::size_t Ho = conv_out(H, spec.kernel_h, spec.stride, spec.pad);
    const std::size_t Wo = conv_out(W, spec.kernel_w, spec.stride, spec.pad);
    const std::size_t Cout = spec.out_channels;
    const std::size_t s = spec.stride;
    const long pad = static_cast<long>(spec.pad);

    Tensor out = Tensor::zeros({N, Cout, Ho, Wo});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
            double* oc = &out.data[((n * Cout + co) * Ho) * Wo];
            const double bv = bias.data[co];
            for (std::size_t i = 0; i < Ho * Wo; ++i) oc[i] = bv;
            for (std::size_t ci = 0; ci < Cin; ++ci)
                for (std::size_t kh = 0; kh < spec.kernel_h; ++kh)
                    for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                        const double wv =
                            weights.data[((co * Cin + ci) * spec.kernel_h + kh) * spec.kernel_w + kw];
                        for (std::size_t y = 0; y < Ho; ++y) {
                            const long iy = static_cast<long>(y * s + kh) - pad;
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            const double* irow =
                                &input.data[((n * Cin + ci) * H + static_cast<std::size_t>(iy)) * W];
                            double* orow = oc + y * Wo;
                            for (std::size_t x = 0; x < Wo; ++x) {
                                const long ix = static_cast<long>(x * s + kw) - pad;
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                orow[x] += wv * irow[ix];
                            }
                        }
                    }
        }
    return out;
}

Tensor conv2d_backward_data(const Tensor& grad_output, const Tensor& weights,
                            const ConvSpec& spec, std::size_t in_h, std::size_t in_w) {
    check_rank4(grad_output, "conv grad_output");
    check_rank4(weights, "conv weights");
    spec.validate(in_h, in_w);
    const std::size_t N = grad_output.shape[0];
    const std::size_t Cout = spec.out_channels, Cin = spec.in_channels;
    const std::size_t Ho = conv_out(in_h, spec.kernel_h, spec.stride, spec.pad);
    const std::size_t Wo = conv_out(in_w, spec.kernel_w, spec.stride, spec.pad);
    if (grad_output.shape != std::vector<std::size_t>{N, Cout, Ho, Wo})
        throw ShapeError("grad_output shape " + shape_str(grad_output.shape) +
                         " does not match conv output " + shape_str({N, Cout, Ho, Wo}));
    if (weights.shape != std::vector<std::size_t>{Cout, Cin, spec.kernel_h, spec.kernel_w})
        throw ShapeError("conv weights shape " + shape_str(weights.shape) + " invalid for spec");

    const std::size_t s = spec.stride;
    const long pad = static_cast<long>(spec.pad);
    Tensor gin = Tensor::zeros({N, Cin, in_h, in_w});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t ci = 0; ci < Cin; ++ci)
                for (std::size_t kh = 0; kh < spec.kernel_h; ++kh)
                    for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                        const double wv =
                            weights.data[((co * Cin + ci) * spec.kernel_h + kh) * spec.kernel_w + kw];
                        for (std::size_t y = 0; y < Ho; ++y) {
                            const long iy = static_cast<long>(y * s + kh) - pad;
                            if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
                            const double* grow = &grad_output.data[((n * Cout + co) * Ho + y) * Wo];
                            double* irow =
                                &gin.data[((n * Cin + ci) * in_h + static_cast<std::size_t>(iy)) * in_w];
                            for (std::size_t x = 0; x < Wo; ++x) {
                                const long ix = static_cast<long>(x * s + kw) - pad;
                                if (ix < 0 || ix >= static_cast<long>(in_w)) continue;
                                irow[ix] += wv * grow[x];
                            }
                        }
                    }
    return gin;
}

Tensor conv2d_backward_weights(const Tensor& input, const Tensor& grad_output,
                               const ConvSpec& spec) {
    check_rank4(input, "conv input");
    check_rank4(grad_output, "conv grad_output");
    const std::size_t N = input.shape[0], Cin = input.shape[1];
    const std::size_t H = input.shape[2], W = input.shape[3];
    spec.validate(H, W);
    const std::size_t Cout = spec.out_channels;
    const std::size_t Ho = conv_out(H, spec.kernel_h, spec.stride, spec.pad);
    const std::size_t Wo = conv_out(W, spec.kernel_w, spec.stride, spec.pad);
    if (Cin != spec.in_channels)
        throw ShapeError("conv input channels mismatch in backward_weights");
    if (grad_output.shape != std::vector<std::size_t>{N, Cout, Ho, Wo})
        throw ShapeError("grad_output shape " + shape_str(grad_output.shape) +
                         " does not match conv output " + shape_str({N, Cout, Ho, Wo}));

    const std::size_t s = spec.stride;
    const long pad = static_cast<long>(spec.pad);
    Tensor gw = Tensor::zeros({Cout, Cin, spec.kernel_h, spec.kernel_w});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t ci = 0; ci < Cin; ++ci)
                for (std::size_t kh = 0; kh < spec.kernel_h; ++kh)
                    for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                        double acc = gw.data[((co * Cin + ci) * spec.kernel_h + kh) * spec.kernel_w + kw];
                        for (std::size_t y = 0; y < Ho; ++y) {
                            const long iy = static_cast<long>(y * s + kh) - pad;
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            const double* grow = &grad_output.data[((n * Cout + co) * Ho + y) * Wo];
                            const double* irow =
                                &input.data[((n * Cin + ci) * H + static_cast<std::size_t>(iy)) * W];
                            for (std::size_t x = 0; x < Wo; ++x) {
                                const long ix = static_cast<long>(x * s + kw) - pad;
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                acc += grow[x] * irow[ix];
                            }
                        }
                        gw.data[((co * Cin + ci) * spec.kernel_h + kh) * spec.kernel_w + kw] = acc;
                    }
    return gw;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, const ConvSpec& spec) {
    ConvGrads g;
    g.grad_input = conv2d_backward_data(grad_output, weights, spec,
                                        input.shape[2], input.shape[3]);
    if (g.grad_input.shape != input.shape)
        throw ShapeError("conv backward input shape mismatch");
    g.grad_weights = conv2d_backward_weights(input, grad_output, spec);
    const std::size_t N = grad_output.shape[0], Cout = grad_output.shape[1];
    const std::size_t Ho = grad_output.shape[2], Wo = grad_output.shape[3];
    g.grad_bias = Tensor::zeros({Cout});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
            double acc = g.grad_bias.data[co];
            const double* grow = &grad_output.data[(n * Cout + co) * Ho * Wo];
            for (std::size_t i = 0; i < Ho * Wo; ++i) acc += grow[i];
            g.grad_bias.data[co] = acc;
        }
    return g;
}

Tensor deconv2d_forward(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
    check_rank4(input, "deconv input");
    check_rank4(weights, "deconv weights");
    // input plays the cotangent of the underlying conv, so its channel count
    // must equal spec.out_channels; deconv output channels = spec.in_channels.
    if (input.shape[1] != spec.out_channels)
        throw ShapeError("deconv input channels " + std::to_string(input.shape[1]) +
                         " != spec out_channels " + std::to_string(spec.out_channels));
    const std::size_t H = input.shape[2], W = input.shape[3];
    const std::size_t out_h = (H - 1) * spec.stride + spec.kernel_h - 2 * spec.pad;
    const std::size_t out_w = (W - 1) * spec.stride + spec.kernel_w - 2 * spec.pad;
    return conv2d_backward_data(input, weights, spec, out_h, out_w);
}

DeconvGrads deconv2d_backward(const Tensor& input, const Tensor& weights,
                              const Tensor& grad_output, const ConvSpec& spec) {
    // forward reused the conv's backward-data pass, so the deconv's data
    // gradient is the conv's forward pass and the weight gradient swaps the
    // roles of input and cotangent in the conv weight-gradient pass.
    DeconvGrads g;
    Tensor zero_bias = Tensor::zeros({spec.out_channels});
    g.grad_input = conv2d_forward(grad_output, weights, zero_bias, spec);
    if (g.grad_input.shape != input.shape)
        throw ShapeError("deconv backward: grad_output shape inconsistent with input");
    g.grad_weights = conv2d_backward_weights(grad_output, input, spec);
    return g;
}

PoolResult pool_forward(const Tensor& input, PoolKind kind) {
    check_rank4(input, "pool input");
    const std::size_t N = input.shape[0], C = input.shape[1];
    const std::size_t H = input.shape[2], W = input.shape[3];
    PoolResult r;
    r.kind = kind;
    r.input_shape = input.shape;
    if (kind == PoolKind::max2x2_stride2) {
        if (H % 2 != 0 || W % 2 != 0)
            throw ShapeError("max2x2 pool requires even spatial dims, got " +
                             shape_str(input.shape));
        const std::size_t Ho = H / 2, Wo = W / 2;
        r.output = Tensor::zeros({N, C, Ho, Wo});
        r.argmax.resize(N * C * Ho * Wo);
        std::size_t o = 0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < Ho; ++y)
                    for (std::size_t x = 0; x < Wo; ++x) {
                        std::size_t base = ((n * C + c) * H + 2 * y) * W + 2 * x;
                        std::size_t best = base;
                        double bv = input.data[base];
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                std::size_t idx = base + dy * W + dx;
                                if (input.data[idx] > bv) {
                                    bv = input.data[idx];
                                    best = idx;
                                }
                            }
                        r.output.data[o] = bv;
                        r.argmax[o] = best;
                        ++o;
                    }
    } else {
        r.output = Tensor::zeros({N, C, 1, 1});
        const double inv = 1.0 / static_cast<double>(H * W);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const double* p = &input.data[(n * C + c) * H * W];
                double acc = 0.0;
                for (std::size_t i = 0; i < H * W; ++i) acc += p[i];
                r.output.data[n * C + c] = acc * inv;
            }
    }
    return r;
}

Tensor pool_backward(const Tensor& grad_output, const PoolResult& saved) {
    if (grad_output.shape != saved.output.shape)
        throw ShapeError("pool backward: grad_output shape " + shape_str(grad_output.shape) +
                         " != forward output shape " + shape_str(saved.output.shape));
    Tensor gin = Tensor::zeros(saved.input_shape);
    if (saved.kind == PoolKind::max2x2_stride2) {
        for (std::size_t i = 0; i < grad_output.numel(); ++i)
            gin.data[saved.argmax[i]] += grad_output.data[i];
    } else {
        const std::size_t N = saved.input_shape[0], C = saved.input_shape[1];
        const std::size_t H = saved.input_shape[2], W = saved.input_shape[3];
        const double inv = 1.0 / static_cast<double>(H * W);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const double g = grad_output.data[n * C + c] * inv;
                double* p = &gin.data[(n * C + c) * H * W];
                for (std::size_t i = 0; i < H * W; ++i) p[i] += g;
            }
    }
    return gin;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1)
        throw ShapeError("dense expects input [N,D], weights [D,M], bias [M]");
    const std::size_t N = input.shape[0], D = input.shape[1];
    const std::size_t M = weights.shape[1];
    if (weights.shape[0] != D)
        throw ShapeError("dense inner dims disagree: input D=" + std::to_string(D) +
                         ", weights " + shape_str(weights.shape));
    if (bias.shape[0] != M)
        throw ShapeError("dense bias length != M");
    Tensor out = Tensor::zeros({N, M});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            double acc = bias.data[m];
            for (std::size_t d = 0; d < D; ++d)
                acc += input.data[n * D + d] * weights.data[d * M + m];
            out.data[n * M + m] = acc;
        }
    return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output) {
    const std::size_t N = input.shape[0], D = input.shape[1];
    const std::size_t M = weights.shape[1];
    if (grad_output.shape != std::vector<std::size_t>{N, M})
        throw ShapeError("dense backward: grad_output shape mismatch");
    DenseGrads g;
    g.grad_input = Tensor::zeros({N, D});
    g.grad_weights = Tensor::zeros({D, M});
    g.grad_bias = Tensor::zeros({M});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const double go = grad_output.data[n * M + m];
            g.grad_bias.data[m] += go;
            for (std::size_t d = 0; d < D; ++d) {
                g.grad_input.data[n * D + d] += go * weights.data[d * M + m];
                g.grad_weights.data[d * M + m] += go * input.data[n * D + d];
            }
        }
    return g;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_output, const Tensor& forward_input) {
    if (!grad_output.same_shape(forward_input))
        throw ShapeError("relu backward shape mismatch");
    Tensor gin = grad_output;
    for (std::size_t i = 0; i < gin.numel(); ++i)
        if (forward_input.data[i] <= 0.0) gin.data[i] = 0.0;
    return gin;
}

SoftmaxXentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("softmax_xent expects logits [N,K]");
    const std::size_t N = logits.shape[0], K = logits.shape[1];
    if (labels.size() != N)
        throw ValidationError("softmax_xent: label count != batch size");
    SoftmaxXentResult r;
    r.grad_logits = Tensor::zeros({N, K});
    r.probs = Tensor::zeros({N, K});
    double total = 0.0;
    const double invN = 1.0 / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
        const int label = labels[n];
        if (label < 0 || static_cast<std::size_t>(label) >= K)
            throw ValidationError("softmax_xent: label " + std::to_string(label) +
                                  " out of range [0," + std::to_string(K) + ")");
        const double* row = &logits.data[n * K];
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
        const double logz = std::log(z);
        total += -(row[static_cast<std::size_t>(label)] - mx - logz);
        for (std::size_t k = 0; k < K; ++k) {
            const double p = std::exp(row[k] - mx) / z;
            r.probs.data[n * K + k] = p;
            r.grad_logits.data[n * K + k] =
                (p - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0)) * invN;
        }
    }
    r.loss = total * invN;
    return r;
}

} // namespace hybridtrain
