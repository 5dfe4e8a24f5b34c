#include "hybridtrain/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hybridtrain/datagen.hpp"

namespace hybridtrain {

std::size_t Layer::param_count() const {
    if (!has_params()) return 0;
    return weights.numel() + (has_bias() ? bias.numel() : 0);
}

Layer make_conv(std::string name, ConvSpec spec) {
    Layer l;
    l.kind = LayerKind::conv;
    l.name = std::move(name);
    l.spec = spec;
    l.weights = Tensor::zeros({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
    l.bias = Tensor::zeros({spec.out_channels});
    l.grad_weights = Tensor::zeros(l.weights.shape);
    l.grad_bias = Tensor::zeros(l.bias.shape);
    return l;
}

Layer make_deconv(std::string name, ConvSpec spec) {
    Layer l;
    l.kind = LayerKind::deconv;
    l.name = std::move(name);
    l.spec = spec;
    // conv weight layout of the reused backward-data pass
    l.weights = Tensor::zeros({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
    l.grad_weights = Tensor::zeros(l.weights.shape);
    return l;
}

Layer make_pool(std::string name, PoolKind kind) {
    Layer l;
    l.kind = LayerKind::pool;
    l.name = std::move(name);
    l.pool = kind;
    return l;
}

Layer make_relu(std::string name) {
    Layer l;
    l.kind = LayerKind::relu;
    l.name = std::move(name);
    return l;
}

Layer make_dense(std::string name, std::size_t in_dim, std::size_t out_dim) {
    Layer l;
    l.kind = LayerKind::dense;
    l.name = std::move(name);
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.weights = Tensor::zeros({in_dim, out_dim});
    l.bias = Tensor::zeros({out_dim});
    l.grad_weights = Tensor::zeros(l.weights.shape);
    l.grad_bias = Tensor::zeros(l.bias.shape);
    return l;
}

Tensor seq_forward(const std::vector<Layer>& layers, const Tensor& x,
                   std::vector<TapeEntry>* tape) {
    Tensor cur = x;
    if (tape) tape->resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        TapeEntry* e = tape ? &(*tape)[i] : nullptr;
        switch (l.kind) {
            case LayerKind::conv: {
                if (e) e->input = cur;
                cur = conv2d_forward(cur, l.weights, l.bias, l.spec);
                break;
            }
            case LayerKind::deconv: {
                if (e) e->input = cur;
                cur = deconv2d_forward(cur, l.weights, l.spec);
                break;
            }
            case LayerKind::pool: {
                PoolResult r = pool_forward(cur, l.pool);
                cur = r.output;
                if (e) e->pool = std::move(r);
                break;
            }
            case LayerKind::relu: {
                if (e) e->input = cur;
                cur = relu_forward(cur);
                break;
            }
            case LayerKind::dense: {
                if (cur.rank() == 4) {
                    if (e) e->pre_dense_shape = cur.shape;
                    std::size_t flat = cur.shape[1] * cur.shape[2] * cur.shape[3];
                    cur.shape = {cur.shape[0], flat};
                }
                if (cur.rank() != 2 || cur.shape[1] != l.in_dim)
                    throw ShapeError("dense layer " + l.name + " expects inner dim " +
                                     std::to_string(l.in_dim) + ", got " + shape_str(cur.shape));
                if (e) e->input = cur;
                cur = dense_forward(cur, l.weights, l.bias);
                break;
            }
        }
    }
    return cur;
}

Tensor seq_backward(std::vector<Layer>& layers, const std::vector<TapeEntry>& tape,
                    const Tensor& grad_output) {
    if (tape.size() != layers.size())
        throw ShapeError("backward tape length mismatch");
    Tensor grad = grad_output;
    for (std::size_t idx = layers.size(); idx-- > 0;) {
        Layer& l = layers[idx];
        const TapeEntry& e = tape[idx];
        switch (l.kind) {
            case LayerKind::conv: {
                ConvGrads g = conv2d_backward(e.input, l.weights, grad, l.spec);
                for (std::size_t i = 0; i < l.grad_weights.numel(); ++i)
                    l.grad_weights.data[i] += g.grad_weights.data[i];
                for (std::size_t i = 0; i < l.grad_bias.numel(); ++i)
                    l.grad_bias.data[i] += g.grad_bias.data[i];
                grad = std::move(g.grad_input);
                break;
            }
            case LayerKind::deconv: {
                DeconvGrads g = deconv2d_backward(e.input, l.weights, grad, l.spec);
                for (std::size_t i = 0; i < l.grad_weights.numel(); ++i)
                    l.grad_weights.data[i] += g.grad_weights.data[i];
                grad = std::move(g.grad_input);
                break;
            }
            case LayerKind::pool:
                grad = pool_backward(grad, e.pool);
                break;
            case LayerKind::relu:
                grad = relu_backward(grad, e.input);
                break;
            case LayerKind::dense: {
                DenseGrads g = dense_backward(e.input, l.weights, grad);
                for (std::size_t i = 0; i < l.grad_weights.numel(); ++i)
                    l.grad_weights.data[i] += g.grad_weights.data[i];
                for (std::size_t i = 0; i < l.grad_bias.numel(); ++i)
                    l.grad_bias.data[i] += g.grad_bias.data[i];
                grad = std::move(g.grad_input);
                if (!e.pre_dense_shape.empty()) grad.shape = e.pre_dense_shape;
                break;
            }
        }
    }
    return grad;
}

void ClimateLossWeights::validate() const {
    if (conf_obj < 0 || conf_noobj < 0 || cls < 0 || box < 0 || recon < 0)
        throw ValidationError("climate loss weights must be non-negative");
    if (conf_obj == 0 && conf_noobj == 0 && cls == 0 && box == 0 && recon == 0)
        throw ValidationError("at least one climate loss weight must be positive");
}

std::vector<Network::Block> Network::param_blocks() {
    std::vector<Block> blocks;
    auto add_layer = [&blocks](Layer& l) {
        Block b;
        b.name = l.name;
        b.params.push_back(&l.weights);
        b.grads.push_back(&l.grad_weights);
        if (l.has_bias()) {
            b.params.push_back(&l.bias);
            b.grads.push_back(&l.grad_bias);
        }
        b.param_count = l.param_count();
        blocks.push_back(std::move(b));
    };
    std::size_t last_trunk_block = 0;
    for (Layer& l : trunk)
        if (l.has_params()) {
            add_layer(l);
            last_trunk_block = blocks.size() - 1;
        }
    // detection heads share the final encoder layer's parameter server
    for (Layer& l : heads)
        if (l.has_params()) {
            Block& b = blocks[last_trunk_block];
            b.params.push_back(&l.weights);
            b.grads.push_back(&l.grad_weights);
            if (l.has_bias()) {
                b.params.push_back(&l.bias);
                b.grads.push_back(&l.grad_bias);
            }
            b.param_count += l.param_count();
        }
    for (Layer& l : decoder)
        if (l.has_params()) add_layer(l);
    return blocks;
}

std::size_t Network::trainable_layer_count() const {
    std::size_t n = 0;
    for (const Layer& l : trunk) n += l.has_params() ? 1 : 0;
    for (const Layer& l : decoder) n += l.has_params() ? 1 : 0;
    return n;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : trunk) n += l.param_count();
    for (const Layer& l : heads) n += l.param_count();
    for (const Layer& l : decoder) n += l.param_count();
    return n;
}

void Network::zero_grads() {
    auto zero = [](std::vector<Layer>& ls) {
        for (Layer& l : ls) {
            std::fill(l.grad_weights.data.begin(), l.grad_weights.data.end(), 0.0);
            std::fill(l.grad_bias.data.begin(), l.grad_bias.data.end(), 0.0);
        }
    };
    zero(trunk);
    zero(heads);
    zero(decoder);
}

void Network::init_params(std::uint64_t seed) {
    std::size_t idx = 0;
    auto init = [&](std::vector<Layer>& ls) {
        for (Layer& l : ls) {
            if (!l.has_params()) continue;
            std::size_t fan_in = 1;
            if (l.kind == LayerKind::conv)
                fan_in = l.spec.in_channels * l.spec.kernel_h * l.spec.kernel_w;
            else if (l.kind == LayerKind::deconv)
                // deconv input channels == spec.out_channels
                fan_in = l.spec.out_channels * l.spec.kernel_h * l.spec.kernel_w;
            else
                fan_in = l.in_dim;
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            Rng rng = stream(seed, "init", idx);
            for (double& v : l.weights.data) v = std * rng.normal();
            std::fill(l.bias.data.begin(), l.bias.data.end(), 0.0);
            ++idx;
        }
    };
    init(trunk);
    init(heads);
    init(decoder);
}

std::vector<Tensor> Network::snapshot_params() const {
    std::vector<Tensor> snap;
    auto take = [&snap](const std::vector<Layer>& ls) {
        for (const Layer& l : ls)
            if (l.has_params()) {
                snap.push_back(l.weights);
                if (l.has_bias()) snap.push_back(l.bias);
            }
    };
    take(trunk);
    take(heads);
    take(decoder);
    return snap;
}

void Network::restore_params(const std::vector<Tensor>& snap) {
    std::size_t i = 0;
    auto put = [&](std::vector<Layer>& ls) {
        for (Layer& l : ls)
            if (l.has_params()) {
                l.weights = snap.at(i++);
                if (l.has_bias()) l.bias = snap.at(i++);
            }
    };
    put(trunk);
    put(heads);
    put(decoder);
    if (i != snap.size()) throw ShapeError("parameter snapshot size mismatch");
}

Network build_hep_mini(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                       std::size_t filters) {
    if (in_h % 16 != 0 || in_w % 16 != 0)
        throw ValidationError("hep_mini input spatial dims must be divisible by 16");
    Network net;
    net.topology = Network::Topology::hep;
    net.input_c = in_c;
    net.input_h = in_h;
    net.input_w = in_w;
    std::size_t c = in_c;
    for (std::size_t u = 0; u < 5; ++u) {
        ConvSpec spec{c, filters, 3, 3, 1, 1};
        net.trunk.push_back(make_conv("conv" + std::to_string(u + 1), spec));
        net.trunk.push_back(make_relu("relu" + std::to_string(u + 1)));
        net.trunk.push_back(make_pool("pool" + std::to_string(u + 1),
                                      u < 4 ? PoolKind::max2x2_stride2 : PoolKind::global_avg));
        c = filters;
    }
    net.trunk.push_back(make_dense("fc", filters, 2));
    return net;
}

Network build_climate_mini(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                           std::size_t num_classes, std::size_t encoder_convs,
                           std::size_t decoder_deconvs, std::size_t filters) {
    if (in_h % 8 != 0 || in_w % 8 != 0)
        throw ValidationError("climate_mini input spatial dims must be divisible by 8");
    if (encoder_convs < 3 || encoder_convs > 9)
        throw ValidationError("climate_mini encoder conv count must be in [3,9]");
    if (decoder_deconvs < 3 || decoder_deconvs > 5)
        throw ValidationError("climate_mini decoder deconv count must be in [3,5]");
    Network net;
    net.topology = Network::Topology::climate;
    net.input_c = in_c;
    net.input_h = in_h;
    net.input_w = in_w;
    net.num_classes = num_classes;
    net.grid_h = in_h / 8;
    net.grid_w = in_w / 8;

    const std::size_t f2 = 2 * filters;
    // three stride-2 convs do the 8x downsampling; any extra convs keep size
    std::size_t c = in_c;
    for (std::size_t i = 0; i < encoder_convs; ++i) {
        const bool strided = i < 3;
        const std::size_t out_c = (i == 0) ? filters : f2;
        ConvSpec spec{c, out_c, 3, 3, strided ? std::size_t{2} : std::size_t{1}, 1};
        net.trunk.push_back(make_conv("enc" + std::to_string(i + 1), spec));
        net.trunk.push_back(make_relu("enc_relu" + std::to_string(i + 1)));
        c = out_c;
    }

    auto head = [&](const char* name, std::size_t ch) {
        return make_conv(name, ConvSpec{f2, ch, 1, 1, 1, 0});
    };
    net.heads.push_back(head("head_conf", 1));
    net.heads.push_back(head("head_class", num_classes));
    net.heads.push_back(head("head_xy", 2));
    net.heads.push_back(head("head_wh", 2));

    // decoder mirrors the encoder: extra same-size deconvs, then 3 upsampling ones
    c = f2;
    std::size_t di = 0;
    for (std::size_t i = 0; i + 3 < decoder_deconvs; ++i) {
        // deconv spec describes the conv whose backward pass is reused:
        // spec.in_channels = deconv output channels, spec.out_channels = input channels
        ConvSpec spec{f2, c, 3, 3, 1, 1};
        net.decoder.push_back(make_deconv("dec" + std::to_string(++di), spec));
        net.decoder.push_back(make_relu("dec_relu" + std::to_string(di)));
        c = f2;
    }
    const std::size_t up_out[3] = {filters, filters, in_c};
    for (std::size_t i = 0; i < 3; ++i) {
        ConvSpec spec{up_out[i], c, 4, 4, 2, 1};
        net.decoder.push_back(make_deconv("dec" + std::to_string(++di), spec));
        if (i < 2) net.decoder.push_back(make_relu("dec_relu" + std::to_string(di)));
        c = up_out[i];
    }
    return net;
}

Tensor hep_forward_logits(const Network& net, const Tensor& images) {
    return seq_forward(net.trunk, images, nullptr);
}

double hep_loss_grads(Network& net, const HepBatch& batch) {
    std::vector<TapeEntry> tape;
    Tensor logits = seq_forward(net.trunk, batch.images, &tape);
    SoftmaxXentResult sm = softmax_xent(logits, batch.labels);
    seq_backward(net.trunk, tape, sm.grad_logits);
    return sm.loss;
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

ClimateForward climate_forward(const Network& net, const Tensor& images) {
    Tensor enc = seq_forward(net.trunk, images, nullptr);
    ClimateForward f;
    f.preds.conf = conv2d_forward(enc, net.heads[0].weights, net.heads[0].bias, net.heads[0].spec);
    f.preds.cls = conv2d_forward(enc, net.heads[1].weights, net.heads[1].bias, net.heads[1].spec);
    f.preds.xy = conv2d_forward(enc, net.heads[2].weights, net.heads[2].bias, net.heads[2].spec);
    f.preds.wh = conv2d_forward(enc, net.heads[3].weights, net.heads[3].bias, net.heads[3].spec);
    f.reconstruction = seq_forward(net.decoder, enc, nullptr);
    return f;
}

std::pair<std::size_t, std::size_t> target_cell(const BoxTarget& t,
                                                std::size_t grid_h, std::size_t grid_w) {
    if (t.x < 0 || t.x > 1 || t.y < 0 || t.y > 1)
        throw ValidationError("box corner outside [0,1]");
    if (t.w <= 0 || t.h <= 0)
        throw ValidationError("box width/height must be positive");
    const double cx = t.x + t.w / 2.0;
    const double cy = t.y + t.h / 2.0;
    auto clamp_cell = [](double v, std::size_t n) {
        long c = static_cast<long>(std::floor(v * static_cast<double>(n)));
        if (c < 0) c = 0;
        if (c >= static_cast<long>(n)) c = static_cast<long>(n) - 1;
        return static_cast<std::size_t>(c);
    };
    return {clamp_cell(cy, grid_h), clamp_cell(cx, grid_w)};
}

ClimateLossResult climate_loss(const ClimatePreds& preds,
                               const std::vector<std::vector<BoxTarget>>& targets,
                               const Tensor& input, const Tensor& reconstruction,
                               const ClimateLossWeights& w) {
    w.validate();
    const std::size_t N = preds.conf.shape[0];
    const std::size_t gh = preds.conf.shape[2], gw = preds.conf.shape[3];
    const std::size_t K = preds.cls.shape[1];
    if (targets.size() != N)
        throw ValidationError("climate_loss: target list count != batch size");
    if (!input.same_shape(reconstruction))
        throw ShapeError("climate_loss: reconstruction shape != input shape");

    ClimateLossResult r;
    r.grad_preds.conf = Tensor::zeros(preds.conf.shape);
    r.grad_preds.cls = Tensor::zeros(preds.cls.shape);
    r.grad_preds.xy = Tensor::zeros(preds.xy.shape);
    r.grad_preds.wh = Tensor::zeros(preds.wh.shape);
    r.grad_recon = Tensor::zeros(reconstruction.shape);

    const double invN = 1.0 / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::map<std::pair<std::size_t, std::size_t>, const BoxTarget*> by_cell;
        for (const BoxTarget& t : targets[n]) {
            auto cell = target_cell(t, gh, gw);
            if (!by_cell.emplace(cell, &t).second)
                throw ValidationError("two targets map to one grid cell");
        }
        for (std::size_t i = 0; i < gh; ++i)
            for (std::size_t j = 0; j < gw; ++j) {
                const std::size_t ci = ((n * 1) * gh + i) * gw + j;
                const double z = preds.conf.data[ci];
                const double s = sigmoid(z);
                const double ds = s * (1.0 - s);
                auto it = by_cell.find({i, j});
                if (it == by_cell.end()) {
                    r.term_conf_noobj += w.conf_noobj * s * s * invN;
                    r.grad_preds.conf.data[ci] += w.conf_noobj * 2.0 * s * ds * invN;
                    continue;
                }
                const BoxTarget& t = *it->second;
                r.term_conf_obj += w.conf_obj * (1.0 - s) * (1.0 - s) * invN;
                r.grad_preds.conf.data[ci] += -w.conf_obj * 2.0 * (1.0 - s) * ds * invN;

                if (t.class_id < 0 || static_cast<std::size_t>(t.class_id) >= K)
                    throw ValidationError("box class id out of range");
                double mx = preds.cls.at4(n, 0, i, j);
                for (std::size_t k = 1; k < K; ++k)
                    mx = std::max(mx, preds.cls.at4(n, k, i, j));
                double zsum = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    zsum += std::exp(preds.cls.at4(n, k, i, j) - mx);
                const double logz = std::log(zsum);
                r.term_cls += w.cls * invN *
                              -(preds.cls.at4(n, static_cast<std::size_t>(t.class_id), i, j) - mx - logz);
                for (std::size_t k = 0; k < K; ++k) {
                    const double p = std::exp(preds.cls.at4(n, k, i, j) - mx) / zsum;
                    r.grad_preds.cls.at4(n, k, i, j) +=
                        w.cls * invN * (p - (k == static_cast<std::size_t>(t.class_id) ? 1.0 : 0.0));
                }

                const double tgt[4] = {t.x, t.y, std::sqrt(t.w), std::sqrt(t.h)};
                Tensor* heads[2] = {&r.grad_preds.xy, &r.grad_preds.wh};
                const Tensor* vals[2] = {&preds.xy, &preds.wh};
                for (int hgroup = 0; hgroup < 2; ++hgroup)
                    for (std::size_t k = 0; k < 2; ++k) {
                        const double d = vals[hgroup]->at4(n, k, i, j) - tgt[2 * hgroup + k];
                        r.term_box += w.box * invN * d * d;
                        heads[hgroup]->at4(n, k, i, j) += w.box * invN * 2.0 * d;
                    }
            }
    }

    const double inv_elems = 1.0 / static_cast<double>(reconstruction.numel());
    double mse = 0.0;
    for (std::size_t i = 0; i < reconstruction.numel(); ++i) {
        const double d = reconstruction.data[i] - input.data[i];
        mse += d * d;
        r.grad_recon.data[i] = w.recon * 2.0 * d * inv_elems;
    }
    r.term_recon = w.recon * mse * inv_elems;

    r.loss = r.term_conf_obj + r.term_conf_noobj + r.term_cls + r.term_box + r.term_recon;
    return r;
}

double climate_loss_grads(Network& net, const ClimateBatch& batch,
                          const ClimateLossWeights& weights) {
    std::vector<TapeEntry> enc_tape;
    Tensor enc = seq_forward(net.trunk, batch.images, &enc_tape);

    ClimateForward f;
    f.preds.conf = conv2d_forward(enc, net.heads[0].weights, net.heads[0].bias, net.heads[0].spec);
    f.preds.cls = conv2d_forward(enc, net.heads[1].weights, net.heads[1].bias, net.heads[1].spec);
    f.preds.xy = conv2d_forward(enc, net.heads[2].weights, net.heads[2].bias, net.heads[2].spec);
    f.preds.wh = conv2d_forward(enc, net.heads[3].weights, net.heads[3].bias, net.heads[3].spec);
    std::vector<TapeEntry> dec_tape;
    f.reconstruction = seq_forward(net.decoder, enc, &dec_tape);

    ClimateLossResult lr = climate_loss(f.preds, batch.boxes, batch.images,
                                        f.reconstruction, weights);

    Tensor denc = Tensor::zeros(enc.shape);
    const Tensor* head_grads[4] = {&lr.grad_preds.conf, &lr.grad_preds.cls,
                                   &lr.grad_preds.xy, &lr.grad_preds.wh};
    for (std::size_t h = 0; h < 4; ++h) {
        Layer& layer = net.heads[h];
        ConvGrads g = conv2d_backward(enc, layer.weights, *head_grads[h], layer.spec);
        for (std::size_t i = 0; i < layer.grad_weights.numel(); ++i)
            layer.grad_weights.data[i] += g.grad_weights.data[i];
        for (std::size_t i = 0; i < layer.grad_bias.numel(); ++i)
            layer.grad_bias.data[i] += g.grad_bias.data[i];
        for (std::size_t i = 0; i < denc.numel(); ++i)
            denc.data[i] += g.grad_input.data[i];
    }
    Tensor dec_grad = seq_backward(net.decoder, dec_tape, lr.grad_recon);
    for (std::size_t i = 0; i < denc.numel(); ++i) denc.data[i] += dec_grad.data[i];

    seq_backward(net.trunk, enc_tape, denc);
    return lr.loss;
}

std::vector<BoxPrediction> infer_boxes(const ClimatePreds& preds, std::size_t sample,
                                       double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ValidationError("infer_boxes threshold must be in [0,1]");
    const std::size_t gh = preds.conf.shape[2], gw = preds.conf.shape[3];
    const std::size_t K = preds.cls.shape[1];
    std::vector<BoxPrediction> out;
    for (std::size_t i = 0; i < gh; ++i)
        for (std::size_t j = 0; j < gw; ++j) {
            const double conf = sigmoid(preds.conf.at4(sample, 0, i, j));
            if (!(conf > threshold)) continue;
            BoxPrediction b;
            b.cell_i = i;
            b.cell_j = j;
            b.confidence = conf;
            b.class_id = 0;
            double best = preds.cls.at4(sample, 0, i, j);
            for (std::size_t k = 1; k < K; ++k)
                if (preds.cls.at4(sample, k, i, j) > best) {
                    best = preds.cls.at4(sample, k, i, j);
                    b.class_id = static_cast<int>(k);
                }
            b.x = preds.xy.at4(sample, 0, i, j);
            b.y = preds.xy.at4(sample, 1, i, j);
            const double sw = preds.wh.at4(sample, 0, i, j);
            const double sh = preds.wh.at4(sample, 1, i, j);
            b.w = std::max(sw * sw, 1e-6);
            b.h = std::max(sh * sh, 1e-6);
            out.push_back(b);
        }
    return out;
}

double roc_tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& labels,
                      double target_fpr) {
    if (scores.size() != labels.size() || scores.empty())
        throw ValidationError("roc: scores/labels size mismatch or empty");
    if (!(target_fpr > 0.0 && target_fpr < 1.0))
        throw ValidationError("roc: target_fpr must be in (0,1)");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw ValidationError("roc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    // sweep thresholds over distinct scores, descending; predict positive
    // when score >= threshold
    double best_tpr = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = scores[order[i]];
        while (i < order.size() && scores[order[i]] == t) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        if (fpr <= target_fpr && tpr > best_tpr) best_tpr = tpr;
    }
    return best_tpr;
}

BaselineCut fit_baseline_cut(const std::vector<HepSample>& fit_split, double target_fpr) {
    if (fit_split.empty()) throw ValidationError("baseline fit: empty dataset");
    std::size_t pos = 0;
    for (const HepSample& s : fit_split) pos += s.label ? 1 : 0;
    if (pos == 0 || pos == fit_split.size())
        throw ValidationError("baseline fit: both classes must be present");

    // candidate thresholds: coarse quantiles plus the extreme upper tail, so
    // tight false-positive targets stay reachable
    const std::size_t levels = 16;
    const double tail[] = {0.96, 0.98, 0.99, 0.995, 0.998, 0.999};
    std::array<std::vector<double>, 3> cands;
    for (std::size_t f = 0; f < 3; ++f) {
        std::vector<double> vals;
        vals.reserve(fit_split.size());
        for (const HepSample& s : fit_split) vals.push_back(s.features[f]);
        std::sort(vals.begin(), vals.end());
        for (std::size_t q = 0; q < levels; ++q)
            cands[f].push_back(vals[(q * vals.size()) / levels]);
        for (double t : tail)
            cands[f].push_back(vals[std::min(
                vals.size() - 1, static_cast<std::size_t>(t * static_cast<double>(vals.size())))]);
    }

    BaselineCut best;
    bool feasible = false;
    double best_key_fpr = 2.0;
    for (double t0 : cands[0])
        for (double t1 : cands[1])
            for (double t2 : cands[2]) {
                std::size_t tp = 0, fp = 0;
                for (const HepSample& s : fit_split) {
                    const bool pass = s.features[0] >= t0 && s.features[1] >= t1 &&
                                      s.features[2] >= t2;
                    if (!pass) continue;
                    (s.label ? tp : fp)++;
                }
                const double fpr = static_cast<double>(fp) /
                                   static_cast<double>(fit_split.size() - pos);
                const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
                const bool ok = fpr <= target_fpr;
                bool take = false;
                if (ok && !feasible) {
                    take = true;
                } else if (ok == feasible) {
                    if (ok)
                        take = tpr > best.fit_tpr || (tpr == best.fit_tpr && fpr < best.fit_fpr);
                    else
                        take = fpr < best_key_fpr || (fpr == best_key_fpr && tpr > best.fit_tpr);
                }
                if (take) {
                    feasible = feasible || ok;
                    best.thresholds = {t0, t1, t2};
                    best.fit_tpr = tpr;
                    best.fit_fpr = fpr;
                    best_key_fpr = fpr;
                }
            }
    return best;
}

std::vector<double> baseline_cut_scores(const BaselineCut& cut,
                                        const std::vector<HepSample>& samples) {
    if (samples.empty()) throw ValidationError("baseline scores: empty dataset");
    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const HepSample& s : samples) {
        double sc = 0.0;
        for (std::size_t f = 0; f < 3; ++f)
            if (s.features[f] >= cut.thresholds[f]) sc += 1.0;
        scores.push_back(sc);
    }
    return scores;
}

namespace {

double loss_only(Network& net, const GradCheckTargets& t) {
    if (net.topology == Network::Topology::hep) {
        Tensor logits = hep_forward_logits(net, t.hep->images);
        return softmax_xent(logits, t.hep->labels).loss;
    }
    ClimateForward f = climate_forward(net, t.climate->images);
    return climate_loss(f.preds, t.climate->boxes, t.climate->images,
                        f.reconstruction, t.climate_weights)
        .loss;
}

} // namespace

double grad_check(Network& net, const GradCheckTargets& targets, double eps) {
    if (eps <= 0.0) throw ValidationError("grad_check eps must be > 0");
    net.zero_grads();
    if (net.topology == Network::Topology::hep)
        hep_loss_grads(net, *targets.hep);
    else
        climate_loss_grads(net, *targets.climate, targets.climate_weights);

    double max_rel = 0.0;
    for (Network::Block& block : net.param_blocks()) {
        // deterministic even subsample over the block's flattened parameters
        std::size_t total = 0;
        for (const Tensor* p : block.params) total += p->numel();
        const std::size_t samples = std::min<std::size_t>(total, 200);
        for (std::size_t k = 0; k < samples; ++k) {
            std::size_t flat = (k * total) / samples;
            std::size_t ti = 0;
            while (flat >= block.params[ti]->numel()) {
                flat -= block.params[ti]->numel();
                ++ti;
            }
            Tensor& p = *block.params[ti];
            const double orig = p.data[flat];
            p.data[flat] = orig + eps;
            const double lp = loss_only(net, targets);
            p.data[flat] = orig - eps;
            const double lm = loss_only(net, targets);
            p.data[flat] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double a = block.grads[ti]->data[flat];
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-12});
            max_rel = std::max(max_rel, std::abs(a - fd) / denom);
        }
    }
    return max_rel;
}

} // namespace hybridtrain
