#include "evinet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "evinet/errors.hpp"
#include "evinet/rng.hpp"

namespace evinet::net {

EvidenceActivation parse_evidence_activation(const std::string& name) {
    if (name == "relu") return EvidenceActivation::Relu;
    if (name == "softplus") return EvidenceActivation::Softplus;
    throw validation_error("unknown evidence activation '" + name + "' (expected relu|softplus)");
}

std::string evidence_activation_name(EvidenceActivation a) {
    return a == EvidenceActivation::Relu ? "relu" : "softplus";
}

void NetworkConfig::validate() const {
    if (input_side < 8 || input_side % 8 != 0) {
        throw validation_error("NetworkConfig: input_side must be a positive multiple of 8, got " +
                               std::to_string(input_side));
    }
    if (stage1_channels < 1 || block_channels < 1) {
        throw validation_error("NetworkConfig: channel counts must be >= 1");
    }
    if (classes < 2) {
        throw validation_error("NetworkConfig: classes must be >= 2");
    }
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw validation_error("OptimizerConfig: learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw validation_error("OptimizerConfig: betas must lie in (0,1)");
    }
    if (!(epsilon > 0.0)) throw validation_error("OptimizerConfig: epsilon must be > 0");
    if (batch_size < 1) throw validation_error("OptimizerConfig: batch_size must be >= 1");
    if (epochs < 1) throw validation_error("OptimizerConfig: epochs must be >= 1");
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_spec(const NetworkConfig& cfg) {
    cfg.validate();
    const int c1 = cfg.stage1_channels, c2 = cfg.block_channels, k = NetworkConfig::kKernel;
    std::vector<std::pair<std::string, std::vector<int>>> spec;
    spec.emplace_back("conv1.w", std::vector<int>{c1, 1, k, k, k});
    spec.emplace_back("conv1.b", std::vector<int>{c1});
    if (cfg.needs_projection()) {
        spec.emplace_back("proj.w", std::vector<int>{c2, c1, 1, 1, 1});
        spec.emplace_back("proj.b", std::vector<int>{c2});
    }
    for (int b = 1; b <= 2; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        spec.emplace_back(prefix + ".conv_a.w", std::vector<int>{c2, c2, k, k, k});
        spec.emplace_back(prefix + ".conv_a.b", std::vector<int>{c2});
        spec.emplace_back(prefix + ".conv_b.w", std::vector<int>{c2, c2, k, k, k});
        spec.emplace_back(prefix + ".conv_b.b", std::vector<int>{c2});
    }
    spec.emplace_back("head.w", std::vector<int>{cfg.classes, c2});
    spec.emplace_back("head.b", std::vector<int>{cfg.classes});
    return spec;
}

namespace {

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

// Indices of the tensors within ModelState::params; -1 when absent.
struct ParamIndex {
    int conv1_w, conv1_b;
    int proj_w, proj_b;
    int b1_aw, b1_ab, b1_bw, b1_bb;
    int b2_aw, b2_ab, b2_bw, b2_bb;
    int head_w, head_b;
};

ParamIndex param_index(const NetworkConfig& cfg) {
    ParamIndex ix{};
    int next = 0;
    ix.conv1_w = next++;
    ix.conv1_b = next++;
    if (cfg.needs_projection()) {
        ix.proj_w = next++;
        ix.proj_b = next++;
    } else {
        ix.proj_w = ix.proj_b = -1;
    }
    ix.b1_aw = next++; ix.b1_ab = next++; ix.b1_bw = next++; ix.b1_bb = next++;
    ix.b2_aw = next++; ix.b2_ab = next++; ix.b2_bw = next++; ix.b2_bb = next++;
    ix.head_w = next++;
    ix.head_b = next++;
    return ix;
}

template <typename T>
void check_finite(const std::vector<T>& buf, const char* layer) {
    for (T v : buf) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw numeric_error(std::string("non-finite activation after layer '") + layer + "'");
        }
    }
}

// 'Same' 3D convolution, kernel k with pad k/2, over cubes of side d.
// w layout: [oc][ic][kz][ky][kx].
template <typename T>
void conv3d(const T* in, int ic, int d, const float* w, const float* bias, int oc, int k, T* out) {
    const int p = k / 2;
    const std::size_t vol = static_cast<std::size_t>(d) * d * d;
    for (int o = 0; o < oc; ++o) {
        std::fill(out + o * vol, out + (o + 1) * vol, static_cast<T>(bias[o]));
    }
    for (int o = 0; o < oc; ++o) {
        T* outc = out + o * vol;
        for (int i = 0; i < ic; ++i) {
            const T* inc = in + i * vol;
            for (int kz = 0; kz < k; ++kz) {
                const int dz = kz - p;
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - p;
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - p;
                        const T wv = static_cast<T>(w[(((o * ic + i) * k + kz) * k + ky) * k + kx]);
                        const int z0 = std::max(0, -dz), z1 = d - std::max(0, dz);
                        const int y0 = std::max(0, -dy), y1 = d - std::max(0, dy);
                        const int x0 = std::max(0, -dx), x1 = d - std::max(0, dx);
                        for (int z = z0; z < z1; ++z) {
                            for (int y = y0; y < y1; ++y) {
                                T* orow = outc + (static_cast<std::size_t>(z) * d + y) * d;
                                const T* irow = inc + (static_cast<std::size_t>(z + dz) * d + (y + dy)) * d + dx;
                                for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradients of the same convolution. gin may be null when the input
// gradient is not needed (first layer).
template <typename T>
void conv3d_backward(const T* in, const T* gout, int ic, int d, const float* w, int oc, int k,
                     T* gw, T* gb, T* gin) {
    const int p = k / 2;
    const std::size_t vol = static_cast<std::size_t>(d) * d * d;
    for (int o = 0; o < oc; ++o) {
        T acc = 0;
        const T* gc = gout + o * vol;
        for (std::size_t j = 0; j < vol; ++j) acc += gc[j];
        gb[o] = acc;
    }
    for (int o = 0; o < oc; ++o) {
        const T* gc = gout + o * vol;
        for (int i = 0; i < ic; ++i) {
            const T* inc = in + i * vol;
            T* ginc = gin ? gin + i * vol : nullptr;
            for (int kz = 0; kz < k; ++kz) {
                const int dz = kz - p;
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - p;
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - p;
                        const int z0 = std::max(0, -dz), z1 = d - std::max(0, dz);
                        const int y0 = std::max(0, -dy), y1 = d - std::max(0, dy);
                        const int x0 = std::max(0, -dx), x1 = d - std::max(0, dx);
                        const std::size_t widx = (((static_cast<std::size_t>(o) * ic + i) * k + kz) * k + ky) * k + kx;
                        const T wv = static_cast<T>(w[widx]);
                        T wacc = 0;
                        for (int z = z0; z < z1; ++z) {
                            for (int y = y0; y < y1; ++y) {
                                const T* grow = gc + (static_cast<std::size_t>(z) * d + y) * d;
                                const T* irow = inc + (static_cast<std::size_t>(z + dz) * d + (y + dy)) * d + dx;
                                T* grin = ginc ? ginc + (static_cast<std::size_t>(z + dz) * d + (y + dy)) * d + dx : nullptr;
                                T rowacc = 0;
                                for (int x = x0; x < x1; ++x) rowacc += grow[x] * irow[x];
                                wacc += rowacc;
                                if (grin) {
                                    for (int x = x0; x < x1; ++x) grin[x] += wv * grow[x];
                                }
                            }
                        }
                        gw[widx] = wacc;
                    }
                }
            }
        }
    }
}

template <typename T>
void relu(const std::vector<T>& in, std::vector<T>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// 2x non-overlapping max pooling; argmax stores flat indices into `in`
// (first maximum in scan order wins ties, which keeps pooling and its
// adjoint deterministic).
template <typename T>
void maxpool2(const T* in, int c, int d, T* out, int* argmax) {
    const int h = d / 2;
    const std::size_t vol = static_cast<std::size_t>(d) * d * d;
    std::size_t oidx = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* inc = in + ch * vol;
        for (int zo = 0; zo < h; ++zo) {
            for (int yo = 0; yo < h; ++yo) {
                for (int xo = 0; xo < h; ++xo, ++oidx) {
                    T best{};
                    std::size_t best_idx = 0;
                    bool first = true;
                    for (int dz = 0; dz < 2; ++dz) {
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx =
                                    (static_cast<std::size_t>(2 * zo + dz) * d + (2 * yo + dy)) * d +
                                    (2 * xo + dx);
                                const T v = inc[idx];
                                if (first || v > best) {
                                    best = v;
                                    best_idx = ch * vol + idx;
                                    first = false;
                                }
                            }
                        }
                    }
                    out[oidx] = best;
                    argmax[oidx] = static_cast<int>(best_idx);
                }
            }
        }
    }
}

template <typename T>
T softplus(T x) {
    if (x > T(0)) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
std::vector<double> forward_impl(const ModelState& state, const Volume3D& input,
                                 ForwardTrace<T>& t) {
    const NetworkConfig& cfg = state.config;
    cfg.validate();
    const int s = cfg.input_side;
    if (input.dims[0] != s || input.dims[1] != s || input.dims[2] != s) {
        throw validation_error("forward: expected a cube of side " + std::to_string(s) +
                               ", got " + std::to_string(input.dims[0]) + "x" +
                               std::to_string(input.dims[1]) + "x" + std::to_string(input.dims[2]));
    }
    const int c1 = cfg.stage1_channels, c2 = cfg.block_channels, K = cfg.classes;
    const int h = s / 2, q = s / 4, e = s / 8;
    const auto cube = [](int side) { return static_cast<std::size_t>(side) * side * side; };
    const ParamIndex ix = param_index(cfg);
    const auto& P = state.params;

    t.input.resize(cube(s));
    for (std::size_t i = 0; i < t.input.size(); ++i) t.input[i] = static_cast<T>(input.values[i]);
    check_finite(t.input, "input");

    // Stage 1
    t.conv1_pre.resize(static_cast<std::size_t>(c1) * cube(s));
    conv3d(t.input.data(), 1, s, P[ix.conv1_w].data.data(), P[ix.conv1_b].data.data(), c1,
           NetworkConfig::kKernel, t.conv1_pre.data());
    check_finite(t.conv1_pre, "conv1");
    relu(t.conv1_pre, t.conv1_act);
    t.pool1.resize(static_cast<std::size_t>(c1) * cube(h));
    t.pool1_arg.resize(t.pool1.size());
    maxpool2(t.conv1_act.data(), c1, s, t.pool1.data(), t.pool1_arg.data());

    // Optional channel projection into the residual stage.
    t.stage2_in.resize(static_cast<std::size_t>(c2) * cube(h));
    if (cfg.needs_projection()) {
        conv3d(t.pool1.data(), c1, h, P[ix.proj_w].data.data(), P[ix.proj_b].data.data(), c2, 1,
               t.stage2_in.data());
        check_finite(t.stage2_in, "proj");
    } else {
        std::copy(t.pool1.begin(), t.pool1.end(), t.stage2_in.begin());
    }

    // Stage 2: two residual blocks, each pooled afterwards.
    const auto run_block = [&](typename ForwardTrace<T>::Block& blk, const std::vector<T>& x,
                               int side, int aw, int ab, int bw, int bb, const char* name) {
        const std::size_t n = static_cast<std::size_t>(c2) * cube(side);
        blk.pre_a.resize(n);
        conv3d(x.data(), c2, side, P[aw].data.data(), P[ab].data.data(), c2,
               NetworkConfig::kKernel, blk.pre_a.data());
        check_finite(blk.pre_a, name);
        relu(blk.pre_a, blk.act_a);
        blk.pre_b.resize(n);
        conv3d(blk.act_a.data(), c2, side, P[bw].data.data(), P[bb].data.data(), c2,
               NetworkConfig::kKernel, blk.pre_b.data());
        check_finite(blk.pre_b, name);
        blk.sum.resize(n);
        for (std::size_t i = 0; i < n; ++i) blk.sum[i] = blk.pre_b[i] + x[i];
        relu(blk.sum, blk.out);
        blk.pooled.resize(static_cast<std::size_t>(c2) * cube(side / 2));
        blk.pool_arg.resize(blk.pooled.size());
        maxpool2(blk.out.data(), c2, side, blk.pooled.data(), blk.pool_arg.data());
    };
    run_block(t.block1, t.stage2_in, h, ix.b1_aw, ix.b1_ab, ix.b1_bw, ix.b1_bb, "block1");
    run_block(t.block2, t.block1.pooled, q, ix.b2_aw, ix.b2_ab, ix.b2_bw, ix.b2_bb, "block2");

    // Stage 3: global average pool, dense head, non-negativity activation.
    t.gap.assign(static_cast<std::size_t>(c2), T(0));
    const std::size_t evol = cube(e);
    for (int ch = 0; ch < c2; ++ch) {
        T acc = 0;
        const T* pc = t.block2.pooled.data() + static_cast<std::size_t>(ch) * evol;
        for (std::size_t j = 0; j < evol; ++j) acc += pc[j];
        t.gap[static_cast<std::size_t>(ch)] = acc / static_cast<T>(evol);
    }
    t.head_pre.assign(static_cast<std::size_t>(K), T(0));
    for (int k = 0; k < K; ++k) {
        T acc = static_cast<T>(P[ix.head_b].data[static_cast<std::size_t>(k)]);
        for (int ch = 0; ch < c2; ++ch) {
            acc += static_cast<T>(P[ix.head_w].data[static_cast<std::size_t>(k) * c2 + ch]) *
                   t.gap[static_cast<std::size_t>(ch)];
        }
        t.head_pre[static_cast<std::size_t>(k)] = acc;
    }
    check_finite(t.head_pre, "head");
    t.evidence.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const T x = t.head_pre[static_cast<std::size_t>(k)];
        t.evidence[static_cast<std::size_t>(k)] =
            cfg.evidence_activation == EvidenceActivation::Relu ? (x > T(0) ? x : T(0))
                                                                : softplus(x);
    }
    check_finite(t.evidence, "evidence");
    return std::vector<double>(t.evidence.begin(), t.evidence.end());
}

// Per-parameter gradient buffers plus the intermediate adjoints reused
// across samples during training.
template <typename T>
struct BackBuffers {
    std::vector<std::vector<T>> param_grads;
    std::vector<T> g_stage2_in, g_pool1, g_conv1_act, g_conv1_pre;
    struct BlockG {
        std::vector<T> g_out, g_sum, g_act_a, g_pre_a, g_x;
    } b1, b2;

    void init(const NetworkConfig& cfg) {
        const auto spec = parameter_spec(cfg);
        param_grads.resize(spec.size());
        for (std::size_t i = 0; i < spec.size(); ++i) {
            param_grads[i].assign(shape_count(spec[i].second), T(0));
        }
    }
};

template <typename T>
double backward_impl(const ModelState& state, const Volume3D& input, int true_class,
                     const ClassWeights& weights, ForwardTrace<T>& t, BackBuffers<T>& bb) {
    const NetworkConfig& cfg = state.config;
    const std::vector<double> evidence = forward_impl(state, input, t);
    const LossResult loss = evidential_loss(evidence, true_class, weights);

    const int c1 = cfg.stage1_channels, c2 = cfg.block_channels, K = cfg.classes;
    const int s = cfg.input_side, h = s / 2, q = s / 4, e = s / 8;
    const auto cube = [](int side) { return static_cast<std::size_t>(side) * side * side; };
    const ParamIndex ix = param_index(cfg);
    const auto& P = state.params;
    if (bb.param_grads.empty()) bb.init(cfg);
    for (auto& g : bb.param_grads) std::fill(g.begin(), g.end(), T(0));

    // Head: evidence activation, dense, global average pool.
    std::vector<T> g_head_pre(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const T pre = t.head_pre[static_cast<std::size_t>(k)];
        const T gate = cfg.evidence_activation == EvidenceActivation::Relu
                           ? (pre > T(0) ? T(1) : T(0))
                           : sigmoid(pre);
        g_head_pre[static_cast<std::size_t>(k)] =
            static_cast<T>(loss.grad_evidence[static_cast<std::size_t>(k)]) * gate;
    }
    auto& g_head_w = bb.param_grads[static_cast<std::size_t>(ix.head_w)];
    auto& g_head_b = bb.param_grads[static_cast<std::size_t>(ix.head_b)];
    std::vector<T> g_gap(static_cast<std::size_t>(c2), T(0));
    for (int k = 0; k < K; ++k) {
        const T gk = g_head_pre[static_cast<std::size_t>(k)];
        g_head_b[static_cast<std::size_t>(k)] = gk;
        for (int ch = 0; ch < c2; ++ch) {
            g_head_w[static_cast<std::size_t>(k) * c2 + ch] = gk * t.gap[static_cast<std::size_t>(ch)];
            g_gap[static_cast<std::size_t>(ch)] +=
                static_cast<T>(P[ix.head_w].data[static_cast<std::size_t>(k) * c2 + ch]) * gk;
        }
    }

    // Unpool through block2's pooling: spread the GAP average first.
    const std::size_t evol = cube(e);
    std::vector<T> g_pool3(static_cast<std::size_t>(c2) * evol);
    for (int ch = 0; ch < c2; ++ch) {
        const T g = g_gap[static_cast<std::size_t>(ch)] / static_cast<T>(evol);
        std::fill_n(g_pool3.begin() + static_cast<std::size_t>(ch) * evol, evol, g);
    }

    const auto unpool = [](const std::vector<T>& g_pooled, const std::vector<int>& arg,
                           std::vector<T>& g_in, std::size_t in_size) {
        g_in.assign(in_size, T(0));
        for (std::size_t j = 0; j < g_pooled.size(); ++j) {
            g_in[static_cast<std::size_t>(arg[j])] += g_pooled[j];
        }
    };

    // Residual block adjoint. Returns via blk_g.g_x the gradient wrt the
    // block input (skip path plus conv_a input gradient).
    const auto block_backward = [&](const typename ForwardTrace<T>::Block& blk,
                                    typename BackBuffers<T>::BlockG& bg, const std::vector<T>& x,
                                    int side, int aw, int ab, int bw, int bbx,
                                    const std::vector<T>& g_pooled) {
        const std::size_t n = static_cast<std::size_t>(c2) * cube(side);
        unpool(g_pooled, blk.pool_arg, bg.g_out, n);
        bg.g_sum.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            bg.g_sum[i] = blk.sum[i] > T(0) ? bg.g_out[i] : T(0);
        }
        bg.g_act_a.assign(n, T(0));
        conv3d_backward(blk.act_a.data(), bg.g_sum.data(), c2, side, P[bw].data.data(), c2,
                        NetworkConfig::kKernel,
                        bb.param_grads[static_cast<std::size_t>(bw)].data(),
                        bb.param_grads[static_cast<std::size_t>(bbx)].data(), bg.g_act_a.data());
        bg.g_pre_a.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            bg.g_pre_a[i] = blk.pre_a[i] > T(0) ? bg.g_act_a[i] : T(0);
        }
        bg.g_x.assign(n, T(0));
        conv3d_backward(x.data(), bg.g_pre_a.data(), c2, side, P[aw].data.data(), c2,
                        NetworkConfig::kKernel,
                        bb.param_grads[static_cast<std::size_t>(aw)].data(),
                        bb.param_grads[static_cast<std::size_t>(ab)].data(), bg.g_x.data());
        // Skip connection.
        for (std::size_t i = 0; i < n; ++i) bg.g_x[i] += bg.g_sum[i];
    };

    block_backward(t.block2, bb.b2, t.block1.pooled, q, ix.b2_aw, ix.b2_ab, ix.b2_bw, ix.b2_bb,
                   g_pool3);
    block_backward(t.block1, bb.b1, t.stage2_in, h, ix.b1_aw, ix.b1_ab, ix.b1_bw, ix.b1_bb,
                   bb.b2.g_x);

    // Projection (or pass-through) back to stage 1.
    if (cfg.needs_projection()) {
        bb.g_pool1.assign(static_cast<std::size_t>(c1) * cube(h), T(0));
        conv3d_backward(t.pool1.data(), bb.b1.g_x.data(), c1, h, P[ix.proj_w].data.data(), c2, 1,
                        bb.param_grads[static_cast<std::size_t>(ix.proj_w)].data(),
                        bb.param_grads[static_cast<std::size_t>(ix.proj_b)].data(),
                        bb.g_pool1.data());
    } else {
        bb.g_pool1 = bb.b1.g_x;
    }

    unpool(bb.g_pool1, t.pool1_arg, bb.g_conv1_act, static_cast<std::size_t>(c1) * cube(s));
    bb.g_conv1_pre.resize(bb.g_conv1_act.size());
    for (std::size_t i = 0; i < bb.g_conv1_act.size(); ++i) {
        bb.g_conv1_pre[i] = t.conv1_pre[i] > T(0) ? bb.g_conv1_act[i] : T(0);
    }
    conv3d_backward(t.input.data(), bb.g_conv1_pre.data(), 1, s, P[ix.conv1_w].data.data(), c1,
                    NetworkConfig::kKernel,
                    bb.param_grads[static_cast<std::size_t>(ix.conv1_w)].data(),
                    bb.param_grads[static_cast<std::size_t>(ix.conv1_b)].data(),
                    static_cast<T*>(nullptr));

    return loss.value;
}

} // namespace

ModelState init_model(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    ModelState state;
    state.config = config;
    state.seed = seed;
    state.step = 0;
    std::mt19937_64 rng(seed);
    for (const auto& [name, shape] : parameter_spec(config)) {
        Tensor t;
        t.name = name;
        t.shape = shape;
        t.data.assign(shape_count(shape), 0.0f);
        const bool is_weight = name.ends_with(".w");
        if (is_weight) {
            // Fan-in: product of all dims but the leading output one.
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= static_cast<std::size_t>(shape[i]);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (float& v : t.data) v = static_cast<float>(uniform_in(rng, -bound, bound));
        }
        state.params.push_back(t);
        Tensor zero = t;
        std::fill(zero.data.begin(), zero.data.end(), 0.0f);
        state.adam_m.push_back(zero);
        state.adam_v.push_back(std::move(zero));
    }
    return state;
}

std::vector<double> forward(const ModelState& state, const Volume3D& input) {
    ForwardTrace<float> trace;
    return forward_impl(state, input, trace);
}

std::vector<double> forward_traced(const ModelState& state, const Volume3D& input,
                                   ForwardTrace<float>& trace) {
    return forward_impl(state, input, trace);
}

std::vector<double> forward_traced(const ModelState& state, const Volume3D& input,
                                   ForwardTrace<double>& trace) {
    return forward_impl(state, input, trace);
}

BackwardResult backward(const ModelState& state, const Volume3D& input, int true_class,
                        const ClassWeights& weights) {
    ForwardTrace<float> trace;
    BackBuffers<float> bb;
    BackwardResult r;
    r.loss = backward_impl(state, input, true_class, weights, trace, bb);
    r.grads.resize(bb.param_grads.size());
    for (std::size_t i = 0; i < bb.param_grads.size(); ++i) {
        r.grads[i].assign(bb.param_grads[i].begin(), bb.param_grads[i].end());
    }
    return r;
}

double loss_f64(const ModelState& state, const Volume3D& input, int true_class,
                const ClassWeights& weights) {
    ForwardTrace<double> trace;
    const std::vector<double> evidence = forward_impl(state, input, trace);
    return evidential_loss(evidence, true_class, weights).value;
}

BackwardResult backward_f64(const ModelState& state, const Volume3D& input, int true_class,
                            const ClassWeights& weights) {
    ForwardTrace<double> trace;
    BackBuffers<double> bb;
    BackwardResult r;
    r.loss = backward_impl(state, input, true_class, weights, trace, bb);
    r.grads.resize(bb.param_grads.size());
    for (std::size_t i = 0; i < bb.param_grads.size(); ++i) {
        r.grads[i].assign(bb.param_grads[i].begin(), bb.param_grads[i].end());
    }
    return r;
}

void adam_step(ModelState& state, const Gradients& grads, const OptimizerConfig& config) {
    config.validate();
    if (grads.size() != state.params.size()) {
        throw validation_error("adam_step: gradient tensor count " + std::to_string(grads.size()) +
                               " does not match parameter count " +
                               std::to_string(state.params.size()));
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].size() != state.params[i].data.size()) {
            throw validation_error("adam_step: gradient shape mismatch for tensor '" +
                                   state.params[i].name + "'");
        }
    }
    const std::int64_t step = state.step + 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        float* theta = state.params[i].data.data();
        float* m = state.adam_m[i].data.data();
        float* v = state.adam_v[i].data.data();
        const std::vector<double>& g = grads[i];
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double mj = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            const double vj = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            theta[j] = static_cast<float>(theta[j] -
                                          config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
        }
    }
    state.step = step;
}

TrainResult train(const std::vector<const Volume3D*>& volumes, const std::vector<int>& labels,
                  const NetworkConfig& net_config, const OptimizerConfig& opt_config,
                  std::uint64_t seed) {
    net_config.validate();
    opt_config.validate();
    if (volumes.empty() || volumes.size() != labels.size()) {
        throw validation_error("train: need a nonempty, equally sized volume/label list");
    }
    std::vector<std::int64_t> counts(static_cast<std::size_t>(net_config.classes), 0);
    for (int label : labels) {
        if (label < 0 || label >= net_config.classes) {
            throw validation_error("train: label " + std::to_string(label) + " outside [0," +
                                   std::to_string(net_config.classes) + ")");
        }
        ++counts[static_cast<std::size_t>(label)];
    }
    const ClassWeights weights = class_weights_from_counts(counts);

    TrainResult result;
    result.state = init_model(net_config, derive_seed(seed, 0x1717));
    result.state.seed = seed;
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0x5487));

    ForwardTrace<float> trace;
    BackBuffers<float> bb;
    Gradients accum(parameter_spec(net_config).size());
    {
        const auto spec = parameter_spec(net_config);
        for (std::size_t i = 0; i < spec.size(); ++i) accum[i].resize(shape_count(spec[i].second));
    }

    std::vector<std::size_t> order(volumes.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = volumes.size();
    const std::size_t batch = static_cast<std::size_t>(opt_config.batch_size);

    for (int epoch = 0; epoch < opt_config.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        double epoch_loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            for (auto& g : accum) std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t s = start; s < stop; ++s) {
                const std::size_t idx = order[s];
                const double loss = backward_impl(result.state, *volumes[idx], labels[idx],
                                                  weights, trace, bb);
                epoch_loss_sum += loss;
                for (std::size_t i = 0; i < accum.size(); ++i) {
                    const auto& g = bb.param_grads[i];
                    for (std::size_t j = 0; j < g.size(); ++j) accum[i][j] += g[j];
                }
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (auto& g : accum) {
                for (double& x : g) x *= inv;
            }
            adam_step(result.state, accum, opt_config);
        }
        result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(n));
    }
    return result;
}

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'V', 'N', 'C', 'K', 'P', 'T', '1'};

nlohmann::json config_to_json(const NetworkConfig& cfg) {
    return nlohmann::json{
        {"input_side", cfg.input_side},
        {"stage1_channels", cfg.stage1_channels},
        {"block_channels", cfg.block_channels},
        {"classes", cfg.classes},
        {"evidence_activation", evidence_activation_name(cfg.evidence_activation)},
    };
}

NetworkConfig config_from_json(const nlohmann::json& j) {
    NetworkConfig cfg;
    cfg.input_side = j.at("input_side").get<int>();
    cfg.stage1_channels = j.at("stage1_channels").get<int>();
    cfg.block_channels = j.at("block_channels").get<int>();
    cfg.classes = j.at("classes").get<int>();
    cfg.evidence_activation = parse_evidence_activation(j.at("evidence_activation").get<std::string>());
    return cfg;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelState& state) {
    nlohmann::json header;
    header["config"] = config_to_json(state.config);
    header["seed"] = state.seed;
    header["step"] = state.step;
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    const auto add_group = [&](const char* group, const std::vector<Tensor>& ts) {
        for (const auto& t : ts) {
            tensors.push_back(nlohmann::json{{"name", std::string(group) + "/" + t.name},
                                             {"shape", t.shape},
                                             {"offset", offset},
                                             {"count", t.data.size()}});
            offset += t.data.size();
        }
    };
    add_group("param", state.params);
    add_group("adam_m", state.adam_m);
    add_group("adam_v", state.adam_v);
    header["tensors"] = tensors;
    header["dtype"] = "f32le";
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("save_checkpoint: cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    unsigned char len_le[4] = {
        static_cast<unsigned char>(len & 0xff), static_cast<unsigned char>((len >> 8) & 0xff),
        static_cast<unsigned char>((len >> 16) & 0xff), static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(len_le), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    const auto write_group = [&](const std::vector<Tensor>& ts) {
        for (const auto& t : ts) {
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        }
    };
    write_group(state.params);
    write_group(state.adam_m);
    write_group(state.adam_v);
    if (!out) throw io_error("save_checkpoint: failed writing " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw io_error("load_checkpoint: " + path + " is not a checkpoint file");
    }
    unsigned char len_le[4];
    in.read(reinterpret_cast<char*>(len_le), 4);
    if (in.gcount() != 4) throw io_error("load_checkpoint: truncated header in " + path);
    const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                              (static_cast<std::uint32_t>(len_le[1]) << 8) |
                              (static_cast<std::uint32_t>(len_le[2]) << 16) |
                              (static_cast<std::uint32_t>(len_le[3]) << 24);
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len)) {
        throw io_error("load_checkpoint: truncated header in " + path);
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("load_checkpoint: bad header JSON: ") + e.what());
    }

    ModelState state;
    try {
        state.config = config_from_json(header.at("config"));
        state.seed = header.at("seed").get<std::uint64_t>();
        state.step = header.at("step").get<std::int64_t>();
        if (header.at("dtype").get<std::string>() != "f32le") {
            throw io_error("load_checkpoint: unsupported tensor dtype");
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("load_checkpoint: bad header fields: ") + e.what());
    }

    const auto spec = parameter_spec(state.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != spec.size() * 3) {
        throw io_error("load_checkpoint: tensor table size does not match the config");
    }
    const auto read_group = [&](const char* group, std::size_t base,
                                std::vector<Tensor>& out_group) {
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const auto& entry = tensors.at(base + i);
            Tensor t;
            t.name = spec[i].first;
            t.shape = spec[i].second;
            const std::string expected = std::string(group) + "/" + spec[i].first;
            if (entry.at("name").get<std::string>() != expected) {
                throw io_error("load_checkpoint: expected tensor '" + expected + "', found '" +
                               entry.at("name").get<std::string>() + "'");
            }
            if (entry.at("shape").get<std::vector<int>>() != spec[i].second) {
                throw io_error("load_checkpoint: shape mismatch for tensor '" + expected + "'");
            }
            const std::size_t count = entry.at("count").get<std::size_t>();
            if (count != shape_count(spec[i].second)) {
                throw io_error("load_checkpoint: count mismatch for tensor '" + expected + "'");
            }
            t.data.resize(count);
            in.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(count * sizeof(float)));
            if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
                throw io_error("load_checkpoint: truncated payload in " + path);
            }
            out_group.push_back(std::move(t));
        }
    };
    read_group("param", 0, state.params);
    read_group("adam_m", spec.size(), state.adam_m);
    read_group("adam_v", spec.size() * 2, state.adam_v);
    return state;
}

} // namespace evinet::net
