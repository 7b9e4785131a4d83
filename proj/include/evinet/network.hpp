#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evinet/evidential.hpp"
#include "evinet/volume.hpp"

namespace evinet::net {

enum class EvidenceActivation { Relu, Softplus };

EvidenceActivation parse_evidence_activation(const std::string& name);
std::string evidence_activation_name(EvidenceActivation a);

// Three-stage 3D CNN over a single-channel cube:
//   stage 1: conv(k3,pad1) + ReLU + maxpool2
//   stage 2: two residual blocks (conv-ReLU-conv + identity skip, ReLU),
//            each followed by maxpool2; a 1x1x1 channel projection is
//            inserted before the blocks when stage1_channels differs from
//            block_channels
//   stage 3: global average pool, dense to `classes`, non-negativity
//            activation -> evidence
struct NetworkConfig {
    int input_side = 32;       // divisible by 8 (three 2x poolings)
    int stage1_channels = 16;
    int block_channels = 16;
    int classes = 3;
    EvidenceActivation evidence_activation = EvidenceActivation::Relu;

    static constexpr int kKernel = 3;

    void validate() const;
    bool needs_projection() const { return stage1_channels != block_channels; }
};

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int epochs = 300;

    void validate() const;
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t size() const { return data.size(); }
};

// Full trainable state: parameters plus first/second optimizer moments and
// the optimizer step counter. Serialises bit-exactly (see save_checkpoint).
struct ModelState {
    NetworkConfig config;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    std::vector<Tensor> params;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
};

// Expected parameter tensors (name, shape) for a config, in storage order.
std::vector<std::pair<std::string, std::vector<int>>> parameter_spec(const NetworkConfig& config);

// Fan-in-scaled uniform weights, zero biases, zero moments, from `seed`.
ModelState init_model(const NetworkConfig& config, std::uint64_t seed);

// Intermediate activations kept for tests and for backpropagation.
template <typename T>
struct ForwardTrace {
    std::vector<T> input;                      // 1 x s^3
    std::vector<T> conv1_pre, conv1_act;       // c1 x s^3
    std::vector<T> pool1;                      // c1 x (s/2)^3
    std::vector<int> pool1_arg;
    std::vector<T> stage2_in;                  // c2 x (s/2)^3
    struct Block {
        std::vector<T> pre_a, act_a, pre_b, sum, out;  // c2 x side^3
        std::vector<T> pooled;                          // c2 x (side/2)^3
        std::vector<int> pool_arg;
    };
    Block block1, block2;                      // sides s/2 and s/4
    std::vector<T> gap;                        // c2
    std::vector<T> head_pre;                   // classes
    std::vector<T> evidence;                   // classes
};

// Inference path (32-bit arithmetic, the one training uses). Deterministic
// given state and input; throws numeric_error naming the first layer that
// produces a non-finite value.
std::vector<double> forward(const ModelState& state, const Volume3D& input);

std::vector<double> forward_traced(const ModelState& state, const Volume3D& input,
                                   ForwardTrace<float>& trace);
std::vector<double> forward_traced(const ModelState& state, const Volume3D& input,
                                   ForwardTrace<double>& trace);

using Gradients = std::vector<std::vector<double>>;   // parallel to state.params

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

// Loss and parameter gradients for one subject (32-bit path).
BackwardResult backward(const ModelState& state, const Volume3D& input, int true_class,
                        const ClassWeights& weights);

// 64-bit twins of forward/backward for finite-difference verification.
double loss_f64(const ModelState& state, const Volume3D& input, int true_class,
                const ClassWeights& weights);
BackwardResult backward_f64(const ModelState& state, const Volume3D& input, int true_class,
                            const ClassWeights& weights);

// One bias-corrected adaptive-moment update; increments state.step.
void adam_step(ModelState& state, const Gradients& grads, const OptimizerConfig& config);

struct TrainResult {
    ModelState state;
    std::vector<double> epoch_loss;   // mean training loss per epoch
};

// Mini-batch training with mean-of-batch gradients. Class weights are the
// reciprocals of the class counts of `labels`; every class must be present.
// Fully deterministic given `seed`.
TrainResult train(const std::vector<const Volume3D*>& volumes, const std::vector<int>& labels,
                  const NetworkConfig& net_config, const OptimizerConfig& opt_config,
                  std::uint64_t seed);

// Checkpoint container: magic "EVNCKPT1", little-endian uint32 JSON header
// length, JSON header (config, seed, step, tensor table with name/shape/
// offset/count), then the concatenated f32le tensor payload.
void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path);

} // namespace evinet::net
