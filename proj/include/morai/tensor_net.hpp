#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morai/tensor.hpp"

namespace morai {

inline constexpr double kDefaultLeakyAlpha = 0.01;

double leaky_relu(double x, double alpha);
/// Slope of leaky_relu; at exactly 0 the slope is alpha.
double leaky_relu_derivative(double x, double alpha);
Volume leaky_relu(const Volume& x, double alpha);

/// Square filters with "same" zero padding. Weight layout is
/// [dx][dy][in_channel][filter]; for even sizes the extra padding goes after,
/// so tap dx reads input column x + dx - (size - 1) / 2.
struct ConvLayer {
  int filter_count = 0;
  int filter_size = 0;
  int in_channels = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  static ConvLayer zeros(int filter_count, int filter_size, int in_channels);
  int pad_before() const { return (filter_size - 1) / 2; }
  std::size_t weight_index(int f, int dx, int dy, int c) const {
    return ((static_cast<std::size_t>(dx) * filter_size + dy) * in_channels + c) * filter_count + f;
  }
  /// Pre-activation of one output element.
  double element(const Volume& input, int x, int y, int f) const;
  /// All filters at one cell into out[0..filter_count); each value is
  /// bitwise what element() returns.
  void cell(const Volume& input, int x, int y, double* out) const;
};

Volume conv2d_forward(const Volume& input, const ConvLayer& layer);

/// Fully connected layer over a flattened volume. With `radius` set, each
/// output cell only sees input cells within that Chebyshev radius (all
/// channels), stored as a (2r+1) x (2r+1) x in_channels patch of slots with
/// out-of-grid slots unused. Weight layout is [output cell][slot][out_channel].
struct DenseLayer {
  int grid_width = 0;
  int grid_height = 0;
  int in_channels = 0;
  int out_channels = 0;
  std::optional<int> radius;
  std::vector<double> weights;
  std::vector<double> biases;

  static DenseLayer full(int grid_width, int grid_height, int in_channels, int out_channels);
  static DenseLayer local(int grid_width, int grid_height, int in_channels, int out_channels, int radius);

  std::size_t in_dim() const { return static_cast<std::size_t>(grid_width) * grid_height * in_channels; }
  std::size_t out_dim() const { return static_cast<std::size_t>(grid_width) * grid_height * out_channels; }
  std::size_t fan_in() const;
  std::size_t weight_index(int x, int y, std::size_t slot, int t) const {
    return ((static_cast<std::size_t>(x) * grid_height + y) * fan_in() + slot) * out_channels + t;
  }

  /// Contiguous stretch of inputs feeding one output.
  struct Run {
    std::size_t input_offset;
    std::size_t weight_offset;  // relative to the output's weight row
    std::size_t length;
  };
  /// Runs for output cell (x, y); the same for every output channel there.
  std::vector<Run> runs(int x, int y) const;
  double element(const Volume& input, int x, int y, int t) const;
  /// All output channels at one cell, bitwise equal to element().
  void cell(const Volume& input, int x, int y, double* out) const;
};

Volume dense_forward(const Volume& input, const DenseLayer& layer);

struct ConvSpec {
  int filters = 0;
  int size = 0;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct Architecture {
  int width = 0;
  int height = 0;
  int in_channels = 0;
  std::vector<ConvSpec> convs;
  int head_channels = 0;
  std::optional<int> head_radius;  // nullopt = fully connected head
  double leaky_alpha = kDefaultLeakyAlpha;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// conv 8x4x4 -> conv 16x3x3 -> conv 32x3x3 -> dense -> 40x15x32, leaky relu
/// after every layer.
Architecture agent_architecture(int head_radius = 0);
/// Same layer pattern on an 8x6x4 input with a fully connected head.
Architecture scaled_down_architecture();

struct ForwardTrace {
  std::vector<Volume> pre;   // pre-activation per layer (convs then head)
  std::vector<Volume> post;  // activation per layer
  const Volume& output() const { return post.back(); }
};

using Gradients = std::vector<std::vector<double>>;

class Network {
 public:
  Network() = default;
  /// Glorot-uniform weights, zero biases, deterministic in `seed`.
  static Network create(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<ConvLayer>& convs() const { return convs_; }
  std::vector<ConvLayer>& convs() { return convs_; }
  const DenseLayer& head() const { return head_; }
  DenseLayer& head() { return head_; }

  Volume forward(const Volume& input) const;
  ForwardTrace trace(const Volume& input) const;
  /// One output activation computed only over its receptive field. Bitwise
  /// equal to forward(input).at(x, y, t).
  double output_at(const Volume& input, int x, int y, int t) const;
  /// Activations of the first conv layer at one cell.
  std::vector<double> first_layer_at(const Volume& input, int x, int y) const;

  /// Parameter blocks in fixed order: conv weights, conv biases per layer,
  /// then head weights and head biases.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;
  Gradients zero_gradients() const;
  /// FNV-1a over the raw parameter bytes.
  std::uint64_t fingerprint() const;

 private:
  void check_input(const Volume& input) const;

  Architecture arch_;
  std::vector<ConvLayer> convs_;
  DenseLayer head_;
};

/// sum(mask * (pred - target)^2) / max(1, sum(mask)).
double mse(const Volume& pred, const Volume& target, const Volume& mask);
double mse(std::span<const double> pred, std::span<const double> target, std::span<const double> mask);

struct BackwardResult {
  Gradients gradients;
  double loss = 0.0;
  Volume output;
};

/// Gradients of the masked MSE with respect to every parameter.
BackwardResult backward(const Network& net, const Volume& input, const Volume& target, const Volume& mask);

struct AdamState {
  std::int64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Gradients first_moment;
  Gradients second_moment;

  static AdamState with_lr(double lr);
};

/// Bias-corrected Adam. Moments are sized on first use.
void adam_step(std::span<const std::span<double>> params, const Gradients& grads, AdamState& state);
void adam_step(Network& net, const Gradients& grads, AdamState& state);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// using central differences on the plain (all-ones mask) MSE.
double grad_check(const Network& net, const Volume& input, const Volume& target, double epsilon);

// Checkpoint container: "MORAINET", uint32 version, architecture, parameter
// blocks, optional Adam state. Little-endian doubles; see docs/checkpoint.md.
void write_checkpoint(std::ostream& out, const Network& net, const AdamState* adam);
struct Checkpoint {
  Network network;
  std::optional<AdamState> adam;
};
/// Throws BadCheckpoint on malformed input or when `expected` is given and
/// the stored architecture differs.
Checkpoint read_checkpoint(std::istream& in, const std::optional<Architecture>& expected = std::nullopt);
void save_checkpoint(const std::string& path, const Network& net, const AdamState* adam);
Checkpoint load_checkpoint(const std::string& path, const std::optional<Architecture>& expected = std::nullopt);

}  // namespace morai
