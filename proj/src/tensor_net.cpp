#include "morai/tensor_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "morai/error.hpp"

namespace morai {

double leaky_relu(double x, double alpha) { return x > 0.0 ? x : alpha * x; }
double leaky_relu_derivative(double x, double alpha) { return x > 0.0 ? 1.0 : alpha; }

Volume leaky_relu(const Volume& x, double alpha) {
  Volume out = x;
  for (auto& v : out.values()) v = leaky_relu(v, alpha);
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

ConvLayer ConvLayer::zeros(int filter_count, int filter_size, int in_channels) {
  if (filter_count <= 0 || filter_size <= 0 || in_channels <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "conv dimensions must be positive");
  }
  ConvLayer l;
  l.filter_count = filter_count;
  l.filter_size = filter_size;
  l.in_channels = in_channels;
  l.weights.assign(static_cast<std::size_t>(filter_count) * filter_size * filter_size * in_channels, 0.0);
  l.biases.assign(filter_count, 0.0);
  return l;
}

double ConvLayer::element(const Volume& input, int x, int y, int f) const {
  const int pad = pad_before();
  const int w = input.width();
  const int h = input.height();
  double acc = biases[f];
  for (int dx = 0; dx < filter_size; ++dx) {
    const int xi = x + dx - pad;
    if (xi < 0 || xi >= w) continue;
    for (int dy = 0; dy < filter_size; ++dy) {
      const int yi = y + dy - pad;
      if (yi < 0 || yi >= h) continue;
      const double* wt = &weights[weight_index(f, dx, dy, 0)];
      const double* in = &input[input.index(xi, yi, 0)];
      for (int c = 0; c < in_channels; ++c) {
        if (in[c] != 0.0) acc += wt[static_cast<std::size_t>(c) * filter_count] * in[c];
      }
    }
  }
  return acc;
}

void ConvLayer::cell(const Volume& input, int x, int y, double* out) const {
  const int pad = pad_before();
  const int w = input.width();
  const int h = input.height();
  for (int f = 0; f < filter_count; ++f) out[f] = biases[f];
  for (int dx = 0; dx < filter_size; ++dx) {
    const int xi = x + dx - pad;
    if (xi < 0 || xi >= w) continue;
    for (int dy = 0; dy < filter_size; ++dy) {
      const int yi = y + dy - pad;
      if (yi < 0 || yi >= h) continue;
      const double* in = &input[input.index(xi, yi, 0)];
      for (int c = 0; c < in_channels; ++c) {
        const double v = in[c];
        if (v == 0.0) continue;
        const double* wt = &weights[weight_index(0, dx, dy, c)];
        for (int f = 0; f < filter_count; ++f) out[f] += wt[f] * v;
      }
    }
  }
}

Volume conv2d_forward(const Volume& input, const ConvLayer& layer) {
  if (input.channels() != layer.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "input has " + std::to_string(input.channels()) +
                                               " channels, layer expects " + std::to_string(layer.in_channels));
  }
  if (layer.weights.size() != static_cast<std::size_t>(layer.filter_count) * layer.filter_size *
                                  layer.filter_size * layer.in_channels ||
      layer.biases.size() != static_cast<std::size_t>(layer.filter_count)) {
    throw Error(ErrorCode::kShapeMismatch, "conv parameter sizes do not match declared shape");
  }
  Volume out(input.width(), input.height(), layer.filter_count);
  for (int x = 0; x < input.width(); ++x) {
    for (int y = 0; y < input.height(); ++y) {
      layer.cell(input, x, y, &out.at(x, y, 0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer DenseLayer::full(int grid_width, int grid_height, int in_channels, int out_channels) {
  DenseLayer l;
  l.grid_width = grid_width;
  l.grid_height = grid_height;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.weights.assign(l.out_dim() * l.fan_in(), 0.0);
  l.biases.assign(l.out_dim(), 0.0);
  return l;
}

DenseLayer DenseLayer::local(int grid_width, int grid_height, int in_channels, int out_channels, int radius) {
  if (radius < 0) throw Error(ErrorCode::kShapeMismatch, "radius must be >= 0");
  DenseLayer l;
  l.grid_width = grid_width;
  l.grid_height = grid_height;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.radius = radius;
  l.weights.assign(l.out_dim() * l.fan_in(), 0.0);
  l.biases.assign(l.out_dim(), 0.0);
  return l;
}

std::size_t DenseLayer::fan_in() const {
  if (!radius) return in_dim();
  const std::size_t side = 2 * static_cast<std::size_t>(*radius) + 1;
  return side * side * in_channels;
}

std::vector<DenseLayer::Run> DenseLayer::runs(int x, int y) const {
  if (!radius) return {Run{0, 0, in_dim()}};
  const int r = *radius;
  const int side = 2 * r + 1;
  const int y0 = std::max(0, y - r);
  const int y1 = std::min(grid_height - 1, y + r);
  std::vector<Run> out;
  for (int xi = std::max(0, x - r); xi <= std::min(grid_width - 1, x + r); ++xi) {
    const std::size_t input_offset = (static_cast<std::size_t>(xi) * grid_height + y0) * in_channels;
    const std::size_t slot = (static_cast<std::size_t>(xi - x + r) * side + (y0 - y + r)) * in_channels;
    out.push_back(Run{input_offset, slot, static_cast<std::size_t>(y1 - y0 + 1) * in_channels});
  }
  return out;
}

double DenseLayer::element(const Volume& input, int x, int y, int t) const {
  const std::size_t o = (static_cast<std::size_t>(x) * grid_height + y) * out_channels + t;
  const double* base = &weights[weight_index(x, y, 0, t)];
  double acc = biases[o];
  for (const auto& run : runs(x, y)) {
    const double* in = &input[run.input_offset];
    const double* w = base + run.weight_offset * out_channels;
    for (std::size_t k = 0; k < run.length; ++k) acc += w[k * out_channels] * in[k];
  }
  return acc;
}

void DenseLayer::cell(const Volume& input, int x, int y, double* out) const {
  const std::size_t o0 = (static_cast<std::size_t>(x) * grid_height + y) * out_channels;
  for (int t = 0; t < out_channels; ++t) out[t] = biases[o0 + t];
  const double* base = &weights[weight_index(x, y, 0, 0)];
  for (const auto& run : runs(x, y)) {
    const double* in = &input[run.input_offset];
    for (std::size_t k = 0; k < run.length; ++k) {
      const double v = in[k];
      const double* w = base + (run.weight_offset + k) * out_channels;
      for (int t = 0; t < out_channels; ++t) out[t] += w[t] * v;
    }
  }
}

Volume dense_forward(const Volume& input, const DenseLayer& layer) {
  if (input.width() != layer.grid_width || input.height() != layer.grid_height ||
      input.channels() != layer.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "dense input shape mismatch");
  }
  if (layer.weights.size() != layer.out_dim() * layer.fan_in() || layer.biases.size() != layer.out_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "dense parameter sizes do not match declared shape");
  }
  Volume out(layer.grid_width, layer.grid_height, layer.out_channels);
  for (int x = 0; x < layer.grid_width; ++x) {
    for (int y = 0; y < layer.grid_height; ++y) {
      layer.cell(input, x, y, &out.at(x, y, 0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network

Architecture agent_architecture(int head_radius) {
  return Architecture{40, 15, 32, {{8, 4}, {16, 3}, {32, 3}}, 32, head_radius, kDefaultLeakyAlpha};
}

Architecture scaled_down_architecture() {
  return Architecture{8, 6, 4, {{2, 4}, {3, 3}, {4, 3}}, 4, std::nullopt, kDefaultLeakyAlpha};
}

namespace {

void glorot_fill(std::vector<double>& values, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : values) v = dist(rng);
}

}  // namespace

Network Network::create(const Architecture& arch, std::uint64_t seed) {
  if (arch.width <= 0 || arch.height <= 0 || arch.in_channels <= 0 || arch.head_channels <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "architecture dimensions must be positive");
  }
  Network net;
  net.arch_ = arch;
  std::mt19937_64 rng(seed);
  int channels = arch.in_channels;
  for (const auto& spec : arch.convs) {
    auto layer = ConvLayer::zeros(spec.filters, spec.size, channels);
    const double k2 = static_cast<double>(spec.size) * spec.size;
    glorot_fill(layer.weights, k2 * channels, k2 * spec.filters, rng);
    net.convs_.push_back(std::move(layer));
    channels = spec.filters;
  }
  if (arch.head_radius) {
    net.head_ = DenseLayer::local(arch.width, arch.height, channels, arch.head_channels, *arch.head_radius);
    const double side = 2.0 * *arch.head_radius + 1.0;
    glorot_fill(net.head_.weights, static_cast<double>(net.head_.fan_in()), side * side * arch.head_channels, rng);
  } else {
    net.head_ = DenseLayer::full(arch.width, arch.height, channels, arch.head_channels);
    glorot_fill(net.head_.weights, static_cast<double>(net.head_.in_dim()), static_cast<double>(net.head_.out_dim()),
                rng);
  }
  return net;
}

void Network::check_input(const Volume& input) const {
  if (input.width() != arch_.width || input.height() != arch_.height || input.channels() != arch_.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "network input must be " + std::to_string(arch_.width) + "x" +
                                               std::to_string(arch_.height) + "x" +
                                               std::to_string(arch_.in_channels));
  }
}

ForwardTrace Network::trace(const Volume& input) const {
  check_input(input);
  ForwardTrace t;
  const Volume* current = &input;
  for (const auto& layer : convs_) {
    t.pre.push_back(conv2d_forward(*current, layer));
    t.post.push_back(leaky_relu(t.pre.back(), arch_.leaky_alpha));
    current = &t.post.back();
  }
  t.pre.push_back(dense_forward(*current, head_));
  t.post.push_back(leaky_relu(t.pre.back(), arch_.leaky_alpha));
  return t;
}

Volume Network::forward(const Volume& input) const {
  check_input(input);
  Volume current = input;
  for (const auto& layer : convs_) {
    Volume next = conv2d_forward(current, layer);
    for (auto& v : next.values()) v = leaky_relu(v, arch_.leaky_alpha);
    current = std::move(next);
  }
  Volume out = dense_forward(current, head_);
  for (auto& v : out.values()) v = leaky_relu(v, arch_.leaky_alpha);
  return out;
}

namespace {

struct Rect {
  int x0, x1, y0, y1;  // inclusive
  bool empty() const { return x0 > x1 || y0 > y1; }
};

Rect clip(Rect r, int w, int h) { return {std::max(r.x0, 0), std::min(r.x1, w - 1), std::max(r.y0, 0), std::min(r.y1, h - 1)}; }

}  // namespace

double Network::output_at(const Volume& input, int x, int y, int t) const {
  check_input(input);
  if (x < 0 || x >= arch_.width || y < 0 || y >= arch_.height || t < 0 || t >= arch_.head_channels) {
    throw Error(ErrorCode::kOutOfBounds, "output index");
  }
  if (!head_.radius) return forward(input).at(x, y, t);

  const int w = arch_.width;
  const int h = arch_.height;
  // Region of each conv layer's output needed for the requested head cell.
  std::vector<Rect> need(convs_.size());
  const int r = *head_.radius;
  Rect rect = clip({x - r, x + r, y - r, y + r}, w, h);
  for (std::size_t l = convs_.size(); l-- > 0;) {
    need[l] = rect;
    const int pad = convs_[l].pad_before();
    const int k = convs_[l].filter_size;
    rect = clip({rect.x0 - pad, rect.x1 - pad + k - 1, rect.y0 - pad, rect.y1 - pad + k - 1}, w, h);
  }
  const Volume* current = &input;
  std::vector<Volume> buffers;
  buffers.reserve(convs_.size());
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    Volume out(w, h, convs_[l].filter_count);
    for (int xi = need[l].x0; xi <= need[l].x1; ++xi) {
      for (int yi = need[l].y0; yi <= need[l].y1; ++yi) {
        double* cell = &out.at(xi, yi, 0);
        convs_[l].cell(*current, xi, yi, cell);
        for (int f = 0; f < convs_[l].filter_count; ++f) cell[f] = leaky_relu(cell[f], arch_.leaky_alpha);
      }
    }
    buffers.push_back(std::move(out));
    current = &buffers.back();
  }
  return leaky_relu(head_.element(*current, x, y, t), arch_.leaky_alpha);
}

std::vector<double> Network::first_layer_at(const Volume& input, int x, int y) const {
  check_input(input);
  if (convs_.empty()) throw Error(ErrorCode::kShapeMismatch, "network has no conv layers");
  std::vector<double> out(convs_[0].filter_count);
  for (int f = 0; f < convs_[0].filter_count; ++f) {
    out[f] = leaky_relu(convs_[0].element(input, x, y, f), arch_.leaky_alpha);
  }
  return out;
}

std::vector<std::span<double>> Network::parameters() {
  std::vector<std::span<double>> out;
  for (auto& l : convs_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  out.emplace_back(head_.weights);
  out.emplace_back(head_.biases);
  return out;
}

std::vector<std::span<const double>> Network::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : convs_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  out.emplace_back(head_.weights);
  out.emplace_back(head_.biases);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (auto block : parameters()) n += block.size();
  return n;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (auto block : parameters()) g.emplace_back(block.size(), 0.0);
  return g;
}

std::uint64_t Network::fingerprint() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (auto block : parameters()) {
    for (double v : block) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        hash ^= (bits >> (8 * i)) & 0xffU;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

// ---------------------------------------------------------------------------
// Loss and gradients

double mse(std::span<const double> pred, std::span<const double> target, std::span<const double> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw Error(ErrorCode::kShapeMismatch, "mse operands differ in size");
  }
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double d = pred[i] - target[i];
    sum += mask[i] * d * d;
    count += mask[i];
  }
  return sum / std::max(1.0, count);
}

double mse(const Volume& pred, const Volume& target, const Volume& mask) {
  if (!pred.same_shape(target) || !pred.same_shape(mask)) throw Error(ErrorCode::kShapeMismatch, "mse shapes");
  return mse(pred.values(), target.values(), mask.values());
}

BackwardResult backward(const Network& net, const Volume& input, const Volume& target, const Volume& mask) {
  const auto& arch = net.architecture();
  auto t = net.trace(input);
  const Volume& out = t.output();
  if (!out.same_shape(target) || !out.same_shape(mask)) {
    throw Error(ErrorCode::kShapeMismatch, "target/mask must match the network output shape");
  }
  BackwardResult result;
  result.loss = mse(out, target, mask);
  result.gradients = net.zero_gradients();
  double count = 0.0;
  for (double m : mask.values()) count += m;
  const double scale = 2.0 / std::max(1.0, count);
  const double alpha = arch.leaky_alpha;

  const std::size_t n_conv = net.convs().size();
  const DenseLayer& head = net.head();
  const Volume& head_in = n_conv > 0 ? t.post[n_conv - 1] : input;

  // Head.
  Volume delta_in(head_in.width(), head_in.height(), head_in.channels());
  {
    auto& gw = result.gradients[2 * n_conv];
    auto& gb = result.gradients[2 * n_conv + 1];
    const Volume& pre = t.pre.back();
    const int oc = head.out_channels;
    std::vector<double> d(oc);
    for (int x = 0; x < head.grid_width; ++x) {
      for (int y = 0; y < head.grid_height; ++y) {
        bool any = false;
        for (int c = 0; c < oc; ++c) {
          const std::size_t o = out.index(x, y, c);
          d[c] = mask[o] == 0.0 ? 0.0 : scale * mask[o] * (out[o] - target[o]) * leaky_relu_derivative(pre[o], alpha);
          if (d[c] != 0.0) any = true;
          gb[o] += d[c];
        }
        if (!any) continue;
        const std::size_t base = head.weight_index(x, y, 0, 0);
        for (const auto& run : head.runs(x, y)) {
          for (std::size_t k = 0; k < run.length; ++k) {
            const std::size_t wi = base + (run.weight_offset + k) * oc;
            const double v = head_in[run.input_offset + k];
            double back = 0.0;
            for (int c = 0; c < oc; ++c) {
              gw[wi + c] += d[c] * v;
              back += d[c] * head.weights[wi + c];
            }
            delta_in[run.input_offset + k] += back;
          }
        }
      }
    }
  }

  // Convs, last to first. delta_in holds dL/d(post) of the current layer.
  for (std::size_t l = n_conv; l-- > 0;) {
    const ConvLayer& layer = net.convs()[l];
    const Volume& pre = t.pre[l];
    const Volume& in = l > 0 ? t.post[l - 1] : input;
    auto& gw = result.gradients[2 * l];
    auto& gb = result.gradients[2 * l + 1];
    Volume delta_prev(in.width(), in.height(), in.channels());
    const int pad = layer.pad_before();
    const int k = layer.filter_size;
    const int fc = layer.filter_count;
    std::vector<double> d(fc);
    for (int x = 0; x < in.width(); ++x) {
      for (int y = 0; y < in.height(); ++y) {
        bool any = false;
        for (int f = 0; f < fc; ++f) {
          const std::size_t o = pre.index(x, y, f);
          d[f] = delta_in[o] * leaky_relu_derivative(pre[o], alpha);
          if (d[f] != 0.0) any = true;
          gb[f] += d[f];
        }
        if (!any) continue;
        for (int dx = 0; dx < k; ++dx) {
          const int xi = x + dx - pad;
          if (xi < 0 || xi >= in.width()) continue;
          for (int dy = 0; dy < k; ++dy) {
            const int yi = y + dy - pad;
            if (yi < 0 || yi >= in.height()) continue;
            const std::size_t ii = in.index(xi, yi, 0);
            for (int c = 0; c < layer.in_channels; ++c) {
              const std::size_t wi = layer.weight_index(0, dx, dy, c);
              const double v = in[ii + c];
              if (v != 0.0) {
                for (int f = 0; f < fc; ++f) gw[wi + f] += d[f] * v;
              }
              if (l > 0) {
                double back = 0.0;
                for (int f = 0; f < fc; ++f) back += d[f] * layer.weights[wi + f];
                delta_prev[ii + c] += back;
              }
            }
          }
        }
      }
    }
    delta_in = std::move(delta_prev);
  }
  result.output = out;
  return result;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::with_lr(double lr) {
  AdamState s;
  s.lr = lr;
  return s;
}

void adam_step(std::span<const std::span<double>> params, const Gradients& grads, AdamState& state) {
  if (params.size() != grads.size()) throw Error(ErrorCode::kShapeMismatch, "parameter/gradient block count");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) throw Error(ErrorCode::kShapeMismatch, "parameter/gradient block size");
  }
  if (!(state.lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  if (state.first_moment.empty()) {
    for (const auto& g : grads) {
      state.first_moment.emplace_back(g.size(), 0.0);
      state.second_moment.emplace_back(g.size(), 0.0);
    }
  }
  if (state.first_moment.size() != grads.size()) throw Error(ErrorCode::kShapeMismatch, "adam state block count");
  for (std::size_t b = 0; b < grads.size(); ++b) {
    if (state.first_moment[b].size() != grads[b].size() || state.second_moment[b].size() != grads[b].size()) {
      throw Error(ErrorCode::kShapeMismatch, "adam state block size");
    }
  }
  // An all-zero gradient carries no information; the step is skipped
  // entirely so stale momentum never moves parameters on its own.
  const bool any = std::any_of(grads.begin(), grads.end(), [](const auto& g) {
    return std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; });
  });
  if (!any) return;

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < grads.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    const auto& g = grads[b];
    auto p = params[b];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      if (m[i] == 0.0) continue;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  auto params = net.parameters();
  adam_step(std::span<const std::span<double>>(params), grads, state);
}

// ---------------------------------------------------------------------------
// Finite-difference check

double grad_check(const Network& net, const Volume& input, const Volume& target, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kInvalidArgument, "grad_check epsilon must be positive");
  }
  Volume ones(target.width(), target.height(), target.channels(), 1.0);
  auto analytic = backward(net, input, target, ones).gradients;
  Network probe = net;
  auto params = probe.parameters();

  // A head parameter only moves its own output, so those probes recompute
  // that one element on top of the cached head input.
  const auto base = probe.trace(input);
  const Volume& head_in = probe.convs().empty() ? input : base.post[probe.convs().size() - 1];
  Volume out = base.output();
  const std::size_t head_w = params.size() - 2;
  const std::size_t fan_in = probe.head().fan_in();
  const int h = out.height();
  const int c = out.channels();
  auto probe_loss = [&](std::size_t b, std::size_t i) {
    if (b < head_w) return mse(probe.forward(input), target, ones);
    const std::size_t o = b == head_w ? i / (fan_in * c) * c + i % c : i;
    const int x = static_cast<int>(o / (static_cast<std::size_t>(h) * c));
    const int y = static_cast<int>((o / c) % h);
    const int t = static_cast<int>(o % c);
    const double saved = out[o];
    out[o] = leaky_relu(probe.head().element(head_in, x, y, t), probe.architecture().leaky_alpha);
    const double loss = mse(out, target, ones);
    out[o] = saved;
    return loss;
  };

  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double saved = params[b][i];
      params[b][i] = saved + epsilon;
      const double up = probe_loss(b, i);
      params[b][i] = saved - epsilon;
      const double down = probe_loss(b, i);
      params[b][i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[b][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'O', 'R', 'A', 'I', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kBadCheckpoint, "truncated checkpoint");
  return value;
}

void put_block(std::ostream& out, std::span<const double> block) {
  put<std::uint64_t>(out, block.size());
  out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(double)));
}

void get_block(std::istream& in, std::span<double> block) {
  auto n = get<std::uint64_t>(in);
  if (n != block.size()) throw Error(ErrorCode::kBadCheckpoint, "parameter block size mismatch");
  in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error(ErrorCode::kBadCheckpoint, "truncated parameter block");
  for (double v : block) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kBadCheckpoint, "non-finite parameter");
  }
}

std::vector<double> get_vector(std::istream& in, std::size_t expected) {
  std::vector<double> v(expected);
  get_block(in, v);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Network& net, const AdamState* adam) {
  const auto& a = net.architecture();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, a.width);
  put<std::int32_t>(out, a.height);
  put<std::int32_t>(out, a.in_channels);
  put<std::int32_t>(out, static_cast<std::int32_t>(a.convs.size()));
  for (const auto& c : a.convs) {
    put<std::int32_t>(out, c.filters);
    put<std::int32_t>(out, c.size);
  }
  put<std::int32_t>(out, a.head_channels);
  put<std::int32_t>(out, a.head_radius ? *a.head_radius : -1);
  put<double>(out, a.leaky_alpha);
  for (auto block : net.parameters()) put_block(out, block);
  put<std::uint8_t>(out, adam ? 1 : 0);
  if (adam) {
    put<std::int64_t>(out, adam->step_count);
    put<double>(out, adam->lr);
    put<double>(out, adam->beta1);
    put<double>(out, adam->beta2);
    put<double>(out, adam->epsilon);
    const bool sized = !adam->first_moment.empty();
    put<std::uint8_t>(out, sized ? 1 : 0);
    if (sized) {
      for (const auto& m : adam->first_moment) put_block(out, m);
      for (const auto& v : adam->second_moment) put_block(out, v);
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in, const std::optional<Architecture>& expected) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw Error(ErrorCode::kBadCheckpoint, "bad magic");
  auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw Error(ErrorCode::kBadCheckpoint, "unsupported version");
  Architecture a;
  a.width = get<std::int32_t>(in);
  a.height = get<std::int32_t>(in);
  a.in_channels = get<std::int32_t>(in);
  auto n_conv = get<std::int32_t>(in);
  if (n_conv < 0 || n_conv > 64) throw Error(ErrorCode::kBadCheckpoint, "implausible layer count");
  for (int i = 0; i < n_conv; ++i) {
    ConvSpec c;
    c.filters = get<std::int32_t>(in);
    c.size = get<std::int32_t>(in);
    if (c.filters <= 0 || c.size <= 0) throw Error(ErrorCode::kBadCheckpoint, "bad conv spec");
    a.convs.push_back(c);
  }
  a.head_channels = get<std::int32_t>(in);
  auto radius = get<std::int32_t>(in);
  if (radius >= 0) a.head_radius = radius;
  a.leaky_alpha = get<double>(in);
  if (expected && !(*expected == a)) throw Error(ErrorCode::kBadCheckpoint, "architecture does not match");
  if (a.width <= 0 || a.height <= 0 || a.in_channels <= 0 || a.head_channels <= 0) {
    throw Error(ErrorCode::kBadCheckpoint, "bad dimensions");
  }
  Checkpoint cp;
  cp.network = Network::create(a, 0);
  for (auto block : cp.network.parameters()) get_block(in, block);
  if (get<std::uint8_t>(in)) {
    AdamState s;
    s.step_count = get<std::int64_t>(in);
    s.lr = get<double>(in);
    s.beta1 = get<double>(in);
    s.beta2 = get<double>(in);
    s.epsilon = get<double>(in);
    if (get<std::uint8_t>(in)) {
      auto blocks = cp.network.parameters();
      for (auto block : blocks) s.first_moment.push_back(get_vector(in, block.size()));
      for (auto block : blocks) {
        s.second_moment.push_back(get_vector(in, block.size()));
        for (double v : s.second_moment.back()) {
          if (v < 0.0) throw Error(ErrorCode::kBadCheckpoint, "negative second moment");
        }
      }
    }
    cp.adam = std::move(s);
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Network& net, const AdamState* adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint " + path);
  write_checkpoint(out, net, adam);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<Architecture>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kBadCheckpoint, "cannot open checkpoint " + path);
  return read_checkpoint(in, expected);
}

}  // namespace morai
