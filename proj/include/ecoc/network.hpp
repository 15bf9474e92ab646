#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ecoc/checkpoint.hpp"
#include "ecoc/ops.hpp"
#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

namespace ecoc {

struct ConvLayer {
  std::size_t filters;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

/// The 11-convolution + 1 fully-connected base network. Filter counts A..D
/// are parameters; convolutions 1-9 form the feature extractor and 10-11 plus
/// the fully-connected layer form a head.
struct ArchitectureSpec {
  std::string preset = "custom";
  std::size_t a = 32, b = 64, c = 128, d = 16;
  std::size_t channels = 3, height = 32, width = 32;

  static constexpr std::size_t kExtractorLayers = 9;
  static constexpr std::size_t kConvLayers = 11;

  static ArchitectureSpec cifar10() { return {"cifar10", 32, 64, 128, 16, 3, 32, 32}; }
  static ArchitectureSpec fashion_mnist() { return {"fashion_mnist", 32, 32, 32, 4, 1, 28, 28}; }
  /// Reduced widths and image size for desk-scale runs.
  static ArchitectureSpec desk(std::size_t channels = 1, std::size_t height = 8,
                               std::size_t width = 8) {
    return {"desk", 4, 8, 8, 4, channels, height, width};
  }

  static ArchitectureSpec by_name(const std::string& name) {
    if (name == "cifar10") return cifar10();
    if (name == "fashion_mnist") return fashion_mnist();
    if (name == "desk") return desk();
    throw std::invalid_argument("unknown architecture preset '" + name +
                                "' (expected cifar10, fashion_mnist or desk)");
  }

  std::vector<ConvLayer> layers() const {
    return {{a, 5, 1, 2}, {a, 5, 1, 2}, {a, 3, 2, 1}, {b, 3, 1, 1}, {b, 3, 1, 1}, {b, 3, 2, 1},
            {c, 3, 1, 1}, {c, 3, 1, 1}, {c, 3, 2, 1}, {d, 2, 1, 1}, {d, 2, 1, 0}};
  }

  /// Activation shape (C, H, W) after each convolution, computed layer by
  /// layer; throws if the spatial size collapses.
  std::vector<Shape> activation_shapes() const {
    std::vector<Shape> out;
    std::size_t ch = channels, h = height, w = width;
    std::size_t index = 1;
    for (const ConvLayer& l : layers()) {
      if (h + 2 * l.padding < l.kernel || w + 2 * l.padding < l.kernel) {
        throw ShapeError("architecture: conv " + std::to_string(index) + " kernel " +
                         std::to_string(l.kernel) + " does not fit a " + std::to_string(h) +
                         "x" + std::to_string(w) + " input");
      }
      h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
      w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
      ch = l.filters;
      out.push_back({ch, h, w});
      ++index;
    }
    return out;
  }

  std::size_t fc_inputs() const { return shape_numel(activation_shapes().back()); }

  Shape image_shape() const { return {channels, height, width}; }
};

/// One convolutional network: a feature extractor feeding `heads` parallel
/// heads, each emitting `outputs` values. Parameters are stored in a fixed
/// order: extractor layers first, then each head's layers.
template <typename T>
class ConvNet {
 public:
  ConvNet() = default;

  ConvNet(const ArchitectureSpec& arch, std::size_t heads, std::size_t outputs,
          std::mt19937_64& rng)
      : arch_(arch), heads_(heads), outputs_(outputs) {
    if (heads_ == 0 || outputs_ == 0) throw std::invalid_argument("ConvNet: empty head layout");
    const auto layers = arch_.layers();
    std::size_t in_ch = arch_.channels;
    for (std::size_t i = 0; i < ArchitectureSpec::kExtractorLayers; ++i) {
      add_conv("conv" + std::to_string(i + 1), layers[i], in_ch, rng);
      in_ch = layers[i].filters;
    }
    const std::size_t fc_in = arch_.fc_inputs();
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::string p = "head" + std::to_string(h) + ".";
      std::size_t ch = in_ch;
      for (std::size_t i = ArchitectureSpec::kExtractorLayers; i < ArchitectureSpec::kConvLayers;
           ++i) {
        add_conv(p + "conv" + std::to_string(i + 1), layers[i], ch, rng);
        ch = layers[i].filters;
      }
      add_param(p + "fc.w", {outputs_, fc_in}, fc_in, rng);
      params_.push_back({p + "fc.b", Tensor<T>({outputs_})});
    }
  }

  const ArchitectureSpec& architecture() const noexcept { return arch_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t outputs_per_head() const noexcept { return outputs_; }
  std::size_t width() const noexcept { return heads_ * outputs_; }

  std::vector<NamedTensor<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Puts every parameter on `tape`, trainable or constant.
  std::vector<Var<T>> bind(Tape<T>& tape, bool trainable) const {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_)
      vars.push_back(trainable ? tape.variable(p.value, p.name) : tape.constant(p.value, p.name));
    return vars;
  }

  /// x (B, C, H, W) -> (B, heads * outputs), or (B, outputs) when `only_head`
  /// is set.
  Var<T> forward(Var<T> x, const std::vector<Var<T>>& bound,
                 std::optional<std::size_t> only_head = std::nullopt) const {
    check_input(x);
    if (bound.size() != params_.size()) throw std::invalid_argument("ConvNet: bad binding");
    const auto layers = arch_.layers();
    Var<T> h = x;
    std::size_t k = 0;
    for (std::size_t i = 0; i < ArchitectureSpec::kExtractorLayers; ++i, k += 2)
      h = ag::relu(ag::conv2d(h, bound[k], bound[k + 1], layers[i].stride, layers[i].padding));

    const std::size_t per_head = 2 * (ArchitectureSpec::kConvLayers -
                                      ArchitectureSpec::kExtractorLayers) + 2;
    std::vector<Var<T>> outs;
    for (std::size_t head = 0; head < heads_; ++head) {
      if (only_head && *only_head != head) continue;
      std::size_t j = k + head * per_head;
      Var<T> y = h;
      for (std::size_t i = ArchitectureSpec::kExtractorLayers; i < ArchitectureSpec::kConvLayers;
           ++i, j += 2)
        y = ag::relu(ag::conv2d(y, bound[j], bound[j + 1], layers[i].stride, layers[i].padding));
      outs.push_back(ag::linear(ag::flatten(y), bound[j], bound[j + 1]));
    }
    if (only_head && outs.empty()) throw std::out_of_range("ConvNet: head index out of range");
    return outs.size() == 1 ? outs.front() : ag::concat_cols(outs);
  }

  /// Index range [first, last) in parameters() belonging to `head`.
  std::pair<std::size_t, std::size_t> head_parameter_range(std::size_t head) const {
    const std::size_t per_head = 2 * (ArchitectureSpec::kConvLayers -
                                      ArchitectureSpec::kExtractorLayers) + 2;
    const std::size_t first = 2 * ArchitectureSpec::kExtractorLayers + head * per_head;
    return {first, first + per_head};
  }

  std::size_t extractor_parameter_count() const { return 2 * ArchitectureSpec::kExtractorLayers; }

 private:
  void add_conv(const std::string& name, const ConvLayer& l, std::size_t in_ch,
                std::mt19937_64& rng) {
    add_param(name + ".w", {l.filters, in_ch, l.kernel, l.kernel}, in_ch * l.kernel * l.kernel,
              rng);
    params_.push_back({name + ".b", Tensor<T>({l.filters})});
  }

  // He-style uniform initialization scaled by fan-in.
  void add_param(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> w(std::move(shape));
    for (T& v : w.values()) v = static_cast<T>(dist(rng));
    params_.push_back({name, std::move(w)});
  }

  void check_input(Var<T> x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != arch_.channels || s[2] != arch_.height || s[3] != arch_.width) {
      throw ShapeError("network input " + shape_str(s) + " does not match (B, " +
                       std::to_string(arch_.channels) + ", " + std::to_string(arch_.height) +
                       ", " + std::to_string(arch_.width) + ")");
    }
  }

  ArchitectureSpec arch_;
  std::size_t heads_ = 1;
  std::size_t outputs_ = 1;
  std::vector<NamedTensor<T>> params_;
};

}  // namespace ecoc
