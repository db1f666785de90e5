#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facemat/core/rng.hpp"
#include "facemat/core/types.hpp"
#include "facemat/losses/losses.hpp"
#include "facemat/nn/autograd.hpp"

namespace facemat::model {

enum Head : int { kAlphaMean = 0, kAlphaLogvar = 1, kUncMean = 2, kUncLogvar = 3 };
constexpr int kNumHeads = 4;

struct ModelConfig {
  int levels = 4;
  int width = 16;
  /// alpha_mean is mandatory; the others can be dropped.
  std::array<bool, kNumHeads> heads{true, true, true, true};

  int channels(int level) const { return width * level; }
  int hidden_channels(int level) const { return channels(level) / 2; }
  int head_count() const;
  /// Every violated constraint; empty when valid.
  std::vector<std::string> validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// One hidden raster per decoder level, finest first: level k holds
/// hidden_channels(k) planes at 1/2^k of the input size.
struct RecurrentState {
  std::vector<nn::Tensor> hidden;
  bool operator==(const RecurrentState&) const = default;
};

RecurrentState init_state(int height, int width, const ModelConfig& cfg);

/// Exact trainable parameter count, computed layer by layer from the config.
std::size_t param_count(const ModelConfig& cfg);

struct NamedParam {
  std::string name;
  nn::Var var;
};

/// Differentiable outputs of a clip forward. Disabled heads are null.
struct Trace {
  std::vector<std::array<nn::Var, kNumHeads>> heads;
  RecurrentState state;

  std::size_t length() const noexcept { return heads.size(); }
  /// Head values as double rasters. Disabled heads are zero (logvar 0, i.e.
  /// σ² = 1).
  losses::PredictionBundle bundle(std::size_t t) const;
};

/// Compact recurrent encoder-decoder: stride-2 conv encoder, decoder levels
/// that fuse the upsampled coarser level with the encoder skip and pass half
/// of their channels through a convolutional GRU, and a full-resolution
/// refinement conv followed by a 1x1 projection onto the heads.
class MattingNet {
 public:
  MattingNet(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Records a tape when gradients are enabled. A null state starts from
  /// zeros; a given state is treated as a constant.
  Trace forward_graph(std::span<const ImageFrame> frames, const RecurrentState* state = nullptr) const;

  /// Inference: no tape.
  std::pair<std::vector<losses::PredictionBundle>, RecurrentState> forward(std::span<const ImageFrame> frames,
                                                                          const RecurrentState* state = nullptr) const;

  /// Seeds dLoss/dHead for every frame and accumulates parameter gradients.
  void backward(const Trace& trace, const std::vector<losses::PredictionBundle>& head_grads) const;

  std::vector<NamedParam>& params() noexcept { return params_; }
  const std::vector<NamedParam>& params() const noexcept { return params_; }
  std::size_t param_count() const;
  void zero_grad();

  /// Throws InvalidInput naming the padding needed when a side is not a
  /// multiple of 2^levels.
  void check_input_size(int height, int width) const;

 private:
  struct Conv {
    nn::Var w, b;
    int kernel = 3, stride = 1;
  };
  struct Gru {
    Conv zr, c;
  };

  Conv make_conv(const std::string& name, int in, int out, int kernel, int stride, double bound, Rng& rng,
                 float bias = 0.0f);
  nn::Var apply(const Conv& c, const nn::Var& x) const;
  nn::Var gru_step(const Gru& g, const nn::Var& x, const nn::Var& h) const;

  ModelConfig cfg_;
  std::vector<NamedParam> params_;
  std::vector<Conv> enc_;   // index k-1 for level k
  std::vector<Conv> fuse_;  // index k-1 for level k < levels
  std::vector<Gru> gru_;
  Conv refine_, head_;
};

/// Rows/columns appended at the bottom/right edge.
struct Padding {
  int bottom = 0;
  int right = 0;
  bool any() const noexcept { return bottom > 0 || right > 0; }
};

/// Smallest padding that makes both sides multiples of 2^levels.
Padding required_padding(int height, int width, const ModelConfig& cfg);

/// Mirror padding about the last row/column (the edge is not repeated).
ImageFrame reflect_pad(const ImageFrame& f, Padding pad);

/// Inference on frames of any size: pads each frame, runs the clip in order
/// and crops every head back to the input size.
std::vector<losses::PredictionBundle> predict_padded(const MattingNet& net, std::span<const ImageFrame> frames,
                                                     Padding* applied = nullptr);

/// Frame as a (3, H, W) tensor.
nn::Tensor to_tensor(const ImageFrame& f);
Field plane_to_field(const nn::Tensor& t, int channel = 0);
nn::Tensor field_to_tensor(const Field& f);

}  // namespace facemat::model
