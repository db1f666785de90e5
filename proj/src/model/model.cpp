#include "facemat/model/model.hpp"

#include <cmath>

#include "facemat/core/rng.hpp"

namespace facemat::model {
namespace {

std::size_t conv_params(int in, int out, int kernel) {
  return static_cast<std::size_t>(out) * in * kernel * kernel + static_cast<std::size_t>(out);
}

}  // namespace

int ModelConfig::head_count() const {
  int n = 0;
  for (bool h : heads) n += h;
  return n;
}

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> e;
  if (levels < 2) e.push_back("model levels must be >= 2, got " + std::to_string(levels));
  if (levels > 8) e.push_back("model levels must be <= 8, got " + std::to_string(levels));
  if (width < 4) e.push_back("model width must be >= 4, got " + std::to_string(width));
  if (width % 2) e.push_back("model width must be even, got " + std::to_string(width));
  if (!heads[kAlphaMean]) e.push_back("the alpha_mean head cannot be disabled");
  return e;
}

RecurrentState init_state(int height, int width, const ModelConfig& cfg) {
  RecurrentState s;
  for (int k = 1; k <= cfg.levels; ++k) {
    s.hidden.emplace_back(cfg.hidden_channels(k), height >> k, width >> k, 0.0f);
  }
  return s;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (int k = 1; k <= cfg.levels; ++k) {
    const int ch = cfg.channels(k), hc = cfg.hidden_channels(k);
    n += conv_params(k == 1 ? 3 : cfg.channels(k - 1), ch, 3);
    if (k < cfg.levels) n += conv_params(cfg.channels(k + 1) + ch, ch, 3);
    n += conv_params(2 * hc, 2 * hc, 3) + conv_params(2 * hc, hc, 3);
  }
  n += conv_params(cfg.channels(1) + 3, cfg.width, 3);
  n += conv_params(cfg.width, cfg.head_count(), 1);
  return n;
}

losses::PredictionBundle Trace::bundle(std::size_t t) const {
  const auto& h = heads.at(t);
  const int rows = h[kAlphaMean]->value.height(), cols = h[kAlphaMean]->value.width();
  auto field = [&](int k) { return h[k] ? plane_to_field(h[k]->value) : Field(rows, cols, 0.0); };
  return {field(kAlphaMean), field(kAlphaLogvar), field(kUncMean), field(kUncLogvar)};
}

MattingNet::Conv MattingNet::make_conv(const std::string& name, int in, int out, int kernel, int stride,
                                       double bound, Rng& rng, float bias) {
  nn::Tensor w(out, in * kernel * kernel, 1);
  for (float& v : w.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  Conv c{nn::parameter(std::move(w)), nn::parameter(nn::Tensor(out, 1, 1, bias)), kernel, stride};
  params_.push_back({name + ".weight", c.w});
  params_.push_back({name + ".bias", c.b});
  return c;
}

MattingNet::MattingNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (auto e = cfg.validate(); !e.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& s : e) msg += " " + s + ";";
    throw InvalidInput(msg);
  }
  Rng rng = substream(seed, "model/init");
  // He-uniform for ReLU layers, LeCun-uniform for gates and heads.
  auto he = [](int fan_in) { return std::sqrt(6.0 / fan_in); };
  auto lecun = [](int fan_in) { return std::sqrt(3.0 / fan_in); };
  const int L = cfg.levels;
  for (int k = 1; k <= L; ++k) {
    const int in = k == 1 ? 3 : cfg.channels(k - 1);
    enc_.push_back(make_conv("enc" + std::to_string(k), in, cfg.channels(k), 3, 2, he(in * 9), rng));
  }
  for (int k = 1; k < L; ++k) {
    const int in = cfg.channels(k + 1) + cfg.channels(k);
    fuse_.push_back(make_conv("dec" + std::to_string(k) + ".fuse", in, cfg.channels(k), 3, 1, he(in * 9), rng));
  }
  for (int k = 1; k <= L; ++k) {
    const int hc = cfg.hidden_channels(k);
    const std::string n = "dec" + std::to_string(k) + ".gru";
    Gru g;
    g.zr = make_conv(n + ".zr", 2 * hc, 2 * hc, 3, 1, lecun(2 * hc * 9), rng);
    g.c = make_conv(n + ".c", 2 * hc, hc, 3, 1, lecun(2 * hc * 9), rng);
    gru_.push_back(g);
  }
  refine_ = make_conv("refine", cfg.channels(1) + 3, cfg.width, 3, 1, he((cfg.channels(1) + 3) * 9), rng);
  head_ = make_conv("head", cfg.width, cfg.head_count(), 1, 1, lecun(cfg.width), rng);
  // Start the uncertainty mean near zero rather than at softplus(0).
  if (cfg.heads[kUncMean]) {
    int idx = 0;
    for (int k = 0; k < kUncMean; ++k) idx += cfg.heads[k];
    head_.b->value[static_cast<std::size_t>(idx)] = -2.0f;
  }
}

nn::Var MattingNet::apply(const Conv& c, const nn::Var& x) const {
  return nn::conv2d(x, c.w, c.b, c.kernel, c.stride, c.kernel / 2);
}

nn::Var MattingNet::gru_step(const Gru& g, const nn::Var& x, const nn::Var& h) const {
  const int hc = h->value.channels();
  const nn::Var zr = nn::sigmoid(apply(g.zr, nn::concat({x, h})));
  const nn::Var z = nn::slice_channels(zr, 0, hc);
  const nn::Var r = nn::slice_channels(zr, hc, 2 * hc);
  const nn::Var cand = nn::tanh(apply(g.c, nn::concat({x, nn::mul(r, h)})));
  // h' = (1 - z) h + z c = h + z (c - h)
  return nn::add(h, nn::mul(z, nn::sub(cand, h)));
}

void MattingNet::check_input_size(int height, int width) const {
  const int m = 1 << cfg_.levels;
  if (height % m || width % m || height <= 0 || width <= 0) {
    const int ph = (m - height % m) % m, pw = (m - width % m) % m;
    throw InvalidInput("input " + std::to_string(height) + "x" + std::to_string(width) +
                       " is not a multiple of " + std::to_string(m) + "; pad by " + std::to_string(ph) +
                       " rows and " + std::to_string(pw) + " columns");
  }
}

Trace MattingNet::forward_graph(std::span<const ImageFrame> frames, const RecurrentState* state) const {
  if (frames.empty()) throw InvalidInput("forward: empty clip");
  const int H = frames[0].height(), W = frames[0].width();
  check_input_size(H, W);
  const int L = cfg_.levels;
  RecurrentState init = state ? *state : init_state(H, W, cfg_);
  if (init.hidden.size() != static_cast<std::size_t>(L)) throw InvalidInput("forward: state level count mismatch");
  std::vector<nn::Var> hidden;
  for (int k = 1; k <= L; ++k) {
    const auto& h = init.hidden[k - 1];
    if (h.channels() != cfg_.hidden_channels(k) || h.height() != (H >> k) || h.width() != (W >> k)) {
      throw InvalidInput("forward: state shape does not match input size");
    }
    hidden.push_back(nn::constant(h));
  }

  Trace trace;
  for (const auto& frame : frames) {
    if (frame.height() != H || frame.width() != W) throw InvalidInput("forward: frames differ in size");
    const nn::Var img = nn::constant(to_tensor(frame));
    std::vector<nn::Var> skips;
    nn::Var x = img;
    for (int k = 1; k <= L; ++k) {
      x = nn::relu(apply(enc_[k - 1], x));
      skips.push_back(x);
    }
    nn::Var d;
    for (int k = L; k >= 1; --k) {
      nn::Var feat = k == L ? skips[L - 1] : nn::relu(apply(fuse_[k - 1], nn::concat({nn::upsample2x(d), skips[k - 1]})));
      const int ch = cfg_.channels(k), hc = cfg_.hidden_channels(k);
      const nn::Var keep = nn::slice_channels(feat, 0, ch - hc);
      hidden[k - 1] = gru_step(gru_[k - 1], nn::slice_channels(feat, ch - hc, ch), hidden[k - 1]);
      d = nn::concat({keep, hidden[k - 1]});
    }
    const nn::Var refined = nn::relu(apply(refine_, nn::concat({nn::upsample2x(d), img})));
    const nn::Var raw = apply(head_, refined);
    std::array<nn::Var, kNumHeads> heads{};
    int idx = 0;
    for (int k = 0; k < kNumHeads; ++k) {
      if (!cfg_.heads[k]) continue;
      const nn::Var c = nn::slice_channels(raw, idx, idx + 1);
      ++idx;
      if (k == kAlphaMean) heads[k] = nn::sigmoid(c);
      else if (k == kUncMean) heads[k] = nn::softplus(c);
      else heads[k] = c;
    }
    trace.heads.push_back(heads);
  }
  for (const auto& h : hidden) trace.state.hidden.push_back(h->value);
  return trace;
}

std::pair<std::vector<losses::PredictionBundle>, RecurrentState> MattingNet::forward(
    std::span<const ImageFrame> frames, const RecurrentState* state) const {
  nn::NoGradGuard guard;
  Trace tr = forward_graph(frames, state);
  std::vector<losses::PredictionBundle> out;
  for (std::size_t t = 0; t < tr.length(); ++t) out.push_back(tr.bundle(t));
  return {std::move(out), std::move(tr.state)};
}

void MattingNet::backward(const Trace& trace, const std::vector<losses::PredictionBundle>& head_grads) const {
  if (head_grads.size() != trace.length()) throw InvalidInput("backward: gradient sequence length mismatch");
  std::vector<std::pair<nn::Var, nn::Tensor>> seeds;
  for (std::size_t t = 0; t < trace.length(); ++t) {
    const auto& g = head_grads[t];
    const Field* fields[kNumHeads] = {&g.alpha_mean, &g.alpha_logvar, &g.unc_mean, &g.unc_logvar};
    for (int k = 0; k < kNumHeads; ++k) {
      const nn::Var& v = trace.heads[t][k];
      if (!v || fields[k]->empty()) continue;
      seeds.emplace_back(v, field_to_tensor(*fields[k]));
    }
  }
  nn::backward(seeds);
}

std::size_t MattingNet::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

void MattingNet::zero_grad() {
  for (auto& p : params_) p.var->grad_buffer().fill(0.0f);
}

Padding required_padding(int height, int width, const ModelConfig& cfg) {
  const int m = 1 << cfg.levels;
  return {(m - height % m) % m, (m - width % m) % m};
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  return i < n ? i : period - i;
}

}  // namespace

ImageFrame reflect_pad(const ImageFrame& f, Padding pad) {
  const int H = f.height(), W = f.width();
  ImageFrame out(H + pad.bottom, W + pad.right);
  for (int c = 0; c < ImageFrame::kChannels; ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out(c, y, x) = f(c, reflect_index(y, H), reflect_index(x, W));
    }
  }
  return out;
}

std::vector<losses::PredictionBundle> predict_padded(const MattingNet& net, std::span<const ImageFrame> frames,
                                                     Padding* applied) {
  if (frames.empty()) throw InvalidInput("predict: empty clip");
  const int H = frames[0].height(), W = frames[0].width();
  for (const auto& f : frames) require_same_shape(frames[0], f, "predict: frame sizes differ");
  const Padding pad = required_padding(H, W, net.config());
  if (applied) *applied = pad;
  if (!pad.any()) return net.forward(frames).first;
  std::vector<ImageFrame> padded;
  for (const auto& f : frames) padded.push_back(reflect_pad(f, pad));
  auto out = net.forward(padded).first;
  auto crop = [&](Field& g) {
    Field c(H, W);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) c(y, x) = g(y, x);
    }
    g = std::move(c);
  };
  for (auto& b : out) {
    for (Field* g : {&b.alpha_mean, &b.alpha_logvar, &b.unc_mean, &b.unc_logvar}) crop(*g);
  }
  return out;
}

nn::Tensor to_tensor(const ImageFrame& f) {
  nn::Tensor t(3, f.height(), f.width());
  for (int c = 0; c < 3; ++c) {
    const Field& p = f.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) t[c * p.size() + i] = static_cast<float>(p[i]);
  }
  return t;
}

Field plane_to_field(const nn::Tensor& t, int channel) {
  Field f(t.height(), t.width());
  const std::size_t off = static_cast<std::size_t>(channel) * t.plane_size();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = t[off + i];
  return f;
}

nn::Tensor field_to_tensor(const Field& f) {
  nn::Tensor t(1, f.height(), f.width());
  for (std::size_t i = 0; i < f.size(); ++i) t[i] = static_cast<float>(f[i]);
  return t;
}

}  // namespace facemat::model
