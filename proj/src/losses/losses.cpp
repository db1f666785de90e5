#include "facemat/losses/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace facemat::losses {
namespace {

inline double sgn(double x) { return (x > 0) - (x < 0); }

std::size_t count_active(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

void prepare(Field* g, const Field& like) {
  if (g) *g = Field(like.height(), like.width(), 0.0);
}

// --- Pyramid building blocks -------------------------------------------
//
// Every operator below is linear; each comes with its exact adjoint so the
// loss gradient is the transpose of the forward chain.

constexpr std::array<double, 5> kBinomial{1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};

/// Reflect without repeating the edge sample; valid for n >= 3 and |offset| <= 2.
inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

Field blur5(const Field& f) {
  const int h = f.height(), w = f.width();
  Field tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * f(y, reflect(x + k, w));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * tmp(reflect(y + k, h), x);
      out(y, x) = acc;
    }
  }
  return out;
}

Field blur5_adjoint(const Field& g) {
  const int h = g.height(), w = g.width();
  Field tmp(h, w, 0.0), out(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = -2; k <= 2; ++k) tmp(reflect(y + k, h), x) += kBinomial[k + 2] * g(y, x);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = -2; k <= 2; ++k) out(y, reflect(x + k, w)) += kBinomial[k + 2] * tmp(y, x);
    }
  }
  return out;
}

Field decimate(const Field& f) {
  Field out(f.height() / 2, f.width() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out(y, x) = f(2 * y, 2 * x);
  }
  return out;
}

Field zero_insert(const Field& f, int h, int w) {
  Field out(h, w, 0.0);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) out(2 * y, 2 * x) = f(y, x);
  }
  return out;
}

Field crop(const Field& f, int h, int w) {
  if (f.height() == h && f.width() == w) return f;
  Field out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(y, x) = f(y, x);
  }
  return out;
}

Field uncrop(const Field& f, int h, int w) {
  if (f.height() == h && f.width() == w) return f;
  Field out(h, w, 0.0);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) out(y, x) = f(y, x);
  }
  return out;
}

Field down(const Field& f) { return decimate(blur5(f)); }
Field down_adjoint(const Field& g, int h, int w) { return blur5_adjoint(zero_insert(g, h, w)); }

Field up(const Field& f, int h, int w) {
  Field u = blur5(zero_insert(f, h, w));
  for (double& v : u.values()) v *= 4.0;
  return u;
}
Field up_adjoint(const Field& g) {
  Field d = decimate(blur5_adjoint(g));
  for (double& v : d.values()) v *= 4.0;
  return d;
}

Mask pool_mask(const Mask& m) {
  Mask out(m.height() / 2, m.width() / 2, 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out(y, x) = m(2 * y, 2 * x) | m(2 * y + 1, 2 * x) | m(2 * y, 2 * x + 1) | m(2 * y + 1, 2 * x + 1);
    }
  }
  return out;
}

Mask crop_mask(const Mask& m, int h, int w) {
  if (m.height() == h && m.width() == w) return m;
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(y, x) = m(y, x);
  }
  return out;
}

int usable_levels(int h, int w, int levels) {
  int l = levels;
  while (l > 1 && std::min(h, w) < (1 << l)) --l;
  return l;
}

}  // namespace

LossResult l1_masked(const Field& pred, const Field& gt, const Mask& mask, Field* grad) {
  require_same_shape(pred, gt, "l1_masked");
  require_same_shape(pred, mask, "l1_masked");
  prepare(grad, pred);
  const std::size_t n = count_active(mask);
  if (n == 0) return {0.0, true, "l1_masked: empty mask"};
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double d = pred[i] - gt[i];
    s += std::abs(d);
    if (grad) (*grad)[i] = sgn(d) / static_cast<double>(n);
  }
  return {s / static_cast<double>(n), false, {}};
}

std::vector<Field> laplacian_pyramid(const Field& img, int levels) {
  levels = usable_levels(img.height(), img.width(), levels);
  std::vector<Field> pyr;
  Field cur = img;
  for (int k = 0; k + 1 < levels; ++k) {
    const Field c = crop(cur, cur.height() & ~1, cur.width() & ~1);
    Field d = down(c);
    const Field u = up(d, c.height(), c.width());
    Field lap(c.height(), c.width());
    for (std::size_t i = 0; i < lap.size(); ++i) lap[i] = c[i] - u[i];
    pyr.push_back(std::move(lap));
    cur = std::move(d);
  }
  pyr.push_back(std::move(cur));
  return pyr;
}

LossResult laplacian_pyramid_loss(const Field& pred, const Field& gt, int levels, const Mask* mask, Field* grad,
                                  PyramidTerms* terms) {
  require_same_shape(pred, gt, "laplacian_pyramid_loss");
  if (mask) require_same_shape(pred, *mask, "laplacian_pyramid_loss");
  if (levels < 1) throw InvalidInput("laplacian_pyramid_loss: levels must be >= 1");
  LossResult res;
  const int used = usable_levels(pred.height(), pred.width(), levels);
  if (used != levels) {
    res.warning = true;
    res.note = "laplacian_pyramid_loss: raster too small, using " + std::to_string(used) + " levels";
  }

  Field diff(pred.height(), pred.width());
  // Outside the mask the prediction is replaced by the target, so band-pass
  // values near the mask edge do not see changes in masked-out pixels. The
  // pyramid is linear, so Lap(pred) - Lap(gt) = Lap(pred - gt).
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (mask && !(*mask)[i]) ? 0.0 : pred[i] - gt[i];
  const std::vector<Field> pyr = laplacian_pyramid(diff, used);

  std::vector<Mask> masks;
  masks.push_back(mask ? *mask : Mask(pred.height(), pred.width(), 1));
  for (int k = 1; k < used; ++k) {
    const Mask& prev = masks.back();
    masks.push_back(pool_mask(crop_mask(prev, prev.height() & ~1, prev.width() & ~1)));
  }

  if (terms) *terms = {};
  std::vector<Field> seeds(used);
  for (int k = 0; k < used; ++k) {
    const Field& lap = pyr[k];
    const Mask m = crop_mask(masks[k], lap.height(), lap.width());
    const double weight = static_cast<double>(1 << k);
    const std::size_t n = count_active(m);
    double s = 0.0;
    seeds[k] = Field(lap.height(), lap.width(), 0.0);
    for (std::size_t i = 0; i < lap.size(); ++i) {
      if (!m[i]) continue;
      s += std::abs(lap[i]);
      if (n) seeds[k][i] = weight * sgn(lap[i]) / static_cast<double>(n);
    }
    const double term = n ? weight * s / static_cast<double>(n) : 0.0;
    if (!n) {
      res.warning = true;
      res.note = "laplacian_pyramid_loss: empty mask at level " + std::to_string(k + 1);
    }
    res.value += term;
    if (terms) {
      terms->weighted.push_back(term);
      terms->unweighted_sum.push_back(s);
    }
  }

  if (grad) {
    // Reverse pass through the pyramid recursion.
    std::vector<std::pair<int, int>> shapes;  // shape of cur_k before cropping
    {
      int h = pred.height(), w = pred.width();
      for (int k = 0; k < used; ++k) {
        shapes.emplace_back(h, w);
        h = (h & ~1) / 2;
        w = (w & ~1) / 2;
      }
    }
    Field g = seeds[used - 1];
    for (int k = used - 2; k >= 0; --k) {
      const auto [h, w] = shapes[k];
      const int ch = h & ~1, cw = w & ~1;
      const Field& gl = seeds[k];
      const Field through = down_adjoint(up_adjoint(gl), ch, cw);
      const Field from_next = down_adjoint(g, ch, cw);
      Field gc(ch, cw);
      for (std::size_t i = 0; i < gc.size(); ++i) gc[i] = gl[i] - through[i] + from_next[i];
      g = uncrop(gc, h, w);
    }
    if (mask) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = (*mask)[i] ? g[i] : 0.0;
    }
    *grad = std::move(g);
  }
  return res;
}

LossResult temporal_consistency_loss(std::span<const Field> pred, std::span<const Field> gt,
                                     std::span<const Mask> masks, std::vector<Field>* grads) {
  if (pred.size() != gt.size()) throw InvalidInput("temporal_consistency_loss: sequence length mismatch");
  if (!masks.empty() && masks.size() != pred.size()) {
    throw InvalidInput("temporal_consistency_loss: mask sequence length mismatch");
  }
  if (grads) {
    grads->clear();
    for (const auto& p : pred) grads->emplace_back(p.height(), p.width(), 0.0);
  }
  if (pred.size() < 2) return {0.0, true, "temporal_consistency_loss: fewer than 2 frames"};
  for (std::size_t t = 0; t < pred.size(); ++t) {
    require_same_shape(pred[t], gt[t], "temporal_consistency_loss");
    require_same_shape(pred[t], pred[0], "temporal_consistency_loss");
    if (!masks.empty()) require_same_shape(pred[t], masks[t], "temporal_consistency_loss");
  }
  LossResult res;
  const double pairs = static_cast<double>(pred.size() - 1);
  for (std::size_t t = 1; t < pred.size(); ++t) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred[t].size(); ++i) {
      n += masks.empty() || (masks[t][i] && masks[t - 1][i]);
    }
    if (n == 0) {
      res.warning = true;
      res.note = "temporal_consistency_loss: empty mask for a frame pair";
      continue;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred[t].size(); ++i) {
      if (!masks.empty() && !(masks[t][i] && masks[t - 1][i])) continue;
      const double e = (pred[t][i] - pred[t - 1][i]) - (gt[t][i] - gt[t - 1][i]);
      s += e * e;
      if (grads) {
        const double g = 2.0 * e / (static_cast<double>(n) * pairs);
        (*grads)[t][i] += g;
        (*grads)[t - 1][i] -= g;
      }
    }
    res.value += s / static_cast<double>(n) / pairs;
  }
  return res;
}

LossResult beta_nll(const Field& mu, const Field& logvar, const Field& target, double beta, const Mask* mask,
                    Field* grad_mu, Field* grad_logvar) {
  require_same_shape(mu, logvar, "beta_nll");
  require_same_shape(mu, target, "beta_nll");
  if (mask) require_same_shape(mu, *mask, "beta_nll");
  if (!(beta >= 0.0)) throw InvalidInput("beta_nll: beta must be >= 0");
  prepare(grad_mu, mu);
  prepare(grad_logvar, mu);
  const std::size_t n = mask ? count_active(*mask) : mu.size();
  if (n == 0) return {0.0, true, "beta_nll: empty mask"};
  const double inv_n = 1.0 / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double lv = std::clamp(logvar[i], kLogvarMin, kLogvarMax);
    const double var = std::exp(lv);
    const double r = target[i] - mu[i];
    const double factor = beta == 0.0 ? 1.0 : std::exp(beta * lv);
    s += 0.5 * (r * r / var + lv) * factor;
    if (grad_mu) (*grad_mu)[i] = -r / var * factor * inv_n;
    if (grad_logvar) {
      const bool inside = logvar[i] > kLogvarMin && logvar[i] < kLogvarMax;
      (*grad_logvar)[i] = inside ? 0.5 * (1.0 - r * r / var) * factor * inv_n : 0.0;
    }
  }
  return {s * inv_n, false, {}};
}

LossResult soft_l1(const Field& pred, const Field& gt, const Field& weight, Field* grad) {
  require_same_shape(pred, gt, "soft_l1");
  require_same_shape(pred, weight, "soft_l1");
  prepare(grad, pred);
  if (pred.size() == 0) return {0.0, true, "soft_l1: empty raster"};
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (weight[i] < 0.0) throw InvalidInput("soft_l1: negative weight");
    const double d = pred[i] - gt[i];
    s += weight[i] * std::abs(d);
    if (grad) (*grad)[i] = weight[i] * sgn(d) * inv_n;
  }
  return {s * inv_n, false, {}};
}

Stage1Breakdown stage1_loss(std::span<const PredictionBundle> pred, std::span<const AlphaMatte> gt,
                            std::span<const Trimap> trimaps, const Stage1Weights& w,
                            std::vector<PredictionBundle>* grads) {
  const std::size_t T = pred.size();
  if (T == 0) throw InvalidInput("stage1_loss: empty sequence");
  if (gt.size() != T) throw InvalidInput("stage1_loss: prediction/ground-truth length mismatch");
  if (w.use_trimap && trimaps.size() != T) throw InvalidInput("stage1_loss: trimap sequence length mismatch");

  Stage1Breakdown out;
  std::vector<Mask> masks;
  std::vector<Field> alpha_seq;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& b = pred[t];
    masks.push_back(w.use_trimap ? unknown_mask(trimaps[t]) : Mask(gt[t].height(), gt[t].width(), 1));
    alpha_seq.push_back(b.alpha_mean);
  }
  if (grads) {
    grads->clear();
    for (const auto& b : pred) {
      const int h = b.alpha_mean.height(), wd = b.alpha_mean.width();
      grads->push_back({Field(h, wd, 0.0), Field(h, wd, 0.0), Field(h, wd, 0.0), Field(h, wd, 0.0)});
    }
  }
  auto note = [&](const LossResult& r) {
    if (r.warning) out.warnings.push_back(r.note);
  };
  auto accumulate = [](Field& dst, const Field& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };

  const double per_frame = 1.0 / static_cast<double>(T);
  Field g1, g2;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& b = pred[t];
    Field* ga = grads ? &g1 : nullptr;

    auto r = l1_masked(b.alpha_mean, gt[t], masks[t], ga);
    note(r);
    out.l1 += w.l1 * r.value * per_frame;
    if (grads) accumulate((*grads)[t].alpha_mean, g1, w.l1 * per_frame);

    r = laplacian_pyramid_loss(b.alpha_mean, gt[t], w.lap_levels, &masks[t], ga);
    note(r);
    out.lap += w.lap * r.value * per_frame;
    if (grads) accumulate((*grads)[t].alpha_mean, g1, w.lap * per_frame);

    r = beta_nll(b.alpha_mean, b.alpha_logvar, gt[t], w.beta, nullptr, ga, grads ? &g2 : nullptr);
    out.nll_alpha += w.nll_alpha * r.value * per_frame;
    if (grads) {
      accumulate((*grads)[t].alpha_mean, g1, w.nll_alpha * per_frame);
      accumulate((*grads)[t].alpha_logvar, g2, w.nll_alpha * per_frame);
    }

    // The uncertainty target carries no gradient back into the alpha head.
    Field target = gt[t];
    if (w.unc_target == UncertaintyTarget::Residual) {
      for (std::size_t i = 0; i < target.size(); ++i) target[i] = std::abs(gt[t][i] - b.alpha_mean[i]);
    }
    r = beta_nll(b.unc_mean, b.unc_logvar, target, w.beta, nullptr, ga, grads ? &g2 : nullptr);
    out.nll_u += w.nll_u * r.value * per_frame;
    if (grads) {
      accumulate((*grads)[t].unc_mean, g1, w.nll_u * per_frame);
      accumulate((*grads)[t].unc_logvar, g2, w.nll_u * per_frame);
    }
  }

  std::vector<Field> tc_grads;
  auto r = temporal_consistency_loss(alpha_seq, gt, masks, grads ? &tc_grads : nullptr);
  if (T > 1) note(r);
  out.tc = w.tc * r.value;
  if (grads) {
    for (std::size_t t = 0; t < T; ++t) accumulate((*grads)[t].alpha_mean, tc_grads[t], w.tc);
  }
  out.total = out.l1 + out.lap + out.tc + out.nll_u + out.nll_alpha;
  return out;
}

Stage2Breakdown stage2_loss(std::span<const Field> student_alpha, std::span<const AlphaMatte> gt,
                            std::span<const Field> w_unc, int lap_levels, std::vector<Field>* grads) {
  const std::size_t T = student_alpha.size();
  if (T == 0) throw InvalidInput("stage2_loss: empty sequence");
  if (gt.size() != T || w_unc.size() != T) throw InvalidInput("stage2_loss: sequence length mismatch");
  Stage2Breakdown out;
  if (grads) grads->clear();
  const double per_frame = 1.0 / static_cast<double>(T);
  Field g1, g2;
  for (std::size_t t = 0; t < T; ++t) {
    const auto a = soft_l1(student_alpha[t], gt[t], w_unc[t], grads ? &g1 : nullptr);
    const auto b = laplacian_pyramid_loss(student_alpha[t], gt[t], lap_levels, nullptr, grads ? &g2 : nullptr);
    out.soft_l1 += a.value * per_frame;
    out.lap += b.value * per_frame;
    if (grads) {
      Field g(g1.height(), g1.width());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g1[i] + g2[i]) * per_frame;
      grads->push_back(std::move(g));
    }
  }
  out.total = out.soft_l1 + out.lap;
  return out;
}

}  // namespace facemat::losses
