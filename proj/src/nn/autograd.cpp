#include "facemat/nn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace facemat::nn {
namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

bool any_requires_grad(const std::vector<Var>& vs) {
  return std::any_of(vs.begin(), vs.end(), [](const Var& v) { return v->requires_grad; });
}

/// Result node; records parents and the closure only when some input needs
/// a gradient and recording is enabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(what) + ": shape mismatch");
}

int out_size(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

void im2col(const Tensor& x, int k, int s, int p, int ho, int wo, RowMat& col) {
  const int c = x.channels(), h = x.height(), w = x.width();
  col.resize(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          float* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = x.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& col, int k, int s, int p, int ho, int wo, Tensor& dx) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = dx.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
          const float* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
  Tensor out(a->value.channels(), a->value.height(), a->value.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  return make_result(std::move(out), {a}, [dfdx](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
  });
}

/// Bilinear taps for one output coordinate of a 2x upsampling.
struct Tap {
  int i0, i1;
  float w0, w1;
};

std::vector<Tap> upsample_taps(int n) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    const double s = (o + 0.5) / 2.0 - 0.5;
    const int f = static_cast<int>(std::floor(s));
    const float frac = static_cast<float>(s - f);
    taps[o] = {std::clamp(f, 0, n - 1), std::clamp(f + 1, 0, n - 1), 1.0f - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (!grad.same_shape(value) || grad.empty()) grad = Tensor(value.channels(), value.height(), value.width());
  return grad;
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  for (const auto& [v, g] : seeds) {
    if (!v->requires_grad) continue;
    require_same(v->value, g, "backward seed");
    Tensor& buf = v->grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
    if (seen.insert(v.get()).second) stack.emplace_back(v.get(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn) continue;
    n->grad_buffer();
    n->backward_fn(*n);
    // Interior gradients are no longer needed once propagated.
    n->grad = Tensor();
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad) {
  const Tensor& xv = x->value;
  const int cout = weight->value.channels();
  const int kk = xv.channels() * kernel * kernel;
  if (weight->value.height() != kk) throw InvalidInput("conv2d: weight does not match input channels");
  if (bias->value.channels() != cout) throw InvalidInput("conv2d: bias does not match output channels");
  const int ho = out_size(xv.height(), kernel, stride, pad), wo = out_size(xv.width(), kernel, stride, pad);
  if (ho <= 0 || wo <= 0) throw InvalidInput("conv2d: input smaller than kernel");

  RowMat col;
  im2col(xv, kernel, stride, pad, ho, wo, col);
  Tensor out(cout, ho, wo);
  MapMat y(out.data(), cout, static_cast<Eigen::Index>(ho) * wo);
  CMapMat wm(weight->value.data(), cout, kk);
  y.noalias() = wm * col;
  for (int o = 0; o < cout; ++o) y.row(o).array() += bias->value[static_cast<std::size_t>(o)];

  return make_result(std::move(out), {x, weight, bias}, [kernel, stride, pad, ho, wo, cout, kk](Node& self) {
    Node& in = *self.parents[0];
    Node& w = *self.parents[1];
    Node& b = *self.parents[2];
    CMapMat dy(self.grad.data(), cout, static_cast<Eigen::Index>(ho) * wo);
    if (b.requires_grad) {
      Tensor& gb = b.grad_buffer();
      for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += dy.row(o).sum();
    }
    if (!w.requires_grad && !in.requires_grad) return;
    // Recomputed rather than stored: keeps the tape small.
    RowMat col;
    im2col(in.value, kernel, stride, pad, ho, wo, col);
    if (w.requires_grad) {
      MapMat gw(w.grad_buffer().data(), cout, kk);
      gw.noalias() += dy * col.transpose();
    }
    if (in.requires_grad) {
      CMapMat wm(w.value.data(), cout, kk);
      RowMat dcol = wm.transpose() * dy;
      col2im_add(dcol, kernel, stride, pad, ho, wo, in.grad_buffer());
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a->value, b->value, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a->value, b->value, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const float sign = k == 0 ? 1.0f : -1.0f;
      Tensor& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a->value, b->value, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var relu(const Var& a) {
  return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); }, [](float, float y) { return y * (1.0f - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); },
      [](float x, float) { return 1.0f / (1.0f + std::exp(-x)); });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat: no inputs");
  const int h = parts[0]->value.height(), w = parts[0]->value.width();
  int c = 0;
  for (const auto& p : parts) {
    if (p->value.height() != h || p->value.width() != w) throw InvalidInput("concat: spatial size mismatch");
    c += p->value.channels();
  }
  Tensor out(c, h, w);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.size(), out.data() + off);
    off += p->value.size();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var slice_channels(const Var& a, int begin, int end) {
  const Tensor& v = a->value;
  if (begin < 0 || end > v.channels() || begin >= end) throw InvalidInput("slice_channels: bad channel range");
  const std::size_t plane = v.plane_size();
  Tensor out(end - begin, v.height(), v.width());
  std::copy(v.data() + begin * plane, v.data() + end * plane, out.data());
  return make_result(std::move(out), {a}, [begin, plane](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    float* g = in.grad_buffer().data() + begin * plane;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var upsample2x(const Var& a) {
  const Tensor& v = a->value;
  const int c = v.channels(), h = v.height(), w = v.width();
  const auto ty = upsample_taps(h), tx = upsample_taps(w);
  Tensor out(c, 2 * h, 2 * w);
  std::vector<float> rows(static_cast<std::size_t>(2 * h) * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Tap& t = ty[oy];
      for (int x = 0; x < w; ++x) rows[static_cast<std::size_t>(oy) * w + x] = t.w0 * v.at(ch, t.i0, x) + t.w1 * v.at(ch, t.i1, x);
    }
    for (int oy = 0; oy < 2 * h; ++oy) {
      const float* r = rows.data() + static_cast<std::size_t>(oy) * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Tap& t = tx[ox];
        out.at(ch, oy, ox) = t.w0 * r[t.i0] + t.w1 * r[t.i1];
      }
    }
  }
  return make_result(std::move(out), {a}, [ty, tx, c, h, w](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    std::vector<float> rows(static_cast<std::size_t>(2 * h) * w);
    for (int ch = 0; ch < c; ++ch) {
      std::fill(rows.begin(), rows.end(), 0.0f);
      for (int oy = 0; oy < 2 * h; ++oy) {
        float* r = rows.data() + static_cast<std::size_t>(oy) * w;
        for (int ox = 0; ox < 2 * w; ++ox) {
          const Tap& t = tx[ox];
          const float d = self.grad.at(ch, oy, ox);
          r[t.i0] += t.w0 * d;
          r[t.i1] += t.w1 * d;
        }
      }
      for (int oy = 0; oy < 2 * h; ++oy) {
        const Tap& t = ty[oy];
        for (int x = 0; x < w; ++x) {
          const float d = rows[static_cast<std::size_t>(oy) * w + x];
          g.at(ch, t.i0, x) += t.w0 * d;
          g.at(ch, t.i1, x) += t.w1 * d;
        }
      }
    }
  });
}

}  // namespace facemat::nn
