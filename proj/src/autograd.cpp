#include "glean/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "glean/errors.hpp"

namespace glean::ag {

namespace {
thread_local bool g_grad_enabled = true;

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected N×C×H×W, got " + shape_str(t.shape()));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(backward_fn);
  }
  return Var::from_node(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined() || root.value().numel() != 1) throw ShapeError("backward requires a single-element root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Intermediate gradients are no longer needed; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

Var detach(const Var& x) { return Var(x.value(), false); }

Var add(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return lin_comb(a, 1.0f, b, 1.0f);
}

Var sub(const Var& a, const Var& b) { return lin_comb(a, 1.0f, b, -1.0f); }

Var lin_comb(const Var& a, float sa, const Var& b, float sb) {
  if (!a.value().same_shape(b.value())) throw ShapeError("lin_comb: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const float* pa = a.value().data();
  const float* pb = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sa * pa[i] + sb * pb[i];
  return make_result(std::move(out), {a, b}, [sa, sb](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const float s = k == 0 ? sa : sb;
      Tensor& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = s * a.value()[i];
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
  });
}

Var leaky_relu(const Var& x, float slope) {
  Tensor out(x.shape());
  const float* px = x.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = px[i] >= 0.0f ? px[i] : slope * px[i];
  return make_result(std::move(out), {x}, [slope](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    const float* in = p.value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += (in[i] >= 0.0f ? 1.0f : slope) * self.grad[i];
  });
}

Var tanh(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x.value()[i]);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const float y = self.value[i];
      g[i] += (1.0f - y * y) * self.grad[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var flatten(const Var& x) {
  const int n = x.shape().at(0);
  return reshape(x, {n, static_cast<int>(x.value().numel() / std::max(n, 1))});
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_rank4(ta, "concat_channels");
  require_rank4(tb, "concat_channels");
  if (ta.n() != tb.n() || ta.h() != tb.h() || ta.w() != tb.w()) {
    throw ShapeError("concat_channels: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  }
  const int n = ta.n(), ca = ta.c(), cb = tb.c();
  const std::size_t hw = static_cast<std::size_t>(ta.h()) * ta.w();
  Tensor out({n, ca + cb, ta.h(), ta.w()});
  for (int i = 0; i < n; ++i) {
    std::copy_n(ta.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(tb.data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return make_result(std::move(out), {a, b}, [n, ca, cb, hw](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Tensor& g = p.grad_buffer();
      const int cp = k == 0 ? ca : cb;
      const int off = k == 0 ? 0 : ca;
      for (int i = 0; i < n; ++i) {
        const float* src = self.grad.data() + (i * (ca + cb) + off) * hw;
        float* dst = g.data() + i * cp * hw;
        for (std::size_t j = 0; j < cp * hw; ++j) dst[j] += src[j];
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Tensor& t = x.value();
  require_rank4(t, "upsample_nearest2x");
  const int n = t.n(), c = t.c(), h = t.h(), w = t.w();
  Tensor out({n, c, 2 * h, 2 * w});
  for (int p = 0; p < n * c; ++p) {
    const float* src = t.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int p = 0; p < n * c; ++p) {
      float* dst = g.data() + static_cast<std::size_t>(p) * h * w;
      const float* src = self.grad.data() + static_cast<std::size_t>(p) * 4 * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
    }
  });
}

namespace {
// Index map shared by shuffle and unshuffle: for every element of the
// shuffled (N, C, rH, rW) tensor, its position in the (N, C·r², H, W) tensor.
std::vector<std::size_t> shuffle_index(int n, int c, int h, int w, int r) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(n) * c * h * w * r * r);
  std::size_t o = 0;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h * r; ++y)
        for (int xx = 0; xx < w * r; ++xx) {
          const int i = y % r, j = xx % r;
          const int src_c = ch * r * r + i * r + j;
          idx[o++] = ((static_cast<std::size_t>(b) * c * r * r + src_c) * h + y / r) * w + xx / r;
        }
  return idx;
}
}  // namespace

Var pixel_shuffle(const Var& x, int r) {
  const Tensor& t = x.value();
  require_rank4(t, "pixel_shuffle");
  if (r < 1 || t.c() % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(t.c()) + " not divisible by r²=" + std::to_string(r * r));
  }
  const int c = t.c() / (r * r);
  auto idx = std::make_shared<std::vector<std::size_t>>(shuffle_index(t.n(), c, t.h(), t.w(), r));
  Tensor out({t.n(), c, t.h() * r, t.w() * r});
  for (std::size_t o = 0; o < out.numel(); ++o) out[o] = t[(*idx)[o]];
  return make_result(std::move(out), {x}, [idx](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < self.grad.numel(); ++o) g[(*idx)[o]] += self.grad[o];
  });
}

Var pixel_unshuffle(const Var& x, int r) {
  const Tensor& t = x.value();
  require_rank4(t, "pixel_unshuffle");
  if (r < 1 || t.h() % r != 0 || t.w() % r != 0) throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
  const int h = t.h() / r, w = t.w() / r;
  auto idx = std::make_shared<std::vector<std::size_t>>(shuffle_index(t.n(), t.c(), h, w, r));
  Tensor out({t.n(), t.c() * r * r, h, w});
  for (std::size_t o = 0; o < t.numel(); ++o) out[(*idx)[o]] = t[o];
  return make_result(std::move(out), {x}, [idx](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < g.numel(); ++o) g[o] += self.grad[(*idx)[o]];
  });
}

Var instance_norm(const Var& x, float eps) {
  const Tensor& t = x.value();
  require_rank4(t, "instance_norm");
  const int planes = t.n() * t.c();
  const std::size_t hw = static_cast<std::size_t>(t.h()) * t.w();
  Tensor out(t.shape());
  auto inv_std = std::make_shared<std::vector<float>>(planes);
  for (int p = 0; p < planes; ++p) {
    const float* src = t.data() + p * hw;
    double mean = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mean += src[i];
    mean /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[p] = static_cast<float>(is);
    float* dst = out.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<float>((src[i] - mean) * is);
  }
  return make_result(std::move(out), {x}, [inv_std, planes, hw](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      const float* dy = self.grad.data() + p * hw;
      const float* xh = self.value.data() + p * hw;
      double mdy = 0.0, mdyx = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        mdy += dy[i];
        mdyx += static_cast<double>(dy[i]) * xh[i];
      }
      mdy /= static_cast<double>(hw);
      mdyx /= static_cast<double>(hw);
      const float is = (*inv_std)[p];
      float* dx = g.data() + p * hw;
      for (std::size_t i = 0; i < hw; ++i) dx[i] += is * static_cast<float>(dy[i] - mdy - xh[i] * mdyx);
    }
  });
}

Var modulate(const Var& x, const Var& style) {
  const Tensor& t = x.value();
  const Tensor& s = style.value();
  require_rank4(t, "modulate");
  const int n = t.n(), c = t.c();
  if (s.rank() != 2 || s.dim(0) != n || s.dim(1) != 2 * c) {
    throw ShapeError("modulate: style " + shape_str(s.shape()) + " incompatible with " + shape_str(t.shape()));
  }
  const std::size_t hw = static_cast<std::size_t>(t.h()) * t.w();
  Tensor out(t.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const float gain = 1.0f + s[b * 2 * c + ch];
      const float shift = s[b * 2 * c + c + ch];
      const float* src = t.data() + (b * c + ch) * hw;
      float* dst = out.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * gain + shift;
    }
  return make_result(std::move(out), {x, style}, [n, c, hw](Node& self) {
    Node& px = *self.parents[0];
    Node& ps = *self.parents[1];
    const Tensor& s = ps.value;
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const float* dy = self.grad.data() + (b * c + ch) * hw;
        if (px.requires_grad) {
          const float gain = 1.0f + s[b * 2 * c + ch];
          float* dx = px.grad_buffer().data() + (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) dx[i] += dy[i] * gain;
        }
        if (ps.requires_grad) {
          const float* xin = px.value.data() + (b * c + ch) * hw;
          double dg = 0.0, db = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            dg += static_cast<double>(dy[i]) * xin[i];
            db += dy[i];
          }
          Tensor& gs = ps.grad_buffer();
          gs[b * 2 * c + ch] += static_cast<float>(dg);
          gs[b * 2 * c + c + ch] += static_cast<float>(db);
        }
      }
  });
}

Var select_row(const Var& latents, int row) {
  const Tensor& t = latents.value();
  if (t.rank() != 3) throw ShapeError("select_row expects N×k×d, got " + shape_str(t.shape()));
  const int n = t.dim(0), k = t.dim(1), d = t.dim(2);
  if (row < 0 || row >= k) throw ShapeError("select_row: row " + std::to_string(row) + " outside k=" + std::to_string(k));
  Tensor out({n, d});
  for (int b = 0; b < n; ++b) std::copy_n(t.data() + (b * k + row) * d, d, out.data() + b * d);
  return make_result(std::move(out), {latents}, [n, k, d, row](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < d; ++j) g[(b * k + row) * d + j] += self.grad[b * d + j];
  });
}

Var repeat_rows(const Var& z, int k) {
  const Tensor& t = z.value();
  if (t.rank() != 2) throw ShapeError("repeat_rows expects N×d, got " + shape_str(t.shape()));
  const int n = t.dim(0), d = t.dim(1);
  Tensor out({n, k, d});
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < k; ++r) std::copy_n(t.data() + b * d, d, out.data() + (b * k + r) * d);
  return make_result(std::move(out), {z}, [n, k, d](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int b = 0; b < n; ++b)
      for (int r = 0; r < k; ++r)
        for (int j = 0; j < d; ++j) g[b * d + j] += self.grad[(b * k + r) * d + j];
  });
}

Var repeat_batch(const Var& x, int n) {
  const Tensor& t = x.value();
  if (t.rank() != 4 || t.n() != 1) throw ShapeError("repeat_batch expects 1×C×H×W, got " + shape_str(t.shape()));
  const std::size_t per = t.numel();
  Tensor out({n, t.c(), t.h(), t.w()});
  for (int b = 0; b < n; ++b) std::copy_n(t.data(), per, out.data() + b * per);
  return make_result(std::move(out), {x}, [n, per](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < per; ++i) g[i] += self.grad[b * per + i];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& t = x.value();
  require_rank4(t, "global_avg_pool");
  const int planes = t.n() * t.c();
  const std::size_t hw = static_cast<std::size_t>(t.h()) * t.w();
  Tensor out({t.n(), t.c()});
  for (int p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += t[p * hw + i];
    out[p] = static_cast<float>(s / static_cast<double>(hw));
  }
  return make_result(std::move(out), {x}, [planes, hw](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      const float v = self.grad[p] / static_cast<float>(hw);
      for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] += v;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& tx = x.value();
  const Tensor& tw = weight.value();
  if (tx.rank() != 2 || tw.rank() != 2 || tx.dim(1) != tw.dim(1)) {
    throw ShapeError("linear: input " + shape_str(tx.shape()) + " vs weight " + shape_str(tw.shape()));
  }
  const int n = tx.dim(0), in = tx.dim(1), out_f = tw.dim(0);
  if (bias.defined() && static_cast<int>(bias.value().numel()) != out_f) throw ShapeError("linear: bias size mismatch");
  Tensor out({n, out_f});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_f; ++o) {
      double s = bias.defined() ? bias.value()[o] : 0.0;
      const float* wr = tw.data() + static_cast<std::size_t>(o) * in;
      const float* xr = tx.data() + static_cast<std::size_t>(b) * in;
      for (int i = 0; i < in; ++i) s += static_cast<double>(wr[i]) * xr[i];
      out[b * out_f + o] = static_cast<float>(s);
    }
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [n, in, out_f](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const float* dy = self.grad.data();
    if (px.requires_grad) {
      Tensor& g = px.grad_buffer();
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_f; ++o) {
          const float d = dy[b * out_f + o];
          if (d == 0.0f) continue;
          const float* wr = pw.value.data() + static_cast<std::size_t>(o) * in;
          float* gx = g.data() + static_cast<std::size_t>(b) * in;
          for (int i = 0; i < in; ++i) gx[i] += d * wr[i];
        }
    }
    if (pw.requires_grad) {
      Tensor& g = pw.grad_buffer();
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_f; ++o) {
          const float d = dy[b * out_f + o];
          if (d == 0.0f) continue;
          const float* xr = px.value.data() + static_cast<std::size_t>(b) * in;
          float* gw = g.data() + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) gw[i] += d * xr[i];
        }
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Tensor& g = self.parents[2]->grad_buffer();
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_f; ++o) g[o] += dy[b * out_f + o];
    }
  });
}

Var mean(const Var& x) {
  double s = 0.0;
  for (float v : x.value().values()) s += v;
  const std::size_t count = x.value().numel();
  Tensor out({1}, static_cast<float>(s / static_cast<double>(count)));
  return make_result(std::move(out), {x}, [count](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const float v = self.grad[0] / static_cast<float>(count);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += v;
  });
}

Var mse(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t count = a.value().numel();
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    s += d * d;
  }
  Tensor out({1}, static_cast<float>(s / static_cast<double>(count)));
  return make_result(std::move(out), {a, b}, [count](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const float k = 2.0f * self.grad[0] / static_cast<float>(count);
    for (int side = 0; side < 2; ++side) {
      Node& p = side == 0 ? pa : pb;
      if (!p.requires_grad) continue;
      const float sgn = side == 0 ? k : -k;
      Tensor& g = p.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) g[i] += sgn * (pa.value[i] - pb.value[i]);
    }
  });
}

namespace {
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var mean_softplus(const Var& x, float sign) {
  const std::size_t count = x.value().numel();
  double s = 0.0;
  for (float v : x.value().values()) s += softplus(static_cast<double>(sign) * v);
  Tensor out({1}, static_cast<float>(s / static_cast<double>(count)));
  return make_result(std::move(out), {x}, [count, sign](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    const double k = self.grad[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      g[i] += static_cast<float>(k * sign * sigmoid(static_cast<double>(sign) * p.value[i]));
    }
  });
}

}  // namespace glean::ag
