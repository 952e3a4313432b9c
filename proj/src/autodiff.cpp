#include "cvdm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace cvdm::ad {
namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

/// Creates the result node and wires parents and backward only when needed.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& p : parents) needs = needs || (p.defined() && p.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (Var& p : parents) {
      if (p.defined()) node->parents.push_back(p.node());
    }
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  int* o[4] = {&out.n, &out.c, &out.h, &out.w};
  for (int i = 0; i < 4; ++i) {
    const int da = a.dim(i);
    const int db = b.dim(i);
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + a.str() + " with " + b.str());
    }
    *o[i] = std::max(da, db);
  }
  return out;
}

/// Strides of `s` viewed inside `out`, zero along broadcast dims.
std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
  std::array<std::size_t, 4> stride{};
  std::size_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    stride[static_cast<std::size_t>(i)] = (s.dim(i) == 1 && out.dim(i) != 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(s.dim(i));
  }
  return stride;
}

/// Expand `t` to `out` shape.
Tensor expand(const Tensor& t, const Shape& out) {
  if (t.shape() == out) return t;
  if (t.size() == 1) return Tensor::full(out, t.data()[0]);
  Tensor r(out);
  const auto st = broadcast_strides(t.shape(), out);
  std::size_t k = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int h = 0; h < out.h; ++h)
        for (int w = 0; w < out.w; ++w)
          r.data()[static_cast<Eigen::Index>(k++)] =
              t.data()[static_cast<Eigen::Index>(n * st[0] + c * st[1] + h * st[2] + w * st[3])];
  return r;
}

/// Sum `g` down to `target` shape (adjoint of expand).
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (target.size() == 1) return Tensor::full(target, g.data().sum());
  Tensor r(target);
  const Shape& gs = g.shape();
  const auto st = broadcast_strides(target, gs);
  std::size_t k = 0;
  for (int n = 0; n < gs.n; ++n)
    for (int c = 0; c < gs.c; ++c)
      for (int h = 0; h < gs.h; ++h)
        for (int w = 0; w < gs.w; ++w)
          r.data()[static_cast<Eigen::Index>(n * st[0] + c * st[1] + h * st[2] + w * st[3])] +=
              g.data()[static_cast<Eigen::Index>(k++)];
  return r;
}

template <typename F>
Var unary(const Var& a, F&& f, std::function<void(Node&)> bw) {
  return make_result(Tensor(a.shape(), f(a.value().data())), {a}, std::move(bw));
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.shape() != value.shape() || grad.size() != value.size()) {
    grad = Tensor::zeros(value.shape());
  }
  grad.data() += g.data();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant(double value) { return constant(Tensor::scalar(value)); }

Var param(Parameter& p) {
  auto node = std::make_shared<Node>();
  node->value = p.value;
  if (g_grad_enabled) {
    node->requires_grad = true;
    node->param = &p;
  }
  return Var(std::move(node));
}

Var variable(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = g_grad_enabled;
  return Var(std::move(node));
}

const Tensor& grad_of(const Var& v) {
  if (v.node()->grad.size() != v.value().size() || v.node()->grad.shape() != v.shape()) {
    v.node()->grad = Tensor::zeros(v.shape());
  }
  return v.node()->grad;
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward() needs a scalar, got " + loss.shape().str());
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
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
  for (Node* n : order) n->grad = Tensor::zeros(n->value.shape());
  loss.node()->grad.data().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
    if (n->param != nullptr) n->param->grad.data() += n->grad.data();
  }
}

// ---------------------------------------------------------------------------
// Elementwise binary ops

namespace {

template <typename Fwd>
Tensor binary_forward(const Tensor& a, const Tensor& b, Fwd&& f) {
  if (a.shape() == b.shape()) return Tensor(a.shape(), f(a.data(), b.data()));
  const Shape out = broadcast_shape(a.shape(), b.shape());
  if (a.size() == 1 && b.shape() == out) {
    return Tensor(out, f(Eigen::ArrayXd::Constant(b.size(), a.data()[0]), b.data()));
  }
  if (b.size() == 1 && a.shape() == out) {
    return Tensor(out, f(a.data(), Eigen::ArrayXd::Constant(a.size(), b.data()[0])));
  }
  const Tensor ea = expand(a, out);
  const Tensor eb = expand(b, out);
  return Tensor(out, f(ea.data(), eb.data()));
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return make_result(binary_forward(a.value(), b.value(),
                                    [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x + y; }),
                     {a, b}, [sa, sb](Node& n) {
                       if (n.parents[0]->requires_grad) n.parents[0]->accumulate(reduce_to(n.grad, sa));
                       if (n.parents[1]->requires_grad) n.parents[1]->accumulate(reduce_to(n.grad, sb));
                     });
}

Var operator-(const Var& a, const Var& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return make_result(binary_forward(a.value(), b.value(),
                                    [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x - y; }),
                     {a, b}, [sa, sb](Node& n) {
                       if (n.parents[0]->requires_grad) n.parents[0]->accumulate(reduce_to(n.grad, sa));
                       if (n.parents[1]->requires_grad) {
                         Tensor g = reduce_to(n.grad, sb);
                         g.data() = -g.data();
                         n.parents[1]->accumulate(g);
                       }
                     });
}

Var operator*(const Var& a, const Var& b) {
  return make_result(binary_forward(a.value(), b.value(),
                                    [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x * y; }),
                     {a, b}, [](Node& n) {
                       Node& pa = *n.parents[0];
                       Node& pb = *n.parents[1];
                       const Shape out = n.value.shape();
                       if (pa.requires_grad) {
                         const Tensor eb = expand(pb.value, out);
                         pa.accumulate(reduce_to(Tensor(out, n.grad.data() * eb.data()), pa.value.shape()));
                       }
                       if (pb.requires_grad) {
                         const Tensor ea = expand(pa.value, out);
                         pb.accumulate(reduce_to(Tensor(out, n.grad.data() * ea.data()), pb.value.shape()));
                       }
                     });
}

Var operator/(const Var& a, const Var& b) {
  return make_result(binary_forward(a.value(), b.value(),
                                    [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x / y; }),
                     {a, b}, [](Node& n) {
                       Node& pa = *n.parents[0];
                       Node& pb = *n.parents[1];
                       const Shape out = n.value.shape();
                       const Tensor eb = expand(pb.value, out);
                       if (pa.requires_grad) {
                         pa.accumulate(reduce_to(Tensor(out, n.grad.data() / eb.data()), pa.value.shape()));
                       }
                       if (pb.requires_grad) {
                         // d(a/b)/db = -(a/b)/b
                         pb.accumulate(reduce_to(Tensor(out, -n.grad.data() * n.value.data() / eb.data()),
                                                 pb.value.shape()));
                       }
                     });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  return make_result(Tensor(a.shape(), s * a.value().data()), {a},
                     [s](Node& n) { n.parents[0]->accumulate(Tensor(n.grad.shape(), s * n.grad.data())); });
}
Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  return make_result(Tensor(a.shape(), a.value().data() + s), {a},
                     [](Node& n) { n.parents[0]->accumulate(n.grad); });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-1.0 * a) + s; }

// ---------------------------------------------------------------------------
// Elementwise unary ops

namespace {

Eigen::ArrayXd stable_softplus(const Eigen::ArrayXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

Eigen::ArrayXd stable_sigmoid(const Eigen::ArrayXd& x) {
  Eigen::ArrayXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

}  // namespace

Var exp(const Var& a) {
  return unary(a, [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.exp(); }, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.value.shape(), n.grad.data() * n.value.data()));
  });
}

Var log(const Var& a) {
  return unary(a, [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.log(); }, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.value.shape(), n.grad.data() / n.parents[0]->value.data()));
  });
}

Var sqrt(const Var& a) {
  return unary(a, [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.sqrt(); }, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.value.shape(), 0.5 * n.grad.data() / n.value.data()));
  });
}

Var square(const Var& a) {
  return unary(a, [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.square(); }, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.value.shape(), 2.0 * n.grad.data() * n.parents[0]->value.data()));
  });
}

Var softplus(const Var& a) {
  return unary(a, stable_softplus, [](Node& n) {
    n.parents[0]->accumulate(
        Tensor(n.value.shape(), n.grad.data() * stable_sigmoid(n.parents[0]->value.data())));
  });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](Node& n) {
    const auto& s = n.value.data();
    n.parents[0]->accumulate(Tensor(n.value.shape(), n.grad.data() * s * (1.0 - s)));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, [lo, hi](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.max(lo).min(hi); },
               [lo, hi](Node& n) {
                 const auto& x = n.parents[0]->value.data();
                 const Eigen::ArrayXd pass = ((x >= lo) && (x <= hi)).cast<double>();
                 n.parents[0]->accumulate(Tensor(n.value.shape(), n.grad.data() * pass));
               });
}

// ---------------------------------------------------------------------------
// Reductions and layout

Var sum(const Var& a) {
  return make_result(Tensor::scalar(a.value().data().sum()), {a}, [](Node& n) {
    n.parents[0]->accumulate(Tensor::full(n.parents[0]->value.shape(), n.grad.data()[0]));
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return make_result(Tensor::scalar(a.value().data().mean()), {a}, [inv](Node& n) {
    n.parents[0]->accumulate(Tensor::full(n.parents[0]->value.shape(), inv * n.grad.data()[0]));
  });
}

Var spatial_mean(const Var& a) {
  const Shape s = a.shape();
  const Shape out{s.n, s.c, 1, 1};
  const auto hw = static_cast<Eigen::Index>(s.h) * s.w;
  Tensor r(out);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(out.size()); ++k) {
    r.data()[k] = a.value().data().segment(k * hw, hw).mean();
  }
  return make_result(std::move(r), {a}, [s, hw](Node& n) {
    Tensor g(s);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(s.n) * s.c; ++k) {
      g.data().segment(k * hw, hw).setConstant(n.grad.data()[k] / static_cast<double>(hw));
    }
    n.parents[0]->accumulate(g);
  });
}

Var batch_mean(const Var& a) {
  const Shape s = a.shape();
  const Shape out{1, s.c, s.h, s.w};
  const auto len = static_cast<Eigen::Index>(out.size());
  Tensor r(out);
  for (int i = 0; i < s.n; ++i) r.data() += a.value().data().segment(i * len, len);
  r.data() /= static_cast<double>(s.n);
  return make_result(std::move(r), {a}, [s, len](Node& n) {
    Tensor g(s);
    for (int i = 0; i < s.n; ++i) g.data().segment(i * len, len) = n.grad.data() / static_cast<double>(s.n);
    n.parents[0]->accumulate(g);
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels of nothing");
  const Shape first = parts.front().shape();
  Shape out = first;
  out.c = 0;
  for (const Var& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: " + s.str() + " vs " + first.str());
    }
    out.c += s.c;
  }
  const auto hw = static_cast<Eigen::Index>(out.h) * out.w;
  Tensor r(out);
  std::vector<int> offsets;
  int off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const int pc = p.shape().c;
    for (int n = 0; n < out.n; ++n) {
      r.data().segment((static_cast<Eigen::Index>(n) * out.c + off) * hw, pc * hw) =
          p.value().data().segment(static_cast<Eigen::Index>(n) * pc * hw, pc * hw);
    }
    off += pc;
  }
  return make_result(std::move(r), parts, [offsets, out, hw](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Node& p = *n.parents[i];
      if (!p.requires_grad) continue;
      const int pc = p.value.shape().c;
      Tensor g(p.value.shape());
      for (int b = 0; b < out.n; ++b) {
        g.data().segment(static_cast<Eigen::Index>(b) * pc * hw, pc * hw) =
            n.grad.data().segment((static_cast<Eigen::Index>(b) * out.c + offsets[i]) * hw, pc * hw);
      }
      p.accumulate(g);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape.size() != a.value().size()) throw ShapeError("reshape " + a.shape().str() + " -> " + shape.str());
  const Shape from = a.shape();
  return make_result(a.value().reshaped(shape), {a},
                     [from](Node& n) { n.parents[0]->accumulate(n.grad.reshaped(from)); });
}

Var broadcast_to(const Var& a, Shape shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw ShapeError("broadcast_to " + a.shape().str() + " -> " + shape.str());
  }
  const Shape from = a.shape();
  return make_result(expand(a.value(), shape), {a},
                     [from](Node& n) { n.parents[0]->accumulate(reduce_to(n.grad, from)); });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

/// Column matrix {Cin*k*k, H*W} for one sample.
void im2col(const double* x, int cin, int h, int w, int k, Padding pad, double* col) {
  const int r = k / 2;
  const int hw = h * w;
  for (int c = 0; c < cin; ++c) {
    const double* xc = x + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::ptrdiff_t>(c) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - r;
          if (pad == Padding::kCircular) {
            sy = wrap(sy, h);
          } else if (sy < 0 || sy >= h) {
            std::fill(row + y * w, row + (y + 1) * w, 0.0);
            continue;
          }
          for (int xx = 0; xx < w; ++xx) {
            int sx = xx + kx - r;
            if (pad == Padding::kCircular) {
              sx = wrap(sx, w);
            } else if (sx < 0 || sx >= w) {
              row[y * w + xx] = 0.0;
              continue;
            }
            row[y * w + xx] = xc[sy * w + sx];
          }
        }
      }
    }
  }
}

void col2im(const double* col, int cin, int h, int w, int k, Padding pad, double* dx) {
  const int r = k / 2;
  const int hw = h * w;
  for (int c = 0; c < cin; ++c) {
    double* dxc = dx + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<std::ptrdiff_t>(c) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - r;
          if (pad == Padding::kCircular) {
            sy = wrap(sy, h);
          } else if (sy < 0 || sy >= h) {
            continue;
          }
          for (int xx = 0; xx < w; ++xx) {
            int sx = xx + kx - r;
            if (pad == Padding::kCircular) {
              sx = wrap(sx, w);
            } else if (sx < 0 || sx >= w) {
              continue;
            }
            dxc[sy * w + sx] += row[y * w + xx];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Padding padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  const int cout = ws.n;
  const int k = ws.h;
  const int hw = xs.h * xs.w;
  const int ckk = xs.c * k * k;
  const Shape out{xs.n, cout, xs.h, xs.w};
  Tensor r(out);
  const bool one_by_one = (k == 1);
  auto cols = std::make_shared<std::vector<double>>(one_by_one ? 0 : static_cast<std::size_t>(xs.n) * ckk * hw);

  ConstRowMap wm(weight.value().data().data(), cout, ckk);
  for (int n = 0; n < xs.n; ++n) {
    const double* xn = x.value().data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw;
    RowMap on(r.data().data() + static_cast<std::ptrdiff_t>(n) * cout * hw, cout, hw);
    if (one_by_one) {
      on.noalias() = wm * ConstRowMap(xn, xs.c, hw);
    } else {
      double* col = cols->data() + static_cast<std::ptrdiff_t>(n) * ckk * hw;
      im2col(xn, xs.c, xs.h, xs.w, k, padding, col);
      on.noalias() = wm * ConstRowMap(col, ckk, hw);
    }
    if (bias.defined()) {
      on.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data().data(), cout);
    }
  }

  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(r), parents, [xs, ws, cout, k, hw, ckk, padding, one_by_one, cols](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pw = *nd.parents[1];
    Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
    Tensor dw(ws);
    Tensor dx(xs);
    Tensor db(Shape{1, cout, 1, 1});
    ConstRowMap wm(pw.value.data().data(), cout, ckk);
    RowMap dwm(dw.data().data(), cout, ckk);
    std::vector<double> dcol(one_by_one ? 0 : static_cast<std::size_t>(ckk) * hw);
    for (int n = 0; n < xs.n; ++n) {
      ConstRowMap gn(nd.grad.data().data() + static_cast<std::ptrdiff_t>(n) * cout * hw, cout, hw);
      const double* xn = px.value.data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw;
      double* dxn = dx.data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw;
      if (one_by_one) {
        if (pw.requires_grad) dwm.noalias() += gn * ConstRowMap(xn, xs.c, hw).transpose();
        if (px.requires_grad) RowMap(dxn, xs.c, hw).noalias() += wm.transpose() * gn;
      } else {
        const double* col = cols->data() + static_cast<std::ptrdiff_t>(n) * ckk * hw;
        if (pw.requires_grad) dwm.noalias() += gn * ConstRowMap(col, ckk, hw).transpose();
        if (px.requires_grad) {
          RowMap dc(dcol.data(), ckk, hw);
          dc.noalias() = wm.transpose() * gn;
          col2im(dcol.data(), xs.c, xs.h, xs.w, k, padding, dxn);
        }
      }
      if (pb != nullptr && pb->requires_grad) db.data() += gn.rowwise().sum().array();
    }
    if (px.requires_grad) px.accumulate(dx);
    if (pw.requires_grad) pw.accumulate(dw);
    if (pb != nullptr && pb->requires_grad) pb->accumulate(db);
  });
}

Var conv_transpose2x2(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != 2 || ws.w != 2) {
    throw ShapeError("conv_transpose2x2: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  const int cout = ws.c;
  const int hw = xs.h * xs.w;
  const Shape out{xs.n, cout, 2 * xs.h, 2 * xs.w};
  Tensor r(out);
  ConstRowMap wm(weight.value().data().data(), xs.c, cout * 4);
  RowMatrix y(cout * 4, hw);
  for (int n = 0; n < xs.n; ++n) {
    ConstRowMap xn(x.value().data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw, xs.c, hw);
    y.noalias() = wm.transpose() * xn;
    for (int o = 0; o < cout; ++o) {
      const double b = bias.defined() ? bias.value().data()[o] : 0.0;
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb)
          for (int i = 0; i < xs.h; ++i)
            for (int j = 0; j < xs.w; ++j)
              r(n, o, 2 * i + a, 2 * j + bb) = y(o * 4 + a * 2 + bb, i * xs.w + j) + b;
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(r), parents, [xs, ws, cout, hw](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pw = *nd.parents[1];
    Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
    ConstRowMap wm(pw.value.data().data(), xs.c, cout * 4);
    Tensor dx(xs);
    Tensor dw(ws);
    Tensor db(Shape{1, cout, 1, 1});
    RowMatrix dy(cout * 4, hw);
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < cout; ++o)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb)
            for (int i = 0; i < xs.h; ++i)
              for (int j = 0; j < xs.w; ++j) dy(o * 4 + a * 2 + bb, i * xs.w + j) = nd.grad(n, o, 2 * i + a, 2 * j + bb);
      ConstRowMap xn(px.value.data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw, xs.c, hw);
      if (px.requires_grad) {
        RowMap(dx.data().data() + static_cast<std::ptrdiff_t>(n) * xs.c * hw, xs.c, hw).noalias() = wm * dy;
      }
      if (pw.requires_grad) RowMap(dw.data().data(), xs.c, cout * 4).noalias() += xn * dy.transpose();
      if (pb != nullptr && pb->requires_grad) {
        for (int o = 0; o < cout; ++o) db.data()[o] += dy.middleRows(o * 4, 4).sum();
      }
    }
    if (px.requires_grad) px.accumulate(dx);
    if (pw.requires_grad) pw.accumulate(dw);
    if (pb != nullptr && pb->requires_grad) pb->accumulate(db);
  });
}

Var avg_pool2(const Var& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2 needs even spatial dims, got " + s.str());
  const Shape out{s.n, s.c, s.h / 2, s.w / 2};
  Tensor r(out);
  const Tensor& v = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j)
          r(n, c, i, j) = 0.25 * (v(n, c, 2 * i, 2 * j) + v(n, c, 2 * i + 1, 2 * j) + v(n, c, 2 * i, 2 * j + 1) +
                                  v(n, c, 2 * i + 1, 2 * j + 1));
  return make_result(std::move(r), {x}, [s, out](Node& nd) {
    Tensor g(s);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < out.h; ++i)
          for (int j = 0; j < out.w; ++j) {
            const double q = 0.25 * nd.grad(n, c, i, j);
            g(n, c, 2 * i, 2 * j) = q;
            g(n, c, 2 * i + 1, 2 * j) = q;
            g(n, c, 2 * i, 2 * j + 1) = q;
            g(n, c, 2 * i + 1, 2 * j + 1) = q;
          }
    nd.parents[0]->accumulate(g);
  });
}

Var instance_norm(const Var& x, double eps) {
  const Shape s = x.shape();
  const auto hw = static_cast<Eigen::Index>(s.h) * s.w;
  const Eigen::Index groups = static_cast<Eigen::Index>(s.n) * s.c;
  Tensor r(s);
  auto inv_std = std::make_shared<Eigen::ArrayXd>(groups);
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto seg = x.value().data().segment(g * hw, hw);
    const double mu = seg.mean();
    const double var = (seg - mu).square().mean();
    (*inv_std)[g] = 1.0 / std::sqrt(var + eps);
    r.data().segment(g * hw, hw) = (seg - mu) * (*inv_std)[g];
  }
  return make_result(std::move(r), {x}, [s, hw, groups, inv_std](Node& nd) {
    Tensor gx(s);
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto dy = nd.grad.data().segment(g * hw, hw);
      const auto y = nd.value.data().segment(g * hw, hw);
      gx.data().segment(g * hw, hw) = (*inv_std)[g] * (dy - dy.mean() - y * (dy * y).mean());
    }
    nd.parents[0]->accumulate(gx);
  });
}

}  // namespace cvdm::ad
