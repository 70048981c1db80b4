// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "shadowkit/kernels.hpp"

namespace shadowkit::nn {

namespace {

constexpr std::ptrdiff_t kParallelMin = 1 << 15;

thread_local bool g_grad_enabled = true;

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Var<T>& x, int rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Number of elements b broadcasts over, validated against x's trailing dims.
template <typename T>
std::size_t trailing_inner(const Var<T>& x, const Var<T>& b, const char* op) {
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  if (b.value().size() == 1) return 1;
  bool ok = bs.size() <= xs.size();
  for (std::size_t i = 0; ok && i < bs.size(); ++i) ok = bs[bs.size() - 1 - i] == xs[xs.size() - 1 - i];
  if (!ok) throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(bs) + " onto " + shape_str(xs));
  return b.value().size();
}

template <typename T, typename F>
Tensor<T> unary(const Var<T>& x, F f) {
  Tensor<T> y(x.shape());
  const T* xp = x.value().ptr();
  T* yp = y.ptr();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for simd schedule(static) if (n > kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) yp[i] = f(xp[i]);
  return y;
}

}  // namespace

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { g_grad_enabled = on; }

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) throw ShapeError("backward: seed shape mismatch");
  // Iterative post-order DFS for a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node<T>* r = root.node().get();
  auto& g = r->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) {
      n->backward_fn(*n);
      // Interior grads are dead once pushed upstream.
      n->grad = Tensor<T>();
    }
  }
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
  backward(root, Tensor<T>(root.shape(), T(1)));
}

// ---------------------------------------------------------------------------
// Elementwise binary

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
  const T *ap = a.value().ptr(), *bp = b.value().ptr();
  T* yp = y.ptr();
#pragma omp parallel for simd schedule(static) if (n > kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& gp = p->grad_buffer();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
  const T *ap = a.value().ptr(), *bp = b.value().ptr();
  T* yp = y.ptr();
#pragma omp parallel for simd schedule(static) if (n > kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) yp[i] = ap[i] * bp[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "div");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] / b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
      }
    }
  });
}

template <typename T>
Var<T> add_trailing(const Var<T>& x, const Var<T>& b) {
  const std::size_t inner = trailing_inner(x, b, "add_trailing");
  Tensor<T> y(x.shape());
  const std::size_t outer = y.size() / inner;
  const T *xp = x.value().ptr(), *bp = b.value().ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static) if (static_cast<std::ptrdiff_t>(outer * inner) > kParallelMin)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(outer); ++o) {
    for (std::size_t i = 0; i < inner; ++i) yp[o * inner + i] = xp[o * inner + i] + bp[i];
  }
  return make_result<T>(std::move(y), {x, b}, [inner, outer](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
      }
    }
  });
}

template <typename T>
Var<T> mul_trailing(const Var<T>& x, const Var<T>& b) {
  const std::size_t inner = trailing_inner(x, b, "mul_trailing");
  Tensor<T> y(x.shape());
  const std::size_t outer = y.size() / inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] = x.value()[o * inner + i] * b.value()[i];
  }
  return make_result<T>(std::move(y), {x, b}, [inner, outer](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) g[o * inner + i] += self.grad[o * inner + i] * pb.value[i];
      }
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i] * px.value[o * inner + i];
      }
    }
  });
}

template <typename T>
Var<T> mul_rows(const Var<T>& x, const Var<T>& m) {
  const std::size_t rows = m.value().size();
  if (rows == 0 || x.value().size() % rows != 0) {
    throw ShapeError("mul_rows: " + shape_str(m.shape()) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t cols = x.value().size() / rows;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = x.value()[r * cols + c] * m.value()[r];
  }
  return make_result<T>(std::move(y), {x, m}, [rows, cols](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pm = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * pm.value[r];
      }
    }
    if (pm.requires_grad) {
      auto& g = pm.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        T acc = 0;
        for (std::size_t c = 0; c < cols; ++c) acc += self.grad[r * cols + c] * px.value[r * cols + c];
        g[r] += acc;
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> y = unary(x, [s](T v) { return v * s; });
  return make_result<T>(std::move(y), {x}, [s](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
  Tensor<T> y = unary(x, [s](T v) { return v + s; });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) { return v > T(0) ? v : T(0); });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += px.value[i] > T(0) ? self.grad[i] : T(0);
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> y = unary(x, [slope](T v) { return v > T(0) ? v : slope * v; });
  return make_result<T>(std::move(y), {x}, [slope](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += px.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

namespace {
template <typename T>
constexpr T kGeluK0 = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluK1 = static_cast<T>(0.044715);
}  // namespace

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) {
    return T(0.5) * v * (T(1) + std::tanh(kGeluK0<T> * (v + kGeluK1<T> * v * v * v)));
  });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = px.value[i];
      const T t = std::tanh(kGeluK0<T> * (v + kGeluK1<T> * v * v * v));
      const T d = T(0.5) * (T(1) + t) +
                  T(0.5) * v * (T(1) - t * t) * kGeluK0<T> * (T(1) + T(3) * kGeluK1<T> * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) { return std::log(v); });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / px.value[i];
  });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) { return std::sqrt(v); });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * T(0.5) / self.value[i];
  });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  Tensor<T> y = unary(x, [](T v) { return v * v; });
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * T(2) * px.value[i];
  });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> y = unary(x, [lo, hi](T v) { return std::clamp(v, lo, hi); });
  return make_result<T>(std::move(y), {x}, [lo, hi](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = px.value[i];
      if (v >= lo && v <= hi) g[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return make_result<T>(Tensor<T>({1}, acc), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.value().empty()) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> sum_per_sample(const Var<T>& x) {
  const int n = x.dim(0);
  const std::size_t per = x.value().size() / n;
  Tensor<T> y({n});
  for (int s = 0; s < n; ++s) {
    T acc = 0;
    for (std::size_t i = 0; i < per; ++i) acc += x.value()[s * per + i];
    y[s] = acc;
  }
  return make_result<T>(std::move(y), {x}, [n, per](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < per; ++i) g[s * per + i] += self.grad[s];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require_rank(w, 2, "linear weight");
  const int k = w.dim(0), m = w.dim(1);
  if (x.dim(-1) != k) throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b.defined() && b.value().size() != static_cast<std::size_t>(m)) throw ShapeError("linear: bias size");
  const int rows = static_cast<int>(x.value().size() / k);
  Shape ys = x.shape();
  ys.back() = m;
  Tensor<T> y(ys);
  kernels::parallel::gemm<T>(false, false, rows, m, k, T(1), x.value().ptr(), w.value().ptr(), T(0), y.ptr());
  if (b.defined()) {
    for (int r = 0; r < rows; ++r) {
      for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(r) * m + j] += b.value()[j];
    }
  }
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result<T>(std::move(y), std::move(parents), [rows, k, m](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      kernels::parallel::gemm<T>(false, true, rows, k, m, T(1), self.grad.ptr(), pw.value.ptr(), T(1),
                                 px.grad_buffer().ptr());
    }
    if (pw.requires_grad) {
      kernels::parallel::gemm<T>(true, false, k, m, rows, T(1), px.value.ptr(), self.grad.ptr(), T(1),
                                 pw.grad_buffer().ptr());
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < m; ++j) gb[j] += self.grad[static_cast<std::size_t>(r) * m + j];
      }
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int n = trans_b ? b.dim(1) : b.dim(2);
  const int bk = trans_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> y({batch, m, n});
  const std::size_t sa = static_cast<std::size_t>(m) * k, sb = static_cast<std::size_t>(k) * n,
                    sy = static_cast<std::size_t>(m) * n;
  for (int i = 0; i < batch; ++i) {
    kernels::parallel::gemm<T>(false, trans_b, m, n, k, T(1), a.value().ptr() + i * sa, b.value().ptr() + i * sb,
                               T(0), y.ptr() + i * sy);
  }
  return make_result<T>(std::move(y), {a, b}, [=](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int i = 0; i < batch; ++i) {
      const T* g = self.grad.ptr() + i * sy;
      if (pa.requires_grad) {
        // ga = g * op(b)^T
        kernels::parallel::gemm<T>(false, !trans_b, m, k, n, T(1), g, pb.value.ptr() + i * sb, T(1),
                                   pa.grad_buffer().ptr() + i * sa);
      }
      if (pb.requires_grad) {
        if (trans_b) {
          kernels::parallel::gemm<T>(true, false, n, k, m, T(1), g, pa.value.ptr() + i * sa, T(1),
                                     pb.grad_buffer().ptr() + i * sb);
        } else {
          kernels::parallel::gemm<T>(true, false, k, n, m, T(1), pa.value.ptr() + i * sa, g, T(1),
                                     pb.grad_buffer().ptr() + i * sb);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  kernels::ConvGeometry g;
  g.n = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cin = x.dim(3);
  g.kh = w.dim(0);
  g.kw = w.dim(1);
  g.cout = w.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (w.dim(2) != g.cin) {
    throw ShapeError("conv2d: input channels " + std::to_string(g.cin) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && b.value().size() != static_cast<std::size_t>(g.cout)) throw ShapeError("conv2d: bias size");
  if (g.out_h() < 1 || g.out_w() < 1) throw ShapeError("conv2d: input too small " + shape_str(x.shape()));
  Tensor<T> y({g.n, g.out_h(), g.out_w(), g.cout});
  kernels::parallel::conv2d_forward<T>(g, x.value().ptr(), w.value().ptr(), b.defined() ? b.value().ptr() : nullptr,
                                       y.ptr());
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result<T>(std::move(y), std::move(parents), [g](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    T* dx = px.requires_grad ? px.grad_buffer().ptr() : nullptr;
    T* dw = pw.requires_grad ? pw.grad_buffer().ptr() : nullptr;
    T* db = (self.parents.size() > 2 && self.parents[2]->requires_grad) ? self.parents[2]->grad_buffer().ptr()
                                                                        : nullptr;
    kernels::parallel::conv2d_backward<T>(g, px.value.ptr(), pw.value.ptr(), self.grad.ptr(), dx, dw, db);
  });
}

template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require_rank(x, 4, "conv_transpose2x2 input");
  require_rank(w, 4, "conv_transpose2x2 weight");
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const int cout = w.dim(3);
  if (w.dim(0) != cin || w.dim(1) != 2 || w.dim(2) != 2) {
    throw ShapeError("conv_transpose2x2: weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
  const int rows = n * h * wd;
  std::vector<T> z(static_cast<std::size_t>(rows) * 4 * cout);
  kernels::parallel::gemm<T>(false, false, rows, 4 * cout, cin, T(1), x.value().ptr(), w.value().ptr(), T(0),
                             z.data());
  Tensor<T> y({n, 2 * h, 2 * wd, cout});
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < wd; ++j) {
        const T* zr = z.data() + ((static_cast<std::size_t>(s) * h + i) * wd + j) * 4 * cout;
        for (int a = 0; a < 2; ++a) {
          for (int c = 0; c < 2; ++c) {
            T* yr = y.ptr() + ((static_cast<std::size_t>(s) * 2 * h + 2 * i + a) * 2 * wd + 2 * j + c) * cout;
            const T* src = zr + (a * 2 + c) * cout;
            for (int o = 0; o < cout; ++o) yr[o] = src[o] + (b.defined() ? b.value()[o] : T(0));
          }
        }
      }
    }
  }
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result<T>(std::move(y), std::move(parents), [=](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    std::vector<T> gz(static_cast<std::size_t>(rows) * 4 * cout);
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wd; ++j) {
          T* zr = gz.data() + ((static_cast<std::size_t>(s) * h + i) * wd + j) * 4 * cout;
          for (int a = 0; a < 2; ++a) {
            for (int c = 0; c < 2; ++c) {
              const T* gr =
                  self.grad.ptr() + ((static_cast<std::size_t>(s) * 2 * h + 2 * i + a) * 2 * wd + 2 * j + c) * cout;
              std::copy(gr, gr + cout, zr + (a * 2 + c) * cout);
            }
          }
        }
      }
    }
    if (px.requires_grad) {
      kernels::parallel::gemm<T>(false, true, rows, cin, 4 * cout, T(1), gz.data(), pw.value.ptr(), T(1),
                                 px.grad_buffer().ptr());
    }
    if (pw.requires_grad) {
      kernels::parallel::gemm<T>(true, false, cin, 4 * cout, rows, T(1), px.value.ptr(), gz.data(), T(1),
                                 pw.grad_buffer().ptr());
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      const std::size_t total = self.grad.size() / cout;
      for (std::size_t r = 0; r < total; ++r) {
        for (int o = 0; o < cout; ++o) gb[o] += self.grad[r * cout + o];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

// Normalises `groups` independent sets of `count` elements; element e of
// group q lives at base(q) + e * stride.
template <typename T, typename Index>
void normalize_groups(const T* x, T* y, T* inv_std, int groups, int count, T eps, Index index) {
#pragma omp parallel for schedule(static) if (static_cast<std::ptrdiff_t>(groups) * count > kParallelMin)
  for (int q = 0; q < groups; ++q) {
    double mu = 0;
    for (int e = 0; e < count; ++e) mu += x[index(q, e)];
    mu /= count;
    double var = 0;
    for (int e = 0; e < count; ++e) {
      const double d = x[index(q, e)] - mu;
      var += d * d;
    }
    var /= count;
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[q] = static_cast<T>(is);
    for (int e = 0; e < count; ++e) y[index(q, e)] = static_cast<T>((x[index(q, e)] - mu) * is);
  }
}

template <typename T, typename Index>
void normalize_groups_backward(const T* y, const T* gy, const T* inv_std, T* gx, int groups, int count, Index index) {
  for (int q = 0; q < groups; ++q) {
    double mg = 0, mgy = 0;
    for (int e = 0; e < count; ++e) {
      mg += gy[index(q, e)];
      mgy += gy[index(q, e)] * y[index(q, e)];
    }
    mg /= count;
    mgy /= count;
    for (int e = 0; e < count; ++e) {
      const auto i = index(q, e);
      gx[i] += static_cast<T>(inv_std[q] * (gy[i] - mg - y[i] * mgy));
    }
  }
}

}  // namespace

template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps) {
  require_rank(x, 4, "instance_norm");
  const int n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  auto index = [hw, c](int q, int e) {
    const int s = q / c, ch = q % c;
    return (static_cast<std::size_t>(s) * hw + e) * c + ch;
  };
  Tensor<T> y(x.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(n) * c);
  normalize_groups(x.value().ptr(), y.ptr(), inv_std.data(), n * c, hw, eps, index);
  return make_result<T>(std::move(y), {x}, [inv_std = std::move(inv_std), n, c, hw, index](Node<T>& self) {
    auto& px = *self.parents[0];
    normalize_groups_backward(self.value.ptr(), self.grad.ptr(), inv_std.data(), px.grad_buffer().ptr(), n * c, hw,
                              index);
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, T eps) {
  const int d = x.dim(-1);
  const int rows = static_cast<int>(x.value().size() / d);
  auto index = [d](int q, int e) { return static_cast<std::size_t>(q) * d + e; };
  Tensor<T> y(x.shape());
  std::vector<T> inv_std(rows);
  normalize_groups(x.value().ptr(), y.ptr(), inv_std.data(), rows, d, eps, index);
  return make_result<T>(std::move(y), {x}, [inv_std = std::move(inv_std), rows, d, index](Node<T>& self) {
    auto& px = *self.parents[0];
    normalize_groups_backward(self.value.ptr(), self.grad.ptr(), inv_std.data(), px.grad_buffer().ptr(), rows, d,
                              index);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  const int d = x.dim(-1);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(x.value().size() / d);
  Tensor<T> y(x.shape());
  const T* xp = x.value().ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static) if (rows * d > kParallelMin)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * d;
    T* yr = yp + r * d;
    T mx = *std::max_element(xr, xr + d);
    T s = 0;
    for (int j = 0; j < d; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    for (int j = 0; j < d; ++j) yr[j] /= s;
  }
  return make_result<T>(std::move(y), {x}, [rows, d](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const T* yr = self.value.ptr() + r * d;
      const T* gr = self.grad.ptr() + r * d;
      T dot = 0;
      for (int j = 0; j < d; ++j) dot += gr[j] * yr[j];
      for (int j = 0; j < d; ++j) g[r * d + j] += yr[j] * (gr[j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

namespace {

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return a;
}

std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, int axis) {
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, inner};
}

}  // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const int rank = xs[0].value().rank();
  const int ax = normalize_axis(axis, rank);
  Shape out = xs[0].shape();
  out[ax] = 0;
  std::vector<int> lens;
  for (const auto& x : xs) {
    Shape s = x.shape();
    if (static_cast<int>(s.size()) != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != ax && s[i] != xs[0].shape()[i]) {
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(xs[0].shape()));
      }
    }
    lens.push_back(s[ax]);
    out[ax] += s[ax];
  }
  const auto [outer, inner] = outer_inner(out, ax);
  const std::size_t row = static_cast<std::size_t>(out[ax]) * inner;
  Tensor<T> y(out);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t len = static_cast<std::size_t>(lens[k]) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(xs[k].value().ptr() + o * len, len, y.ptr() + o * row + offset);
    }
    offset += len;
  }
  return make_result<T>(std::move(y), xs, [lens, outer, inner, row](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t len = static_cast<std::size_t>(lens[k]) * inner;
      if (self.parents[k]->requires_grad) {
        auto& g = self.parents[k]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < len; ++i) g[o * len + i] += self.grad[o * row + offset + i];
        }
      }
      offset += len;
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int begin, int end) {
  const int ax = normalize_axis(axis, x.value().rank());
  if (begin < 0 || end > x.dim(ax) || begin >= end) {
    throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(x.shape()));
  }
  Shape out = x.shape();
  out[ax] = end - begin;
  const auto [outer, inner] = outer_inner(x.shape(), ax);
  const std::size_t src_row = static_cast<std::size_t>(x.dim(ax)) * inner;
  const std::size_t len = static_cast<std::size_t>(end - begin) * inner;
  const std::size_t off = static_cast<std::size_t>(begin) * inner;
  Tensor<T> y(out);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.value().ptr() + o * src_row + off, len, y.ptr() + o * len);
  return make_result<T>(std::move(y), {x}, [outer, src_row, len, off](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < len; ++i) g[o * src_row + off + i] += self.grad[o * len + i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> avg_pool(const Var<T>& x, int f) {
  require_rank(x, 4, "avg_pool");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (f < 1 || h % f != 0 || w % f != 0) {
    throw ShapeError("avg_pool: factor " + std::to_string(f) + " does not divide " + shape_str(x.shape()));
  }
  const int oh = h / f, ow = w / f;
  const T inv = T(1) / static_cast<T>(f * f);
  Tensor<T> y({n, oh, ow, c});
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const T* src = x.value().ptr() + ((static_cast<std::size_t>(s) * h + i) * w + j) * c;
        T* dst = y.ptr() + ((static_cast<std::size_t>(s) * oh + i / f) * ow + j / f) * c;
        for (int k = 0; k < c; ++k) dst[k] += src[k] * inv;
      }
    }
  }
  return make_result<T>(std::move(y), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          T* dst = g.ptr() + ((static_cast<std::size_t>(s) * h + i) * w + j) * c;
          const T* src = self.grad.ptr() + ((static_cast<std::size_t>(s) * oh + i / f) * ow + j / f) * c;
          for (int k = 0; k < c; ++k) dst[k] += src[k] * inv;
        }
      }
    }
  });
}

template <typename T>
Var<T> rfft2(const Var<T>& x) {
  require_rank(x, 4, "rfft2");
  kernels::SpectrumGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (g.h < 2 || g.w < 2) throw ShapeError("rfft2: spatial dims must be >= 2, got " + shape_str(x.shape()));
  Tensor<T> y({g.n, g.h, g.wf(), 2 * g.c});
  kernels::parallel::rfft2<T>(g, x.value().ptr(), y.ptr());
  return make_result<T>(std::move(y), {x}, [g](Node<T>& self) {
    kernels::parallel::rfft2_adjoint<T>(g, self.grad.ptr(), self.parents[0]->grad_buffer().ptr());
  });
}

template <typename T>
Var<T> irfft2(const Var<T>& spec, int w) {
  require_rank(spec, 4, "irfft2");
  kernels::SpectrumGeometry g{spec.dim(0), spec.dim(1), w, spec.dim(3) / 2};
  if (g.h < 2 || w < 2 || spec.dim(2) != g.wf() || spec.dim(3) % 2 != 0) {
    throw ShapeError("irfft2: spectrum " + shape_str(spec.shape()) + " incompatible with width " + std::to_string(w));
  }
  Tensor<T> y({g.n, g.h, g.w, g.c});
  kernels::parallel::irfft2<T>(g, spec.value().ptr(), y.ptr());
  return make_result<T>(std::move(y), {spec}, [g](Node<T>& self) {
    kernels::parallel::irfft2_adjoint<T>(g, self.grad.ptr(), self.parents[0]->grad_buffer().ptr());
  });
}

template <typename T>
Var<T> split_heads(const Var<T>& x, int heads) {
  require_rank(x, 3, "split_heads");
  const int n = x.dim(0), t = x.dim(1), dm = x.dim(2);
  if (dm % heads != 0) throw ShapeError("split_heads: width not divisible by heads");
  const int d = dm / heads;
  Tensor<T> y({n * heads, t, d});
  auto src = [=](int s, int hd, int i, int j) { return (static_cast<std::size_t>(s) * t + i) * dm + hd * d + j; };
  auto dst = [=](int s, int hd, int i, int j) {
    return ((static_cast<std::size_t>(s) * heads + hd) * t + i) * d + j;
  };
  for (int s = 0; s < n; ++s)
    for (int hd = 0; hd < heads; ++hd)
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) y[dst(s, hd, i, j)] = x.value()[src(s, hd, i, j)];
  return make_result<T>(std::move(y), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int s = 0; s < n; ++s)
      for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < d; ++j) g[src(s, hd, i, j)] += self.grad[dst(s, hd, i, j)];
  });
}

template <typename T>
Var<T> merge_heads(const Var<T>& x, int heads) {
  require_rank(x, 3, "merge_heads");
  const int nh = x.dim(0), t = x.dim(1), d = x.dim(2);
  if (nh % heads != 0) throw ShapeError("merge_heads: batch not divisible by heads");
  const int n = nh / heads, dm = d * heads;
  Tensor<T> y({n, t, dm});
  auto src = [=](int s, int hd, int i, int j) {
    return ((static_cast<std::size_t>(s) * heads + hd) * t + i) * d + j;
  };
  auto dst = [=](int s, int hd, int i, int j) { return (static_cast<std::size_t>(s) * t + i) * dm + hd * d + j; };
  for (int s = 0; s < n; ++s)
    for (int hd = 0; hd < heads; ++hd)
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) y[dst(s, hd, i, j)] = x.value()[src(s, hd, i, j)];
  return make_result<T>(std::move(y), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int s = 0; s < n; ++s)
      for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < d; ++j) g[src(s, hd, i, j)] += self.grad[dst(s, hd, i, j)];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<int>& index, int count) {
  require_rank(x, 3, "gather_rows");
  const int n = x.dim(0), t = x.dim(1), d = x.dim(2);
  if (index.size() != static_cast<std::size_t>(n) * count) throw ShapeError("gather_rows: index size");
  for (int v : index) {
    if (v < 0 || v >= t) throw ShapeError("gather_rows: index " + std::to_string(v) + " out of range");
  }
  Tensor<T> y({n, count, d});
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < count; ++i) {
      const int src = index[static_cast<std::size_t>(s) * count + i];
      std::copy_n(x.value().ptr() + (static_cast<std::size_t>(s) * t + src) * d, d,
                  y.ptr() + (static_cast<std::size_t>(s) * count + i) * d);
    }
  }
  return make_result<T>(std::move(y), {x}, [index, n, t, d, count](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < count; ++i) {
        const int src = index[static_cast<std::size_t>(s) * count + i];
        T* dst = g.ptr() + (static_cast<std::size_t>(s) * t + src) * d;
        const T* gr = self.grad.ptr() + (static_cast<std::size_t>(s) * count + i) * d;
        for (int j = 0; j < d; ++j) dst[j] += gr[j];
      }
    }
  });
}

#define SHADOWKIT_INSTANTIATE(T)                                                   \
  template void backward<T>(const Var<T>&);                                        \
  template void backward<T>(const Var<T>&, const Tensor<T>&);                      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> add_trailing<T>(const Var<T>&, const Var<T>&);                   \
  template Var<T> mul_trailing<T>(const Var<T>&, const Var<T>&);                   \
  template Var<T> mul_rows<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> scale<T>(const Var<T>&, T);                                      \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                 \
  template Var<T> relu<T>(const Var<T>&);                                          \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                 \
  template Var<T> gelu<T>(const Var<T>&);                                          \
  template Var<T> sigmoid<T>(const Var<T>&);                                       \
  template Var<T> log<T>(const Var<T>&);                                           \
  template Var<T> sqrt<T>(const Var<T>&);                                          \
  template Var<T> square<T>(const Var<T>&);                                        \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                   \
  template Var<T> sum<T>(const Var<T>&);                                           \
  template Var<T> mean<T>(const Var<T>&);                                          \
  template Var<T> sum_per_sample<T>(const Var<T>&);                                \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);          \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&, bool);                      \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int); \
  template Var<T> conv_transpose2x2<T>(const Var<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> instance_norm<T>(const Var<T>&, T);                              \
  template Var<T> layer_norm<T>(const Var<T>&, T);                                 \
  template Var<T> softmax<T>(const Var<T>&);                                       \
  template Var<T> concat<T>(const std::vector<Var<T>>&, int);                      \
  template Var<T> slice<T>(const Var<T>&, int, int, int);                          \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                \
  template Var<T> avg_pool<T>(const Var<T>&, int);                                 \
  template Var<T> rfft2<T>(const Var<T>&);                                         \
  template Var<T> irfft2<T>(const Var<T>&, int);                                   \
  template Var<T> split_heads<T>(const Var<T>&, int);                              \
  template Var<T> merge_heads<T>(const Var<T>&, int);                              \
  template Var<T> gather_rows<T>(const Var<T>&, const std::vector<int>&, int);

SHADOWKIT_INSTANTIATE(float)
SHADOWKIT_INSTANTIATE(double)
#undef SHADOWKIT_INSTANTIATE

}  // namespace shadowkit::nn
