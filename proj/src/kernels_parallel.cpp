// SPDX-License-Identifier: Apache-2.0
#include <fftw3.h>
#include <omp.h>

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "shadowkit/kernels.hpp"

namespace shadowkit::kernels {

const double* ssim_gaussian_taps() {
  static const std::array<double, kSsimWindow> taps = [] {
    std::array<double, kSsimWindow> t{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      t[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps.data();
}

namespace parallel {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T, typename A, typename B>
void gemm_assign(MutMap<T>& c, T alpha, const A& a, const B& b, T beta) {
  if (beta == T(0)) {
    c.noalias() = alpha * (a * b);
  } else {
    if (beta != T(1)) c *= beta;
    c.noalias() += alpha * (a * b);
  }
}

// Sample-local im2col: cols[(oy*ow+ox), (ky*kw+kx)*cin + ci].
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  const int k = g.kh * g.kw * g.cin;
#pragma omp parallel for schedule(static) if (oh * ow * k > 32768)
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = cols + (static_cast<std::size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          T* dst = row + (ky * g.kw + kx) * g.cin;
          if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
            std::memset(dst, 0, sizeof(T) * g.cin);
          } else {
            std::memcpy(dst, x + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin, sizeof(T) * g.cin);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const int oh = g.out_h(), ow = g.out_w();
  const int k = g.kh * g.kw * g.cin;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = cols + (static_cast<std::size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.w) continue;
          const T* src = row + (ky * g.kw + kx) * g.cin;
          T* dst = dx + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
          for (int ci = 0; ci < g.cin; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c) {
  MutMap<T> cm(c, m, n);
  if (k == 0) {
    if (beta == T(0)) {
      cm.setZero();
    } else {
      cm *= beta;
    }
    return;
  }
  ConstMap<T> am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMap<T> bm(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) gemm_assign<T>(cm, alpha, am, bm, beta);
  if (!trans_a && trans_b) gemm_assign<T>(cm, alpha, am, bm.transpose(), beta);
  if (trans_a && !trans_b) gemm_assign<T>(cm, alpha, am.transpose(), bm, beta);
  if (trans_a && trans_b) gemm_assign<T>(cm, alpha, am.transpose(), bm.transpose(), beta);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const int oh = g.out_h(), ow = g.out_w();
  const int rows = oh * ow;
  const int k = g.kh * g.kw * g.cin;
  const std::size_t in_stride = static_cast<std::size_t>(g.h) * g.w * g.cin;
  const std::size_t out_stride = static_cast<std::size_t>(rows) * g.cout;
  std::vector<T> cols;
  if (!is_pointwise(g)) cols.resize(static_cast<std::size_t>(rows) * k);
  for (int n = 0; n < g.n; ++n) {
    const T* xs = x + n * in_stride;
    T* ys = y + n * out_stride;
    const T* src = xs;
    if (!is_pointwise(g)) {
      im2col(g, xs, cols.data());
      src = cols.data();
    }
    gemm<T>(false, false, rows, g.cout, k, T(1), src, w, T(0), ys);
    if (b) {
      MutMap<T> ym(ys, rows, g.cout);
      ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b, g.cout);
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const int oh = g.out_h(), ow = g.out_w();
  const int rows = oh * ow;
  const int k = g.kh * g.kw * g.cin;
  const std::size_t in_stride = static_cast<std::size_t>(g.h) * g.w * g.cin;
  const std::size_t out_stride = static_cast<std::size_t>(rows) * g.cout;
  const bool pw = is_pointwise(g);
  std::vector<T> cols(pw ? 0 : static_cast<std::size_t>(rows) * k);
  std::vector<T> dcols(pw || !dx ? 0 : static_cast<std::size_t>(rows) * k);
  for (int n = 0; n < g.n; ++n) {
    const T* xs = x + n * in_stride;
    const T* dys = dy + n * out_stride;
    if (dw) {
      const T* src = xs;
      if (!pw) {
        im2col(g, xs, cols.data());
        src = cols.data();
      }
      gemm<T>(true, false, k, g.cout, rows, T(1), src, dys, T(1), dw);
    }
    if (dx) {
      if (pw) {
        gemm<T>(false, true, rows, g.cin, g.cout, T(1), dys, w, T(1), dx + n * in_stride);
      } else {
        gemm<T>(false, true, rows, k, g.cout, T(1), dys, w, T(0), dcols.data());
        col2im_add(g, dcols.data(), dx + n * in_stride);
      }
    }
    if (db) {
      // Plain row-order sum: Eigen's colwise().sum() picks its reduction
      // order from buffer alignment, so results would vary with the heap.
      for (int r = 0; r < rows; ++r) {
        const T* row = dys + static_cast<std::size_t>(r) * g.cout;
        for (int co = 0; co < g.cout; ++co) db[co] += row[co];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// FFTW-backed spectra

namespace {

template <typename T>
struct Fftw;

template <>
struct Fftw<double> {
  using plan = fftw_plan;
  using complex = fftw_complex;
  static void* alloc(std::size_t bytes) { return fftw_malloc(bytes); }
  static void release(void* p) { fftw_free(p); }
  static plan r2c_2d(int h, int w, double* in, complex* out) {
    return fftw_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE);
  }
  static plan c2c_cols(int h, int wf, complex* buf) {
    int n[] = {h};
    return fftw_plan_many_dft(1, n, wf, buf, nullptr, wf, 1, buf, nullptr, wf, 1, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  static plan c2r_rows(int h, int w, complex* in, double* out) {
    int n[] = {w};
    return fftw_plan_many_dft_c2r(1, n, h, in, nullptr, 1, w / 2 + 1, out, nullptr, 1, w, FFTW_ESTIMATE);
  }
  static void exec_r2c(plan p, double* in, complex* out) { fftw_execute_dft_r2c(p, in, out); }
  static void exec_c2c(plan p, complex* in, complex* out) { fftw_execute_dft(p, in, out); }
  static void exec_c2r(plan p, complex* in, double* out) { fftw_execute_dft_c2r(p, in, out); }
};

template <>
struct Fftw<float> {
  using plan = fftwf_plan;
  using complex = fftwf_complex;
  static void* alloc(std::size_t bytes) { return fftwf_malloc(bytes); }
  static void release(void* p) { fftwf_free(p); }
  static plan r2c_2d(int h, int w, float* in, complex* out) {
    return fftwf_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE);
  }
  static plan c2c_cols(int h, int wf, complex* buf) {
    int n[] = {h};
    return fftwf_plan_many_dft(1, n, wf, buf, nullptr, wf, 1, buf, nullptr, wf, 1, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  static plan c2r_rows(int h, int w, complex* in, float* out) {
    int n[] = {w};
    return fftwf_plan_many_dft_c2r(1, n, h, in, nullptr, 1, w / 2 + 1, out, nullptr, 1, w, FFTW_ESTIMATE);
  }
  static void exec_r2c(plan p, float* in, complex* out) { fftwf_execute_dft_r2c(p, in, out); }
  static void exec_c2c(plan p, complex* in, complex* out) { fftwf_execute_dft(p, in, out); }
  static void exec_c2r(plan p, complex* in, float* out) { fftwf_execute_dft_c2r(p, in, out); }
};

// FFTW buffers sized for one h x w plane.
template <typename T>
struct PlaneBuffers {
  using F = Fftw<T>;
  T* real = nullptr;
  typename F::complex* spec = nullptr;
  PlaneBuffers(int h, int w) {
    real = static_cast<T*>(F::alloc(sizeof(T) * h * w));
    spec = static_cast<typename F::complex*>(F::alloc(sizeof(typename F::complex) * h * (w / 2 + 1)));
  }
  ~PlaneBuffers() {
    F::release(real);
    F::release(spec);
  }
  PlaneBuffers(const PlaneBuffers&) = delete;
  PlaneBuffers& operator=(const PlaneBuffers&) = delete;
};

template <typename T>
struct PlanSet {
  typename Fftw<T>::plan r2c;
  typename Fftw<T>::plan c2c;
  typename Fftw<T>::plan c2r;
};

// Plans are created once per (h, w) and never destroyed; the planner is not
// thread-safe, execution is.
template <typename T>
const PlanSet<T>& plans_for(int h, int w) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, PlanSet<T>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({h, w});
  if (it != cache.end()) return it->second;
  PlaneBuffers<T> buf(h, w);
  PlanSet<T> p;
  p.r2c = Fftw<T>::r2c_2d(h, w, buf.real, buf.spec);
  p.c2c = Fftw<T>::c2c_cols(h, w / 2 + 1, buf.spec);
  p.c2r = Fftw<T>::c2r_rows(h, w, buf.spec, buf.real);
  return cache.emplace(std::make_pair(h, w), p).first->second;
}

// Half-spectrum column weight: 1 for DC and (even w) Nyquist, 2 otherwise.
inline int column_weight(int k, int w) { return (k == 0 || (w % 2 == 0 && k == w / 2)) ? 1 : 2; }

}  // namespace

template <typename T>
void rfft2(const SpectrumGeometry& g, const T* x, T* spec) {
  const auto& p = plans_for<T>(g.h, g.w);
  const int wf = g.wf();
#pragma omp parallel
  {
    PlaneBuffers<T> buf(g.h, g.w);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.c; ++c) {
        const T* xs = x + static_cast<std::size_t>(n) * g.h * g.w * g.c;
        for (int i = 0; i < g.h * g.w; ++i) buf.real[i] = xs[static_cast<std::size_t>(i) * g.c + c];
        Fftw<T>::exec_r2c(p.r2c, buf.real, buf.spec);
        T* ss = spec + static_cast<std::size_t>(n) * g.h * wf * 2 * g.c;
        for (int i = 0; i < g.h * wf; ++i) {
          ss[static_cast<std::size_t>(i) * 2 * g.c + c] = buf.spec[i][0];
          ss[static_cast<std::size_t>(i) * 2 * g.c + g.c + c] = buf.spec[i][1];
        }
      }
    }
  }
}

template <typename T>
void rfft2_adjoint(const SpectrumGeometry& g, const T* gspec, T* gx) {
  const auto& p = plans_for<T>(g.h, g.w);
  const int wf = g.wf();
#pragma omp parallel
  {
    PlaneBuffers<T> buf(g.h, g.w);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.c; ++c) {
        const T* ss = gspec + static_cast<std::size_t>(n) * g.h * wf * 2 * g.c;
        for (int i = 0; i < g.h * wf; ++i) {
          buf.spec[i][0] = ss[static_cast<std::size_t>(i) * 2 * g.c + c];
          buf.spec[i][1] = ss[static_cast<std::size_t>(i) * 2 * g.c + g.c + c];
        }
        Fftw<T>::exec_c2c(p.c2c, buf.spec, buf.spec);
        // c2r doubles interior columns; the adjoint wants each bin once.
        for (int r = 0; r < g.h; ++r) {
          for (int k = 0; k < wf; ++k) {
            if (column_weight(k, g.w) == 2) {
              buf.spec[r * wf + k][0] *= T(0.5);
              buf.spec[r * wf + k][1] *= T(0.5);
            }
          }
        }
        Fftw<T>::exec_c2r(p.c2r, buf.spec, buf.real);
        T* xs = gx + static_cast<std::size_t>(n) * g.h * g.w * g.c;
        for (int i = 0; i < g.h * g.w; ++i) xs[static_cast<std::size_t>(i) * g.c + c] += buf.real[i];
      }
    }
  }
}

template <typename T>
void irfft2(const SpectrumGeometry& g, const T* spec, T* x) {
  const auto& p = plans_for<T>(g.h, g.w);
  const int wf = g.wf();
  const T norm = T(1) / static_cast<T>(g.h * g.w);
#pragma omp parallel
  {
    PlaneBuffers<T> buf(g.h, g.w);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.c; ++c) {
        const T* ss = spec + static_cast<std::size_t>(n) * g.h * wf * 2 * g.c;
        for (int i = 0; i < g.h * wf; ++i) {
          buf.spec[i][0] = ss[static_cast<std::size_t>(i) * 2 * g.c + c];
          buf.spec[i][1] = ss[static_cast<std::size_t>(i) * 2 * g.c + g.c + c];
        }
        Fftw<T>::exec_c2c(p.c2c, buf.spec, buf.spec);
        Fftw<T>::exec_c2r(p.c2r, buf.spec, buf.real);
        T* xs = x + static_cast<std::size_t>(n) * g.h * g.w * g.c;
        for (int i = 0; i < g.h * g.w; ++i) xs[static_cast<std::size_t>(i) * g.c + c] = buf.real[i] * norm;
      }
    }
  }
}

template <typename T>
void irfft2_adjoint(const SpectrumGeometry& g, const T* gx, T* gspec) {
  const auto& p = plans_for<T>(g.h, g.w);
  const int wf = g.wf();
  const T norm = T(1) / static_cast<T>(g.h * g.w);
#pragma omp parallel
  {
    PlaneBuffers<T> buf(g.h, g.w);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.c; ++c) {
        const T* xs = gx + static_cast<std::size_t>(n) * g.h * g.w * g.c;
        for (int i = 0; i < g.h * g.w; ++i) buf.real[i] = xs[static_cast<std::size_t>(i) * g.c + c];
        Fftw<T>::exec_r2c(p.r2c, buf.real, buf.spec);
        T* ss = gspec + static_cast<std::size_t>(n) * g.h * wf * 2 * g.c;
        for (int r = 0; r < g.h; ++r) {
          for (int k = 0; k < wf; ++k) {
            const int i = r * wf + k;
            const T s = norm * static_cast<T>(column_weight(k, g.w));
            ss[static_cast<std::size_t>(i) * 2 * g.c + c] += s * buf.spec[i][0];
            ss[static_cast<std::size_t>(i) * 2 * g.c + g.c + c] += s * buf.spec[i][1];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Haar

void haar_forward_level(const double* x, int h, int w, HaarBands out) {
  const int bh = h / 2, bw = w / 2;
#pragma omp parallel for schedule(static) if (h * w > 16384)
  for (int i = 0; i < bh; ++i) {
    const double* r0 = x + static_cast<std::size_t>(2 * i) * w;
    const double* r1 = r0 + w;
    for (int j = 0; j < bw; ++j) {
      const double a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
      const std::size_t o = static_cast<std::size_t>(i) * bw + j;
      out.ll[o] = 0.5 * (a + b + c + d);
      out.lh[o] = 0.5 * (a - b + c - d);
      out.hl[o] = 0.5 * (a + b - c - d);
      out.hh[o] = 0.5 * (a - b - c + d);
    }
  }
}

void haar_inverse_level(ConstHaarBands in, int h, int w, double* x) {
  const int bh = h / 2, bw = w / 2;
#pragma omp parallel for schedule(static) if (h * w > 16384)
  for (int i = 0; i < bh; ++i) {
    double* r0 = x + static_cast<std::size_t>(2 * i) * w;
    double* r1 = r0 + w;
    for (int j = 0; j < bw; ++j) {
      const std::size_t o = static_cast<std::size_t>(i) * bw + j;
      const double ll = in.ll[o], lh = in.lh[o], hl = in.hl[o], hh = in.hh[o];
      r0[2 * j] = 0.5 * (ll + lh + hl + hh);
      r0[2 * j + 1] = 0.5 * (ll - lh + hl - hh);
      r1[2 * j] = 0.5 * (ll + lh - hl - hh);
      r1[2 * j + 1] = 0.5 * (ll - lh - hl + hh);
    }
  }
}

// ---------------------------------------------------------------------------
// SSIM

void ssim_map(const double* x, const double* y, int h, int w, double* map) {
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  constexpr int r = kSsimWindow / 2;
  const double* taps = ssim_gaussian_taps();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  // Five moments filtered separably: x, y, xx, yy, xy.
  std::vector<double> tmp(5 * n), mom(5 * n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int t = -r; t <= r; ++t) {
        const std::size_t idx = static_cast<std::size_t>(i) * w + reflect_index(j + t, w);
        const double g = taps[t + r];
        const double a = x[idx], b = y[idx];
        s[0] += g * a;
        s[1] += g * b;
        s[2] += g * a * a;
        s[3] += g * b * b;
        s[4] += g * a * b;
      }
      for (int m = 0; m < 5; ++m) tmp[m * n + static_cast<std::size_t>(i) * w + j] = s[m];
    }
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int t = -r; t <= r; ++t) {
        const std::size_t idx = static_cast<std::size_t>(reflect_index(i + t, h)) * w + j;
        const double g = taps[t + r];
        for (int m = 0; m < 5; ++m) s[m] += g * tmp[m * n + idx];
      }
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      map[static_cast<std::size_t>(i) * w + j] =
          ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
}

#define SHADOWKIT_INSTANTIATE(T)                                                                               \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, const T*, T, T*);                          \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                  \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);         \
  template void rfft2<T>(const SpectrumGeometry&, const T*, T*);                                           \
  template void rfft2_adjoint<T>(const SpectrumGeometry&, const T*, T*);                                   \
  template void irfft2<T>(const SpectrumGeometry&, const T*, T*);                                          \
  template void irfft2_adjoint<T>(const SpectrumGeometry&, const T*, T*);

SHADOWKIT_INSTANTIATE(float)
SHADOWKIT_INSTANTIATE(double)
#undef SHADOWKIT_INSTANTIATE

}  // namespace parallel
}  // namespace shadowkit::kernels
