// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <vector>

#include "shadowkit/kernels.hpp"

namespace shadowkit::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = T(0);
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * n + j]);
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.n; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int co = 0; co < g.cout; ++co) {
          T acc = b ? b[co] : T(0);
          for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
              const int iy = oy * g.stride - g.pad + ky;
              const int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
              for (int ci = 0; ci < g.cin; ++ci) {
                acc += x[((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.cin + ci] *
                       w[((static_cast<std::size_t>(ky) * g.kw + kx) * g.cin + ci) * g.cout + co];
              }
            }
          }
          y[((static_cast<std::size_t>(n) * oh + oy) * ow + ox) * g.cout + co] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.n; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int co = 0; co < g.cout; ++co) {
          const T d = dy[((static_cast<std::size_t>(n) * oh + oy) * ow + ox) * g.cout + co];
          if (db) db[co] += d;
          for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
              const int iy = oy * g.stride - g.pad + ky;
              const int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
              for (int ci = 0; ci < g.cin; ++ci) {
                const std::size_t xi = ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.cin + ci;
                const std::size_t wi = ((static_cast<std::size_t>(ky) * g.kw + kx) * g.cin + ci) * g.cout + co;
                if (dx) dx[xi] += d * w[wi];
                if (dw) dw[wi] += d * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

namespace {

inline int column_weight(int k, int w) { return (k == 0 || (w % 2 == 0 && k == w / 2)) ? 1 : 2; }

inline double phase(int a, int na, int b, int nb) {
  return 2.0 * std::numbers::pi * (static_cast<double>(a) / na + static_cast<double>(b) / nb);
}

}  // namespace

// Direct O((hw)^2) DFT sums, accumulated in double.
template <typename T>
void rfft2(const SpectrumGeometry& g, const T* x, T* spec) {
  const int wf = g.wf();
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      for (int u = 0; u < g.h; ++u) {
        for (int k = 0; k < wf; ++k) {
          double re = 0, im = 0;
          for (int i = 0; i < g.h; ++i) {
            for (int j = 0; j < g.w; ++j) {
              const double v = x[((static_cast<std::size_t>(n) * g.h + i) * g.w + j) * g.c + c];
              const double th = phase(u * i % g.h, g.h, k * j % g.w, g.w);
              re += v * std::cos(th);
              im -= v * std::sin(th);
            }
          }
          const std::size_t o = ((static_cast<std::size_t>(n) * g.h + u) * wf + k) * 2 * g.c;
          spec[o + c] = static_cast<T>(re);
          spec[o + g.c + c] = static_cast<T>(im);
        }
      }
    }
  }
}

template <typename T>
void rfft2_adjoint(const SpectrumGeometry& g, const T* gspec, T* gx) {
  const int wf = g.wf();
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      for (int i = 0; i < g.h; ++i) {
        for (int j = 0; j < g.w; ++j) {
          double acc = 0;
          for (int u = 0; u < g.h; ++u) {
            for (int k = 0; k < wf; ++k) {
              const std::size_t o = ((static_cast<std::size_t>(n) * g.h + u) * wf + k) * 2 * g.c;
              const double th = phase(u * i % g.h, g.h, k * j % g.w, g.w);
              acc += gspec[o + c] * std::cos(th) - gspec[o + g.c + c] * std::sin(th);
            }
          }
          gx[((static_cast<std::size_t>(n) * g.h + i) * g.w + j) * g.c + c] += static_cast<T>(acc);
        }
      }
    }
  }
}

template <typename T>
void irfft2(const SpectrumGeometry& g, const T* spec, T* x) {
  const int wf = g.wf();
  const double norm = 1.0 / (static_cast<double>(g.h) * g.w);
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      for (int i = 0; i < g.h; ++i) {
        for (int j = 0; j < g.w; ++j) {
          double acc = 0;
          for (int u = 0; u < g.h; ++u) {
            for (int k = 0; k < wf; ++k) {
              const std::size_t o = ((static_cast<std::size_t>(n) * g.h + u) * wf + k) * 2 * g.c;
              const double th = phase(u * i % g.h, g.h, k * j % g.w, g.w);
              acc += column_weight(k, g.w) * (spec[o + c] * std::cos(th) - spec[o + g.c + c] * std::sin(th));
            }
          }
          x[((static_cast<std::size_t>(n) * g.h + i) * g.w + j) * g.c + c] = static_cast<T>(acc * norm);
        }
      }
    }
  }
}

template <typename T>
void irfft2_adjoint(const SpectrumGeometry& g, const T* gx, T* gspec) {
  const int wf = g.wf();
  const double norm = 1.0 / (static_cast<double>(g.h) * g.w);
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      for (int u = 0; u < g.h; ++u) {
        for (int k = 0; k < wf; ++k) {
          double re = 0, im = 0;
          for (int i = 0; i < g.h; ++i) {
            for (int j = 0; j < g.w; ++j) {
              const double v = gx[((static_cast<std::size_t>(n) * g.h + i) * g.w + j) * g.c + c];
              const double th = phase(u * i % g.h, g.h, k * j % g.w, g.w);
              re += v * std::cos(th);
              im -= v * std::sin(th);
            }
          }
          const double s = norm * column_weight(k, g.w);
          const std::size_t o = ((static_cast<std::size_t>(n) * g.h + u) * wf + k) * 2 * g.c;
          gspec[o + c] += static_cast<T>(s * re);
          gspec[o + g.c + c] += static_cast<T>(s * im);
        }
      }
    }
  }
}

void haar_forward_level(const double* x, int h, int w, HaarBands out) {
  for (int i = 0; i < h / 2; ++i) {
    for (int j = 0; j < w / 2; ++j) {
      const double a = x[(2 * i) * w + 2 * j];
      const double b = x[(2 * i) * w + 2 * j + 1];
      const double c = x[(2 * i + 1) * w + 2 * j];
      const double d = x[(2 * i + 1) * w + 2 * j + 1];
      const int o = i * (w / 2) + j;
      out.ll[o] = (a + b + c + d) / 2;
      out.lh[o] = (a - b + c - d) / 2;
      out.hl[o] = (a + b - c - d) / 2;
      out.hh[o] = (a - b - c + d) / 2;
    }
  }
}

void haar_inverse_level(ConstHaarBands in, int h, int w, double* x) {
  for (int i = 0; i < h / 2; ++i) {
    for (int j = 0; j < w / 2; ++j) {
      const int o = i * (w / 2) + j;
      x[(2 * i) * w + 2 * j] = (in.ll[o] + in.lh[o] + in.hl[o] + in.hh[o]) / 2;
      x[(2 * i) * w + 2 * j + 1] = (in.ll[o] - in.lh[o] + in.hl[o] - in.hh[o]) / 2;
      x[(2 * i + 1) * w + 2 * j] = (in.ll[o] + in.lh[o] - in.hl[o] - in.hh[o]) / 2;
      x[(2 * i + 1) * w + 2 * j + 1] = (in.ll[o] - in.lh[o] - in.hl[o] + in.hh[o]) / 2;
    }
  }
}

// Full 11x11 window per pixel.
void ssim_map(const double* x, const double* y, int h, int w, double* map) {
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  constexpr int r = kSsimWindow / 2;
  const double* taps = ssim_gaussian_taps();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int di = -r; di <= r; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
          const double g = taps[di + r] * taps[dj + r];
          const int idx = reflect_index(i + di, h) * w + reflect_index(j + dj, w);
          mx += g * x[idx];
          my += g * y[idx];
          sxx += g * x[idx] * x[idx];
          syy += g * y[idx] * y[idx];
          sxy += g * x[idx] * y[idx];
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      map[i * w + j] = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
}

#define SHADOWKIT_INSTANTIATE(T)                                                                       \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, const T*, T, T*);                  \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);          \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*); \
  template void rfft2<T>(const SpectrumGeometry&, const T*, T*);                                   \
  template void rfft2_adjoint<T>(const SpectrumGeometry&, const T*, T*);                           \
  template void irfft2<T>(const SpectrumGeometry&, const T*, T*);                                  \
  template void irfft2_adjoint<T>(const SpectrumGeometry&, const T*, T*);

SHADOWKIT_INSTANTIATE(float)
SHADOWKIT_INSTANTIATE(double)
#undef SHADOWKIT_INSTANTIATE

}  // namespace shadowkit::kernels::reference
