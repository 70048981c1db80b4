// SPDX-License-Identifier: Apache-2.0
//
// Hot numeric kernels. Each kernel exists twice:
//   kernels::parallel  - OpenMP + blocked GEMM / FFTW, used by the library
//   kernels::reference - plain serial loops, kept for tests and benchmarks
// Both namespaces expose identical signatures so tests can swap them.
#pragma once

#include <cstddef>

namespace shadowkit::kernels {

/// NHWC convolution with HWIO weights [kh, kw, cin, cout] and zero padding.
struct ConvGeometry {
  int n = 1, h = 1, w = 1, cin = 1, cout = 1;
  int kh = 3, kw = 3, stride = 1, pad = 1;
  int out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  int out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

/// Real 2-D spectrum of an NHWC tensor. Spectrum layout is
/// [n, h, w/2+1, 2c]: channels [0,c) real parts, [c,2c) imaginary parts.
struct SpectrumGeometry {
  int n = 1, h = 2, w = 2, c = 1;
  int wf() const { return w / 2 + 1; }
};

/// One Haar level on a single plane of even size h x w; bands are h/2 x w/2.
struct HaarBands {
  double* ll;
  double* lh;
  double* hl;
  double* hh;
};
struct ConstHaarBands {
  const double* ll;
  const double* lh;
  const double* hl;
  const double* hh;
};

namespace parallel {

/// C = alpha * op(A) * op(B) + beta * C, row-major, op = transpose if flag set.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c);

/// y = conv(x, w) + b; b may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y);

/// Accumulates into dx, dw, db; any of them may be null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

template <typename T>
void rfft2(const SpectrumGeometry& g, const T* x, T* spec);
/// Adjoint of rfft2 (accumulates).
template <typename T>
void rfft2_adjoint(const SpectrumGeometry& g, const T* gspec, T* gx);
/// Inverse with 1/(h*w) normalisation. Bins are weighted as a half
/// spectrum: columns 0 and w/2 (even w) once, all others twice, real part kept.
template <typename T>
void irfft2(const SpectrumGeometry& g, const T* spec, T* x);
/// Adjoint of irfft2 (accumulates).
template <typename T>
void irfft2_adjoint(const SpectrumGeometry& g, const T* gx, T* gspec);

void haar_forward_level(const double* x, int h, int w, HaarBands out);
void haar_inverse_level(ConstHaarBands in, int h, int w, double* x);

/// SSIM map of one channel with an 11x11 Gaussian window (sigma 1.5),
/// reflect-101 borders, dynamic range 1.
void ssim_map(const double* x, const double* y, int h, int w, double* map);

}  // namespace parallel

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c);
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);
template <typename T>
void rfft2(const SpectrumGeometry& g, const T* x, T* spec);
template <typename T>
void rfft2_adjoint(const SpectrumGeometry& g, const T* gspec, T* gx);
template <typename T>
void irfft2(const SpectrumGeometry& g, const T* spec, T* x);
template <typename T>
void irfft2_adjoint(const SpectrumGeometry& g, const T* gx, T* gspec);
void haar_forward_level(const double* x, int h, int w, HaarBands out);
void haar_inverse_level(ConstHaarBands in, int h, int w, double* x);
void ssim_map(const double* x, const double* y, int h, int w, double* map);

}  // namespace reference

/// Normalised 11-tap Gaussian (sigma 1.5) shared by both SSIM kernels.
const double* ssim_gaussian_taps();
constexpr int kSsimWindow = 11;

/// Reflect-101 index into [0, n).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace shadowkit::kernels
