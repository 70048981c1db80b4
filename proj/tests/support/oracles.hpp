// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles. Nothing in
// here calls into the library's metric or transform code.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "shadowkit/image.hpp"

namespace oracle {

inline bool in_region(const shadowkit::ShadowMask* m, int y, int x) { return !m || m->at(y, x) >= m->threshold(); }

inline double psnr(const shadowkit::ImageTensor& a, const shadowkit::ImageTensor& b,
                   const shadowkit::ShadowMask* region = nullptr) {
  double se = 0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!in_region(region, y, x)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        se += d * d;
        ++n;
      }
    }
  const double mse = se / n;
  return mse < 1e-10 ? 100.0 : -10.0 * std::log10(mse);
}

inline double rmse_rgb(const shadowkit::ImageTensor& a, const shadowkit::ImageTensor& b,
                       const shadowkit::ShadowMask* region = nullptr) {
  double se = 0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!in_region(region, y, x)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = (a.at(y, x, c) - b.at(y, x, c)) * 255.0;
        se += d * d;
        ++n;
      }
    }
  return std::sqrt(se / n);
}

/// sRGB -> CIE Lab (D65), textbook constants.
inline std::array<double, 3> lab(double r, double g, double b) {
  auto lin = [](double v) { return v > 0.04045 ? std::pow((v + 0.055) / 1.055, 2.4) : v / 12.92; };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = (0.4124564 * R + 0.3575761 * G + 0.1804375 * B) / 0.95047;
  const double Y = (0.2126729 * R + 0.7151522 * G + 0.0721750 * B) / 1.0;
  const double Z = (0.0193339 * R + 0.1191920 * G + 0.9503041 * B) / 1.08883;
  auto f = [](double t) {
    const double e = 216.0 / 24389.0, k = 24389.0 / 27.0;
    return t > e ? std::cbrt(t) : (k * t + 16.0) / 116.0;
  };
  const double fx = f(X), fy = f(Y), fz = f(Z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline double rmse_lab(const shadowkit::ImageTensor& a, const shadowkit::ImageTensor& b,
                       const shadowkit::ShadowMask* region = nullptr) {
  double s = 0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!in_region(region, y, x)) continue;
      const auto la = lab(a.at(y, x, 0), a.at(y, x, 1), a.at(y, x, 2));
      const auto lb = lab(b.at(y, x, 0), b.at(y, x, 1), b.at(y, x, 2));
      for (int c = 0; c < 3; ++c) {
        s += std::abs(la[c] - lb[c]);
        ++n;
      }
    }
  return s / n;
}

inline int reflect101(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

/// Single-scale SSIM, 11x11 Gaussian (sigma 1.5) with reflect-101 borders,
/// per-channel maps averaged, then averaged over the region.
inline double ssim(const shadowkit::ImageTensor& a, const shadowkit::ImageTensor& b,
                   const shadowkit::ShadowMask* region = nullptr) {
  double g[11], gs = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 1e-4, c2 = 9e-4;
  const int h = a.height(), w = a.width(), ch = a.channels();
  double total = 0;
  long n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!in_region(region, y, x)) continue;
      double acc = 0;
      for (int c = 0; c < ch; ++c) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const int yy_ = reflect101(y + i - 5, h), xx_ = reflect101(x + j - 5, w);
            const double wt = g[i] * g[j], u = a.at(yy_, xx_, c), v = b.at(yy_, xx_, c);
            mx += wt * u;
            my += wt * v;
            xx += wt * u * u;
            yy += wt * v * v;
            xy += wt * u * v;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
      total += acc / ch;
      ++n;
    }
  return total / n;
}

/// Orthonormal 2x2 Haar of one block via the explicit matrix product H X H^T
/// with H = [[1, 1], [1, -1]] / sqrt(2). Returns {LL, LH, HL, HH}.
inline std::array<double, 4> haar_block(double a, double b, double c, double d) {
  const double s = 1.0 / std::sqrt(2.0);
  const double H[2][2] = {{s, s}, {s, -s}};
  const double X[2][2] = {{a, b}, {c, d}};
  double Y[2][2] = {};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) Y[i][j] += H[i][k] * X[k][l] * H[j][l];
  // Y[0][1] is the horizontal difference, Y[1][0] the vertical one.
  return {Y[0][0], Y[0][1], Y[1][0], Y[1][1]};
}

}  // namespace oracle
