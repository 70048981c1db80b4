// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/wavelet.hpp"

#include <string>

#include "shadowkit/error.hpp"
#include "shadowkit/kernels.hpp"

namespace shadowkit {

namespace {

void check_band(const Plane& p, int h, int w, const char* name) {
  if (p.height != h || p.width != w || p.data.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError(std::string("subband ") + name + " has shape " + std::to_string(p.height) + "x" +
                     std::to_string(p.width) + ", expected " + std::to_string(h) + "x" + std::to_string(w));
  }
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

Plane::Plane(int h, int w, std::vector<double> values) : height(h), width(w), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(h) * w) throw ShapeError("plane data size mismatch");
}

WaveletPyramid haar_dwt2(const Plane& x, int levels) {
  if (levels <= 0) throw ShapeError("wavelet levels must be positive, got " + std::to_string(levels));
  if (x.height <= 0 || x.width <= 0 || x.data.empty()) throw ShapeError("wavelet input is empty");
  const int step = 1 << levels;
  WaveletPyramid pyr;
  pyr.base_height = x.height;
  pyr.base_width = x.width;
  pyr.padded_height = round_up(x.height, step);
  pyr.padded_width = round_up(x.width, step);

  Plane cur(pyr.padded_height, pyr.padded_width);
  for (int y = 0; y < cur.height; ++y) {
    for (int c = 0; c < cur.width; ++c) cur.at(y, c) = x.at(symmetric_index(y, x.height), symmetric_index(c, x.width));
  }
  for (int l = 0; l < levels; ++l) {
    const int h2 = cur.height / 2, w2 = cur.width / 2;
    SubbandSet s{Plane(h2, w2), Plane(h2, w2), Plane(h2, w2), Plane(h2, w2)};
    kernels::parallel::haar_forward_level(cur.data.data(), cur.height, cur.width,
                                          {s.ll.data.data(), s.lh.data.data(), s.hl.data.data(), s.hh.data.data()});
    cur = s.ll;
    pyr.levels.push_back(std::move(s));
  }
  return pyr;
}

Plane haar_idwt2(const WaveletPyramid& pyr) {
  if (pyr.levels.empty()) throw ShapeError("wavelet pyramid has no levels");
  const int n = static_cast<int>(pyr.levels.size());
  const int step = 1 << n;
  if (pyr.padded_height % step || pyr.padded_width % step || pyr.padded_height < pyr.base_height ||
      pyr.padded_width < pyr.base_width) {
    throw ShapeError("wavelet pyramid padded shape is inconsistent with its level count");
  }
  const auto& deepest = pyr.levels.back();
  check_band(deepest.ll, pyr.padded_height >> n, pyr.padded_width >> n, "LL");
  Plane cur = deepest.ll;
  for (int l = n - 1; l >= 0; --l) {
    const auto& s = pyr.levels[l];
    const int h2 = pyr.padded_height >> (l + 1), w2 = pyr.padded_width >> (l + 1);
    check_band(s.lh, h2, w2, "LH");
    check_band(s.hl, h2, w2, "HL");
    check_band(s.hh, h2, w2, "HH");
    Plane up(2 * h2, 2 * w2);
    kernels::parallel::haar_inverse_level({cur.data.data(), s.lh.data.data(), s.hl.data.data(), s.hh.data.data()},
                                          up.height, up.width, up.data.data());
    cur = std::move(up);
  }
  Plane out(pyr.base_height, pyr.base_width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(y, x) = cur.at(y, x);
  }
  return out;
}

double coefficient_energy(const WaveletPyramid& pyr) {
  auto sq = [](const Plane& p) {
    double s = 0;
    for (double v : p.data) s += v * v;
    return s;
  };
  double e = pyr.levels.empty() ? 0.0 : sq(pyr.levels.back().ll);
  for (const auto& s : pyr.levels) e += sq(s.lh) + sq(s.hl) + sq(s.hh);
  return e;
}

Plane channel_plane(const ImageTensor& img, int channel) {
  Plane p(img.height(), img.width());
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) p.at(y, x) = img.at(y, x, channel);
  }
  return p;
}

std::vector<nn::Tensor<double>> wavelet_feature_stack(const ImageTensor& img, int levels) {
  const int c = img.channels();
  std::vector<WaveletPyramid> pyrs;
  pyrs.reserve(c);
  for (int ch = 0; ch < c; ++ch) pyrs.push_back(haar_dwt2(channel_plane(img, ch), levels));

  std::vector<nn::Tensor<double>> out;
  for (int l = 0; l < levels; ++l) {
    const int h = pyrs[0].levels[l].lh.height, w = pyrs[0].levels[l].lh.width;
    nn::Tensor<double> t({h, w, 3 * c});
    for (int ch = 0; ch < c; ++ch) {
      const auto& s = pyrs[ch].levels[l];
      const Plane* bands[3] = {&s.lh, &s.hl, &s.hh};
      for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < h * w; ++i) t[static_cast<std::size_t>(i) * 3 * c + b * c + ch] = bands[b]->data[i];
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace shadowkit
