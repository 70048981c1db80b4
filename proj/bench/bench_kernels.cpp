// Parallel kernels against their serial reference twins. Sizes follow the
// shapes the default 64x64 models produce.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "shadowkit/kernels.hpp"

namespace k = shadowkit::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

// Arguments: n, side, cin, cout (3x3, stride 1, pad 1).
k::ConvGeometry conv_geometry(const benchmark::State& s) {
  const int side = static_cast<int>(s.range(1));
  return {static_cast<int>(s.range(0)), side, side, static_cast<int>(s.range(2)), static_cast<int>(s.range(3)), 3, 3, 1, 1};
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 64, 16, 16})->Args({8, 32, 32, 32})->Args({8, 16, 64, 64})->Args({8, 8, 128, 128});
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& s) {
  const auto g = conv_geometry(s);
  const auto x = random_vec<float>(static_cast<std::size_t>(g.n) * g.h * g.w * g.cin, 1);
  const auto w = random_vec<float>(static_cast<std::size_t>(9) * g.cin * g.cout, 2);
  const auto b = random_vec<float>(g.cout, 3);
  std::vector<float> y(static_cast<std::size_t>(g.n) * g.out_h() * g.out_w() * g.cout);
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::conv2d_forward<float>(g, x.data(), w.data(), b.data(), y.data());
    } else {
      k::reference::conv2d_forward<float>(g, x.data(), w.data(), b.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(y.size()) * 9 * g.cin);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& s) {
  const auto g = conv_geometry(s);
  const auto x = random_vec<float>(static_cast<std::size_t>(g.n) * g.h * g.w * g.cin, 1);
  const auto w = random_vec<float>(static_cast<std::size_t>(9) * g.cin * g.cout, 2);
  const auto dy = random_vec<float>(static_cast<std::size_t>(g.n) * g.out_h() * g.out_w() * g.cout, 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.cout);
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::conv2d_backward<float>(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    } else {
      k::reference::conv2d_backward<float>(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_Gemm(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto a = random_vec<float>(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_vec<float>(static_cast<std::size_t>(n) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::gemm<float>(false, false, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    } else {
      k::reference::gemm<float>(false, false, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  s.SetItemsProcessed(s.iterations() * 2 * static_cast<std::int64_t>(n) * n * n);
}

template <bool Parallel>
void BM_Rfft2RoundTrip(benchmark::State& s) {
  const int side = static_cast<int>(s.range(0));
  const k::SpectrumGeometry g{8, side, side, static_cast<int>(s.range(1))};
  const auto x = random_vec<float>(static_cast<std::size_t>(g.n) * g.h * g.w * g.c, 1);
  std::vector<float> spec(static_cast<std::size_t>(g.n) * g.h * g.wf() * 2 * g.c), back(x.size());
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::rfft2<float>(g, x.data(), spec.data());
      k::parallel::irfft2<float>(g, spec.data(), back.data());
    } else {
      k::reference::rfft2<float>(g, x.data(), spec.data());
      k::reference::irfft2<float>(g, spec.data(), back.data());
    }
    benchmark::DoNotOptimize(back.data());
  }
}

template <bool Parallel>
void BM_HaarLevel(benchmark::State& s) {
  const int side = static_cast<int>(s.range(0));
  const auto x = random_vec<double>(static_cast<std::size_t>(side) * side, 1);
  const std::size_t q = static_cast<std::size_t>(side / 2) * (side / 2);
  std::vector<double> ll(q), lh(q), hl(q), hh(q), back(x.size());
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::haar_forward_level(x.data(), side, side, {ll.data(), lh.data(), hl.data(), hh.data()});
      k::parallel::haar_inverse_level({ll.data(), lh.data(), hl.data(), hh.data()}, side, side, back.data());
    } else {
      k::reference::haar_forward_level(x.data(), side, side, {ll.data(), lh.data(), hl.data(), hh.data()});
      k::reference::haar_inverse_level({ll.data(), lh.data(), hl.data(), hh.data()}, side, side, back.data());
    }
    benchmark::DoNotOptimize(back.data());
  }
}

template <bool Parallel>
void BM_SsimMap(benchmark::State& s) {
  const int side = static_cast<int>(s.range(0));
  const auto x = random_vec<double>(static_cast<std::size_t>(side) * side, 1);
  const auto y = random_vec<double>(x.size(), 2);
  std::vector<double> map(x.size());
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::parallel::ssim_map(x.data(), y.data(), side, side, map.data());
    } else {
      k::reference::ssim_map(x.data(), y.data(), side, side, map.data());
    }
    benchmark::DoNotOptimize(map.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(BM_Rfft2RoundTrip<true>)->Name("rfft2_roundtrip/parallel")->Args({8, 64})->Args({16, 32});
BENCHMARK(BM_Rfft2RoundTrip<false>)->Name("rfft2_roundtrip/reference")->Args({8, 64})->Args({16, 32});
BENCHMARK(BM_HaarLevel<true>)->Name("haar_level/parallel")->Arg(64)->Arg(512);
BENCHMARK(BM_HaarLevel<false>)->Name("haar_level/reference")->Arg(64)->Arg(512);
BENCHMARK(BM_SsimMap<true>)->Name("ssim_map/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_SsimMap<false>)->Name("ssim_map/reference")->Arg(64)->Arg(256);
BENCHMARK_MAIN();
