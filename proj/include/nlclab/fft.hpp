#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace nlclab {

using cplx = std::complex<double>;

/// Thin wrapper over FFTW double-precision complex transforms. Plans are
/// created once per (size, direction) and cached; fftw_execute_dft on a cached
/// plan is thread-safe, plan creation is serialized.
namespace fft_detail {

struct PlanCache {
  std::mutex mutex;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans;

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard<std::mutex> lock(mutex);
    auto key = std::make_pair(n, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    std::vector<cplx> scratch(n);
    fftw_plan p = fftw_plan_dft_1d(
        static_cast<int>(n), reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("fftw plan creation failed");
    plans.emplace(key, p);
    return p;
  }
};

inline PlanCache& cache() {
  static PlanCache c;
  return c;
}

inline void execute(std::vector<cplx>& data, int sign) {
  if (data.empty()) return;
  fftw_plan p = cache().get(data.size(), sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(p, ptr, ptr);
}

}  // namespace fft_detail

/// In-place DFT, X[k] = sum_n x[n] exp(-j 2 pi k n / N).
inline void fft_inplace(std::vector<cplx>& data) {
  fft_detail::execute(data, FFTW_FORWARD);
}

/// In-place inverse DFT including the 1/N factor.
inline void ifft_inplace(std::vector<cplx>& data) {
  fft_detail::execute(data, FFTW_BACKWARD);
  const double s = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= s;
}

inline std::vector<cplx> fft(std::vector<cplx> data) {
  fft_inplace(data);
  return data;
}

inline std::vector<cplx> ifft(std::vector<cplx> data) {
  ifft_inplace(data);
  return data;
}

/// Bin frequencies in Hz for an N-point DFT at the given sample rate, in FFT
/// order (0, ..., fs/2 - df, -fs/2, ..., -df).
inline std::vector<double> fft_frequencies(std::size_t n, double sample_rate_hz) {
  std::vector<double> f(n);
  const double df = sample_rate_hz / static_cast<double>(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t k = 0; k < n; ++k) {
    f[k] = (k < half) ? df * static_cast<double>(k)
                      : df * (static_cast<double>(k) - static_cast<double>(n));
  }
  return f;
}

/// Same grid in angular frequency (rad/s).
inline std::vector<double> fft_angular_frequencies(std::size_t n,
                                                   double sample_rate_hz) {
  std::vector<double> w = fft_frequencies(n, sample_rate_hz);
  for (auto& v : w) v *= 2.0 * M_PI;
  return w;
}

}  // namespace nlclab
