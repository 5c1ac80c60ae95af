#include "oamsdm/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace oamsdm {

namespace {

std::mutex plan_mutex;

// FFTW plan creation is not thread safe; execution via the new-array API is.
fftw_plan get_plan(std::size_t n, bool inverse) {
  static std::map<std::pair<std::size_t, bool>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto key = std::make_pair(n, inverse);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  fftw_complex* scratch = fftw_alloc_complex(n);
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), scratch, scratch,
                                    inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(scratch);
  if (!plan) throw std::runtime_error("fft: plan creation failed");
  cache.emplace(key, plan);
  return plan;
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& x, bool inverse) {
  if (x.empty()) return;
  fftw_plan plan = get_plan(x.size(), inverse);
  auto* data = reinterpret_cast<fftw_complex*>(x.data());
  fftw_execute_dft(plan, data, data);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= scale;
  }
}

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x) {
  fft_inplace(x, false);
  return x;
}

std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x) {
  fft_inplace(x, true);
  return x;
}

std::size_t next_fast_len(std::size_t n) {
  if (n <= 1) return 1;
  std::size_t best = 0;
  for (std::size_t p5 = 1; p5 < 2 * n; p5 *= 5) {
    for (std::size_t p35 = p5; p35 < 2 * n; p35 *= 3) {
      std::size_t p = p35;
      while (p < n) p *= 2;
      if (best == 0 || p < best) best = p;
      if (p35 >= n && (best == 0 || p35 < best)) best = p35;
    }
  }
  return best;
}

}  // namespace oamsdm
