#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace oamsdm {

// FFTW-backed transforms. Plans are FFTW_ESTIMATE only (deterministic algorithm
// choice) and cached per length; plan creation is serialized internally.
void fft_inplace(std::vector<std::complex<double>>& x, bool inverse);

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x);
// Inverse transform scaled by 1/N.
std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x);

// Smallest 2^a * 3^b * 5^c >= n.
std::size_t next_fast_len(std::size_t n);

}  // namespace oamsdm
