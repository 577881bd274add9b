#pragma once

#include <cstddef>
#include <vector>

#include "egossl/tensor.hpp"

namespace egossl::signal {

using numerics::Shape;
using numerics::Tensor;

struct StftConfig {
    std::size_t n_fft = 64;
    std::size_t hop = 32;
    double log_eps = 1e-8;
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Frames laid along the clip: floor((samples - n_fft) / hop) + 1.
std::size_t frame_count(std::size_t samples, const StftConfig& cfg);

// Log-magnitude STFT of a multichannel clip [C, T] -> [C, n_fft/2 + 1, frames].
// Plain O(n^2) DFT per frame; n_fft must be even.
Tensor log_spectrogram(const Tensor& clip, const StftConfig& cfg = {});

// Per-(channel, frequency-bin) statistics across a set of spectrograms, used
// to standardize encoder inputs. Fitted deviations are floored away from
// zero; normalize() rejects non-positive deviations outright.
struct NormStats {
    Tensor mean;   // [C, bins]
    Tensor stdev;  // [C, bins]
};

NormStats fit_normalizer(const std::vector<Tensor>& spectrograms);
Tensor normalize(const Tensor& spectrogram, const NormStats& stats);

}  // namespace egossl::signal
