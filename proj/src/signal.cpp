#include "egossl/signal.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace egossl::signal {

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n)));
    }
    return w;
}

std::size_t frame_count(std::size_t samples, const StftConfig& cfg) {
    if (samples < cfg.n_fft) throw std::invalid_argument("clip too short");
    return (samples - cfg.n_fft) / cfg.hop + 1;
}

Tensor log_spectrogram(const Tensor& clip, const StftConfig& cfg) {
    if (clip.rank() != 2) throw std::invalid_argument("log_spectrogram: clip must be [C, T]");
    if (cfg.n_fft == 0 || cfg.n_fft % 2 != 0) {
        throw std::invalid_argument("log_spectrogram: n_fft must be even and positive");
    }
    if (cfg.hop == 0) throw std::invalid_argument("log_spectrogram: hop must be positive");
    const std::size_t C = clip.shape[0], T = clip.shape[1];
    if (T < cfg.n_fft) throw std::invalid_argument("clip too short");
    if (!clip.all_finite()) throw std::invalid_argument("invalid samples");

    const std::size_t bins = cfg.n_fft / 2 + 1;
    const std::size_t frames = (T - cfg.n_fft) / cfg.hop + 1;
    const auto window = hann_window(cfg.n_fft);

    std::vector<double> cos_t(bins * cfg.n_fft), sin_t(bins * cfg.n_fft);
    for (std::size_t k = 0; k < bins; ++k) {
        for (std::size_t n = 0; n < cfg.n_fft; ++n) {
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) *
                                 static_cast<double>(n) / static_cast<double>(cfg.n_fft);
            cos_t[k * cfg.n_fft + n] = std::cos(phase);
            sin_t[k * cfg.n_fft + n] = std::sin(phase);
        }
    }

    Tensor out(Shape{C, bins, frames});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t f = 0; f < frames; ++f) {
            const double* x = clip.data.data() + c * T + f * cfg.hop;
            for (std::size_t k = 0; k < bins; ++k) {
                double re = 0.0, im = 0.0;
                for (std::size_t n = 0; n < cfg.n_fft; ++n) {
                    const double v = x[n] * window[n];
                    re += v * cos_t[k * cfg.n_fft + n];
                    im -= v * sin_t[k * cfg.n_fft + n];
                }
                out.data[(c * bins + k) * frames + f] = std::log(std::hypot(re, im) + cfg.log_eps);
            }
        }
    }
    return out;
}

NormStats fit_normalizer(const std::vector<Tensor>& spectrograms) {
    if (spectrograms.empty()) throw std::invalid_argument("no data");
    const Shape& s = spectrograms.front().shape;
    if (s.size() != 3) throw std::invalid_argument("fit_normalizer: [C, bins, frames] required");
    const std::size_t C = s[0], bins = s[1], frames = s[2];
    for (const auto& spec : spectrograms) {
        if (!spec.same_shape(spectrograms.front())) {
            throw std::invalid_argument("input shape mismatch");
        }
    }

    NormStats stats{Tensor::zeros(Shape{C, bins}), Tensor::zeros(Shape{C, bins})};
    const double n = static_cast<double>(spectrograms.size() * frames);
    for (const auto& spec : spectrograms) {
        for (std::size_t cb = 0; cb < C * bins; ++cb) {
            for (std::size_t f = 0; f < frames; ++f) {
                stats.mean.data[cb] += spec.data[cb * frames + f];
            }
        }
    }
    for (auto& m : stats.mean.data) m /= n;
    for (const auto& spec : spectrograms) {
        for (std::size_t cb = 0; cb < C * bins; ++cb) {
            for (std::size_t f = 0; f < frames; ++f) {
                const double d = spec.data[cb * frames + f] - stats.mean.data[cb];
                stats.stdev.data[cb] += d * d;
            }
        }
    }
    for (auto& v : stats.stdev.data) v = std::max(std::sqrt(v / n), 1e-8);
    return stats;
}

Tensor normalize(const Tensor& spectrogram, const NormStats& stats) {
    if (spectrogram.rank() != 3) throw std::invalid_argument("normalize: [C, bins, frames] required");
    const std::size_t C = spectrogram.shape[0], bins = spectrogram.shape[1];
    const std::size_t frames = spectrogram.shape[2];
    const Shape want{C, bins};
    if (stats.mean.shape != want || stats.stdev.shape != want) {
        throw std::invalid_argument("input shape mismatch");
    }
    for (double v : stats.stdev.data) {
        if (!(v > 0.0)) throw std::invalid_argument("degenerate statistics");
    }
    Tensor out(spectrogram.shape);
    for (std::size_t cb = 0; cb < C * bins; ++cb) {
        for (std::size_t f = 0; f < frames; ++f) {
            out.data[cb * frames + f] =
                (spectrogram.data[cb * frames + f] - stats.mean.data[cb]) / stats.stdev.data[cb];
        }
    }
    return out;
}

}  // namespace egossl::signal
