#include "echoloc/signal.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "echoloc/errors.hpp"
#include "echoloc/kernels.hpp"

namespace echoloc {
namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT; inverse applies conjugation and 1/n.
void fft_radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (cplx& x : a) x /= static_cast<double>(n);
}

/// Direct O(n^2) transform for non-power-of-two lengths.
void dft_naive(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<cplx> out(n);
  const double sign = inverse ? 2.0 : -2.0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = sign * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
      acc += a[i] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  a = std::move(out);
}

void fft(std::vector<cplx>& a, bool inverse) {
  if (is_pow2(a.size()))
    fft_radix2(a, inverse);
  else
    dft_naive(a, inverse);
}

/// One-sided (analytic) spectrum of a real signal: keep DC and Nyquist,
/// double the positive bins, zero the negative ones.
std::vector<cplx> analytic_spectrum(std::span<const double> samples) {
  const std::size_t n = samples.size();
  std::vector<cplx> spec(samples.begin(), samples.end());
  fft(spec, false);
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
  if (n % 2 == 0) {
    // Nyquist bin kept as-is
  }
  for (std::size_t k = half + 1; k < n; ++k) spec[k] = 0.0;
  return spec;
}

std::vector<double> magnitude(const std::vector<cplx>& z) {
  std::vector<double> re(z.size()), im(z.size()), out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    re[i] = z[i].real();
    im[i] = z[i].imag();
  }
  kern::ops().complex_mag(re.data(), im.data(), out.data(), z.size());
  return out;
}

}  // namespace

void Frame::validate() const {
  if (channels.size() < 3)
    throw DataError("frame: need at least 3 channels, got " + std::to_string(channels.size()));
  if (!(sample_rate > 0)) throw DataError("frame: sample rate must be positive");
  const std::size_t t = channels[0].size();
  if (t == 0) throw DataError("frame: empty channels");
  for (const auto& ch : channels)
    if (ch.size() != t) throw DataError("frame: channels differ in length");
}

std::vector<double> hilbert_envelope(std::span<const double> samples) {
  if (samples.size() < 2) throw DataError("hilbert_envelope: need at least 2 samples");
  std::vector<cplx> z = analytic_spectrum(samples);
  fft(z, true);
  return magnitude(z);
}

std::vector<double> hilbert_envelope_interpolated(std::span<const double> samples, int factor) {
  if (factor < 1) throw DataError("hilbert_envelope_interpolated: factor must be >= 1");
  if (factor == 1) return hilbert_envelope(samples);
  const std::size_t n = samples.size();
  if (n < 2) throw DataError("hilbert_envelope_interpolated: need at least 2 samples");
  std::vector<cplx> spec = analytic_spectrum(samples);
  // zero-pad the one-sided spectrum; 1/n normalization of the longer inverse
  // transform is compensated by `factor`
  std::vector<cplx> padded(n * static_cast<std::size_t>(factor), cplx(0, 0));
  for (std::size_t k = 0; k <= n / 2; ++k) padded[k] = spec[k] * static_cast<double>(factor);
  fft(padded, true);
  return magnitude(padded);
}

std::vector<std::vector<ToaDetection>> detect_toas(const Frame& frame, double tau) {
  if (!(tau > 0)) throw DataError("detect_toas: threshold must be positive");
  frame.validate();
  std::vector<std::vector<ToaDetection>> result(frame.channels.size());
  for (std::size_t n = 0; n < frame.channels.size(); ++n) {
    const std::vector<double> env = hilbert_envelope(frame.channels[n]);
    bool in_run = false;
    for (std::size_t i = 0; i + 1 < env.size(); ++i) {
      const double grad = env[i + 1] - env[i];
      if (grad > tau) {
        if (!in_run) {
          result[n].push_back({static_cast<int>(n), static_cast<int>(i),
                               static_cast<double>(i) / frame.sample_rate, env[i]});
          in_run = true;
        }
      } else {
        in_run = false;
      }
    }
  }
  return result;
}

std::vector<std::vector<ToaDetection>> detect_toas_relative(const Frame& frame, double rel) {
  if (!(rel > 0)) throw DataError("detect_toas_relative: relative threshold must be positive");
  frame.validate();
  std::vector<std::vector<ToaDetection>> result(frame.channels.size());
  for (std::size_t n = 0; n < frame.channels.size(); ++n) {
    const std::vector<double> env = hilbert_envelope(frame.channels[n]);
    double max_grad = 0;
    for (std::size_t i = 0; i + 1 < env.size(); ++i)
      max_grad = std::max(max_grad, env[i + 1] - env[i]);
    if (!(max_grad > 0)) continue;
    const double tau = rel * max_grad;
    bool in_run = false;
    for (std::size_t i = 0; i + 1 < env.size(); ++i) {
      const double grad = env[i + 1] - env[i];
      if (grad > tau) {
        if (!in_run) {
          result[n].push_back({static_cast<int>(n), static_cast<int>(i),
                               static_cast<double>(i) / frame.sample_rate, env[i]});
          in_run = true;
        }
      } else {
        in_run = false;
      }
    }
  }
  return result;
}

Frame background_subtract(const Frame& frame, const Frame& background) {
  frame.validate();
  background.validate();
  if (frame.n_receivers() != background.n_receivers() ||
      frame.n_samples() != background.n_samples())
    throw DataError("background_subtract: frame and background shapes differ");
  if (frame.sample_rate != background.sample_rate)
    throw DataError("background_subtract: sample rates differ");
  Frame out = frame;
  for (std::size_t n = 0; n < frame.channels.size(); ++n)
    kern::ops().subtract(frame.channels[n].data(), background.channels[n].data(),
                         out.channels[n].data(), frame.channels[n].size());
  return out;
}

double range_from_toa(double toa_seconds, double speed_of_sound) {
  if (!(toa_seconds >= 0)) throw DataError("range_from_toa: negative time of arrival");
  if (!(speed_of_sound > 0)) throw DataError("range_from_toa: speed of sound must be positive");
  return speed_of_sound * toa_seconds * 0.5;
}

double round_trip_from_toa(double toa_seconds, double speed_of_sound) {
  if (!(toa_seconds >= 0)) throw DataError("round_trip_from_toa: negative time of arrival");
  if (!(speed_of_sound > 0))
    throw DataError("round_trip_from_toa: speed of sound must be positive");
  return speed_of_sound * toa_seconds;
}

}  // namespace echoloc
