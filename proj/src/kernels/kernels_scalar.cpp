#include <cmath>
#include <cstddef>

#include "echoloc/kernels.hpp"

namespace echoloc::kern {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kSqrt2OverPi = 0.7978845608028653559;  // sqrt(2/pi)

double s_dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double s_sum(const double* a, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double s_sum_sq(const double* a, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_subtract(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_complex_mag(const double* re, const double* im, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
}

void s_exp_array(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void s_erf_array(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::erf(x[i]);
}

void s_emg_add(const double p[4], double t_step, std::size_t n, double* accum) {
  const double alpha = p[0], mu = p[1], sigma = p[2], eta = p[3];
  const double inv_sigma = 1.0 / sigma;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (static_cast<double>(i) * t_step - mu) * inv_sigma;
    accum[i] += alpha * std::exp(-0.5 * z * z) * (1.0 + std::erf(eta * z * kInvSqrt2));
  }
}

void s_emg_model_jac(const double p[4], double t_step, std::size_t n, double* model_accum,
                     double* jac) {
  const double alpha = p[0], mu = p[1], sigma = p[2], eta = p[3];
  const double inv_sigma = 1.0 / sigma;
  double* d_alpha = jac;
  double* d_mu = jac + n;
  double* d_sigma = jac + 2 * n;
  double* d_eta = jac + 3 * n;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (static_cast<double>(i) * t_step - mu) * inv_sigma;
    const double g = std::exp(-0.5 * z * z);
    const double skew = 1.0 + std::erf(eta * z * kInvSqrt2);
    const double pdf = std::exp(-0.5 * eta * eta * z * z);  // from erf'
    model_accum[i] += alpha * g * skew;
    d_alpha[i] = g * skew;
    // d/dmu = (alpha g / sigma) (z skew - eta sqrt(2/pi) pdf); d/dsigma = z d/dmu
    const double core = (alpha * g * inv_sigma) * (z * skew - eta * kSqrt2OverPi * pdf);
    d_mu[i] = core;
    d_sigma[i] = z * core;
    d_eta[i] = alpha * g * z * kSqrt2OverPi * pdf;
  }
}

void s_dense_forward(const double* w, const double* b, const double* x, std::size_t in,
                     std::size_t out, double* y) {
  for (std::size_t j = 0; j < out; ++j) y[j] = b[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* row = w + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

void s_dense_backward(const double* w, const double* x, const double* dy, std::size_t in,
                      std::size_t out, double* dx, double* gw, double* gb) {
  for (std::size_t j = 0; j < out; ++j) gb[j] += dy[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* row = w + i * out;
    double* grow = gw + i * out;
    double acc = 0;
    for (std::size_t j = 0; j < out; ++j) {
      grow[j] += xi * dy[j];
      acc += row[j] * dy[j];
    }
    if (dx) dx[i] = acc;
  }
}

void s_adam_step(double* w, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bias1, double bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelOps& scalar_ops() {
  static const KernelOps ops{
      "scalar",       s_dot,          s_sum,       s_sum_sq,        s_axpy,
      s_subtract,     s_complex_mag,  s_exp_array, s_erf_array,     s_emg_add,
      s_emg_model_jac, s_dense_forward, s_dense_backward, s_adam_step,
  };
  return ops;
}

}  // namespace echoloc::kern
