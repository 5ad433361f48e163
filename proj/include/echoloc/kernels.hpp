#pragma once

#include <cstddef>
#include <string>

namespace echoloc::kern {

// Data-parallel primitives behind the numeric hot loops. Every entry has a
// scalar reference implementation and may have SIMD variants selected at
// runtime; lanes are equivalence-tested against the scalar reference.
struct KernelOps {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*sum_sq)(const double* a, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*subtract)(const double* a, const double* b, double* out, std::size_t n);
  void (*complex_mag)(const double* re, const double* im, double* out, std::size_t n);

  void (*exp_array)(const double* x, double* y, std::size_t n);
  void (*erf_array)(const double* x, double* y, std::size_t n);

  // Adds alpha*exp(-(t-mu)^2/(2 sigma^2))*(1+erf(eta (t-mu)/(sigma sqrt 2)))
  // to accum[i] for t = i*t_step.
  void (*emg_add)(const double p[4], double t_step, std::size_t n, double* accum);
  // Same model; also fills the four partial-derivative rows (alpha, mu,
  // sigma, eta), each of length n, contiguous in jac.
  void (*emg_model_jac)(const double p[4], double t_step, std::size_t n, double* model_accum,
                        double* jac);

  // y = W^T x + b with W row-major [in x out].
  void (*dense_forward)(const double* w, const double* b, const double* x, std::size_t in,
                        std::size_t out, double* y);
  // Accumulates gw += x dy^T, gb += dy and writes dx = W dy when dx != nullptr.
  void (*dense_backward)(const double* w, const double* x, const double* dy, std::size_t in,
                         std::size_t out, double* dx, double* gw, double* gb);
  // In-place Adam update; bias1/bias2 are the 1-beta^t correction factors.
  void (*adam_step)(double* w, double* m, double* v, const double* g, std::size_t n, double lr,
                    double beta1, double beta2, double eps, double bias1, double bias2);
};

const KernelOps& scalar_ops();
#if defined(ECHOLOC_HAVE_AVX2)
const KernelOps& avx2_ops();
#endif

/// The active lane: the best supported one, or the ECHOLOC_KERNEL env
/// override ("scalar" / "avx2").
const KernelOps& ops();

/// Forces a lane by name for tests; empty string restores auto-selection.
/// Throws DataError for unknown or unsupported names.
void set_kernel_override(const std::string& name);

std::string active_kernel_name();

}  // namespace echoloc::kern
