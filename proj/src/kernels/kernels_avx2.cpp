// AVX2/FMA lane. Compiled with -mavx2 -mfma only on x86_64; selected at
// runtime via CPUID. exp/erf use Cephes-style rational approximations so the
// whole array path stays vectorized; agreement with the scalar lane (libm)
// is a few ulps and is enforced by the kernel equivalence tests.

#if defined(ECHOLOC_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "echoloc/kernels.hpp"

namespace echoloc::kern {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kSqrt2OverPi = 0.7978845608028653559;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// --- exp: Cephes rational Pade form ---------------------------------------

inline __m256d vexp(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

  const __m256d lo_cut = _mm256_set1_pd(-707.0);
  const __m256d hi_cut = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo_cut, _CMP_LT_OQ);
  const __m256d overflow = _mm256_cmp_pd(x, hi_cut, _CMP_GT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, hi_cut), lo_cut);

  __m256d n = _mm256_round_pd(_mm256_fmadd_pd(x, log2e, _mm256_set1_pd(0.5)),
                              _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^n through the exponent field; n is within [-1021, 1023]
  const __m128i n32 = _mm256_cvttpd_epi32(n);
  const __m256i n64 = _mm256_cvtepi32_epi64(n32);
  const __m256i scaled =
      _mm256_add_epi64(_mm256_castpd_si256(e), _mm256_slli_epi64(n64, 52));
  e = _mm256_castsi256_pd(scaled);

  e = _mm256_blendv_pd(e, _mm256_setzero_pd(), underflow);
  e = _mm256_blendv_pd(e, _mm256_set1_pd(HUGE_VAL), overflow);
  return e;
}

// --- erf: series below 1, erfc-based rational form up to saturation --------

inline __m256d polevl8(__m256d x, const double (&c)[9]) {
  __m256d r = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 9; ++i) r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c[i]));
  return r;
}

inline __m256d verf(__m256d x) {
  static constexpr double T[5] = {9.60497373987051638749e0, 9.00260197203842689217e1,
                                  2.23200534594684319226e3, 7.00332514112805075473e3,
                                  5.55923013010394962768e4};
  static constexpr double U[5] = {3.35617141647503099647e1, 5.21357949780152679795e2,
                                  4.59432382970980127987e3, 2.26290000613890934246e4,
                                  4.92673942608635921086e4};
  static constexpr double P[9] = {2.46196981473530512524e-10, 5.64189564831068821977e-1,
                                  7.46321056442269912687e0,   4.86371970985681366614e1,
                                  1.96520832956077098242e2,   5.26445194995477358631e2,
                                  9.34528527171957607540e2,   1.02755188689515710272e3,
                                  5.57535335369399327526e2};
  static constexpr double Q[8] = {1.32281951154744992508e1, 8.67072140885989742329e1,
                                  3.54937778887819891062e2, 9.75708501743205489753e2,
                                  1.82390916687909736289e3, 2.24633760818710981792e3,
                                  1.65666309194161350182e3, 5.57535340817727675546e2};

  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  const __m256d ax = _mm256_and_pd(x, abs_mask);
  const __m256d sign = _mm256_andnot_pd(abs_mask, x);
  const __m256d one = _mm256_set1_pd(1.0);

  // |x| < 1: x * T(x^2) / U1(x^2)
  const __m256d z = _mm256_mul_pd(x, x);
  __m256d tn = _mm256_set1_pd(T[0]);
  for (int i = 1; i < 5; ++i) tn = _mm256_fmadd_pd(tn, z, _mm256_set1_pd(T[i]));
  __m256d ud = _mm256_add_pd(z, _mm256_set1_pd(U[0]));
  for (int i = 1; i < 5; ++i) ud = _mm256_fmadd_pd(ud, z, _mm256_set1_pd(U[i]));
  const __m256d r_series = _mm256_div_pd(_mm256_mul_pd(x, tn), ud);

  // 1 <= |x|: 1 - exp(-x^2) P(|x|)/Q1(|x|), saturating well past erf == 1
  const __m256d ez = vexp(_mm256_sub_pd(_mm256_setzero_pd(), _mm256_mul_pd(ax, ax)));
  const __m256d pn = polevl8(ax, P);
  __m256d qd = _mm256_add_pd(ax, _mm256_set1_pd(Q[0]));
  for (int i = 1; i < 8; ++i) qd = _mm256_fmadd_pd(qd, ax, _mm256_set1_pd(Q[i]));
  const __m256d erfc_pos = _mm256_div_pd(_mm256_mul_pd(ez, pn), qd);
  __m256d r_tail = _mm256_sub_pd(one, erfc_pos);
  const __m256d saturated = _mm256_cmp_pd(ax, _mm256_set1_pd(6.5), _CMP_GE_OQ);
  r_tail = _mm256_blendv_pd(r_tail, one, saturated);
  r_tail = _mm256_or_pd(r_tail, sign);

  const __m256d in_series = _mm256_cmp_pd(ax, one, _CMP_LT_OQ);
  return _mm256_blendv_pd(r_tail, r_series, in_series);
}

// --- array entry points -----------------------------------------------------

double a_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double a_sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double a_sum_sq(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(a + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

void a_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void a_subtract(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void a_complex_mag(const double* re, const double* im, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_loadu_pd(re + i);
    const __m256d m = _mm256_loadu_pd(im + i);
    _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_fmadd_pd(r, r, _mm256_mul_pd(m, m))));
  }
  for (; i < n; ++i) out[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
}

void a_exp_array(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, vexp(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double in[4] = {0, 0, 0, 0}, out[4];
    for (std::size_t k = i; k < n; ++k) in[k - i] = x[k];
    _mm256_storeu_pd(out, vexp(_mm256_loadu_pd(in)));
    for (std::size_t k = i; k < n; ++k) y[k] = out[k - i];
  }
}

void a_erf_array(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, verf(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double in[4] = {0, 0, 0, 0}, out[4];
    for (std::size_t k = i; k < n; ++k) in[k - i] = x[k];
    _mm256_storeu_pd(out, verf(_mm256_loadu_pd(in)));
    for (std::size_t k = i; k < n; ++k) y[k] = out[k - i];
  }
}

struct EmgLane {
  __m256d model, d_alpha, d_mu, d_sigma, d_eta;
};

inline EmgLane emg_lane(const double p[4], double t_step, std::size_t i0) {
  const __m256d alpha = _mm256_set1_pd(p[0]);
  const __m256d inv_sigma = _mm256_set1_pd(1.0 / p[2]);
  const __m256d eta = _mm256_set1_pd(p[3]);
  const __m256d t = _mm256_mul_pd(
      _mm256_set1_pd(t_step),
      _mm256_add_pd(_mm256_set1_pd(static_cast<double>(i0)), _mm256_set_pd(3.0, 2.0, 1.0, 0.0)));
  const __m256d zv = _mm256_mul_pd(_mm256_sub_pd(t, _mm256_set1_pd(p[1])), inv_sigma);
  const __m256d z2 = _mm256_mul_pd(zv, zv);
  const __m256d half = _mm256_set1_pd(-0.5);
  const __m256d g = vexp(_mm256_mul_pd(half, z2));
  const __m256d skew = _mm256_add_pd(
      _mm256_set1_pd(1.0), verf(_mm256_mul_pd(_mm256_mul_pd(eta, zv), _mm256_set1_pd(kInvSqrt2))));
  const __m256d pdf =
      vexp(_mm256_mul_pd(half, _mm256_mul_pd(_mm256_mul_pd(eta, eta), z2)));

  EmgLane lane;
  lane.d_alpha = _mm256_mul_pd(g, skew);
  lane.model = _mm256_mul_pd(alpha, lane.d_alpha);
  const __m256d core = _mm256_mul_pd(
      _mm256_mul_pd(_mm256_mul_pd(alpha, g), inv_sigma),
      _mm256_fnmadd_pd(_mm256_mul_pd(eta, _mm256_set1_pd(kSqrt2OverPi)), pdf,
                       _mm256_mul_pd(zv, skew)));
  lane.d_mu = core;
  lane.d_sigma = _mm256_mul_pd(zv, core);
  lane.d_eta = _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(alpha, g), zv),
                             _mm256_mul_pd(_mm256_set1_pd(kSqrt2OverPi), pdf));
  return lane;
}

void a_emg_add(const double p[4], double t_step, std::size_t n, double* accum) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const EmgLane lane = emg_lane(p, t_step, i);
    _mm256_storeu_pd(accum + i, _mm256_add_pd(_mm256_loadu_pd(accum + i), lane.model));
  }
  if (i < n) {
    const EmgLane lane = emg_lane(p, t_step, i);
    double out[4];
    _mm256_storeu_pd(out, lane.model);
    for (std::size_t k = i; k < n; ++k) accum[k] += out[k - i];
  }
}

void a_emg_model_jac(const double p[4], double t_step, std::size_t n, double* model_accum,
                     double* jac) {
  double* d_alpha = jac;
  double* d_mu = jac + n;
  double* d_sigma = jac + 2 * n;
  double* d_eta = jac + 3 * n;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const EmgLane lane = emg_lane(p, t_step, i);
    _mm256_storeu_pd(model_accum + i, _mm256_add_pd(_mm256_loadu_pd(model_accum + i), lane.model));
    _mm256_storeu_pd(d_alpha + i, lane.d_alpha);
    _mm256_storeu_pd(d_mu + i, lane.d_mu);
    _mm256_storeu_pd(d_sigma + i, lane.d_sigma);
    _mm256_storeu_pd(d_eta + i, lane.d_eta);
  }
  if (i < n) {
    const EmgLane lane = emg_lane(p, t_step, i);
    double m[4], da[4], dm[4], ds[4], de[4];
    _mm256_storeu_pd(m, lane.model);
    _mm256_storeu_pd(da, lane.d_alpha);
    _mm256_storeu_pd(dm, lane.d_mu);
    _mm256_storeu_pd(ds, lane.d_sigma);
    _mm256_storeu_pd(de, lane.d_eta);
    for (std::size_t k = i; k < n; ++k) {
      model_accum[k] += m[k - i];
      d_alpha[k] = da[k - i];
      d_mu[k] = dm[k - i];
      d_sigma[k] = ds[k - i];
      d_eta[k] = de[k - i];
    }
  }
}

void a_dense_forward(const double* w, const double* b, const double* x, std::size_t in,
                     std::size_t out, double* y) {
  std::size_t j = 0;
  for (; j + 4 <= out; j += 4) _mm256_storeu_pd(y + j, _mm256_loadu_pd(b + j));
  for (; j < out; ++j) y[j] = b[j];
  for (std::size_t i = 0; i < in; ++i) {
    const __m256d xi = _mm256_set1_pd(x[i]);
    const double* row = w + i * out;
    std::size_t k = 0;
    for (; k + 4 <= out; k += 4)
      _mm256_storeu_pd(y + k, _mm256_fmadd_pd(xi, _mm256_loadu_pd(row + k), _mm256_loadu_pd(y + k)));
    for (; k < out; ++k) y[k] += x[i] * row[k];
  }
}

void a_dense_backward(const double* w, const double* x, const double* dy, std::size_t in,
                      std::size_t out, double* dx, double* gw, double* gb) {
  std::size_t j = 0;
  for (; j + 4 <= out; j += 4)
    _mm256_storeu_pd(gb + j, _mm256_add_pd(_mm256_loadu_pd(gb + j), _mm256_loadu_pd(dy + j)));
  for (; j < out; ++j) gb[j] += dy[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double* row = w + i * out;
    double* grow = gw + i * out;
    const __m256d xi = _mm256_set1_pd(x[i]);
    __m256d acc = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= out; k += 4) {
      const __m256d d = _mm256_loadu_pd(dy + k);
      _mm256_storeu_pd(grow + k, _mm256_fmadd_pd(xi, d, _mm256_loadu_pd(grow + k)));
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + k), d, acc);
    }
    double s = hsum(acc);
    for (; k < out; ++k) {
      grow[k] += x[i] * dy[k];
      s += row[k] * dy[k];
    }
    if (dx) dx[i] = s;
  }
}

void a_adam_step(double* w, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bias1, double bias2) {
  const __m256d vb1 = _mm256_set1_pd(beta1), vnb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2), vnb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  const __m256d ib1 = _mm256_set1_pd(1.0 / bias1), ib2 = _mm256_set1_pd(1.0 / bias2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(vnb1, gv));
    const __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(vnb2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, ib1);
    const __m256d vhat = _mm256_mul_pd(vv, ib2);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat),
                                      _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    w[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
  }
}

}  // namespace

const KernelOps& avx2_ops() {
  static const KernelOps ops{
      "avx2",         a_dot,          a_sum,       a_sum_sq,        a_axpy,
      a_subtract,     a_complex_mag,  a_exp_array, a_erf_array,     a_emg_add,
      a_emg_model_jac, a_dense_forward, a_dense_backward, a_adam_step,
  };
  return ops;
}

}  // namespace echoloc::kern

#endif  // ECHOLOC_HAVE_AVX2
