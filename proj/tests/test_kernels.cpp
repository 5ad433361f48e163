#include <doctest.h>

#include <cmath>
#include <vector>

#include "echoloc/kernels.hpp"
#include "echoloc/rng.hpp"

using namespace echoloc;
using kern::KernelOps;

namespace {

std::vector<const KernelOps*> available_lanes() {
  std::vector<const KernelOps*> lanes{&kern::scalar_ops()};
#if defined(ECHOLOC_HAVE_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    lanes.push_back(&kern::avx2_ops());
#endif
  return lanes;
}

bool close(double a, double b, double rel = 1e-12, double abs_tol = 1e-300) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_tol;
}

}  // namespace

TEST_CASE("kernel lanes agree on reductions and elementwise ops") {
  const auto lanes = available_lanes();
  Rng rng(19);
  for (std::size_t n : {1u, 3u, 4u, 17u, 64u, 257u}) {
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-10, 10);
      b[i] = rng.uniform(-10, 10);
    }
    const double ref_dot = kern::scalar_ops().dot(a.data(), b.data(), n);
    const double ref_sum = kern::scalar_ops().sum(a.data(), n);
    const double ref_sq = kern::scalar_ops().sum_sq(a.data(), n);
    for (const KernelOps* lane : lanes) {
      CHECK(close(lane->dot(a.data(), b.data(), n), ref_dot, 1e-12, 1e-12));
      CHECK(close(lane->sum(a.data(), n), ref_sum, 1e-12, 1e-12));
      CHECK(close(lane->sum_sq(a.data(), n), ref_sq, 1e-12, 1e-12));

      std::vector<double> out(n), ref_out(n);
      lane->subtract(a.data(), b.data(), out.data(), n);
      kern::scalar_ops().subtract(a.data(), b.data(), ref_out.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == ref_out[i]);

      std::vector<double> y(n, 1.0), ref_y(n, 1.0);
      lane->axpy(0.37, a.data(), y.data(), n);
      kern::scalar_ops().axpy(0.37, a.data(), ref_y.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(y[i], ref_y[i], 1e-14, 1e-14));

      lane->complex_mag(a.data(), b.data(), out.data(), n);
      kern::scalar_ops().complex_mag(a.data(), b.data(), ref_out.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(out[i], ref_out[i], 1e-14, 1e-14));
    }
  }
}

TEST_CASE("kernel lanes agree on exp and erf") {
  const auto lanes = available_lanes();
  Rng rng(29);
  std::vector<double> x;
  // dense random coverage plus the regions where approximations switch
  for (int i = 0; i < 4000; ++i) x.push_back(rng.uniform(-40, 3));
  for (int i = 0; i < 2000; ++i) x.push_back(rng.uniform(-8, 8));
  for (double edge : {0.0, -0.0, 1.0, -1.0, 0.999999, -0.999999, 1.000001, 6.49, 6.51, -6.51,
                      25.0, -25.0, -700.0, -710.0, -745.0})
    x.push_back(edge);

  std::vector<double> ref_exp(x.size()), ref_erf(x.size());
  kern::scalar_ops().exp_array(x.data(), ref_exp.data(), x.size());
  kern::scalar_ops().erf_array(x.data(), ref_erf.data(), x.size());
  for (const KernelOps* lane : lanes) {
    std::vector<double> got(x.size());
    lane->exp_array(x.data(), got.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(close(got[i], ref_exp[i], 5e-14, 1e-300));
    lane->erf_array(x.data(), got.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(close(got[i], ref_erf[i], 5e-14, 1e-16));
  }
}

TEST_CASE("kernel lanes agree on the emg model and jacobian") {
  const auto lanes = available_lanes();
  Rng rng(37);
  for (int trial = 0; trial < 60; ++trial) {
    const double p[4] = {rng.uniform(0, 3), rng.uniform(-5, 70), rng.uniform(0.25, 5),
                         rng.uniform(-6, 6)};
    const double t_step = trial % 2 == 0 ? 1.0 : 0.5;
    const std::size_t n = 61 + rng.below(8);

    std::vector<double> ref_model(n, 0.1), ref_jac(4 * n);
    kern::scalar_ops().emg_model_jac(p, t_step, n, ref_model.data(), ref_jac.data());
    std::vector<double> ref_add(n, 0.2);
    kern::scalar_ops().emg_add(p, t_step, n, ref_add.data());

    for (const KernelOps* lane : lanes) {
      std::vector<double> model(n, 0.1), jac(4 * n);
      lane->emg_model_jac(p, t_step, n, model.data(), jac.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(close(model[i], ref_model[i], 1e-12, 1e-15));
      for (std::size_t i = 0; i < 4 * n; ++i) CHECK(close(jac[i], ref_jac[i], 1e-11, 1e-13));

      std::vector<double> add(n, 0.2);
      lane->emg_add(p, t_step, n, add.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(close(add[i], ref_add[i], 1e-12, 1e-15));
    }
  }
}

TEST_CASE("kernel lanes agree on dense layers and adam") {
  const auto lanes = available_lanes();
  Rng rng(43);
  for (auto [in, out] : {std::pair<int, int>{8, 32}, {32, 32}, {32, 4}, {4, 1}}) {
    std::vector<double> w(in * out), b(out), x(in), dy(out);
    for (double& v : w) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    for (double& v : x) v = rng.uniform(-2, 2);
    for (double& v : dy) v = rng.uniform(-1, 1);

    std::vector<double> ref_y(out);
    kern::scalar_ops().dense_forward(w.data(), b.data(), x.data(), in, out, ref_y.data());
    std::vector<double> ref_dx(in), ref_gw(in * out, 0.05), ref_gb(out, -0.02);
    kern::scalar_ops().dense_backward(w.data(), x.data(), dy.data(), in, out, ref_dx.data(),
                                      ref_gw.data(), ref_gb.data());
    for (const KernelOps* lane : lanes) {
      std::vector<double> y(out);
      lane->dense_forward(w.data(), b.data(), x.data(), in, out, y.data());
      for (int j = 0; j < out; ++j) CHECK(close(y[j], ref_y[j], 1e-13, 1e-14));

      std::vector<double> dx(in), gw(in * out, 0.05), gb(out, -0.02);
      lane->dense_backward(w.data(), x.data(), dy.data(), in, out, dx.data(), gw.data(),
                           gb.data());
      for (int i = 0; i < in; ++i) CHECK(close(dx[i], ref_dx[i], 1e-13, 1e-14));
      for (int i = 0; i < in * out; ++i) CHECK(close(gw[i], ref_gw[i], 1e-13, 1e-14));
      for (int j = 0; j < out; ++j) CHECK(close(gb[j], ref_gb[j], 1e-13, 1e-14));
    }
  }

  // adam
  const std::size_t n = 137;
  std::vector<double> w0(n), m0(n), v0(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    w0[i] = rng.uniform(-1, 1);
    m0[i] = rng.uniform(-0.1, 0.1);
    v0[i] = rng.uniform(0, 0.1);
    g[i] = rng.uniform(-1, 1);
  }
  std::vector<double> rw = w0, rm = m0, rv = v0;
  kern::scalar_ops().adam_step(rw.data(), rm.data(), rv.data(), g.data(), n, 5e-4, 0.9, 0.999,
                               1e-8, 0.1, 0.001);
  for (const KernelOps* lane : lanes) {
    std::vector<double> lw = w0, lm = m0, lv = v0;
    lane->adam_step(lw.data(), lm.data(), lv.data(), g.data(), n, 5e-4, 0.9, 0.999, 1e-8, 0.1,
                    0.001);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(close(lw[i], rw[i], 1e-13, 1e-15));
      CHECK(close(lm[i], rm[i], 1e-13, 1e-15));
      CHECK(close(lv[i], rv[i], 1e-13, 1e-15));
    }
  }
}

TEST_CASE("kernel override") {
  const std::string active = kern::active_kernel_name();
  kern::set_kernel_override("scalar");
  CHECK(kern::active_kernel_name() == "scalar");
  kern::set_kernel_override("");
  CHECK(kern::active_kernel_name() == active);
}
