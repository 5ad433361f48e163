#include <doctest.h>

#include <cmath>
#include <vector>

#include "echoloc/errors.hpp"
#include "echoloc/kernels.hpp"
#include "echoloc/memg.hpp"
#include "echoloc/rng.hpp"
#include "oracles.hpp"

using namespace echoloc;

namespace {

std::vector<double> model_envelope(const std::vector<EmgParams>& comps, int t_count) {
  std::vector<double> env(t_count);
  for (int i = 0; i < t_count; ++i) env[i] = memg_sum(comps, i);
  return env;
}

}  // namespace

TEST_CASE("emg_eval") {
  const EmgParams p{1.0, 30.0, 2.0, 1.0};
  CHECK(emg_eval(p, 30.0) == doctest::Approx(1.0).epsilon(1e-15));

  const EmgParams zero{0.0, 30.0, 2.0, 1.0};
  for (double t : {0.0, 15.0, 30.0, 60.0}) CHECK(emg_eval(zero, t) == 0.0);

  // hand evaluation: exp(-(32-30)^2 / (2*2^2)) * (1 + erf(2 / (2 sqrt 2)))
  //                = exp(-1/2) * (1 + erf(1/sqrt(2)))
  CHECK(emg_eval(p, 32.0) == doctest::Approx(1.020602767757).epsilon(1e-9));

  CHECK_THROWS_AS(emg_eval({1, 0, 0, 0}, 1.0), DataError);
}

TEST_CASE("emg mirror identity") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const EmgParams p{rng.uniform(0.1, 3), rng.uniform(10, 50), rng.uniform(0.5, 4),
                      rng.uniform(-3, 3)};
    EmgParams mirrored = p;
    mirrored.asymmetry = -p.asymmetry;
    const double t = rng.uniform(0, 64);
    CHECK(emg_eval(p, t) == doctest::Approx(emg_eval(mirrored, 2 * p.mean - t)).epsilon(1e-12));
  }
}

TEST_CASE("memg_sum") {
  CHECK(memg_sum({}, 10.0) == 0.0);

  const EmgParams p{1.4, 20.0, 2.0, 0.5};
  std::vector<EmgParams> one{p};
  CHECK(memg_sum(one, 21.3) == doctest::Approx(emg_eval(p, 21.3)));

  // well separated components superpose; at each mean the other contributes
  // less than 1e-6 of its amplitude
  std::vector<EmgParams> two{{1.0, 15.0, 1.5, 0.0}, {2.0, 45.0, 1.5, 0.0}};
  CHECK(memg_sum(two, 15.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(memg_sum(two, 45.0) == doctest::Approx(2.0).epsilon(1e-6));
  const double at_20 = emg_eval(two[0], 20.0) + emg_eval(two[1], 20.0);
  CHECK(memg_sum(two, 20.0) == doctest::Approx(at_20));
}

TEST_CASE("analytic jacobian matches finite differences") {
  Rng rng(6);
  const std::size_t grid = 64;
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = rng.uniform(0.2, 3);
    const double mu = rng.uniform(5, 59);
    const double sigma = rng.uniform(0.6, 4);
    const double eta = rng.uniform(-2.5, 2.5);

    const double p[4] = {alpha, mu, sigma, eta};
    std::vector<double> model(grid, 0.0), jac(4 * grid);
    kern::ops().emg_model_jac(p, 1.0, grid, model.data(), jac.data());

    const std::size_t t = 1 + rng.below(grid - 2);
    const double td = static_cast<double>(t);
    const double fd[4] = {
        oracle::central_diff([&](double a) { return emg_eval({a, mu, sigma, eta}, td); }, alpha),
        oracle::central_diff([&](double m) { return emg_eval({alpha, m, sigma, eta}, td); }, mu),
        oracle::central_diff([&](double s) { return emg_eval({alpha, mu, s, eta}, td); }, sigma),
        oracle::central_diff([&](double e) { return emg_eval({alpha, mu, sigma, e}, td); }, eta)};
    for (int d = 0; d < 4; ++d) {
      const double analytic = jac[d * grid + t];
      CHECK(std::abs(analytic - fd[d]) / std::max(1.0, std::abs(fd[d])) < 1e-5);
    }
    CHECK(model[t] == doctest::Approx(emg_eval({alpha, mu, sigma, eta}, td)).epsilon(1e-12));
  }
}

TEST_CASE("fit_memg recovers a single component") {
  const EmgParams truth{1.0, 30.0, 2.0, 1.0};
  const auto env = model_envelope({truth}, 64);
  const std::vector<int> seeds{28};
  const ChannelFit fit = fit_memg(env, seeds);
  REQUIRE(fit.components.size() == 1);
  CHECK(std::abs(fit.components[0].mean - truth.mean) < 0.1);
  CHECK(std::abs(fit.components[0].amplitude - truth.amplitude) < 0.01);
  CHECK(fit.energy < 1e-10);
}

TEST_CASE("fit_memg on a zero envelope") {
  const std::vector<double> env(64, 0.0);
  const std::vector<int> seeds{20};
  const ChannelFit fit = fit_memg(env, seeds);
  REQUIRE(fit.components.size() == 1);
  CHECK(fit.components[0].amplitude <= 1e-6);
  CHECK(fit.energy <= 1e-12);
}

TEST_CASE("fit_memg recovers two components") {
  const EmgParams a{1.0, 20.0, 2.0, 1.0};
  const EmgParams b{0.7, 40.0, 2.0, 1.0};
  const auto env = model_envelope({a, b}, 64);
  const std::vector<int> seeds{18, 42};
  const ChannelFit fit = fit_memg(env, seeds);
  REQUIRE(fit.components.size() == 2);
  CHECK(std::abs(fit.components[0].mean - 20.0) < 0.2);
  CHECK(std::abs(fit.components[1].mean - 40.0) < 0.2);
}

TEST_CASE("fit energy control") {
  const EmgParams truth{1.2, 33.0, 2.5, 0.8};
  auto env = model_envelope({truth}, 64);
  Rng rng(3);
  for (double& v : env) v += rng.uniform(-0.01, 0.01);

  const std::vector<int> seeds{31};
  const ChannelFit fit = fit_memg(env, seeds);

  // returned energy never exceeds the initialization energy
  std::vector<EmgParams> init{{env[31], 31.0, 2.0, 0.0}};
  double init_energy = 0;
  for (int i = 0; i < 64; ++i) {
    const double r = env[i] - memg_sum(init, i);
    init_energy += r * r;
  }
  CHECK(fit.energy <= init_energy);

  // idempotence: refitting from the fitted parameters keeps the energy
  const ChannelFit refit = fit_memg_from_params(env, fit.components);
  CHECK(std::abs(refit.energy - fit.energy) < 1e-12);
}

TEST_CASE("fit_memg errors") {
  const std::vector<double> env(64, 0.0);
  CHECK_THROWS_AS(fit_memg(env, {}), DataError);
}

TEST_CASE("echo_power") {
  CHECK(echo_power({0.0, 30, 2, 0}, 64) == 0.0);

  // symmetric component well inside the window: sum approximates the
  // Gaussian integral sigma * sqrt(2 pi)
  const double power = echo_power({1.0, 32.0, 2.0, 0.0}, 64);
  CHECK(power == doctest::Approx(2.0 * std::sqrt(2.0 * M_PI)).epsilon(1e-6));

  // monotone in amplitude
  double previous = 0;
  for (double a : {0.5, 1.0, 1.5, 2.0}) {
    const double p = echo_power({a, 32.0, 2.0, 0.7}, 64);
    CHECK(p > previous);
    previous = p;
  }

  // direct summation oracle
  const EmgParams p{1.3, 25.0, 2.2, 1.1};
  double direct = 0;
  for (int i = 0; i < 64; ++i) direct += emg_eval(p, i);
  CHECK(echo_power(p, 64) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("assemble_features") {
  const EmgParams truth{1.0, 30.0, 2.0, 1.0};
  const auto env = model_envelope({truth}, 64);
  const std::vector<int> seeds{28};
  const ChannelFit fit = fit_memg(env, seeds);
  const auto features = assemble_features(fit, env, 1.0, 64);
  REQUIRE(features.size() == 1);

  // perfect fit: both confidences reach 1
  CHECK(features[0].echo_confidence == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(features[0].frame_confidence == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(features[0].toa_samples == 28.0);

  const auto arr = features[0].as_array();
  CHECK(arr.size() == 8);
  CHECK(arr[0] == features[0].params.amplitude);
  CHECK(arr[7] == features[0].frame_confidence);

  // amplitude-ratio property through echo power
  const EmgParams big{2.0, 20.0, 2.0, 0.5};
  const EmgParams small{0.2, 44.0, 2.0, 0.5};
  const auto env2 = model_envelope({big, small}, 64);
  const std::vector<int> seeds2{18, 42};
  const ChannelFit fit2 = fit_memg(env2, seeds2);
  const auto f2 = assemble_features(fit2, env2, 1.0, 64);
  REQUIRE(f2.size() == 2);
  CHECK(f2[0].power / f2[1].power == doctest::Approx(10.0).epsilon(0.01));
}
