#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "dfsnet/scene_sim.hpp"
#include "dfsnet/steering.hpp"
#include "support.hpp"

using namespace dfs;
using dfs::test::random_buffer;

namespace {

std::complex<double> response(const std::vector<double>& h, double w) {
  std::complex<double> s = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) s += h[n] * std::polar(1.0, -w * static_cast<double>(n));
  return s;
}

// -d(phase)/dw evaluated analytically: Re(sum n h e^{-jwn} / sum h e^{-jwn}).
double group_delay(const std::vector<double>& h, double w) {
  std::complex<double> num = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    num += static_cast<double>(n) * h[n] * std::polar(1.0, -w * static_cast<double>(n));
  }
  return std::real(num / response(h, w));
}

ScenePose line_pose() {
  ScenePose p;
  p.source = {10, 0, 0};
  p.mics = {{0, 0, 0}, {0.5, 0, 0}};
  return p;
}

}  // namespace

TEST_CASE("compute_tdoa on the analytic line example") {
  const auto t = compute_tdoa(line_pose());
  REQUIRE(t.size() == 1);
  CHECK(t[0] == doctest::Approx(16000.0 * 0.5 / 343.0).epsilon(1e-12));
  CHECK(t[0] == doctest::Approx(23.32).epsilon(1e-3));
}

TEST_CASE("compute_tdoa: equidistant microphones give zero delays") {
  ScenePose p;
  p.source = {0, 0, 0};
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 5.0;
    p.mics.push_back({2.0 * std::cos(a), 2.0 * std::sin(a), 0.0});
  }
  for (double t : compute_tdoa(p)) CHECK(std::abs(t) < 1e-9);
}

TEST_CASE("compute_tdoa preconditions") {
  ScenePose one;
  one.source = {1, 1, 1};
  one.mics = {{0, 0, 0}};
  CHECK_THROWS_AS(compute_tdoa(one), std::invalid_argument);
  auto coincident = line_pose();
  coincident.source = {0.5, 0, 0.0005};
  CHECK_THROWS_AS(compute_tdoa(coincident), std::invalid_argument);
  auto wrong_ref = line_pose();
  std::swap(wrong_ref.mics[0], wrong_ref.mics[1]);
  CHECK_THROWS_AS(compute_tdoa(wrong_ref), std::invalid_argument);
  auto bad = line_pose();
  bad.speed = 0.0;
  CHECK_THROWS_AS(compute_tdoa(bad), std::invalid_argument);
}

TEST_CASE("choose_reference") {
  ScenePose p;
  p.source = {0, 0, 0};
  p.mics = {{2, 0, 0}, {5, 0, 0}, {3, 0, 0}};
  CHECK(choose_reference(p) == std::vector<std::size_t>{1, 0, 2});
  p.mics = {{1, 0, 0}};
  CHECK(choose_reference(p) == std::vector<std::size_t>{0});
  p.mics = {{1, 0, 0}, {0, 3, 0}, {3, 0, 0}, {0, 0, 3}};
  CHECK(choose_reference(p) == std::vector<std::size_t>{1, 0, 2, 3});

  // Random scenes: brute-force argmax with lowest-index tie-break, and all
  // resulting TDOAs nonnegative.
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto pose = dfs::test::circular_pose(2 + s % 5, 0.1, s);
    const auto perm = choose_reference(pose);
    std::size_t best = 0;
    for (std::size_t c = 1; c < pose.mics.size(); ++c) {
      if (distance(pose.source, pose.mics[c]) > distance(pose.source, pose.mics[best])) best = c;
    }
    CHECK(perm[0] == best);
    for (double t : compute_tdoa(pose.permuted(perm))) CHECK(t >= 0.0);
  }
}

TEST_CASE("fractional filter: impulse at F = 0 and unit DC gain") {
  const auto h = design_fractional_filter(0.0, 17);
  for (std::size_t n = 0; n < h.size(); ++n) CHECK(h[n] == (n == 8 ? 1.0 : 0.0));
  for (double f = 0.0; f < 1.0; f += 0.05) {
    const auto g = design_fractional_filter(f, 17);
    CHECK(g.size() == 17u);
    double s = 0.0;
    for (double v : g) s += v;
    CHECK(std::abs(s - 1.0) < 1e-3);
  }
  CHECK_THROWS_AS(design_fractional_filter(0.2, 16), std::invalid_argument);
  CHECK_THROWS_AS(design_fractional_filter(0.2, 1), std::invalid_argument);
  CHECK_THROWS_AS(design_fractional_filter(1.0, 17), std::invalid_argument);
  CHECK_THROWS_AS(design_fractional_filter(-0.1, 17), std::invalid_argument);
}

TEST_CASE("fractional filter: half-sample shift of a 500 Hz tone") {
  const auto h = design_fractional_filter(0.5, 17);
  const double w = 2.0 * std::numbers::pi * 500.0 / 16000.0;
  std::vector<double> x(2000), y(2000);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::sin(w * static_cast<double>(t));
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size() && k <= t; ++k) acc += h[k] * x[t - k];
    y[t] = acc;
  }
  double worst = 0.0;
  for (std::size_t t = 17; t < y.size(); ++t) {
    worst = std::max(worst, std::abs(y[t] - std::sin(w * (static_cast<double>(t) - 8.5))));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("fractional filter: group delay at 1 kHz and passband flatness") {
  const double w1k = 2.0 * std::numbers::pi * 1000.0 / 16000.0;
  for (int i = 0; i < 100; ++i) {
    const double f = i / 100.0;
    const auto h = design_fractional_filter(f, 17);
    CHECK(std::abs(group_delay(h, w1k) - (8.0 + f)) < 0.02);
    for (int j = 1; j <= 80; ++j) {
      const double w = std::numbers::pi * 0.8 * j / 80.0;
      const double db = 20.0 * std::log10(std::abs(response(h, w)));
      CHECK(std::abs(db) <= 0.5);
    }
  }
}

TEST_CASE("build_steering_plan") {
  const std::vector<double> t{23.32};
  const auto p = build_steering_plan(t, 17);
  CHECK(p.int_delays == std::vector<int>{0, 23});
  CHECK(p.frac_delays[1] == doctest::Approx(0.32));
  CHECK(p.ref_comp_delay == 8);
  CHECK(p.frac_taps[0].empty());

  const auto z = build_steering_plan(std::vector<double>{0.0, 0.0}, 17);
  for (std::size_t c = 1; c < 3; ++c) {
    CHECK(z.int_delays[c] == 0);
    CHECK(z.frac_taps[c] == design_fractional_filter(0.0, 17));
  }
  const auto seven = build_steering_plan(std::vector<double>{7.0}, 17);
  CHECK(seven.int_delays[1] == 7);
  CHECK(seven.frac_delays[1] == 0.0);
  CHECK(seven.max_delay() == 7 + 16);  // last nonzero tap

  CHECK_THROWS_AS(build_steering_plan(std::vector<double>{-0.1}, 17), std::invalid_argument);
  CHECK_THROWS_AS(build_steering_plan(std::vector<double>{1.0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_steering_plan(std::vector<double>{NAN}, 17), std::invalid_argument);
}

TEST_CASE("apply_steering: impulses, identical channels and the target example") {
  const auto plan = build_steering_plan(std::vector<double>{5.0}, 17);
  MultichannelBuffer imp(2, 40, 16000.0);
  imp.at(0, 0) = 1.0;
  imp.at(1, 0) = 1.0;
  const auto out = apply_steering(plan, imp);
  for (std::size_t t = 0; t < 40; ++t) {
    CHECK(out.at(0, t) == (t == 8 ? 1.0 : 0.0));
    CHECK(out.at(1, t) == (t == 13 ? 1.0 : 0.0));
  }
  const auto target = make_target(plan, imp);
  for (std::size_t t = 0; t < 40; ++t) CHECK(target[t] == (t == 8 || t == 13 ? 0.5 : 0.0));

  const auto zero = build_steering_plan(std::vector<double>{0.0, 0.0, 0.0}, 17);
  auto same = random_buffer(4, 300, 5);
  for (std::size_t c = 1; c < 4; ++c) {
    std::copy(same.channel(0).begin(), same.channel(0).end(), same.channel(c).begin());
  }
  const auto al = apply_steering(zero, same);
  for (std::size_t c = 1; c < 4; ++c) {
    for (std::size_t t = 0; t < 300; ++t) CHECK(std::abs(al.at(c, t) - al.at(0, t)) < 1e-3);
  }
  CHECK(delay_and_sum(al).size() == 300u);
  CHECK_THROWS_AS(apply_steering(plan, same), std::invalid_argument);
}

TEST_CASE("steering is causal and linear") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto plan = dfs::test::random_plan(4, s);
    const auto a = random_buffer(4, 500, 100 + s);
    const auto b = random_buffer(4, 500, 200 + s);
    auto c = a;
    const std::size_t cut = 100 + 30 * s;
    for (std::size_t ch = 0; ch < 4; ++ch) {
      for (std::size_t t = cut + 1; t < 500; ++t) c.at(ch, t) = b.at(ch, t);
    }
    const auto ya = apply_steering(plan, a);
    const auto yc = apply_steering(plan, c);
    for (std::size_t ch = 0; ch < 4; ++ch) {
      for (std::size_t t = 0; t <= cut; ++t) CHECK(ya.at(ch, t) == yc.at(ch, t));
    }
    MultichannelBuffer sum(4, 500, 16000.0);
    for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] = 2.0 * a.data()[i] - 0.5 * b.data()[i];
    const auto ts = make_target(plan, sum);
    const auto ta = make_target(plan, a);
    const auto tb = make_target(plan, b);
    for (std::size_t t = 0; t < 500; ++t) CHECK(std::abs(ts[t] - (2.0 * ta[t] - 0.5 * tb[t])) < 1e-9);
  }
}

TEST_CASE("noise-free mix: target equals delay-and-sum of the mix bit for bit") {
  const auto plan = dfs::test::random_plan(3, 9);
  const auto clean = random_buffer(3, 400, 10);
  CHECK(make_target(plan, clean) == delay_and_sum(apply_steering(plan, clean)));
}

TEST_CASE("SteeringStream equals apply_steering for any chunking") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto plan = dfs::test::random_plan(1 + s % 6, 40 + s);
    const auto in = random_buffer(plan.channels(), 700, 50 + s);
    const auto batch = apply_steering(plan, in);
    SteeringStream stream(plan);
    MultichannelBuffer out(plan.channels(), 700, 16000.0);
    std::size_t pos = 0;
    std::size_t chunk = 1;
    while (pos < 700) {
      const std::size_t n = std::min<std::size_t>(chunk, 700 - pos);
      for (std::size_t c = 0; c < plan.channels(); ++c) {
        stream.process(c, in.channel(c).data() + pos, out.channel(c).data() + pos, n);
      }
      pos += n;
      chunk = chunk * 3 % 37 + 1;
    }
    CHECK(out == batch);
    stream.reset();
    MultichannelBuffer again(plan.channels(), 700, 16000.0);
    for (std::size_t c = 0; c < plan.channels(); ++c) {
      stream.process(c, in.channel(c).data(), again.channel(c).data(), 700);
    }
    CHECK(again == batch);
  }
}

TEST_CASE("delay_and_sum array gain with independent noise") {
  const std::size_t T = 4 * 16000;
  const auto speech = synthetic_speech(T, 16000.0, 3);
  for (std::size_t C : {1u, 2u, 4u, 6u}) {
    const auto noise = random_buffer(C, T, 77 + C, 0.1);
    MultichannelBuffer mix(C, T, 16000.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) mix.at(c, t) = speech[t] + noise.at(c, t);
    }
    const auto ds = delay_and_sum(mix);
    const auto noise_ds = delay_and_sum(noise);
    double es = 0.0, en_in = 0.0, en_out = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      es += speech[t] * speech[t];
      en_in += noise.at(0, t) * noise.at(0, t);
      en_out += noise_ds[t] * noise_ds[t];
      CHECK(std::abs(ds[t] - (speech[t] + noise_ds[t])) < 1e-12);
    }
    const double gain = 10.0 * std::log10(es / en_out) - 10.0 * std::log10(es / en_in);
    CHECK(std::abs(gain - 10.0 * std::log10(static_cast<double>(C))) < 0.5);
  }
}

TEST_CASE("perturb_tdoa: zero angle, determinism, geometric bound") {
  ScenePose p;
  p.mics = {{0, 0, 0}, {0.1, 0, 0}, {0.05, 0.08, 0}, {0.02, 0.03, 0.05}};
  p.source = {14.0, 13.0, 5.0};
  p = p.permuted(choose_reference(p));
  const auto truth = compute_tdoa(p);
  CHECK(perturb_tdoa(p, 0.0, 1) == truth);
  CHECK(perturb_tdoa(p, 5.0, 42) == perturb_tdoa(p, 5.0, 42));
  CHECK(perturb_tdoa(p, 5.0, 42) != perturb_tdoa(p, 5.0, 43));
  double aperture = 0.0;
  for (const auto& a : p.mics) {
    for (const auto& b : p.mics) aperture = std::max(aperture, distance(a, b));
  }
  const double bound = aperture * 16000.0 * std::sin(10.0 * std::numbers::pi / 180.0) / 343.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto t = perturb_tdoa(p, 5.0, s);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t[i] >= 0.0);
      CHECK(std::abs(t[i] - truth[i]) <= bound);
    }
  }
  CHECK_THROWS_AS(perturb_tdoa(p, -1.0, 0), std::invalid_argument);
}

TEST_CASE("post-steering direct paths are aligned on simulated far-field scenes") {
  const Vec3 room{9.0, 8.0, 3.5};
  for (std::uint64_t s = 0; s < 8; ++s) {
    auto pose = dfs::test::circular_pose(4, 0.07, s);
    for (auto& m : pose.mics) m = {m[0] + 1.5, m[1] + 1.5, m[2]};
    pose.source = {pose.source[0] + 1.5, pose.source[1] + 1.5, pose.source[2]};
    const auto perm = choose_reference(pose);
    pose = pose.permuted(perm);
    const auto plan = build_steering_plan(compute_tdoa(pose), 17);

    const std::size_t T = 4000;
    const auto src = dfs::test::random_vector(T, 900 + s);
    MultichannelBuffer direct(4, T, 16000.0);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto rir = image_method_rir(room, pose.source, pose.mics[c], 0.0, 0, 16000.0);
      for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < rir.taps.size() && k <= t; ++k) acc += rir.taps[k] * src[t - k];
        direct.at(c, t) = acc;
      }
    }
    const auto al = apply_steering(plan, direct);
    for (std::size_t c = 1; c < 4; ++c) {
      int best = 0;
      double best_v = -1e300;
      for (int lag = -20; lag <= 20; ++lag) {
        double v = 0.0;
        for (std::size_t t = 200; t + 200 < T; ++t) v += al.at(0, t) * al.at(c, static_cast<std::size_t>(static_cast<long>(t) + lag));
        if (v > best_v) {
          best_v = v;
          best = lag;
        }
      }
      CHECK(std::abs(best) <= 1);
    }
  }
}
