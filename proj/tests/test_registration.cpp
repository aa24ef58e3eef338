#include <cmath>
#include <numbers>
#include <random>

#include "csar/error.hpp"
#include "csar/registration.hpp"
#include "csar/synth.hpp"
#include "doctest.h"

using namespace csar;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

BinaryDescriptor random_descriptor(std::mt19937_64& rng) {
  BinaryDescriptor d;
  for (auto& w : d.words) w = rng();
  return d;
}

// Independent re-derivation of the shipped sampling table.
std::vector<std::array<int, 4>> derive_pattern() {
  std::uint64_t state = 0x5EED0F0B5EED0F0BULL;
  auto next = [&] {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  auto draw = [&] {
    for (;;) {
      const std::uint64_t v = next();
      const int x = int((v & 0xFFFFFFFFULL) % 27) - 13;
      const int y = int((v >> 32) % 27) - 13;
      if (x * x + y * y <= 169) return std::pair(x, y);
    }
  };
  std::vector<std::array<int, 4>> out;
  while (out.size() < 256) {
    const auto a = draw();
    const auto b = draw();
    if (a != b) out.push_back({a.first, a.second, b.first, b.second});
  }
  return out;
}

Frame textured(int size, std::uint64_t seed, double rotation_deg = 0.0, BackgroundSpec bg = {0, 128.0, 60.0, 6.0}) {
  SceneSpec s;
  s.width = size;
  s.height = size;
  s.frame_count = 2;
  s.rotation_rate = rotation_deg;
  bg.texture_seed = seed;
  s.background = bg;
  return render_clean_frame(s, rotation_deg == 0.0 ? 0 : 1).frame;
}

// 90 degree rotation: the pixel at (X, Y) moves to (N - 1 - Y, X).
Frame rotate90(const Frame& f) {
  const auto n = f.rows();
  Frame g(n, n);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index x = 0; x < n; ++x) g(y, x) = f(n - 1 - x, y);
  }
  return g;
}

std::vector<BinaryDescriptor> descriptors(const std::vector<Feature>& f) {
  std::vector<BinaryDescriptor> d;
  for (const auto& x : f) d.push_back(x.descriptor);
  return d;
}

}  // namespace

TEST_SUITE("registration") {
  TEST_CASE("shipped pattern matches its generator") {
    const auto want = derive_pattern();
    const auto got = descriptor_pattern();
    for (std::size_t i = 0; i < 256; ++i) {
      CAPTURE(i);
      CHECK(got[i] == want[i]);
      CHECK(got[i][0] * got[i][0] + got[i][1] * got[i][1] <= kPatternRadius * kPatternRadius);
    }
  }

  TEST_CASE("hamming distance is a metric on random descriptors") {
    std::mt19937_64 rng(1);
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const auto a = random_descriptor(rng);
      const auto b = random_descriptor(rng);
      const int d = hamming_distance(a, b);
      CHECK(d == hamming_distance(b, a));
      CHECK(hamming_distance(a, a) == 0);
      CHECK((d == 0) == (a == b));
      sum += d;
    }
    CHECK(std::abs(sum / 1000.0 - 128.0) <= 5.0);
    BinaryDescriptor one;
    one.set(200);
    CHECK(hamming_distance(one, BinaryDescriptor{}) == 1);
  }

  TEST_CASE("constant frame has no features") {
    CHECK(detect_features(Frame::Constant(96, 96, 120.0), {}).empty());
    CHECK_THROWS_AS(detect_features(Frame::Constant(63, 96, 120.0), {}), ParameterError);
  }

  TEST_CASE("square corners are found and survive a 90 degree turn") {
    Frame f = Frame::Constant(128, 128, 20.0);
    f.block(50, 40, 20, 20).setConstant(200.0);  // x in [40, 60), y in [50, 70)
    const auto feats = detect_features(f, {});
    const std::array<Point, 4> corners{Point(40, 50), Point(59, 50), Point(40, 69), Point(59, 69)};
    for (const auto& c : corners) {
      CHECK(std::any_of(feats.begin(), feats.end(), [&](const Feature& k) {
        return (Point(k.keypoint.x, k.keypoint.y) - c).norm() <= 2.0;
      }));
    }

    const auto rotated = detect_features(rotate90(f), {});
    int compared = 0;
    for (const auto& a : feats) {
      const Point mapped(127 - a.keypoint.y, a.keypoint.x);
      for (const auto& b : rotated) {
        if ((Point(b.keypoint.x, b.keypoint.y) - mapped).norm() > 0.5) continue;
        ++compared;
        CHECK(hamming_distance(a.descriptor, b.descriptor) <= 64);
      }
    }
    CHECK(compared >= 4);
  }

  TEST_CASE("mutual matching") {
    std::mt19937_64 rng(2);
    std::vector<BinaryDescriptor> set;
    for (int i = 0; i < 20; ++i) set.push_back(random_descriptor(rng));
    const auto self = match_features(set, set);
    REQUIRE(self.size() == set.size());
    for (const auto& m : self) {
      CHECK(m.index_a == m.index_b);
      CHECK(m.distance == 0);
    }

    const std::vector<BinaryDescriptor> a{set[0]};
    const std::vector<BinaryDescriptor> b{set[1], set[0]};
    const auto one = match_features(a, b);
    REQUIRE(one.size() == 1);
    CHECK(one[0].index_b == 1);
    CHECK(one[0].distance == 0);

    CHECK_THROWS_AS(match_features({}, b), ParameterError);
    CHECK_THROWS_AS(match_features(a, {}), ParameterError);
  }

  TEST_CASE("matches are one-to-one") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<BinaryDescriptor> a, b;
      for (int i = 0; i < 30; ++i) a.push_back(random_descriptor(rng));
      for (int i = 0; i < 25; ++i) b.push_back(random_descriptor(rng));
      const auto m = match_features(a, b);
      std::vector<int> used_a(a.size()), used_b(b.size());
      for (const auto& x : m) {
        CHECK(++used_a[x.index_a] == 1);
        CHECK(++used_b[x.index_b] == 1);
        CHECK(x.distance == hamming_distance(a[x.index_a], b[x.index_b]));
      }
    }
  }

  TEST_CASE("match filtering") {
    std::vector<FeatureMatch> m;
    for (int i = 0; i < 10; ++i) m.push_back({std::size_t(i), std::size_t(i), (i * 7) % 10});
    const auto half = filter_matches(m, 0.5);
    REQUIRE(half.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(half[i].distance == i);

    const auto all = filter_matches(m, 1.0);
    REQUIRE(all.size() == 10);
    CHECK(std::is_sorted(all.begin(), all.end(), [](auto& x, auto& y) { return x.distance < y.distance; }));

    std::vector<FeatureMatch> ties;
    for (int i = 0; i < 10; ++i) ties.push_back({std::size_t(i), std::size_t(9 - i), 4});
    const auto three = filter_matches(ties, 0.3);
    REQUIRE(three.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(three[i].index_a == std::size_t(i));

    CHECK(filter_matches(m, 0.01).size() == 1);  // ceil
    CHECK_THROWS_AS(filter_matches({}, 0.5), ParameterError);
    CHECK_THROWS_AS(filter_matches(m, 0.0), ParameterError);
    CHECK_THROWS_AS(filter_matches(m, 1.5), ParameterError);
  }

  TEST_CASE("rigid fit on exact correspondences") {
    const Point c(255.5, 255.5);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> pos(0.0, 511.0);
    std::vector<Point> src;
    for (int i = 0; i < 40; ++i) src.emplace_back(pos(rng), pos(rng));

    auto pairs_for = [&](const RigidTransform& t) {
      std::vector<std::pair<Point, Point>> p;
      for (const auto& s : src) p.emplace_back(s, t.apply(s));
      return p;
    };

    const auto rot = estimate_transform(pairs_for({10 * kDeg, 0, 0, c}), c);
    CHECK(std::abs(rot.angle / kDeg - 10.0) <= 1e-6);

    const auto shift = estimate_transform(pairs_for({0, 5, -3, c}), c);
    CHECK(std::abs(shift.angle) <= 1e-12);
    CHECK(shift.tx == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(std::abs(shift.ty + 3.0) <= 1e-9);

    const auto id = estimate_transform(pairs_for(RigidTransform::identity(c)), c);
    CHECK(std::abs(id.angle) <= 1e-12);
    CHECK(std::abs(id.tx) <= 1e-9);
    CHECK(std::abs(id.ty) <= 1e-9);

    std::uniform_real_distribution<double> ang(-30.0, 30.0), tr(-20.0, 20.0);
    for (int i = 0; i < 100; ++i) {
      const RigidTransform truth{ang(rng) * kDeg, tr(rng), tr(rng), c};
      const auto pairs = pairs_for(truth);
      const auto fit = estimate_transform(pairs, c);
      double worst = 0.0;
      for (const auto& [a, b] : pairs) worst = std::max(worst, (fit.apply(a) - b).norm());
      CHECK(worst < 1e-9);
    }
  }

  TEST_CASE("rigid fit discards gross outliers") {
    const Point c(100, 100);
    const RigidTransform truth{4 * kDeg, 2.0, -1.0, c};
    std::vector<std::pair<Point, Point>> pairs;
    for (int i = 0; i < 30; ++i) {
      const Point p(10 + 6 * i, 200 - 5 * i);
      pairs.emplace_back(p, truth.apply(p));
    }
    pairs[3].second += Point(60, -40);
    pairs[17].second += Point(-50, 30);
    const auto fit = estimate_transform(pairs, c);
    CHECK(std::abs(fit.angle - truth.angle) < 1e-9);
  }

  TEST_CASE("rigid fit argument checks") {
    const std::vector<std::pair<Point, Point>> one{{Point(1, 1), Point(2, 2)}};
    CHECK_THROWS_AS(estimate_transform(one, Point(0, 0)), ParameterError);
    const std::vector<std::pair<Point, Point>> same{{Point(3, 3), Point(4, 4)}, {Point(3, 3), Point(4, 4)}};
    CHECK_THROWS_AS(estimate_transform(same, Point(0, 0)), DegenerateInputError);
  }

  TEST_CASE("transform inverse") {
    const RigidTransform t{0.3, 4.0, -7.0, Point(50, 60)};
    const Point p(12.5, 80.25);
    CHECK((t.inverse().apply(t.apply(p)) - p).norm() < 1e-12);
    CHECK((t.apply(t.inverse().apply(p)) - p).norm() < 1e-12);
  }

  TEST_CASE("warping") {
    // The scene-sized texture: smooth enough that two bilinear passes lose
    // under two levels.
    const Frame f = textured(96, 21, 0.0, {0, 160.0, 30.0, 12.0});
    const Point c(47.5, 47.5);
    CHECK((warp_frame(f, RigidTransform::identity(c)) == f).all());

    const Frame shifted = warp_frame(f, {0, 3, 0, c});
    CHECK((shifted.rightCols(93) == f.leftCols(93)).all());
    CHECK((shifted.leftCols(3) == 0.0).all());

    const Frame back = warp_frame(warp_frame(f, {5 * kDeg, 0, 0, c}), {-5 * kDeg, 0, 0, c});
    double worst = 0.0;
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) {
        // Stay 2 px clear of the region whose samples left the frame.
        if ((Point(x, y) - c).norm() <= 47.5 - 2.0) worst = std::max(worst, std::abs(back(y, x) - f(y, x)));
      }
    }
    CHECK(worst <= 2.0);
  }

  TEST_CASE("descriptors survive a 15 degree rotation") {
    const Frame a = textured(256, 31);
    const Frame b = textured(256, 31, 15.0);
    const auto fa = detect_features(a, {});
    const auto fb = detect_features(b, {});
    REQUIRE(fa.size() >= 50);
    const auto da = descriptors(fa);
    const auto db = descriptors(fb);
    const RigidTransform truth{15 * kDeg, 0, 0, Point(127.5, 127.5)};
    int correct = 0;
    for (const auto& m : match_features(da, db)) {
      const auto& ka = fa[m.index_a].keypoint;
      const auto& kb = fb[m.index_b].keypoint;
      correct += (truth.apply(Point(ka.x, ka.y)) - Point(kb.x, kb.y)).norm() <= 2.0;
    }
    // Only keypoints whose rotated position stays inside the frame can match.
    int visible = 0;
    for (const auto& k : fa) {
      const Point p = truth.apply(Point(k.keypoint.x, k.keypoint.y));
      visible += p.x() >= kFeatureBorder && p.y() >= kFeatureBorder && p.x() < 256 - kFeatureBorder &&
                 p.y() < 256 - kFeatureBorder;
    }
    CHECK(correct >= 0.6 * visible);
  }

  TEST_CASE("register_frames recovers a small rotation") {
    const Frame a = textured(256, 41);
    const Frame b = textured(256, 41, 3.0);
    const RigidTransform t = register_frames(a, b, {});
    CHECK(std::abs(t.angle / kDeg + 3.0) <= 0.1);
    CHECK((register_frames(a, a, {}).angle) == doctest::Approx(0.0));
  }
}
