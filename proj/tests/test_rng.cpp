#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rsd/rng.hpp"

using rsd::Stream;

TEST_CASE("philox 4x32-10 known-answer vectors") {
  // Reference vectors from the Random123 test suite.
  auto z = rsd::philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(z == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

  auto f = rsd::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                           {0xffffffffu, 0xffffffffu});
  CHECK(f == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

  auto pi = rsd::philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                            {0xa4093822u, 0x299f31d0u});
  CHECK(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream state is (seed, substream, drawn) and restores mid-block") {
  Stream a(1234, 77);
  std::vector<std::uint32_t> first;
  for (int i = 0; i < 10; ++i) first.push_back(a.next_u32());

  Stream b(1234, 77);
  for (int i = 0; i < 3; ++i) b.next_u32();
  Stream resumed(1234, 77, b.drawn());
  for (int i = 3; i < 10; ++i) CHECK(resumed.next_u32() == first[static_cast<std::size_t>(i)]);

  Stream other(1234, 78);
  CHECK(other.next_u32() != first[0]);
}

TEST_CASE("uniform lies in (0,1) with the right mean") {
  Stream s(42, 0);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("normal and gamma moments") {
  Stream s(7, 0);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sumsq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sumsq / n - 1.0) < 0.02);

  double gsum = 0.0;
  for (int i = 0; i < n; ++i) gsum += s.gamma(0.25, 0.25);
  CHECK(std::abs(gsum / n - 1.0) < 0.02);  // mean = shape / rate

  double g2 = 0.0;
  for (int i = 0; i < n; ++i) g2 += s.gamma(3.5, 2.0);
  CHECK(std::abs(g2 / n - 1.75) < 0.02);
}

TEST_CASE("categorical matches its probabilities") {
  Stream s(99, 0);
  const std::vector<double> probs{0.2, 0.5, 0.3};
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(s.categorical(probs))]++;
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] / static_cast<double>(n) - probs[static_cast<std::size_t>(k)]) < 0.01);
}
