#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "reenroll/philox.hpp"

using namespace reenroll;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using P = Philox4x32;
  CHECK(P::generate({0, 0, 0, 0}, {0, 0}) == P::Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(P::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        P::Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(P::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        P::Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of their address") {
  RandomStream a(7, 3, 11, 1), b(7, 3, 11, 1), c(7, 3, 12, 1), d(7, 3, 11, 2);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
    CHECK(va != d.next_u64());
  }
}

TEST_CASE("uniform and normal draws have the right moments") {
  RandomStream s(42, 0, 0, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    su += u;
    const double z = s.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(std::fabs(su / n - 0.5) < 0.005);
  CHECK(std::fabs(sn / n) < 0.01);
  CHECK(std::fabs(sn2 / n - 1.0) < 0.02);
}
