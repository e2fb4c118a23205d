#include <doctest.h>

#include <random>

#include "ftconv/checksums.hpp"
#include "ftconv/schemes.hpp"
#include "helpers.hpp"

using namespace ftconv;
using ftconv::test::tensors_close;

namespace {

/// One clean layer with full checksums; tests corrupt O (or the checksums)
/// and then take fresh summations.
struct Fixture {
  ConvParams p;
  Tensor4<double> D, W, O, O_clean;
  InputChecksums<double> ic;
  OutputChecksums<double> cs;
  double tau = 1e-10;

  Fixture(std::size_t N, std::size_t M, std::uint64_t seed, std::size_t H = 5,
          std::size_t Ch = 2, std::size_t R = 2) {
    D = Tensor4<double>::random(N, Ch, H, H, seed);
    W = Tensor4<double>::random(M, Ch, R, R, seed + 1);
    ic = input_checksums(D, W, 1);
    cs = output_checksums(CK_ALL, D, W, ic, p);
    O = conv_forward(D, W, nullptr, p);
    O_clean = O;
  }

  OutputSummations<double> sums(unsigned which) const {
    return output_summations(O, which);
  }

  Verifier verifier() {
    return [this]() {
      OutputSummations<double> s = output_summations(O, CK_O5);
      return grids_consistent(*cs.co5, *s.so5, tau);
    };
  }

  void refresh_checksums() { cs = output_checksums(CK_ALL, D, W, ic, p); }
};

}  // namespace

TEST_CASE("CoC-D detection") {
  Fixture f(2, 2, 100);
  SUBCASE("fault-free layer is clean") {
    auto s = f.sums(CK_O5);
    DetectionResult<double> d = detect_coc_d(*f.cs.co5, *s.so5, f.tau);
    CHECK(d.clean);
  }
  SUBCASE("single corrupted element is flagged at its position") {
    f.O(1, 0, 1, 2) += 5.0;
    auto s = f.sums(CK_O5);
    DetectionResult<double> d = detect_coc_d(*f.cs.co5, *s.so5, f.tau);
    CHECK_FALSE(d.clean);
    const std::size_t E = f.O.dim(2);
    for (std::size_t i = 0; i < E * E; ++i)
      CHECK(d.mismatch_mask[i] == (i == 1 * E + 2 ? 1 : 0));
  }
  SUBCASE("equal and opposite corruption at one position cancels invisibly") {
    f.O(0, 0, 1, 1) += 5.0;
    f.O(1, 1, 1, 1) -= 5.0;
    auto s = f.sums(CK_O5);
    CHECK(detect_coc_d(*f.cs.co5, *s.so5, f.tau).clean);
  }
}

TEST_CASE("CoC corrects a single corrupted block") {
  Fixture f(2, 2, 101);
  f.O(1, 0, 0, 0) -= 5.0;
  auto s = f.sums(CK_O5 | CK_O6 | CK_O7);
  CorrectionOutcome oc = correct_coc(f.cs, s, f.O, f.tau, {}, f.verifier());
  CHECK(oc.status == CorrectionStatus::corrected);
  REQUIRE(oc.corrected_blocks.size() == 1);
  CHECK(oc.corrected_blocks[0].i == 1);
  CHECK(oc.corrected_blocks[0].j == 0);
  CHECK(tensors_close(f.O, f.O_clean, 1e-9));
}

TEST_CASE("CoC escalates on corruption spanning blocks") {
  Fixture f(2, 2, 102);
  f.O(0, 0, 0, 0) += 3.0;
  f.O(0, 1, 0, 0) += 4.0;  // same position, different column: j ratio ~ 4/7
  auto s = f.sums(CK_O5 | CK_O6 | CK_O7);
  // the row-0 pattern resembles checksum corruption; the probe, which checks
  // actual output row 0, disambiguates
  CocProbes probes;
  probes.row0_consistent = []() { return false; };
  CorrectionOutcome oc = correct_coc(f.cs, s, f.O, f.tau, probes, f.verifier());
  CHECK(oc.status == CorrectionStatus::escalate);

  SUBCASE("cross-row cross-column spread escalates without probes") {
    Fixture g(2, 2, 112);
    g.O(0, 0, 0, 0) += 3.0;
    g.O(1, 1, 0, 0) += 4.0;
    auto s2 = g.sums(CK_O5 | CK_O6 | CK_O7);
    CHECK(correct_coc(g.cs, s2, g.O, g.tau, {}, g.verifier()).status ==
          CorrectionStatus::escalate);
  }
}

TEST_CASE("CoC recognizes input-checksum corruption and discards") {
  Fixture f(2, 2, 103);
  f.ic.cd1(0, 0, 2, 2) += 7.0;  // poison Cd1: Co5/Co6 shift, Co7 does not
  f.refresh_checksums();
  auto s = f.sums(CK_O5 | CK_O6 | CK_O7);
  CorrectionOutcome oc = correct_coc(f.cs, s, f.O, f.tau, {}, f.verifier());
  CHECK(oc.status == CorrectionStatus::checksum_corruption_discard);
  CHECK(f.O.raw() == f.O_clean.raw());  // output untouched

  SUBCASE("a probe that contradicts the checksum hypothesis escalates instead") {
    CocProbes probes;
    probes.row0_consistent = []() { return false; };
    probes.col0_consistent = []() { return false; };
    auto s2 = f.sums(CK_O5 | CK_O6 | CK_O7);
    CorrectionOutcome oc2 = correct_coc(f.cs, s2, f.O, f.tau, probes, f.verifier());
    CHECK(oc2.status == CorrectionStatus::escalate);
  }
}

TEST_CASE("RC corrects same-row corruption and rejects columns") {
  Fixture f(2, 2, 104);
  SUBCASE("two blocks in one row") {
    f.O(1, 0, 0, 1) -= 5.0;
    f.O(1, 1, 0, 1) -= 5.0;
    auto s = f.sums(CK_O1 | CK_O3);
    CorrectionOutcome oc = correct_rc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(oc.corrected_blocks.size() == 2);
    CHECK(tensors_close(f.O, f.O_clean, 1e-9));
  }
  SUBCASE("two blocks in one column escalate") {
    f.O(0, 0, 0, 0) += 5.0;
    f.O(1, 0, 0, 0) += 5.0;
    auto s = f.sums(CK_O1 | CK_O3);
    CorrectionOutcome oc = correct_rc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::escalate);
    CHECK_FALSE(tensors_close(f.O, f.O_clean, 1e-12));  // untouched, still corrupt
  }
  SUBCASE("no mismatch is a no-op success") {
    auto s = f.sums(CK_O1 | CK_O3);
    CorrectionOutcome oc = correct_rc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(oc.corrected_blocks.empty());
  }
}

TEST_CASE("ClC corrects same-column corruption and rejects rows") {
  Fixture f(2, 2, 105);
  SUBCASE("two blocks in one column") {
    f.O(0, 1, 1, 0) += 2.0;
    f.O(1, 1, 1, 0) += 2.0;
    auto s = f.sums(CK_O2 | CK_O4);
    CorrectionOutcome oc = correct_clc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(tensors_close(f.O, f.O_clean, 1e-9));
  }
  SUBCASE("two blocks in one row escalate") {
    f.O(1, 0, 0, 0) += 2.0;
    f.O(1, 1, 0, 0) += 3.0;
    auto s = f.sums(CK_O2 | CK_O4);
    CHECK(correct_clc(f.cs, s, f.O, f.tau, f.verifier()).status ==
          CorrectionStatus::escalate);
  }
  SUBCASE("clean input is a no-op") {
    auto s = f.sums(CK_O2 | CK_O4);
    CorrectionOutcome oc = correct_clc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(oc.corrected_blocks.empty());
  }
}

TEST_CASE("FC handles rows, single blocks, and checksum corruption") {
  SUBCASE("entire row with distinct deltas is corrected exactly") {
    Fixture f(3, 3, 106);
    const std::size_t E = f.O.dim(2);
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t i = 0; i < E * E; ++i)
        f.O(0, m, i / E, i % E) += 1.0 + static_cast<double>(m);
    auto s = f.sums(CK_O1 | CK_O2 | CK_O5 | CK_O6 | CK_O7);
    CorrectionOutcome oc = correct_fc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(tensors_close(f.O, f.O_clean, 1e-9));
  }
  SUBCASE("single block is the degenerate row case") {
    Fixture f(2, 2, 107);
    f.O(1, 1, 0, 0) -= 9.0;
    auto s = f.sums(CK_O1 | CK_O2 | CK_O5 | CK_O6 | CK_O7);
    CorrectionOutcome oc = correct_fc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::corrected);
    CHECK(tensors_close(f.O, f.O_clean, 1e-9));
  }
  SUBCASE("corrupt Co1[1] only: output vouched for, checksums discarded") {
    Fixture f(2, 2, 108);
    (*f.cs.co1)[1](0, 0) += 11.0;
    auto s = f.sums(CK_O1 | CK_O2 | CK_O5 | CK_O6 | CK_O7);
    CorrectionOutcome oc = correct_fc(f.cs, s, f.O, f.tau, f.verifier());
    CHECK(oc.status == CorrectionStatus::checksum_corruption_discard);
    CHECK(f.O.raw() == f.O_clean.raw());
  }
  SUBCASE("corruption spanning a row and a column escalates") {
    Fixture f(3, 3, 109);
    f.O(0, 1, 0, 0) += 5.0;
    f.O(0, 2, 0, 0) += 5.0;
    f.O(1, 1, 0, 0) += 5.0;
    f.O(2, 1, 1, 1) += 5.0;
    auto s = f.sums(CK_O1 | CK_O2 | CK_O5 | CK_O6 | CK_O7);
    CHECK(correct_fc(f.cs, s, f.O, f.tau, f.verifier()).status ==
          CorrectionStatus::escalate);
  }
}

TEST_CASE("mandatory verification rolls back bad corrections") {
  // Hand RC checksums whose deltas would mis-correct, with a verifier bound to
  // the true totals: the scheme must restore O and escalate.
  Fixture f(2, 2, 110);
  f.O(1, 0, 0, 0) += 5.0;
  Tensor4<double> before = f.O;
  (*f.cs.co1)[0](0, 0) += 2.0;  // corrupt the column checksum too
  auto s = f.sums(CK_O1 | CK_O3);
  // build a verifier against the *uncorrupted* total checksum
  OutputChecksums<double> honest = output_checksums(CK_O5, f.D, f.W, f.ic, f.p);
  Verifier v = [&]() {
    OutputSummations<double> fresh = output_summations(f.O, CK_O5);
    return grids_consistent(*honest.co5, *fresh.so5, f.tau);
  };
  CorrectionOutcome oc = correct_rc(f.cs, s, f.O, f.tau, v);
  CHECK(oc.status == CorrectionStatus::escalate);
  CHECK(tensors_close(f.O, before, 1e-12));  // rollback happened
}

TEST_CASE("round-trip: single correctable faults restore the clean output") {
  std::mt19937_64 rng(2025);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t N = 2 + rng() % 3, M = 2 + rng() % 3;
    Fixture f(N, M, rng());
    const std::size_t E = f.O.dim(2);
    const std::size_t i = rng() % N, j = rng() % M;
    const int kind = rep % 3;
    if (kind == 0) {  // block fault -> CoC
      f.O(i, j, rng() % E, rng() % E) += 2.0 + double(rng() % 7);
      auto s = f.sums(CK_O5 | CK_O6 | CK_O7);
      CHECK(correct_coc(f.cs, s, f.O, f.tau, {}, f.verifier()).status ==
            CorrectionStatus::corrected);
    } else if (kind == 1) {  // row fault -> RC
      for (std::size_t m = 0; m < M; ++m)
        f.O(i, m, rng() % E, rng() % E) += 1.0 + double(rng() % 5);
      auto s = f.sums(CK_O1 | CK_O3);
      CHECK(correct_rc(f.cs, s, f.O, f.tau, f.verifier()).status ==
            CorrectionStatus::corrected);
    } else {  // column fault -> ClC
      for (std::size_t n = 0; n < N; ++n)
        f.O(n, j, rng() % E, rng() % E) += 1.0 + double(rng() % 5);
      auto s = f.sums(CK_O2 | CK_O4);
      CHECK(correct_clc(f.cs, s, f.O, f.tau, f.verifier()).status ==
            CorrectionStatus::corrected);
    }
    CHECK(tensors_close(f.O, f.O_clean, 1e-8));
  }
}

TEST_CASE("schemes demand their checksums") {
  Fixture f(2, 2, 111);
  auto s = f.sums(CK_O5);
  OutputChecksums<double> empty;
  CHECK_THROWS_AS(correct_coc(empty, s, f.O, f.tau), ConfigError);
  CHECK_THROWS_AS(correct_rc(empty, s, f.O, f.tau), ConfigError);
  CHECK_THROWS_AS(correct_clc(empty, s, f.O, f.tau), ConfigError);
  CHECK_THROWS_AS(correct_fc(empty, s, f.O, f.tau), ConfigError);
}
