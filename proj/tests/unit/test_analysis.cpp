#include <doctest.h>

#include <cmath>
#include <sstream>

#include "glitchsim/analysis.hpp"
#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"

using namespace glitchsim;

namespace {

TrialRecord trial(int true_class, std::optional<int> predicted) {
  TrialRecord t;
  t.true_class = true_class;
  classify_outcome(t, predicted);
  return t;
}

// character-by-character count, independent of the library's bit arithmetic
int naive_hamming(const std::string& a, const std::string& b) {
  int h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) h += a[i] != b[i] ? 1 : 0;
  return h;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string l;
  while (std::getline(is, l)) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("hamming is a metric on 5-bit strings") {
  CHECK(hamming("10010", "10000") == 1);
  CHECK(hamming("00000", "11111") == 5);
  for (int a = 0; a < 32; ++a) {
    const std::string sa = predict_bits(a);
    CHECK(hamming(sa, sa) == 0);
    for (int b = 0; b < 32; ++b) {
      const std::string sb = predict_bits(b);
      const int h = hamming(sa, sb);
      CHECK(h == naive_hamming(sa, sb));
      CHECK(h == hamming(sb, sa));
      CHECK((h == 0) == (a == b));
    }
  }
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto a = predict_bits(static_cast<int>(rng.uniform_int(0, 31)));
    const auto b = predict_bits(static_cast<int>(rng.uniform_int(0, 31)));
    const auto c = predict_bits(static_cast<int>(rng.uniform_int(0, 31)));
    CHECK(hamming(a, c) <= hamming(a, b) + hamming(b, c));
  }
  CHECK_THROWS_AS(hamming("1001", "10010"), InputError);
  CHECK_THROWS_AS(hamming("1001x", "10010"), InputError);
}

TEST_CASE("one misprediction 18 -> 16") {
  const std::vector<TrialRecord> log{trial(18, 16)};
  const BitFlipStats s = bit_flip_stats(log);
  REQUIRE(s.per_bit_flip_rate.has_value());
  const std::array<double, 5> expected{0, 0, 0, 1, 0};
  CHECK(*s.per_bit_flip_rate == expected);
  CHECK(s.mean_hamming == 1.0);
  CHECK(s.hamming_histogram[1] == 1);
  CHECK(s.n_reset == 0);
}

TEST_CASE("mean Hamming equals the sum of per-bit rates") {
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<TrialRecord> log;
    const auto n = rng.uniform_int(1, 60);
    for (std::int64_t i = 0; i < n; ++i) {
      const int tc = static_cast<int>(rng.uniform_int(0, 31));
      if (rng.uniform() < 0.2) {
        log.push_back(trial(tc, std::nullopt));
      } else {
        log.push_back(trial(tc, static_cast<int>(rng.uniform_int(0, 31))));
      }
    }
    const BitFlipStats s = bit_flip_stats(log);
    CHECK(s.n_trials == log.size());
    std::size_t hist_total = 0;
    for (std::size_t c : s.hamming_histogram) hist_total += c;
    CHECK(hist_total + s.n_reset == s.n_trials);
    if (!s.per_bit_flip_rate) {
      CHECK(s.n_reset == s.n_trials);
      continue;
    }
    double sum = 0;
    for (double r : *s.per_bit_flip_rate) sum += r;
    CHECK(*s.mean_hamming == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("all-reset logs") {
  const std::vector<TrialRecord> log(7, trial(3, std::nullopt));
  const BitFlipStats s = bit_flip_stats(log);
  CHECK_FALSE(s.per_bit_flip_rate.has_value());
  CHECK_FALSE(s.mean_hamming.has_value());
  CHECK(s.n_reset == 7);
  CHECK_FALSE(flip_uniformity_test(s).has_value());
  const ClassHistogram h = class_histogram(log, std::nullopt);
  CHECK(h.counted == 0);
  CHECK(h.resets == 7);
  CHECK(h.n_trials == 7);
  CHECK_THROWS_AS(bit_flip_stats(std::vector<TrialRecord>{}), InputError);

  std::ostringstream os;
  write_bitflips_csv(os, s);
  CHECK(os.str() == "bit,rate\n0,\n1,\n2,\n3,\n4,\n");
}

TEST_CASE("class histogram conserves trials") {
  Rng rng(12);
  std::vector<TrialRecord> log;
  for (int i = 0; i < 400; ++i) {
    const int tc = static_cast<int>(rng.uniform_int(0, 31));
    log.push_back(rng.uniform() < 0.3 ? trial(tc, std::nullopt) : trial(tc, static_cast<int>(rng.uniform_int(0, 31))));
  }
  const ClassHistogram all = class_histogram(log, std::nullopt);
  std::size_t sum = 0;
  for (std::size_t c : all.counts) sum += c;
  CHECK(sum == all.counted);
  CHECK(all.counted + all.resets == log.size());
  CHECK(all.n_trials == log.size());

  std::size_t filtered_total = 0;
  for (int k = 0; k < 32; ++k) {
    const ClassHistogram h = class_histogram(log, k);
    std::size_t expected = 0;
    for (const TrialRecord& t : log) expected += t.true_class == k ? 1 : 0;
    CHECK(h.n_trials == expected);
    CHECK(h.counted + h.resets == expected);
    filtered_total += h.n_trials;
  }
  CHECK(filtered_total == log.size());

  std::ostringstream os;
  write_histogram_csv(os, all);
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 33);
  CHECK(ls[0] == "class,count");
  CHECK(ls[6] == "5," + std::to_string(all.counts[5]));
}

TEST_CASE("flip uniformity test") {
  BitFlipStats s;
  s.flip_counts = {10, 10, 10, 10, 10};
  auto r = flip_uniformity_test(s);
  REQUIRE(r.has_value());
  CHECK(r->statistic == 0.0);
  CHECK(r->dof == 4);
  CHECK(r->p_value == doctest::Approx(1.0));

  // all flips on one bit: expected 2 each, statistic = (8^2 + 4*2^2)/2 = 40
  s.flip_counts = {0, 0, 0, 10, 0};
  r = flip_uniformity_test(s);
  REQUIRE(r.has_value());
  CHECK(r->statistic == doctest::Approx(40.0));
  // chi-square survival with 4 dof: exp(-x/2) * (1 + x/2)
  CHECK(r->p_value == doctest::Approx(std::exp(-20.0) * 21.0).epsilon(1e-9));
  CHECK(r->p_value < 1e-6);
}

TEST_CASE("top-k table") {
  SearchReport rep;
  for (std::size_t i = 0; i < 8; ++i) {
    rep.top_k.push_back(Evaluation{GlitchConfig{static_cast<int>(100 * i), 2600, 14000 + static_cast<std::int64_t>(i), 2},
                                   1.0 - 0.1 * static_cast<double>(i), 8 - i, i, i});
  }
  const auto one = top_k_table(rep, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].rank == 1);
  CHECK(one[0].width == 0);
  const auto five = top_k_table(rep, 5);
  REQUIRE(five.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(five[i].rank == i + 1);
    CHECK(five[i].faults == 8 - i);
    CHECK(five[i].external_offset == 14000 + static_cast<std::int64_t>(i));
  }
  CHECK(top_k_table(rep, 50).size() == 8);
  CHECK_THROWS_AS(top_k_table(rep, 0), InputError);
}

TEST_CASE("table CSV layout") {
  const std::vector<TableRow> rows{{1, 2700, 2600, 14208, 5, 27, 4, 0.5}, {2, 2400, 2400, 10026, 2, 13, 0, 0.25}};
  std::ostringstream table;
  write_table_csv(table, rows);
  const auto t = lines(table.str());
  REQUIRE(t.size() == 3);
  CHECK(t[0] == "configuration,width,offset,external_offset,repeats,faults");
  CHECK(t[1] == "1,2700,2600,14208,5,27");
  CHECK(t[2] == "2,2400,2400,10026,2,13");

  std::ostringstream ranking;
  write_ranking_csv(ranking, rows);
  const auto r = lines(ranking.str());
  REQUIRE(r.size() == 3);
  CHECK(r[0] == "rank,width,offset,external_offset,repeats,faults,resets,score");
  CHECK(r[1] == "1,2700,2600,14208,5,27,4,0.500000");
}

TEST_CASE("bit flip CSV") {
  const std::vector<TrialRecord> log{trial(18, 16), trial(0, 0), trial(0, 31), trial(2, std::nullopt)};
  std::ostringstream os;
  write_bitflips_csv(os, bit_flip_stats(log));
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 6);
  CHECK(ls[0] == "bit,rate");
  // 3 completed trials: bit 3 flipped twice, others once
  CHECK(ls[4].rfind("3,0.666", 0) == 0);
  CHECK(ls[1].rfind("0,0.333", 0) == 0);
}
