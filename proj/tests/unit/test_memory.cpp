#include <doctest.h>

#include <algorithm>
#include <vector>

#include "emm/errors.hpp"
#include "emm/memory.hpp"

using namespace emm;

namespace {

Batch batch_from(std::uint64_t first_step, std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = first_step + i;
    b.push_back({{static_cast<double>(s), -static_cast<double>(s)}, static_cast<int>(s % 10), s});
  }
  return b;
}

std::vector<std::uint64_t> steps_of(const MemoryBuffer& m) {
  std::vector<std::uint64_t> out;
  for (const auto& s : m.items()) out.push_back(s.arrival_step);
  return out;
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("update appends in order") {
    MemoryBuffer m(2000, DropPolicy::sliding_window);
    m.update(batch_from(0, 10));
    CHECK(m.size() == 10);
    CHECK(!m.is_full());
    for (std::uint64_t t = 1; t < 199; ++t) m.update(batch_from(t * 10, 10));
    CHECK(m.size() == 1990);
    m.update(batch_from(1990, 10));
    CHECK(m.size() == 2000);
    CHECK(m.is_full());
    m.update({});
    CHECK(m.size() == 2000);
    m.update(batch_from(2000, 10));
    CHECK(m.size() == 2010);
    CHECK(m.is_full());
    const auto steps = steps_of(m);
    CHECK(std::is_sorted(steps.begin(), steps.end()));
    CHECK(m.items()[7].label == 7);
  }

  TEST_CASE("empty buffer is not full") {
    CHECK(!MemoryBuffer(2000, DropPolicy::random).is_full());
    CHECK_THROWS_AS(MemoryBuffer(0, DropPolicy::random), ConfigError);
  }

  TEST_CASE("sliding window dropout") {
    MemoryBuffer m(3, DropPolicy::sliding_window, 1);
    m.update(batch_from(0, 3));
    m.dropout_sw(1);
    CHECK(steps_of(m) == std::vector<std::uint64_t>{1, 2});
    m.dropout_sw(2);
    CHECK(m.empty());
    CHECK_THROWS_AS(m.dropout_sw(1), InputError);

    MemoryBuffer full(2000, DropPolicy::sliding_window);
    full.update(batch_from(100, 2000));
    Rng rng(0);
    full.drop(rng);
    CHECK(full.size() == 1990);
    CHECK(full.items().front().arrival_step == 110);
  }

  TEST_CASE("property: sliding window removes exactly the n smallest positions") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t size = 1 + rng.below(60);
      MemoryBuffer m(100, DropPolicy::sliding_window);
      // Arrival steps with gaps, so positions and step values differ.
      Batch b;
      std::uint64_t t = rng.below(5);
      for (std::size_t i = 0; i < size; ++i) {
        b.push_back({{static_cast<double>(i)}, std::nullopt, t});
        t += 1 + rng.below(3);
      }
      m.update(b);
      const std::size_t n = rng.below(size + 1);
      std::vector<std::pair<std::size_t, std::uint64_t>> order;
      for (std::size_t i = 0; i < size; ++i) order.emplace_back(i, b[i].arrival_step);
      std::sort(order.begin(), order.end());
      std::vector<std::uint64_t> want;
      for (std::size_t i = n; i < order.size(); ++i) want.push_back(order[i].second);
      m.dropout_sw(n);
      REQUIRE(steps_of(m) == want);
    }
  }

  TEST_CASE("random dropout") {
    MemoryBuffer m(50, DropPolicy::random);
    m.update(batch_from(0, 50));
    Rng rng(1);
    const MemoryBuffer before = m;
    m.dropout_random(0, rng);
    CHECK(m == before);

    SUBCASE("everything") {
      m.dropout_random(50, rng);
      CHECK(m.empty());
    }
    SUBCASE("too many") { CHECK_THROWS_AS(m.dropout_random(51, rng), InputError); }
    SUBCASE("fixed seed gives the same survivors") {
      MemoryBuffer a = before, b = before;
      Rng r1(77), r2(77);
      a.dropout_random(13, r1);
      b.dropout_random(13, r2);
      CHECK(a == b);
    }
  }

  TEST_CASE("property: random dropout keeps an ordered sub-multiset of size |B| - n") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t size = 1 + rng.below(40);
      MemoryBuffer m(100, DropPolicy::random);
      m.update(batch_from(rng.below(1000), size));
      const auto original = steps_of(m);
      const std::size_t n = rng.below(size + 1);
      m.dropout_random(n, rng);
      const auto after = steps_of(m);
      REQUIRE(after.size() == size - n);
      REQUIRE(std::includes(original.begin(), original.end(), after.begin(), after.end()));
      REQUIRE(std::is_sorted(after.begin(), after.end()));
      for (const auto& item : m.items()) {
        REQUIRE(item.features.size() == 2);
        REQUIRE(item.features[0] == static_cast<double>(item.arrival_step));
      }
    }
  }

  TEST_CASE("clear") {
    MemoryBuffer m(20, DropPolicy::random, 3);
    m.update(batch_from(0, 15));
    m.clear();
    CHECK(m.size() == 0);
    CHECK(m.capacity() == 20);
    CHECK(m.policy() == DropPolicy::random);
    CHECK(m.drop_count() == 3);
    const MemoryBuffer once = m;
    m.clear();
    CHECK(m == once);
  }

  TEST_CASE("property: update is associative over concatenation") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t nx = rng.below(12), ny = rng.below(12);
      const Batch x = batch_from(0, nx), y = batch_from(nx, ny);
      Batch xy = x;
      xy.insert(xy.end(), y.begin(), y.end());
      MemoryBuffer a(30, DropPolicy::sliding_window), b(30, DropPolicy::sliding_window);
      a.update(batch_from(100, 3));
      b.update(batch_from(100, 3));
      a.update(x);
      a.update(y);
      b.update(xy);
      REQUIRE(a == b);
    }
  }

  TEST_CASE("policy names") {
    CHECK(parse_drop_policy("sliding_window") == DropPolicy::sliding_window);
    CHECK(parse_drop_policy("sw") == DropPolicy::sliding_window);
    CHECK(parse_drop_policy(drop_policy_name(DropPolicy::random)) == DropPolicy::random);
    CHECK_THROWS_AS(parse_drop_policy("fifo"), ConfigError);
  }

  TEST_CASE("feature matrix follows insertion order") {
    MemoryBuffer m(10, DropPolicy::sliding_window);
    m.update(batch_from(4, 3));
    const Matrix f = m.features();
    CHECK(f.rows() == 3);
    CHECK(f(2, 0) == 6.0);
    CHECK(f(2, 1) == -6.0);
  }
}
