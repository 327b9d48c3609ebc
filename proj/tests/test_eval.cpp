#include <doctest.h>

#include <random>
#include <sstream>

#include "slua/eval.hpp"

using namespace slua;

namespace {

GoldAlignment gold(std::size_t index, std::vector<Link> sure, std::vector<Link> possible) {
  return {std::move(sure), std::move(possible), index};
}

}  // namespace

TEST_CASE("metric examples") {
  SUBCASE("perfect prediction") {
    const std::vector<AlignmentSet> a{AlignmentSet(2, 2, {{0, 0}, {1, 1}})};
    const std::vector<GoldAlignment> g{gold(0, {{0, 0}, {1, 1}}, {{0, 0}, {1, 1}})};
    const auto m = compute_metrics(a, g);
    CHECK(m.aer == 0.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("total miss") {
    const std::vector<AlignmentSet> a{AlignmentSet(2, 2, {{0, 0}})};
    const std::vector<GoldAlignment> g{gold(0, {{1, 1}}, {{1, 1}})};
    const auto m = compute_metrics(a, g);
    CHECK(m.aer == 1.0);
    CHECK(m.precision == 0.0);
    CHECK(m.f1 == 0.0);
  }
  SUBCASE("possible links count toward precision") {
    const std::vector<AlignmentSet> a{AlignmentSet(2, 2, {{0, 0}, {1, 1}})};
    const std::vector<GoldAlignment> g{gold(0, {{0, 0}}, {{0, 0}, {1, 1}})};
    const auto m = compute_metrics(a, g);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.aer == 0.0);
    CHECK(m.predicted == 2);
    CHECK(m.sure == 1);
    CHECK(m.hit_sure == 1);
    CHECK(m.hit_possible == 2);
  }
  SUBCASE("empty everything") {
    const std::vector<AlignmentSet> a{AlignmentSet(1, 1)};
    const std::vector<GoldAlignment> g{gold(0, {}, {})};
    const auto m = compute_metrics(a, g);
    CHECK(m.aer == 0.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
  }
  SUBCASE("micro averaging pools counts") {
    const std::vector<AlignmentSet> a{AlignmentSet(2, 2, {{0, 0}}), AlignmentSet(3, 3, {{0, 0}, {1, 1}, {2, 2}})};
    const std::vector<GoldAlignment> g{gold(0, {{0, 0}}, {{0, 0}}), gold(1, {{0, 1}}, {{0, 1}, {1, 1}})};
    const auto m = compute_metrics(a, g);
    CHECK(m.precision == doctest::Approx(2.0 / 4.0));
    CHECK(m.recall == doctest::Approx(1.0 / 2.0));
    CHECK(m.aer == doctest::Approx(1.0 - (1.0 + 2.0) / (4.0 + 2.0)));
  }
  SUBCASE("pairs without gold are skipped, gold beyond the predictions is an error") {
    const std::vector<AlignmentSet> a{AlignmentSet(1, 1, {{0, 0}}), AlignmentSet(1, 1, {{0, 0}})};
    const std::vector<GoldAlignment> g{gold(1, {{0, 0}}, {{0, 0}})};
    CHECK(compute_metrics(a, g).predicted == 1);
    const std::vector<GoldAlignment> bad{gold(2, {}, {}), gold(5, {}, {})};
    CHECK_THROWS_WITH_AS(compute_metrics(a, bad), doctest::Contains("2 5"), InputError);
  }
}

TEST_CASE("one minus AER is F1 when sure equals possible") {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AlignmentSet> a;
    std::vector<GoldAlignment> g;
    for (std::size_t p = 0; p < 3; ++p) {
      AlignmentSet pred(4, 4);
      std::vector<Link> s;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          if (coin(rng)) pred.insert({i, j});
          if (coin(rng)) s.push_back({i, j});
        }
      a.push_back(pred);
      g.push_back(gold(p, s, s));
    }
    const auto m = compute_metrics(a, g);
    if (m.predicted + m.sure == 0) continue;
    CHECK(1.0 - m.aer == doctest::Approx(m.f1).epsilon(1e-12));
  }
}

TEST_CASE("metric output") {
  AlignmentMetrics m;
  m.predicted = 4;
  m.sure = 2;
  m.hit_sure = 1;
  m.hit_possible = 3;
  m.finalize();
  std::ostringstream tsv;
  write_metrics_tsv(tsv, m);
  CHECK(tsv.str().find("aer\t") != std::string::npos);
  CHECK(tsv.str().find("precision\t0.75") != std::string::npos);
  std::ostringstream text;
  print_metrics(text, m);
  CHECK(text.str().find("0.333") != std::string::npos);
}

TEST_CASE("nearest neighbours") {
  EmbeddingSpace space;
  space.tokens = {"src:a", "src:b", "tgt:x", "tgt:y", "tgt:z"};
  space.vectors.resize(5, 2);
  space.vectors << 0, 0, 5, 5, 1, 0, 0, 0, 1, 0;

  const auto all = nearest_neighbors(space, "src:a", SideFilter::kBoth, 10);
  REQUIRE(all.size() == 4);
  CHECK(all[0].token == "tgt:y");
  CHECK(all[0].distance == 0.0);
  CHECK(all[1].token == "tgt:x");  // tie with tgt:z, lower row first
  CHECK(all[2].token == "tgt:z");
  CHECK(all[3].token == "src:b");

  const auto tgt = nearest_neighbors(space, "src:b", SideFilter::kTgt, 2);
  REQUIRE(tgt.size() == 2);
  for (const auto& n : tgt) CHECK(n.token.rfind("tgt:", 0) == 0);
  const auto src = nearest_neighbors(space, "tgt:x", SideFilter::kSrc, 5);
  REQUIRE(src.size() == 2);
  CHECK(src[0].token == "src:a");

  CHECK_THROWS_WITH_AS(nearest_neighbors(space, "src:nope", SideFilter::kBoth, 3), doctest::Contains("src:nope"),
                       InputError);
  CHECK(parse_side_filter("both") == SideFilter::kBoth);
  CHECK_THROWS_AS(parse_side_filter("all"), InputError);
}

TEST_CASE("embedding file parsing") {
  std::istringstream good("2 3\na 1 2 3\nb -1 0.5 1e-3\n");
  const auto e = read_embeddings(good);
  CHECK(e.tokens == std::vector<std::string>{"a", "b"});
  CHECK(e.vectors(1, 2) == doctest::Approx(1e-3));
  CHECK(e.find("b") == 1);
  CHECK(e.find("c") == -1);

  std::istringstream short_row("2 3\na 1 2 3\nb 1 2\n");
  try {
    read_embeddings(short_row);
    FAIL("expected FormatError");
  } catch (const FormatError& err) {
    CHECK(err.line() == 3);
  }
  std::istringstream missing("3 1\na 1\n");
  CHECK_THROWS_AS(read_embeddings(missing), FormatError);
}
