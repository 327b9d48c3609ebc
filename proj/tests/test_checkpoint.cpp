#include <doctest.h>

#include <cstring>
#include <sstream>

#include "slua/checkpoint.hpp"
#include "slua/train.hpp"

using namespace slua;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.src_vocab = Vocabulary::from_entries({"<unk>", "le", "chat", "été"}, {1, 5, 3, 2}, 1);
  ckpt.tgt_vocab = Vocabulary::from_entries({"<unk>", "the", "cat"}, {0, 5, 3}, 1);
  ckpt.config.hp.dim = 5;
  ckpt.config.hp.alpha = 0.125;
  ckpt.config.hp.use_t2s = false;
  ckpt.config.lr = 3e-3;
  ckpt.config.seed = 0xdeadbeefcafeULL;
  ckpt.config.optimizer = Optimizer::kSgd;
  ckpt.config.neg_scope = NegativeScope::kSentence;
  ckpt.config.keep_best = true;
  ckpt.epoch = 4;
  ckpt.params = initial_params(4, 3, 5, 11);
  ckpt.params.src(2, 3) = -0.0f;
  ckpt.params.tgt(1, 1) = 1e-38f;
  return ckpt;
}

std::string serialize(const Checkpoint& ckpt) {
  std::ostringstream out;
  save_checkpoint(out, ckpt);
  return out.str();
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const auto ckpt = sample_checkpoint();
  const auto bytes = serialize(ckpt);
  CHECK(bytes.compare(0, 4, "SLUA") == 0);
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);  // little-endian host

  std::istringstream in(bytes);
  const auto back = load_checkpoint(in);
  CHECK(back == ckpt);
  CHECK(std::memcmp(back.params.src.data(), ckpt.params.src.data(), sizeof(float) * ckpt.params.src.size()) == 0);
  CHECK(std::signbit(back.params.src(2, 3)));
  CHECK(serialize(back) == bytes);
  CHECK(back.config.seed == 0xdeadbeefcafeULL);
  CHECK(back.src_vocab.token(3) == "été");
}

TEST_CASE("checkpoint corruption is detected") {
  const auto bytes = serialize(sample_checkpoint());
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(in), doctest::Contains("bad magic"), InputError);
  }
  SUBCASE("unknown version") {
    auto bad = bytes;
    bad[4] = 9;
    std::istringstream in(bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(in), doctest::Contains("version"), InputError);
  }
  SUBCASE("truncated") {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_WITH_AS(load_checkpoint(in), doctest::Contains("truncated"), InputError);
  }
  SUBCASE("vocabulary does not match its hash") {
    auto bad = bytes;
    const auto at = bad.find("chat");
    REQUIRE(at != std::string::npos);
    bad[at] = 'k';
    std::istringstream in(bad);
    CHECK_THROWS_AS(load_checkpoint(in), VocabularyMismatch);
  }
}

TEST_CASE("config parsing helpers") {
  CHECK(parse_optimizer("adam") == Optimizer::kAdam);
  CHECK(parse_optimizer("sgd") == Optimizer::kSgd);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), InputError);
  CHECK(parse_negative_scope("sentence") == NegativeScope::kSentence);
  CHECK_THROWS_AS(parse_negative_scope("corpus"), InputError);
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = {};
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
