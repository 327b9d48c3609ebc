#include "slua/bench.hpp"

#include <chrono>

#include "slua/synthetic.hpp"
#include "slua/train.hpp"

namespace slua {

BenchResult run_benchmark(const BenchOptions& options) {
  options.config.validate();
  options.config.hp.validate();
  SyntheticSpec spec;
  spec.vocab = options.vocab;
  spec.pairs = options.pairs;
  spec.min_len = options.min_len;
  spec.max_len = options.max_len;
  spec.zipf = 1.0;
  spec.seed = options.data_seed;
  const auto synth = make_dictionary_corpus(spec);

  std::vector<Tokens> src, tgt;
  for (const auto& p : synth.text) {
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  const auto vs = Vocabulary::build(src), vt = Vocabulary::build(tgt);
  const auto corpus = encode_corpus(synth.text, vs, vt);

  const auto& cfg = options.config;
  Trainer trainer(initial_params(vs.size(), vt.size(), cfg.hp.dim, cfg.seed), cfg);
  BatchIterator batches(corpus, static_cast<std::size_t>(cfg.batch_size), cfg.seed);

  BenchResult result;
  result.threads = cfg.threads;
  for (const auto& p : corpus) result.tokens += p.src.size() + p.tgt.size();
  using clock = std::chrono::steady_clock;
  std::chrono::duration<double> busy{0};
  for (const auto& indices : batches.epoch(0)) {
    const auto batch = batches.gather(indices);
    const auto start = clock::now();
    trainer.step(batch, 0);
    busy += clock::now() - start;
    result.pairs += batch.size();
  }
  result.seconds = busy.count();
  return result;
}

}  // namespace slua
