#ifndef SLUA_BENCH_HPP
#define SLUA_BENCH_HPP

#include <cstdint>

#include "slua/checkpoint.hpp"

namespace slua {

/// Training-throughput measurement on generated text. Sentence lengths and
/// vocabulary size roughly follow a news/parliament corpus so the cost per
/// pair is representative.
struct BenchOptions {
  TrainConfig config;  // hp.dim, hp.win, hp.k, batch_size, threads are what matter
  std::size_t pairs = 5000;
  int vocab = 20000;
  int min_len = 10;
  int max_len = 30;
  std::uint64_t data_seed = 13;
};

struct BenchResult {
  std::size_t pairs = 0;
  std::size_t tokens = 0;
  double seconds = 0.0;
  int threads = 1;
  double pairs_per_minute_per_thread() const { return pairs / seconds * 60.0 / threads; }
};

// One pass over the generated pairs, timing only the optimizer steps.
BenchResult run_benchmark(const BenchOptions& options);

}  // namespace slua

#endif  // SLUA_BENCH_HPP
