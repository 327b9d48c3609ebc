#ifndef SLUA_EVAL_HPP
#define SLUA_EVAL_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slua/common.hpp"
#include "slua/corpus.hpp"
#include "slua/decode.hpp"

namespace slua {

/// Corpus-level (micro-averaged) alignment quality.
///
///   precision = |A & P| / |A|          (1 when |A| = 0)
///   recall    = |A & S| / |S|          (1 when |S| = 0)
///   aer       = 1 - (|A & S| + |A & P|) / (|A| + |S|)   (0 when both empty)
struct AlignmentMetrics {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  double aer = 0.0;
  std::uint64_t predicted = 0;     // |A|
  std::uint64_t sure = 0;          // |S|
  std::uint64_t hit_sure = 0;      // |A & S|
  std::uint64_t hit_possible = 0;  // |A & P|

  // Recomputes the ratios from the counts.
  void finalize();
};

/// `predicted[i]` is the alignment of corpus pair i; gold entries refer to
/// pairs through their index. Pairs without gold are skipped.
AlignmentMetrics compute_metrics(std::span<const AlignmentSet> predicted, std::span<const GoldAlignment> gold);

void print_metrics(std::ostream& out, const AlignmentMetrics& m);
// `metric<TAB>value` lines.
void write_metrics_tsv(std::ostream& out, const AlignmentMetrics& m);

/// Word vectors loaded from (or exported to) word2vec text format.
struct EmbeddingSpace {
  std::vector<std::string> tokens;
  Matrix<float> vectors;

  std::ptrdiff_t find(std::string_view token) const;
};

EmbeddingSpace read_embeddings(std::istream& in, const std::string& source_name = "<embeddings>");
EmbeddingSpace read_embeddings(const std::string& path);
void write_embeddings(std::ostream& out, const EmbeddingSpace& space);

enum class SideFilter { kSrc, kTgt, kBoth };
SideFilter parse_side_filter(std::string_view name);

// Prefixes used for the two languages in a joint embedding space.
inline constexpr std::string_view kSrcPrefix = "src:";
inline constexpr std::string_view kTgtPrefix = "tgt:";

struct Neighbor {
  std::string token;
  double distance = 0.0;
};

/// The `n` tokens closest to `query` in Euclidean distance, query excluded.
/// `filter` restricts candidates by their `src:`/`tgt:` prefix; ties go to
/// the lower row index.
std::vector<Neighbor> nearest_neighbors(const EmbeddingSpace& space, std::string_view query, SideFilter filter,
                                        std::size_t n);

}  // namespace slua

#endif  // SLUA_EVAL_HPP
