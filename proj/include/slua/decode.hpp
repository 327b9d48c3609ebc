#ifndef SLUA_DECODE_HPP
#define SLUA_DECODE_HPP

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slua/corpus.hpp"
#include "slua/checkpoint.hpp"
#include "slua/model.hpp"

namespace slua {

/// Hard links for one sentence pair, kept sorted and unique.
struct AlignmentSet {
  std::vector<Link> links;
  int src_len = 0;
  int tgt_len = 0;

  AlignmentSet() = default;
  AlignmentSet(int src_len, int tgt_len, std::vector<Link> links = {});

  void insert(Link l);
  bool contains(Link l) const;
  std::size_t size() const { return links.size(); }

  friend bool operator==(const AlignmentSet&, const AlignmentSet&) = default;
};

AlignmentSet intersect(const AlignmentSet& a, const AlignmentSet& b);
AlignmentSet unite(const AlignmentSet& a, const AlignmentSet& b);

enum class Direction { kS2T, kT2S };

enum class DecodeMode { kS2T, kT2S, kGrowDiag, kGrowDiagFinal, kGrowDiagFinalAnd };

DecodeMode parse_decode_mode(std::string_view name);
std::string_view to_string(DecodeMode mode);

/// Hard alignment from one attention map.
///
/// Column-wise (default): for s2t every target position j links to
/// argmax_i s2t(i, j); for t2s every source position i links to
/// argmax_j t2s(j, i). Row-wise reads each query's own distribution instead:
/// s2t source i -> argmax_j s2t(i, j). Ties go to the smallest index.
template <typename Scalar>
AlignmentSet decode_direction(const Attention<Scalar>& att, Direction dir, bool rowwise = false) {
  const auto& map = dir == Direction::kS2T ? att.s2t : att.t2s;
  const int src_len = static_cast<int>(att.s2t.rows());
  const int tgt_len = static_cast<int>(att.s2t.cols());
  AlignmentSet out(src_len, tgt_len);
  // `map` rows index the query side; `col` picks argmax over rows.
  auto argmax_col = [&](Eigen::Index c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < map.rows(); ++r)
      if (map(r, c) > map(best, c)) best = r;
    return static_cast<int>(best);
  };
  auto argmax_row = [&](Eigen::Index r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < map.cols(); ++c)
      if (map(r, c) > map(r, best)) best = c;
    return static_cast<int>(best);
  };
  std::vector<Link> links;
  if (!rowwise) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const int r = argmax_col(c);
      links.push_back(dir == Direction::kS2T ? Link{r, static_cast<int>(c)} : Link{static_cast<int>(c), r});
    }
  } else {
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
      const int c = argmax_row(r);
      links.push_back(dir == Direction::kS2T ? Link{static_cast<int>(r), c} : Link{c, static_cast<int>(r)});
    }
  }
  return AlignmentSet(src_len, tgt_len, std::move(links));
}

/// Grows the intersection toward the union through 8-neighbours whose source
/// or target word is still unaligned, until nothing more can be added.
AlignmentSet grow_diag(const AlignmentSet& s2t, const AlignmentSet& t2s);

/// grow_diag followed by a pass over union links (s2t first, then t2s). With
/// `require_both` a link is added only if both words are unaligned
/// (grow-diag-final-and), otherwise if either is.
AlignmentSet grow_diag_final(const AlignmentSet& s2t, const AlignmentSet& t2s, bool require_both);

template <typename Scalar>
AlignmentSet decode(const Attention<Scalar>& att, DecodeMode mode, bool rowwise = false) {
  switch (mode) {
    case DecodeMode::kS2T:
      return decode_direction(att, Direction::kS2T, rowwise);
    case DecodeMode::kT2S:
      return decode_direction(att, Direction::kT2S, rowwise);
    default:
      break;
  }
  const auto a = decode_direction(att, Direction::kS2T, rowwise);
  const auto b = decode_direction(att, Direction::kT2S, rowwise);
  if (mode == DecodeMode::kGrowDiag) return grow_diag(a, b);
  return grow_diag_final(a, b, mode == DecodeMode::kGrowDiagFinalAnd);
}

struct AlignOptions {
  DecodeMode mode = DecodeMode::kGrowDiag;
  bool rowwise = false;
  int threads = 1;
};

/// Aligns every pair. Output order equals corpus order for any thread count.
std::vector<AlignmentSet> align_corpus(const EmbeddingTable<float>& params, int win,
                                       std::span<const SentencePair> corpus,
                                       const AlignOptions& options = {});

/// Same, after checking that `corpus` was encoded with the checkpoint's
/// vocabularies; throws VocabularyMismatch otherwise.
std::vector<AlignmentSet> align_corpus(const Checkpoint& ckpt, const EncodedCorpus& corpus,
                                       const AlignOptions& options = {});

/// `i-j` links separated by spaces.
std::string format_pharaoh(const AlignmentSet& a, bool one_indexed = false);
void write_pharaoh(std::ostream& out, std::span<const AlignmentSet> alignments, bool one_indexed = false);

/// Parses one Pharaoh line. Sentence lengths are unknown and set to one past
/// the largest index seen.
AlignmentSet parse_pharaoh(std::string_view line, bool one_indexed, const std::string& source_name,
                           std::size_t line_no);
std::vector<AlignmentSet> read_pharaoh(std::istream& in, bool one_indexed,
                                       const std::string& source_name = "<alignments>");

}  // namespace slua

#endif  // SLUA_DECODE_HPP
