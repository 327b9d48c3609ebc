#include "slua/decode.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <thread>

namespace slua {

AlignmentSet::AlignmentSet(int src_len, int tgt_len, std::vector<Link> links)
    : links(std::move(links)), src_len(src_len), tgt_len(tgt_len) {
  std::sort(this->links.begin(), this->links.end());
  this->links.erase(std::unique(this->links.begin(), this->links.end()), this->links.end());
}

void AlignmentSet::insert(Link l) {
  auto it = std::lower_bound(links.begin(), links.end(), l);
  if (it == links.end() || *it != l) links.insert(it, l);
}

bool AlignmentSet::contains(Link l) const { return std::binary_search(links.begin(), links.end(), l); }

namespace {

void check_shapes(const AlignmentSet& a, const AlignmentSet& b) {
  if (a.src_len != b.src_len || a.tgt_len != b.tgt_len)
    throw InputError("alignment sets have different sentence lengths");
}

}  // namespace

AlignmentSet intersect(const AlignmentSet& a, const AlignmentSet& b) {
  check_shapes(a, b);
  AlignmentSet out(a.src_len, a.tgt_len);
  std::set_intersection(a.links.begin(), a.links.end(), b.links.begin(), b.links.end(),
                        std::back_inserter(out.links));
  return out;
}

AlignmentSet unite(const AlignmentSet& a, const AlignmentSet& b) {
  check_shapes(a, b);
  AlignmentSet out(a.src_len, a.tgt_len);
  std::set_union(a.links.begin(), a.links.end(), b.links.begin(), b.links.end(), std::back_inserter(out.links));
  return out;
}

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "s2t") return DecodeMode::kS2T;
  if (name == "t2s") return DecodeMode::kT2S;
  if (name == "grow-diag") return DecodeMode::kGrowDiag;
  if (name == "grow-diag-final") return DecodeMode::kGrowDiagFinal;
  if (name == "gdfa" || name == "grow-diag-final-and") return DecodeMode::kGrowDiagFinalAnd;
  throw InputError("unknown decode mode '" + std::string(name) + "'");
}

std::string_view to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kS2T: return "s2t";
    case DecodeMode::kT2S: return "t2s";
    case DecodeMode::kGrowDiag: return "grow-diag";
    case DecodeMode::kGrowDiagFinal: return "grow-diag-final";
    case DecodeMode::kGrowDiagFinalAnd: return "gdfa";
  }
  return "?";
}

namespace {

// Dense working state for the symmetrization heuristics.
class Grid {
 public:
  Grid(const AlignmentSet& s2t, const AlignmentSet& t2s)
      : rows_(s2t.src_len),
        cols_(s2t.tgt_len),
        in_union_(static_cast<std::size_t>(rows_ * cols_), 0),
        current_(static_cast<std::size_t>(rows_ * cols_), 0),
        src_aligned_(static_cast<std::size_t>(rows_), 0),
        tgt_aligned_(static_cast<std::size_t>(cols_), 0) {
    check_shapes(s2t, t2s);
    for (const auto* set : {&s2t, &t2s}) {
      for (const Link& l : set->links) {
        if (l.src < 0 || l.src >= rows_ || l.tgt < 0 || l.tgt >= cols_)
          throw InputError("link outside sentence bounds");
        in_union_[at(l)] = 1;
      }
    }
    for (const Link& l : intersect(s2t, t2s).links) add(l);
  }

  void grow() {
    static constexpr int kNeighbours[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    bool added = true;
    while (added) {
      added = false;
      for (int s = 0; s < rows_; ++s) {
        for (int t = 0; t < cols_; ++t) {
          if (!current_[at({s, t})]) continue;
          for (const auto& d : kNeighbours) {
            const Link n{s + d[0], t + d[1]};
            if (n.src < 0 || n.src >= rows_ || n.tgt < 0 || n.tgt >= cols_) continue;
            if (current_[at(n)] || !in_union_[at(n)]) continue;
            if (src_aligned_[n.src] && tgt_aligned_[n.tgt]) continue;
            add(n);
            added = true;
          }
        }
      }
    }
  }

  void final_pass(const AlignmentSet& set, bool require_both) {
    for (const Link& l : set.links) {
      if (current_[at(l)]) continue;
      const bool free_s = !src_aligned_[l.src];
      const bool free_t = !tgt_aligned_[l.tgt];
      if (require_both ? (free_s && free_t) : (free_s || free_t)) add(l);
    }
  }

  AlignmentSet result() const {
    AlignmentSet out(rows_, cols_);
    for (int s = 0; s < rows_; ++s)
      for (int t = 0; t < cols_; ++t)
        if (current_[at({s, t})]) out.links.push_back({s, t});
    return out;
  }

 private:
  std::size_t at(Link l) const { return static_cast<std::size_t>(l.src * cols_ + l.tgt); }

  void add(Link l) {
    current_[at(l)] = 1;
    src_aligned_[l.src] = 1;
    tgt_aligned_[l.tgt] = 1;
  }

  int rows_;
  int cols_;
  std::vector<char> in_union_;
  std::vector<char> current_;
  std::vector<char> src_aligned_;
  std::vector<char> tgt_aligned_;
};

}  // namespace

AlignmentSet grow_diag(const AlignmentSet& s2t, const AlignmentSet& t2s) {
  Grid g(s2t, t2s);
  g.grow();
  return g.result();
}

AlignmentSet grow_diag_final(const AlignmentSet& s2t, const AlignmentSet& t2s, bool require_both) {
  Grid g(s2t, t2s);
  g.grow();
  g.final_pass(s2t, require_both);
  g.final_pass(t2s, require_both);
  return g.result();
}

std::vector<AlignmentSet> align_corpus(const EmbeddingTable<float>& params, int win,
                                       std::span<const SentencePair> corpus, const AlignOptions& options) {
  std::vector<AlignmentSet> out(corpus.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& pair = corpus[i];
      const auto x = contextualize_ids(params.src, std::span<const WordId>(pair.src), win);
      const auto y = contextualize_ids(params.tgt, std::span<const WordId>(pair.tgt), win);
      out[i] = decode(attention_forward(x, y), options.mode, options.rowwise);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, options.threads)), 1,
                                                       std::max<std::size_t>(1, corpus.size()));
  if (threads == 1) {
    work(0, corpus.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (corpus.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(corpus.size(), begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return out;
}

std::vector<AlignmentSet> align_corpus(const Checkpoint& ckpt, const EncodedCorpus& corpus,
                                       const AlignOptions& options) {
  if (corpus.src_vocab != ckpt.src_vocab.fingerprint() || corpus.tgt_vocab != ckpt.tgt_vocab.fingerprint())
    throw VocabularyMismatch("corpus was encoded with a different vocabulary than the checkpoint");
  return align_corpus(ckpt.params, ckpt.config.hp.win, corpus.pairs, options);
}

std::string format_pharaoh(const AlignmentSet& a, bool one_indexed) {
  const int shift = one_indexed ? 1 : 0;
  std::string out;
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(a.links[i].src + shift);
    out += '-';
    out += std::to_string(a.links[i].tgt + shift);
  }
  return out;
}

void write_pharaoh(std::ostream& out, std::span<const AlignmentSet> alignments, bool one_indexed) {
  for (const auto& a : alignments) out << format_pharaoh(a, one_indexed) << '\n';
}

AlignmentSet parse_pharaoh(std::string_view line, bool one_indexed, const std::string& source_name,
                           std::size_t line_no) {
  const int shift = one_indexed ? 1 : 0;
  std::vector<Link> links;
  int max_s = -1, max_t = -1;
  for (const auto& tok : split_tokens(line)) {
    const auto dash = tok.find('-');
    int v[2] = {0, 0};
    bool ok = dash != std::string::npos;
    if (ok) {
      const char* b = tok.data();
      const char* e = tok.data() + tok.size();
      auto r1 = std::from_chars(b, b + dash, v[0]);
      auto r2 = std::from_chars(b + dash + 1, e, v[1]);
      ok = r1.ec == std::errc() && r1.ptr == b + dash && r2.ec == std::errc() && r2.ptr == e;
    }
    if (!ok) throw FormatError(source_name, line_no, "bad link '" + tok + "' (expected i-j)");
    v[0] -= shift;
    v[1] -= shift;
    if (v[0] < 0 || v[1] < 0) throw FormatError(source_name, line_no, "negative index in '" + tok + "'");
    links.push_back({v[0], v[1]});
    max_s = std::max(max_s, v[0]);
    max_t = std::max(max_t, v[1]);
  }
  return AlignmentSet(max_s + 1, max_t + 1, std::move(links));
}

std::vector<AlignmentSet> read_pharaoh(std::istream& in, bool one_indexed, const std::string& source_name) {
  std::vector<AlignmentSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) out.push_back(parse_pharaoh(line, one_indexed, source_name, ++line_no));
  return out;
}

}  // namespace slua
