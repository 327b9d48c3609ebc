#include "slua/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace slua {

void AlignmentMetrics::finalize() {
  precision = predicted ? static_cast<double>(hit_possible) / static_cast<double>(predicted) : 1.0;
  recall = sure ? static_cast<double>(hit_sure) / static_cast<double>(sure) : 1.0;
  f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  const std::uint64_t denom = predicted + sure;
  aer = denom ? 1.0 - static_cast<double>(hit_sure + hit_possible) / static_cast<double>(denom) : 0.0;
}

AlignmentMetrics compute_metrics(std::span<const AlignmentSet> predicted, std::span<const GoldAlignment> gold) {
  std::vector<std::size_t> bad;
  for (const auto& g : gold)
    if (g.index >= predicted.size()) bad.push_back(g.index);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "gold refers to " << bad.size() << " pair(s) beyond the " << predicted.size()
        << " predicted:";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) msg << ' ' << bad[i];
    if (bad.size() > 20) msg << " ...";
    throw InputError(msg.str());
  }

  AlignmentMetrics m;
  for (const auto& g : gold) {
    const auto& a = predicted[g.index].links;
    auto overlap = [&a](const std::vector<Link>& ref) {
      std::vector<Link> sorted;
      const std::vector<Link>* r = &ref;
      if (!std::is_sorted(ref.begin(), ref.end())) {
        sorted = ref;
        std::sort(sorted.begin(), sorted.end());
        r = &sorted;
      }
      std::uint64_t n = 0;
      for (const Link& l : a)
        if (std::binary_search(r->begin(), r->end(), l)) ++n;
      return n;
    };
    m.predicted += a.size();
    m.sure += g.sure.size();
    m.hit_sure += overlap(g.sure);
    m.hit_possible += overlap(g.possible);
  }
  m.finalize();
  return m;
}

void print_metrics(std::ostream& out, const AlignmentMetrics& m) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(3);
  out << "precision  " << m.precision << '\n'
      << "recall     " << m.recall << '\n'
      << "f1         " << m.f1 << '\n'
      << "aer        " << m.aer << '\n'
      << "|A| " << m.predicted << "  |S| " << m.sure << "  |A&S| " << m.hit_sure << "  |A&P| "
      << m.hit_possible << '\n';
  out.flags(flags);
}

void write_metrics_tsv(std::ostream& out, const AlignmentMetrics& m) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << "precision\t" << m.precision << '\n'
      << "recall\t" << m.recall << '\n'
      << "f1\t" << m.f1 << '\n'
      << "aer\t" << m.aer << '\n'
      << "predicted\t" << m.predicted << '\n'
      << "sure\t" << m.sure << '\n'
      << "hit_sure\t" << m.hit_sure << '\n'
      << "hit_possible\t" << m.hit_possible << '\n';
  out.flags(flags);
  out.precision(prec);
}

std::ptrdiff_t EmbeddingSpace::find(std::string_view token) const {
  auto it = std::find(tokens.begin(), tokens.end(), token);
  return it == tokens.end() ? -1 : it - tokens.begin();
}

EmbeddingSpace read_embeddings(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source_name, 1, "missing `count dim` header");
  const auto header = split_tokens(line);
  long long count = 0, dim = 0;
  auto as_int = [](const std::string& s, long long& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
  };
  if (header.size() != 2 || !as_int(header[0], count) || !as_int(header[1], dim) || count < 0 || dim < 1)
    throw FormatError(source_name, 1, "bad header, expected `count dim`");

  EmbeddingSpace space;
  space.tokens.reserve(static_cast<std::size_t>(count));
  space.vectors.resize(count, dim);
  for (long long r = 0; r < count; ++r) {
    const std::size_t line_no = static_cast<std::size_t>(r) + 2;
    if (!std::getline(in, line)) throw FormatError(source_name, line_no, "fewer rows than the header says");
    const auto fields = split_tokens(line);
    if (static_cast<long long>(fields.size()) != dim + 1)
      throw FormatError(source_name, line_no, "expected token and " + std::to_string(dim) + " values");
    space.tokens.push_back(fields[0]);
    for (long long c = 0; c < dim; ++c) {
      const auto& f = fields[static_cast<std::size_t>(c) + 1];
      float v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size())
        throw FormatError(source_name, line_no, "bad number '" + f + "'");
      space.vectors(r, c) = v;
    }
  }
  return space;
}

EmbeddingSpace read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_embeddings(in, path);
}

void write_embeddings(std::ostream& out, const EmbeddingSpace& space) {
  out << space.tokens.size() << ' ' << space.vectors.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < space.tokens.size(); ++r) {
    out << space.tokens[r];
    for (Eigen::Index c = 0; c < space.vectors.cols(); ++c) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), space.vectors(static_cast<Eigen::Index>(r), c));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
}

SideFilter parse_side_filter(std::string_view name) {
  if (name == "src") return SideFilter::kSrc;
  if (name == "tgt") return SideFilter::kTgt;
  if (name == "both") return SideFilter::kBoth;
  throw InputError("unknown side '" + std::string(name) + "' (expected src, tgt or both)");
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingSpace& space, std::string_view query, SideFilter filter,
                                        std::size_t n) {
  const auto q = space.find(query);
  if (q < 0) throw InputError("token not in embedding space: " + std::string(query));

  auto accept = [filter](const std::string& tok) {
    switch (filter) {
      case SideFilter::kSrc: return tok.starts_with(kSrcPrefix);
      case SideFilter::kTgt: return tok.starts_with(kTgtPrefix);
      case SideFilter::kBoth: return true;
    }
    return true;
  };

  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(space.tokens.size());
  const auto qv = space.vectors.row(q).cast<double>();
  for (std::size_t r = 0; r < space.tokens.size(); ++r) {
    if (static_cast<std::ptrdiff_t>(r) == q || !accept(space.tokens[r])) continue;
    const double d = (space.vectors.row(static_cast<Eigen::Index>(r)).cast<double>() - qv).norm();
    cand.emplace_back(d, r);
  }
  const std::size_t take = std::min(n, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({space.tokens[cand[i].second], cand[i].first});
  return out;
}

}  // namespace slua
