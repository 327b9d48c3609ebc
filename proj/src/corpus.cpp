#include "slua/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cwctype>
#include <fstream>
#include <iostream>
#include <locale>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace slua {

Vocabulary::Vocabulary() : tokens_{std::string(kUnkToken)}, counts_{0} { index(); }

Vocabulary Vocabulary::build(std::span<const Tokens> lines, int min_count) {
  if (min_count < 1) throw InputError("min_count must be >= 1");
  std::size_t total = 0;
  for (const auto& line : lines) total += line.size();
  if (total == 0) throw InputError("empty input");

  struct Seen {
    std::uint64_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string_view, Seen> seen;
  std::size_t position = 0;
  for (const auto& line : lines) {
    for (const auto& tok : line) {
      auto [it, inserted] = seen.try_emplace(tok, Seen{0, position});
      ++it->second.count;
      ++position;
    }
  }

  std::vector<std::pair<std::string_view, Seen>> order(seen.begin(), seen.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });

  Vocabulary v;
  v.min_count_ = min_count;
  for (const auto& [tok, s] : order) {
    if (tok == kUnkToken || s.count < static_cast<std::uint64_t>(min_count)) {
      v.counts_[0] += s.count;
      continue;
    }
    v.tokens_.emplace_back(tok);
    v.counts_.push_back(s.count);
  }
  v.index();
  return v;
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> tokens,
                                    std::vector<std::uint64_t> counts, int min_count) {
  if (tokens.empty() || tokens.front() != kUnkToken)
    throw InputError("vocabulary must start with " + std::string(kUnkToken));
  if (tokens.size() != counts.size()) throw InputError("vocabulary token/count size mismatch");
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.counts_ = std::move(counts);
  v.min_count_ = min_count;
  v.index();
  if (v.ids_.size() != v.tokens_.size()) throw InputError("duplicate token in vocabulary");
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<WordId>(i));
}

WordId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

const std::string& Vocabulary::token(WordId id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

std::vector<WordId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<WordId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const WordId> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (WordId i : ids) out.push_back(token(i));
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix(0xff);
  }
  return h;
}

void Vocabulary::dump(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    out << tokens_[i] << '\t' << i << '\t' << counts_[i] << '\n';
}

Tokens split_tokens(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace {

// Decodes one UTF-8 sequence; invalid bytes are passed through as-is.
char32_t next_codepoint(std::string_view s, std::size_t& i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    len = 2;
    return (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
  }
  len = 1;
  return 0xFFFFFFFF;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out += static_cast<char>(c);
  } else if (c < 0x800) {
    out += static_cast<char>(0xC0 | (c >> 6));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else if (c < 0x10000) {
    out += static_cast<char>(0xE0 | (c >> 12));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (c >> 18));
    out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  }
}

const std::locale& utf8_locale() {
  static const std::locale loc = [] {
    try {
      return std::locale("C.UTF-8");
    } catch (const std::runtime_error&) {
      return std::locale::classic();
    }
  }();
  return loc;
}

}  // namespace

std::string lowercase_utf8(std::string_view text) {
  const auto& facet = std::use_facet<std::ctype<wchar_t>>(utf8_locale());
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = 1;
    char32_t c = next_codepoint(text, i, len);
    if (c == 0xFFFFFFFF) {
      out += text[i];
    } else if (c < 0x80) {
      out += static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
    } else {
      append_utf8(out, static_cast<char32_t>(facet.tolower(static_cast<wchar_t>(c))));
    }
    i += len;
  }
  return out;
}

namespace {

void warn(const LoadOptions& options, const std::string& msg) {
  if (options.warn)
    options.warn(msg);
  else
    std::cerr << "warning: " << msg << '\n';
}

Tokens tokenize(std::string_view text, const LoadOptions& options) {
  if (options.lowercase) return split_tokens(lowercase_utf8(text));
  return split_tokens(text);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

}  // namespace

TokenPair parse_pipes_line(std::string_view line, const std::string& source_name,
                           std::size_t line_no) {
  const auto pos = line.find("|||");
  if (pos == std::string_view::npos) throw FormatError(source_name, line_no, "missing ||| delimiter");
  return {split_tokens(line.substr(0, pos)), split_tokens(line.substr(pos + 3))};
}

std::vector<TokenPair> load_parallel(std::istream& in, const std::string& source_name,
                                     const LoadOptions& options) {
  std::vector<TokenPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto pos = line.find("|||");
    if (pos == std::string::npos && split_tokens(line).empty()) {
      warn(options, source_name + ":" + std::to_string(line_no) + ": blank line dropped");
      continue;
    }
    if (pos == std::string::npos) throw FormatError(source_name, line_no, "missing ||| delimiter");
    std::string_view view(line);
    TokenPair pair{tokenize(view.substr(0, pos), options), tokenize(view.substr(pos + 3), options)};
    if (pair.src.empty() || pair.tgt.empty()) {
      warn(options, source_name + ":" + std::to_string(line_no) + ": empty side, line dropped");
      continue;
    }
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<TokenPair> load_parallel(const std::string& path, const LoadOptions& options) {
  auto in = open_input(path);
  return load_parallel(in, path, options);
}

std::vector<TokenPair> load_parallel(std::istream& src, std::istream& tgt,
                                     const std::string& source_name, const LoadOptions& options) {
  std::vector<TokenPair> out;
  std::string a, b;
  std::size_t line_no = 0;
  for (;;) {
    const bool has_a = static_cast<bool>(std::getline(src, a));
    const bool has_b = static_cast<bool>(std::getline(tgt, b));
    if (!has_a && !has_b) break;
    ++line_no;
    if (has_a != has_b) throw FormatError(source_name, line_no, "line count mismatch");
    TokenPair pair{tokenize(a, options), tokenize(b, options)};
    if (pair.src.empty() || pair.tgt.empty()) {
      warn(options, source_name + ":" + std::to_string(line_no) + ": empty side, line dropped");
      continue;
    }
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<TokenPair> load_parallel(const std::string& src_path, const std::string& tgt_path,
                                     const LoadOptions& options) {
  auto src = open_input(src_path);
  auto tgt = open_input(tgt_path);
  return load_parallel(src, tgt, src_path + "," + tgt_path, options);
}

std::vector<SentencePair> encode_corpus(std::span<const TokenPair> text, const Vocabulary& src,
                                        const Vocabulary& tgt) {
  std::vector<SentencePair> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i].src.empty() || text[i].tgt.empty())
      throw InputError("pair " + std::to_string(i) + " has an empty side");
    out.push_back({src.encode(text[i].src), tgt.encode(text[i].tgt), i});
  }
  return out;
}

EncodedCorpus encode(std::span<const TokenPair> text, const Vocabulary& src, const Vocabulary& tgt) {
  return {encode_corpus(text, src, tgt), src.fingerprint(), tgt.fingerprint()};
}

namespace {

bool parse_int(std::string_view field, long long& value) {
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::vector<GoldAlignment> load_gold_naacl(std::istream& in, bool one_indexed,
                                           const std::string& source_name) {
  std::map<std::size_t, std::pair<std::set<Link>, std::set<Link>>> by_sentence;
  std::string line;
  std::size_t line_no = 0;
  const long long shift = one_indexed ? 1 : 0;
  while (std::getline(in, line)) {
    ++line_no;
    const Tokens fields = split_tokens(line);
    if (fields.empty()) continue;
    if (fields.size() < 3 || fields.size() > 4)
      throw FormatError(source_name, line_no, "expected `sentence src tgt [S|P]`");
    long long v[3];
    for (int f = 0; f < 3; ++f) {
      if (!parse_int(fields[f], v[f]))
        throw FormatError(source_name, line_no, "non-integer field '" + fields[f] + "'");
      v[f] -= shift;
      if (v[f] < 0) throw FormatError(source_name, line_no, "index out of range '" + fields[f] + "'");
    }
    bool sure = true;
    if (fields.size() == 4) {
      if (fields[3] == "P")
        sure = false;
      else if (fields[3] != "S")
        throw FormatError(source_name, line_no, "marker must be S or P, got '" + fields[3] + "'");
    }
    auto& entry = by_sentence[static_cast<std::size_t>(v[0])];
    const Link link{static_cast<int>(v[1]), static_cast<int>(v[2])};
    if (sure) entry.first.insert(link);
    entry.second.insert(link);
  }

  std::vector<GoldAlignment> out;
  out.reserve(by_sentence.size());
  for (auto& [index, sets] : by_sentence) {
    out.push_back({{sets.first.begin(), sets.first.end()},
                   {sets.second.begin(), sets.second.end()},
                   index});
  }
  return out;
}

std::vector<GoldAlignment> load_gold_naacl(const std::string& path, bool one_indexed) {
  auto in = open_input(path);
  return load_gold_naacl(in, one_indexed, path);
}

BatchIterator::BatchIterator(std::span<const SentencePair> corpus, std::size_t batch_size,
                             std::uint64_t seed)
    : corpus_(corpus), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw InputError("batch_size must be >= 1");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (corpus_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchIterator::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch(std::uint64_t epoch) const {
  const auto order = epoch_order(epoch);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(batches_per_epoch());
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<SentencePair> BatchIterator::gather(std::span<const std::size_t> batch) const {
  std::vector<SentencePair> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) out.push_back(corpus_[i]);
  return out;
}

}  // namespace slua
