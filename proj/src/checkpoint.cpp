#include "slua/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace slua {

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw InputError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

NegativeScope parse_negative_scope(std::string_view name) {
  if (name == "sentence") return NegativeScope::kSentence;
  if (name == "batch") return NegativeScope::kBatch;
  throw InputError("unknown negative scope '" + std::string(name) + "' (expected sentence or batch)");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }
std::string_view to_string(NegativeScope s) { return s == NegativeScope::kSentence ? "sentence" : "batch"; }

void TrainConfig::validate() const {
  hp.validate();
  if (!(lr > 0.0)) throw InputError("lr must be > 0");
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (batch_size < 1) throw InputError("batch size must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw InputError("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw InputError("beta2 must be in (0, 1)");
  if (!(eps > 0.0)) throw InputError("eps must be > 0");
  if (threads < 1) throw InputError("threads must be >= 1");
  if (min_count < 1) throw InputError("min_count must be >= 1");
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.hp.dim == b.hp.dim && a.hp.win == b.hp.win && a.hp.k == b.hp.k && a.hp.alpha == b.hp.alpha &&
         a.hp.use_s2t == b.hp.use_s2t && a.hp.use_t2s == b.hp.use_t2s &&
         a.hp.use_agreement == b.hp.use_agreement && a.lr == b.lr && a.epochs == b.epochs &&
         a.batch_size == b.batch_size && a.seed == b.seed && a.optimizer == b.optimizer &&
         a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.eps == b.eps && a.neg_scope == b.neg_scope &&
         a.threads == b.threads && a.min_count == b.min_count && a.keep_best == b.keep_best;
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  return a.params.src == b.params.src && a.params.tgt == b.params.tgt && a.src_vocab == b.src_vocab &&
         a.tgt_vocab == b.tgt_vocab && a.config == b.config && a.epoch == b.epoch &&
         a.format_version == b.format_version;
}

namespace {

constexpr std::array<char, 4> kMagic{'S', 'L', 'U', 'A'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    std::array<char, sizeof(T)> bytes;
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    out_.write(bytes.data(), bytes.size());
  }

  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }

  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void put_matrix(const Matrix<float>& m) {
    put(static_cast<std::uint32_t>(m.rows()));
    put(static_cast<std::uint32_t>(m.cols()));
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(m.data()[i]);
    }
  }

  void put_vocab(const Vocabulary& v) {
    put(static_cast<std::uint32_t>(v.size()));
    put(static_cast<std::int32_t>(v.min_count()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      put_string(v.tokens()[i]);
      put(v.counts()[i]);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, const std::string& name) : in_(in), name_(name) {}

  template <typename T>
  T get() {
    static_assert(std::is_integral_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
    return static_cast<T>(u);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  bool get_bool() { return get<std::uint8_t>() != 0; }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) fail("token longer than 1 MiB");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  Matrix<float> get_matrix() {
    const auto rows = get<std::uint32_t>();
    const auto cols = get<std::uint32_t>();
    Matrix<float> m(rows, cols);
    if constexpr (std::endian::native == std::endian::little) {
      read(reinterpret_cast<char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f32();
    }
    return m;
  }

  Vocabulary get_vocab() {
    const auto n = get<std::uint32_t>();
    const auto min_count = get<std::int32_t>();
    std::vector<std::string> tokens;
    std::vector<std::uint64_t> counts;
    tokens.reserve(n);
    counts.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      tokens.push_back(get_string());
      counts.push_back(get<std::uint64_t>());
    }
    return Vocabulary::from_entries(std::move(tokens), std::move(counts), min_count);
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  }

  [[noreturn]] void fail(const std::string& what) { throw InputError(name_ + ": " + what); }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.put(ckpt.format_version);
  w.put(ckpt.src_vocab.fingerprint());
  w.put(ckpt.tgt_vocab.fingerprint());

  const auto& c = ckpt.config;
  w.put(static_cast<std::int32_t>(c.hp.dim));
  w.put(static_cast<std::int32_t>(c.hp.win));
  w.put(static_cast<std::int32_t>(c.hp.k));
  w.put_f64(c.hp.alpha);
  w.put(static_cast<std::uint8_t>(c.hp.use_s2t));
  w.put(static_cast<std::uint8_t>(c.hp.use_t2s));
  w.put(static_cast<std::uint8_t>(c.hp.use_agreement));
  w.put_f64(c.lr);
  w.put(static_cast<std::int32_t>(c.epochs));
  w.put(static_cast<std::int32_t>(c.batch_size));
  w.put(c.seed);
  w.put(static_cast<std::uint8_t>(c.optimizer));
  w.put_f64(c.beta1);
  w.put_f64(c.beta2);
  w.put_f64(c.eps);
  w.put(static_cast<std::uint8_t>(c.neg_scope));
  w.put(static_cast<std::int32_t>(c.threads));
  w.put(static_cast<std::int32_t>(c.min_count));
  w.put(static_cast<std::uint8_t>(c.keep_best));
  w.put(static_cast<std::int32_t>(ckpt.epoch));

  w.put_vocab(ckpt.src_vocab);
  w.put_vocab(ckpt.tgt_vocab);
  w.put_matrix(ckpt.params.src);
  w.put_matrix(ckpt.params.tgt);
  if (!out) throw Error("checkpoint write failed");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(std::istream& in, const std::string& source_name) {
  Reader r(in, source_name);
  std::array<char, 4> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) r.fail("not a checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.format_version = r.get<std::uint32_t>();
  if (ckpt.format_version != Checkpoint::kFormatVersion)
    r.fail("unsupported format version " + std::to_string(ckpt.format_version));
  const auto src_fp = r.get<std::uint64_t>();
  const auto tgt_fp = r.get<std::uint64_t>();

  auto& c = ckpt.config;
  c.hp.dim = r.get<std::int32_t>();
  c.hp.win = r.get<std::int32_t>();
  c.hp.k = r.get<std::int32_t>();
  c.hp.alpha = r.get_f64();
  c.hp.use_s2t = r.get_bool();
  c.hp.use_t2s = r.get_bool();
  c.hp.use_agreement = r.get_bool();
  c.lr = r.get_f64();
  c.epochs = r.get<std::int32_t>();
  c.batch_size = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();
  const auto opt = r.get<std::uint8_t>();
  if (opt > 1) r.fail("bad optimizer tag");
  c.optimizer = static_cast<Optimizer>(opt);
  c.beta1 = r.get_f64();
  c.beta2 = r.get_f64();
  c.eps = r.get_f64();
  const auto scope = r.get<std::uint8_t>();
  if (scope > 1) r.fail("bad negative scope tag");
  c.neg_scope = static_cast<NegativeScope>(scope);
  c.threads = r.get<std::int32_t>();
  c.min_count = r.get<std::int32_t>();
  c.keep_best = r.get_bool();
  ckpt.epoch = r.get<std::int32_t>();

  ckpt.src_vocab = r.get_vocab();
  ckpt.tgt_vocab = r.get_vocab();
  if (ckpt.src_vocab.fingerprint() != src_fp || ckpt.tgt_vocab.fingerprint() != tgt_fp)
    throw VocabularyMismatch(source_name + ": vocabulary hash check failed");
  ckpt.params.src = r.get_matrix();
  ckpt.params.tgt = r.get_matrix();
  if (ckpt.params.src.rows() != static_cast<Eigen::Index>(ckpt.src_vocab.size()) ||
      ckpt.params.tgt.rows() != static_cast<Eigen::Index>(ckpt.tgt_vocab.size()) ||
      ckpt.params.src.cols() != c.hp.dim || ckpt.params.tgt.cols() != c.hp.dim)
    r.fail("embedding shape does not match vocabulary/config");
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return load_checkpoint(in, path);
}

}  // namespace slua
