// slua: train, align, evaluate and inspect the bidirectional contrastive aligner.
#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "slua/bench.hpp"
#include "slua/checkpoint.hpp"
#include "slua/corpus.hpp"
#include "slua/decode.hpp"
#include "slua/eval.hpp"
#include "slua/train.hpp"

namespace {

using namespace slua;

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct InputArgs {
  std::string bitext, src, tgt;
  bool lowercase = false;

  void add_to(CLI::App* cmd) {
    auto* b = cmd->add_option("--bitext", bitext, "parallel text, one `source ||| target` pair per line");
    auto* s = cmd->add_option("--src", src, "source side, one sentence per line");
    auto* t = cmd->add_option("--tgt", tgt, "target side, line-aligned with --src");
    b->excludes(s)->excludes(t);
    s->needs(t);
    t->needs(s);
    for (auto* o : {b, s, t}) o->check(CLI::ExistingFile);
    cmd->add_flag("--lowercase", lowercase, "lowercase input text");
  }

  void require(const CLI::App& cmd) const {
    if (bitext.empty() && src.empty())
      throw CLI::ValidationError("input", "give --bitext FILE or --src FILE --tgt FILE\n" + cmd.help());
  }

  std::vector<TokenPair> load() const {
    LoadOptions opts;
    opts.lowercase = lowercase;
    return bitext.empty() ? load_parallel(src, tgt, opts) : load_parallel(bitext, opts);
  }
};

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw InputError("cannot write " + path);
  return file;
}

// Printed as a config section, so the echo can be fed back through --config.
// Unset paths are left out; they would otherwise fail validation on reload.
void echo_config(const CLI::App& cmd) {
  std::istringstream all(cmd.config_to_str(true, false));
  std::cerr << "# effective config\n[" << cmd.get_name() << "]\n";
  for (std::string line; std::getline(all, line);)
    if (!line.ends_with("=\"\"")) std::cerr << line << '\n';
  std::cerr << std::flush;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  InputArgs input;
  TrainConfig cfg;
  bool no_s2t = false, no_t2s = false, no_agreement = false;
  std::string optimizer = "adam", neg_scope = "batch";
  std::string out = "slua.ckpt", metrics, src_vocab, tgt_vocab, dev_gold, embeddings;
  std::string embedding_side = "joint";
  bool gold_one_indexed = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "train embeddings on a parallel corpus");
  a.input.add_to(cmd);
  auto& hp = a.cfg.hp;
  cmd->add_option("--dim", hp.dim, "embedding size")->capture_default_str();
  cmd->add_option("--win", hp.win, "pooling window (odd)")->capture_default_str();
  cmd->add_option("--alpha", hp.alpha, "agreement-loss weight")->capture_default_str();
  cmd->add_option("--k", hp.k, "negatives per position")->capture_default_str();
  cmd->add_flag("--no-s2t", a.no_s2t, "drop the source-to-target loss");
  cmd->add_flag("--no-t2s", a.no_t2s, "drop the target-to-source loss");
  cmd->add_flag("--no-agreement", a.no_agreement, "drop the agreement loss");
  cmd->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  cmd->add_option("--batch", a.cfg.batch_size, "pairs per optimizer step")->capture_default_str();
  cmd->add_option("--lr", a.cfg.lr)->capture_default_str();
  cmd->add_option("--seed", a.cfg.seed)->capture_default_str();
  cmd->add_option("--optimizer", a.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  cmd->add_option("--beta1", a.cfg.beta1)->capture_default_str();
  cmd->add_option("--beta2", a.cfg.beta2)->capture_default_str();
  cmd->add_option("--eps", a.cfg.eps)->capture_default_str();
  cmd->add_option("--neg-scope", a.neg_scope, "where negatives come from")
      ->check(CLI::IsMember({"sentence", "batch"}))
      ->capture_default_str();
  cmd->add_option("--threads", a.cfg.threads)->capture_default_str();
  cmd->add_option("--min-count", a.cfg.min_count, "rarer words map to <unk>")->capture_default_str();
  cmd->add_option("--dev-gold", a.dev_gold, "NAACL gold for the training pairs; logs AER per epoch")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--one-indexed", a.gold_one_indexed, "gold file positions start at 1");
  cmd->add_flag("--keep-best", a.cfg.keep_best, "keep the epoch with the lowest dev AER");
  cmd->add_option("-o,--out", a.out, "checkpoint path")->capture_default_str();
  cmd->add_option("--metrics", a.metrics, "per-epoch TSV log");
  cmd->add_option("--src-vocab", a.src_vocab, "write the source vocabulary here");
  cmd->add_option("--tgt-vocab", a.tgt_vocab, "write the target vocabulary here");
  cmd->add_option("--export-embeddings", a.embeddings, "word2vec text file");
  cmd->add_option("--embedding-side", a.embedding_side)
      ->check(CLI::IsMember({"src", "tgt", "joint"}))
      ->capture_default_str();
}

void write_vocab(const std::string& path, const Vocabulary& v) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  v.dump(out);
}

int run_train(const CLI::App& cmd, TrainArgs& a) {
  a.input.require(cmd);
  a.cfg.hp.use_s2t = !a.no_s2t;
  a.cfg.hp.use_t2s = !a.no_t2s;
  a.cfg.hp.use_agreement = !a.no_agreement;
  a.cfg.optimizer = parse_optimizer(a.optimizer);
  a.cfg.neg_scope = parse_negative_scope(a.neg_scope);
  a.cfg.hp.validate();
  a.cfg.validate();
  if (a.cfg.keep_best && a.dev_gold.empty()) throw InputError("--keep-best needs --dev-gold");
  if (!a.cfg.hp.use_s2t && !a.cfg.hp.use_t2s && !a.cfg.hp.use_agreement)
    throw InputError("all loss terms are disabled");
  echo_config(cmd);

  const auto text = a.input.load();
  std::vector<Tokens> src, tgt;
  src.reserve(text.size());
  tgt.reserve(text.size());
  for (const auto& p : text) {
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  const auto vs = Vocabulary::build(src, a.cfg.min_count);
  const auto vt = Vocabulary::build(tgt, a.cfg.min_count);
  std::cerr << "pairs " << text.size() << "  vocab " << vs.size() << " / " << vt.size() << '\n';
  if (!a.src_vocab.empty()) write_vocab(a.src_vocab, vs);
  if (!a.tgt_vocab.empty()) write_vocab(a.tgt_vocab, vt);
  const auto corpus = encode_corpus(text, vs, vt);

  std::vector<GoldAlignment> gold;
  if (!a.dev_gold.empty()) gold = load_gold_naacl(a.dev_gold, a.gold_one_indexed);

  std::ofstream metrics;
  if (!a.metrics.empty()) {
    metrics.open(a.metrics);
    if (!metrics) throw InputError("cannot write " + a.metrics);
    write_metrics_header(metrics, !gold.empty());
  }
  const auto result = train(corpus, vs, vt, a.cfg, gold, [&](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << "  loss " << m.loss.total << " (s2t " << m.loss.s2t << ", t2s "
              << m.loss.t2s << ", disagree " << m.loss.disagree << ')';
    if (m.dev_aer) std::cerr << "  dev AER " << std::fixed << std::setprecision(4) << *m.dev_aer << std::defaultfloat;
    std::cerr << '\n';
    if (metrics.is_open()) {
      write_metrics_row(metrics, m);
      metrics.flush();
    }
  });
  save_checkpoint(a.out, result.checkpoint);
  std::cerr << "wrote " << a.out << " (epoch " << result.checkpoint.epoch << ")\n";
  if (!a.embeddings.empty()) {
    std::ofstream out(a.embeddings);
    if (!out) throw InputError("cannot write " + a.embeddings);
    write_embeddings(out, export_embeddings(result.checkpoint, parse_embedding_side(a.embedding_side)));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  InputArgs input;
  std::string model, out, mode = "grow-diag";
  bool one_indexed = false, rowwise = false;
  int threads = 1;
};

void add_align(CLI::App& app, AlignArgs& a) {
  auto* cmd = app.add_subcommand("align", "write Pharaoh-format alignments");
  cmd->add_option("-m,--model", a.model, "checkpoint")->required()->check(CLI::ExistingFile);
  a.input.add_to(cmd);
  cmd->add_option("--mode", a.mode)
      ->check(CLI::IsMember({"s2t", "t2s", "grow-diag", "grow-diag-final", "gdfa"}))
      ->capture_default_str();
  cmd->add_flag("--decode-rowwise", a.rowwise, "each query picks its best key instead of the reverse");
  cmd->add_flag("--one-indexed", a.one_indexed, "write 1-based positions");
  cmd->add_option("--threads", a.threads)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", a.out, "output file (default stdout)");
}

int run_align(const CLI::App& cmd, AlignArgs& a) {
  a.input.require(cmd);
  echo_config(cmd);
  const auto ckpt = load_checkpoint(a.model);
  const auto text = a.input.load();
  const auto corpus = encode(text, ckpt.src_vocab, ckpt.tgt_vocab);
  const auto aligned = align_corpus(ckpt, corpus, {parse_decode_mode(a.mode), a.rowwise, a.threads});
  std::ofstream file;
  auto& out = open_output(a.out, file);
  write_pharaoh(out, aligned, a.one_indexed);
  out.flush();
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred = "-", gold, tsv;
  bool pred_one_indexed = false, gold_one_indexed = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "score alignments against NAACL gold");
  cmd->add_option("-p,--pred", a.pred, "Pharaoh alignments, `-` for stdin")->capture_default_str();
  cmd->add_option("-g,--gold", a.gold, "NAACL gold file")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--pred-one-indexed", a.pred_one_indexed, "predictions use 1-based positions");
  cmd->add_flag("--one-indexed", a.gold_one_indexed, "gold uses 1-based sentence numbers and positions");
  cmd->add_option("--tsv", a.tsv, "also write `metric<TAB>value` lines here");
}

int run_eval(const CLI::App& cmd, EvalArgs& a) {
  echo_config(cmd);
  std::vector<AlignmentSet> pred;
  if (a.pred == "-") {
    pred = read_pharaoh(std::cin, a.pred_one_indexed, "<stdin>");
  } else {
    std::ifstream in(a.pred);
    if (!in) throw InputError("cannot open " + a.pred);
    pred = read_pharaoh(in, a.pred_one_indexed, a.pred);
  }
  const auto gold = load_gold_naacl(a.gold, a.gold_one_indexed);
  const auto m = compute_metrics(pred, gold);
  print_metrics(std::cout, m);
  if (!a.tsv.empty()) {
    std::ofstream out(a.tsv);
    if (!out) throw InputError("cannot write " + a.tsv);
    write_metrics_tsv(out, m);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct NnArgs {
  std::string embeddings, model, side = "both";
  std::vector<std::string> queries;
  std::size_t n = 5;
};

void add_nn(CLI::App& app, NnArgs& a) {
  auto* cmd = app.add_subcommand("nn", "nearest neighbours in the joint embedding space");
  auto* e = cmd->add_option("-e,--embeddings", a.embeddings, "word2vec text file")->check(CLI::ExistingFile);
  auto* m = cmd->add_option("-m,--model", a.model, "checkpoint (uses its joint space)")->check(CLI::ExistingFile);
  e->excludes(m);
  cmd->add_option("-q,--query", a.queries, "token(s), e.g. src:house")->required();
  cmd->add_option("-n", a.n, "neighbours per query")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--side", a.side, "restrict neighbours to one side")
      ->check(CLI::IsMember({"src", "tgt", "both"}))
      ->capture_default_str();
}

int run_nn(const CLI::App& cmd, NnArgs& a) {
  if (a.embeddings.empty() && a.model.empty())
    throw CLI::ValidationError("input", "give --embeddings FILE or --model CKPT\n" + cmd.help());
  echo_config(cmd);
  const auto space = a.embeddings.empty() ? export_embeddings(load_checkpoint(a.model), EmbeddingSide::kJoint)
                                          : read_embeddings(a.embeddings);
  const auto filter = parse_side_filter(a.side);
  for (const auto& q : a.queries) {
    for (const auto& nb : nearest_neighbors(space, q, filter, a.n))
      std::cout << q << '\t' << nb.token << '\t' << nb.distance << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct DumpArgs {
  InputArgs input;
  std::string model, out;
  std::vector<std::size_t> pairs;
  std::size_t first = 10;
};

void add_dump(CLI::App& app, DumpArgs& a) {
  auto* cmd = app.add_subcommand("dump-attn", "write attention maps as TSV");
  cmd->add_option("-m,--model", a.model, "checkpoint")->required()->check(CLI::ExistingFile);
  a.input.add_to(cmd);
  auto* p = cmd->add_option("--pair", a.pairs, "0-based pair index (repeatable)");
  cmd->add_option("--first", a.first, "dump the first N pairs")->capture_default_str()->excludes(p);
  cmd->add_option("-o,--out", a.out, "output file (default stdout)");
}

void write_map(std::ostream& out, std::string_view name, const Matrix<float>& m, const Tokens& rows,
               const Tokens& cols) {
  out << name;
  for (const auto& c : cols) out << '\t' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << '\t' << m(i, j);
    out << '\n';
  }
}

int run_dump(const CLI::App& cmd, DumpArgs& a) {
  a.input.require(cmd);
  echo_config(cmd);
  const auto ckpt = load_checkpoint(a.model);
  const auto text = a.input.load();
  const auto corpus = encode(text, ckpt.src_vocab, ckpt.tgt_vocab);
  std::vector<std::size_t> which = a.pairs;
  if (which.empty())
    for (std::size_t i = 0; i < std::min(a.first, text.size()); ++i) which.push_back(i);
  std::ofstream file;
  auto& out = open_output(a.out, file);
  out << std::setprecision(7);
  const int win = ckpt.config.hp.win;
  for (std::size_t i : which) {
    if (i >= text.size()) throw InputError("pair " + std::to_string(i) + " is beyond the corpus");
    const auto& pair = corpus.pairs[i];
    const auto att = attention_forward(contextualize_ids(ckpt.params.src, std::span<const WordId>(pair.src), win),
                                       contextualize_ids(ckpt.params.tgt, std::span<const WordId>(pair.tgt), win));
    out << "# pair " << i << '\n';
    write_map(out, "s2t", att.s2t, text[i].src, text[i].tgt);
    write_map(out, "t2s", att.t2s, text[i].tgt, text[i].src);
    out << '\n';
  }
  out.flush();
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  BenchOptions opts;
  double min_rate = 0.0;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand("bench", "measure training throughput on generated text");
  auto& c = a.opts.config;
  cmd->add_option("--dim", c.hp.dim)->capture_default_str();
  cmd->add_option("--win", c.hp.win)->capture_default_str();
  cmd->add_option("--k", c.hp.k)->capture_default_str();
  cmd->add_option("--batch", c.batch_size)->capture_default_str();
  cmd->add_option("--threads", c.threads)->capture_default_str();
  cmd->add_option("--pairs", a.opts.pairs)->capture_default_str();
  cmd->add_option("--vocab", a.opts.vocab)->capture_default_str();
  cmd->add_option("--min-len", a.opts.min_len)->capture_default_str();
  cmd->add_option("--max-len", a.opts.max_len)->capture_default_str();
  cmd->add_option("--require", a.min_rate, "exit 1 below this many pairs/minute/thread")->capture_default_str();
}

int run_bench(const CLI::App& cmd, BenchArgs& a) {
  echo_config(cmd);
  const auto r = run_benchmark(a.opts);
  const double rate = r.pairs_per_minute_per_thread();
  std::cout << "pairs " << r.pairs << "  tokens " << r.tokens << "  seconds " << r.seconds << "  threads "
            << r.threads << '\n'
            << "throughput " << static_cast<long long>(rate) << " pairs/minute/thread\n";
  return rate >= a.min_rate ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slua: lightweight unsupervised word alignment"};
  app.set_config("--config", "", "TOML config file; command-line flags win");
  app.require_subcommand(1);
  TrainArgs train_args;
  AlignArgs align_args;
  EvalArgs eval_args;
  NnArgs nn_args;
  DumpArgs dump_args;
  BenchArgs bench_args;
  add_train(app, train_args);
  add_align(app, align_args);
  add_eval(app, eval_args);
  add_nn(app, nn_args);
  add_dump(app, dump_args);
  add_bench(app, bench_args);

  try {
    app.parse(argc, argv);
    const CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "train") return run_train(*cmd, train_args);
    if (name == "align") return run_align(*cmd, align_args);
    if (name == "eval") return run_eval(*cmd, eval_args);
    if (name == "nn") return run_nn(*cmd, nn_args);
    if (name == "dump-attn") return run_dump(*cmd, dump_args);
    return run_bench(*cmd, bench_args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "slua: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const InputError& e) {
    std::cerr << "slua: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "slua: " << e.what() << '\n';
    return 1;
  }
}
