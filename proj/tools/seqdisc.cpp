// seqdisc command-line tool.
//
// Exit codes: 0 success, 1 runtime failure (or a failed oracle check),
// 2 invalid input or arguments, 3 training divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "seqdisc/seqdisc.hpp"

using namespace seqdisc;

namespace {

constexpr int kConfigVersion = 1;

// ---------------------------------------------------------------------------
// JSON config: {"version": 1, "<option>": value, ..., "<command>": {...}}.
// Top-level keys apply to any command that has such an option; a section
// named after the command takes precedence and must not contain unknown
// keys. Options given on the command line always win.

std::vector<std::string> config_values(const nlohmann::json& v) {
  std::vector<std::string> out;
  auto one = [](const nlohmann::json& x) -> std::string {
    if (x.is_string()) return x.get<std::string>();
    if (x.is_boolean()) return x.get<bool>() ? "true" : "false";
    if (x.is_number_integer()) return std::to_string(x.get<long long>());
    if (x.is_number()) {
      std::ostringstream os;
      os << std::setprecision(17) << x.get<double>();
      return os.str();
    }
    throw ValidationError("unsupported config value " + x.dump());
  };
  if (v.is_array())
    for (const auto& x : v) out.push_back(one(x));
  else
    out.push_back(one(v));
  return out;
}

void apply_config(const std::string& path, CLI::App& cmd) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("version")) throw ValidationError("config " + path + " needs a \"version\" field");
  if (j["version"] != kConfigVersion)
    throw ValidationError("config " + path + " has unsupported version " + j["version"].dump());

  auto set = [&](const std::string& key, const nlohmann::json& value, bool strict) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = cmd.get_option_no_throw("--" + name);
    if (!opt) {
      if (strict) throw ValidationError("config " + path + ": unknown option '" + key + "' for " + cmd.get_name());
      return;
    }
    if (opt->count() > 0) return;
    for (const auto& s : config_values(value)) opt->add_result(s);
    opt->run_callback();
  };
  if (j.contains(cmd.get_name())) {
    const auto& section = j[cmd.get_name()];
    if (!section.is_object()) throw ValidationError("config section '" + cmd.get_name() + "' must be an object");
    for (const auto& [k, v] : section.items()) set(k, v, true);
  }
  for (const auto& [k, v] : j.items())
    if (k != "version" && !v.is_object()) set(k, v, false);
}

// ---------------------------------------------------------------------------
// Shared helpers.

NGramLM load_lm(const std::string& path, const Lexicon& lex) {
  const LmUnit unit = peek_arpa_unit(path);
  return read_arpa(path, lm_symbols(unit, lex));
}

FrameScores scores_for(const Utterance& u, const ContextKScorer* scorer) {
  if (scorer) return scorer->score_utterance(u);
  if (u.scores) return *u.scores;
  throw ValidationError("utterance '" + u.id + "' has no score tensor and no checkpoint was given");
}

std::vector<std::vector<int>> read_text(const std::string& path, LmUnit unit, const Lexicon& lex) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::vector<int>> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    try {
      if (unit == LmUnit::phoneme) {
        const auto l = parse_phonemes(lex, line);
        out.emplace_back(l.begin(), l.end());
      } else {
        const auto w = parse_words(lex, line);
        out.emplace_back(w.begin(), w.end());
      }
    } catch (const ValidationError& e) {
      throw ParseError(path, no, e.what());
    }
  }
  return out;
}

std::vector<std::vector<int>> corpus_tokens(const std::vector<Utterance>& corpus, LmUnit unit) {
  std::vector<std::vector<int>> out;
  for (const auto& u : corpus) {
    if (unit == LmUnit::phoneme) out.emplace_back(u.reference_phonemes.begin(), u.reference_phonemes.end());
    else out.emplace_back(u.reference_words.begin(), u.reference_words.end());
  }
  return out;
}

int lm_vocab(LmUnit unit, const Lexicon& lex) { return unit == LmUnit::phoneme ? lex.alphabet().size() : lex.num_words(); }

std::vector<std::vector<int>> load_sentences(const std::string& corpus, const std::string& text, LmUnit unit,
                                             const Lexicon& lex) {
  if (!corpus.empty() && !text.empty()) throw ValidationError("give either --corpus or --text, not both");
  if (!text.empty()) return read_text(text, unit, lex);
  if (!corpus.empty()) return corpus_tokens(load_corpus(corpus, lex), unit);
  return {};
}

void print_wer(const std::string& name, const WerBreakdown& w, const std::string& csv_path) {
  const long n = w.ref_tokens;
  std::cout << std::left << std::setw(12) << "dataset" << std::right << std::setw(7) << "Sub" << std::setw(7) << "Del"
            << std::setw(7) << "Ins" << std::setw(7) << "WER" << "\n";
  std::cout << std::left << std::setw(12) << name << std::right << std::setw(7) << format_percent(w.sub, n) << std::setw(7)
            << format_percent(w.del, n) << std::setw(7) << format_percent(w.ins, n) << std::setw(7)
            << format_percent(w.errors(), n) << "\n";
  std::cout << "(" << w.sub << " sub, " << w.del << " del, " << w.ins << " ins over " << n << " reference words)\n";
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw Error("cannot write " + csv_path);
    csv << "dataset,sub,del,ins,wer,sub_count,del_count,ins_count,ref_words\n";
    csv << name << ',' << format_percent(w.sub, n) << ',' << format_percent(w.del, n) << ',' << format_percent(w.ins, n)
        << ',' << format_percent(w.errors(), n) << ',' << w.sub << ',' << w.del << ',' << w.ins << ',' << n << "\n";
  }
}

std::map<std::string, WordSequence> reference_map(const std::vector<Utterance>& corpus) {
  std::map<std::string, WordSequence> refs;
  for (const auto& u : corpus) refs[u.id] = u.reference_words;
  return refs;
}

// ---------------------------------------------------------------------------
// Commands.

struct TrainLmArgs {
  std::string lexicon, corpus, text, out, unit = "phoneme";
  int order = 2;
  double discount = 0.5;
};

int cmd_train_lm(const TrainLmArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  const LmUnit unit = parse_lm_unit(a.unit);
  const auto sentences = load_sentences(a.corpus, a.text, unit, lex);
  const auto lm = train_ngram(sentences, unit, a.order, lm_vocab(unit, lex), a.discount);
  write_arpa(lm, a.out, lm_symbols(unit, lex));
  std::cout << "wrote " << to_string(unit) << " " << a.order << "-gram over " << lm.output_size() << " symbols to " << a.out
            << "\n";
  return 0;
}

struct PplArgs {
  std::string lexicon, corpus, text, lm, train_corpus, train_text, unit = "phoneme";
  int order = -1;
  double discount = 0.5;
};

int cmd_ppl(const PplArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  std::optional<NGramLM> lm;
  if (!a.lm.empty()) {
    if (a.order >= 0) throw ValidationError("give either --lm or --order, not both");
    lm = load_lm(a.lm, lex);
  } else {
    if (a.order < 0) throw ValidationError("ppl needs --lm or --order");
    const LmUnit unit = parse_lm_unit(a.unit);
    lm = train_ngram(load_sentences(a.train_corpus, a.train_text, unit, lex), unit, a.order, lm_vocab(unit, lex), a.discount);
  }
  const auto heldout = load_sentences(a.corpus, a.text, lm->unit(), lex);
  std::cout << "PPL " << std::setprecision(17) << perplexity(*lm, heldout) << "\n";
  return 0;
}

struct TrainSeqArgs {
  std::string lexicon, corpus, init, out, log, phoneme_lm, word_lm, nbest, dump_dp;
  std::string criterion = "ce", beam_mode = "prune_recomb", cost = "word_edit";
  int context = 1, steps = 10, beam_size = kDefaultBeamSize, jobs = 1, top_j = 0, recomb_context = -1;
  double lr = 0.1, alpha = 1.0, beta = 0.0, init_scale = 0.1, cost_offset = 0.0;
  std::uint64_t seed = 1;
};

void dump_denominators(const std::string& path, const ContextKScorer& sc, const std::vector<Utterance>& corpus,
                       const TrainConfig& cfg, const TrainResources& res) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const NGramLM uniform = train_ngram({}, LmUnit::phoneme, 0, sc.num_labels(), 0.0);
  const NGramLM& plm = res.phoneme_lm ? *res.phoneme_lm : uniform;
  for (const auto& u : corpus) {
    const auto scores = sc.score_utterance(u);
    SeqScoreConfig s{cfg.alpha, cfg.beta, cfg.top_j, 0};
    DpTable table;
    switch (cfg.criterion) {
      case Criterion::mmi_lf_limited:
        s.recomb_context = cfg.recomb_context.value_or(std::max(sc.context_size(), plm.context_size()));
        lf_denominator_limited(scores, plm, s, nullptr, 1.0, &table);
        break;
      case Criterion::mmi_lf_approx:
        s.recomb_context = cfg.recomb_context.value_or(sc.context_size());
        lf_denominator_approx(scores, NGramStatefulLM(plm), s, nullptr, 1.0, &table);
        break;
      case Criterion::mmi_lf_word:
        if (!res.word_lm) throw ValidationError("--dump-dp for mmi_lf_word needs --word-lm");
        s.recomb_context = cfg.recomb_context.value_or(sc.context_size());
        lf_denominator_word(scores, *res.word_lm, *res.lexicon, s, nullptr, 1.0, &table);
        break;
      default:
        throw ValidationError("--dump-dp needs a lattice-free criterion (mmi_lf_limited, mmi_lf_approx, mmi_lf_word)");
    }
    table.dump(out, ContextCodec(s.recomb_context, sc.num_labels()), u.id);
  }
}

int cmd_train_seq(const TrainSeqArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  const auto corpus = load_corpus(a.corpus, lex);
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  ContextKScorer sc = a.init.empty() ? ContextKScorer(a.context, lex.alphabet().size(), corpus.front().feature_dim)
                                     : ContextKScorer::load(a.init);
  if (a.init.empty()) sc.randomize(a.seed, a.init_scale);
  if (sc.num_labels() != lex.alphabet().size()) throw ValidationError("checkpoint label inventory does not match the lexicon");

  TrainConfig cfg;
  cfg.criterion = parse_criterion(a.criterion);
  cfg.steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  if (a.top_j > 0) cfg.top_j = a.top_j;
  if (a.recomb_context >= 0) cfg.recomb_context = a.recomb_context;
  cfg.beam_size = a.beam_size;
  cfg.beam_mode = parse_beam_mode(a.beam_mode);
  cfg.cost = CostFunction{parse_cost_kind(a.cost), a.cost_offset};
  cfg.jobs = a.jobs;

  std::optional<NGramLM> plm, wlm;
  if (!a.phoneme_lm.empty()) {
    plm = load_lm(a.phoneme_lm, lex);
    if (plm->unit() != LmUnit::phoneme) throw ValidationError("--phoneme-lm is not a phoneme LM");
  }
  if (!a.word_lm.empty()) {
    wlm = load_lm(a.word_lm, lex);
    if (wlm->unit() != LmUnit::word) throw ValidationError("--word-lm is not a word LM");
  }
  std::map<std::string, NBestList> nbest;
  if (!a.nbest.empty()) {
    std::ifstream in(a.nbest);
    if (!in) throw ValidationError("cannot open " + a.nbest);
    for (auto& l : parse_nbest(in, lex, a.nbest)) nbest[l.id] = std::move(l);
  }
  const TrainResources res{plm ? &*plm : nullptr, wlm ? &*wlm : nullptr, &lex, a.nbest.empty() ? nullptr : &nbest};

  if (!a.dump_dp.empty()) dump_denominators(a.dump_dp, sc, corpus, cfg, res);

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw Error("cannot write " + a.log);
  }
  std::ostream& log = a.log.empty() ? std::cout : log_file;
  log << std::setprecision(17);
  const auto trace = train_sequence(sc, corpus, cfg, res, [&](const StepRecord& r) { log << r.to_json().dump() << "\n"; });
  sc.save(a.out);
  std::cerr << "trained " << trace.size() << " steps (" << a.criterion << "); mean loss "
            << (trace.empty() ? 0.0 : trace.front()) << " -> " << (trace.empty() ? 0.0 : trace.back()) << "\n";
  return 0;
}

struct NBestArgs {
  std::string lexicon, corpus, checkpoint, word_lm, phoneme_lm, out;
  int n = 4, beam_size = kDefaultBeamSize;
  double alpha = 1.0, beta = 1.0;
};

int cmd_nbest(const NBestArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  const auto corpus = load_corpus(a.corpus, lex);
  std::optional<ContextKScorer> sc;
  if (!a.checkpoint.empty()) sc = ContextKScorer::load(a.checkpoint);
  const auto wlm = load_lm(a.word_lm, lex);
  if (wlm.unit() != LmUnit::word) throw ValidationError("--word-lm is not a word LM");
  std::optional<NGramLM> plm;
  if (!a.phoneme_lm.empty()) plm = load_lm(a.phoneme_lm, lex);

  std::vector<NBestList> lists;
  for (const auto& u : corpus) {
    const auto scores = scores_for(u, sc ? &*sc : nullptr);
    if (plm) lists.push_back(generate_nbest(scores, MultiLevelLM<NGramLM>(*plm, wlm, lex, true), lex, u, a.alpha, a.beta, a.n, a.beam_size));
    else lists.push_back(generate_nbest(scores, WordEowLM(wlm, lex, true), lex, u, a.alpha, a.beta, a.n, a.beam_size));
  }
  std::ofstream out(a.out);
  if (!out) throw Error("cannot write " + a.out);
  out << std::setprecision(17);
  write_nbest(lists, lex, out);
  std::cerr << "wrote " << lists.size() << " N-best lists to " << a.out << "\n";
  return 0;
}

struct DecodeArgs {
  std::string lexicon, corpus, checkpoint, lm, out, name = "test", csv;
  bool ilm = false;
  double lambda1 = 0.0, lambda2 = 0.0;
  int beam_size = kDefaultBeamSize;
};

int cmd_decode(const DecodeArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  const auto corpus = load_corpus(a.corpus, lex);
  std::optional<ContextKScorer> sc;
  if (!a.checkpoint.empty()) sc = ContextKScorer::load(a.checkpoint);
  std::optional<TableLM> ilm;
  if (a.ilm) {
    if (!sc) throw ValidationError("--ilm needs --checkpoint (zero-encoder estimate)");
    ilm = ilm_zero_encoder(*sc);
  }
  std::optional<NGramLM> elm;
  if (!a.lm.empty()) elm = load_lm(a.lm, lex);
  if (a.lambda1 != 0.0 && !elm) throw ValidationError("--lambda1 needs --lm");
  if (a.lambda2 != 0.0 && !ilm) throw ValidationError("--lambda2 needs --ilm");
  const DecodeConfig cfg{a.lambda1, a.lambda2, a.beam_size};
  cfg.validate();

  std::map<std::string, WordSequence> hyps;
  const TableLM* ilm_ptr = ilm ? &*ilm : nullptr;
  for (const auto& u : corpus) {
    const auto scores = scores_for(u, sc ? &*sc : nullptr);
    if (elm && elm->unit() == LmUnit::word)
      hyps[u.id] = recognize_words(scores, WordEowLM(*elm, lex, true), ilm_ptr, cfg, lex, &*elm);
    else if (elm)
      hyps[u.id] = recognize_words(scores, ContextSequenceLM<NGramLM>(*elm), ilm_ptr, cfg, lex);
    else
      hyps[u.id] = recognize_words(scores, NullLM{}, ilm_ptr, cfg, lex);
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    write_hyps(hyps, lex, out);
  }
  print_wer(a.name, score_wer(reference_map(corpus), hyps), a.csv);
  return 0;
}

struct ScoreArgs {
  std::string lexicon, ref, hyp, name = "test", csv;
};

int cmd_score(const ScoreArgs& a) {
  const auto lex = load_lexicon(a.lexicon);
  auto read = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return parse_hyps(in, lex, path);
  };
  print_wer(a.name, score_wer(read(a.ref), read(a.hyp)), a.csv);
  return 0;
}

// ---------------------------------------------------------------------------
// oracle-check: brute-force comparisons on random small fixtures.

struct OracleRow {
  std::string name;
  int fixtures = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_error <= tolerance; }
};

std::vector<double> rand_log_dist(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.5);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = g(rng);
  log_normalize(v);
  return v;
}

FrameScores rand_scores(std::mt19937_64& rng, int T, int V, int k) {
  FrameScores s(T, V, k);
  for (int t = 0; t < T; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c) {
      const auto d = rand_log_dist(rng, V + 1);
      std::copy(d.begin(), d.end(), s.at(t, c).begin());
    }
  return s;
}

TableLM rand_lm(std::mt19937_64& rng, int k, int V) {
  TableLM lm(k, V);
  for (std::size_t key = 0; key < lm.codec().num_keys(); ++key) lm.row(key) = rand_log_dist(rng, V);
  return lm;
}

int cmd_oracle_check(std::uint64_t seed, int fixtures) {
  std::mt19937_64 rng(seed);
  OracleRow limited{"lf_limited = brute_force", 0, 0, 1e-6}, approx{"lf_approx = lf_limited ((k+1)-gram)", 0, 0, 1e-9},
      beam{"beam (full) = brute_force", 0, 0, 1e-6}, topj{"top-J at |V|^k = exact", 0, 0, 1e-12},
      nbest{"N-best MMI (all seqs) = LF-MMI", 0, 0, 1e-6}, ce{"LF-MMI (beta=0) = CE", 0, 0, 1e-6};
  for (int i = 0; i < fixtures; ++i) {
    const int T = 1 + i % 4, V = 1 + (i / 4) % 3, k = 1 + i % 2;
    const double alpha = std::vector<double>{0.5, 1.0, 1.2}[i % 3], beta = std::vector<double>{0.0, 0.2, 0.3}[(i / 3) % 3];
    const auto s = rand_scores(rng, T, V, k);
    const auto lm = rand_lm(rng, k, V);
    const SeqScoreConfig cfg{alpha, beta, std::nullopt, k};
    const ContextSequenceLM<TableLM> seq(lm);
    const double exact = brute_force_denominator(s, seq, cfg);
    const double lf = lf_denominator_limited(s, lm, cfg);
    limited.max_error = std::max(limited.max_error, std::abs(lf - exact));
    ++limited.fixtures;

    std::vector<std::vector<int>> corpus;
    std::uniform_int_distribution<int> tok(0, V - 1);
    for (int n = 0; n < 10; ++n) corpus.push_back({tok(rng), tok(rng), tok(rng)});
    const auto ng = train_ngram(corpus, LmUnit::phoneme, k + 1, V, 0.5);
    approx.max_error = std::max(approx.max_error, std::abs(lf_denominator_approx(s, NGramStatefulLM(ng), cfg) -
                                                           lf_denominator_limited(s, ng, cfg)));
    ++approx.fixtures;

    int B = 1;
    for (int t = 0; t < T; ++t) B *= V + 1;
    beam.max_error = std::max(beam.max_error, std::abs(beam_denominator(s, seq, cfg, B, BeamMode::prune_recomb) - exact));
    ++beam.fixtures;

    int J = 1;
    for (int j = 0; j < k; ++j) J *= V;
    topj.max_error = std::max(topj.max_error, std::abs(lf_denominator_limited(s, lm, SeqScoreConfig{alpha, beta, J, k}) - lf));
    ++topj.fixtures;

    NBestList all{"all", {{{}, {}, 0.0}}, true};
    for (std::size_t b = 0; b < all.hyps.size(); ++b)
      if (static_cast<int>(all.hyps[b].phonemes.size()) < T)
        for (int a = 0; a < V; ++a) {
          auto p = all.hyps[b].phonemes;
          p.push_back(a);
          all.hyps.push_back({{}, p, 0.0});
        }
    std::uniform_int_distribution<int> len(0, T);
    LabelSequence ref(static_cast<std::size_t>(len(rng)));
    for (auto& x : ref) x = tok(rng);
    const double lf_mmi = mmi_lf_loss(s, ref, LimitedDenominator<TableLM>{lm}, cfg).value;
    nbest.max_error = std::max(nbest.max_error, std::abs(mmi_nbest_loss(s, all, ref, seq, alpha, beta).value - lf_mmi));
    ++nbest.fixtures;

    const SeqScoreConfig plain{1.0, 0.0, std::nullopt, k};
    ce.max_error = std::max(ce.max_error, std::abs(mmi_lf_loss(s, ref, LimitedDenominator<TableLM>{lm}, plain).value -
                                                   ce_loss(s, ref).value));
    ++ce.fixtures;
  }
  bool ok = true;
  std::cout << std::left << std::setw(40) << "check" << std::right << std::setw(9) << "fixtures" << std::setw(14)
            << "max |err|" << std::setw(10) << "tol" << "  result\n";
  for (const auto& r : {limited, approx, beam, topj, nbest, ce}) {
    std::cout << std::left << std::setw(40) << r.name << std::right << std::setw(9) << r.fixtures << std::setw(14)
              << std::setprecision(3) << std::scientific << r.max_error << std::setw(10) << r.tolerance << std::defaultfloat
              << "  " << (r.pass() ? "PASS" : "FAIL") << "\n";
    ok = ok && r.pass();
  }
  return ok ? 0 : 1;
}

struct SynthArgs {
  std::string out_dir;
  SyntheticConfig cfg;
};

int cmd_synth(const SynthArgs& a) {
  const auto data = generate_synthetic(a.cfg);
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  std::ofstream lex((dir / "lexicon.txt").string()), corpus((dir / "corpus.jsonl").string()), text((dir / "text.txt").string());
  if (!lex || !corpus || !text) throw Error("cannot write into " + a.out_dir);
  write_lexicon(data.lexicon, lex);
  write_corpus(data.utterances, data.lexicon, corpus);
  for (const auto& s : data.text) text << join_words(data.lexicon, WordSequence(s.begin(), s.end())) << "\n";
  std::cerr << "wrote " << data.utterances.size() << " utterances, " << data.lexicon.num_words() << " words to " << a.out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence discriminative training for phoneme transducers"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON config file (flags override its values)")->check(CLI::ExistingFile);

  TrainLmArgs tl;
  auto* c_tl = app.add_subcommand("train-lm", "Train an n-gram LM and write it as ARPA text");
  c_tl->add_option("--lexicon", tl.lexicon)->required();
  c_tl->add_option("--corpus", tl.corpus, "corpus JSON lines");
  c_tl->add_option("--text", tl.text, "plain text, one sentence per line");
  c_tl->add_option("--unit", tl.unit, "phoneme | word")->capture_default_str();
  c_tl->add_option("--order", tl.order)->capture_default_str();
  c_tl->add_option("--discount", tl.discount)->capture_default_str();
  c_tl->add_option("--out", tl.out)->required();

  PplArgs pp;
  auto* c_pp = app.add_subcommand("ppl", "Perplexity of an LM on held-out data");
  c_pp->add_option("--lexicon", pp.lexicon)->required();
  c_pp->add_option("--corpus", pp.corpus, "held-out corpus JSON lines");
  c_pp->add_option("--text", pp.text, "held-out plain text");
  c_pp->add_option("--lm", pp.lm, "LM file");
  c_pp->add_option("--order", pp.order, "train an LM of this order instead of loading one");
  c_pp->add_option("--unit", pp.unit)->capture_default_str();
  c_pp->add_option("--discount", pp.discount)->capture_default_str();
  c_pp->add_option("--train-corpus", pp.train_corpus);
  c_pp->add_option("--train-text", pp.train_text);

  TrainSeqArgs ts;
  auto* c_ts = app.add_subcommand("train-seq", "Train the scorer with CE or a sequence criterion");
  c_ts->add_option("--lexicon", ts.lexicon)->required();
  c_ts->add_option("--corpus", ts.corpus)->required();
  c_ts->add_option("--init", ts.init, "starting checkpoint (random init when absent)");
  c_ts->add_option("--context", ts.context, "label context for a random init")->capture_default_str();
  c_ts->add_option("--init-scale", ts.init_scale)->capture_default_str();
  c_ts->add_option("--seed", ts.seed)->capture_default_str();
  c_ts->add_option("--criterion", ts.criterion,
                   "ce | mmi_lf_limited | mmi_lf_approx | mmi_lf_word | mmi_lf_beam | mmi_nbest | mbr_nbest")
      ->capture_default_str();
  c_ts->add_option("--steps", ts.steps)->capture_default_str();
  c_ts->add_option("--lr", ts.lr)->capture_default_str();
  c_ts->add_option("--alpha", ts.alpha)->capture_default_str();
  c_ts->add_option("--beta", ts.beta)->capture_default_str();
  c_ts->add_option("--top-j", ts.top_j, "0 = no pruning")->capture_default_str();
  c_ts->add_option("--recomb-context", ts.recomb_context, "-1 = max(scorer, LM) context")->capture_default_str();
  c_ts->add_option("--beam-size", ts.beam_size)->capture_default_str();
  c_ts->add_option("--beam-mode", ts.beam_mode)->capture_default_str();
  c_ts->add_option("--cost", ts.cost, "word_edit | phoneme_edit")->capture_default_str();
  c_ts->add_option("--cost-offset", ts.cost_offset)->capture_default_str();
  c_ts->add_option("--phoneme-lm", ts.phoneme_lm);
  c_ts->add_option("--word-lm", ts.word_lm);
  c_ts->add_option("--nbest", ts.nbest);
  c_ts->add_option("--jobs", ts.jobs)->capture_default_str();
  c_ts->add_option("--out", ts.out)->required();
  c_ts->add_option("--log", ts.log, "training log (JSON lines; stdout when absent)");
  c_ts->add_option("--dump-dp", ts.dump_dp, "write the initial denominator DP tables as JSON lines");

  NBestArgs nb;
  auto* c_nb = app.add_subcommand("nbest", "Generate static N-best lists");
  c_nb->add_option("--lexicon", nb.lexicon)->required();
  c_nb->add_option("--corpus", nb.corpus)->required();
  c_nb->add_option("--checkpoint", nb.checkpoint, "scorer; corpus score tensors are used when absent");
  c_nb->add_option("--word-lm", nb.word_lm)->required();
  c_nb->add_option("--phoneme-lm", nb.phoneme_lm, "bigram for within-word guidance (multi-level LM)");
  c_nb->add_option("--n", nb.n)->capture_default_str();
  c_nb->add_option("--beam-size", nb.beam_size)->capture_default_str();
  c_nb->add_option("--alpha", nb.alpha)->capture_default_str();
  c_nb->add_option("--beta", nb.beta)->capture_default_str();
  c_nb->add_option("--out", nb.out)->required();

  DecodeArgs de;
  auto* c_de = app.add_subcommand("decode", "Recognize with optional external and internal LM fusion");
  c_de->add_option("--lexicon", de.lexicon)->required();
  c_de->add_option("--corpus", de.corpus)->required();
  c_de->add_option("--checkpoint", de.checkpoint);
  c_de->add_option("--lm", de.lm, "external LM (word or phoneme unit)");
  c_de->add_flag("--ilm", de.ilm, "subtract the zero-encoder internal LM");
  c_de->add_option("--lambda1", de.lambda1)->capture_default_str();
  c_de->add_option("--lambda2", de.lambda2)->capture_default_str();
  c_de->add_option("--beam-size", de.beam_size)->capture_default_str();
  c_de->add_option("--out", de.out, "hypothesis file (JSON lines)");
  c_de->add_option("--name", de.name, "dataset name for the WER table")->capture_default_str();
  c_de->add_option("--csv", de.csv, "also write the WER table as CSV");

  ScoreArgs sa;
  auto* c_sc = app.add_subcommand("score", "WER with substitution / deletion / insertion breakdown");
  c_sc->add_option("--lexicon", sa.lexicon)->required();
  c_sc->add_option("--ref", sa.ref, "corpus or hypothesis file with reference words")->required();
  c_sc->add_option("--hyp", sa.hyp)->required();
  c_sc->add_option("--name", sa.name)->capture_default_str();
  c_sc->add_option("--csv", sa.csv);

  std::uint64_t oc_seed = 7;
  int oc_fixtures = 48;
  auto* c_oc = app.add_subcommand("oracle-check", "Compare the DPs with brute-force enumeration");
  c_oc->add_option("--seed", oc_seed)->capture_default_str();
  c_oc->add_option("--fixtures", oc_fixtures)->capture_default_str();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Write a synthetic toy task (lexicon, corpus, LM text)");
  c_sy->add_option("--out-dir", sy.out_dir)->required();
  c_sy->add_option("--utterances", sy.cfg.num_utterances)->capture_default_str();
  c_sy->add_option("--words", sy.cfg.num_words)->capture_default_str();
  c_sy->add_option("--phonemes", sy.cfg.num_phonemes)->capture_default_str();
  c_sy->add_option("--noise", sy.cfg.noise)->capture_default_str();
  c_sy->add_option("--text-sentences", sy.cfg.num_text_sentences)->capture_default_str();
  c_sy->add_option("--seed", sy.cfg.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config.empty()) apply_config(config, *cmd);
    if (cmd == c_tl) return cmd_train_lm(tl);
    if (cmd == c_pp) return cmd_ppl(pp);
    if (cmd == c_ts) return cmd_train_seq(ts);
    if (cmd == c_nb) return cmd_nbest(nb);
    if (cmd == c_de) return cmd_decode(de);
    if (cmd == c_sc) return cmd_score(sa);
    if (cmd == c_oc) return cmd_oracle_check(oc_seed, oc_fixtures);
    if (cmd == c_sy) return cmd_synth(sy);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
