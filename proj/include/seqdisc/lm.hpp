#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "context.hpp"
#include "core.hpp"
#include "error.hpp"
#include "logmath.hpp"

namespace seqdisc {

enum class LmUnit { phoneme, word };

inline std::string to_string(LmUnit u) { return u == LmUnit::phoneme ? "phoneme" : "word"; }

inline LmUnit parse_lm_unit(const std::string& s) {
  if (s == "phoneme") return LmUnit::phoneme;
  if (s == "word") return LmUnit::word;
  throw ValidationError("unknown LM unit '" + s + "' (expected phoneme or word)");
}

// A label-context LM: distribution over the next token given a history that
// may start with kBos. Only the last context_size() tokens matter.
template <class L>
concept ContextLM = requires(const L& lm, std::span<const int> history) {
  { lm.context_size() } -> std::convertible_to<int>;
  { lm.log_probs(history) } -> std::convertible_to<std::span<const double>>;
};

// Recurrent-style LM with an opaque per-hypothesis state.
template <class L>
concept StatefulLM = requires(const L& lm, const typename L::State& s, Label a) {
  { lm.initial_state() } -> std::same_as<typename L::State>;
  { lm.advance(s, a) } -> std::same_as<typename L::State>;
  { lm.log_probs(s) } -> std::convertible_to<std::span<const double>>;
};

// Scores a label sequence left to right. score() is the log increment of
// appending a label; finish() is added once at the end of the sequence.
// recombination_signature() is the part of the state, beyond the last k
// labels, that beam recombination must keep apart.
template <class L>
concept SequenceLM = requires(const L& lm, const typename L::State& s, Label a) {
  { lm.start() } -> std::same_as<typename L::State>;
  { lm.score(s, a) } -> std::convertible_to<double>;
  { lm.advance(s, a) } -> std::same_as<typename L::State>;
  { lm.finish(s) } -> std::convertible_to<double>;
  { lm.recombination_signature(s) } -> std::convertible_to<std::vector<int>>;
};

// Count-based n-gram LM with interpolated absolute discounting.
//
// Output ids are 0..num_symbols()-1; word-unit models add the unknown token
// (id num_symbols()) and the sentence end (id num_symbols()+1). The table
// maps every context seen in training (of every order, kBos allowed at the
// front) to a full log-distribution. A query backs off to its longest
// suffix in the table, which is exactly the interpolated estimate since an
// unseen context contributes no discounted mass of its own.
class NGramLM {
 public:
  NGramLM(LmUnit unit, int order, int num_symbols, double discount)
      : unit_(unit), order_(order), num_symbols_(num_symbols), discount_(discount) {
    if (order < 0) throw ValidationError("n-gram order must be >= 0");
    if (num_symbols < 1) throw ValidationError("LM vocabulary must be non-empty");
    if (discount < 0.0 || discount > 1.0) throw ValidationError("discount must lie in [0, 1]");
  }

  LmUnit unit() const { return unit_; }
  int order() const { return order_; }
  int context_size() const { return std::max(order_ - 1, 0); }
  int num_symbols() const { return num_symbols_; }
  double discount() const { return discount_; }
  int output_size() const { return unit_ == LmUnit::word ? num_symbols_ + 2 : num_symbols_; }
  int unk() const { return unit_ == LmUnit::word ? num_symbols_ : -1; }
  int eos() const { return unit_ == LmUnit::word ? num_symbols_ + 1 : -1; }

  // Canonical context: last context_size() tokens, cut after the last kBos.
  std::vector<int> normalize_context(std::span<const int> history) const {
    const std::size_t n = static_cast<std::size_t>(context_size());
    std::size_t begin = history.size() > n ? history.size() - n : 0;
    for (std::size_t i = history.size(); i-- > begin;)
      if (history[i] == kBos) {
        begin = i;
        break;
      }
    return {history.begin() + static_cast<std::ptrdiff_t>(begin), history.end()};
  }

  std::span<const double> log_probs(std::span<const int> history) const {
    const auto ctx = normalize_context(history);
    const std::vector<double>* best = &table_.at({}).dist;
    for (std::size_t j = 1; j <= ctx.size(); ++j) {
      auto it = table_.find(std::vector<int>(ctx.end() - static_cast<std::ptrdiff_t>(j), ctx.end()));
      if (it == table_.end()) break;
      best = &it->second.dist;
    }
    return *best;
  }

  double log_prob(std::span<const int> history, int token) const {
    if (token < 0 || token >= output_size()) throw ValidationError("token outside LM vocabulary");
    return log_probs(history)[static_cast<std::size_t>(token)];
  }

  // Sum of log-probs of a token sequence from sentence start (plus the end
  // token for word models when include_end is set).
  double sequence_log_prob(std::span<const int> tokens, bool include_end) const {
    std::vector<int> hist{kBos};
    double total = 0.0;
    for (int w : tokens) {
      total += log_prob(hist, w);
      hist.push_back(w);
    }
    if (include_end && unit_ == LmUnit::word) total += log_prob(hist, eos());
    return total;
  }

  struct Context {
    std::vector<double> dist;
    std::vector<int> seen;      // tokens with an explicit n-gram entry
    double log_backoff = 0.0;   // weight on the lower-order distribution
  };

  const std::map<std::vector<int>, Context>& table() const { return table_; }
  std::map<std::vector<int>, Context>& mutable_table() { return table_; }

 private:
  LmUnit unit_;
  int order_;
  int num_symbols_;
  double discount_;
  std::map<std::vector<int>, Context> table_;
};

// Trains an n-gram LM. Token ids must lie in [0, num_symbols); word-unit
// corpora may also contain the unknown id (num_symbols).
inline NGramLM train_ngram(const std::vector<std::vector<int>>& corpus, LmUnit unit, int order, int num_symbols,
                           double discount) {
  NGramLM lm(unit, order, num_symbols, discount);
  const int out = lm.output_size();
  auto& table = lm.mutable_table();

  if (order == 0) {
    table[{}].dist.assign(static_cast<std::size_t>(out), -std::log(static_cast<double>(out)));
    return lm;
  }

  // counts[m][context of length m-1][token]
  std::vector<std::map<std::vector<int>, std::map<int, double>>> counts(static_cast<std::size_t>(order) + 1);
  std::size_t total_tokens = 0;
  for (const auto& sentence : corpus) {
    std::vector<int> toks{kBos};
    for (int w : sentence) {
      const bool ok = (w >= 0 && w < num_symbols) || (unit == LmUnit::word && w == lm.unk());
      if (!ok) throw ValidationError("training token " + std::to_string(w) + " outside the LM vocabulary");
      toks.push_back(w);
    }
    if (unit == LmUnit::word) toks.push_back(lm.eos());
    for (std::size_t i = 1; i < toks.size(); ++i) {
      ++total_tokens;
      for (int m = 1; m <= order && static_cast<std::size_t>(m) <= i + 1; ++m) {
        std::vector<int> ctx(toks.begin() + static_cast<std::ptrdiff_t>(i + 1 - static_cast<std::size_t>(m)),
                             toks.begin() + static_cast<std::ptrdiff_t>(i));
        counts[static_cast<std::size_t>(m)][ctx][toks[i]] += 1.0;
      }
    }
  }
  if (total_tokens == 0) throw ValidationError("cannot train an n-gram of order >= 1 on an empty corpus");

  const double D = discount;
  {
    const auto& uni = counts[1][{}];
    double N = 0.0;
    for (const auto& [w, c] : uni) N += c;
    if (D == 0.0 && static_cast<int>(uni.size()) < out) {
      for (int w = 0; w < out; ++w)
        if (!uni.count(w))
          throw ValidationError("symbol " + std::to_string(w) +
                                " never occurs in the training data; a nonzero discount is required");
    }
    auto& ctx = table[{}];
    const double floor_mass = D * static_cast<double>(uni.size()) / N / static_cast<double>(out);
    ctx.dist.resize(static_cast<std::size_t>(out));
    for (int w = 0; w < out; ++w) {
      auto it = uni.find(w);
      const double c = it == uni.end() ? 0.0 : it->second;
      ctx.dist[static_cast<std::size_t>(w)] = std::log(std::max(c - D, 0.0) / N + floor_mass);
    }
    for (const auto& [w, c] : uni) ctx.seen.push_back(w);
  }

  for (int m = 2; m <= order; ++m) {
    for (const auto& [h, followers] : counts[static_cast<std::size_t>(m)]) {
      double ch = 0.0;
      for (const auto& [w, c] : followers) ch += c;
      const double gamma = D * static_cast<double>(followers.size()) / ch;
      const std::vector<int> lower_ctx(h.begin() + 1, h.end());
      const auto lower = lm.log_probs(lower_ctx);
      NGramLM::Context ctx;
      ctx.dist.resize(static_cast<std::size_t>(out));
      for (int w = 0; w < out; ++w) {
        auto it = followers.find(w);
        const double c = it == followers.end() ? 0.0 : it->second;
        const double p = std::max(c - D, 0.0) / ch + gamma * std::exp(lower[static_cast<std::size_t>(w)]);
        ctx.dist[static_cast<std::size_t>(w)] = p > 0.0 ? std::log(p) : kLogZero;
      }
      for (const auto& [w, c] : followers) ctx.seen.push_back(w);
      ctx.log_backoff = gamma > 0.0 ? std::log(gamma) : kLogZero;
      table.emplace(h, std::move(ctx));
    }
  }
  return lm;
}

// exp(-(1/N) sum log P); word models count one end token per sentence.
inline double perplexity(const NGramLM& lm, const std::vector<std::vector<int>>& heldout) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& sentence : heldout) {
    total += lm.sequence_log_prob(sentence, true);
    n += sentence.size() + (lm.unit() == LmUnit::word ? 1 : 0);
  }
  if (n == 0) throw ValidationError("perplexity needs a non-empty held-out set");
  return std::exp(-total / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// ARPA-style text serialization. Probabilities are base-10 in the file.

namespace detail {
inline constexpr double kLog10Floor = -99.0;

inline std::string fmt_log10(double ln) {
  if (ln == kLogZero) return "-99";
  std::ostringstream os;
  os << std::setprecision(17) << ln / std::log(10.0);
  return os.str();
}

inline double parse_log10(const std::string& s) {
  const double v = std::stod(s);
  if (v <= kLog10Floor) return kLogZero;
  return v * std::log(10.0);
}
}  // namespace detail

// Names for output ids 0..num_symbols-1 (phoneme symbols or words).
inline std::vector<std::string> lm_symbols(LmUnit unit, const Lexicon& lex) {
  std::vector<std::string> out;
  if (unit == LmUnit::phoneme) return lex.alphabet().symbols();
  for (int w = 0; w < lex.num_words(); ++w) out.push_back(lex.word(w));
  return out;
}

inline void write_arpa(const NGramLM& lm, std::ostream& os, const std::vector<std::string>& symbols) {
  if (static_cast<int>(symbols.size()) != lm.num_symbols()) throw ValidationError("symbol table size mismatch");
  auto name = [&](int tok) -> std::string {
    if (tok == kBos) return "<s>";
    if (tok == lm.unk()) return "<unk>";
    if (tok == lm.eos()) return "</s>";
    return symbols[static_cast<std::size_t>(tok)];
  };
  const auto& table = lm.table();
  auto backoff_of = [&](const std::vector<int>& g) -> std::string {
    auto it = table.find(g);
    return it == table.end() ? "0" : detail::fmt_log10(it->second.log_backoff);
  };

  // entries[m] = (ngram, logprob) for m = 1..max(order,1)
  const int levels = std::max(lm.order(), 1);
  std::vector<std::vector<std::pair<std::vector<int>, double>>> entries(static_cast<std::size_t>(levels) + 1);
  const auto& uni = table.at({});
  entries[1].push_back({{kBos}, kLogZero});
  for (int w = 0; w < lm.output_size(); ++w) entries[1].push_back({{w}, uni.dist[static_cast<std::size_t>(w)]});
  for (const auto& [h, ctx] : table) {
    if (h.empty()) continue;
    for (int w : ctx.seen) {
      std::vector<int> g = h;
      g.push_back(w);
      entries[h.size() + 1].push_back({g, ctx.dist[static_cast<std::size_t>(w)]});
    }
  }

  os << "\\data\\\n";
  os << "unit=" << to_string(lm.unit()) << "\n";
  os << "order=" << lm.order() << "\n";
  os << "discount=" << std::setprecision(17) << lm.discount() << "\n";
  for (int m = 1; m <= levels; ++m) os << "ngram " << m << "=" << entries[static_cast<std::size_t>(m)].size() << "\n";
  for (int m = 1; m <= levels; ++m) {
    os << "\n\\" << m << "-grams:\n";
    for (const auto& [g, lp] : entries[static_cast<std::size_t>(m)]) {
      std::string joined;
      for (std::size_t i = 0; i < g.size(); ++i) joined += (i ? " " : "") + name(g[i]);
      os << detail::fmt_log10(lp) << '\t' << joined << '\t' << backoff_of(g) << '\n';
    }
  }
  os << "\n\\end\\\n";
}

inline void write_arpa(const NGramLM& lm, const std::string& path, const std::vector<std::string>& symbols) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_arpa(lm, out, symbols);
}

inline NGramLM read_arpa(std::istream& is, const std::vector<std::string>& symbols, const std::string& source = "<arpa>") {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < symbols.size(); ++i) index[symbols[i]] = static_cast<int>(i);
  const int W = static_cast<int>(symbols.size());

  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::string> header;
  bool in_data = false;
  int section = 0;
  struct Entry {
    std::vector<int> gram;
    double lp;
    double bow;
  };
  std::vector<Entry> entries;
  std::string unit_str;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "\\data\\") {
      in_data = true;
      continue;
    }
    if (line == "\\end\\") break;
    if (line.front() == '\\') {
      const auto dash = line.find("-grams:");
      if (dash == std::string::npos) throw ParseError(source, lineno, "unknown section '" + line + "'");
      section = std::stoi(line.substr(1, dash - 1));
      continue;
    }
    if (section == 0) {
      if (!in_data) throw ParseError(source, lineno, "missing \\data\\ header");
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, lineno, "malformed header line");
      header[line.substr(0, eq)] = line.substr(eq + 1);
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2 || cols.size() > 3) throw ParseError(source, lineno, "expected logprob<TAB>ngram<TAB>backoff");
    Entry e;
    try {
      e.lp = detail::parse_log10(cols[0]);
      e.bow = cols.size() == 3 ? detail::parse_log10(cols[2]) : 0.0;
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad number");
    }
    std::stringstream gs(cols[1]);
    std::string tok;
    while (gs >> tok) {
      if (tok == "<s>") e.gram.push_back(kBos);
      else if (tok == "<unk>") e.gram.push_back(W);
      else if (tok == "</s>") e.gram.push_back(W + 1);
      else {
        auto it = index.find(tok);
        if (it == index.end()) throw ParseError(source, lineno, "unknown symbol '" + tok + "'");
        e.gram.push_back(it->second);
      }
    }
    if (static_cast<int>(e.gram.size()) != section) throw ParseError(source, lineno, "n-gram length does not match section");
    entries.push_back(std::move(e));
  }
  if (!header.count("order")) throw ParseError(source, lineno, "missing order in header");
  const LmUnit unit = parse_lm_unit(header.count("unit") ? header["unit"] : "phoneme");
  const int order = std::stoi(header["order"]);
  const double discount = header.count("discount") ? std::stod(header["discount"]) : 0.0;
  NGramLM lm(unit, order, W, discount);
  const int out = lm.output_size();
  auto& table = lm.mutable_table();

  auto& root = table[{}];
  root.dist.assign(static_cast<std::size_t>(out), kLogZero);
  std::map<std::vector<int>, double> bows;
  std::map<std::vector<int>, std::vector<std::pair<int, double>>> listed;
  for (const auto& e : entries) {
    bows[e.gram] = e.bow;
    if (e.gram.back() == kBos) continue;
    if (e.gram.back() >= out) throw ValidationError("token id outside the LM vocabulary in " + source);
    if (e.gram.size() == 1) {
      root.dist[static_cast<std::size_t>(e.gram[0])] = e.lp;
      root.seen.push_back(e.gram[0]);
    } else {
      listed[std::vector<int>(e.gram.begin(), e.gram.end() - 1)].push_back({e.gram.back(), e.lp});
    }
  }
  // Shorter contexts first so back-off targets already exist.
  std::vector<std::vector<int>> ctxs;
  for (const auto& [h, _] : listed) ctxs.push_back(h);
  std::stable_sort(ctxs.begin(), ctxs.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  for (const auto& h : ctxs) {
    const double bow = bows.count(h) ? bows[h] : 0.0;
    const std::vector<int> lower_ctx(h.begin() + 1, h.end());
    const std::vector<double> lower(lm.log_probs(lower_ctx).begin(), lm.log_probs(lower_ctx).end());
    NGramLM::Context ctx;
    ctx.dist.resize(static_cast<std::size_t>(out));
    for (int w = 0; w < out; ++w) ctx.dist[static_cast<std::size_t>(w)] = bow + lower[static_cast<std::size_t>(w)];
    for (const auto& [w, lp] : listed[h]) {
      ctx.dist[static_cast<std::size_t>(w)] = lp;
      ctx.seen.push_back(w);
    }
    ctx.log_backoff = bow;
    table[h] = std::move(ctx);
  }
  return lm;
}

inline NGramLM read_arpa(const std::string& path, const std::vector<std::string>& symbols) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  return read_arpa(in, symbols, path);
}

// Reads only the unit= line of an LM file header.
inline LmUnit peek_arpa_unit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("unit=", 0) == 0) return parse_lm_unit(line.substr(5));
    if (!line.empty() && line.front() == '\\' && line != "\\data\\") break;
  }
  return LmUnit::phoneme;
}

// ---------------------------------------------------------------------------
// Stateful LMs.

// An n-gram behind the recurrent-state interface.
class NGramStatefulLM {
 public:
  struct State {
    std::vector<int> history;
    std::span<const double> dist;
  };

  explicit NGramStatefulLM(const NGramLM& lm) : lm_(&lm) {}

  State initial_state() const {
    State s{{kBos}, {}};
    s.dist = lm_->log_probs(s.history);
    return s;
  }

  State advance(const State& s, Label a) const {
    State next{s.history, {}};
    next.history.push_back(a);
    next.history = lm_->normalize_context(next.history);
    next.dist = lm_->log_probs(next.history);
    return next;
  }

  std::span<const double> log_probs(const State& s) const { return s.dist; }

  const NGramLM& model() const { return *lm_; }

 private:
  const NGramLM* lm_;
};

// Variable-order suffix model standing in for a full-context (LSTM) LM: an
// interpolated n-gram whose order covers the longest training sentence, so
// every prediction conditions on the longest history suffix seen in training.
class SuffixLM {
 public:
  using State = NGramStatefulLM::State;

  SuffixLM(const std::vector<std::vector<int>>& corpus, int num_symbols, double discount = 0.5)
      : lm_(train_ngram(corpus, LmUnit::phoneme, max_order(corpus), num_symbols, discount)), view_(lm_) {}

  SuffixLM(const SuffixLM& o) : lm_(o.lm_), view_(lm_) {}
  SuffixLM& operator=(const SuffixLM&) = delete;

  State initial_state() const { return view_.initial_state(); }
  State advance(const State& s, Label a) const { return view_.advance(s, a); }
  std::span<const double> log_probs(const State& s) const { return view_.log_probs(s); }
  const NGramLM& model() const { return lm_; }

 private:
  static int max_order(const std::vector<std::vector<int>>& corpus) {
    std::size_t n = 0;
    for (const auto& s : corpus) n = std::max(n, s.size());
    return static_cast<int>(n) + 1;
  }

  NGramLM lm_;
  NGramStatefulLM view_;
};

// ---------------------------------------------------------------------------
// Sequence-LM adapters.

// Phoneme-level LM with a bounded label context.
template <ContextLM L>
class ContextSequenceLM {
 public:
  using State = std::vector<int>;

  explicit ContextSequenceLM(const L& lm) : lm_(&lm) {}

  State start() const { return {kBos}; }
  double score(const State& s, Label a) const { return lm_->log_probs(s)[static_cast<std::size_t>(a)]; }
  State advance(const State& s, Label a) const {
    State next = s;
    next.push_back(a);
    const std::size_t n = static_cast<std::size_t>(lm_->context_size());
    if (next.size() > n) next.erase(next.begin(), next.end() - static_cast<std::ptrdiff_t>(n));
    return next;
  }
  double finish(const State&) const { return 0.0; }
  std::vector<int> recombination_signature(const State&) const { return {}; }

 private:
  const L* lm_;
};

template <StatefulLM L>
class StatefulSequenceLM {
 public:
  using State = typename L::State;

  explicit StatefulSequenceLM(const L& lm) : lm_(&lm) {}

  State start() const { return lm_->initial_state(); }
  double score(const State& s, Label a) const { return lm_->log_probs(s)[static_cast<std::size_t>(a)]; }
  State advance(const State& s, Label a) const { return lm_->advance(s, a); }
  double finish(const State&) const { return 0.0; }
  std::vector<int> recombination_signature(const State&) const { return {}; }

 private:
  const L* lm_;
};

struct WordChoice {
  double log_prob;
  WordId word;
};

// Best word-LM score over the homophones of within_word + eow_label; an
// out-of-lexicon pronunciation scores as the unknown token.
inline WordChoice best_word_at_eow(const NGramLM& word_lm, const Lexicon& lex, std::span<const int> word_history,
                                   std::span<const Label> within_word, Label eow_label) {
  if (word_lm.unit() != LmUnit::word) throw ValidationError("word_score_at_eow needs a word-unit LM");
  LabelSequence pron(within_word.begin(), within_word.end());
  pron.push_back(eow_label);
  const auto words = lex.map_pronunciation(pron);
  const auto dist = word_lm.log_probs(word_history);
  WordChoice best{kLogZero, words.front()};
  for (WordId w : words) {
    const int tok = w == lex.unknown_word() ? word_lm.unk() : w;
    const double lp = dist[static_cast<std::size_t>(tok)];
    if (lp > best.log_prob) best = {lp, w};
  }
  return best;
}

inline double word_score_at_eow(const NGramLM& word_lm, const Lexicon& lex, std::span<const int> word_history,
                                std::span<const Label> within_word, Label eow_label) {
  return best_word_at_eow(word_lm, lex, word_history, within_word, eow_label).log_prob;
}

// Word-level LM applied only on end-of-word labels.
//
// The state keeps the (LM-truncated) word history and the within-word
// suffix. Suffixes longer than the longest pronunciation cannot map to a
// lexicon word, so they stop growing and are scored as unknown.
class WordEowLM {
 public:
  struct State {
    std::vector<int> words{kBos};
    LabelSequence within;
    bool overflow = false;
  };

  WordEowLM(const NGramLM& word_lm, const Lexicon& lex, bool score_sentence_end = false)
      : lm_(&word_lm), lex_(&lex), sentence_end_(score_sentence_end) {
    if (word_lm.unit() != LmUnit::word) throw ValidationError("WordEowLM needs a word-unit LM");
    if (word_lm.num_symbols() != lex.num_words()) throw ValidationError("word LM vocabulary does not match the lexicon");
  }

  State start() const { return {}; }

  double score(const State& s, Label a) const {
    if (!lex_->alphabet().is_eow(a)) return 0.0;
    return choose(s, a).log_prob;
  }

  State advance(const State& s, Label a) const {
    State next = s;
    if (!lex_->alphabet().is_eow(a)) {
      if (next.within.size() < lex_->max_pronunciation_length()) next.within.push_back(a);
      else next.overflow = true;
      return next;
    }
    const WordId w = choose(s, a).word;
    next.words.push_back(w == lex_->unknown_word() ? lm_->unk() : w);
    next.words = lm_->normalize_context(next.words);
    next.within.clear();
    next.overflow = false;
    return next;
  }

  double finish(const State& s) const { return sentence_end_ ? lm_->log_probs(s.words)[static_cast<std::size_t>(lm_->eos())] : 0.0; }

  std::vector<int> recombination_signature(const State& s) const {
    std::vector<int> sig(s.within.begin(), s.within.end());
    if (s.overflow) sig.push_back(-2);
    return sig;
  }

  const NGramLM& word_lm() const { return *lm_; }
  const Lexicon& lexicon() const { return *lex_; }

 private:
  WordChoice choose(const State& s, Label a) const {
    if (s.overflow) return {lm_->log_probs(s.words)[static_cast<std::size_t>(lm_->unk())], lex_->unknown_word()};
    return best_word_at_eow(*lm_, *lex_, s.words, s.within, a);
  }

  const NGramLM* lm_;
  const Lexicon* lex_;
  bool sentence_end_;
};

// Phoneme bigram inside words, word LM at word ends.
//
// Within a word each label earns its phoneme-LM log-prob, which is also
// accumulated; the end-of-word label earns the word-LM score minus that
// accumulated amount, so a completed word nets exactly its word-LM score.
// finish() revokes the accumulation of an unfinished trailing word.
template <ContextLM PhonemeLM = NGramLM>
class MultiLevelLM {
 public:
  struct State {
    WordEowLM::State word;
    int prev_label = kBos;
    double within_score = 0.0;
  };

  MultiLevelLM(const PhonemeLM& phoneme_lm, const NGramLM& word_lm, const Lexicon& lex, bool score_sentence_end = false)
      : phoneme_lm_(&phoneme_lm), words_(word_lm, lex, score_sentence_end) {}

  State start() const { return {}; }

  double score(const State& s, Label a) const {
    if (words_.lexicon().alphabet().is_eow(a)) return words_.score(s.word, a) - s.within_score;
    return phoneme_score(s, a);
  }

  State advance(const State& s, Label a) const {
    State next;
    next.word = words_.advance(s.word, a);
    next.prev_label = a;
    next.within_score = words_.lexicon().alphabet().is_eow(a) ? 0.0 : s.within_score + phoneme_score(s, a);
    return next;
  }

  std::pair<State, double> step(const State& s, Label a) const { return {advance(s, a), score(s, a)}; }

  double finish(const State& s) const { return words_.finish(s.word) - s.within_score; }

  std::vector<int> recombination_signature(const State& s) const { return words_.recombination_signature(s.word); }

  const WordEowLM& word_level() const { return words_; }

 private:
  double phoneme_score(const State& s, Label a) const {
    const int hist[1] = {s.prev_label};
    return phoneme_lm_->log_probs(std::span<const int>(hist, 1))[static_cast<std::size_t>(a)];
  }

  const PhonemeLM* phoneme_lm_;
  WordEowLM words_;
};

// Total score of a complete label sequence under a sequence LM (finish included).
template <SequenceLM L>
double sequence_lm_score(const L& lm, std::span<const Label> labels) {
  auto s = lm.start();
  double total = 0.0;
  for (Label a : labels) {
    total += lm.score(s, a);
    s = lm.advance(s, a);
  }
  return total + lm.finish(s);
}

// Explicit table LM for tests and for induced / unnormalized label priors:
// dist[key] over labels for every ContextCodec key of the given context size.
class TableLM {
 public:
  TableLM(int context_size, int num_labels)
      : codec_(context_size, num_labels),
        table_(codec_.num_keys(), std::vector<double>(static_cast<std::size_t>(num_labels), 0.0)) {}

  int context_size() const { return codec_.context_size(); }
  const ContextCodec& codec() const { return codec_; }

  std::vector<double>& row(std::size_t key) { return table_.at(key); }
  const std::vector<double>& row(std::size_t key) const { return table_.at(key); }

  std::span<const double> log_probs(std::span<const int> history) const {
    std::size_t key = codec_.start();
    for (int a : history) key = a == kBos ? codec_.start() : codec_.push(key, a);
    return table_[key];
  }

 private:
  ContextCodec codec_;
  std::vector<std::vector<double>> table_;
};

}  // namespace seqdisc
