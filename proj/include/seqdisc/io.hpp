#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beam.hpp"
#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"

namespace seqdisc {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace detail

// Lexicon file: `word<TAB>ph ph ... ph#`, '#' marking the end-of-word variant.
// The phoneme inventory is every base phoneme used, sorted, each followed by
// its end-of-word variant.
inline Lexicon parse_lexicon(std::istream& in, const std::string& source = "<lexicon>") {
  struct Line {
    std::size_t no;
    std::string word;
    std::vector<std::string> pron;
  };
  std::vector<Line> lines;
  std::set<std::string> bases;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, no, "expected word<TAB>pronunciation");
    Line l{no, line.substr(0, tab), detail::split_ws(line.substr(tab + 1))};
    if (l.word.empty() || l.word.find(' ') != std::string::npos) throw ParseError(source, no, "invalid word field");
    if (l.pron.empty()) throw ParseError(source, no, "empty pronunciation");
    for (std::size_t i = 0; i < l.pron.size(); ++i) {
      std::string p = l.pron[i];
      const bool eow = p.back() == '#';
      if (eow) p.pop_back();
      if (p.empty() || p.find('#') != std::string::npos) throw ParseError(source, no, "invalid phoneme '" + l.pron[i] + "'");
      if (eow != (i + 1 == l.pron.size()))
        throw ParseError(source, no, "only the last phoneme of a pronunciation carries the '#' end-of-word mark");
      bases.insert(p);
    }
    lines.push_back(std::move(l));
  }
  if (lines.empty()) return Lexicon{};
  std::vector<std::string> symbols;
  for (const auto& b : bases) {
    symbols.push_back(b);
    symbols.push_back(b + "#");
  }
  Lexicon lex{PhonemeAlphabet(std::move(symbols))};
  for (const auto& l : lines) {
    LabelSequence pron;
    for (const auto& p : l.pron) pron.push_back(*lex.alphabet().find(p));
    try {
      lex.add(l.word, pron);
    } catch (const ValidationError& e) {
      throw ParseError(source, l.no, e.what());
    }
  }
  return lex;
}

inline Lexicon load_lexicon(const std::string& path) {
  auto in = detail::open_in(path);
  return parse_lexicon(in, path);
}

inline void write_lexicon(const Lexicon& lex, std::ostream& os) {
  // Word-id order, so reading the file back assigns the same ids.
  for (WordId w = 0; w < lex.num_words(); ++w)
    for (const auto& [pron, words] : lex.entries()) {
      if (std::find(words.begin(), words.end(), w) == words.end()) continue;
      os << lex.word(w) << '\t';
      for (std::size_t i = 0; i < pron.size(); ++i) os << (i ? " " : "") << lex.alphabet().symbol(pron[i]);
      os << '\n';
    }
}

inline LabelSequence parse_phonemes(const Lexicon& lex, const std::string& s) {
  LabelSequence out;
  for (const auto& tok : detail::split_ws(s)) {
    auto id = lex.alphabet().find(tok);
    if (!id) throw ValidationError("unknown phoneme '" + tok + "'");
    out.push_back(*id);
  }
  return out;
}

inline WordSequence parse_words(const Lexicon& lex, const std::string& s) {
  WordSequence out;
  for (const auto& tok : detail::split_ws(s)) {
    if (tok == "<unk>") {
      out.push_back(lex.unknown_word());
      continue;
    }
    auto id = lex.find_word(tok);
    if (!id) throw ValidationError("unknown word '" + tok + "'");
    out.push_back(*id);
  }
  return out;
}

inline std::string join_phonemes(const Lexicon& lex, const LabelSequence& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? " " : "") + lex.alphabet().symbol(labels[i]);
  return out;
}

inline std::string join_words(const Lexicon& lex, const WordSequence& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + lex.word(words[i]);
  return out;
}

// Score tensor file: `T <int> LABELS <int> [CONTEXT <int>]`, then one line of
// LABELS natural-log probabilities per (frame, context key), frame-major.
// Without CONTEXT the context size is 0 and there is one line per frame.
inline FrameScores parse_score_tensor(std::istream& in, const std::string& source = "<scores>") {
  std::string line;
  std::size_t no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++no;
  const auto head = detail::split_ws(line);
  if ((head.size() != 4 && head.size() != 6) || head[0] != "T" || head[2] != "LABELS" ||
      (head.size() == 6 && head[4] != "CONTEXT"))
    throw ParseError(source, no, "expected header 'T <int> LABELS <int> [CONTEXT <int>]'");
  int T = 0, L = 0, k = 0;
  try {
    T = std::stoi(head[1]);
    L = std::stoi(head[3]);
    if (head.size() == 6) k = std::stoi(head[5]);
  } catch (const std::exception&) {
    throw ParseError(source, no, "bad header number");
  }
  if (T < 0 || L < 2 || k < 0) throw ParseError(source, no, "header values out of range");
  FrameScores scores(T, L - 1, k);
  for (int t = 0; t < T; ++t)
    for (std::size_t c = 0; c < scores.num_contexts(); ++c) {
      if (!std::getline(in, line)) throw ParseError(source, no + 1, "unexpected end of file");
      ++no;
      const auto toks = detail::split_ws(line);
      if (static_cast<int>(toks.size()) != L) throw ParseError(source, no, "expected " + std::to_string(L) + " values");
      auto row = scores.at(t, c);
      for (int y = 0; y < L; ++y) {
        try {
          row[static_cast<std::size_t>(y)] = toks[static_cast<std::size_t>(y)] == "-inf" ? kLogZero : std::stod(toks[static_cast<std::size_t>(y)]);
        } catch (const std::exception&) {
          throw ParseError(source, no, "bad number '" + toks[static_cast<std::size_t>(y)] + "'");
        }
      }
    }
  scores.validate_normalized(1e-6);
  return scores;
}

inline FrameScores load_score_tensor(const std::string& path) {
  auto in = detail::open_in(path);
  return parse_score_tensor(in, path);
}

inline void write_score_tensor(const FrameScores& s, std::ostream& os) {
  os << "T " << s.num_frames() << " LABELS " << s.width();
  if (s.context_size() > 0) os << " CONTEXT " << s.context_size();
  os << '\n' << std::setprecision(17);
  for (int t = 0; t < s.num_frames(); ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c) {
      const auto row = s.at(t, c);
      for (std::size_t y = 0; y < row.size(); ++y) os << (y ? " " : "") << row[y];
      os << '\n';
    }
}

// Corpus: one JSON object per line with id, num_frames, phonemes, words and
// optionally scores (score tensor path, relative to the corpus file) and
// features (num_frames rows of equal length).
inline std::vector<Utterance> parse_corpus(std::istream& in, const Lexicon& lex, const std::string& source = "<corpus>",
                                           const std::filesystem::path& base_dir = {}) {
  std::vector<Utterance> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.num_frames = j.at("num_frames").get<int>();
      if (u.num_frames < 0) throw ValidationError("num_frames must be >= 0");
      u.reference_phonemes = parse_phonemes(lex, j.value("phonemes", std::string{}));
      u.reference_words = parse_words(lex, j.value("words", std::string{}));
      if (!ids.insert(u.id).second) throw ValidationError("duplicate utterance id '" + u.id + "'");
      if (j.contains("words") && j.contains("phonemes")) {
        LabelSequence tail;
        const auto prons = lex.split_words(u.reference_phonemes, &tail);
        if (!tail.empty()) throw ValidationError("reference phonemes end inside a word");
        if (prons.size() != u.reference_words.size()) throw ValidationError("reference words do not match the phonemes");
        for (std::size_t i = 0; i < prons.size(); ++i) {
          const auto cands = lex.map_pronunciation(prons[i]);
          if (std::find(cands.begin(), cands.end(), u.reference_words[i]) == cands.end())
            throw ValidationError("word '" + lex.word(u.reference_words[i]) + "' does not match its pronunciation");
        }
      }
      if (j.contains("scores")) {
        auto p = std::filesystem::path(j.at("scores").get<std::string>());
        if (p.is_relative()) p = base_dir / p;
        u.scores = load_score_tensor(p.string());
        if (u.scores->num_frames() != u.num_frames) throw ValidationError("score tensor frame count differs from num_frames");
      }
      if (j.contains("features")) {
        const auto& f = j.at("features");
        if (static_cast<int>(f.size()) != u.num_frames) throw ValidationError("features must have num_frames rows");
        u.feature_dim = u.num_frames > 0 ? static_cast<int>(f.at(0).size()) : 0;
        for (const auto& row : f) {
          if (static_cast<int>(row.size()) != u.feature_dim) throw ValidationError("ragged feature matrix");
          for (const auto& v : row) u.features.push_back(v.get<double>());
        }
      }
      out.push_back(std::move(u));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(source, no, e.what());
    }
  }
  return out;
}

inline std::vector<Utterance> load_corpus(const std::string& path, const Lexicon& lex) {
  auto in = detail::open_in(path);
  return parse_corpus(in, lex, path, std::filesystem::path(path).parent_path());
}

inline nlohmann::json utterance_to_json(const Utterance& u, const Lexicon& lex) {
  nlohmann::json j{{"id", u.id},
                   {"num_frames", u.num_frames},
                   {"phonemes", join_phonemes(lex, u.reference_phonemes)},
                   {"words", join_words(lex, u.reference_words)}};
  if (u.feature_dim > 0) {
    nlohmann::json rows = nlohmann::json::array();
    for (int t = 0; t < u.num_frames; ++t) {
      const auto r = u.feature_row(t);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    j["features"] = std::move(rows);
  }
  return j;
}

inline void write_corpus(const std::vector<Utterance>& corpus, const Lexicon& lex, std::ostream& os) {
  for (const auto& u : corpus) os << utterance_to_json(u, lex).dump() << '\n';
}

// N-best file: JSON lines {id, hyps: [{words, phonemes, score}]}.
inline void write_nbest(const std::vector<NBestList>& lists, const Lexicon& lex, std::ostream& os) {
  for (const auto& l : lists) {
    nlohmann::json hyps = nlohmann::json::array();
    for (const auto& h : l.hyps)
      hyps.push_back({{"words", join_words(lex, h.words)}, {"phonemes", join_phonemes(lex, h.phonemes)}, {"score", h.score}});
    os << nlohmann::json{{"id", l.id}, {"hyps", hyps}}.dump() << '\n';
  }
}

inline std::vector<NBestList> parse_nbest(std::istream& in, const Lexicon& lex, const std::string& source = "<nbest>") {
  std::vector<NBestList> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NBestList l;
      l.id = j.at("id").get<std::string>();
      for (const auto& h : j.at("hyps"))
        l.hyps.push_back({parse_words(lex, h.at("words").get<std::string>()),
                          parse_phonemes(lex, h.at("phonemes").get<std::string>()), h.at("score").get<double>()});
      out.push_back(std::move(l));
    } catch (const std::exception& e) {
      throw ParseError(source, no, e.what());
    }
  }
  return out;
}

// Hypothesis file: JSON lines {id, words}.
inline void write_hyps(const std::map<std::string, WordSequence>& hyps, const Lexicon& lex, std::ostream& os) {
  for (const auto& [id, w] : hyps) os << nlohmann::json{{"id", id}, {"words", join_words(lex, w)}}.dump() << '\n';
}

inline std::map<std::string, WordSequence> parse_hyps(std::istream& in, const Lexicon& lex, const std::string& source = "<hyps>") {
  std::map<std::string, WordSequence> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("id").get<std::string>()] = parse_words(lex, j.at("words").get<std::string>());
    } catch (const std::exception& e) {
      throw ParseError(source, no, e.what());
    }
  }
  return out;
}

}  // namespace seqdisc
