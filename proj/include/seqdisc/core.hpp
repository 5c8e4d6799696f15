#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "frame_scores.hpp"

namespace seqdisc {

using Label = int;
using WordId = int;
using LabelSequence = std::vector<Label>;      // never contains blank
using AlignmentSequence = std::vector<Label>;  // one symbol per frame, blank allowed
using WordSequence = std::vector<WordId>;

// Phoneme inventory V, with blank appended as id |V| and an end-of-word subset.
class PhonemeAlphabet {
 public:
  PhonemeAlphabet() = default;

  // Symbols ending in '#' are the end-of-word variants.
  explicit PhonemeAlphabet(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw ValidationError("phoneme alphabet must be non-empty");
    eow_.resize(symbols_.size());
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const auto& s = symbols_[i];
      if (s.empty() || s == "<blank>") throw ValidationError("invalid phoneme symbol '" + s + "'");
      if (!index_.emplace(s, static_cast<Label>(i)).second)
        throw ValidationError("duplicate phoneme symbol '" + s + "'");
      eow_[i] = s.back() == '#';
    }
  }

  // Anonymous inventory: labels named p0.. with the given end-of-word flags.
  static PhonemeAlphabet with_flags(const std::vector<bool>& eow) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < eow.size(); ++i) names.push_back("p" + std::to_string(i) + (eow[i] ? "#" : ""));
    return PhonemeAlphabet(std::move(names));
  }

  int size() const { return static_cast<int>(symbols_.size()); }
  Label blank() const { return size(); }
  bool is_eow(Label a) const { return a >= 0 && a < size() && eow_[static_cast<std::size_t>(a)]; }
  bool is_label(Label a) const { return a >= 0 && a < size(); }
  const std::string& symbol(Label a) const { return symbols_.at(static_cast<std::size_t>(a)); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  std::optional<Label> find(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Label> eow_labels() const {
    std::vector<Label> out;
    for (int a = 0; a < size(); ++a)
      if (is_eow(a)) out.push_back(a);
    return out;
  }

 private:
  std::vector<std::string> symbols_;
  std::vector<bool> eow_;
  std::unordered_map<std::string, Label> index_;
};

// Removes blanks. Repeated labels stay: every non-blank frame emits one label.
inline LabelSequence collapse(std::span<const Label> alignment, Label blank) {
  LabelSequence out;
  for (Label y : alignment)
    if (y != blank) out.push_back(y);
  return out;
}

// Pronunciation -> word mapping with homophone sets and an unknown word.
//
// Word ids are dense 0..num_words()-1; unknown_word() == num_words() and is
// never stored in an entry.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(PhonemeAlphabet alphabet) : alphabet_(std::move(alphabet)) {}

  const PhonemeAlphabet& alphabet() const { return alphabet_; }
  int num_words() const { return static_cast<int>(words_.size()); }
  WordId unknown_word() const { return num_words(); }
  bool empty() const { return entries_.empty(); }
  std::size_t max_pronunciation_length() const { return max_len_; }
  const std::map<LabelSequence, std::vector<WordId>>& entries() const { return entries_; }

  const std::string& word(WordId w) const {
    static const std::string unk = "<unk>";
    if (w == unknown_word()) return unk;
    return words_.at(static_cast<std::size_t>(w));
  }

  std::optional<WordId> find_word(const std::string& w) const {
    auto it = word_index_.find(w);
    if (it == word_index_.end()) return std::nullopt;
    return it->second;
  }

  WordId intern_word(const std::string& w) {
    if (w == "<unk>") throw ValidationError("'<unk>' is reserved for the unknown word");
    auto [it, inserted] = word_index_.emplace(w, num_words());
    if (inserted) words_.push_back(w);
    return it->second;
  }

  // Duplicate pronunciations merge into one homophone set.
  void add(const std::string& word, const LabelSequence& pron) {
    check_pronunciation(pron);
    const WordId w = intern_word(word);
    auto& set = entries_[pron];
    if (std::find(set.begin(), set.end(), w) == set.end()) {
      set.push_back(w);
      std::sort(set.begin(), set.end());
    }
    max_len_ = std::max(max_len_, pron.size());
  }

  // Words for a pronunciation, or {unknown_word} when absent.
  std::vector<WordId> map_pronunciation(std::span<const Label> pron) const {
    check_pronunciation(pron);
    auto it = entries_.find(LabelSequence(pron.begin(), pron.end()));
    if (it == entries_.end()) return {unknown_word()};
    return it->second;
  }

  // Pronunciation must end in exactly one EOW phoneme, its last symbol.
  void check_pronunciation(std::span<const Label> pron) const {
    if (pron.empty()) throw ValidationError("empty pronunciation");
    for (std::size_t i = 0; i < pron.size(); ++i) {
      if (!alphabet_.is_label(pron[i])) throw ValidationError("pronunciation contains a non-label symbol");
      const bool last = i + 1 == pron.size();
      if (alphabet_.is_eow(pron[i]) != last)
        throw ValidationError("pronunciation must end in exactly one end-of-word phoneme");
    }
  }

  // Splits a label sequence at end-of-word phonemes; a trailing incomplete
  // suffix (no closing EOW) is returned separately.
  std::vector<LabelSequence> split_words(std::span<const Label> labels, LabelSequence* tail = nullptr) const {
    std::vector<LabelSequence> out;
    LabelSequence cur;
    for (Label a : labels) {
      cur.push_back(a);
      if (alphabet_.is_eow(a)) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (tail) *tail = std::move(cur);
    return out;
  }

  // W(a): first (lowest id) homophone per word; an incomplete trailing
  // suffix is closed as the unknown word.
  WordSequence to_words(std::span<const Label> labels) const {
    LabelSequence tail;
    WordSequence out;
    for (const auto& pron : split_words(labels, &tail)) out.push_back(map_pronunciation(pron).front());
    if (!tail.empty()) out.push_back(unknown_word());
    return out;
  }

 private:
  PhonemeAlphabet alphabet_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> word_index_;
  std::map<LabelSequence, std::vector<WordId>> entries_;
  std::size_t max_len_ = 0;
};

// One training / test utterance.
struct Utterance {
  std::string id;
  int num_frames = 0;
  LabelSequence reference_phonemes;
  WordSequence reference_words;
  std::optional<FrameScores> scores;
  // Row-major num_frames x feature_dim frame features standing in for the encoder output.
  std::vector<double> features;
  int feature_dim = 0;

  std::span<const double> feature_row(int t) const {
    return {features.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(feature_dim),
            static_cast<std::size_t>(feature_dim)};
  }
};

}  // namespace seqdisc
