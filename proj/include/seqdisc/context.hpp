#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"

namespace seqdisc {

// Token used in LM histories to mark the sentence start.
inline constexpr int kBos = -1;

// Packs the last k emitted labels into a single integer key.
//
// Each position is a digit in base |V|+1: label ids 0..|V|-1, and the digit
// |V| stands for begin-of-sequence padding. Padding only ever appears as a
// prefix, so the all-padding key is the start state and a key with j padding
// digits means "k-j labels emitted so far". The most recent label is the
// least significant digit, which makes suffix(key, j) a plain modulus.
class ContextCodec {
 public:
  ContextCodec(int context_size, int num_labels)
      : k_(context_size), num_labels_(num_labels) {
    if (context_size < 0) throw ValidationError("context size must be >= 0");
    if (num_labels < 1) throw ValidationError("label inventory must be non-empty");
    num_keys_ = 1;
    for (int i = 0; i < k_; ++i) num_keys_ *= base();
  }

  int context_size() const { return k_; }
  int num_labels() const { return num_labels_; }
  int base() const { return num_labels_ + 1; }
  int pad_digit() const { return num_labels_; }
  std::size_t num_keys() const { return num_keys_; }

  std::size_t start() const { return num_keys_ - 1; }

  std::size_t push(std::size_t key, int label) const {
    if (k_ == 0) return 0;
    return (key * static_cast<std::size_t>(base()) + static_cast<std::size_t>(label)) % num_keys_;
  }

  // Key of the last j positions (j <= k).
  std::size_t suffix(std::size_t key, int j) const {
    std::size_t m = 1;
    for (int i = 0; i < j; ++i) m *= base();
    return key % m;
  }

  // Digits oldest first.
  std::vector<int> digits(std::size_t key) const {
    std::vector<int> out(static_cast<std::size_t>(k_));
    for (int i = k_ - 1; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = static_cast<int>(key % base());
      key /= base();
    }
    return out;
  }

  // Padding may only form a prefix.
  bool valid(std::size_t key) const {
    bool seen_label = false;
    for (int d : digits(key)) {
      if (d == pad_digit()) {
        if (seen_label) return false;
      } else {
        seen_label = true;
      }
    }
    return true;
  }

  bool padded(std::size_t key) const { return k_ > 0 && digits(key).front() == pad_digit(); }

  // The labels in the key; prefixed with kBos when the key is padded (the
  // whole history is known) or when k = 0 is asked for with no labels.
  std::vector<int> history(std::size_t key) const {
    std::vector<int> out;
    if (k_ == 0) return out;
    const auto ds = digits(key);
    if (ds.front() == pad_digit()) out.push_back(kBos);
    for (int d : ds)
      if (d != pad_digit()) out.push_back(d);
    return out;
  }

  // Key for the last k labels of a label history (no kBos expected).
  std::size_t encode(std::span<const int> labels) const {
    std::size_t key = start();
    for (int a : labels) key = push(key, a);
    return key;
  }

 private:
  int k_;
  int num_labels_;
  std::size_t num_keys_;
};

}  // namespace seqdisc
