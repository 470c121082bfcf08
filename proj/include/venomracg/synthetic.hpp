#pragma once

#include <cstdint>
#include <string>

#include "venomracg/corpus.hpp"

namespace venomracg::harness {

/// Sizes and mix of a generated desk-scale world: Python-like functions paired
/// with one-line natural-language descriptions, a pool of marked vulnerable
/// functions and a proxy corpus drawn from the same distribution as the KB.
struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t train_pairs = 2000;
  std::size_t kb_size = 2000;
  std::size_t vuln_pool = 300;
  std::size_t proxy_size = 1000;
  std::string target_word = "file";
  double target_rate = 0.08;
  /// Share of target-bearing functions where the target concept is the
  /// primary (most used) noun rather than the secondary one.
  double target_primary_rate = 0.8;
  /// Share of vulnerable functions padded with statements from unrelated
  /// areas, modelling long legacy code in public vulnerability corpora.
  double sprawl_rate = 0.5;
  /// Probability that a clean function borrows one vulnerable-flavoured
  /// identifier, which keeps that vocabulary in-distribution.
  double borrow_rate = 0.01;

  void validate() const;
};

struct SyntheticWorld {
  corpus::Corpus train;     // pairs with queries
  corpus::Corpus kb;        // evaluation KB, its pairs are the evaluation queries
  corpus::Corpus vuln_pool; // marked vulnerable functions, no queries
  corpus::Corpus proxy;     // public corpus for black-box clustering
};

SyntheticWorld generate_world(const SyntheticOptions& options);

} // namespace venomracg::harness
