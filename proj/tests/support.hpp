#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "venomracg/corpus.hpp"

#ifndef VENOMRACG_FIXTURE_DIR
#define VENOMRACG_FIXTURE_DIR "tests/fixtures"
#endif

namespace testsupport {

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(VENOMRACG_FIXTURE_DIR) + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> v = {"alpha", "beta",  "gamma", "delta", "eps",
                                             "zeta",  "eta",   "theta", "iota",  "kappa",
                                             "lam",   "mu",    "nu",    "xi",    "omicron"};
  return v;
}

/// A random function with `vars` distinct local names (at least one
/// parameter) that each appear one to three times.
inline venomracg::corpus::CodeSnippet random_function(std::mt19937_64& rng, std::size_t vars,
                                                      const std::string& id) {
  std::vector<std::string> pool = names();
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(vars);
  std::uniform_int_distribution<int> uses(1, 3);
  std::string src = "def fn_" + id + "(" + pool[0] + "):\n";
  for (std::size_t i = 1; i < vars; ++i) {
    src += "    " + pool[i] + " = " + pool[i - 1] + " + " + std::to_string(i) + "\n";
  }
  for (std::size_t i = 0; i < vars; ++i) {
    for (int u = uses(rng) - 1; u > 0; --u) {
      src += "    call(" + pool[i] + ")\n";
    }
  }
  src += "    return " + pool[vars - 1] + "\n";
  return venomracg::corpus::make_snippet(id, src);
}

} // namespace testsupport
