#pragma once

// Small synthetic corpora and comparison helpers shared by the tests.

#include <string>
#include <vector>

#include "poembert/poembert.hpp"

namespace fixture {

struct Planted {
  std::vector<std::string> lines;
  std::vector<poembert::LabeledLine> labeled;
};

inline Planted planted(std::size_t n, std::uint64_t seed, poembert::Task task) {
  using namespace poembert;
  const CorpusStore corpus = generate_synthetic(n, seed, task);
  Planted p;
  for (const auto& r : corpus.records()) {
    const auto v = preprocess_verse(r);
    p.lines.push_back(v.line);
    p.labeled.push_back(LabeledLine{v.line, *task_label(r, task)});
  }
  return p;
}

/// Every named array equal element for element.
inline bool same_params(const poembert::ModelParams& a, const poembert::ModelParams& b) {
  const auto na = a.named(), nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (na[i].first != nb[i].first || na[i].second.shape() != nb[i].second.shape() ||
        na[i].second.values() != nb[i].second.values()) {
      return false;
    }
  }
  return true;
}

}  // namespace fixture
