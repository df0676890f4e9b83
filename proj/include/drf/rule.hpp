#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drf/dataset.hpp"

namespace drf {

// Per-feature level counts; the universe each literal is interpreted in.
using Domain = std::span<const std::size_t>;

// feature ∈ allowed
struct Literal {
  std::size_t feature = 0;
  LevelSet allowed;

  bool satisfied_by(Level v) const;

  friend auto operator<=>(const Literal&, const Literal&) = default;
  friend bool operator==(const Literal&, const Literal&) = default;
};

// AND of literals, sorted by feature with at most one literal per feature.
// The empty conjunction is the tautology.
struct Conjunction {
  std::vector<Literal> literals;

  bool satisfied_by(std::span<const Level> row) const;

  // Intersects `lit` into the conjunction. Returns false when the result is
  // contradictory (some allowed set became empty).
  bool constrain(const Literal& lit);

  // True when every row satisfying *this also satisfies `other`.
  bool implies(const Conjunction& other) const;

  const Literal* find(std::size_t feature) const;

  friend auto operator<=>(const Conjunction&, const Conjunction&) = default;
  friend bool operator==(const Conjunction&, const Conjunction&) = default;
};

std::optional<Conjunction> conjoin(const Conjunction& a, const Conjunction& b);

// OR of conjunctions. Zero terms is the contradiction. `truncated` marks a
// best-effort result that covers a subset of the exact rule.
struct Dnf {
  std::vector<Conjunction> terms;
  bool truncated = false;

  static Dnf tautology() { return Dnf{{Conjunction{}}, false}; }
  static Dnf contradiction() { return Dnf{}; }

  friend bool operator==(const Dnf&, const Dnf&) = default;
};

// Normalizes literals, drops contradictory terms and full-domain literals,
// deduplicates, then applies absorption and single-feature merging
// ((C & f∈A) ∨ (C & f∈B) → C & f∈A∪B) until nothing changes. The result is
// logically equivalent to the input over `domain`.
Dnf simplify(const Dnf& dnf, Domain domain);

// OR of two rules, simplified and capped at max_terms.
Dnf disjoin(const Dnf& a, const Dnf& b, Domain domain, std::size_t max_terms);
// AND of two rules, distributed into DNF, simplified and capped at max_terms.
Dnf distribute(const Dnf& a, const Dnf& b, Domain domain, std::size_t max_terms);

bool evaluate(const Dnf& dnf, std::span<const Level> row);

struct Coverage {
  std::size_t n_covered = 0;
  std::size_t n_positive = 0;

  friend bool operator==(const Coverage&, const Coverage&) = default;
};

// 0/1 mask of rows satisfying the rule.
std::vector<std::uint8_t> covered_rows(const Dnf& dnf, const Table& table);
Coverage coverage(const Dnf& dnf, const Table& table);

// Binary features print bare (MET means MET=1, ¬MET means MET=0); other
// literals print as `name ∈ {a, b}`. Multi-literal terms are parenthesized
// and joined with " ∨ ".
std::string format_literal(const Literal& lit, const Schema& schema);
std::string format_conjunction(const Conjunction& conj, const Schema& schema);
std::string format_dnf(const Dnf& dnf, const Schema& schema);

}  // namespace drf
