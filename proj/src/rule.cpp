#include "drf/rule.hpp"

#include <algorithm>
#include <iterator>
#include <map>
#include <set>

#include "drf/error.hpp"

namespace drf {

bool Literal::satisfied_by(Level v) const {
  return std::binary_search(allowed.begin(), allowed.end(), v);
}

bool Conjunction::satisfied_by(std::span<const Level> row) const {
  for (const auto& lit : literals) {
    if (!lit.satisfied_by(row[lit.feature])) return false;
  }
  return true;
}

const Literal* Conjunction::find(std::size_t feature) const {
  auto it = std::lower_bound(literals.begin(), literals.end(), feature,
                             [](const Literal& l, std::size_t f) { return l.feature < f; });
  return (it != literals.end() && it->feature == feature) ? &*it : nullptr;
}

bool Conjunction::constrain(const Literal& lit) {
  auto it = std::lower_bound(literals.begin(), literals.end(), lit.feature,
                             [](const Literal& l, std::size_t f) { return l.feature < f; });
  if (it != literals.end() && it->feature == lit.feature) {
    LevelSet merged;
    std::set_intersection(it->allowed.begin(), it->allowed.end(), lit.allowed.begin(),
                          lit.allowed.end(), std::back_inserter(merged));
    it->allowed = std::move(merged);
    return !it->allowed.empty();
  }
  it = literals.insert(it, lit);
  return !it->allowed.empty();
}

bool Conjunction::implies(const Conjunction& other) const {
  auto mine = literals.begin();
  for (const auto& theirs : other.literals) {
    while (mine != literals.end() && mine->feature < theirs.feature) ++mine;
    if (mine == literals.end() || mine->feature != theirs.feature) return false;
    if (!std::includes(theirs.allowed.begin(), theirs.allowed.end(), mine->allowed.begin(),
                       mine->allowed.end())) {
      return false;
    }
  }
  return true;
}

std::optional<Conjunction> conjoin(const Conjunction& a, const Conjunction& b) {
  Conjunction out = a;
  for (const auto& lit : b.literals) {
    if (!out.constrain(lit)) return std::nullopt;
  }
  return out;
}

namespace {

// Sorted, merged, domain-restricted form of one term; nullopt if contradictory.
std::optional<Conjunction> normalize(const Conjunction& term, Domain domain) {
  Conjunction out;
  for (const auto& lit : term.literals) {
    if (lit.feature >= domain.size()) throw SchemaError("literal references unknown feature");
    Literal clean{lit.feature, {}};
    for (Level v : lit.allowed) {
      if (v < domain[lit.feature]) clean.allowed.push_back(v);
    }
    std::sort(clean.allowed.begin(), clean.allowed.end());
    clean.allowed.erase(std::unique(clean.allowed.begin(), clean.allowed.end()), clean.allowed.end());
    if (!out.constrain(clean)) return std::nullopt;
  }
  std::erase_if(out.literals, [&](const Literal& l) { return l.allowed.size() == domain[l.feature]; });
  return out;
}

void sort_unique(std::vector<Conjunction>& terms) {
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
}

// Drops every term that implies a different term. Terms are unique and
// normalized, so mutual implication cannot occur between distinct terms.
bool absorb(std::vector<Conjunction>& terms) {
  std::vector<char> dead(terms.size(), 0);
  bool changed = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (std::size_t j = 0; j < terms.size(); ++j) {
      if (i == j || dead[j]) continue;
      if (terms[i].implies(terms[j])) {
        dead[i] = 1;
        changed = true;
        break;
      }
    }
  }
  if (changed) {
    std::vector<Conjunction> kept;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (!dead[i]) kept.push_back(std::move(terms[i]));
    }
    terms = std::move(kept);
  }
  return changed;
}

// For each feature f, terms that agree everywhere except on f collapse into
// one term whose f-literal is the union. Returns true if anything merged.
bool merge_pass(std::vector<Conjunction>& terms, Domain domain) {
  std::set<std::size_t> features;
  for (const auto& t : terms) {
    for (const auto& l : t.literals) features.insert(l.feature);
  }
  bool changed = false;
  for (std::size_t f : features) {
    std::map<Conjunction, std::pair<LevelSet, std::size_t>> groups;
    std::vector<Conjunction> rest;
    for (auto& t : terms) {
      const Literal* lit = t.find(f);
      if (!lit) {
        rest.push_back(std::move(t));
        continue;
      }
      Conjunction key;
      for (const auto& l : t.literals) {
        if (l.feature != f) key.literals.push_back(l);
      }
      auto& [allowed, count] = groups[std::move(key)];
      LevelSet joined;
      std::set_union(allowed.begin(), allowed.end(), lit->allowed.begin(), lit->allowed.end(),
                     std::back_inserter(joined));
      allowed = std::move(joined);
      ++count;
    }
    for (auto& [key, group] : groups) {
      if (group.second > 1) changed = true;
      Conjunction term = key;
      if (group.first.size() != domain[f]) term.constrain(Literal{f, std::move(group.first)});
      rest.push_back(std::move(term));
    }
    terms = std::move(rest);
  }
  return changed;
}

Dnf cap(Dnf dnf, std::size_t max_terms) {
  if (dnf.terms.size() > max_terms) {
    dnf.terms.resize(max_terms);
    dnf.truncated = true;
  }
  return dnf;
}

}  // namespace

Dnf simplify(const Dnf& dnf, Domain domain) {
  Dnf out;
  out.truncated = dnf.truncated;
  for (const auto& term : dnf.terms) {
    if (auto t = normalize(term, domain)) out.terms.push_back(std::move(*t));
  }
  sort_unique(out.terms);
  bool changed = true;
  while (changed) {
    changed = absorb(out.terms);
    if (merge_pass(out.terms, domain)) {
      changed = true;
      sort_unique(out.terms);
    }
  }
  return out;
}

Dnf disjoin(const Dnf& a, const Dnf& b, Domain domain, std::size_t max_terms) {
  Dnf joined;
  joined.truncated = a.truncated || b.truncated;
  joined.terms = a.terms;
  joined.terms.insert(joined.terms.end(), b.terms.begin(), b.terms.end());
  return cap(simplify(joined, domain), max_terms);
}

Dnf distribute(const Dnf& a, const Dnf& b, Domain domain, std::size_t max_terms) {
  // Products beyond this many raw terms are cut before simplification so
  // the quadratic absorption pass stays bounded.
  const std::size_t raw_limit = 4 * max_terms;
  Dnf product;
  product.truncated = a.truncated || b.truncated;
  for (const auto& ta : a.terms) {
    for (const auto& tb : b.terms) {
      if (product.terms.size() >= raw_limit) {
        product.truncated = true;
        break;
      }
      if (auto t = conjoin(ta, tb)) product.terms.push_back(std::move(*t));
    }
  }
  return cap(simplify(product, domain), max_terms);
}

bool evaluate(const Dnf& dnf, std::span<const Level> row) {
  return std::any_of(dnf.terms.begin(), dnf.terms.end(),
                     [&](const Conjunction& t) { return t.satisfied_by(row); });
}

std::vector<std::uint8_t> covered_rows(const Dnf& dnf, const Table& table) {
  for (const auto& t : dnf.terms) {
    for (const auto& lit : t.literals) {
      if (lit.feature >= table.n_features()) throw SchemaError("rule references a feature the table lacks");
    }
  }
  std::vector<std::uint8_t> mask(table.n_rows(), 0);
  for (const auto& term : dnf.terms) {
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
      if (mask[i]) continue;
      bool ok = true;
      for (const auto& lit : term.literals) {
        if (!lit.satisfied_by(table.at(i, lit.feature))) {
          ok = false;
          break;
        }
      }
      if (ok) mask[i] = 1;
    }
  }
  return mask;
}

Coverage coverage(const Dnf& dnf, const Table& table) {
  const auto mask = covered_rows(dnf, table);
  Coverage c;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++c.n_covered;
    c.n_positive += table.target()[i];
  }
  return c;
}

std::string format_literal(const Literal& lit, const Schema& schema) {
  const auto& f = schema.feature(lit.feature);
  if (f.kind == FeatureKind::binary && lit.allowed.size() == 1 && lit.allowed[0] < 2) {
    return lit.allowed[0] == 1 ? f.name : "¬" + f.name;
  }
  std::string out = f.name + " ∈ {";
  for (std::size_t i = 0; i < lit.allowed.size(); ++i) {
    if (i) out += ", ";
    out += f.levels.at(lit.allowed[i]);
  }
  return out + "}";
}

std::string format_conjunction(const Conjunction& conj, const Schema& schema) {
  if (conj.literals.empty()) return "TRUE";
  std::string out;
  for (std::size_t i = 0; i < conj.literals.size(); ++i) {
    if (i) out += " & ";
    out += format_literal(conj.literals[i], schema);
  }
  return out;
}

std::string format_dnf(const Dnf& dnf, const Schema& schema) {
  if (dnf.terms.empty()) return "FALSE";
  std::string out;
  for (std::size_t i = 0; i < dnf.terms.size(); ++i) {
    if (i) out += " ∨ ";
    const auto& t = dnf.terms[i];
    const bool wrap = dnf.terms.size() > 1 && t.literals.size() > 1;
    if (wrap) out += "(";
    out += format_conjunction(t, schema);
    if (wrap) out += ")";
  }
  return out;
}

}  // namespace drf
