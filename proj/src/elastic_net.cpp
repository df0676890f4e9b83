#include "drf/elastic_net.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <map>
#include <bit>

#include "drf/metrics.hpp"
#include "drf/random.hpp"

namespace drf {

// ---------------------------------------------------------------------------
// DesignMatrix

DesignMatrix DesignMatrix::from_dense(const std::vector<std::vector<double>>& columns,
                                      std::vector<std::string> names) {
  DesignMatrix m(columns.empty() ? 0 : columns.front().size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    Column c;
    for (std::size_t i = 0; i < columns[j].size(); ++i) {
      if (columns[j][i] != 0.0) {
        c.rows.push_back(static_cast<std::uint32_t>(i));
        c.values.push_back(columns[j][i]);
      }
    }
    m.add_column(j < names.size() ? names[j] : "x" + std::to_string(j + 1), std::move(c));
  }
  return m;
}

void DesignMatrix::add_column(std::string name, Column column) {
  if (!column.values.empty() && column.values.size() != column.rows.size()) {
    throw FitError("column values and rows differ in length");
  }
  for (std::size_t k = 0; k < column.rows.size(); ++k) {
    if (column.rows[k] >= n_rows_ || (k > 0 && column.rows[k] <= column.rows[k - 1])) {
      throw FitError("column rows must be ascending and in range");
    }
  }
  columns_.push_back(std::move(column));
  names_.push_back(std::move(name));
}

std::vector<double> DesignMatrix::dense_column(std::size_t j) const {
  const auto& c = column(j);
  std::vector<double> out(n_rows_, 0.0);
  for (std::size_t k = 0; k < c.rows.size(); ++k) out[c.rows[k]] = c.values.empty() ? 1.0 : c.values[k];
  return out;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows) const {
  // Rows may come in any order; map old -> list of new positions.
  std::vector<std::vector<std::uint32_t>> positions(n_rows_);
  for (std::size_t k = 0; k < rows.size(); ++k) positions.at(rows[k]).push_back(static_cast<std::uint32_t>(k));
  DesignMatrix out(rows.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto& c = columns_[j];
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      for (auto p : positions[c.rows[k]]) entries.emplace_back(p, c.values.empty() ? 1.0 : c.values[k]);
    }
    std::sort(entries.begin(), entries.end());
    Column nc;
    for (const auto& [r, v] : entries) {
      nc.rows.push_back(r);
      if (!c.values.empty()) nc.values.push_back(v);
    }
    out.columns_.push_back(std::move(nc));
    out.names_.push_back(names_[j]);
  }
  return out;
}

DesignMatrix DesignMatrix::select_columns(std::span<const std::size_t> cols) const {
  DesignMatrix out(n_rows_);
  for (auto j : cols) out.add_column(names_.at(j), columns_.at(j));
  return out;
}

DesignMatrix DesignMatrix::scale_column(std::size_t j, double factor) const {
  DesignMatrix out = *this;
  auto& c = out.columns_.at(j);
  if (c.values.empty()) c.values.assign(c.rows.size(), 1.0);
  for (auto& v : c.values) v *= factor;
  return out;
}

IndicatorMatrix one_hot(const Table& table, const Schema& reference) {
  if (reference.size() != table.n_features()) throw SchemaError("one-hot reference schema mismatch");
  IndicatorMatrix out{DesignMatrix(table.n_rows()), {}, {}};
  for (std::size_t f = 0; f < table.n_features(); ++f) {
    const auto& spec = reference.feature(f);
    std::vector<DesignMatrix::Column> cols(spec.n_levels());
    const auto column = table.column(f);
    for (std::size_t i = 0; i < column.size(); ++i) {
      if (column[i] < cols.size()) cols[column[i]].rows.push_back(static_cast<std::uint32_t>(i));
    }
    for (Level v = 0; v < cols.size(); ++v) {
      out.x.add_column(spec.name + "=" + spec.levels[v], std::move(cols[v]));
      out.feature.push_back(f);
      out.level.push_back(v);
    }
  }
  return out;
}

IndicatorMatrix one_hot(const Table& table) { return one_hot(table, table.schema()); }

// ---------------------------------------------------------------------------
// Solver

namespace {

struct Scaling {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<char> usable;
};

Scaling standardize(const DesignMatrix& x) {
  const double n = static_cast<double>(x.n_rows());
  Scaling s;
  s.mean.resize(x.n_cols());
  s.sd.resize(x.n_cols());
  s.usable.resize(x.n_cols());
  for (std::size_t j = 0; j < x.n_cols(); ++j) {
    const auto& c = x.column(j);
    double sum = 0.0;
    for (std::size_t k = 0; k < c.rows.size(); ++k) sum += c.values.empty() ? 1.0 : c.values[k];
    const double m = sum / n;
    double ss = static_cast<double>(x.n_rows() - c.rows.size()) * m * m;
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      const double d = (c.values.empty() ? 1.0 : c.values[k]) - m;
      ss += d * d;
    }
    s.mean[j] = m;
    s.sd[j] = std::sqrt(ss / n);
    s.usable[j] = s.sd[j] > 1e-10 * std::max(1.0, std::abs(m));
  }
  return s;
}

void check_labels(const DesignMatrix& x, std::span<const std::uint8_t> y) {
  if (y.size() != x.n_rows()) throw FitError("label count does not match design rows");
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
  if (pos == 0 || pos == y.size()) throw FitError("labels contain a single class");
  if (pos < 2 || y.size() - pos < 2) throw FitError("each class needs at least two rows");
}

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

// Usable columns grouped into classes whose standardized versions agree up
// to sign: exact duplicates, and complementary indicators such as the two
// regions of a one-split tree. The penalized optimum splits a class's total
// coefficient evenly over its members, so the solver fits one coefficient per
// class with the ridge weight divided by the class size. Coordinate descent
// over the duplicates themselves would crawl.
struct ColumnClasses {
  std::vector<std::size_t> rep;
  std::vector<std::vector<std::pair<std::size_t, double>>> members;  // (column, sign)
};

std::uint64_t hash_rows(std::span<const std::uint32_t> rows) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto r : rows) h = splitmix64(h ^ r);
  return h;
}

bool complementary(const DesignMatrix::Column& a, const DesignMatrix::Column& b, std::size_t n) {
  if (a.rows.size() + b.rows.size() != n) return false;
  std::size_t i = 0, k = 0;
  while (i < a.rows.size() && k < b.rows.size()) {
    if (a.rows[i] == b.rows[k]) return false;
    a.rows[i] < b.rows[k] ? ++i : ++k;
  }
  return true;
}

ColumnClasses column_classes(const DesignMatrix& x, const Scaling& scaling) {
  ColumnClasses out;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
  std::vector<std::uint32_t> comp;
  for (std::size_t j = 0; j < x.n_cols(); ++j) {
    if (!scaling.usable[j]) continue;
    const auto& c = x.column(j);
    std::uint64_t h = 0;
    if (c.values.empty()) {
      // Hash the orientation that leaves out row 0 so complements collide.
      if (!c.rows.empty() && c.rows.front() == 0) {
        comp.clear();
        std::size_t k = 0;
        for (std::uint32_t r = 0; r < x.n_rows(); ++r) {
          if (k < c.rows.size() && c.rows[k] == r) {
            ++k;
          } else {
            comp.push_back(r);
          }
        }
        h = hash_rows(comp);
      } else {
        h = hash_rows(c.rows);
      }
    } else {
      h = hash_rows(c.rows);
      for (double v : c.values) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
    }
    auto& bucket = by_hash[h];
    bool placed = false;
    for (auto cls : bucket) {
      const auto& rc = x.column(out.rep[cls]);
      double sign = 0.0;
      if (c.rows == rc.rows && c.values == rc.values) {
        sign = 1.0;
      } else if (c.values.empty() && rc.values.empty() && complementary(c, rc, x.n_rows())) {
        sign = -1.0;
      } else {
        continue;
      }
      out.members[cls].emplace_back(j, sign);
      placed = true;
      break;
    }
    if (!placed) {
      bucket.push_back(out.rep.size());
      out.rep.push_back(j);
      out.members.push_back({{j, 1.0}});
    }
  }
  return out;
}

// Adjacent indicator columns with disjoint rows covering every row, as
// one_hot emits per feature. Their sum is the constant 1, so moving each
// member's standardized coefficient by t·sd_j leaves the loss unchanged once
// the intercept absorbs the shift. In class coordinates the move is
// t·direction; `shift` is the resulting uniform change of the predictor per
// unit t.
struct FlatDirection {
  std::vector<std::size_t> classes;
  std::vector<double> direction;
  double shift = 0.0;
};

std::vector<FlatDirection> flat_directions(const DesignMatrix& x, const Scaling& scaling,
                                           const ColumnClasses& classes) {
  std::vector<std::size_t> class_of(x.n_cols(), SIZE_MAX);
  std::vector<double> sign_of(x.n_cols(), 0.0);
  for (std::size_t c = 0; c < classes.rep.size(); ++c) {
    for (const auto& [j, sign] : classes.members[c]) {
      class_of[j] = c;
      sign_of[j] = sign;
    }
  }
  std::vector<FlatDirection> out;
  std::vector<char> seen(x.n_rows());
  std::size_t j = 0;
  while (j < x.n_cols()) {
    std::size_t covered = 0;
    std::size_t k = j;
    while (k < x.n_cols() && x.column(k).values.empty() && covered < x.n_rows()) {
      covered += x.column(k).rows.size();
      ++k;
    }
    bool exhaustive = k > j && covered == x.n_rows();
    if (exhaustive) {
      std::fill(seen.begin(), seen.end(), 0);
      for (std::size_t c = j; c < k && exhaustive; ++c) {
        for (auto r : x.column(c).rows) {
          if (seen[r]) {
            exhaustive = false;
            break;
          }
          seen[r] = 1;
        }
      }
    }
    if (!exhaustive) {
      ++j;
      continue;
    }
    std::map<std::size_t, double> weight;
    FlatDirection g;
    g.shift = 1.0;
    for (std::size_t c = j; c < k; ++c) {
      if (!scaling.usable[c]) continue;
      weight[class_of[c]] += sign_of[c];
      // 1 - x for a flipped member, so the class moves the predictor by -1 less
      if (sign_of[c] < 0.0) g.shift -= 1.0;
    }
    for (const auto& [cls, wsum] : weight) {
      if (wsum == 0.0) continue;
      g.classes.push_back(cls);
      g.direction.push_back(wsum * scaling.sd[classes.rep[cls]]);
    }
    if (g.classes.size() >= 2) out.push_back(std::move(g));
    j = k;
  }
  return out;
}

// argmin over t of Σ_k w_k/2 (b_k + t d_k)² + l1 |b_k + t d_k|. Exactly 0
// when t = 0 is optimal.
double penalty_line_min(const std::vector<double>& b, const std::vector<double>& d,
                        const std::vector<double>& w, double l1) {
  // Right derivative along direction e = ±d at u.
  auto slope = [&](double u, double dir) {
    double g = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double e = dir * d[k];
      const double v = b[k] + u * e;
      const double sg = v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : (e > 0.0 ? 1.0 : -1.0);
      g += w[k] * e * v + l1 * e * sg;
    }
    return g;
  };
  double dir = 0.0;
  if (slope(0.0, 1.0) < 0.0) {
    dir = 1.0;
  } else if (slope(0.0, -1.0) < 0.0) {
    dir = -1.0;
  } else {
    return 0.0;
  }
  double curvature = 0.0;
  std::vector<double> kinks;
  for (std::size_t k = 0; k < b.size(); ++k) {
    curvature += w[k] * d[k] * d[k];
    const double u = -b[k] / (dir * d[k]);
    if (u > 0.0) kinks.push_back(u);
  }
  std::sort(kinks.begin(), kinks.end());
  double lo = 0.0;
  for (std::size_t i = 0;; ++i) {
    const double g = slope(lo, dir);
    const bool last = i == kinks.size();
    if (curvature > 0.0) {
      const double root = lo - g / curvature;
      if (last || root <= kinks[i]) return dir * root;
    }
    if (last) return dir * lo;  // past the last kink the slope is l1·Σ|d| > 0
    lo = kinks[i];
    if (slope(lo, dir) >= 0.0) return dir * lo;
  }
}

class Solver {
 public:
  Solver(const DesignMatrix& x, std::span<const std::uint8_t> y, double alpha,
         const EnetOptions& options)
      : x_(x), y_(y), alpha_(alpha), options_(options), scaling_(standardize(x)),
        classes_(column_classes(x, scaling_)), n_(static_cast<double>(x.n_rows())),
        beta_(classes_.rep.size(), 0.0), v_(x.n_rows(), 0.0), w_(x.n_rows()), q_(x.n_rows()),
        z_(x.n_rows()), curv_(classes_.rep.size()), xw_(classes_.rep.size()),
        stamp_(classes_.rep.size(), 0) {
    groups_ = flat_directions(x, scaling_, classes_);
    const double ybar = static_cast<double>(std::count(y.begin(), y.end(), std::uint8_t{1})) / n_;
    offset_ = std::log(ybar / (1.0 - ybar));
    all_.resize(classes_.rep.size());
    std::iota(all_.begin(), all_.end(), std::size_t{0});
  }

  void build_rows() {
    const auto n_rows = x_.n_rows();
    bool indicators = true;
    row_ptr_.assign(n_rows + 1, 0);
    for (auto j : classes_.rep) {
      const auto& col = x_.column(j);
      indicators = indicators && col.values.empty();
      for (auto r : col.rows) ++row_ptr_[r + 1];
    }
    for (std::size_t i = 0; i < n_rows; ++i) row_ptr_[i + 1] += row_ptr_[i];
    row_class_.resize(row_ptr_[n_rows]);
    if (!indicators) row_value_.resize(row_ptr_[n_rows]);
    auto fill = row_ptr_;
    for (std::size_t c = 0; c < classes_.rep.size(); ++c) {
      const auto& col = x_.column(classes_.rep[c]);
      for (std::size_t k = 0; k < col.rows.size(); ++k) {
        const auto e = fill[col.rows[k]]++;
        row_class_[e] = static_cast<std::uint32_t>(c);
        if (!indicators) row_value_[e] = col.values.empty() ? 1.0 : col.values[k];
      }
    }
    gram_.resize(classes_.rep.size());
    gram_stamp_.assign(classes_.rep.size(), 0);
  }

  void solve(double lambda) {
    std::size_t sweeps = 0;
    std::vector<std::size_t> active;
    while (true) {
      prepare_outer();
      const auto beta_before = beta_;
      const double b0_before = intercept_standardized();
      double change = 0.0;
      while (true) {
        change = sweep(all_, lambda);
        ++sweeps;
        if (change < options_.tolerance) break;
        active.clear();
        for (auto c : all_) {
          if (beta_[c] != 0.0) active.push_back(c);
        }
        for (std::size_t round = 1;; ++round) {
          change = sweep(active, lambda);
          if (++sweeps > options_.max_sweeps) fail(lambda, change, sweeps);
          if (change < options_.tolerance) break;
          if (round % kNewtonEvery == 0) newton_step(active, lambda);
        }
        if (sweeps > options_.max_sweeps) fail(lambda, change, sweeps);
      }
      for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = z_[i] - q_[i];
      double outer_change = std::abs(intercept_standardized() - b0_before);
      for (auto c : all_) outer_change = std::max(outer_change, std::abs(beta_[c] - beta_before[c]));
      if (outer_change < options_.tolerance) break;
      if (sweeps > options_.max_sweeps) fail(lambda, outer_change, sweeps);
    }
  }

  ElasticNetFit snapshot(double lambda) const {
    ElasticNetFit fit;
    fit.alpha = alpha_;
    fit.lambda = lambda;
    fit.names = x_.names();
    fit.standardized.assign(x_.n_cols(), 0.0);
    fit.coefficients.assign(x_.n_cols(), 0.0);
    fit.intercept = offset_ + drift_;
    for (std::size_t c = 0; c < beta_.size(); ++c) {
      if (beta_[c] == 0.0) continue;
      const double share = beta_[c] / static_cast<double>(classes_.members[c].size());
      for (const auto& [j, sign] : classes_.members[c]) {
        fit.standardized[j] = sign * share;
        fit.coefficients[j] = sign * share / scaling_.sd[j];
        // A flipped indicator is 1 - x, which moves its constant into the intercept.
        if (sign < 0.0) fit.intercept += share / scaling_.sd[j];
      }
    }
    fit.intercept_standardized = fit.intercept;
    for (std::size_t j = 0; j < x_.n_cols(); ++j) {
      if (fit.standardized[j] != 0.0) fit.intercept_standardized += fit.coefficients[j] * scaling_.mean[j];
    }
    return fit;
  }

  double deviance() const {
    double dev = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) {
      const double eta = offset_ + v_[i];
      // -2 loglik, stable form
      dev += 2.0 * (std::log1p(std::exp(-std::abs(eta))) + std::max(eta, 0.0) - y_[i] * eta);
    }
    return dev;
  }

 private:
  double intercept_standardized() const {
    double b0 = offset_ + drift_;
    for (auto c : all_) {
      const auto j = classes_.rep[c];
      b0 += beta_[c] * scaling_.mean[j] / scaling_.sd[j];
    }
    return b0;
  }

  [[noreturn]] void fail(double lambda, double change, std::size_t sweeps) const {
    throw ConvergenceError("coordinate descent did not converge at lambda=" + std::to_string(lambda),
                           snapshot(lambda), change, sweeps);
  }

  void prepare_outer() {
    total_w_ = 0.0;
    sum_wq_ = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) {
      const double eta = offset_ + v_[i];
      const double p = logistic(eta);
      const double w = std::max(p * (1.0 - p), 1e-5);
      w_[i] = w;
      z_[i] = eta + (y_[i] - p) / w;
      q_[i] = z_[i] - v_[i];
      total_w_ += w;
      sum_wq_ += w * q_[i];
    }
    offset_ = sum_wq_ / total_w_;
    ++epoch_;
  }

  // (1/n) Σ w x̃² and Σ w x for class c under the current weights.
  void ensure_curvature(std::size_t c) {
    if (stamp_[c] == epoch_) return;
    const auto j = classes_.rep[c];
    const auto& col = x_.column(j);
    double xw = 0.0, xxw = 0.0;
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      const double xv = col.values.empty() ? 1.0 : col.values[k];
      const double w = w_[col.rows[k]];
      xw += w * xv;
      xxw += w * xv * xv;
    }
    const double s = scaling_.sd[j];
    // Curvature of the column centered at its weighted mean: the intercept
    // is re-minimized after every coordinate step.
    curv_[c] = std::max(xxw - xw * xw / total_w_, 0.0) / (n_ * s * s);
    xw_[c] = xw;
    stamp_[c] = epoch_;
  }

  double sweep(const std::vector<std::size_t>& cols, double lambda) {
    double max_change = 0.0;
    const double l1 = lambda * alpha_;
    const double l2 = lambda * (1.0 - alpha_);
    for (auto c : cols) {
      ensure_curvature(c);
      const double l2c = l2 / static_cast<double>(classes_.members[c].size());
      if (curv_[c] + l2c <= 0.0) continue;
      const double u = gradient(c) + curv_[c] * beta_[c];
      const double d = soft_threshold(u, l1) / (curv_[c] + l2c) - beta_[c];
      if (d == 0.0) continue;
      move(c, d);
      max_change = std::max(max_change, std::abs(d));
    }
    for (const auto& g : groups_) max_change = std::max(max_change, group_move(g, l2, l1));
    const double d0 = (sum_wq_ - offset_ * total_w_) / total_w_;
    offset_ += d0;
    return std::max(max_change, std::abs(d0));
  }

  // Moves along a loss-flat direction of one exhaustive group; only the
  // penalty decides how far. Coordinate steps alone crawl along these
  // directions when the ridge weight is small.
  double group_move(const FlatDirection& g, double l2, double l1) {
    std::vector<double> b(g.classes.size()), w(g.classes.size());
    for (std::size_t k = 0; k < g.classes.size(); ++k) {
      b[k] = beta_[g.classes[k]];
      w[k] = l2 / static_cast<double>(classes_.members[g.classes[k]].size());
    }
    const double t = penalty_line_min(b, g.direction, w, l1);
    if (t == 0.0) return 0.0;
    double max_change = 0.0;
    for (std::size_t k = 0; k < g.classes.size(); ++k) {
      const double d = t * g.direction[k];
      beta_[g.classes[k]] = b[k] + d;
      max_change = std::max(max_change, std::abs(d));
    }
    // The linear predictor is unchanged; the slopes' uniform shift moves
    // into the intercept.
    drift_ -= t * g.shift;
    return max_change;
  }

  // With the active set and its signs held fixed the inner problem is a
  // smooth quadratic. Step to its minimizer; when a coefficient would change
  // sign, stop at that zero, pin it there and solve again. Every step stays on
  // one face of the penalty, so none increases the objective. Pinned
  // coordinates reuse the factorization through a small bordered system.
  // Coordinate sweeps still decide convergence.
  void newton_step(const std::vector<std::size_t>& candidates, double lambda) {
    std::vector<std::size_t> active;
    for (auto c : candidates) {
      if (beta_[c] != 0.0) active.push_back(c);
    }
    const auto m = active.size();
    if (m < 2 || m > kNewtonMaxActive) return;
    if (gram_.empty()) build_rows();
    const double l1 = lambda * alpha_;
    const double l2 = lambda * (1.0 - alpha_);
    const auto mi = static_cast<Eigen::Index>(m);

    Eigen::MatrixXd h(mi, mi);
    double max_diag = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      const auto c = active[a];
      ensure_curvature(c);
      const auto& row = gram_row(c);
      const double sc = scaling_.sd[classes_.rep[c]];
      const auto ai = static_cast<Eigen::Index>(a);
      for (std::size_t b = 0; b <= a; ++b) {
        const auto d = active[b];
        h(ai, static_cast<Eigen::Index>(b)) =
            (row[d] - xw_[c] * xw_[d] / total_w_) / (n_ * sc * scaling_.sd[classes_.rep[d]]);
      }
      h(ai, ai) += l2 / static_cast<double>(classes_.members[c].size());
      max_diag = std::max(max_diag, h(ai, ai));
    }
    h.diagonal().array() += 1e-9 * max_diag;
    const Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(h);
    if (llt.info() != Eigen::Success) return;

    std::vector<std::size_t> pinned;
    Eigen::MatrixXd pinned_cols(mi, 0);  // H^-1 e_k for each pinned k
    Eigen::VectorXd rhs(mi);
    for (std::size_t drops = 0; drops <= kNewtonMaxDrops; ++drops) {
      for (std::size_t a = 0; a < m; ++a) {
        const auto c = active[a];
        const double l2c = l2 / static_cast<double>(classes_.members[c].size());
        rhs(static_cast<Eigen::Index>(a)) =
            beta_[c] == 0.0 ? 0.0 : gradient(c) - l2c * beta_[c] - l1 * (beta_[c] > 0.0 ? 1.0 : -1.0);
      }
      Eigen::VectorXd delta = llt.solve(rhs);
      if (!pinned.empty()) {
        // Lagrange correction enforcing delta_k = 0 on pinned coordinates.
        const auto np = static_cast<Eigen::Index>(pinned.size());
        Eigen::MatrixXd border(np, np);
        Eigen::VectorXd at(np);
        for (Eigen::Index i = 0; i < np; ++i) {
          at(i) = delta(static_cast<Eigen::Index>(pinned[static_cast<std::size_t>(i)]));
          for (Eigen::Index j = 0; j < np; ++j) {
            border(i, j) = pinned_cols(static_cast<Eigen::Index>(pinned[static_cast<std::size_t>(i)]), j);
          }
        }
        delta -= pinned_cols * border.partialPivLu().solve(at);
      }
      if (!delta.allFinite()) return;

      double t = 1.0;
      std::size_t first_hit = m;
      for (std::size_t a = 0; a < m; ++a) {
        const double b = beta_[active[a]];
        if (b == 0.0) continue;
        const double d = delta(static_cast<Eigen::Index>(a));
        if (b * (b + d) <= 0.0 && -b / d < t) {
          t = -b / d;
          first_hit = a;
        }
      }
      for (std::size_t a = 0; a < m; ++a) {
        const auto c = active[a];
        if (beta_[c] == 0.0) continue;
        move(c, a == first_hit ? -beta_[c] : t * delta(static_cast<Eigen::Index>(a)));
      }
      offset_ += (sum_wq_ - offset_ * total_w_) / total_w_;
      if (first_hit == m) return;
      pinned.push_back(first_hit);
      pinned_cols.conservativeResize(Eigen::NoChange, pinned_cols.cols() + 1);
      pinned_cols.col(pinned_cols.cols() - 1) = llt.solve(Eigen::VectorXd::Unit(mi, static_cast<Eigen::Index>(first_hit)));
    }
  }

  // Σ_i w x_ic x_id against every class d under the current weights.
  const std::vector<double>& gram_row(std::size_t c) {
    auto& row = gram_[c];
    if (gram_stamp_[c] == epoch_) return row;
    row.assign(beta_.size(), 0.0);
    const auto& col = x_.column(classes_.rep[c]);
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      const auto i = col.rows[k];
      const double wv = w_[i] * (col.values.empty() ? 1.0 : col.values[k]);
      for (auto e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
        row[row_class_[e]] += wv * (row_value_.empty() ? 1.0 : row_value_[e]);
      }
    }
    gram_stamp_[c] = epoch_;
    return row;
  }

  // Σ w x̃ r / n for class c, r = q - offset.
  double gradient(std::size_t c) const {
    const auto j = classes_.rep[c];
    const auto& col = x_.column(j);
    double dot = 0.0;
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      const auto i = col.rows[k];
      dot += w_[i] * (col.values.empty() ? 1.0 : col.values[k]) * q_[i];
    }
    return (dot - offset_ * xw_[c] - scaling_.mean[j] * (sum_wq_ - offset_ * total_w_)) / (scaling_.sd[j] * n_);
  }

  // beta_c += d, keeping q and the (weighted-mean) intercept consistent.
  void move(std::size_t c, double d) {
    if (d == 0.0) return;
    const auto j = classes_.rep[c];
    const auto& col = x_.column(j);
    beta_[c] += d;
    const double step = d / scaling_.sd[j];
    for (std::size_t k = 0; k < col.rows.size(); ++k) {
      q_[col.rows[k]] -= step * (col.values.empty() ? 1.0 : col.values[k]);
    }
    sum_wq_ -= step * xw_[c];
    offset_ -= step * xw_[c] / total_w_;
  }

  // Row-major copy of the class representatives, for Gram rows.
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> row_class_;
  std::vector<double> row_value_;  // empty when every representative is an indicator
  std::vector<std::vector<double>> gram_;
  std::vector<std::uint64_t> gram_stamp_;
  static constexpr std::size_t kNewtonMaxDrops = 16;
  static constexpr std::size_t kNewtonEvery = 2;
  static constexpr std::size_t kNewtonMaxActive = 1500;

  const DesignMatrix& x_;
  std::span<const std::uint8_t> y_;
  double alpha_;
  EnetOptions options_;
  Scaling scaling_;
  ColumnClasses classes_;
  double n_;
  std::vector<std::size_t> all_;
  std::vector<double> beta_;  // per class, standardized scale of its representative
  std::vector<FlatDirection> groups_;
  double offset_ = 0.0;  // intercept in the uncentered parametrization, less drift_
  double drift_ = 0.0;   // intercept absorbed from group moves
  std::vector<double> v_;  // Σ_c beta_c x_rep / sd_rep
  std::vector<double> w_, q_, z_;
  double total_w_ = 0.0, sum_wq_ = 0.0;
  std::vector<double> curv_, xw_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 0;
};

std::vector<double> log_grid(double hi, double ratio, std::size_t n) {
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
    grid[k] = hi * std::pow(ratio, t);
  }
  return grid;
}

// Path solve; with `early_stop` the path ends once the deviance stops
// improving by more than 1e-5 of the null deviance.
std::vector<ElasticNetFit> solve_path(const DesignMatrix& x, std::span<const std::uint8_t> y,
                                      double alpha, std::span<const double> lambdas,
                                      const EnetOptions& options, bool early_stop) {
  Solver solver(x, y, alpha, options);
  std::vector<ElasticNetFit> out;
  const double null_dev = solver.deviance();
  double prev_dev = null_dev;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    solver.solve(lambdas[k]);
    out.push_back(solver.snapshot(lambdas[k]));
    const double dev = solver.deviance();
    if (early_stop && k > 0 && ((prev_dev - dev) < 1e-5 * null_dev || dev < 1e-3 * null_dev)) break;
    prev_dev = dev;
  }
  return out;
}

std::vector<std::size_t> stratified_folds(std::span<const std::uint8_t> y, std::size_t k,
                                          std::uint64_t seed) {
  std::vector<std::size_t> fold(y.size());
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) rows.push_back(i);
    }
    Rng rng(derive_seed(seed, 0xcf01du, cls));
    shuffle(rng, rows);
    for (std::size_t r = 0; r < rows.size(); ++r) fold[rows[r]] = r % k;
  }
  return fold;
}

}  // namespace

std::vector<double> ElasticNetFit::decision_function(const DesignMatrix& x) const {
  if (x.n_cols() != coefficients.size()) throw FitError("design matrix has the wrong column count");
  std::vector<double> eta(x.n_rows(), intercept);
  for (std::size_t j = 0; j < x.n_cols(); ++j) {
    if (coefficients[j] == 0.0) continue;
    const auto& c = x.column(j);
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      eta[c.rows[k]] += coefficients[j] * (c.values.empty() ? 1.0 : c.values[k]);
    }
  }
  return eta;
}

double lambda_max(const DesignMatrix& x, std::span<const std::uint8_t> y, double alpha) {
  check_labels(x, y);
  const auto scaling = standardize(x);
  const double n = static_cast<double>(x.n_rows());
  const double ybar = static_cast<double>(std::count(y.begin(), y.end(), std::uint8_t{1})) / n;
  double best = 0.0;
  for (std::size_t j = 0; j < x.n_cols(); ++j) {
    if (!scaling.usable[j]) continue;
    const auto& c = x.column(j);
    double g = 0.0;
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      g += (c.values.empty() ? 1.0 : c.values[k]) * (y[c.rows[k]] - ybar);
    }
    best = std::max(best, std::abs(g) / (n * scaling.sd[j]));
  }
  // Slight inflation so the first grid point is exactly the null model.
  return best / std::max(alpha, 1e-3) * (1.0 + 1e-9);
}

std::vector<ElasticNetFit> fit_enet_path(const DesignMatrix& x, std::span<const std::uint8_t> y,
                                         double alpha, std::span<const double> lambdas,
                                         const EnetOptions& options) {
  check_labels(x, y);
  if (alpha < 0.0 || alpha > 1.0) throw FitError("alpha must lie in [0, 1]");
  return solve_path(x, y, alpha, lambdas, options, false);
}

ElasticNetFit fit_enet(const DesignMatrix& x, std::span<const std::uint8_t> y,
                       const EnetOptions& options) {
  check_labels(x, y);
  if (options.alpha < 0.0 || options.alpha > 1.0) throw FitError("alpha must lie in [0, 1]");
  if (options.lambda) {
    const double lambda = *options.lambda;
    auto fit = solve_path(x, y, options.alpha, std::span(&lambda, 1), options, false).front();
    fit.lambda_path = {lambda};
    return fit;
  }
  if (options.n_lambda < 1) throw FitError("n_lambda must be positive");
  if (options.cv_folds < 2) throw FitError("cross-validation needs at least two folds");

  auto grid = log_grid(lambda_max(x, y, options.alpha), options.lambda_min_ratio, options.n_lambda);
  auto full = solve_path(x, y, options.alpha, grid, options, true);
  grid.resize(full.size());

  const auto fold = stratified_folds(y, options.cv_folds, options.seed);
  std::vector<std::vector<double>> fold_auc(options.cv_folds);
  std::vector<std::exception_ptr> errors(options.cv_folds);
  auto run_fold = [&](std::size_t k) {
    try {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < y.size(); ++i) (fold[i] == k ? test : train).push_back(i);
      std::vector<std::uint8_t> y_train, y_test;
      for (auto i : train) y_train.push_back(y[i]);
      for (auto i : test) y_test.push_back(y[i]);
      const auto n_pos = std::count(y_test.begin(), y_test.end(), std::uint8_t{1});
      if (n_pos == 0 || static_cast<std::size_t>(n_pos) == y_test.size()) return;
      const auto x_train = x.select_rows(train);
      const auto x_test = x.select_rows(test);
      const auto path = solve_path(x_train, y_train, options.alpha, grid, options, false);
      for (const auto& f : path) fold_auc[k].push_back(auc(f.decision_function(x_test), y_test));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const auto threads = std::clamp<std::size_t>(options.threads, 1, options.cv_folds);
  if (threads == 1) {
    for (std::size_t k = 0; k < options.cv_folds; ++k) run_fold(k);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t k = w; k < options.cv_folds; k += threads) run_fold(k);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<double> mean(grid.size(), 0.0);
  std::size_t used = 0;
  for (const auto& fa : fold_auc) {
    if (fa.empty()) continue;
    ++used;
    for (std::size_t l = 0; l < grid.size(); ++l) mean[l] += fa[l];
  }
  if (used == 0) throw FitError("no cross-validation fold held out both classes");
  for (auto& m : mean) m /= static_cast<double>(used);
  const auto best = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());

  ElasticNetFit out = std::move(full[best]);
  out.lambda_path = std::move(grid);
  out.cv_auc = std::move(mean);
  return out;
}

KktResiduals kkt_residuals(const DesignMatrix& x, std::span<const std::uint8_t> y,
                           const ElasticNetFit& fit) {
  const auto scaling = standardize(x);
  const auto eta = fit.decision_function(x);
  const double n = static_cast<double>(x.n_rows());
  std::vector<double> resid(eta.size());
  double resid_sum = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    resid[i] = y[i] - logistic(eta[i]);
    resid_sum += resid[i];
  }
  KktResiduals out;
  out.intercept = std::abs(resid_sum / n);
  for (std::size_t j = 0; j < x.n_cols(); ++j) {
    if (!scaling.usable[j]) continue;
    const auto& c = x.column(j);
    double dot = 0.0;
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      dot += (c.values.empty() ? 1.0 : c.values[k]) * resid[c.rows[k]];
    }
    const double g = (dot - scaling.mean[j] * resid_sum) / (n * scaling.sd[j]);
    const double b = fit.standardized[j];
    if (b == 0.0) {
      out.zero_excess = std::max(out.zero_excess, std::abs(g) - fit.alpha * fit.lambda);
    } else {
      const double sign = b > 0 ? 1.0 : -1.0;
      const double r = g - fit.lambda * ((1.0 - fit.alpha) * b + fit.alpha * sign);
      out.stationarity = std::max(out.stationarity, std::abs(r));
    }
  }
  out.zero_excess = std::max(out.zero_excess, 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Unpenalized refit for odds ratios

OddsRatioFit odds_ratios(const DesignMatrix& x, std::span<const std::uint8_t> y, double cap) {
  if (x.n_cols() > 50) throw FitError("odds-ratio refit supports at most 50 columns");
  if (y.size() != x.n_rows()) throw FitError("label count does not match design rows");
  const auto n_pos = std::count(y.begin(), y.end(), std::uint8_t{1});
  if (n_pos == 0 || static_cast<std::size_t>(n_pos) == y.size()) {
    throw FitError("odds ratios need both classes");
  }
  const auto n = static_cast<Eigen::Index>(x.n_rows());
  const auto p = static_cast<Eigen::Index>(x.n_cols());
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = x.dense_column(static_cast<std::size_t>(j));
    design.col(j + 1) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];

  // Greedy rank check in column order.
  const Eigen::MatrixXd gram = design.transpose() * design;
  std::vector<Eigen::Index> kept{0};
  std::vector<char> aliased(static_cast<std::size_t>(p) + 1, 0);
  for (Eigen::Index j = 1; j <= p; ++j) {
    auto trial = kept;
    trial.push_back(j);
    Eigen::MatrixXd sub(trial.size(), trial.size());
    for (std::size_t a = 0; a < trial.size(); ++a) {
      for (std::size_t b = 0; b < trial.size(); ++b) sub(a, b) = gram(trial[a], trial[b]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    lu.setThreshold(1e-10);
    if (lu.rank() == static_cast<Eigen::Index>(trial.size())) {
      kept = std::move(trial);
    } else {
      aliased[static_cast<std::size_t>(j)] = 1;
    }
  }

  const auto m = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd xk(n, m);
  for (Eigen::Index a = 0; a < m; ++a) xk.col(a) = design.col(kept[static_cast<std::size_t>(a)]);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  const double ybar = static_cast<double>(n_pos) / static_cast<double>(n);
  beta(0) = std::log(ybar / (1.0 - ybar));
  std::vector<char> frozen(static_cast<std::size_t>(m), 0);

  auto free_index = [&] {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index a = 0; a < m; ++a) {
      if (!frozen[static_cast<std::size_t>(a)]) idx.push_back(a);
    }
    return idx;
  };
  auto information = [&](const std::vector<Eigen::Index>& idx, Eigen::VectorXd& grad) {
    const Eigen::VectorXd eta = xk * beta;
    const Eigen::VectorXd prob = eta.unaryExpr([](double e) { return logistic(e); });
    const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd xf(n, k);
    for (Eigen::Index a = 0; a < k; ++a) xf.col(a) = xk.col(idx[static_cast<std::size_t>(a)]);
    grad = xf.transpose() * (yv - prob);
    return Eigen::MatrixXd(xf.transpose() * w.asDiagonal() * xf);
  };

  // Saturated design (one distinct row pattern per parameter, each with both
  // classes): the MLE reproduces every pattern's empirical log-odds, so solve
  // for it directly instead of iterating.
  bool converged = false;
  {
    std::map<std::vector<double>, std::pair<double, double>> cells;
    std::vector<double> key(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < n && cells.size() <= static_cast<std::size_t>(m); ++i) {
      for (Eigen::Index a = 0; a < m; ++a) key[static_cast<std::size_t>(a)] = xk(i, a);
      auto& c = cells[key];
      (yv(i) > 0 ? c.first : c.second) += 1.0;
    }
    const bool mixed = std::all_of(cells.begin(), cells.end(),
                                   [](const auto& c) { return c.second.first > 0 && c.second.second > 0; });
    if (cells.size() == static_cast<std::size_t>(m) && mixed) {
      Eigen::MatrixXd patterns(m, m);
      Eigen::VectorXd logits(m);
      Eigen::Index r = 0;
      for (const auto& [pattern, counts] : cells) {
        for (Eigen::Index a = 0; a < m; ++a) patterns(r, a) = pattern[static_cast<std::size_t>(a)];
        logits(r) = std::log(counts.first / counts.second);
        ++r;
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(patterns);
      if (lu.isInvertible()) {
        beta = lu.solve(logits);
        converged = beta.allFinite() && beta.cwiseAbs().maxCoeff() <= cap;
        if (!converged) {
          beta.setZero();
          beta(0) = std::log(ybar / (1.0 - ybar));
        }
      }
    }
  }
  for (int iter = 0; iter < 500 && !converged; ++iter) {
    const auto idx = free_index();
    Eigen::VectorXd grad;
    const Eigen::MatrixXd info = information(idx, grad);
    const Eigen::VectorXd delta = info.ldlt().solve(grad);
    double max_step = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      beta(idx[a]) += delta(static_cast<Eigen::Index>(a));
      max_step = std::max(max_step, std::abs(delta(static_cast<Eigen::Index>(a))));
    }
    for (auto a : idx) {
      if (!std::isfinite(beta(a))) beta(a) = cap;
      if (std::abs(beta(a)) > cap) {
        beta(a) = std::copysign(cap, beta(a));
        frozen[static_cast<std::size_t>(a)] = 1;
        max_step = 1.0;
      }
    }
    converged = max_step < 1e-12;
  }
  if (!converged) throw FitError("odds-ratio refit did not converge");

  const auto idx = free_index();
  Eigen::VectorXd grad;
  const Eigen::MatrixXd cov = information(idx, grad).inverse();
  std::vector<double> se(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    se[static_cast<std::size_t>(idx[a])] = std::sqrt(cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
  }

  OddsRatioFit out;
  out.intercept = beta(0);
  std::size_t slot = 1;
  for (Eigen::Index j = 1; j <= p; ++j) {
    OddsRatio term;
    if (aliased[static_cast<std::size_t>(j)]) {
      term.aliased = true;
      term.coefficient = std::numeric_limits<double>::quiet_NaN();
      term.std_error = std::numeric_limits<double>::quiet_NaN();
      term.odds_ratio = term.ci_low = term.ci_high = std::numeric_limits<double>::quiet_NaN();
    } else {
      const double b = beta(static_cast<Eigen::Index>(slot));
      term.coefficient = b;
      term.std_error = se[slot];
      term.separated = frozen[slot] != 0;
      term.odds_ratio = std::exp(b);
      if (term.separated) {
        term.ci_low = 0.0;
        term.ci_high = std::numeric_limits<double>::infinity();
      } else {
        term.ci_low = std::exp(b - 1.96 * term.std_error);
        term.ci_high = std::exp(b + 1.96 * term.std_error);
      }
      ++slot;
    }
    out.terms.push_back(term);
  }
  return out;
}

}  // namespace drf
