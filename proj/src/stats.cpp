#include "morai/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "morai/error.hpp"

namespace morai::stats {

std::string_view to_string(Method method) {
  return method == Method::kExactPermutation ? "exact-permutation" : "normal-approx-tie-corrected";
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

void require_samples(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw Error(ErrorCode::kEmptySample, "rank-sum needs two non-empty samples");
}

std::vector<double> pooled(std::span<const double> x, std::span<const double> y) {
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  return all;
}

}  // namespace

TestResult wilcoxon_rank_sum_normal(std::span<const double> x, std::span<const double> y) {
  require_samples(x, y);
  const auto all = pooled(x, y);
  const auto ranks = midranks(all);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const double n = nx + ny;
  const double rank_sum = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(x.size()), 0.0);
  const double u = rank_sum - nx * (nx + 1.0) / 2.0;
  const double mean = nx * ny / 2.0;

  // Tie correction: sum of t^3 - t over tie groups.
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double variance = nx * ny / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  TestResult r;
  r.statistic = u;
  r.method = Method::kNormalApprox;
  if (!(variance > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  const double z = std::max(0.0, std::abs(u - mean) - 0.5) / std::sqrt(variance);
  r.p_value = std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
  return r;
}

TestResult wilcoxon_rank_sum_exact(std::span<const double> x, std::span<const double> y) {
  require_samples(x, y);
  const auto all = pooled(x, y);
  if (all.size() > 24) throw Error(ErrorCode::kInvalidArgument, "exact enumeration limited to 24 observations");
  const auto ranks = midranks(all);
  const std::size_t n = all.size();
  const std::size_t k = x.size();
  const double nx = static_cast<double>(k);
  const double ny = static_cast<double>(y.size());
  const double mean = nx * ny / 2.0;
  const double offset = nx * (nx + 1.0) / 2.0;
  const double observed =
      std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(k), 0.0) - offset;
  const double observed_dev = std::abs(observed - mean);

  // Walk all k-subsets of the pooled positions.
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  double extreme = 0.0;
  double total = 0.0;
  while (true) {
    double s = 0.0;
    for (auto i : idx) s += ranks[i];
    total += 1.0;
    // Rank sums are multiples of 0.5, so the comparison is exact.
    if (std::abs(s - offset - mean) >= observed_dev) extreme += 1.0;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  TestResult r;
  r.statistic = observed;
  r.method = Method::kExactPermutation;
  r.p_value = std::clamp(extreme / total, 0.0, 1.0);
  return r;
}

TestResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y) {
  require_samples(x, y);
  if (x.size() + y.size() <= 12) return wilcoxon_rank_sum_exact(x, y);
  return wilcoxon_rank_sum_normal(x, y);
}

std::vector<double> ranking_sample(int first, int second) {
  if (first < 0 || second < 0) throw Error(ErrorCode::kInvalidArgument, "negative ranking count");
  std::vector<double> v(static_cast<std::size_t>(first), 1.0);
  v.insert(v.end(), static_cast<std::size_t>(second), -1.0);
  return v;
}

Correlation spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kLengthMismatch, "spearman inputs differ in length");
  if (x.size() < 3) throw Error(ErrorCode::kTooFewPoints, "spearman needs at least 3 pairs");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kZeroVariance, "constant input; rho undefined");
  Correlation c;
  c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  if (std::abs(c.rho) >= 1.0) {
    c.p_value = 0.0;
    return c;
  }
  const double t = c.rho * std::sqrt(dof / (1.0 - c.rho * c.rho));
  boost::math::students_t dist(dof);
  c.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
  return c;
}

std::vector<RankingRow> ranking_tables(const std::vector<RankingRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kMalformedLog, "no ranking outcomes");
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> counts;
  for (const auto& r : records) {
    const auto dash = r.comparison.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == r.comparison.size()) {
      throw Error(ErrorCode::kMalformedLog, "comparison must look like A-B: " + r.comparison);
    }
    const auto a = r.comparison.substr(0, dash);
    const auto b = r.comparison.substr(dash + 1);
    auto& c = counts[{r.comparison, r.feature}];
    if (r.first == a) {
      ++c.first;
    } else if (r.first == b) {
      ++c.second;
    } else {
      throw Error(ErrorCode::kMalformedLog, "agent '" + r.first + "' is not part of " + r.comparison);
    }
  }
  std::vector<RankingRow> rows;
  for (const auto& [key, c] : counts) {
    RankingRow row;
    row.comparison = key.first;
    row.feature = key.second;
    row.first_a = c.first;
    row.first_b = c.second;
    row.ratio = std::to_string(c.first) + ":" + std::to_string(c.second);
    const auto xa = ranking_sample(c.first, c.second);
    const auto xb = ranking_sample(c.second, c.first);
    row.p_value = wilcoxon_rank_sum(xa, xb).p_value;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ranking_table(const std::vector<RankingRow>& rows) {
  std::size_t wc = 10, wf = 7;
  for (const auto& r : rows) {
    wc = std::max(wc, r.comparison.size());
    wf = std::max(wf, r.feature.size());
  }
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %9s  %8s\n", static_cast<int>(wc), "comparison", static_cast<int>(wf),
                "feature", "ratio", "p");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %9s  %8.4f\n", static_cast<int>(wc), r.comparison.c_str(),
                  static_cast<int>(wf), r.feature.c_str(), r.ratio.c_str(), r.p_value);
    out += buf;
  }
  return out;
}

nlohmann::json ranking_rows_json(const std::vector<RankingRow>& rows) {
  auto j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"comparison", r.comparison},
                 {"feature", r.feature},
                 {"first_a", r.first_a},
                 {"first_b", r.first_b},
                 {"ratio", r.ratio},
                 {"p_value", r.p_value}});
  }
  return j;
}

}  // namespace morai::stats
