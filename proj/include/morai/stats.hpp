#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace morai::stats {

enum class Method { kExactPermutation, kNormalApprox };
std::string_view to_string(Method method);

struct TestResult {
  double statistic = 0.0;  // Mann-Whitney U of the first sample
  double p_value = 1.0;
  Method method = Method::kNormalApprox;
};

/// Midranks (1-based) of the values, ties sharing their average rank.
std::vector<double> midranks(std::span<const double> values);

/// Two-sided rank-sum test. Uses the exact permutation distribution when
/// n_x + n_y <= 12, otherwise the tie-corrected normal approximation with a
/// 0.5 continuity correction.
TestResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y);
TestResult wilcoxon_rank_sum_exact(std::span<const double> x, std::span<const double> y);
TestResult wilcoxon_rank_sum_normal(std::span<const double> x, std::span<const double> y);

/// Samples for a forced-choice ranking: `first` runs ranked the agent first
/// (+1.0), `second` ranked it second (-1.0).
std::vector<double> ranking_sample(int first, int second);

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
};

/// Pearson correlation of midranks with a t-distribution p-value on n - 2
/// degrees of freedom. Throws LengthMismatch, TooFewPoints (n < 3) or
/// ZeroVariance.
Correlation spearman_rho(std::span<const double> x, std::span<const double> y);

struct RankingRecord {
  std::string comparison;  // "<agentA>-<agentB>"
  std::string feature;
  std::string first;       // the agent ranked first
};

struct RankingRow {
  std::string comparison;
  std::string feature;
  int first_a = 0;
  int first_b = 0;
  std::string ratio;  // "a:b"
  double p_value = 1.0;
};

/// One row per (comparison, feature), rows sorted by comparison then feature.
/// Throws MalformedLog on records naming an agent outside the comparison and
/// on an empty record set.
std::vector<RankingRow> ranking_tables(const std::vector<RankingRecord>& records);
std::string format_ranking_table(const std::vector<RankingRow>& rows);
nlohmann::json ranking_rows_json(const std::vector<RankingRow>& rows);

}  // namespace morai::stats
