#pragma once

#include <map>
#include <string>
#include <vector>

namespace biden {

// 1-based rank of the gold candidate; on score ties the lower candidate index
// ranks better (so gold at index g is outranked only by strictly-higher
// scores and by equal scores at lower indices).
int rank_of_gold(const std::vector<double>& scores, int gold);

struct RankingMetrics {
  double r_at_1 = 0, r_at_2 = 0, mrr = 0;
  int count = 0;
};

struct SpanMetrics {
  double em = 0, f1 = 0;
  int count = 0;
};

struct RougeMetrics {
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
  int count = 0;
};

// Bag-of-tokens overlap F1 between two token sequences.
double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Clipped n-gram overlap F1 (py-rouge convention, beta = 1).
double rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int n);

// LCS-based F1: precision over the candidate, recall over the reference.
double rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref);

double rouge_1(const std::vector<std::string>& cand, const std::vector<std::string>& ref);
double rouge_2(const std::vector<std::string>& cand, const std::vector<std::string>& ref);

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

double max_over_refs(const std::vector<std::string>& cand,
                     const std::vector<std::vector<std::string>>& refs,
                     double (*metric)(const std::vector<std::string>&,
                                      const std::vector<std::string>&));

// Flat metric map for reports; every value lies in [0, 1].
using MetricsReport = std::map<std::string, double>;

}  // namespace biden
