#include "biden/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <map>

namespace biden {

int rank_of_gold(const std::vector<double>& scores, int gold) {
  const double gs = scores[static_cast<std::size_t>(gold)];
  int rank = 1;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (i == gold) continue;
    const double s = scores[static_cast<std::size_t>(i)];
    if (s > gs || (s == gs && i < gold)) ++rank;
  }
  return rank;
}

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : gold) counts[t]++;
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / pred.size();
  const double r = static_cast<double>(overlap) / gold.size();
  return 2.0 * p * r / (p + r);
}

namespace {

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks,
                                                     int n) {
  std::map<std::vector<std::string>, int> out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                 toks.begin() + static_cast<std::ptrdiff_t>(i) + n)]++;
  return out;
}

}  // namespace

double rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
               int n) {
  const auto cc = ngram_counts(cand, n);
  const auto rc = ngram_counts(ref, n);
  std::int64_t cand_total = 0, ref_total = 0, matched = 0;
  for (const auto& [g, c] : cc) cand_total += c;
  for (const auto& [g, c] : rc) ref_total += c;
  for (const auto& [g, c] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) matched += std::min(c, it->second);
  }
  if (cand_total == 0 || ref_total == 0 || matched == 0) return 0.0;
  const double p = static_cast<double>(matched) / cand_total;
  const double r = static_cast<double>(matched) / ref_total;
  return 2.0 * p * r / (p + r);
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[m];
}

double rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const int l = lcs_length(cand, ref);
  if (l == 0) return 0.0;
  const double p = static_cast<double>(l) / cand.size();
  const double r = static_cast<double>(l) / ref.size();
  return 2.0 * p * r / (p + r);
}

double rouge_1(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  return rouge_n(cand, ref, 1);
}

double rouge_2(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  return rouge_n(cand, ref, 2);
}

double max_over_refs(const std::vector<std::string>& cand,
                     const std::vector<std::vector<std::string>>& refs,
                     double (*metric)(const std::vector<std::string>&,
                                      const std::vector<std::string>&)) {
  double best = 0.0;
  for (const auto& r : refs) best = std::max(best, metric(cand, r));
  return best;
}

}  // namespace biden
