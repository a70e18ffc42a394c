#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prednext/tensor.hpp"

namespace prednext {

struct FeatureBank {
  int64_t n = 0, dim = 0, steps = 0;  // steps == 0 when per-step absent
  std::vector<float> aggregated;      // [N, D]
  std::vector<float> per_step;        // [N, T, D], optional
  std::vector<int> labels;            // [N]
  std::vector<std::string> ids;       // [N]

  void validate() const;
};

struct ConsistencyResult {
  double error = 0.0;        // mean pairwise 1 - cos
  double consistency = 0.0;  // mean pairwise cos
};

// E = 1/(N T(T-1)) sum_i sum_{t != s} (1 - cos(f_i^t, f_i^s)), T >= 2.
ConsistencyResult consistency_error(const std::vector<float>& per_step, int64_t N,
                                    int64_t T, int64_t D);
ConsistencyResult consistency_error(const FeatureBank& bank);

struct KnnResult {
  double top1 = 0.0;
  double top5 = 0.0;
};

// Cosine-similarity k-NN majority vote; top-5 ranks classes by vote count
// with deterministic tie-breaking (summed similarity, then lowest class id).
KnnResult knn_eval(const FeatureBank& train, const FeatureBank& test, int k);

struct RetrievalResult {
  std::map<int, double> recall_at;
  // Per-query gallery ids at the largest K, for external visualization.
  std::vector<std::vector<std::string>> topk_ids;
};

RetrievalResult retrieval_eval(const FeatureBank& query, const FeatureBank& gallery,
                               const std::vector<int>& ks);

// Mean per-dimension stddev of L2-normalized aggregated features; near zero
// means collapse.
double collapse_metric(const FeatureBank& bank);

struct ProbeResult {
  double top1 = 0.0;
  double top5 = 0.0;
};

// Multinomial logistic regression on frozen aggregated features.
ProbeResult linear_probe_on_banks(const FeatureBank& train, const FeatureBank& test,
                                  int epochs, float lr, uint64_t seed);

struct EvalReport {
  double consistency_error = 0.0;
  double consistency = 0.0;
  double knn_top1 = 0.0, knn_top5 = 0.0;
  std::map<int, double> recall_at;
  double collapse_std = 0.0;
  double probe_top1 = -1.0, probe_top5 = -1.0;  // < 0 when not run

  std::string to_json() const;
};

// Binary array file + sidecar JSON (ids, labels, dims).
void save_feature_bank(const FeatureBank& bank, const std::filesystem::path& stem);
FeatureBank load_feature_bank(const std::filesystem::path& stem);

}  // namespace prednext
