#include "prednext/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "prednext/nn.hpp"
#include "prednext/optim.hpp"

namespace prednext {

using nlohmann::json;

void FeatureBank::validate() const {
  if ((int64_t)aggregated.size() != n * dim)
    throw std::invalid_argument("FeatureBank: aggregated size mismatch");
  if (steps > 0 && (int64_t)per_step.size() != n * steps * dim)
    throw std::invalid_argument("FeatureBank: per_step size mismatch");
  if ((int64_t)labels.size() != n || (int64_t)ids.size() != n)
    throw std::invalid_argument("FeatureBank: label/id count mismatch");
  for (float v : aggregated)
    if (!std::isfinite(v)) throw std::invalid_argument("FeatureBank: non-finite");
}

namespace {

double cos_sim(const float* a, const float* b, int64_t d) {
  double dot = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < d; ++i) {
    dot += (double)a[i] * b[i];
    na += (double)a[i] * a[i];
    nb += (double)b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
}

}  // namespace

ConsistencyResult consistency_error(const std::vector<float>& per_step, int64_t N,
                                    int64_t T, int64_t D) {
  if (T < 2) throw std::invalid_argument("consistency_error: T must be >= 2");
  if ((int64_t)per_step.size() != N * T * D)
    throw std::invalid_argument("consistency_error: size mismatch");
  double sum_err = 0;
  for (int64_t i = 0; i < N; ++i)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t s = 0; s < T; ++s) {
        if (s == t) continue;
        sum_err += 1.0 - cos_sim(per_step.data() + (i * T + t) * D,
                                 per_step.data() + (i * T + s) * D, D);
      }
  double denom = (double)N * T * (T - 1);
  ConsistencyResult r;
  r.error = sum_err / denom;
  r.consistency = 1.0 - r.error;  // mean pairwise cosine
  return r;
}

ConsistencyResult consistency_error(const FeatureBank& bank) {
  if (bank.steps < 2)
    throw std::invalid_argument("consistency_error: bank lacks per-step features");
  return consistency_error(bank.per_step, bank.n, bank.steps, bank.dim);
}

namespace {

struct ClassVote {
  int cls;
  int count = 0;
  double sim = 0;
};

// Deterministic ordering: vote count desc, summed similarity desc, class asc.
bool vote_better(const ClassVote& a, const ClassVote& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.cls < b.cls;
}

}  // namespace

KnnResult knn_eval(const FeatureBank& train, const FeatureBank& test, int k) {
  train.validate();
  test.validate();
  if (k < 1) throw std::invalid_argument("knn_eval: k must be >= 1");
  if (k > train.n) throw std::invalid_argument("knn_eval: k larger than train bank");
  if (train.dim != test.dim) throw std::invalid_argument("knn_eval: dim mismatch");
  for (int l : train.labels)
    if (l < 0) throw std::invalid_argument("knn_eval: train bank must be labeled");

  int64_t correct1 = 0, correct5 = 0;
  for (int64_t q = 0; q < test.n; ++q) {
    std::vector<std::pair<double, int64_t>> sims;
    sims.reserve((size_t)train.n);
    for (int64_t i = 0; i < train.n; ++i)
      sims.emplace_back(cos_sim(test.aggregated.data() + q * test.dim,
                                train.aggregated.data() + i * train.dim, train.dim),
                        i);
    std::partial_sort(sims.begin(), sims.begin() + k, sims.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::map<int, ClassVote> votes;
    for (int j = 0; j < k; ++j) {
      int cls = train.labels[(size_t)sims[(size_t)j].second];
      auto& v = votes[cls];
      v.cls = cls;
      v.count += 1;
      v.sim += sims[(size_t)j].first;
    }
    std::vector<ClassVote> ranked;
    for (auto& [cls, v] : votes) ranked.push_back(v);
    std::sort(ranked.begin(), ranked.end(), vote_better);
    int truth = test.labels[(size_t)q];
    if (!ranked.empty() && ranked[0].cls == truth) ++correct1;
    for (size_t j = 0; j < ranked.size() && j < 5; ++j)
      if (ranked[j].cls == truth) {
        ++correct5;
        break;
      }
  }
  return {(double)correct1 / (double)test.n, (double)correct5 / (double)test.n};
}

RetrievalResult retrieval_eval(const FeatureBank& query, const FeatureBank& gallery,
                               const std::vector<int>& ks) {
  query.validate();
  gallery.validate();
  if (ks.empty()) throw std::invalid_argument("retrieval_eval: empty K list");
  for (size_t i = 1; i < ks.size(); ++i)
    if (ks[i] <= ks[i - 1])
      throw std::invalid_argument("retrieval_eval: ks must be sorted ascending");
  int kmax = ks.back();
  if (kmax > gallery.n)
    throw std::invalid_argument("retrieval_eval: K larger than gallery");

  RetrievalResult res;
  std::map<int, int64_t> hits;
  for (int k : ks) hits[k] = 0;
  for (int64_t q = 0; q < query.n; ++q) {
    std::vector<std::pair<double, int64_t>> sims;
    sims.reserve((size_t)gallery.n);
    for (int64_t i = 0; i < gallery.n; ++i)
      sims.emplace_back(
          cos_sim(query.aggregated.data() + q * query.dim,
                  gallery.aggregated.data() + i * gallery.dim, gallery.dim),
          i);
    std::partial_sort(sims.begin(), sims.begin() + kmax, sims.end(),
                      [&gallery](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return gallery.ids[(size_t)a.second] <
                               gallery.ids[(size_t)b.second];
                      });
    std::vector<std::string> topk;
    int truth = query.labels[(size_t)q];
    bool found = false;
    size_t next_k = 0;
    for (int j = 0; j < kmax; ++j) {
      int64_t gi = sims[(size_t)j].second;
      topk.push_back(gallery.ids[(size_t)gi]);
      if (gallery.labels[(size_t)gi] == truth) found = true;
      while (next_k < ks.size() && j + 1 == ks[next_k]) {
        if (found) hits[ks[next_k]] += 1;
        ++next_k;
      }
    }
    res.topk_ids.push_back(std::move(topk));
  }
  for (int k : ks) res.recall_at[k] = (double)hits[k] / (double)query.n;
  return res;
}

double collapse_metric(const FeatureBank& bank) {
  bank.validate();
  if (bank.n < 2) throw std::invalid_argument("collapse_metric: need N >= 2");
  const int64_t N = bank.n, D = bank.dim;
  std::vector<float> normed((size_t)N * D);
  for (int64_t i = 0; i < N; ++i) {
    double s = 0;
    for (int64_t d = 0; d < D; ++d) {
      float v = bank.aggregated[(size_t)(i * D + d)];
      s += (double)v * v;
    }
    double inv = 1.0 / std::max(std::sqrt(s), 1e-8);
    for (int64_t d = 0; d < D; ++d)
      normed[(size_t)(i * D + d)] =
          (float)(bank.aggregated[(size_t)(i * D + d)] * inv);
  }
  double total = 0;
  for (int64_t d = 0; d < D; ++d) {
    double mu = 0;
    for (int64_t i = 0; i < N; ++i) mu += normed[(size_t)(i * D + d)];
    mu /= N;
    double var = 0;
    for (int64_t i = 0; i < N; ++i) {
      double df = normed[(size_t)(i * D + d)] - mu;
      var += df * df;
    }
    total += std::sqrt(var / N);
  }
  return total / D;
}

ProbeResult linear_probe_on_banks(const FeatureBank& train, const FeatureBank& test,
                                  int epochs, float lr, uint64_t seed) {
  train.validate();
  test.validate();
  int C = 0;
  for (int l : train.labels) C = std::max(C, l + 1);
  if (C < 2) throw std::invalid_argument("linear_probe: need labeled train bank");
  const int64_t D = train.dim;

  ParamRegistry reg(seed);
  Linear fc(reg, "probe.fc", (int)D, C);
  OptimConfig ocfg;
  std::vector<Tensor> params;
  for (auto& [n, p] : reg.params()) params.push_back(p);
  AdamW opt(params, ocfg);

  Tensor x = Tensor::from({train.n, D}, train.aggregated);
  std::vector<int> y(train.labels.begin(), train.labels.end());
  for (int e = 0; e < epochs; ++e) {
    opt.zero_grad();
    Tensor loss = cross_entropy_with_index(fc.forward(x), y);
    backward(loss);
    opt.step(lr);
  }

  NoGradGuard ng;
  Tensor logits = fc.forward(Tensor::from({test.n, D}, test.aggregated));
  int64_t c1 = 0, c5 = 0;
  for (int64_t i = 0; i < test.n; ++i) {
    const float* row = logits.data() + i * C;
    std::vector<int> order(C);
    for (int c = 0; c < C; ++c) order[(size_t)c] = c;
    std::sort(order.begin(), order.end(), [row](int a, int b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    int truth = test.labels[(size_t)i];
    if (order[0] == truth) ++c1;
    for (int j = 0; j < std::min(5, C); ++j)
      if (order[(size_t)j] == truth) {
        ++c5;
        break;
      }
  }
  return {(double)c1 / (double)test.n, (double)c5 / (double)test.n};
}

std::string EvalReport::to_json() const {
  json j;
  j["consistency_error"] = consistency_error;
  j["consistency"] = consistency;
  j["knn_top1"] = knn_top1;
  j["knn_top5"] = knn_top5;
  json r = json::object();
  for (auto& [k, v] : recall_at) r[std::to_string(k)] = v;
  j["recall_at"] = r;
  j["collapse_std"] = collapse_std;
  if (probe_top1 >= 0) {
    j["probe_top1"] = probe_top1;
    j["probe_top5"] = probe_top5;
  }
  return j.dump(2);
}

void save_feature_bank(const FeatureBank& bank, const std::filesystem::path& stem) {
  bank.validate();
  std::ofstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + stem.string() + ".bin");
  bin.write(reinterpret_cast<const char*>(bank.aggregated.data()),
            (std::streamsize)(bank.aggregated.size() * sizeof(float)));
  bin.write(reinterpret_cast<const char*>(bank.per_step.data()),
            (std::streamsize)(bank.per_step.size() * sizeof(float)));
  json j;
  j["format"] = "prednext-bank-v1";
  j["n"] = bank.n;
  j["dim"] = bank.dim;
  j["steps"] = bank.steps;
  j["ids"] = bank.ids;
  j["labels"] = bank.labels;
  std::ofstream side(stem.string() + ".json");
  side << j.dump(2) << "\n";
}

FeatureBank load_feature_bank(const std::filesystem::path& stem) {
  std::ifstream side(stem.string() + ".json");
  if (!side) throw std::runtime_error("cannot read " + stem.string() + ".json");
  json j = json::parse(side);
  if (j.value("format", "") != "prednext-bank-v1")
    throw std::runtime_error("unknown feature bank format");
  FeatureBank bank;
  bank.n = j["n"].get<int64_t>();
  bank.dim = j["dim"].get<int64_t>();
  bank.steps = j["steps"].get<int64_t>();
  bank.ids = j["ids"].get<std::vector<std::string>>();
  bank.labels = j["labels"].get<std::vector<int>>();
  bank.aggregated.resize((size_t)(bank.n * bank.dim));
  bank.per_step.resize((size_t)(bank.n * bank.steps * bank.dim));
  std::ifstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + stem.string() + ".bin");
  bin.read(reinterpret_cast<char*>(bank.aggregated.data()),
           (std::streamsize)(bank.aggregated.size() * sizeof(float)));
  bin.read(reinterpret_cast<char*>(bank.per_step.data()),
           (std::streamsize)(bank.per_step.size() * sizeof(float)));
  if (!bin) throw std::runtime_error("truncated feature bank " + stem.string());
  bank.validate();
  return bank;
}

}  // namespace prednext
