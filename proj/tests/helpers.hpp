#pragma once

// Shared test utilities: finite-difference gradient checking and scalar
// double-precision oracles that reimplement the metrics independently.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "prednext/eval.hpp"
#include "prednext/tensor.hpp"

namespace testutil {

using prednext::FeatureBank;
using prednext::Tensor;

struct GradCheckStats {
  int checked = 0;
  int failed = 0;
  double max_rel = 0.0;
};

// Central finite differences on randomly sampled coordinates of `params`
// against the analytic gradients of f(). A coordinate passes when the
// relative error is <= rel_tol, or absolutely for near-zero gradients.
inline GradCheckStats gradcheck(const std::function<Tensor()>& f,
                                const std::vector<Tensor>& params,
                                int coords_per_param, uint64_t seed,
                                float eps = 5e-3f, double rel_tol = 1e-3,
                                double abs_floor = 1e-4) {
  for (auto p : params) p.zero_grad();
  Tensor loss = f();
  prednext::backward(loss);
  std::vector<std::vector<float>> analytic;
  for (const auto& p : params)
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<float>((size_t)p.numel(), 0.f));

  std::mt19937_64 rng(seed);
  GradCheckStats st;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (int c = 0; c < coords_per_param; ++c) {
      int64_t k = (int64_t)(rng() % (uint64_t)p.numel());
      float keep = p.data()[k];
      auto central_fd = [&](float h) {
        prednext::NoGradGuard ng;
        p.data()[k] = keep + h;
        double lp = f().item();
        p.data()[k] = keep - h;
        double lm = f().item();
        p.data()[k] = keep;
        return (lp - lm) / (2.0 * h);
      };
      double ad = analytic[pi][(size_t)k];
      ++st.checked;
      // Retry at shrinking step sizes: a coordinate whose FD step straddles a
      // piecewise-linear kink (e.g. a ReLU) disagrees at a large step but
      // converges once the step no longer crosses the kink, whereas a wrong
      // analytic gradient disagrees at every step size.
      bool ok = false;
      double worst_rel = 0.0;
      for (float h : {eps, eps / 4.f, eps / 16.f}) {
        double fd = central_fd(h);
        double diff = std::fabs(ad - fd);
        double denom = std::max(std::fabs(ad), std::fabs(fd));
        double rel = denom > 0 ? diff / denom : 0.0;
        worst_rel = std::max(worst_rel, rel);
        if (diff <= abs_floor || rel <= rel_tol) {
          ok = true;
          break;
        }
      }
      if (!ok) {
        ++st.failed;
        st.max_rel = std::max(st.max_rel, worst_rel);
      }
    }
  }
  return st;
}

inline double cos_d(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
}

inline std::vector<double> bank_row(const FeatureBank& b, int64_t i) {
  return {b.aggregated.begin() + i * b.dim, b.aggregated.begin() + (i + 1) * b.dim};
}

// Brute-force consistency error: every ordered timestep pair of every item.
inline std::pair<double, double> oracle_consistency(const std::vector<float>& ps,
                                                    int64_t N, int64_t T,
                                                    int64_t D) {
  double err = 0, cons = 0;
  for (int64_t i = 0; i < N; ++i)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t s = 0; s < T; ++s) {
        if (s == t) continue;
        std::vector<double> a(ps.begin() + (i * T + t) * D,
                              ps.begin() + (i * T + t + 1) * D);
        std::vector<double> b(ps.begin() + (i * T + s) * D,
                              ps.begin() + (i * T + s + 1) * D);
        double c = cos_d(a, b);
        err += 1.0 - c;
        cons += c;
      }
  double denom = (double)N * T * (T - 1);
  return {err / denom, cons / denom};
}

// Brute-force cosine KNN with the documented tie-breaks: neighbor ties by
// similarity desc then index asc; class ranking by votes desc, summed
// similarity desc, class id asc.
inline std::pair<double, double> oracle_knn(const FeatureBank& train,
                                            const FeatureBank& test, int k) {
  int64_t c1 = 0, c5 = 0;
  for (int64_t q = 0; q < test.n; ++q) {
    auto qa = bank_row(test, q);
    std::vector<std::pair<double, int64_t>> sims;
    for (int64_t i = 0; i < train.n; ++i)
      sims.emplace_back(cos_d(qa, bank_row(train, i)), i);
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::map<int, std::pair<int, double>> votes;  // class -> (count, sim sum)
    for (int j = 0; j < k; ++j) {
      int cls = train.labels[(size_t)sims[(size_t)j].second];
      votes[cls].first += 1;
      votes[cls].second += sims[(size_t)j].first;
    }
    std::vector<std::pair<int, std::pair<int, double>>> ranked(votes.begin(),
                                                               votes.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      if (a.second.second != b.second.second)
        return a.second.second > b.second.second;
      return a.first < b.first;
    });
    int truth = test.labels[(size_t)q];
    if (ranked[0].first == truth) ++c1;
    for (size_t j = 0; j < ranked.size() && j < 5; ++j)
      if (ranked[(size_t)j].first == truth) {
        ++c5;
        break;
      }
  }
  return {(double)c1 / (double)test.n, (double)c5 / (double)test.n};
}

// Brute-force Recall@K with ties by similarity desc then gallery id asc.
inline std::map<int, double> oracle_retrieval(const FeatureBank& query,
                                              const FeatureBank& gallery,
                                              const std::vector<int>& ks) {
  std::map<int, double> out;
  for (int k : ks) out[k] = 0;
  for (int64_t q = 0; q < query.n; ++q) {
    auto qa = bank_row(query, q);
    std::vector<std::pair<double, int64_t>> sims;
    for (int64_t i = 0; i < gallery.n; ++i)
      sims.emplace_back(cos_d(qa, bank_row(gallery, i)), i);
    std::sort(sims.begin(), sims.end(), [&gallery](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return gallery.ids[(size_t)a.second] < gallery.ids[(size_t)b.second];
    });
    int truth = query.labels[(size_t)q];
    for (int k : ks) {
      bool found = false;
      for (int j = 0; j < k; ++j)
        if (gallery.labels[(size_t)sims[(size_t)j].second] == truth) found = true;
      if (found) out[k] += 1;
    }
  }
  for (int k : ks) out[k] /= (double)query.n;
  return out;
}

inline FeatureBank random_bank(int64_t n, int64_t dim, int classes,
                               uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.f, 1.f);
  FeatureBank b;
  b.n = n;
  b.dim = dim;
  for (int64_t i = 0; i < n * dim; ++i) b.aggregated.push_back(nd(rng));
  for (int64_t i = 0; i < n; ++i) {
    b.labels.push_back((int)(i % classes));
    b.ids.push_back("v" + std::to_string(i));
  }
  return b;
}

inline Tensor random_tensor(prednext::Shape shape, uint64_t seed,
                            float scale = 1.f, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.f, scale);
  Tensor t(shape, 0.f, requires_grad);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = nd(rng);
  return t;
}

}  // namespace testutil
