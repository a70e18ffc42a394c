#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prednext/data.hpp"
#include "prednext/eval.hpp"
#include "prednext/prednext.hpp"
#include "prednext/ssl.hpp"

namespace py = pybind11;
using namespace prednext;

namespace {

Tensor tensor_2d(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D float array");
  std::vector<float> v(a.data(), a.data() + a.size());
  return Tensor::from({a.shape(0), a.shape(1)}, std::move(v));
}

py::array_t<float> array_from(const Tensor& t) {
  std::vector<ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

LIFConfig lif_cfg(float threshold, float tau, const std::string& reset,
                  const std::string& surrogate, float width) {
  LIFConfig cfg;
  cfg.threshold = threshold;
  cfg.decay_tau = tau;
  cfg.reset_mode =
      reset == "soft_subtract" ? ResetMode::soft_subtract : ResetMode::hard_to_zero;
  cfg.surrogate = surrogate == "sigmoid"      ? SurrogateKind::sigmoid
                  : surrogate == "triangular" ? SurrogateKind::triangular
                                              : SurrogateKind::atan;
  cfg.surrogate_width = width;
  cfg.validate();
  return cfg;
}

FeatureBank bank_from(const py::array_t<float, py::array::c_style | py::array::forcecast>& feats,
                      const std::vector<int>& labels) {
  if (feats.ndim() != 2) throw std::invalid_argument("features must be [N, D]");
  FeatureBank b;
  b.n = feats.shape(0);
  b.dim = feats.shape(1);
  b.aggregated.assign(feats.data(), feats.data() + feats.size());
  b.labels = labels;
  for (int64_t i = 0; i < b.n; ++i) b.ids.push_back(std::to_string(i));
  b.validate();
  return b;
}

}  // namespace

PYBIND11_MODULE(_prednext, m) {
  m.doc() = "Core numerics of the spiking-network video representation toolkit";

  m.def(
      "lif_step",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> state,
         py::array_t<float, py::array::c_style | py::array::forcecast> current,
         float threshold, float tau, const std::string& reset,
         const std::string& surrogate, float width) {
        NoGradGuard ng;
        auto cfg = lif_cfg(threshold, tau, reset, surrogate, width);
        auto [v, s] = lif_step(tensor_2d(state), tensor_2d(current), cfg);
        return py::make_tuple(array_from(v), array_from(s));
      },
      py::arg("state"), py::arg("current"), py::arg("threshold") = 1.f,
      py::arg("tau") = 2.f, py::arg("reset") = "hard_to_zero",
      py::arg("surrogate") = "atan", py::arg("width") = 2.f,
      "One leaky integrate-and-fire update; returns (membrane, spikes).");

  m.def(
      "info_nce",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> zi,
         py::array_t<float, py::array::c_style | py::array::forcecast> zj,
         float tau) {
        NoGradGuard ng;
        return info_nce_loss(tensor_2d(zi), tensor_2d(zj), std::nullopt, tau).item();
      },
      py::arg("z_i"), py::arg("z_j"), py::arg("tau") = 0.5f);

  m.def(
      "cosine_pred",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> p,
         py::array_t<float, py::array::c_style | py::array::forcecast> z) {
        NoGradGuard ng;
        return cosine_pred_loss(tensor_2d(p), tensor_2d(z)).item();
      },
      py::arg("p"), py::arg("z_target"));

  m.def(
      "barlow_twins",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> zi,
         py::array_t<float, py::array::c_style | py::array::forcecast> zj,
         float lambda_bt) {
        NoGradGuard ng;
        return barlow_twins_loss(tensor_2d(zi), tensor_2d(zj), lambda_bt).item();
      },
      py::arg("z_i"), py::arg("z_j"), py::arg("lambda_bt") = 5e-3f);

  m.def(
      "forced_consistency",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> steps,
         float beta) {
        NoGradGuard ng;
        if (steps.ndim() != 3)
          throw std::invalid_argument("steps must be [T, B, D]");
        std::vector<Tensor> ts;
        int64_t T = steps.shape(0), B = steps.shape(1), D = steps.shape(2);
        for (int64_t t = 0; t < T; ++t) {
          std::vector<float> v(steps.data() + t * B * D,
                               steps.data() + (t + 1) * B * D);
          ts.push_back(Tensor::from({B, D}, std::move(v)));
        }
        return forced_consistency_loss(ts, beta).item();
      },
      py::arg("steps"), py::arg("beta") = 0.8f);

  m.def(
      "consistency_error",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> per_step) {
        if (per_step.ndim() != 3)
          throw std::invalid_argument("per_step must be [N, T, D]");
        std::vector<float> v(per_step.data(), per_step.data() + per_step.size());
        auto r = consistency_error(v, per_step.shape(0), per_step.shape(1),
                                   per_step.shape(2));
        return py::make_tuple(r.error, r.consistency);
      },
      py::arg("per_step"),
      "Mean pairwise cosine distance over timesteps; returns (error, consistency).");

  m.def(
      "knn",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> train,
         const std::vector<int>& train_labels,
         py::array_t<float, py::array::c_style | py::array::forcecast> test,
         const std::vector<int>& test_labels, int k) {
        auto r = knn_eval(bank_from(train, train_labels),
                          bank_from(test, test_labels), k);
        return py::make_tuple(r.top1, r.top5);
      },
      py::arg("train"), py::arg("train_labels"), py::arg("test"),
      py::arg("test_labels"), py::arg("k") = 10);

  m.def(
      "retrieval",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> query,
         const std::vector<int>& query_labels,
         py::array_t<float, py::array::c_style | py::array::forcecast> gallery,
         const std::vector<int>& gallery_labels, const std::vector<int>& ks) {
        auto r = retrieval_eval(bank_from(query, query_labels),
                                bank_from(gallery, gallery_labels), ks);
        return r.recall_at;
      },
      py::arg("query"), py::arg("query_labels"), py::arg("gallery"),
      py::arg("gallery_labels"), py::arg("ks") = std::vector<int>{1, 5, 10});

  m.def(
      "collapse_metric",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> feats) {
        std::vector<int> labels((size_t)feats.shape(0), 0);
        return collapse_metric(bank_from(feats, labels));
      },
      py::arg("features"));

  m.def(
      "make_synth",
      [](int classes, int videos, int length, int height, int width,
         uint64_t seed) {
        VideoDataset ds = synth_dataset(classes, videos, length, height, width, seed);
        py::array_t<float> frames(
            {(ssize_t)videos, (ssize_t)length, (ssize_t)3, (ssize_t)height,
             (ssize_t)width});
        std::vector<int> labels;
        float* dst = frames.mutable_data();
        size_t per_video = (size_t)length * 3 * height * width;
        for (size_t v = 0; v < ds.size(); ++v) {
          const auto& f = ds.frames(v);
          std::copy(f.begin(), f.end(), dst + v * per_video);
          labels.push_back(ds.meta(v).label);
        }
        return py::make_tuple(frames, labels);
      },
      py::arg("classes") = 4, py::arg("videos") = 8, py::arg("length") = 16,
      py::arg("height") = 12, py::arg("width") = 12, py::arg("seed") = 0,
      "Synthetic motion-direction videos; returns (frames [V,L,3,H,W], labels).");
}
