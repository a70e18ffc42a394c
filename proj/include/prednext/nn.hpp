#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prednext/ops.hpp"
#include "prednext/rng.hpp"
#include "prednext/tensor.hpp"

namespace prednext {

// Flat registry of named parameters and named persistent buffers (running
// statistics). Parameter init is seeded from `init.<name>` sub-streams, so the
// initial values of a given module depend only on its name and the seed, not
// on construction order.
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed) : seed_(seed) {}

  Tensor create(const std::string& name, Shape shape, float init_std);
  Tensor create_const(const std::string& name, Shape shape, float fill);
  std::vector<float>* create_buffer(const std::string& name, size_t n,
                                    float fill);

  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }
  const std::map<std::string, std::shared_ptr<std::vector<float>>>& buffers()
      const {
    return buffers_;
  }
  Tensor param(const std::string& name) const;
  uint64_t seed() const { return seed_; }

  void zero_grads();
  // Copies every parameter and buffer value from `src` (shapes must mirror).
  void copy_values_from(const ParamRegistry& src);

 private:
  uint64_t seed_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, Tensor> by_name_;
  std::map<std::string, std::shared_ptr<std::vector<float>>> buffers_;
};

struct Linear {
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in, int out,
         bool bias = true);
  Tensor forward(const Tensor& x) const;
  Tensor W, b;
  int in = 0, out = 0;
};

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch,
         int kernel, int stride, int pad, bool bias = false);
  Tensor forward(const Tensor& x) const;
  Tensor W, b;
  int stride = 1, pad = 0;
};

struct BatchNorm {
  BatchNorm() = default;
  BatchNorm(ParamRegistry& reg, const std::string& name, int channels,
            float eps = 1e-5f, float momentum = 0.1f);
  Tensor forward(const Tensor& x, bool train);
  Tensor gamma, beta;
  std::vector<float>* running_mean = nullptr;
  std::vector<float>* running_var = nullptr;
  float eps = 1e-5f, momentum = 0.1f;
};

// Linear -> BN -> ReLU -> Linear. The shape shared by projection heads and
// the temporal prediction heads.
struct MlpHead {
  MlpHead() = default;
  MlpHead(ParamRegistry& reg, const std::string& name, int in, int hidden,
          int out);
  Tensor forward(const Tensor& x, bool train);
  Linear fc1, fc2;
  BatchNorm bn;
};

}  // namespace prednext
