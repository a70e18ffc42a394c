#include "prednext/nn.hpp"

#include <cmath>

namespace prednext {

Tensor ParamRegistry::create(const std::string& name, Shape shape,
                             float init_std) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter: " + name);
  Tensor t(shape, 0.f, true);
  RngStream rng = substream(seed_, "init." + name);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.f, init_std);
  params_.emplace_back(name, t);
  by_name_[name] = t;
  return t;
}

Tensor ParamRegistry::create_const(const std::string& name, Shape shape,
                                   float fill) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter: " + name);
  Tensor t(shape, fill, true);
  params_.emplace_back(name, t);
  by_name_[name] = t;
  return t;
}

std::vector<float>* ParamRegistry::create_buffer(const std::string& name,
                                                 size_t n, float fill) {
  if (buffers_.count(name))
    throw std::invalid_argument("duplicate buffer: " + name);
  auto buf = std::make_shared<std::vector<float>>(n, fill);
  buffers_[name] = buf;
  return buf.get();
}

Tensor ParamRegistry::param(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

void ParamRegistry::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParamRegistry::copy_values_from(const ParamRegistry& src) {
  if (src.params_.size() != params_.size())
    throw std::invalid_argument("copy_values_from: parameter count mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].first != src.params_[i].first ||
        !same_shape(params_[i].second.shape(), src.params_[i].second.shape()))
      throw std::invalid_argument("copy_values_from: mismatch at " +
                                  params_[i].first);
    params_[i].second.values() = src.params_[i].second.values();
  }
  for (auto& [name, buf] : buffers_) {
    auto it = src.buffers_.find(name);
    if (it == src.buffers_.end() || it->second->size() != buf->size())
      throw std::invalid_argument("copy_values_from: buffer mismatch at " + name);
    *buf = *it->second;
  }
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in_, int out_,
               bool bias)
    : in(in_), out(out_) {
  W = reg.create(name + ".weight", {in_, out_}, std::sqrt(2.f / (float)in_));
  if (bias) b = reg.create_const(name + ".bias", {out_}, 0.f);
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, W);
  if (b.defined()) y = add_bias(y, b);
  return y;
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int in_ch,
               int out_ch, int kernel, int stride_, int pad_, bool bias)
    : stride(stride_), pad(pad_) {
  float std = std::sqrt(2.f / (float)(in_ch * kernel * kernel));
  W = reg.create(name + ".weight", {out_ch, in_ch, kernel, kernel}, std);
  if (bias) b = reg.create_const(name + ".bias", {out_ch}, 0.f);
}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, W, b, stride, pad);
}

BatchNorm::BatchNorm(ParamRegistry& reg, const std::string& name, int channels,
                     float eps_, float momentum_)
    : eps(eps_), momentum(momentum_) {
  gamma = reg.create_const(name + ".gamma", {channels}, 1.f);
  beta = reg.create_const(name + ".beta", {channels}, 0.f);
  running_mean = reg.create_buffer(name + ".running_mean", (size_t)channels, 0.f);
  running_var = reg.create_buffer(name + ".running_var", (size_t)channels, 1.f);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
  if (train) {
    std::vector<float> bm, bv;
    Tensor y = batchnorm_train(x, gamma, beta, eps, &bm, &bv);
    for (size_t c = 0; c < bm.size(); ++c) {
      (*running_mean)[c] = (1.f - momentum) * (*running_mean)[c] + momentum * bm[c];
      (*running_var)[c] = (1.f - momentum) * (*running_var)[c] + momentum * bv[c];
    }
    return y;
  }
  return batchnorm_eval(x, gamma, beta, *running_mean, *running_var, eps);
}

MlpHead::MlpHead(ParamRegistry& reg, const std::string& name, int in, int hidden,
                 int out) {
  fc1 = Linear(reg, name + ".fc1", in, hidden);
  bn = BatchNorm(reg, name + ".bn", hidden);
  fc2 = Linear(reg, name + ".fc2", hidden, out);
}

Tensor MlpHead::forward(const Tensor& x, bool train) {
  return fc2.forward(relu(bn.forward(fc1.forward(x), train)));
}

}  // namespace prednext
