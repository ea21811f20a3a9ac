#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "drnet/rng.hpp"
#include "drnet/tensor.hpp"

namespace drnet {

// A named trainable tensor. logical_dims is the rank written to the DRT1
// container (vector parameters are rank-1 there even though every tensor is
// 4-D in memory).
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<std::uint32_t> logical_dims;
};

// Ordered registry of a model's parameters and persistent buffers
// (batchnorm running statistics). Names are unique across both lists.
class ParamStore {
 public:
  Tensor add_param(const std::string& name, Tensor t,
                   std::vector<std::uint32_t> logical_dims);
  Tensor add_buffer(const std::string& name, Tensor t,
                    std::vector<std::uint32_t> logical_dims);

  const std::vector<Parameter>& params() const { return params_; }
  const std::vector<Parameter>& buffers() const { return buffers_; }
  std::vector<Parameter>& params() { return params_; }
  std::vector<Parameter>& buffers() { return buffers_; }

  const Parameter* find(const std::string& name) const;
  std::int64_t parameter_count() const;

 private:
  void claim(const std::string& name);
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
  std::unordered_set<std::string> names_;
};

// Fan-in-scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Values are
// generated at float32 granularity so a fresh model round-trips the
// checkpoint container losslessly.
std::vector<real_t> fan_in_uniform(SplitMix64& rng, std::int64_t count,
                                   std::int64_t fan_in);

// Convolution layer with same-padding (k-1)/2, which is the only padding the
// architecture uses.
struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& prefix, int cin, int cout, int k,
         int stride, bool with_bias, SplitMix64& rng);

  Tensor forward(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, pad);
  }

  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias
  int stride = 1;
  int pad = 0;
};

struct BatchNorm2d {
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& store, const std::string& prefix, int channels);

  Tensor forward(const Tensor& x, bool train) const {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, train, eps,
                       momentum);
  }

  Tensor gamma, beta, running_mean, running_var;
  real_t eps = static_cast<real_t>(1e-5);
  real_t momentum = static_cast<real_t>(0.1);
};

}  // namespace drnet
