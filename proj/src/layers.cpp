#include "drnet/layers.hpp"

#include <cmath>

namespace drnet {

void ParamStore::claim(const std::string& name) {
  if (name.empty()) throw ContractError("parameter name must be non-empty");
  if (!names_.insert(name).second) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
}

Tensor ParamStore::add_param(const std::string& name, Tensor t,
                             std::vector<std::uint32_t> logical_dims) {
  claim(name);
  t.set_requires_grad(true);
  t.mark_state();
  params_.push_back({name, t, std::move(logical_dims)});
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t,
                              std::vector<std::uint32_t> logical_dims) {
  claim(name);
  t.mark_state();
  buffers_.push_back({name, t, std::move(logical_dims)});
  return t;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  for (const auto& p : buffers_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::int64_t ParamStore::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += p.value.numel();
  return total;
}

std::vector<real_t> fan_in_uniform(SplitMix64& rng, std::int64_t count,
                                   std::int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<real_t> v(count);
  for (auto& x : v) {
    x = static_cast<real_t>(static_cast<float>(rng.uniform(-bound, bound)));
  }
  return v;
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, int cin, int cout,
               int k, int stride_, bool with_bias, SplitMix64& rng)
    : stride(stride_), pad((k - 1) / 2) {
  const std::int64_t fan_in = static_cast<std::int64_t>(cin) * k * k;
  weight = store.add_param(
      prefix + ".weight",
      Tensor::from_data({cout, cin, k, k},
                        fan_in_uniform(rng, static_cast<std::int64_t>(cout) * fan_in, fan_in)),
      {static_cast<std::uint32_t>(cout), static_cast<std::uint32_t>(cin),
       static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)});
  if (with_bias) {
    bias = store.add_param(prefix + ".bias",
                           Tensor::from_data({1, cout, 1, 1},
                                             fan_in_uniform(rng, cout, fan_in)),
                           {static_cast<std::uint32_t>(cout)});
  }
}

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& prefix,
                         int channels) {
  const auto c = static_cast<std::uint32_t>(channels);
  gamma = store.add_param(prefix + ".gamma", Tensor::full({1, channels, 1, 1}, 1),
                          {c});
  beta = store.add_param(prefix + ".beta", Tensor::zeros({1, channels, 1, 1}), {c});
  running_mean = store.add_buffer(prefix + ".running_mean",
                                  Tensor::zeros({1, channels, 1, 1}), {c});
  running_var = store.add_buffer(prefix + ".running_var",
                                 Tensor::full({1, channels, 1, 1}, 1), {c});
}

}  // namespace drnet
