#include "pdmr/nn.hpp"

#include <algorithm>

namespace pdmr {

void NetworkSpec::validate() const
{
  if (n_blocks < 1) {
    throw std::invalid_argument("NetworkSpec: n_blocks must be >= 1");
  }
  if (channels < 1) {
    throw std::invalid_argument("NetworkSpec: channels must be >= 1");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("NetworkSpec: kernel must be odd");
  }
}

template <typename T>
TensorT<T>::TensorT(std::vector<long> dims)
    : shape(std::move(dims))
{
  long n = 1;
  for (long d : shape) {
    n *= d;
  }
  data.assign(static_cast<std::size_t>(n), T(0));
}

std::vector<std::pair<std::string, std::vector<long>>> parameter_layout(NetworkSpec const &spec)
{
  spec.validate();
  long const c = spec.channels;
  long const k = spec.kernel;
  std::vector<std::pair<std::string, std::vector<long>>> layout;
  layout.push_back({"head.weight", {c, 2, k, k}});
  layout.push_back({"head.bias", {c}});
  for (int i = 0; i < spec.n_blocks; ++i) {
    std::string const prefix = "block" + std::to_string(i);
    layout.push_back({prefix + ".conv1.weight", {c, c, k, k}});
    layout.push_back({prefix + ".conv1.bias", {c}});
    layout.push_back({prefix + ".conv2.weight", {c, c, k, k}});
    layout.push_back({prefix + ".conv2.bias", {c}});
  }
  layout.push_back({"tail.weight", {2, c, k, k}});
  layout.push_back({"tail.bias", {2}});
  return layout;
}

template <typename T>
TensorT<T> const &lookup(TensorMap<T> const &tensors, std::string const &name)
{
  auto const it = tensors.find(name);
  if (it == tensors.end()) {
    throw DataError("missing tensor '" + name + "'");
  }
  return it->second;
}

Tensor const &WeightStore::at(std::string const &name) const { return lookup(tensors, name); }

void WeightStore::validate() const
{
  for (auto const &[name, shape] : parameter_layout(spec)) {
    if (at(name).shape != shape) {
      throw DataError("tensor '" + name + "' has the wrong shape");
    }
  }
}

WeightStore WeightStore::zeros(NetworkSpec const &spec)
{
  WeightStore w;
  w.spec = spec;
  for (auto const &[name, shape] : parameter_layout(spec)) {
    w.tensors.emplace(name, Tensor(shape));
  }
  return w;
}

template <typename T>
FeatureMap<T> conv2d(FeatureMap<T> const &input, TensorT<T> const &weight, TensorT<T> const &bias)
{
  if (weight.shape.size() != 4 || weight.shape[1] != input.channels || weight.shape[2] != weight.shape[3]) {
    throw DimensionError("conv2d: weight shape does not match input channels");
  }
  long const c_out = weight.shape[0];
  long const c_in = weight.shape[1];
  long const k = weight.shape[2];
  if (k % 2 == 0) {
    throw DimensionError("conv2d: kernel must be odd");
  }
  if (bias.numel() != c_out) {
    throw DimensionError("conv2d: bias length must equal output channels");
  }
  long const h = input.height;
  long const w = input.width;
  long const pad = (k - 1) / 2;
  FeatureMap<T> out(c_out, h, w);
  parallel_for(c_out, [&](long co) {
    T *o = out.channel(co);
    std::fill(o, o + h * w, bias.data[static_cast<std::size_t>(co)]);
    for (long ci = 0; ci < c_in; ++ci) {
      T const *in = input.channel(ci);
      T const *wk = weight.data.data() + (co * c_in + ci) * k * k;
      for (long ky = 0; ky < k; ++ky) {
        long const dy = ky - pad;
        long const y0 = std::max(0L, -dy);
        long const y1 = std::min(h, h - dy);
        for (long kx = 0; kx < k; ++kx) {
          long const dx = kx - pad;
          long const x0 = std::max(0L, -dx);
          long const x1 = std::min(w, w - dx);
          T const wv = wk[ky * k + kx];
          for (long y = y0; y < y1; ++y) {
            T *orow = o + y * w;
            T const *irow = in + (y + dy) * w + dx;
            for (long x = x0; x < x1; ++x) {
              orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
FeatureMap<T> to_channels(Image<T> const &x)
{
  FeatureMap<T> f(2, x.n_pe, x.n_ro);
  T *re = f.channel(0);
  T *im = f.channel(1);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    re[i] = x.data[i].real();
    im[i] = x.data[i].imag();
  }
  return f;
}

template <typename T>
Image<T> from_channels(FeatureMap<T> const &f)
{
  if (f.channels != 2) {
    throw DimensionError("from_channels: expected 2 channels");
  }
  Image<T> x(f.height, f.width);
  T const *re = f.channel(0);
  T const *im = f.channel(1);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = {re[i], im[i]};
  }
  return x;
}

template <typename T>
Image<T> resnet_apply(Image<T> const &x, NetworkSpec const &spec, TensorMap<T> const &tensors, ForwardTape<T> *tape)
{
  spec.validate();
  T const rs = static_cast<T>(spec.residual_scale);
  FeatureMap<T> const input = to_channels(x);
  FeatureMap<T> h = conv2d(input, lookup(tensors, "head.weight"), lookup(tensors, "head.bias"));
  if (tape) {
    tape->input = input;
    tape->head = h;
    tape->pre_relu.clear();
    tape->relu.clear();
    tape->conv2.clear();
    tape->block_out.clear();
  }
  for (int i = 0; i < spec.n_blocks; ++i) {
    std::string const prefix = "block" + std::to_string(i);
    FeatureMap<T> a = conv2d(h, lookup(tensors, prefix + ".conv1.weight"), lookup(tensors, prefix + ".conv1.bias"));
    FeatureMap<T> r = a;
    for (auto &v : r.data) {
      v = std::max(v, T(0));
    }
    FeatureMap<T> c = conv2d(r, lookup(tensors, prefix + ".conv2.weight"), lookup(tensors, prefix + ".conv2.bias"));
    for (std::size_t j = 0; j < h.data.size(); ++j) {
      h.data[j] += rs * c.data[j];
    }
    if (tape) {
      tape->pre_relu.push_back(std::move(a));
      tape->relu.push_back(std::move(r));
      tape->conv2.push_back(std::move(c));
      tape->block_out.push_back(h);
    }
  }
  FeatureMap<T> t = conv2d(h, lookup(tensors, "tail.weight"), lookup(tensors, "tail.bias"));
  if (tape) {
    tape->tail = t;
  }
  for (std::size_t j = 0; j < t.data.size(); ++j) {
    t.data[j] += input.data[j];
  }
  return from_channels(t);
}

ComplexImage resnet_forward(ComplexImage const &x, WeightStore const &w)
{
  return resnet_apply(x, w.spec, w.tensors);
}

#define PDMR_INSTANTIATE(T)                                                                                  \
  template struct TensorT<T>;                                                                                \
  template TensorT<T> const &lookup<T>(TensorMap<T> const &, std::string const &);                          \
  template FeatureMap<T> conv2d<T>(FeatureMap<T> const &, TensorT<T> const &, TensorT<T> const &);           \
  template FeatureMap<T> to_channels<T>(Image<T> const &);                                                  \
  template Image<T> from_channels<T>(FeatureMap<T> const &);                                                \
  template Image<T> resnet_apply<T>(Image<T> const &, NetworkSpec const &, TensorMap<T> const &, ForwardTape<T> *);

PDMR_INSTANTIATE(float)
PDMR_INSTANTIATE(double)
#undef PDMR_INSTANTIATE

} // namespace pdmr
