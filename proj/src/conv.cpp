#include "varreg/conv.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "varreg/error.hpp"

namespace varreg {

Channels::Channels(const GridDesc& g, int channels)
    : grid(g), count(channels), data(g.size() * static_cast<std::size_t>(channels), 0.0) {}

std::span<double> Channels::channel(int c) {
  const std::size_t n = grid.size();
  return {data.data() + n * static_cast<std::size_t>(c), n};
}

std::span<const double> Channels::channel(int c) const {
  const std::size_t n = grid.size();
  return {data.data() + n * static_cast<std::size_t>(c), n};
}

Channels to_channels(const VectorField& v) {
  Channels out(v.grid(), v.rank());
  for (int c = 0; c < v.rank(); ++c) {
    const auto src = v.component(c).values();
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

Channels stack_images(const ScalarField& a, const ScalarField& b) {
  require_same_shape(a.grid(), b.grid(), "stack_images");
  Channels out(a.grid(), 2);
  std::copy(a.values().begin(), a.values().end(), out.channel(0).begin());
  std::copy(b.values().begin(), b.values().end(), out.channel(1).begin());
  return out;
}

VectorField to_vector_field(const Channels& c) {
  if (c.count != c.grid.rank()) throw GridMismatch("channel count must equal grid rank");
  std::vector<ScalarField> comps;
  for (int k = 0; k < c.count; ++k) {
    const auto s = c.channel(k);
    comps.emplace_back(c.grid, std::vector<double>(s.begin(), s.end()));
  }
  return VectorField(std::move(comps));
}

std::size_t ConvNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

int taps_for_rank(int rank) { return rank == 2 ? 9 : 27; }

ConvNet make_conv_net(int rank, int in_channels, int hidden, int out_channels, bool residual) {
  if (rank != 2 && rank != 3) throw InvalidArgument("conv net rank must be 2 or 3");
  if (in_channels < 1 || hidden < 1 || out_channels < 1) throw InvalidArgument("conv channel counts must be positive");
  if (residual && in_channels != out_channels)
    throw InvalidArgument("residual conv net needs equal input and output channels");
  ConvNet net;
  net.rank = rank;
  net.residual = residual;
  const int taps = taps_for_rank(rank);
  const int shape[4] = {in_channels, hidden, hidden, out_channels};
  for (int l = 0; l < 3; ++l) {
    ConvLayer layer;
    layer.in_channels = shape[l];
    layer.out_channels = shape[l + 1];
    layer.weight.assign(static_cast<std::size_t>(shape[l] * shape[l + 1] * taps), 0.0);
    layer.bias.assign(static_cast<std::size_t>(shape[l + 1]), 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

void init_conv_net(ConvNet& net, double gain, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int taps = taps_for_rank(net.rank);
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const double fan_in = static_cast<double>(layer.in_channels * taps);
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
    for (auto& w : layer.weight) w = dist(rng);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  auto& last = net.layers.back();
  std::fill(last.weight.begin(), last.weight.end(), 0.0);
  std::fill(last.bias.begin(), last.bias.end(), 0.0);
}

void randomize_conv_net(ConvNet& net, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& layer : net.layers) {
    for (auto& w : layer.weight) w = dist(rng);
    for (auto& b : layer.bias) b = dist(rng);
  }
}

ConvNet zeros_like(const ConvNet& net) {
  ConvNet out = net;
  for (auto& l : out.layers) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return out;
}

namespace {

struct Offset {
  int d0, d1, d2;
};

std::vector<Offset> tap_offsets(int rank) {
  std::vector<Offset> taps;
  if (rank == 2) {
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) taps.push_back({0, a, b});
  } else {
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c) taps.push_back({a, b, c});
  }
  return taps;
}

// out(x) = in(clamp(x + d))
void shift_clamped(const double* in, double* out, const std::array<int, 3>& ext, const Offset& d) {
  const int n2 = ext[2];
  for (int a = 0; a < ext[0]; ++a) {
    const int sa = std::clamp(a + d.d0, 0, ext[0] - 1);
    for (int b = 0; b < ext[1]; ++b) {
      const int sb = std::clamp(b + d.d1, 0, ext[1] - 1);
      const double* src = in + (static_cast<std::size_t>(sa) * ext[1] + sb) * n2;
      double* dst = out + (static_cast<std::size_t>(a) * ext[1] + b) * n2;
      if (d.d2 == 0) {
        std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(n2));
      } else if (d.d2 > 0) {
        for (int c = 0; c + 1 < n2; ++c) dst[c] = src[c + 1];
        dst[n2 - 1] = src[n2 - 1];
      } else {
        dst[0] = src[0];
        for (int c = 1; c < n2; ++c) dst[c] = src[c - 1];
      }
    }
  }
}

// acc(clamp(x + d)) += g(x)
void shift_clamped_adjoint(const double* g, double* acc, const std::array<int, 3>& ext, const Offset& d) {
  const int n2 = ext[2];
  for (int a = 0; a < ext[0]; ++a) {
    const int sa = std::clamp(a + d.d0, 0, ext[0] - 1);
    for (int b = 0; b < ext[1]; ++b) {
      const int sb = std::clamp(b + d.d1, 0, ext[1] - 1);
      double* dst = acc + (static_cast<std::size_t>(sa) * ext[1] + sb) * n2;
      const double* src = g + (static_cast<std::size_t>(a) * ext[1] + b) * n2;
      if (d.d2 == 0) {
        for (int c = 0; c < n2; ++c) dst[c] += src[c];
      } else if (d.d2 > 0) {
        for (int c = 0; c + 1 < n2; ++c) dst[c + 1] += src[c];
        dst[n2 - 1] += src[n2 - 1];
      } else {
        dst[0] += src[0];
        for (int c = 1; c < n2; ++c) dst[c - 1] += src[c];
      }
    }
  }
}

void check_layer(const ConvLayer& layer, int taps) {
  if (layer.weight.size() != static_cast<std::size_t>(layer.in_channels * layer.out_channels * taps) ||
      layer.bias.size() != static_cast<std::size_t>(layer.out_channels))
    throw GridMismatch("conv layer tensor sizes do not match its channel counts");
}

}  // namespace

void conv_layer_forward(const ConvLayer& layer, const Channels& in, Channels& out) {
  const int rank = in.grid.rank();
  const auto taps = tap_offsets(rank);
  const auto nt = static_cast<std::size_t>(taps.size());
  check_layer(layer, static_cast<int>(nt));
  if (in.count != layer.in_channels) throw GridMismatch("conv layer input channel mismatch");
  const std::size_t n = in.grid.size();
  const auto ext = in.grid.extents();
  out = Channels(in.grid, layer.out_channels);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    auto o = out.channel(oc);
    std::fill(o.begin(), o.end(), layer.bias[static_cast<std::size_t>(oc)]);
  }
  std::vector<double> shifted(nt * n);
  for (int ic = 0; ic < layer.in_channels; ++ic) {
    const double* src = in.channel(ic).data();
    for (std::size_t t = 0; t < nt; ++t) shift_clamped(src, shifted.data() + t * n, ext, taps[t]);
    for (int oc = 0; oc < layer.out_channels; ++oc) {
      double* o = out.channel(oc).data();
      const double* w = layer.weight.data() + (static_cast<std::size_t>(oc) * layer.in_channels + ic) * nt;
      for (std::size_t t = 0; t < nt; ++t) {
        const double wt = w[t];
        if (wt == 0.0) continue;
        const double* s = shifted.data() + t * n;
        for (std::size_t i = 0; i < n; ++i) o[i] += wt * s[i];
      }
    }
  }
}

namespace {

void conv_layer_backward(const ConvLayer& layer, const Channels& in, const Channels& g_pre, ConvLayer& g_layer,
                         Channels* g_in) {
  const auto taps = tap_offsets(in.grid.rank());
  const auto nt = static_cast<std::size_t>(taps.size());
  const std::size_t n = in.grid.size();
  const auto ext = in.grid.extents();
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    double s = 0.0;
    for (double g : g_pre.channel(oc)) s += g;
    g_layer.bias[static_cast<std::size_t>(oc)] += s;
  }
  if (g_in != nullptr) *g_in = Channels(in.grid, layer.in_channels);
  std::vector<double> shifted(nt * n);
  std::vector<double> acc(n);
  for (int ic = 0; ic < layer.in_channels; ++ic) {
    const double* src = in.channel(ic).data();
    for (std::size_t t = 0; t < nt; ++t) shift_clamped(src, shifted.data() + t * n, ext, taps[t]);
    for (int oc = 0; oc < layer.out_channels; ++oc) {
      const double* g = g_pre.channel(oc).data();
      double* gw = g_layer.weight.data() + (static_cast<std::size_t>(oc) * layer.in_channels + ic) * nt;
      for (std::size_t t = 0; t < nt; ++t) {
        const double* s = shifted.data() + t * n;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[i] * s[i];
        gw[t] += dot;
      }
    }
    if (g_in == nullptr) continue;
    double* gi = g_in->channel(ic).data();
    for (std::size_t t = 0; t < nt; ++t) {
      std::fill(acc.begin(), acc.end(), 0.0);
      bool any = false;
      for (int oc = 0; oc < layer.out_channels; ++oc) {
        const double wt = layer.weight[(static_cast<std::size_t>(oc) * layer.in_channels + ic) * nt + t];
        if (wt == 0.0) continue;
        any = true;
        const double* g = g_pre.channel(oc).data();
        for (std::size_t i = 0; i < n; ++i) acc[i] += wt * g[i];
      }
      if (any) shift_clamped_adjoint(acc.data(), gi, ext, taps[t]);
    }
  }
}

}  // namespace

Channels conv_net_apply(const ConvNet& net, const Channels& in, ConvTrace* trace) {
  if (net.layers.empty()) throw InvalidArgument("conv net has no layers");
  if (in.grid.rank() != net.rank) throw GridMismatch("conv net rank does not match input grid");
  if (in.count != net.in_channels()) throw GridMismatch("conv net input channel mismatch");
  if (trace != nullptr) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Channels x = in;
  Channels pre;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    conv_layer_forward(net.layers[l], x, pre);
    if (trace != nullptr) {
      trace->inputs.push_back(x);
      trace->pre.push_back(pre);
    }
    if (l + 1 < net.layers.size()) {
      x = pre;
      for (double& v : x.data) v = v > 0.0 ? v : 0.0;
    }
  }
  if (!net.residual) return pre;
  Channels out = in;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += net.residual_scale * pre.data[i];
  return out;
}

ConvGradients conv_net_backward(const ConvNet& net, const ConvTrace& trace, const Channels& g_out) {
  if (trace.pre.size() != net.layers.size()) throw InvalidArgument("conv trace does not match the network");
  ConvGradients grads{Channels(g_out.grid, net.in_channels()), zeros_like(net)};
  Channels g = g_out;
  if (net.residual) {
    for (double& v : g.data) v *= net.residual_scale;
  }
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (l + 1 < net.layers.size()) {
      const auto& pre = trace.pre[l].data;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!(pre[i] > 0.0)) g.data[i] = 0.0;
    }
    Channels g_in;
    conv_layer_backward(net.layers[l], trace.inputs[l], g, grads.params.layers[l], &g_in);
    g = std::move(g_in);
  }
  if (net.residual) {
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_out.data[i];
  }
  grads.input = std::move(g);
  return grads;
}

VectorField conv_forward(const VectorField& v_in, const ConvNet& net) {
  if (net.in_channels() != v_in.rank() || net.out_channels() != v_in.rank())
    throw GridMismatch("denoiser channels must equal the displacement rank");
  return to_vector_field(conv_net_apply(net, to_channels(v_in)));
}

}  // namespace varreg
