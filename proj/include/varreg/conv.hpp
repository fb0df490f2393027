#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "varreg/grid.hpp"

namespace varreg {

// Planar multi-channel tensor on a grid: channel c occupies
// data[c * grid.size() .. (c + 1) * grid.size()).
struct Channels {
  GridDesc grid;
  int count = 0;
  std::vector<double> data;

  Channels() = default;
  Channels(const GridDesc& g, int channels);

  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;
};

Channels to_channels(const VectorField& v);
Channels stack_images(const ScalarField& a, const ScalarField& b);
VectorField to_vector_field(const Channels& c);

// 3^rank convolution with clamp-to-edge padding. Weights are laid out
// [out][in][tap] with taps enumerated row-major over offsets {-1, 0, 1}.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

// Plain stack of convolutions, rectified between layers and linear at the
// end. A residual net adds its input to the scaled output.
struct ConvNet {
  int rank = 2;
  std::vector<ConvLayer> layers;
  bool residual = true;
  double residual_scale = 1.0;

  int in_channels() const { return layers.front().in_channels; }
  int out_channels() const { return layers.back().out_channels; }
  std::size_t parameter_count() const;
};

// Weights of the learnable denoiser: residual, rank -> C -> C -> rank.
using ConvDenoiserWeights = ConvNet;

int taps_for_rank(int rank);

// in -> hidden -> hidden -> out with all weights and biases zero.
ConvNet make_conv_net(int rank, int in_channels, int hidden, int out_channels, bool residual);

// He-normal weights on the hidden layers scaled by `gain`; the last layer
// stays zero so a residual net starts as the identity.
void init_conv_net(ConvNet& net, double gain, std::uint64_t seed);

// Gaussian weights of the given standard deviation on every layer.
void randomize_conv_net(ConvNet& net, double stddev, std::uint64_t seed);

// Same layer shapes with every entry zero.
ConvNet zeros_like(const ConvNet& net);

// Activations kept for the reverse pass: layer inputs (already rectified)
// and layer pre-activations.
struct ConvTrace {
  std::vector<Channels> inputs;
  std::vector<Channels> pre;
};

Channels conv_net_apply(const ConvNet& net, const Channels& in, ConvTrace* trace = nullptr);

struct ConvGradients {
  Channels input;
  ConvNet params;
};

// Adjoint of conv_net_apply for the recorded trace. Parameter gradients are
// added into a fresh zero-initialised ConvNet.
ConvGradients conv_net_backward(const ConvNet& net, const ConvTrace& trace, const Channels& g_out);

// Denoising pass of a residual net on a displacement field.
VectorField conv_forward(const VectorField& v_in, const ConvNet& net);

// Single-layer convolution primitives, exposed for testing.
void conv_layer_forward(const ConvLayer& layer, const Channels& in, Channels& out);

}  // namespace varreg
