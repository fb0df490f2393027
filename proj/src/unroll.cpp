#include "varreg/unroll.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "varreg/error.hpp"
#include "varreg/sampler.hpp"

namespace varreg {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus inverse needs a positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t CascadeParams::slot(int cascade) const {
  return sharing == Sharing::Theta1 ? 0 : static_cast<std::size_t>(cascade);
}

double CascadeParams::theta(int cascade) const { return softplus(theta_raw.at(slot(cascade))); }

void CascadeParams::validate() const {
  if (rank != 2 && rank != 3) throw InvalidArgument("cascade rank must be 2 or 3");
  if (n_warp < 1 || n_iter < 1) throw InvalidArgument("n_warp and n_iter must be >= 1");
  const std::size_t expected = sharing == Sharing::Theta1 ? 1 : static_cast<std::size_t>(cascades());
  if (theta_raw.size() != expected || denoisers.size() != expected)
    throw InvalidArgument("parameter count does not match the sharing mode");
  for (double t : theta_raw) {
    if (!std::isfinite(t)) throw NumericalError("non-finite theta parameter");
    // softplus underflows to zero below about -745.
    if (!(softplus(t) > 0.0)) throw NumericalError("theta parameter underflows to zero");
  }
  for (const auto& d : denoisers)
    if (d.rank != rank || d.in_channels() != rank || d.out_channels() != rank || !d.residual)
      throw GridMismatch("denoisers must be residual rank -> rank networks");
  if (init_net && (init_net->rank != rank || init_net->in_channels() != 2 || init_net->out_channels() != rank))
    throw GridMismatch("init network must map 2 image channels to rank channels");
}

CascadeParams make_cascade_params(int rank, Sharing sharing, int n_warp, int n_iter, int hidden, bool learned_init,
                                  double theta0, std::uint64_t seed) {
  CascadeParams p;
  p.rank = rank;
  p.sharing = sharing;
  p.n_warp = n_warp;
  p.n_iter = n_iter;
  const std::size_t slots = sharing == Sharing::Theta1 ? 1 : static_cast<std::size_t>(n_warp * n_iter);
  p.theta_raw.assign(slots, softplus_inverse(theta0));
  for (std::size_t k = 0; k < slots; ++k) {
    ConvNet net = make_conv_net(rank, rank, hidden, rank, true);
    init_conv_net(net, 1.0, seed + 101 * (k + 1));
    p.denoisers.push_back(std::move(net));
  }
  if (learned_init) {
    ConvNet net = make_conv_net(rank, 2, hidden, rank, false);
    init_conv_net(net, 1.0, seed + 7);
    p.init_net = std::move(net);
  }
  p.validate();
  return p;
}

CascadeParams zero_params_like(const CascadeParams& p) {
  CascadeParams z = p;
  std::fill(z.theta_raw.begin(), z.theta_raw.end(), 0.0);
  for (auto& d : z.denoisers) d = zeros_like(d);
  if (z.init_net) z.init_net = zeros_like(*z.init_net);
  return z;
}

void for_each_tensor(CascadeParams& p,
                     const std::function<void(const std::string&, const std::vector<int>&, std::span<double>)>& fn) {
  fn("theta", {static_cast<int>(p.theta_raw.size())}, p.theta_raw);
  const auto visit_net = [&](const std::string& prefix, ConvNet& net) {
    const int taps = taps_for_rank(net.rank);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& layer = net.layers[l];
      const std::string base = prefix + ".conv" + std::to_string(l);
      fn(base + ".weight", {layer.out_channels, layer.in_channels, taps}, layer.weight);
      fn(base + ".bias", {layer.out_channels}, layer.bias);
    }
  };
  if (p.init_net) visit_net("init", *p.init_net);
  for (std::size_t k = 0; k < p.denoisers.size(); ++k) visit_net("gdl" + std::to_string(k), p.denoisers[k]);
}

std::vector<double> flatten(const CascadeParams& p) {
  std::vector<double> out;
  auto& mut = const_cast<CascadeParams&>(p);
  for_each_tensor(mut, [&](const std::string&, const std::vector<int>&, std::span<double> t) {
    out.insert(out.end(), t.begin(), t.end());
  });
  return out;
}

void unflatten(std::span<const double> flat, CascadeParams& p) {
  std::size_t pos = 0;
  for_each_tensor(p, [&](const std::string&, const std::vector<int>&, std::span<double> t) {
    if (pos + t.size() > flat.size()) throw GridMismatch("flat parameter vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + t.size()), t.begin());
    pos += t.size();
  });
  if (pos != flat.size()) throw GridMismatch("flat parameter vector too long");
}

ForwardResult vrnet_forward(const ScalarField& i0, const ScalarField& i1, const CascadeParams& params, int s,
                            const std::optional<VectorField>& initial, double eps) {
  params.validate();
  if (s != 1 && s != 2) throw InvalidArgument("s must be 1 or 2");
  require_same_shape(i0.grid(), i1.grid(), "vrnet_forward images");
  if (i0.grid().rank() != params.rank) throw GridMismatch("image rank does not match the network");

  Tape tape;
  tape.s = s;
  tape.eps = eps;
  tape.params = params;
  tape.i0 = i0;
  tape.i1 = i1;
  if (params.init_net) {
    tape.initial = to_vector_field(conv_net_apply(*params.init_net, stack_images(i0, i1), &tape.init));
  } else if (initial) {
    require_same_shape(initial->grid(), i0.grid(), "initial displacement");
    tape.initial = *initial;
  } else {
    tape.initial = VectorField(i0.grid());
  }

  VectorField v = tape.initial;
  int cascade = 0;
  for (int w = 0; w < params.n_warp; ++w) {
    WarpStep ws;
    ws.ldt = linearize(i0, i1, v);
    for (int k = 0; k < params.n_iter; ++k, ++cascade) {
      CascadeStep step;
      step.slot = params.slot(cascade);
      step.theta = params.theta(cascade);
      step.v_in = v;
      if (s == 1) {
        auto upd = icl_l1(ws.ldt, v, step.theta, eps);
        step.u = std::move(upd.u);
        // Keep the unprojected dual for the reverse pass.
        const ScalarField r = rho(ws.ldt, v);
        std::vector<double> zhat(r.size());
        for (std::size_t i = 0; i < zhat.size(); ++i) {
          double j2 = 0.0;
          for (int a = 0; a < params.rank; ++a) j2 += ws.ldt.gradient.component(a)[i] * ws.ldt.gradient.component(a)[i];
          zhat[i] = step.theta * r[i] / (j2 + eps);
        }
        step.zhat = ScalarField(i0.grid(), std::move(zhat));
      } else {
        step.u = icl_l2(ws.ldt, v, step.theta);
      }
      const ConvNet& net = params.denoisers[step.slot];
      step.v_out = to_vector_field(conv_net_apply(net, to_channels(step.u), &step.gdl));
      v = step.v_out;
      ws.steps.push_back(std::move(step));
    }
    tape.warps.push_back(std::move(ws));
  }
  tape.output = v;
  return ForwardResult{std::move(v), std::move(tape)};
}

namespace {

double mean_abs_residual(const ScalarField& warped, const ScalarField& i0) {
  double sum = 0.0;
  for (std::size_t i = 0; i < warped.size(); ++i) sum += std::abs(warped[i] - i0[i]);
  return sum / static_cast<double>(warped.size());
}

}  // namespace

double unsupervised_loss(const VectorField& u, const ScalarField& i0, const ScalarField& i1, double alpha) {
  require_same_shape(i0.grid(), i1.grid(), "loss images");
  require_same_shape(i0.grid(), u.grid(), "loss displacement");
  if (alpha < 0.0) throw InvalidArgument("alpha must be non-negative");
  const double n = static_cast<double>(i0.size());
  const double data = mean_abs_residual(warp_scalar(i1, u), i0);
  double smooth = 0.0;
  for (const auto& c : u.components()) {
    const VectorField g = image_gradient(c);
    for (const auto& ga : g.components())
      for (double x : ga.values()) smooth += x * x;
  }
  return data + alpha * smooth / n;
}

LossGradient unsupervised_loss_gradient(const VectorField& u, const ScalarField& i0, const ScalarField& i1,
                                        double alpha) {
  require_same_shape(i0.grid(), i1.grid(), "loss images");
  require_same_shape(i0.grid(), u.grid(), "loss displacement");
  if (alpha < 0.0) throw InvalidArgument("alpha must be non-negative");
  const double n = static_cast<double>(i0.size());
  const ScalarField warped = warp_scalar(i1, u);
  std::vector<double> g_warp(warped.size());
  double data = 0.0;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    const double r = warped[i] - i0[i];
    data += std::abs(r);
    g_warp[i] = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) / n;
  }
  const WarpAdjoint adj = warp_adjoint(i1, u, ScalarField(i0.grid(), std::move(g_warp)));

  double smooth = 0.0;
  std::vector<ScalarField> g_comps;
  for (int c = 0; c < u.rank(); ++c) {
    const VectorField g = image_gradient(u.component(c));
    std::vector<ScalarField> scaled;
    for (const auto& ga : g.components()) {
      std::vector<double> s(ga.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        smooth += ga[i] * ga[i];
        s[i] = 2.0 * alpha * ga[i] / n;
      }
      scaled.emplace_back(u.grid(), std::move(s));
    }
    const ScalarField back = image_gradient_adjoint(VectorField(std::move(scaled)));
    std::vector<double> total(back.size());
    const auto wd = adj.displacement.component(c).values();
    for (std::size_t i = 0; i < total.size(); ++i) total[i] = wd[i] + back[i];
    g_comps.emplace_back(u.grid(), std::move(total));
  }
  return LossGradient{data / n + alpha * smooth / n, VectorField(std::move(g_comps))};
}

namespace {

void add_into(ConvNet& acc, const ConvNet& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    auto& a = acc.layers[l];
    const auto& b = g.layers[l];
    for (std::size_t i = 0; i < a.weight.size(); ++i) a.weight[i] += b.weight[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
}

using Planes = std::vector<std::vector<double>>;

Planes planes_of(const VectorField& v) {
  Planes p;
  for (const auto& c : v.components()) p.emplace_back(c.values().begin(), c.values().end());
  return p;
}

VectorField field_of(const GridDesc& g, Planes p) {
  std::vector<ScalarField> comps;
  for (auto& c : p) comps.emplace_back(g, std::move(c));
  return VectorField(std::move(comps));
}

// Accumulated adjoints of one linearisation.
struct LinearizationAdjoint {
  Planes g_j;
  std::vector<double> g_r;
  Planes g_uref;
};

// Reverse of one closed-form data step. Returns the gradient with respect
// to v_in and adds the contributions for J, r, u_ref and theta.
Planes icl_backward(const WarpStep& ws, const CascadeStep& step, int s, double eps, const Planes& g_u,
                    LinearizationAdjoint& lin, double& g_theta) {
  const int rank = step.u.rank();
  const std::size_t n = step.u.grid().size();
  const double theta = step.theta;
  Planes g_v(static_cast<std::size_t>(rank), std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 3> j{}, dv{}, gu{};
    double j2 = 0.0, jgu = 0.0;
    for (int a = 0; a < rank; ++a) {
      const auto k = static_cast<std::size_t>(a);
      j[k] = ws.ldt.gradient.component(a)[i];
      dv[k] = step.v_in.component(a)[i] - ws.ldt.u_ref.component(a)[i];
      gu[k] = g_u[k][i];
      j2 += j[k] * j[k];
      jgu += j[k] * gu[k];
    }
    double rho = ws.ldt.residual[i];
    for (int a = 0; a < rank; ++a) rho += j[static_cast<std::size_t>(a)] * dv[static_cast<std::size_t>(a)];

    double g_rho = 0.0;
    std::array<double, 3> gj{};
    if (s == 2) {
      const double d = theta + j2;
      const double q = rho / d;
      const double g_q = -jgu;
      for (int a = 0; a < rank; ++a) gj[static_cast<std::size_t>(a)] -= q * gu[static_cast<std::size_t>(a)];
      g_rho = g_q / d;
      const double g_d = -g_q * q / d;
      g_theta += g_d;
      for (int a = 0; a < rank; ++a) gj[static_cast<std::size_t>(a)] += 2.0 * j[static_cast<std::size_t>(a)] * g_d;
    } else {
      const double zhat = (*step.zhat)[i];
      const bool saturated = std::abs(zhat) >= 1.0;
      const double z = saturated ? (zhat > 0.0 ? 1.0 : -1.0) : zhat;
      for (int a = 0; a < rank; ++a) gj[static_cast<std::size_t>(a)] -= z * gu[static_cast<std::size_t>(a)] / theta;
      g_theta += z * jgu / (theta * theta);
      if (!saturated) {
        const double e = j2 + eps;
        const double g_zhat = -jgu / theta;
        g_theta += g_zhat * rho / e;
        g_rho = g_zhat * theta / e;
        const double g_e = -g_zhat * zhat / e;
        for (int a = 0; a < rank; ++a) gj[static_cast<std::size_t>(a)] += 2.0 * j[static_cast<std::size_t>(a)] * g_e;
      }
    }
    lin.g_r[i] += g_rho;
    for (int a = 0; a < rank; ++a) {
      const auto k = static_cast<std::size_t>(a);
      gj[k] += g_rho * dv[k];
      lin.g_j[k][i] += gj[k];
      g_v[k][i] = gu[k] + g_rho * j[k];
      lin.g_uref[k][i] -= g_rho * j[k];
    }
  }
  return g_v;
}

}  // namespace

BackwardResult vrnet_backward(const Tape& tape, const ScalarField& i0, const ScalarField& i1, double alpha) {
  if (!(tape.i0.grid() == i0.grid()) || !(tape.i1.grid() == i1.grid()) ||
      !std::equal(i0.values().begin(), i0.values().end(), tape.i0.values().begin()) ||
      !std::equal(i1.values().begin(), i1.values().end(), tape.i1.values().begin()))
    throw InvalidArgument("stale tape: images differ from the recorded forward pass");
  if (tape.warps.empty()) throw InvalidArgument("stale tape: no recorded cascades");

  const CascadeParams& params = tape.params;
  const GridDesc& grid = i0.grid();
  const std::size_t n = grid.size();
  const auto rank = static_cast<std::size_t>(params.rank);

  BackwardResult out;
  out.grads = zero_params_like(params);
  LossGradient lg = unsupervised_loss_gradient(tape.output, i0, i1, alpha);
  out.loss = lg.loss;
  Planes g_v = planes_of(lg.g_u);

  std::vector<double> g_theta(params.theta_raw.size(), 0.0);
  for (std::size_t w = tape.warps.size(); w-- > 0;) {
    const WarpStep& ws = tape.warps[w];
    LinearizationAdjoint lin{Planes(rank, std::vector<double>(n, 0.0)), std::vector<double>(n, 0.0),
                             Planes(rank, std::vector<double>(n, 0.0))};
    for (std::size_t k = ws.steps.size(); k-- > 0;) {
      const CascadeStep& step = ws.steps[k];
      const ConvNet& net = params.denoisers[step.slot];
      Channels g_out(grid, params.rank);
      for (std::size_t a = 0; a < rank; ++a) std::copy(g_v[a].begin(), g_v[a].end(), g_out.channel(static_cast<int>(a)).begin());
      ConvGradients cg = conv_net_backward(net, step.gdl, g_out);
      add_into(out.grads.denoisers[step.slot], cg.params);
      Planes g_u(rank);
      for (std::size_t a = 0; a < rank; ++a) {
        const auto c = cg.input.channel(static_cast<int>(a));
        g_u[a].assign(c.begin(), c.end());
      }
      g_v = icl_backward(ws, step, tape.s, tape.eps, g_u, lin, g_theta[step.slot]);
    }
    // u_ref is the v entering this linearisation; r and J are samples of
    // I1 and grad I1 at x + u_ref.
    const WarpAdjoint adj_r = warp_adjoint(i1, ws.ldt.u_ref, ScalarField(grid, lin.g_r));
    const VectorField adj_j = sample_gradient_adjoint(i1, ws.ldt.u_ref, field_of(grid, lin.g_j));
    for (std::size_t a = 0; a < rank; ++a) {
      const auto wr = adj_r.displacement.component(static_cast<int>(a)).values();
      const auto wj = adj_j.component(static_cast<int>(a)).values();
      for (std::size_t i = 0; i < n; ++i) g_v[a][i] += lin.g_uref[a][i] + wr[i] + wj[i];
    }
  }

  for (std::size_t k = 0; k < g_theta.size(); ++k)
    out.grads.theta_raw[k] = g_theta[k] * sigmoid(params.theta_raw[k]);

  if (params.init_net) {
    Channels g_out(grid, params.rank);
    for (std::size_t a = 0; a < rank; ++a) std::copy(g_v[a].begin(), g_v[a].end(), g_out.channel(static_cast<int>(a)).begin());
    ConvGradients cg = conv_net_backward(*params.init_net, tape.init, g_out);
    add_into(*out.grads.init_net, cg.params);
  }
  return out;
}

double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  if (a == b) return 0.0;
  return std::abs(a - b) / scale;
}

GradCheckReport grad_check(const CascadeParams& params, const ScalarField& i0, const ScalarField& i1,
                           const GradCheckConfig& cfg) {
  const auto fwd = vrnet_forward(i0, i1, params, cfg.s, cfg.initial, cfg.eps);
  const auto bwd = vrnet_backward(fwd.tape, i0, i1, cfg.alpha);
  const std::vector<double> analytic = flatten(bwd.grads);

  // Group names per flat index.
  std::vector<std::string> group_of;
  CascadeParams shape = params;
  for_each_tensor(shape, [&](const std::string& name, const std::vector<int>&, std::span<double> t) {
    const std::string group = name.substr(0, name.find('.'));
    group_of.insert(group_of.end(), t.size(), group);
  });

  std::vector<double> base = flatten(params);
  CascadeParams probe = params;
  const auto loss_at = [&](const std::vector<double>& flat) {
    unflatten(flat, probe);
    const auto f = vrnet_forward(i0, i1, probe, cfg.s, cfg.initial, cfg.eps);
    return unsupervised_loss(f.u, i0, i1, cfg.alpha);
  };

  GradCheckReport report;
  report.count = base.size();
  std::map<std::string, GradCheckGroup> groups;
  std::size_t ok = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += cfg.step;
    minus[i] -= cfg.step;
    const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * cfg.step);
    const double err = relative_error(analytic[i], numeric);
    report.max_rel = std::max(report.max_rel, err);
    sum += err;
    if (err < 1e-3) ++ok;
    auto& g = groups[group_of[i]];
    g.name = group_of[i];
    g.count += 1;
    g.max_rel = std::max(g.max_rel, err);
    g.mean_rel += err;
  }
  if (!base.empty()) {
    report.mean_rel = sum / static_cast<double>(base.size());
    report.fraction_ok = static_cast<double>(ok) / static_cast<double>(base.size());
  }
  for (auto& [name, g] : groups) {
    g.mean_rel /= static_cast<double>(g.count);
    report.groups.push_back(g);
  }
  return report;
}

}  // namespace varreg
