// Command-line front end: registration, warping, metrics, synthetic data,
// training, gradient checks and flow visualisation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "varreg/conv.hpp"
#include "varreg/denoise.hpp"
#include "varreg/error.hpp"
#include "varreg/io.hpp"
#include "varreg/metrics.hpp"
#include "varreg/sampler.hpp"
#include "varreg/solver.hpp"
#include "varreg/synth.hpp"
#include "varreg/train.hpp"
#include "varreg/unroll.hpp"

namespace fs = std::filesystem;
using namespace varreg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Images and masks are written as PGM when the name says so, otherwise as
// field files.
void write_image(const std::string& path, const ScalarField& f) {
  if (has_suffix(path, ".pgm")) {
    write_pgm(path, f);
  } else {
    write_field(path, f);
  }
}

GridDesc grid_from(const std::vector<int>& dims) {
  if (dims.size() != 2 && dims.size() != 3) throw InvalidArgument("dims must have 2 or 3 entries");
  std::vector<double> spacing(dims.size(), 1.0);
  return GridDesc(dims, spacing);
}

// --- register ------------------------------------------------------------

struct RegisterArgs {
  std::string ref, flo, out, diag, weights;
  int s = 2;
  double theta = SolverConfig{}.theta;
  std::string denoiser = "tv";
  double tv_weight = SolverConfig::default_denoiser().tv_weight;
  int tv_iters = SolverConfig::default_denoiser().tv_iters;
  double sigma = 1.0;
  int nwarp = SolverConfig{}.n_warp;
  int niter = SolverConfig{}.n_iter;
  int levels = SolverConfig{}.levels;
  std::string init = "zeros";
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

int run_register(const RegisterArgs& a) {
  const ScalarField i0 = read_image(a.ref);
  const ScalarField i1 = read_image(a.flo);
  if (!i0.grid().same_shape(i1.grid())) throw GridMismatch("--ref and --flo have different dimensions");

  std::optional<CascadeParams> weights;
  if (!a.weights.empty()) weights = read_weights(a.weights);

  SolverConfig cfg;
  cfg.s = a.s;
  cfg.theta = a.theta;
  cfg.n_warp = a.nwarp;
  cfg.n_iter = a.niter;
  cfg.levels = a.levels;
  cfg.seed = a.seed;
  DenoiserSpec& d = cfg.denoiser;
  d.tv_weight = a.tv_weight;
  d.tv_iters = a.tv_iters;
  d.sigma = a.sigma;
  if (a.denoiser == "tv") {
    d.kind = DenoiserKind::TV;
  } else if (a.denoiser == "gauss") {
    d.kind = DenoiserKind::Gaussian;
  } else if (a.denoiser == "id") {
    d.kind = DenoiserKind::Identity;
  } else {
    d.kind = DenoiserKind::Conv;
    if (!weights) throw InvalidArgument("--denoiser conv needs --weights");
    d.conv = std::make_shared<const ConvNet>(weights->denoisers.front());
  }
  if (a.init == "zeros") {
    cfg.init.kind = InitKind::Zeros;
  } else if (a.init == "noise") {
    cfg.init.kind = InitKind::Noise;
    cfg.init.noise_sigma = a.noise_sigma;
  } else {
    cfg.init.kind = InitKind::Learned;
    if (!weights || !weights->init_net) throw InvalidArgument("--init learned needs --weights with an init network");
    cfg.init.learned = std::make_shared<const ConvNet>(*weights->init_net);
  }
  if (weights && weights->rank != i0.grid().rank()) throw GridMismatch("weights rank does not match the images");

  const RegistrationResult res = register_images(i0, i1, cfg);
  write_field(a.out, res.u);
  if (!a.diag.empty()) {
    std::string csv = "level,warp,iter,splitting_energy,data_energy,max_u,max_v\n";
    for (const auto& r : res.diagnostics.records)
      csv += std::to_string(r.level) + "," + std::to_string(r.warp) + "," + std::to_string(r.iter) + "," +
             fmt(r.splitting_energy) + "," + fmt(r.data_energy) + "," + fmt(r.max_u) + "," + fmt(r.max_v) + "\n";
    write_file_atomic(a.diag, csv);
  }
  return kOk;
}

// --- warp ----------------------------------------------------------------

int run_warp(const std::string& image, const std::string& field, const std::string& out, bool nearest) {
  const ScalarField img = read_image(image);
  const VectorField u = read_vector_field(field);
  if (!img.grid().same_shape(u.grid())) throw GridMismatch("--image and --field have different dimensions");
  // The field file carries the spacing; keep the image's own grid.
  const VectorField u_img = [&] {
    std::vector<ScalarField> comps;
    for (const auto& c : u.components()) comps.emplace_back(img.grid(), std::vector<double>(c.values().begin(), c.values().end()));
    return VectorField(std::move(comps));
  }();
  write_image(out, nearest ? warp_mask_nearest(img, u_img) : warp_scalar(img, u_img));
  return kOk;
}

// --- metrics -------------------------------------------------------------

struct MetricsArgs {
  std::string ref_mask, warped_mask, field, out, ref_image, warped_image;
  std::vector<double> spacing;
};

int run_metrics(const MetricsArgs& a) {
  const ScalarField m0 = read_image(a.ref_mask);
  const ScalarField m1 = read_image(a.warped_mask);
  if (!m0.grid().same_shape(m1.grid())) throw GridMismatch("mask dimensions differ");
  const VectorField u = read_vector_field(a.field);
  if (!u.grid().same_shape(m0.grid())) throw GridMismatch("field dimensions differ from the masks");
  const int rank = m0.grid().rank();
  std::vector<double> spacing = a.spacing;
  if (spacing.empty())
    for (int ax = 0; ax < rank; ++ax) spacing.push_back(m0.grid().spacing(ax));
  if (static_cast<int>(spacing.size()) != rank) throw InvalidArgument("--spacing needs one entry per axis");

  std::string csv = "metric,label,value\n";
  for (int label : foreground_labels(m0, m1)) {
    csv += "dice," + std::to_string(label) + "," + fmt(dice(m0, m1, label)) + "\n";
    csv += "hd," + std::to_string(label) + "," + fmt(hausdorff(m0, m1, label, spacing)) + "\n";
  }
  const JacobianReport jac = jacobian_report(u);
  csv += "neg_jacobian,all," + fmt(jac.neg_pct) + "\n";
  csv += "mean_grad_jacobian,all," + fmt(jac.mean_grad_j) + "\n";
  if (!a.ref_image.empty() || !a.warped_image.empty()) {
    if (a.ref_image.empty() || a.warped_image.empty())
      throw InvalidArgument("--ref-image and --warped-image must be given together");
    const ScalarField r = read_image(a.ref_image);
    const ScalarField w = read_image(a.warped_image);
    if (!r.grid().same_shape(w.grid())) throw GridMismatch("image dimensions differ");
    csv += "mae,all," + fmt(intensity_mae(r, w)) + "\n";
  }
  write_file_atomic(a.out, csv);
  return kOk;
}

// --- synth ---------------------------------------------------------------

void write_pair(const fs::path& dir, const SynthPair& p) {
  fs::create_directories(dir);
  write_field((dir / "ref.vrf").string(), p.i0);
  write_field((dir / "flo.vrf").string(), p.i1);
  write_field((dir / "ref_mask.vrf").string(), p.mask0);
  write_field((dir / "flo_mask.vrf").string(), p.mask1);
  write_field((dir / "u_true.vrf").string(), p.u_true);
  if (p.i0.grid().rank() == 2) {
    write_pgm((dir / "ref.pgm").string(), p.i0);
    write_pgm((dir / "flo.pgm").string(), p.i1);
  }
}

int run_synth(const std::vector<int>& dims, double max_disp, double smoothness, std::uint64_t seed, int count,
              const std::string& outdir) {
  const GridDesc grid = grid_from(dims);
  SynthConfig cfg;
  cfg.max_disp = max_disp;
  cfg.smoothness_sigma = smoothness;
  if (count < 1) throw InvalidArgument("--count must be >= 1");
  for (int i = 0; i < count; ++i) {
    const SynthPair p = make_pair(grid, cfg, seed + static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "pair_%04d", i);
    write_pair(count == 1 ? fs::path(outdir) : fs::path(outdir) / name, p);
  }
  return kOk;
}

// --- train ---------------------------------------------------------------

std::vector<ImagePair> load_pairs(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw FormatError("--data is not a directory: " + dir);
  std::vector<fs::path> dirs;
  if (fs::exists(root / "ref.vrf")) {
    dirs.push_back(root);
  } else {
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && fs::exists(e.path() / "ref.vrf")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw FormatError("no ref.vrf/flo.vrf pairs found under " + dir);
  std::vector<ImagePair> pairs;
  for (const auto& d : dirs) {
    ImagePair p{read_scalar_field((d / "ref.vrf").string()), read_scalar_field((d / "flo.vrf").string())};
    if (!p.i0.grid().same_shape(p.i1.grid()) || !p.i0.grid().same_shape(pairs.empty() ? p.i0.grid() : pairs.front().i0.grid()))
      throw GridMismatch("training pairs must share one grid: " + d.string());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

struct TrainArgs {
  std::string data, out, log;
  std::string sharing = "theta2";
  std::string init = "learned";
  TrainConfig cfg;
  int hidden = 16;
  double theta0 = SolverConfig{}.theta;
};

int run_train(TrainArgs a) {
  const std::vector<ImagePair> pairs = load_pairs(a.data);
  a.cfg.init = a.init == "learned" ? NetInit::Learned : a.init == "zeros" ? NetInit::Zeros : NetInit::Noise;
  const CascadeParams init = make_cascade_params(pairs.front().i0.grid().rank(),
                                                 a.sharing == "theta1" ? Sharing::Theta1 : Sharing::Theta2,
                                                 a.cfg.n_warp, a.cfg.n_iter, a.hidden, a.cfg.init == NetInit::Learned,
                                                 a.theta0, a.cfg.seed);
  const TrainResult res = train(pairs, init, a.cfg);
  write_weights(a.out, res.params);
  if (!a.log.empty()) {
    std::string csv = "iteration,loss\n";
    for (std::size_t i = 0; i < res.loss_history.size(); ++i)
      csv += std::to_string(i) + "," + fmt(res.loss_history[i]) + "\n";
    write_file_atomic(a.log, csv);
  }
  return kOk;
}

// --- gradcheck -----------------------------------------------------------

int run_gradcheck(const std::vector<int>& dims, int s, std::uint64_t seed, const std::string& sharing, int nwarp,
                  int niter, int hidden) {
  if (dims.size() != 2) throw InvalidArgument("gradcheck takes 2D --dims");
  const GridDesc grid = grid_from(dims);
  const ScalarField i0 = make_smooth_image(grid, 2.0, seed * 2 + 1);
  const ScalarField i1 = make_smooth_image(grid, 2.0, seed * 2 + 2);
  CascadeParams p = make_cascade_params(2, sharing == "theta1" ? Sharing::Theta1 : Sharing::Theta2, nwarp, niter,
                                        hidden, true, 0.05, seed);
  for (std::size_t k = 0; k < p.denoisers.size(); ++k) randomize_conv_net(p.denoisers[k], 0.1, seed + 31 * k + 1);
  randomize_conv_net(*p.init_net, 0.1, seed + 17);
  GradCheckConfig cfg;
  cfg.s = s;
  const GradCheckReport r = grad_check(p, i0, i1, cfg);
  std::cout << "parameters " << r.count << "\n";
  for (const auto& g : r.groups)
    std::cout << "group " << g.name << " count " << g.count << " max_rel " << fmt(g.max_rel) << " mean_rel "
              << fmt(g.mean_rel) << "\n";
  std::cout << "max_rel " << fmt(r.max_rel) << "\nmean_rel " << fmt(r.mean_rel) << "\nfraction_below_1e-3 "
            << fmt(r.fraction_ok) << "\n";
  return r.max_rel < 1e-3 ? kOk : kNumerical;
}

// --- dispatch ------------------------------------------------------------

int fail(int code, const std::string& msg) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "varreg: " << line << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational image registration with unrolled variable splitting"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  const auto one_of = [](std::vector<std::string> v) { return CLI::IsMember(std::move(v)); };
  const auto s_values = CLI::IsMember(std::vector<int>{1, 2});

  RegisterArgs ra;
  auto* reg = app.add_subcommand("register", "register --flo onto --ref and write the displacement field");
  reg->add_option("--ref", ra.ref, "reference image (PGM or field file)")->required();
  reg->add_option("--flo", ra.flo, "floating image (PGM or field file)")->required();
  reg->add_option("--s", ra.s, "data term exponent")->check(s_values);
  reg->add_option("--theta", ra.theta, "splitting penalty")->check(CLI::PositiveNumber);
  reg->add_option("--denoiser", ra.denoiser)->check(one_of({"tv", "gauss", "conv", "id"}));
  reg->add_option("--tv-weight", ra.tv_weight)->check(CLI::NonNegativeNumber);
  reg->add_option("--tv-iters", ra.tv_iters)->check(CLI::PositiveNumber);
  reg->add_option("--sigma", ra.sigma, "Gaussian denoiser width")->check(CLI::PositiveNumber);
  reg->add_option("--weights", ra.weights, "weights file for the conv denoiser or learned init");
  reg->add_option("--nwarp", ra.nwarp)->check(CLI::PositiveNumber);
  reg->add_option("--niter", ra.niter)->check(CLI::PositiveNumber);
  reg->add_option("--levels", ra.levels)->check(CLI::PositiveNumber);
  reg->add_option("--init", ra.init)->check(one_of({"zeros", "noise", "learned"}));
  reg->add_option("--noise-sigma", ra.noise_sigma)->check(CLI::PositiveNumber);
  reg->add_option("--seed", ra.seed);
  reg->add_option("--out", ra.out, "output field file")->required();
  reg->add_option("--diag", ra.diag, "per-iteration diagnostics CSV");

  std::string w_image, w_field, w_out;
  bool w_nearest = false;
  auto* warp = app.add_subcommand("warp", "resample an image or mask by a displacement field");
  warp->add_option("--image", w_image)->required();
  warp->add_option("--field", w_field)->required();
  warp->add_option("--out", w_out, "output (.pgm for PGM, otherwise field file)")->required();
  warp->add_flag("--nearest", w_nearest, "nearest-neighbour sampling for label maps");

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "overlap, surface distance and Jacobian statistics as CSV");
  met->add_option("--ref-mask", ma.ref_mask)->required();
  met->add_option("--warped-mask", ma.warped_mask)->required();
  met->add_option("--field", ma.field)->required();
  met->add_option("--spacing", ma.spacing, "voxel spacing in mm, e.g. 1.25,1.25")->delimiter(',');
  met->add_option("--ref-image", ma.ref_image, "reference image for the intensity MAE row");
  met->add_option("--warped-image", ma.warped_image, "warped image for the intensity MAE row");
  met->add_option("--out", ma.out)->required();

  std::vector<int> s_dims;
  double s_max_disp = 2.0, s_smooth = 0.0;
  std::uint64_t s_seed = 0;
  int s_count = 1;
  std::string s_outdir;
  auto* syn = app.add_subcommand("synth", "write synthetic image pairs with ground-truth fields");
  syn->add_option("--dims", s_dims, "grid size, e.g. 64,64")->delimiter(',')->required();
  syn->add_option("--max-disp", s_max_disp)->check(CLI::NonNegativeNumber);
  syn->add_option("--smoothness", s_smooth, "deformation smoothing sigma (0: half the smallest dim)")
      ->check(CLI::NonNegativeNumber);
  syn->add_option("--seed", s_seed);
  syn->add_option("--count", s_count, "number of pairs; more than one writes pair_NNNN subdirectories")
      ->check(CLI::PositiveNumber);
  syn->add_option("--outdir", s_outdir)->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train the unrolled network on synthetic pairs");
  tr->add_option("--data", ta.data, "directory written by synth")->required();
  tr->add_option("--s", ta.cfg.s)->check(s_values);
  tr->add_option("--nwarp", ta.cfg.n_warp)->check(CLI::PositiveNumber);
  tr->add_option("--niter", ta.cfg.n_iter)->check(CLI::PositiveNumber);
  tr->add_option("--sharing", ta.sharing)->check(one_of({"theta1", "theta2"}));
  tr->add_option("--alpha", ta.cfg.alpha)->check(CLI::NonNegativeNumber);
  tr->add_option("--lr", ta.cfg.lr)->check(CLI::PositiveNumber);
  tr->add_option("--iters", ta.cfg.iterations)->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", ta.cfg.batch)->check(CLI::PositiveNumber);
  tr->add_option("--seed", ta.cfg.seed);
  tr->add_option("--init", ta.init)->check(one_of({"learned", "zeros", "noise"}));
  tr->add_option("--hidden", ta.hidden, "hidden channels per conv layer")->check(CLI::PositiveNumber);
  tr->add_option("--theta0", ta.theta0, "initial theta of every cascade")->check(CLI::PositiveNumber);
  tr->add_option("--out", ta.out, "weights file")->required();
  tr->add_option("--log", ta.log, "loss history CSV");

  std::vector<int> g_dims{16, 16};
  int g_s = 2, g_nwarp = 2, g_niter = 1, g_hidden = 8;
  std::uint64_t g_seed = 0;
  std::string g_sharing = "theta2";
  auto* gc = app.add_subcommand("gradcheck", "compare reverse-mode gradients with central differences");
  gc->add_option("--dims", g_dims)->delimiter(',');
  gc->add_option("--s", g_s)->check(s_values);
  gc->add_option("--seed", g_seed);
  gc->add_option("--sharing", g_sharing)->check(one_of({"theta1", "theta2"}));
  gc->add_option("--nwarp", g_nwarp)->check(CLI::PositiveNumber);
  gc->add_option("--niter", g_niter)->check(CLI::PositiveNumber);
  gc->add_option("--hidden", g_hidden)->check(CLI::PositiveNumber);

  std::string f_field, f_out;
  auto* fv = app.add_subcommand("flowviz", "render a 2D field as an HSV colour image (P6)");
  fv->add_option("--field", f_field)->required();
  fv->add_option("--out", f_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, e.what());
  }

  try {
    if (*reg) return run_register(ra);
    if (*warp) return run_warp(w_image, w_field, w_out, w_nearest);
    if (*met) return run_metrics(ma);
    if (*syn) return run_synth(s_dims, s_max_disp, s_smooth, s_seed, s_count, s_outdir);
    if (*tr) return run_train(ta);
    if (*gc) return run_gradcheck(g_dims, g_s, g_seed, g_sharing, g_nwarp, g_niter, g_hidden);
    if (*fv) {
      write_flow_ppm(f_out, read_vector_field(f_field));
      return kOk;
    }
  } catch (const NumericalError& e) {
    return fail(kNumerical, e.what());
  } catch (const FormatError& e) {
    return fail(kData, e.what());
  } catch (const GridMismatch& e) {
    return fail(kData, e.what());
  } catch (const InvalidArgument& e) {
    return fail(kUsage, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kData, e.what());
  } catch (const std::exception& e) {
    return fail(kData, e.what());
  }
  return kUsage;
}
