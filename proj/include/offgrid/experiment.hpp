#pragma once

// Run directories for the command-line tool: resolved configs, baseline and
// optimized patterns, reconstructions, PSNR tables and a hashed manifest.
// Needs OpenSSL (link offgrid_experiment).

#include "offgrid/offgrid.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <tbb/parallel_for.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::vector<int> grid{64, 64};
  double subsampling_factor = 3.3;
  std::vector<std::string> phantoms{"square", "shepp-logan"};
  std::vector<std::string> recons{"tikhonov", "l1"};
  double square_side_fraction = 0.5;

  struct Tikhonov {
    std::optional<double> lambda;  // unset: 1e-3 * N
    int iters = 30;
  } tikhonov;

  struct L1 {
    std::optional<double> lambda;  // unset: lambda_scale * ||Psi^H A^H y||_inf at the VDS pattern
    double lambda_scale = 1e-3;
    int iters = 60;
    int levels = 3;
    double step_safety = 0.9;
    int opnorm_iters = 30;
    std::uint64_t opnorm_seed = 0;
    bool accelerated = true;
  } l1;

  struct Seeds {
    std::uint64_t lf = 1;
    std::uint64_t vds = 2;
  } seeds;

  struct Osp {
    std::string training = "per-phantom";  // or "joint": one pattern per reconstructor, K = all phantoms
    double noise_sigma = 0.0;
    int noise_samples = 1;
    std::uint64_t noise_seed = 0;
  } osp;

  LbfgsConfig lbfgs;

  struct Optimize {
    std::string recon = "l1";
    std::string phantom = "shepp-logan";
  } optimize;

  struct FdCheck {
    int side = 16;
    int points = 77;
    int seeds = 10;
    int coords = 20;
    std::vector<double> steps{1e-4, 1e-6};
    int implicit_side = 8;
    int implicit_iters = 200;
  } fdcheck;

  ImageGrid image_grid() const { return grid.size() == 1 ? ImageGrid{grid[0]} : ImageGrid{grid[0], grid[1]}; }
  Eigen::Index budget() const { return budget_from_factor(image_grid(), subsampling_factor); }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix))
  {
    if (!j_.is_object()) {
      throw ConfigError("config field '" + where() + "': expected an object");
    }
  }

  ~Reader() noexcept(false)
  {
    if (std::uncaught_exceptions() > 0) {
      return;
    }
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError("config field '" + name(key) + "': unknown field");
      }
    }
  }

  template <class T>
  void get(const std::string& key, T& out)
  {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::optional<double>>) {
        out = v.is_null() ? std::nullopt : std::optional<double>(number(key, v));
      } else if constexpr (std::is_same_v<T, double>) {
        out = number(key, v);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) {
          throw ConfigError("config field '" + name(key) + "': expected a boolean");
        }
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
          throw ConfigError("config field '" + name(key) + "': expected " +
                            (std::is_unsigned_v<T> ? "a nonnegative integer" : "an integer"));
        }
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) {
          throw ConfigError("config field '" + name(key) + "': expected a string");
        }
        out = v.get<std::string>();
      } else {
        out = v.get<T>();
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field '" + name(key) + "': wrong type");
    }
  }

  Reader sub(const std::string& key)
  {
    seen_.insert(key);
    static const Json empty = Json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  std::string where() const { return prefix_.empty() ? "<root>" : prefix_; }

  double number(const std::string& key, const Json& v) const
  {
    if (!v.is_number()) {
      throw ConfigError("config field '" + name(key) + "': expected a number");
    }
    return v.get<double>();
  }

  const Json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& field, const std::string& what)
{
  if (!ok) {
    throw ConfigError("config field '" + field + "': " + what);
  }
}

inline bool one_of(const std::string& s, std::initializer_list<const char*> options)
{
  return std::any_of(options.begin(), options.end(), [&](const char* o) { return s == o; });
}

}  // namespace detail

inline void validate(const RunConfig& c)
{
  using detail::require;
  require(c.grid.size() == 1 || c.grid.size() == 2, "grid", "needs 1 or 2 side lengths");
  for (int s : c.grid) {
    require(s > 0 && s % 2 == 0, "grid", "side lengths must be positive and even");
  }
  require(c.subsampling_factor >= 1.0, "subsampling_factor", "must be >= 1");
  require(!c.phantoms.empty(), "phantoms", "must not be empty");
  for (const auto& p : c.phantoms) {
    require(detail::one_of(p, {"square", "shepp-logan"}), "phantoms", "unknown phantom '" + p + "'");
    require(p != "shepp-logan" || c.grid.size() == 2, "phantoms", "shepp-logan needs a 2-D grid");
  }
  require(!c.recons.empty(), "recons", "must not be empty");
  for (const auto& r : c.recons) {
    require(detail::one_of(r, {"tikhonov", "l1"}), "recons", "unknown reconstructor '" + r + "'");
  }
  require(c.square_side_fraction > 0.0 && c.square_side_fraction <= 1.0, "square_side_fraction", "must lie in (0, 1]");
  require(!c.tikhonov.lambda || *c.tikhonov.lambda > 0.0, "tikhonov.lambda", "must be positive");
  require(c.tikhonov.iters >= 1, "tikhonov.iters", "must be >= 1");
  require(!c.l1.lambda || *c.l1.lambda > 0.0, "l1.lambda", "must be positive");
  require(c.l1.lambda_scale > 0.0, "l1.lambda_scale", "must be positive");
  require(c.l1.iters >= 1, "l1.iters", "must be >= 1");
  require(c.l1.levels >= 1, "l1.levels", "must be >= 1");
  require(c.l1.step_safety > 0.0 && c.l1.step_safety <= 1.0, "l1.step_safety", "must lie in (0, 1]");
  require(c.l1.opnorm_iters >= 1, "l1.opnorm_iters", "must be >= 1");
  require(detail::one_of(c.osp.training, {"per-phantom", "joint"}), "osp.training",
          "must be 'per-phantom' or 'joint'");
  require(c.osp.noise_sigma >= 0.0, "osp.noise_sigma", "must be >= 0");
  require(c.osp.noise_samples >= 1, "osp.noise_samples", "must be >= 1");
  require(c.lbfgs.memory >= 1, "lbfgs.memory", "must be >= 1");
  require(c.lbfgs.max_iters >= 0, "lbfgs.max_iters", "must be >= 0");
  require(c.lbfgs.grad_tol > 0.0, "lbfgs.grad_tol", "must be positive");
  require(c.lbfgs.armijo_c1 > 0.0 && c.lbfgs.armijo_c1 < 1.0, "lbfgs.armijo_c1", "must lie in (0, 1)");
  require(c.lbfgs.shrink > 0.0 && c.lbfgs.shrink < 1.0, "lbfgs.shrink", "must lie in (0, 1)");
  require(c.lbfgs.max_line_search_trials >= 1, "lbfgs.max_line_search_trials", "must be >= 1");
  require(c.lbfgs.initial_step > 0.0, "lbfgs.initial_step", "must be positive");
  require(detail::one_of(c.optimize.recon, {"tikhonov", "l1"}), "optimize.recon", "must be 'tikhonov' or 'l1'");
  require(detail::one_of(c.optimize.phantom, {"square", "shepp-logan"}), "optimize.phantom",
          "must be 'square' or 'shepp-logan'");
  require(c.fdcheck.side > 0 && c.fdcheck.side % 2 == 0, "fdcheck.side", "must be positive and even");
  require(c.fdcheck.points >= 1, "fdcheck.points", "must be >= 1");
  require(c.fdcheck.seeds >= 1, "fdcheck.seeds", "must be >= 1");
  require(c.fdcheck.coords >= 1 && c.fdcheck.coords <= 2 * c.fdcheck.points, "fdcheck.coords",
          "must lie in [1, 2 * points]");
  require(!c.fdcheck.steps.empty(), "fdcheck.steps", "must not be empty");
  for (double h : c.fdcheck.steps) {
    require(h > 0.0, "fdcheck.steps", "must be positive");
  }
  require(c.fdcheck.implicit_side > 0 && c.fdcheck.implicit_side % 2 == 0, "fdcheck.implicit_side",
          "must be positive and even");
  require(c.fdcheck.implicit_iters >= 1, "fdcheck.implicit_iters", "must be >= 1");
}

inline Json to_json(const RunConfig& c)
{
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{
      {"grid", c.grid},
      {"subsampling_factor", c.subsampling_factor},
      {"phantoms", c.phantoms},
      {"recons", c.recons},
      {"square_side_fraction", c.square_side_fraction},
      {"tikhonov", {{"lambda", opt(c.tikhonov.lambda)}, {"iters", c.tikhonov.iters}}},
      {"l1",
       {{"lambda", opt(c.l1.lambda)},
        {"lambda_scale", c.l1.lambda_scale},
        {"iters", c.l1.iters},
        {"levels", c.l1.levels},
        {"step_safety", c.l1.step_safety},
        {"opnorm_iters", c.l1.opnorm_iters},
        {"opnorm_seed", c.l1.opnorm_seed},
        {"accelerated", c.l1.accelerated}}},
      {"seeds", {{"lf", c.seeds.lf}, {"vds", c.seeds.vds}}},
      {"osp",
       {{"training", c.osp.training},
        {"noise_sigma", c.osp.noise_sigma},
        {"noise_samples", c.osp.noise_samples},
        {"noise_seed", c.osp.noise_seed}}},
      {"lbfgs",
       {{"memory", c.lbfgs.memory},
        {"max_iters", c.lbfgs.max_iters},
        {"grad_tol", c.lbfgs.grad_tol},
        {"armijo_c1", c.lbfgs.armijo_c1},
        {"shrink", c.lbfgs.shrink},
        {"max_line_search_trials", c.lbfgs.max_line_search_trials},
        {"initial_step", c.lbfgs.initial_step}}},
      {"optimize", {{"recon", c.optimize.recon}, {"phantom", c.optimize.phantom}}},
      {"fdcheck",
       {{"side", c.fdcheck.side},
        {"points", c.fdcheck.points},
        {"seeds", c.fdcheck.seeds},
        {"coords", c.fdcheck.coords},
        {"steps", c.fdcheck.steps},
        {"implicit_side", c.fdcheck.implicit_side},
        {"implicit_iters", c.fdcheck.implicit_iters}}},
  };
}

/// Overlays `j` on the defaults. Unknown or mistyped fields raise a
/// ConfigError naming the field.
inline RunConfig run_config_from_json(const Json& j)
{
  RunConfig c;
  {
    detail::Reader r(j, "");
    r.get("grid", c.grid);
    r.get("subsampling_factor", c.subsampling_factor);
    r.get("phantoms", c.phantoms);
    r.get("recons", c.recons);
    r.get("square_side_fraction", c.square_side_fraction);
    {
      auto t = r.sub("tikhonov");
      t.get("lambda", c.tikhonov.lambda);
      t.get("iters", c.tikhonov.iters);
    }
    {
      auto l = r.sub("l1");
      l.get("lambda", c.l1.lambda);
      l.get("lambda_scale", c.l1.lambda_scale);
      l.get("iters", c.l1.iters);
      l.get("levels", c.l1.levels);
      l.get("step_safety", c.l1.step_safety);
      l.get("opnorm_iters", c.l1.opnorm_iters);
      l.get("opnorm_seed", c.l1.opnorm_seed);
      l.get("accelerated", c.l1.accelerated);
    }
    {
      auto s = r.sub("seeds");
      s.get("lf", c.seeds.lf);
      s.get("vds", c.seeds.vds);
    }
    {
      auto o = r.sub("osp");
      o.get("training", c.osp.training);
      o.get("noise_sigma", c.osp.noise_sigma);
      o.get("noise_samples", c.osp.noise_samples);
      o.get("noise_seed", c.osp.noise_seed);
    }
    {
      auto b = r.sub("lbfgs");
      b.get("memory", c.lbfgs.memory);
      b.get("max_iters", c.lbfgs.max_iters);
      b.get("grad_tol", c.lbfgs.grad_tol);
      b.get("armijo_c1", c.lbfgs.armijo_c1);
      b.get("shrink", c.lbfgs.shrink);
      b.get("max_line_search_trials", c.lbfgs.max_line_search_trials);
      b.get("initial_step", c.lbfgs.initial_step);
    }
    {
      auto o = r.sub("optimize");
      o.get("recon", c.optimize.recon);
      o.get("phantom", c.optimize.phantom);
    }
    {
      auto f = r.sub("fdcheck");
      f.get("side", c.fdcheck.side);
      f.get("points", c.fdcheck.points);
      f.get("seeds", c.fdcheck.seeds);
      f.get("coords", c.fdcheck.coords);
      f.get("steps", c.fdcheck.steps);
      f.get("implicit_side", c.fdcheck.implicit_side);
      f.get("implicit_iters", c.fdcheck.implicit_iters);
    }
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const fs::path& path)
{
  const std::string text = detail::read_all(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view bytes)
{
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

/// Output tree of one command. Files are registered with their inputs and
/// seeds; finish() writes provenance.json and manifest.txt.
class RunDir {
 public:
  RunDir(fs::path root, const RunConfig& cfg, const std::string& command) : root_(std::move(root))
  {
    if (fs::exists(root_) && !fs::is_empty(root_)) {
      throw IoError("output directory " + root_.string() + " is not empty");
    }
    fs::create_directories(root_);
    provenance_["command"] = command;
    write("config.json", to_json(cfg).dump(2) + "\n", {}, {});
  }

  const fs::path& root() const { return root_; }

  void write(const std::string& rel, const std::string& bytes, std::vector<std::string> inputs, Json seeds)
  {
    fs::create_directories((root_ / rel).parent_path());
    detail::write_all(root_ / rel, bytes);
    Json entry{{"inputs", std::move(inputs)}};
    if (!seeds.is_null()) {
      entry["seeds"] = std::move(seeds);
    }
    artifacts_[rel] = std::move(entry);
  }

  Json& provenance() { return provenance_; }

  void finish()
  {
    Json arts = Json::object();
    for (const auto& [k, v] : artifacts_) {
      arts[k] = v;
    }
    provenance_["artifacts"] = std::move(arts);
    detail::write_all(root_ / "provenance.json", provenance_.dump(2) + "\n");

    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root_)) {
      if (e.is_regular_file()) {
        const std::string rel = fs::relative(e.path(), root_).generic_string();
        if (rel != "manifest.txt") {
          files.push_back(rel);
        }
      }
    }
    std::sort(files.begin(), files.end());
    std::string manifest;
    for (const auto& f : files) {
      manifest += sha256_hex(detail::read_all(root_ / f)) + "  " + f + "\n";
    }
    detail::write_all(root_ / "manifest.txt", manifest);
  }

 private:
  fs::path root_;
  Json provenance_ = Json::object();
  std::map<std::string, Json> artifacts_;
};

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

inline ComplexImage make_phantom(const RunConfig& c, const std::string& name)
{
  if (name == "square") {
    return phantom_square(c.image_grid(), c.square_side_fraction);
  }
  return phantom_shepp_logan(c.image_grid());
}

struct Baselines {
  SamplingPattern lf;
  SamplingPattern vds;
};

inline Baselines make_baselines(const RunConfig& c)
{
  const auto m = c.budget();
  return {lf_pattern(c.image_grid(), m, c.seeds.lf), vds_uniform(c.image_grid(), m, c.seeds.vds)};
}

/// Reconstructor settings per (recon, phantom). The l1 weight, when not set
/// explicitly, is resolved once from the VDS baseline and then held fixed for
/// every pattern, so optimized and baseline patterns share one reconstructor.
class Reconstructors {
 public:
  Reconstructors(const RunConfig& c, const SamplingPattern& vds) : cfg_(c), frame_(c.image_grid(), c.l1.levels)
  {
    const NuftOperator op(vds, c.image_grid());
    double joint = 0.0;
    for (const auto& ph : c.phantoms) {
      double lam = 0.0;
      if (c.l1.lambda) {
        lam = *c.l1.lambda;
      } else {
        const KSpaceVector y = op.forward(make_phantom(c, ph));
        lam = c.l1.lambda_scale * kernels::max_abs(frame_.analyze(op.adjoint(y.data())));
      }
      l1_lambda_[ph] = lam;
      joint += lam / static_cast<double>(c.phantoms.size());
    }
    if (c.osp.training == "joint") {
      for (auto& [ph, lam] : l1_lambda_) {
        lam = joint;
      }
    }
  }

  ReconConfig get(const std::string& recon, const std::string& phantom) const
  {
    if (recon == "tikhonov") {
      return ReconConfig::tikhonov(cfg_.tikhonov.lambda.value_or(default_tikhonov_lambda(cfg_.image_grid())),
                                   cfg_.tikhonov.iters);
    }
    ReconConfig r = ReconConfig::l1(frame_, l1_lambda_.at(phantom), cfg_.l1.iters);
    r.step_safety = cfg_.l1.step_safety;
    r.opnorm_iters = cfg_.l1.opnorm_iters;
    r.opnorm_seed = cfg_.l1.opnorm_seed;
    r.accelerated = cfg_.l1.accelerated;
    return r;
  }

  Json describe() const
  {
    Json j = Json::object();
    for (const auto& ph : cfg_.phantoms) {
      j[ph] = {{"tikhonov", get("tikhonov", ph).lambda}, {"l1", l1_lambda_.at(ph)}};
    }
    return j;
  }

 private:
  RunConfig cfg_;
  WaveletFrame frame_;
  std::map<std::string, double> l1_lambda_;
};

/// Energy of the on-grid DFT of (xhat - x), split into the central box
/// |k_j| < dims_j / 4 (a quarter of k-space) and its complement. Normalized
/// so low + high = ||xhat - x||^2.
struct BandErrors {
  double low = 0.0;
  double high = 0.0;
};

inline BandErrors band_errors(const ComplexImage& xhat, const ComplexImage& x)
{
  if (!(xhat.grid() == x.grid())) {
    throw std::invalid_argument("band_errors: grid mismatch");
  }
  const ImageGrid& grid = x.grid();
  const int d = grid.rank();
  CVector e = kernels::axpby(1.0, xhat.data(), -1.0, x.data());
  // Separable DFT, one axis at a time, over centered frequencies k.
  std::vector<int> ext(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    ext[static_cast<std::size_t>(j)] = grid.extent(j);
  }
  for (int axis = 0; axis < d; ++axis) {
    const int len = ext[static_cast<std::size_t>(axis)];
    const int stride = axis == d - 1 ? 1 : ext.back();
    const int lines = static_cast<int>(grid.size()) / len;
    CVector out(e.size());
    for (int line = 0; line < lines; ++line) {
      const int base = axis == d - 1 ? line * len : line;
      for (int k = 0; k < len; ++k) {
        const int kc = k - len / 2;
        Complex acc(0.0, 0.0);
        for (int n = 0; n < len; ++n) {
          const int pn = n - len / 2;
          acc += e[base + n * stride] * std::polar(1.0, -kTwoPi * kc * pn / len);
        }
        out[base + k * stride] = acc;
      }
    }
    e = std::move(out);
  }
  BandErrors b;
  for (Eigen::Index n = 0; n < e.size(); ++n) {
    const GridPosition k = grid_position(grid, n);
    bool low = true;
    for (int j = 0; j < d; ++j) {
      low = low && std::abs(k[j]) < grid.extent(j) / 4;
    }
    (low ? b.low : b.high) += std::norm(e[n]) / static_cast<double>(grid.size());
  }
  return b;
}

namespace detail {

/// Shortest decimal form that reads back to the same double.
inline std::string fmt(double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

}  // namespace detail

struct OspRun {
  SamplingPattern pattern;
  LbfgsResult result;
};

inline OspRun run_osp(const RunConfig& c, const Reconstructors& recons, const SamplingPattern& init,
                      const std::string& recon, const std::vector<std::string>& phantoms)
{
  OptimProblem problem;
  for (const auto& ph : phantoms) {
    problem.training_images.push_back(make_phantom(c, ph));
  }
  problem.recon = recons.get(recon, phantoms.front());
  problem.noise_sigma = c.osp.noise_sigma;
  problem.noise_samples = c.osp.noise_samples;
  problem.noise_seed = c.osp.noise_seed;
  auto res = minimize_lbfgs(problem, init, c.lbfgs);
  const auto& h = res.history;
  detail::log_line("osp " + recon + " [" + phantoms.front() + (phantoms.size() > 1 ? ", ..." : "") +
                   "]: " + std::to_string(h.size() - 1) + " iterations, loss " + detail::fmt(h.front().loss) +
                   " -> " + detail::fmt(h.back().loss) + " (" + res.stop_reason + ")");
  SamplingPattern p = res.pattern;
  return {std::move(p), std::move(res)};
}

inline Json osp_summary(const LbfgsResult& r)
{
  return {{"iterations", r.history.size() - 1},
          {"evaluations", r.evaluations},
          {"initial_loss", r.history.front().loss},
          {"final_loss", r.history.back().loss},
          {"stop_reason", r.stop_reason},
          {"line_search_failed", r.line_search_failed}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_generate(const RunConfig& c, const fs::path& out)
{
  RunDir run(out, c, "generate");
  const auto b = make_baselines(c);
  run.write("patterns/LF.csv", pattern_csv(b.lf), {}, {{"lf", c.seeds.lf}});
  run.write("patterns/VDS.csv", pattern_csv(b.vds), {}, {{"vds", c.seeds.vds}});
  run.provenance()["budget"] = c.budget();
  run.provenance()["lf_radius"] = lf_radius(c.image_grid(), c.budget());
  run.finish();
}

/// OSP for optimize.recon / optimize.phantom, from `init` or the VDS baseline.
inline void cmd_optimize(const RunConfig& c, const fs::path& out, const std::optional<fs::path>& init_path = {})
{
  RunDir run(out, c, "optimize");
  const auto b = make_baselines(c);
  const Reconstructors recons(c, b.vds);
  SamplingPattern init = b.vds;
  std::vector<std::string> inputs;
  if (init_path) {
    init = load_pattern(*init_path);
    inputs.push_back(init_path->string());
  }
  const auto& r = c.optimize.recon;
  const auto& ph = c.optimize.phantom;
  const auto osp = run_osp(c, recons, init, r, {ph});
  const std::string stem = "OSP_" + r + "_" + ph;
  const Json seeds = init_path ? Json(nullptr) : Json{{"vds", c.seeds.vds}};
  run.write("patterns/" + stem + ".csv", pattern_csv(osp.pattern), inputs, seeds);
  run.write("logs/" + stem + ".csv", history_csv(osp.result.history), inputs, seeds);
  run.provenance()["lambda"] = recons.describe();
  run.provenance()["osp"] = {{stem, osp_summary(osp.result)}};
  run.finish();
}

struct CellResult {
  std::string pattern;
  std::string recon;
  std::string phantom;
  double psnr_db = 0.0;
  BandErrors bands;
  ComplexImage image;
};

inline CellResult evaluate_cell(const RunConfig& c, const Reconstructors& recons, const SamplingPattern& pattern,
                                const std::string& name, const std::string& recon, const std::string& phantom)
{
  const ComplexImage x = make_phantom(c, phantom);
  const NuftOperator op(pattern, c.image_grid());
  const KSpaceVector y = op.forward(x);
  ComplexImage xhat = reconstruct(op, y, recons.get(recon, phantom)).image;
  return {name, recon, phantom, psnr(xhat, x), band_errors(xhat, x), std::move(xhat)};
}

inline std::string psnr_csv(const std::vector<CellResult>& cells)
{
  std::string out = "pattern,recon,phantom,psnr_db\n";
  for (const auto& r : cells) {
    out += r.pattern + "," + r.recon + "," + r.phantom + "," + detail::fmt(r.psnr_db) + "\n";
  }
  return out;
}

inline void write_cell_images(RunDir& run, const std::vector<CellResult>& cells, const std::string& dir,
                              const std::vector<std::string>& extra_inputs)
{
  for (const auto& r : cells) {
    const std::string stem = dir + "/" + r.pattern + "_" + r.recon + "_" + r.phantom;
    std::vector<std::string> inputs = extra_inputs;
    inputs.push_back("images/" + r.phantom + ".ksimg");
    run.write(stem + ".ksimg", image_bytes(r.image), inputs, {});
    run.write(stem + ".pgm", pgm_bytes(r.image, 1.0), {stem + ".ksimg"}, {});
  }
}

inline void write_phantoms(RunDir& run, const RunConfig& c)
{
  for (const auto& ph : c.phantoms) {
    const auto x = make_phantom(c, ph);
    run.write("images/" + ph + ".ksimg", image_bytes(x), {}, {});
    run.write("images/" + ph + ".pgm", pgm_bytes(x, 1.0), {"images/" + ph + ".ksimg"}, {});
  }
}

/// Reconstructs every configured phantom with every configured reconstructor
/// from the pattern in `pattern_path`.
inline std::vector<CellResult> cmd_reconstruct(const RunConfig& c, const fs::path& out, const fs::path& pattern_path)
{
  if (!fs::exists(pattern_path)) {
    throw IoError("pattern file " + pattern_path.string() + " does not exist");
  }
  const SamplingPattern pattern = load_pattern(pattern_path);
  if (pattern.rank() != c.image_grid().rank()) {
    throw LengthMismatchError("pattern file " + pattern_path.string() + ": dimension does not match the grid");
  }
  RunDir run(out, c, "reconstruct");
  const auto b = make_baselines(c);
  const Reconstructors recons(c, b.vds);
  write_phantoms(run, c);
  const std::string name = pattern_path.stem().string();
  std::vector<CellResult> cells;
  for (const auto& r : c.recons) {
    for (const auto& ph : c.phantoms) {
      cells.push_back(evaluate_cell(c, recons, pattern, name, r, ph));
    }
  }
  write_cell_images(run, cells, "recon", {pattern_path.string()});
  run.write("psnr.csv", psnr_csv(cells), {pattern_path.string()}, {});
  run.provenance()["lambda"] = recons.describe();
  run.finish();
  return cells;
}

/// The full comparison: {LF, VDS, OSP} x recons x phantoms.
inline std::vector<CellResult> cmd_evaluate(const RunConfig& c, const fs::path& out)
{
  RunDir run(out, c, "evaluate");
  const auto b = make_baselines(c);
  const Reconstructors recons(c, b.vds);
  const Json lf_seed{{"lf", c.seeds.lf}};
  const Json vds_seed{{"vds", c.seeds.vds}};
  run.write("patterns/LF.csv", pattern_csv(b.lf), {}, lf_seed);
  run.write("patterns/VDS.csv", pattern_csv(b.vds), {}, vds_seed);
  write_phantoms(run, c);

  // One OSP job per reconstructor and training set.
  struct Job {
    std::string recon;
    std::vector<std::string> phantoms;
    std::string stem;
    std::optional<OspRun> run;
  };
  std::vector<Job> jobs;
  for (const auto& r : c.recons) {
    if (c.osp.training == "joint") {
      jobs.push_back({r, c.phantoms, "OSP_" + r + "_joint", std::nullopt});
    } else {
      for (const auto& ph : c.phantoms) {
        jobs.push_back({r, {ph}, "OSP_" + r + "_" + ph, std::nullopt});
      }
    }
  }
  tbb::parallel_for(std::size_t{0}, jobs.size(),
                    [&](std::size_t i) { jobs[i].run = run_osp(c, recons, b.vds, jobs[i].recon, jobs[i].phantoms); });

  Json osp = Json::object();
  for (const auto& j : jobs) {
    std::vector<std::string> inputs{"patterns/VDS.csv"};
    for (const auto& ph : j.phantoms) {
      inputs.push_back("images/" + ph + ".ksimg");
    }
    run.write("patterns/" + j.stem + ".csv", pattern_csv(j.run->pattern), inputs, vds_seed);
    run.write("logs/" + j.stem + ".csv", history_csv(j.run->result.history), inputs, vds_seed);
    osp[j.stem] = osp_summary(j.run->result);
  }
  auto osp_for = [&](const std::string& r, const std::string& ph) -> const Job& {
    for (const auto& j : jobs) {
      if (j.recon == r && std::find(j.phantoms.begin(), j.phantoms.end(), ph) != j.phantoms.end()) {
        return j;
      }
    }
    throw std::logic_error("cmd_evaluate: missing OSP job");
  };

  struct Spec {
    std::string name;
    std::string recon;
    std::string phantom;
    const SamplingPattern* pattern;
    std::string source;
  };
  std::vector<Spec> specs;
  for (const char* name : {"LF", "VDS", "OSP"}) {
    for (const auto& r : c.recons) {
      for (const auto& ph : c.phantoms) {
        const std::string n = name;
        if (n == "LF") {
          specs.push_back({n, r, ph, &b.lf, "patterns/LF.csv"});
        } else if (n == "VDS") {
          specs.push_back({n, r, ph, &b.vds, "patterns/VDS.csv"});
        } else {
          const Job& j = osp_for(r, ph);
          specs.push_back({n, r, ph, &j.run->pattern, "patterns/" + j.stem + ".csv"});
        }
      }
    }
  }
  std::vector<CellResult> cells(specs.size());
  tbb::parallel_for(std::size_t{0}, specs.size(), [&](std::size_t i) {
    const auto& s = specs[i];
    cells[i] = evaluate_cell(c, recons, *s.pattern, s.name, s.recon, s.phantom);
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    write_cell_images(run, {cells[i]}, "recon", {specs[i].source});
  }

  std::vector<std::string> sources;
  for (const auto& s : specs) {
    if (std::find(sources.begin(), sources.end(), s.source) == sources.end()) {
      sources.push_back(s.source);
    }
  }
  run.write("psnr.csv", psnr_csv(cells), sources, {});
  std::string bands = "pattern,recon,phantom,low_band_error,high_band_error\n";
  for (const auto& r : cells) {
    bands += r.pattern + "," + r.recon + "," + r.phantom + "," + detail::fmt(r.bands.low) + "," +
             detail::fmt(r.bands.high) + "\n";
  }
  run.write("bands.csv", bands, sources, {});
  run.provenance()["lambda"] = recons.describe();
  run.provenance()["budget"] = c.budget();
  run.provenance()["osp"] = std::move(osp);
  run.finish();
  return cells;
}

/// Gradient oracle suite: unrolled gradient against central differences on
/// small VDS instances for each configured reconstructor and step, and the
/// Tikhonov unrolled gradient against the implicit one.
inline void cmd_fdcheck(const RunConfig& c, const fs::path& out)
{
  RunDir run(out, c, "fdcheck");
  const auto& f = c.fdcheck;
  const ImageGrid grid{f.side, f.side};
  const ComplexImage image = phantom_shepp_logan(grid);
  std::string csv = "recon,seed,h,kink_free,near_kink,relative_error,max_relative_error\n";
  for (const auto& r : c.recons) {
    for (int s = 1; s <= f.seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      const auto pattern = vds_uniform(grid, f.points, seed);
      ReconConfig rc = ReconConfig::tikhonov(default_tikhonov_lambda(grid), c.tikhonov.iters);
      if (r == "l1") {
        const WaveletFrame frame(grid, c.l1.levels);
        const NuftOperator op(pattern, grid);
        const KSpaceVector y = op.forward(image);
        rc = ReconConfig::l1(frame, c.l1.lambda_scale * kernels::max_abs(frame.analyze(op.adjoint(y.data()))),
                             c.l1.iters);
        rc.step_safety = c.l1.step_safety;
        rc.opnorm_iters = c.l1.opnorm_iters;
        rc.opnorm_seed = c.l1.opnorm_seed;
        rc.accelerated = c.l1.accelerated;
      }
      for (double h : f.steps) {
        const auto rep = grad_fd_check(pattern, image, rc, h, f.coords, seed + 50);
        csv += r + "," + std::to_string(s) + "," + detail::fmt(h) + "," + std::to_string(rep.kink_free) + "," +
               std::to_string(rep.near_kink) + "," + detail::fmt(rep.relative_error) + "," +
               detail::fmt(rep.max_relative_error) + "\n";
      }
    }
  }
  run.write("fdcheck.csv", csv, {}, {{"patterns", "vds seeds 1.." + std::to_string(f.seeds)}});

  std::string imp = "seed,relative_error\n";
  const ImageGrid small{f.implicit_side, f.implicit_side};
  for (int s = 1; s <= f.seeds; ++s) {
    const auto pattern = vds_uniform(small, budget_from_factor(small, c.subsampling_factor), s);
    const auto x = phantom_shepp_logan(small);
    const auto rc = ReconConfig::tikhonov(default_tikhonov_lambda(small), f.implicit_iters);
    const auto g = loss_and_grad_single(pattern, x, rc).gradient;
    const auto gi = grad_tikhonov_implicit(pattern, x, rc);
    imp += std::to_string(s) + "," + detail::fmt((g - gi).norm() / gi.norm()) + "\n";
  }
  run.write("implicit.csv", imp, {}, {{"patterns", "vds seeds 1.." + std::to_string(f.seeds)}});
  run.finish();
}

}  // namespace offgrid
