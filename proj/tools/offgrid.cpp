// offgrid: baseline patterns, OSP optimization, reconstructions and the
// PSNR comparison table.

#include "offgrid/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out)
{
  c.out = default_out;
  cmd->add_option("--config", c.config, "JSON run configuration (defaults apply to missing fields)");
  cmd->add_option("--out", c.out, "output directory (must be empty or absent)");
  cmd->add_option("--seed", c.seed, "baseline seed: LF uses it, VDS uses seed + 1");
}

offgrid::RunConfig resolve(const Common& c)
{
  offgrid::RunConfig cfg = c.config.empty() ? offgrid::RunConfig{} : offgrid::load_run_config(c.config);
  if (c.seed) {
    cfg.seeds.lf = *c.seed;
    cfg.seeds.vds = *c.seed + 1;
  }
  offgrid::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Learned off-the-grid k-space sampling patterns"};
  app.require_subcommand(1);

  Common gen, opt, rec, eva, fdc;
  std::string pattern;
  std::string init;
  bool print_defaults = false;

  auto* g = app.add_subcommand("generate", "write the LF and VDS baseline patterns");
  add_common(g, gen, "run-generate");
  auto* o = app.add_subcommand("optimize", "optimize a pattern (OSP) for optimize.recon / optimize.phantom");
  add_common(o, opt, "run-optimize");
  o->add_option("--pattern", init, "initial pattern CSV (default: the VDS baseline)")->check(CLI::ExistingFile);
  auto* r = app.add_subcommand("reconstruct", "reconstruct the phantoms from a pattern file");
  add_common(r, rec, "run-reconstruct");
  r->add_option("--pattern", pattern, "pattern CSV")->required();
  auto* e = app.add_subcommand("evaluate", "full LF / VDS / OSP comparison and psnr.csv");
  add_common(e, eva, "run-evaluate");
  auto* f = app.add_subcommand("fdcheck", "gradient checks against finite differences and implicit gradients");
  add_common(f, fdc, "run-fdcheck");
  auto* d = app.add_subcommand("defaults", "print the default configuration");
  d->callback([&] { print_defaults = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_defaults) {
      std::printf("%s\n", offgrid::to_json(offgrid::RunConfig{}).dump(2).c_str());
    } else if (g->parsed()) {
      offgrid::cmd_generate(resolve(gen), gen.out);
    } else if (o->parsed()) {
      offgrid::cmd_optimize(resolve(opt), opt.out,
                            init.empty() ? std::nullopt : std::optional<std::filesystem::path>(init));
    } else if (r->parsed()) {
      for (const auto& c : offgrid::cmd_reconstruct(resolve(rec), rec.out, pattern)) {
        std::printf("%s %s %s %.4f dB\n", c.pattern.c_str(), c.recon.c_str(), c.phantom.c_str(), c.psnr_db);
      }
    } else if (e->parsed()) {
      for (const auto& c : offgrid::cmd_evaluate(resolve(eva), eva.out)) {
        std::printf("%-4s %-9s %-12s %.4f dB\n", c.pattern.c_str(), c.recon.c_str(), c.phantom.c_str(), c.psnr_db);
      }
    } else if (f->parsed()) {
      offgrid::cmd_fdcheck(resolve(fdc), fdc.out);
    }
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "offgrid: %s\n", ex.what());
    return 1;
  }
  return 0;
}
