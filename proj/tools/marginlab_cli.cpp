// marginlab: train margin-loss models on synthetic data, sweep margins,
// check scale/margin bounds, render decision regions and score features.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "marginlab/commands.hpp"

namespace {

using namespace marginlab::cli;

struct SharedFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string m_grid;
  bool quiet = false;
};

void add_shared(CLI::App* cmd, SharedFlags& f, bool with_grid) {
  cmd->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run a single seed instead of the config's list");
  cmd->add_option("--out", f.out, "output directory");
  if (with_grid) cmd->add_option("--m-grid", f.m_grid, "comma separated margins, e.g. 0,0.1,0.2");
  cmd->add_flag("--quiet", f.quiet, "suppress the summary on stdout");
}

template <typename Opts>
void fill(const CLI::App* cmd, const SharedFlags& f, Opts& o) {
  if (!f.config.empty()) o.config = f.config;
  if (cmd->count("--seed") > 0) o.seed = f.seed;
  if (!f.out.empty()) o.out = f.out;
  if (!f.m_grid.empty()) o.m_grid = parse_number_list(f.m_grid);
  o.quiet = f.quiet;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Large margin cosine loss experiments"};
  app.require_subcommand(1);

  SharedFlags train_flags;
  std::string export_dir;
  auto* train = app.add_subcommand("train", "train one model and write trace, model and stats");
  add_shared(train, train_flags, false);
  train->add_option("--export-holdout", export_dir,
                    "also write held-out features.csv, pairs.csv and gallery.csv here");

  SharedFlags toy_flags;
  auto* toy = app.add_subcommand("toy2d", "2-D feature visualisation for each margin");
  add_shared(toy, toy_flags, true);

  SharedFlags sweep_flags;
  auto* sweep = app.add_subcommand("msweep", "verification accuracy across a margin grid");
  add_shared(sweep, sweep_flags, true);

  BoundsOptions bounds_opts;
  double s_val = 0.0;
  double m_val = 0.0;
  std::string bounds_out;
  auto* bounds = app.add_subcommand("bounds", "scale lower bound and margin upper bound");
  bounds->add_option("--classes,-C", bounds_opts.classes, "number of classes")->required();
  bounds->add_option("--dim,-K", bounds_opts.dim, "feature dimension")->required();
  bounds->add_option("--pw", bounds_opts.p_w, "target class-center posterior")->default_val(0.99);
  bounds->add_option("--s", s_val, "check this scale against the bound");
  bounds->add_option("--m", m_val, "check this margin against the bound");
  bounds->add_flag("--json", bounds_opts.json, "print JSON instead of text");
  bounds->add_option("--out", bounds_out, "also write the JSON report here");

  RegionsOptions regions_opts;
  std::string regions_out;
  auto* regions = app.add_subcommand("regions", "binary decision regions on a grid");
  regions->add_option("--loss", regions_opts.kind, "SOFTMAX, NSL, A-SOFTMAX or LMCL")
      ->default_val("LMCL");
  regions->add_option("--margin", regions_opts.margin,
                      "cosine margin (LMCL) or angular multiplier (A-SOFTMAX)");
  regions->add_option("--w1-norm", regions_opts.w1_norm)->default_val(1.0);
  regions->add_option("--w2-norm", regions_opts.w2_norm)->default_val(1.0);
  regions->add_option("--resolution", regions_opts.resolution)->default_val(512);
  regions->add_option("--out", regions_out, "CSV path")->default_val("regions.csv");
  regions->add_flag("--quiet", regions_opts.quiet);

  EvalOptions eval_opts;
  std::string features, pairs, gallery, far_list, eval_out;
  auto* eval = app.add_subcommand("eval", "verification or identification on exported features");
  eval->add_option("--features", features, "features.csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--pairs", pairs, "pairs.csv (verify)");
  eval->add_option("--gallery", gallery, "gallery.csv (identify)");
  eval->add_option("--mode", eval_opts.mode)->check(CLI::IsMember({"verify", "identify"}))
      ->default_val("verify");
  eval->add_option("--far", far_list, "comma separated FAR levels")->default_val("0.01,0.001");
  eval->add_option("--out", eval_out, "write the metrics JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      TrainOptions o;
      fill(train, train_flags, o);
      if (!export_dir.empty()) o.export_holdout = export_dir;
      return cmd_train(o, std::cout, std::cerr);
    }
    if (*toy) {
      ExperimentOptions o;
      fill(toy, toy_flags, o);
      return cmd_toy2d(o, std::cout, std::cerr);
    }
    if (*sweep) {
      ExperimentOptions o;
      fill(sweep, sweep_flags, o);
      return cmd_msweep(o, std::cout, std::cerr);
    }
    if (*bounds) {
      if (bounds->count("--s") > 0) bounds_opts.s = s_val;
      if (bounds->count("--m") > 0) bounds_opts.m = m_val;
      if (!bounds_out.empty()) bounds_opts.out = bounds_out;
      return cmd_bounds(bounds_opts, std::cout, std::cerr);
    }
    if (*regions) {
      regions_opts.out = regions_out;
      return cmd_regions(regions_opts, std::cout, std::cerr);
    }
    if (*eval) {
      eval_opts.features = features;
      if (!pairs.empty()) eval_opts.pairs = pairs;
      if (!gallery.empty()) eval_opts.gallery = gallery;
      eval_opts.far = parse_number_list(far_list);
      if (!eval_out.empty()) eval_opts.out = eval_out;
      return cmd_eval(eval_opts, std::cout, std::cerr);
    }
  } catch (...) {
    return exit_code_for_current_exception(std::cerr);
  }
  return kExitUsage;
}
