#include "marginlab/commands.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "marginlab/bound_geometry.hpp"
#include "marginlab/error.hpp"
#include "marginlab/eval_metrics.hpp"
#include "marginlab/experiments.hpp"
#include "marginlab/io.hpp"

namespace marginlab::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw ConfigError("not a number in list: '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

namespace {

ExperimentConfig resolve_config(const ExperimentOptions& opts) {
  ExperimentConfig cfg = opts.config ? load_experiment_config(*opts.config)
                                     : default_experiment_config();
  if (opts.seed) cfg.seeds = {*opts.seed};
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.m_grid) cfg.m_grid = *opts.m_grid;
  validate(cfg);
  return cfg;
}

ordered_json verification_json(const RunResult& r) {
  ordered_json tar = ordered_json::array();
  for (const auto& t : r.tar) {
    tar.push_back({{"far", t.far}, {"tar", t.tar ? ordered_json(*t.tar) : ordered_json(nullptr)}});
  }
  return {{"accuracy", r.verification.accuracy},
          {"threshold", r.verification.threshold},
          {"tar_at_far", tar}};
}

std::string trace_csv(const TrainRun& run) {
  io::CsvWriter w({"epoch", "loss", "train_accuracy", "learning_rate"});
  for (const auto& e : run.trace) {
    w.cell(e.epoch).cell(e.loss).cell(e.accuracy).cell(e.learning_rate);
    w.end_row();
  }
  return w.str();
}

std::string angular_csv(const AngularStats& stats) {
  io::CsvWriter w({"label", "count", "intra_spread", "inter_gap"});
  for (const auto& c : stats.per_class) {
    w.cell(c.label).cell(c.count).cell(c.intra_spread).cell(c.inter_gap);
    w.end_row();
  }
  return w.str();
}

std::string m_tag(double m) { return io::format_number(m); }

}  // namespace

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::uint64_t seed = cfg.seeds.front();
    const RunResult r = run_experiment(cfg, seed);
    if (r.diverged) {
      err << "training diverged at epoch " << *r.diverged_epoch << "\n";
      return kExitRuntime;
    }
    const fs::path dir = cfg.output_dir;
    io::write_file_atomic(dir / "trace.csv", trace_csv(*r.run));
    io::write_file_atomic(dir / "angular_stats.csv", angular_csv(r.stats));
    ordered_json meta;
    meta["config"] = to_json(cfg);
    meta["seed"] = seed;
    meta["converged"] = r.converged();
    meta["final_loss"] = r.final_loss();
    meta["train_accuracy"] = r.run->trace.back().accuracy;
    meta["min_inter_gap"] = r.stats.min_inter_gap;
    meta["verification"] = verification_json(r);
    io::save_model(dir / "model.json", r.run->model, meta);

    if (opts.export_holdout) {
      io::FeatureTable table;
      for (std::size_t i = 0; i < r.holdout.labels.size(); ++i) table.ids.push_back(i);
      table.labels = r.holdout.labels;
      table.features = r.holdout_features;
      io::write_file_atomic(*opts.export_holdout / "features.csv", io::feature_csv(table));
      io::write_file_atomic(*opts.export_holdout / "pairs.csv", io::pairs_csv(r.pairs));
      // First sample of each class forms the gallery, the rest are probes.
      std::vector<io::GalleryEntry> entries;
      std::vector<bool> seen(r.holdout.classes, false);
      for (std::size_t i = 0; i < r.holdout.labels.size(); ++i) {
        const std::size_t c = r.holdout.labels[i];
        entries.push_back({i, seen[c] ? io::GalleryRole::Probe : io::GalleryRole::Gallery});
        seen[c] = true;
      }
      io::write_file_atomic(*opts.export_holdout / "gallery.csv", io::gallery_csv(entries));
    }

    if (!opts.quiet) {
      out << "seed " << seed << ": final loss " << io::format_number(r.final_loss())
          << ", train accuracy " << io::format_number(r.run->trace.back().accuracy)
          << ", held-out verification " << io::format_number(r.verification.accuracy)
          << (r.converged() ? "" : " (not converged)") << "\n";
      out << "wrote " << (dir / "trace.csv").string() << ", " << (dir / "model.json").string()
          << ", " << (dir / "angular_stats.csv").string() << "\n";
    }
    if (!r.converged()) {
      err << "training did not converge\n";
      return kExitRuntime;
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_toy2d(const ExperimentOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = resolve_config(opts);
    if (cfg.model.feature_dim != 2) {
      throw ConfigError("model.feature_dim: toy2d requires 2-D features, got " +
                        std::to_string(cfg.model.feature_dim));
    }
    const std::size_t nm = cfg.m_grid.size();
    const std::size_t ns = cfg.seeds.size();
    std::vector<RunResult> results(nm * ns);
    parallel_for(nm * ns, [&](std::size_t i) {
      results[i] = run_experiment(cfg, cfg.seeds[i % ns], cfg.m_grid[i / ns]);
    });

    const fs::path dir = cfg.output_dir;
    ordered_json summary;
    summary["config"] = to_json(cfg);
    summary["results"] = ordered_json::array();
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const double m = cfg.m_grid[mi];
      // Scatter data comes from the first seed.
      const RunResult& shown = results[mi * ns];
      if (shown.diverged) {
        throw DivergenceError(*shown.diverged_epoch,
                              "toy2d run for m=" + m_tag(m) + " diverged");
      }
      io::CsvWriter euclid({"label", "x", "y"});
      io::CsvWriter angular({"label", "x", "y", "angle", "class_inter_gap"});
      std::vector<double> class_gap(cfg.dataset.classes, 0.0);
      for (const auto& c : shown.stats.per_class) class_gap[c.label] = c.inter_gap;
      for (std::size_t r = 0; r < shown.train_features.rows(); ++r) {
        const std::size_t y = shown.train_data.labels[r];
        const double fx = shown.train_features(r, 0);
        const double fy = shown.train_features(r, 1);
        euclid.cell(y).cell(fx).cell(fy);
        euclid.end_row();
        const double norm = std::hypot(fx, fy);
        const double ux = norm > 0.0 ? fx / norm : 0.0;
        const double uy = norm > 0.0 ? fy / norm : 0.0;
        angular.cell(y).cell(ux).cell(uy).cell(std::atan2(uy, ux)).cell(class_gap[y]);
        angular.end_row();
      }
      io::write_file_atomic(dir / ("toy2d_m" + m_tag(m) + "_euclidean.csv"), euclid.str());
      io::write_file_atomic(dir / ("toy2d_m" + m_tag(m) + "_angular.csv"), angular.str());

      ordered_json runs = ordered_json::array();
      std::vector<double> gaps;
      for (std::size_t si = 0; si < ns; ++si) {
        const RunResult& r = results[mi * ns + si];
        ordered_json jr = {{"seed", r.seed}, {"diverged", r.diverged}};
        if (!r.diverged) {
          jr["converged"] = r.converged();
          jr["train_accuracy"] = r.run->trace.back().accuracy;
          jr["min_inter_gap"] = r.stats.min_inter_gap;
          jr["mean_intra_spread"] = r.stats.mean_intra_spread;
          gaps.push_back(r.stats.min_inter_gap);
        }
        runs.push_back(jr);
      }
      const double med = median(gaps);
      summary["results"].push_back({{"m", m}, {"median_min_inter_gap", med}, {"runs", runs}});
      if (!opts.quiet) {
        out << "m=" << m_tag(m) << ": median inter-class gap " << io::format_number(med)
            << " rad over " << gaps.size() << " seed(s)\n";
      }
    }
    io::write_file_atomic(dir / "toy2d_summary.json", summary.dump(2) + "\n");
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_msweep(const ExperimentOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::size_t nm = cfg.m_grid.size();
    const std::size_t ns = cfg.seeds.size();
    std::vector<RunResult> results(nm * ns);
    parallel_for(nm * ns, [&](std::size_t i) {
      results[i] = run_experiment(cfg, cfg.seeds[i % ns], cfg.m_grid[i / ns]);
    });

    const MarginScope scope = m_scope(cfg.dataset.classes, cfg.model.feature_dim);
    io::CsvWriter table({"m", "median_accuracy", "median_final_loss", "converged",
                         "converged_runs", "runs", "m_upper", "within_m_scope"});
    io::CsvWriter per_run({"m", "seed", "accuracy", "threshold", "initial_loss", "final_loss",
                           "train_accuracy", "converged", "diverged"});
    ordered_json report;
    report["config"] = to_json(cfg);
    report["m_scope"] = {{"m_upper", scope.m_upper}, {"kind", to_string(scope.kind)}};
    report["rows"] = ordered_json::array();
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const double m = cfg.m_grid[mi];
      std::vector<double> accs;
      std::vector<double> losses;
      std::size_t converged = 0;
      for (std::size_t si = 0; si < ns; ++si) {
        const RunResult& r = results[mi * ns + si];
        per_run.cell(m).cell(static_cast<std::size_t>(r.seed));
        if (r.diverged) {
          per_run.cell(std::string("nan")).cell(std::string("nan")).cell(std::string("nan"))
              .cell(std::string("nan")).cell(std::string("nan"));
        } else {
          per_run.cell(r.verification.accuracy).cell(r.verification.threshold)
              .cell(r.initial_loss()).cell(r.final_loss()).cell(r.run->trace.back().accuracy);
          accs.push_back(r.verification.accuracy);
          losses.push_back(r.final_loss());
        }
        per_run.cell(static_cast<std::size_t>(r.converged()))
            .cell(static_cast<std::size_t>(r.diverged));
        per_run.end_row();
        converged += r.converged();
      }
      const bool all_converged = converged == ns;
      const bool within = m <= scope.m_upper;
      const double med_acc = median(accs);
      table.cell(m).cell(med_acc).cell(median(losses))
          .cell(std::string(all_converged ? "true" : "false")).cell(converged).cell(ns)
          .cell(scope.m_upper).cell(std::string(within ? "true" : "false"));
      table.end_row();
      report["rows"].push_back({{"m", m},
                                {"median_accuracy", med_acc},
                                {"median_final_loss", median(losses)},
                                {"converged", all_converged},
                                {"converged_runs", converged},
                                {"runs", ns},
                                {"within_m_scope", within}});
      if (!opts.quiet) {
        out << "m=" << m_tag(m) << ": median verification accuracy "
            << io::format_number(med_acc) << ", converged " << converged << "/" << ns
            << (within ? "" : " (beyond m scope)") << "\n";
      }
    }
    const fs::path dir = cfg.output_dir;
    io::write_file_atomic(dir / "msweep.csv", table.str());
    io::write_file_atomic(dir / "msweep_runs.csv", per_run.str());
    io::write_file_atomic(dir / "msweep.json", report.dump(2) + "\n");
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_bounds(const BoundsOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const BoundReport r = make_bound_report(opts.classes, opts.dim, opts.p_w, opts.s, opts.m);
    ordered_json j;
    j["input"] = {{"C", opts.classes}, {"K", opts.dim}, {"P_W", opts.p_w},
                  {"s", opts.s ? ordered_json(*opts.s) : ordered_json(nullptr)},
                  {"m", opts.m ? ordered_json(*opts.m) : ordered_json(nullptr)}};
    j["s_lower"] = r.s_lower;
    j["m_upper"] = r.margin.m_upper;
    j["m_bound_kind"] = to_string(r.margin.kind);
    j["m_upper_above_one"] = r.m_upper_above_one;
    if (r.s_satisfied) j["s_satisfied"] = *r.s_satisfied;
    if (r.m_satisfied) j["m_satisfied"] = *r.m_satisfied;
    if (r.simplex_posterior_at_bound) j["simplex_posterior_at_s_lower"] = *r.simplex_posterior_at_bound;
    ordered_json ev = ordered_json::array();
    for (const auto& e : r.evidence) {
      ev.push_back({{"description", e.description}, {"lhs", e.lhs}, {"rhs", e.rhs},
                    {"satisfied", e.satisfied}});
    }
    j["oracle_evidence"] = ev;
    if (opts.out) io::write_file_atomic(*opts.out, j.dump(2) + "\n");

    if (opts.json) {
      out << j.dump(2) << "\n";
      return kExitOk;
    }
    out << "C=" << opts.classes << " K=" << opts.dim << " P_W=" << io::format_number(opts.p_w)
        << "\n";
    out << "  s lower bound: " << io::format_number(r.s_lower);
    if (r.s_satisfied) {
      out << "  (s=" << io::format_number(*opts.s) << (*r.s_satisfied ? " satisfies" : " VIOLATES")
          << " it)";
    }
    out << "\n  m upper bound: " << io::format_number(r.margin.m_upper) << " ["
        << to_string(r.margin.kind) << "]";
    if (r.m_satisfied) {
      out << "  (m=" << io::format_number(*opts.m) << (*r.m_satisfied ? " satisfies" : " VIOLATES")
          << " it)";
    }
    out << "\n";
    if (r.m_upper_above_one) out << "  note: bound exceeds 1; trainable margins are < 1\n";
    if (r.simplex_posterior_at_bound) {
      out << "  simplex class-center posterior at s = bound: "
          << io::format_number(*r.simplex_posterior_at_bound) << "\n";
    }
    for (const auto& e : r.evidence) {
      out << "  [" << (e.satisfied ? "ok" : "FAIL") << "] " << e.description << ": "
          << io::format_number(e.lhs) << " >= " << io::format_number(e.rhs) << "\n";
    }
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_regions(const RegionsOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const auto kind = parse_boundary_kind(opts.kind);
    if (!kind) throw ConfigError("unknown loss kind '" + opts.kind + "'");
    RegionParams params{opts.margin, opts.w1_norm, opts.w2_norm};
    if (*kind == BoundaryKind::ASoftmax && opts.margin == 0.0) params.margin = 2.0;
    const RegionGrid grid = decision_regions(*kind, params, opts.resolution);

    io::CsvWriter w({"theta1", "theta2", "cos1", "cos2", "label"});
    for (std::size_t row = 0; row < grid.resolution; ++row) {
      for (std::size_t col = 0; col < grid.resolution; ++col) {
        const double u = grid.u[col];
        const double v = grid.v[row];
        const double t1 = grid.angular() ? u : std::acos(u);
        const double t2 = grid.angular() ? v : std::acos(v);
        w.cell(t1).cell(t2).cell(std::cos(t1)).cell(std::cos(t2))
            .cell(to_string(grid.at(row, col)));
        w.end_row();
      }
    }
    io::write_file_atomic(opts.out, w.str());

    ordered_json j;
    j["kind"] = to_string(*kind);
    j["params"] = {{"margin", params.margin}, {"w1_norm", params.w1_norm},
                   {"w2_norm", params.w2_norm}};
    j["resolution"] = grid.resolution;
    j["space"] = grid.angular() ? "angle" : "cosine";
    j["cell"] = grid.cell();
    j["counts"] = {{"C1", grid.count(Region::C1)},
                   {"C2", grid.count(Region::C2)},
                   {"MARGIN", grid.count(Region::Margin)},
                   {"OVERLAP", grid.count(Region::Overlap)}};
    if (!grid.angular()) j["measured_band_width"] = measured_band_width(grid);
    if (*kind == BoundaryKind::Lmcl) j["predicted_band_width"] = lmcl_margin_width(params.margin);
    if (!opts.quiet) out << j.dump(2) << "\n";
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const io::FeatureTable table = io::parse_feature_csv(io::read_file(opts.features));
    std::map<std::size_t, std::size_t> row_of;
    for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = i;
    const auto lookup = [&](std::size_t id) {
      const auto it = row_of.find(id);
      if (it == row_of.end()) throw ProtocolError("id " + std::to_string(id) + " not in features");
      return it->second;
    };

    ordered_json j;
    j["features"] = opts.features.generic_string();
    j["mode"] = opts.mode;
    if (opts.mode == "verify") {
      if (!opts.pairs) throw ConfigError("--pairs is required for verify mode");
      const std::string text = io::read_file(*opts.pairs);
      if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ProtocolError("pairs file is empty");
      }
      const auto ids = io::parse_pairs_csv(text);
      if (ids.empty()) throw ProtocolError("pairs file has no pairs");
      PairSet pairs;
      for (const auto& p : ids) {
        const std::size_t a = lookup(p.a);
        const std::size_t b = lookup(p.b);
        pairs.push_back({{table.features.row(a).begin(), table.features.row(a).end()},
                         {table.features.row(b).begin(), table.features.row(b).end()},
                         table.labels[a] == table.labels[b]});
      }
      const ScoredPairs scored = score_pairs(pairs);
      const VerificationResult v = verification_accuracy(scored);
      j["pairs"] = opts.pairs->generic_string();
      j["num_pairs"] = pairs.size();
      j["accuracy"] = v.accuracy;
      j["threshold"] = v.threshold;
      ordered_json tar = ordered_json::array();
      for (double far : opts.far) {
        ordered_json point = {{"far", far}};
        try {
          point["tar"] = tar_at_far(scored, far);
        } catch (const ProtocolError& e) {
          point["tar"] = nullptr;
          point["error"] = e.what();
        }
        tar.push_back(point);
      }
      j["tar_at_far"] = tar;
    } else if (opts.mode == "identify") {
      if (!opts.gallery) throw ConfigError("--gallery is required for identify mode");
      const auto entries = io::parse_gallery_csv(io::read_file(*opts.gallery));
      GalleryProbe gp;
      std::vector<double> gdata;
      std::vector<double> pdata;
      for (const auto& e : entries) {
        const std::size_t r = lookup(e.id);
        auto& dst = e.role == io::GalleryRole::Gallery ? gdata : pdata;
        dst.insert(dst.end(), table.features.row(r).begin(), table.features.row(r).end());
        (e.role == io::GalleryRole::Gallery ? gp.gallery_ids : gp.probe_ids)
            .push_back(table.labels[r]);
      }
      const std::size_t k = table.features.cols();
      gp.gallery = Matrix(gp.gallery_ids.size(), k, std::move(gdata));
      gp.probes = Matrix(gp.probe_ids.size(), k, std::move(pdata));
      j["gallery"] = opts.gallery->generic_string();
      j["gallery_size"] = gp.gallery_ids.size();
      j["probe_size"] = gp.probe_ids.size();
      j["rank1"] = rank1_identification(gp);
    } else {
      throw ConfigError("--mode must be 'verify' or 'identify'");
    }
    if (opts.out) io::write_file_atomic(*opts.out, j.dump(2) + "\n");
    out << j.dump(2) << "\n";
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace marginlab::cli
