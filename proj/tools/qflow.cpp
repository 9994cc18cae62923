// qflow: gradient-flow optimal control runs, benchmark grids and self-checks.

#include "qflow/checks.hpp"
#include "qflow/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct RunFlags {
  std::string config;
  std::optional<std::string> method;
  std::optional<std::string> n_max;
  std::optional<double> horizon;
  std::optional<std::size_t> n_intervals;
  std::optional<double> s_max;
  std::optional<double> j_stop;
  std::optional<double> rel_tol;
  std::optional<double> abs_tol;
  std::string out;
  std::string trajectory;
};

struct GridFlags {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
};

struct CheckFlags {
  bool quick = false;
  std::uint64_t seed = 7;
};

qflow::ExperimentConfig load_or_default(const std::string& path) {
  return path.empty() ? qflow::ExperimentConfig{} : qflow::load_config(path);
}

std::filesystem::path with_suffix(const std::filesystem::path& path, const std::string& tag) {
  auto out = path;
  out.replace_filename(path.stem().string() + "_" + tag + path.extension().string());
  return out;
}

int cmd_run(const RunFlags& flags) {
  qflow::ExperimentConfig cfg = load_or_default(flags.config);
  if (flags.method) {
    std::string spec = *flags.method;
    if (flags.n_max) spec += ":" + *flags.n_max;
    cfg.methods = {qflow::parse_method(spec)};
  } else if (flags.n_max) {
    for (auto& m : cfg.methods) {
      m = qflow::parse_method(std::string(qflow::method_name(m.kind)) + ":" + *flags.n_max);
    }
  }
  if (flags.horizon) cfg.horizons = {*flags.horizon};
  if (flags.n_intervals) cfg.interval_counts = {*flags.n_intervals};
  if (flags.s_max) cfg.solver.s_max = *flags.s_max;
  if (flags.j_stop) cfg.solver.j_stop = *flags.j_stop;
  if (flags.rel_tol) cfg.solver.rel_tol = *flags.rel_tol;
  if (flags.abs_tol) cfg.solver.abs_tol = *flags.abs_tol;
  cfg.validate();

  const bool keep = !flags.trajectory.empty();
  std::vector<qflow::ReportRow> rows;
  for (const auto& method : cfg.methods) {
    qflow::CellRun run = qflow::run_single(cfg, method, keep);
    if (keep) {
      std::filesystem::path path = flags.trajectory;
      if (cfg.methods.size() > 1) {
        path = with_suffix(path, run.row.method + "-" + run.row.n_max);
      }
      qflow::emit_trajectory(run.result, path);
    }
    rows.push_back(std::move(run.row));
  }
  std::cout << qflow::render_table(rows);

  const std::string out = flags.out.empty() ? cfg.out : flags.out;
  if (!out.empty()) {
    std::filesystem::path csv = out;
    std::filesystem::path json = csv;
    json.replace_extension(".json");
    if (json == csv) json += ".json";
    qflow::write_text_file(csv, qflow::to_csv(rows));
    qflow::write_text_file(json, qflow::to_json(rows));
  }
  return kExitOk;
}

int cmd_grid(const GridFlags& flags) {
  qflow::ExperimentConfig cfg = load_or_default(flags.config);
  if (flags.workers) cfg.workers = *flags.workers;
  cfg.validate();
  const std::filesystem::path dir = !flags.out.empty() ? flags.out
                                    : !cfg.out.empty() ? cfg.out
                                                       : std::string(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw qflow::IoError("cannot create output directory " + dir.string());

  const auto rows = qflow::run_grid(cfg);
  std::cout << qflow::render_table(rows);
  qflow::write_text_file(dir / "report.csv", qflow::to_csv(rows));
  qflow::write_text_file(dir / "report.json", qflow::to_json(rows));
  return kExitOk;
}

int cmd_check(const CheckFlags& flags) {
  bool all = true;
  for (const auto& r : qflow::run_checks(flags.quick, flags.seed)) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  [" << r.detail << "]\n";
    all = all && r.passed;
  }
  return all ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-flow quantum optimal control"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run one (T, L) cell for the configured methods");
  run_cmd->add_option("--config", run.config, "Config file (key = value or JSON)");
  run_cmd->add_option("--method", run.method, "original | old | new | exact-fd | exact-augmented");
  run_cmd->add_option("--n-max", run.n_max, "Series truncation order or 'auto'");
  run_cmd->add_option("--T", run.horizon, "Control horizon");
  run_cmd->add_option("--L", run.n_intervals, "Number of subintervals");
  run_cmd->add_option("--S", run.s_max, "Flow horizon");
  run_cmd->add_option("--j-stop", run.j_stop, "Objective threshold");
  run_cmd->add_option("--rel-tol", run.rel_tol, "Relative tolerance");
  run_cmd->add_option("--abs-tol", run.abs_tol, "Absolute tolerance");
  run_cmd->add_option("--out", run.out, "Report CSV path (JSON written alongside)");
  run_cmd->add_option("--trajectory", run.trajectory, "Trajectory CSV path (s,J,step_size)");

  GridFlags grid;
  auto* grid_cmd = app.add_subcommand("grid", "Run the methods x (T, L) comparison grid");
  grid_cmd->add_option("--config", grid.config, "Config file (key = value or JSON)");
  grid_cmd->add_option("--out", grid.out, "Output directory for report.csv / report.json");
  grid_cmd->add_option("--workers", grid.workers, "Parallel cells");

  CheckFlags check;
  auto* check_cmd = app.add_subcommand("check", "Invariant and gradient-oracle self-checks");
  check_cmd->add_flag("--quick", check.quick, "Smaller grids");
  check_cmd->add_option("--seed", check.seed, "Seed for random fields");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*grid_cmd) return cmd_grid(grid);
    if (*check_cmd) return cmd_check(check);
  } catch (const qflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const qflow::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
