#pragma once

// Experiment configuration, benchmark runs and report files.

#include "qflow/flow_solver.hpp"
#include "qflow/gradient.hpp"
#include "qflow/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <tuple>
#include <vector>

namespace qflow {

/// Invalid configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fmt17 {

/// Decimal with 17 significant digits.
inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return num(v);
  return std::string(buf, ptr);
}

/// Rounded to `digits` significant digits for human tables.
inline std::string sig(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace fmt17

inline std::string method_label(const MethodSpec& m) {
  std::string out(method_name(m.kind));
  if (m.kind == MethodKind::Old || m.kind == MethodKind::New) {
    out += ':';
    out += m.adaptive ? std::string("auto") : std::to_string(m.n_max);
  }
  return out;
}

inline std::string n_max_label(const MethodSpec& m) {
  return m.adaptive ? std::string("auto") : std::to_string(m.n_max);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline double parse_double(const std::string& field, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError(field, "expected a number, got '" + t + "'");
  }
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& field, std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError(field, "expected a non-negative integer, got '" + t + "'");
  }
  return v;
}

}  // namespace detail

/// Parses "old:1", "new:auto", "original", "exact-augmented".
inline MethodSpec parse_method(std::string_view text) {
  const std::string t = detail::trim(text);
  const auto colon = t.find(':');
  const std::string name = detail::trim(t.substr(0, colon));
  const auto kind = parse_method_kind(name);
  if (!kind) throw ConfigError("methods", "unknown method '" + name + "'");
  MethodSpec m{*kind, 0, false};
  const bool series = *kind == MethodKind::Old || *kind == MethodKind::New;
  if (colon == std::string::npos) {
    if (series) m.n_max = 1;
    return m;
  }
  if (!series) throw ConfigError("methods", "method '" + name + "' takes no truncation order");
  const std::string order = detail::trim(t.substr(colon + 1));
  if (order == "auto") {
    m.adaptive = true;
    m.n_max = MethodSpec::kAdaptiveCap;
  } else {
    m.n_max = static_cast<int>(detail::parse_unsigned("methods", order));
  }
  return m;
}

struct ExperimentConfig {
  TwoSpinParams params;
  std::vector<double> horizons{10.0};
  std::vector<std::size_t> interval_counts{300};
  SolverConfig solver;
  std::vector<MethodSpec> methods;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t workers = 1;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  void validate() const {
    if (methods.empty()) throw ConfigError("methods", "at least one method is required");
    if (horizons.empty()) throw ConfigError("T", "at least one horizon is required");
    for (double t : horizons) {
      if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("T", "must be positive");
    }
    if (interval_counts.empty()) throw ConfigError("L", "at least one grid size is required");
    for (auto l : interval_counts) {
      if (l < 1) throw ConfigError("L", "must be >= 1");
    }
    if (!(solver.s_max > 0.0)) throw ConfigError("S", "must be positive");
    if (!(solver.j_stop > 0.0)) throw ConfigError("j_stop", "must be positive");
    if (!(solver.rel_tol > 0.0)) throw ConfigError("rel_tol", "must be positive");
    if (!(solver.abs_tol > 0.0)) throw ConfigError("abs_tol", "must be positive");
    if (solver.max_steps < 1) throw ConfigError("max_steps", "must be >= 1");
    if (solver.initial_step && !(*solver.initial_step > 0.0)) {
      throw ConfigError("initial_step", "must be positive");
    }
    if (workers < 1) throw ConfigError("workers", "must be >= 1");
  }
};

/// Applies one "key = value" setting; shared by file parsing and CLI overrides.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, std::string_view value) {
  using detail::parse_double;
  using detail::parse_unsigned;
  if (key == "omega1") {
    cfg.params.omega1 = parse_double(key, value);
  } else if (key == "omega2") {
    cfg.params.omega2 = parse_double(key, value);
  } else if (key == "cx") {
    cfg.params.cx = parse_double(key, value);
  } else if (key == "cy") {
    cfg.params.cy = parse_double(key, value);
  } else if (key == "cz") {
    cfg.params.cz = parse_double(key, value);
  } else if (key == "T") {
    cfg.horizons.clear();
    for (const auto& part : detail::split(value, ',')) cfg.horizons.push_back(parse_double(key, part));
  } else if (key == "L") {
    cfg.interval_counts.clear();
    for (const auto& part : detail::split(value, ',')) {
      cfg.interval_counts.push_back(static_cast<std::size_t>(parse_unsigned(key, part)));
    }
  } else if (key == "S") {
    cfg.solver.s_max = parse_double(key, value);
  } else if (key == "j_stop") {
    cfg.solver.j_stop = parse_double(key, value);
  } else if (key == "rel_tol") {
    cfg.solver.rel_tol = parse_double(key, value);
  } else if (key == "abs_tol") {
    cfg.solver.abs_tol = parse_double(key, value);
  } else if (key == "max_steps") {
    cfg.solver.max_steps = static_cast<std::size_t>(parse_unsigned(key, value));
  } else if (key == "initial_step") {
    const std::string t = detail::trim(value);
    if (t == "auto") {
      cfg.solver.initial_step.reset();
    } else {
      cfg.solver.initial_step = parse_double(key, t);
    }
  } else if (key == "methods") {
    cfg.methods.clear();
    const std::string t = detail::trim(value);
    if (!t.empty()) {
      for (const auto& part : detail::split(t, ',')) cfg.methods.push_back(parse_method(part));
    }
  } else if (key == "seed") {
    cfg.seed = parse_unsigned(key, value);
  } else if (key == "out") {
    cfg.out = detail::trim(value);
  } else if (key == "workers") {
    cfg.workers = static_cast<std::size_t>(parse_unsigned(key, value));
  } else {
    throw ConfigError(key, "unknown key");
  }
}

/// "key = value" lines; '#' starts a comment.
inline ExperimentConfig parse_key_value(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    apply_setting(cfg, detail::trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return cfg;
}

inline ExperimentConfig parse_json_config(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("json", e.what());
  }
  if (!doc.is_object()) throw ConfigError("json", "top level must be an object");
  ExperimentConfig cfg;
  auto scalar_text = [](const std::string& key, const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_unsigned() || v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) return fmt17::shortest(v.get<double>());
    throw ConfigError(key, "expected a number or string");
  };
  for (const auto& [key, value] : doc.items()) {
    if (key == "methods") {
      if (!value.is_array()) throw ConfigError("methods", "expected an array");
      cfg.methods.clear();
      for (const auto& m : value) {
        if (m.is_string()) {
          cfg.methods.push_back(parse_method(m.get<std::string>()));
        } else if (m.is_object() && m.contains("kind")) {
          std::string spec = m.at("kind").get<std::string>();
          if (m.contains("n_max")) spec += ":" + scalar_text("methods", m.at("n_max"));
          cfg.methods.push_back(parse_method(spec));
        } else {
          throw ConfigError("methods", "entries must be strings or {kind, n_max} objects");
        }
      }
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) {
        if (!joined.empty()) joined += ",";
        joined += scalar_text(key, item);
      }
      apply_setting(cfg, key, joined);
    } else {
      apply_setting(cfg, key, scalar_text(key, value));
    }
  }
  return cfg;
}

/// JSON when the first non-blank character is '{', key-value otherwise.
inline ExperimentConfig parse_config(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') return parse_json_config(text);
  return parse_key_value(text);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline std::string to_key_value(const ExperimentConfig& cfg) {
  std::ostringstream o;
  auto list = [](const auto& values, auto&& fmt) {
    std::string s;
    for (const auto& v : values) {
      if (!s.empty()) s += ", ";
      s += fmt(v);
    }
    return s;
  };
  o << "omega1 = " << fmt17::shortest(cfg.params.omega1) << "\n";
  o << "omega2 = " << fmt17::shortest(cfg.params.omega2) << "\n";
  o << "cx = " << fmt17::shortest(cfg.params.cx) << "\n";
  o << "cy = " << fmt17::shortest(cfg.params.cy) << "\n";
  o << "cz = " << fmt17::shortest(cfg.params.cz) << "\n";
  o << "T = " << list(cfg.horizons, [](double v) { return fmt17::shortest(v); }) << "\n";
  o << "L = " << list(cfg.interval_counts, [](std::size_t v) { return std::to_string(v); }) << "\n";
  o << "S = " << fmt17::shortest(cfg.solver.s_max) << "\n";
  o << "j_stop = " << fmt17::shortest(cfg.solver.j_stop) << "\n";
  o << "rel_tol = " << fmt17::shortest(cfg.solver.rel_tol) << "\n";
  o << "abs_tol = " << fmt17::shortest(cfg.solver.abs_tol) << "\n";
  o << "max_steps = " << cfg.solver.max_steps << "\n";
  o << "initial_step = "
    << (cfg.solver.initial_step ? fmt17::shortest(*cfg.solver.initial_step) : std::string("auto"))
    << "\n";
  o << "methods = " << list(cfg.methods, [](const MethodSpec& m) { return method_label(m); }) << "\n";
  o << "seed = " << cfg.seed << "\n";
  if (!cfg.out.empty()) o << "out = " << cfg.out << "\n";
  o << "workers = " << cfg.workers << "\n";
  return o.str();
}

/// One benchmark cell, mirroring the comparison table columns.
struct ReportRow {
  std::string method;
  std::string n_max;
  double horizon = 0.0;
  std::size_t n_intervals = 0;
  double final_s = 0.0;
  double wall_time_sec = 0.0;
  double max_step = 0.0;
  double final_j = 0.0;
  Termination termination = Termination::SExhausted;
  std::size_t n_accepted = 0;
  std::size_t n_rejected = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline constexpr std::string_view kReportHeader =
    "method,n_max,T,L,final_s,wall_time_sec,max_step,final_j,termination,n_accepted,n_rejected";

inline std::string to_csv_line(const ReportRow& r) {
  std::ostringstream o;
  o << r.method << ',' << r.n_max << ',' << fmt17::num(r.horizon) << ',' << r.n_intervals << ','
    << fmt17::num(r.final_s) << ',' << fmt17::num(r.wall_time_sec) << ','
    << fmt17::num(r.max_step) << ',' << fmt17::num(r.final_j) << ','
    << termination_name(r.termination) << ',' << r.n_accepted << ',' << r.n_rejected;
  return o.str();
}

inline std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : rows) out += to_csv_line(r) + '\n';
  return out;
}

inline std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kReportHeader) {
    throw ConfigError("report", "missing or unexpected CSV header");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 11) throw ConfigError("report", "expected 11 columns: " + line);
    ReportRow r;
    r.method = f[0];
    r.n_max = f[1];
    r.horizon = detail::parse_double("T", f[2]);
    r.n_intervals = static_cast<std::size_t>(detail::parse_unsigned("L", f[3]));
    r.final_s = detail::parse_double("final_s", f[4]);
    r.wall_time_sec = detail::parse_double("wall_time_sec", f[5]);
    r.max_step = detail::parse_double("max_step", f[6]);
    r.final_j = detail::parse_double("final_j", f[7]);
    const auto t = parse_termination(f[8]);
    if (!t) throw ConfigError("termination", "unknown value '" + f[8] + "'");
    r.termination = *t;
    r.n_accepted = static_cast<std::size_t>(detail::parse_unsigned("n_accepted", f[9]));
    r.n_rejected = static_cast<std::size_t>(detail::parse_unsigned("n_rejected", f[10]));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string to_json(const std::vector<ReportRow>& rows) {
  std::ostringstream o;
  o << "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    o << "  {\"method\": \"" << r.method << "\", \"n_max\": \"" << r.n_max
      << "\", \"T\": " << fmt17::num(r.horizon) << ", \"L\": " << r.n_intervals
      << ", \"final_s\": " << fmt17::num(r.final_s)
      << ", \"wall_time_sec\": " << fmt17::num(r.wall_time_sec)
      << ", \"max_step\": " << fmt17::num(r.max_step) << ", \"final_j\": " << fmt17::num(r.final_j)
      << ", \"termination\": \"" << termination_name(r.termination)
      << "\", \"n_accepted\": " << r.n_accepted << ", \"n_rejected\": " << r.n_rejected << "}"
      << (i + 1 < rows.size() ? ",\n" : "\n");
  }
  o << "]\n";
  return o.str();
}

inline std::vector<ReportRow> parse_report_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  std::vector<ReportRow> rows;
  for (const auto& j : doc) {
    ReportRow r;
    r.method = j.at("method").get<std::string>();
    r.n_max = j.at("n_max").get<std::string>();
    r.horizon = j.at("T").get<double>();
    r.n_intervals = j.at("L").get<std::size_t>();
    r.final_s = j.at("final_s").get<double>();
    r.wall_time_sec = j.at("wall_time_sec").get<double>();
    r.max_step = j.at("max_step").get<double>();
    r.final_j = j.at("final_j").get<double>();
    r.termination = parse_termination(j.at("termination").get<std::string>()).value();
    r.n_accepted = j.at("n_accepted").get<std::size_t>();
    r.n_rejected = j.at("n_rejected").get<std::size_t>();
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Plain-text summary, 4 significant digits.
inline std::string render_table(const std::vector<ReportRow>& rows) {
  const std::vector<std::string> head{"method", "n_max",    "T",     "L",        "final S",
                                      "time, s", "max step", "final J", "termination",
                                      "accepted", "rejected"};
  std::vector<std::vector<std::string>> cells;
  cells.push_back(head);
  for (const auto& r : rows) {
    cells.push_back({r.method, r.n_max, fmt17::sig(r.horizon), std::to_string(r.n_intervals),
                     fmt17::sig(r.final_s), fmt17::sig(r.wall_time_sec), fmt17::sig(r.max_step),
                     fmt17::sig(r.final_j), std::string(termination_name(r.termination)),
                     std::to_string(r.n_accepted), std::to_string(r.n_rejected)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream o;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      o << (c == 0 ? "" : "  ") << std::setw(static_cast<int>(width[c]))
        << (c == 0 ? std::left : std::right) << cells[r][c];
    }
    o << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      o << std::string(total - 2, '-') << "\n";
    }
  }
  return o.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Trajectory CSV: "s,J,step_size", one row per accepted step.
inline std::string trajectory_csv(const std::vector<TrajectoryPoint>& points) {
  std::string out = "s,J,step_size\n";
  for (const auto& p : points) {
    out += fmt17::num(p.s) + "," + fmt17::num(p.j) + "," + fmt17::num(p.step) + "\n";
  }
  return out;
}

inline std::vector<TrajectoryPoint> parse_trajectory_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "s,J,step_size") {
    throw ConfigError("trajectory", "missing or unexpected CSV header");
  }
  std::vector<TrajectoryPoint> points;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw ConfigError("trajectory", "expected 3 columns: " + line);
    points.push_back({detail::parse_double("s", f[0]), detail::parse_double("J", f[1]),
                      detail::parse_double("step_size", f[2])});
  }
  return points;
}

inline void emit_trajectory(const FlowResult& result, const std::filesystem::path& path) {
  write_text_file(path, trajectory_csv(result.trajectory));
}

struct CellRun {
  ReportRow row;
  FlowResult result;
};

/// Zero initial field, one flow, one row.
inline CellRun run_cell(const ExperimentConfig& cfg, const MethodSpec& method, double horizon,
                        std::size_t n_intervals, bool keep_trajectory = false) {
  const ControlProblem problem = build_two_spin_problem(cfg.params, horizon, n_intervals);
  SolverConfig solver = cfg.solver;
  solver.keep_trajectory = keep_trajectory;
  FlowResult result = solve_flow(problem, zero_field(problem), method, solver);
  ReportRow row{std::string(method_name(method.kind)),
                n_max_label(method),
                horizon,
                n_intervals,
                result.final_s,
                result.wall_time,
                result.max_step,
                result.final_j,
                result.termination,
                result.n_accepted,
                result.n_rejected};
  return {std::move(row), std::move(result)};
}

/// Single (T, L) cell for one method; the config must name exactly one of each.
inline CellRun run_single(const ExperimentConfig& cfg, const MethodSpec& method,
                          bool keep_trajectory = false) {
  cfg.validate();
  if (cfg.horizons.size() != 1) throw ConfigError("T", "run expects a single horizon");
  if (cfg.interval_counts.size() != 1) throw ConfigError("L", "run expects a single grid size");
  return run_cell(cfg, method, cfg.horizons.front(), cfg.interval_counts.front(), keep_trajectory);
}

inline bool row_order(const ReportRow& a, const ReportRow& b) {
  return std::tie(a.method, a.n_max, a.horizon, a.n_intervals) <
         std::tie(b.method, b.n_max, b.horizon, b.n_intervals);
}

/// methods x T x L, run on up to cfg.workers threads, rows sorted by (method, n_max, T, L).
inline std::vector<ReportRow> run_grid(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    MethodSpec method;
    double horizon;
    std::size_t n_intervals;
  };
  std::vector<Cell> cells;
  for (const auto& m : cfg.methods) {
    for (double t : cfg.horizons) {
      for (auto l : cfg.interval_counts) cells.push_back({m, t, l});
    }
  }
  std::vector<ReportRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      rows[i] = run_cell(cfg, cells[i].method, cells[i].horizon, cells[i].n_intervals).row;
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, cells.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  std::stable_sort(rows.begin(), rows.end(), row_order);
  return rows;
}

}  // namespace qflow
