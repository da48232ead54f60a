#pragma once

// Command-line front end. run_cli returns the process exit code:
// 0 success, 1 solver or verification failure, 2 usage or input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "roodso/io.hpp"
#include "roodso/verify.hpp"

#ifndef ROODSO_VERSION
#define ROODSO_VERSION "0.1.0"
#endif

namespace roodso {

inline constexpr int kSchemaVersion = 1;

struct ResultDocument {
  std::string command;
  std::string version = ROODSO_VERSION;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json timing = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"schema_version", kSchemaVersion}, {"command", command}, {"version", version}, {"seed", seed},
            {"config", config},                 {"outputs", outputs}, {"timing", timing}};
  }

  static ResultDocument from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("schema_version", -1) != kSchemaVersion) {
      throw InputError("result document: unsupported schema version");
    }
    ResultDocument d;
    d.command = j.at("command").get<std::string>();
    d.version = j.at("version").get<std::string>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.config = j.at("config");
    d.outputs = j.at("outputs");
    d.timing = j.at("timing");
    return d;
  }
};

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  out << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// "0.3" -> fixed nu; "grid" -> default grid; "a:b:c" -> start:step:stop grid;
/// "a,b,c" -> explicit grid.
inline void apply_nu_flag(PipelineConfig& pc, const std::string& flag) {
  if (flag.empty()) return;
  if (flag == "grid") {
    pc.nu.reset();
    pc.nu_grid = default_nu_grid();
    return;
  }
  auto parse = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw InputError("--nu: cannot parse '" + s + "'");
    return v;
  };
  if (flag.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(flag);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(parse(item));
    if (parts.size() != 3 || parts[1] <= 0.0) throw InputError("--nu: expected start:step:stop");
    pc.nu.reset();
    pc.nu_grid.clear();
    for (double v = parts[0]; v <= parts[2] + 1e-12; v += parts[1]) pc.nu_grid.push_back(std::round(v * 1e12) / 1e12);
    return;
  }
  if (flag.find(',') != std::string::npos) {
    pc.nu.reset();
    pc.nu_grid.clear();
    std::stringstream ss(flag);
    std::string item;
    while (std::getline(ss, item, ',')) pc.nu_grid.push_back(parse(item));
    return;
  }
  pc.nu = parse(flag);
}

inline nlohmann::json smc_summary(const SMCSolution& s) {
  return {{"nu", s.nu},
          {"support", s.sm.size()},
          {"boundary", s.bsm.size()},
          {"exterior", s.esm.size()},
          {"radius_sq", s.radius_sq},
          {"degenerate_radius", s.degenerate_radius}};
}

inline nlohmann::json solution_json(const RobustSolution& s) {
  return {{"status", conic::to_string(s.result.status)},
          {"objective", s.objective},
          {"beta", s.beta},
          {"rg_iterations", s.rg_iterations},
          {"max_violation", s.max_violation},
          {"constraint_groups", s.constraint_groups},
          {"reduced_accuracy", s.result.reduced_accuracy},
          {"ipm_iterations", s.result.iterations}};
}

inline nlohmann::json gap_json(const GapReport& g) {
  return {{"full_objective", g.full_objective}, {"reduced_objective", g.reduced_objective},
          {"gap", g.gap},                       {"relative_gap", g.relative_gap},
          {"nystrom_norm", g.nystrom_norm},     {"bound", g.bound}};
}

}  // namespace detail

struct CliOptions {
  std::string manifest;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string nu;
  std::string problem;
  std::string baseline;
  std::string out = ".";
  std::string format = "json";
  std::string suite;
  bool fast = false;
  bool no_rcr = false;
  bool no_rg = false;
  long seeds = 10;
  long herding_steps = 50;
  bool verbose = false;
};

namespace detail {

inline PipelineConfig pipeline_for(const Manifest& m, const CliOptions& o) {
  PipelineConfig pc = pipeline_from_json(m.pipeline, m.kernel);
  if (o.seed_set) pc.seed = o.seed;
  apply_nu_flag(pc, o.nu);
  if (o.no_rcr) pc.use_rcr = false;
  if (o.no_rg) pc.use_rg = false;
  pc.validate();
  return pc;
}

inline int cmd_fit(const CliOptions& o, std::ostream& out) {
  const Manifest m = read_manifest(o.manifest);
  const SourceCollection data = m.load();
  require(data.size() >= 2, "fit: need at least 2 sources, got " + std::to_string(data.size()));
  const PipelineConfig pc = pipeline_for(m, o);
  const KernelSpec spec = kernel_from_json(m.kernel, data);
  SMCConfig cfg;
  cfg.nu = pc.nu.value_or(0.5);
  const SMCSolution s = fit(spec, data, cfg);
  write_json(std::filesystem::path(o.out) / "smc.json", to_json(s));
  out << "sources " << data.size() << "  nu " << s.nu << "  |SM| " << s.sm.size() << "  |BSM| " << s.bsm.size()
      << "  |ESM| " << s.esm.size() << "  R^2 " << s.radius_sq << '\n';
  return 0;
}

inline int cmd_herd(const CliOptions& o, std::ostream& out) {
  const Manifest m = read_manifest(o.manifest);
  const SourceCollection data = m.load();
  PipelineConfig pc = pipeline_for(m, o);
  pc.herding_steps = o.herding_steps;
  const PreparedData prep = prepare(data, pc);
  std::ofstream f(std::filesystem::path(o.out) / "points.csv");
  if (!f) throw InputError(o.out + "/points.csv: cannot write");
  f.precision(17);
  write_points_csv(f, prep.points);
  out << "herded " << data.size() << " sources; |Upsilon| " << prep.points.upsilon.rows() << ", |Gamma| "
      << prep.points.gamma.rows() << '\n';
  return 0;
}

inline int cmd_solve(const CliOptions& o, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Manifest m = read_manifest(o.manifest);
  const SourceCollection data = m.load();
  nlohmann::json problem = m.problem;
  if (!o.problem.empty()) problem["name"] = o.problem;
  const auto loss = loss_from_json(problem, data);
  PipelineConfig pc = pipeline_for(m, o);
  if (!pc.use_rcr) pc.compare_full = false;

  ResultDocument doc;
  doc.command = "solve";
  doc.seed = pc.seed;
  doc.config = {{"problem", loss->to_json()}, {"sources", data.size()}, {"rcr", pc.use_rcr}, {"rg", pc.use_rg},
                {"herding_steps", pc.herding_steps}, {"baseline", o.baseline.empty() ? "none" : o.baseline}};
  int code = 0;
  if (!o.baseline.empty()) {
    BaselineResult b;
    if (o.baseline == "saa") b = saa_baseline(data, *loss, pc.ipm);
    else if (o.baseline == "dro-conv") b = dro_conv_baseline(data, *loss, pc.ipm);
    else throw InputError("unknown baseline '" + o.baseline + "' (expected saa or dro-conv)");
    doc.outputs = {{"method", o.baseline},
                   {"decision", to_std(b.decision)},
                   {"objective", b.objective},
                   {"status", conic::to_string(b.result.status)}};
  } else {
    require(data.size() >= 2, "solve: need at least 2 sources, got " + std::to_string(data.size()));
    std::optional<GapReport> gap;
    RoodResult r = run_rood_so(data, *loss, pc);
    if (o.no_rcr) {
      // Full program solved above; report the reduced counterpart's gap too.
      PipelineConfig reduced = pc;
      reduced.use_rcr = true;
      reduced.compare_full = true;
      const PreparedData prep = prepare(data, reduced);
      const RoodResult rr = solve_with_nu(data, *loss, reduced, prep, r.nu);
      gap = rr.gap;
    }
    doc.config["nu"] = r.nu;
    doc.outputs = {{"method", "rood-so"},
                   {"decision", to_std(r.decision)},
                   {"nu", r.nu},
                   {"smc", smc_summary(r.model.smc)},
                   {"bandwidth", r.model.spec.bandwidth},
                   {"upsilon", r.model.points.upsilon.rows()},
                   {"gamma", r.model.points.gamma.rows()},
                   {"solution", solution_json(r.solution)}};
    if (gap) doc.outputs["gap"] = gap_json(*gap);
    if (!r.solution.optimal()) code = 1;
  }
  doc.timing = {{"wall_time", std::chrono::duration<double>(clock::now() - start).count()}};
  write_json(std::filesystem::path(o.out) / "result.json", doc.to_json());
  if (o.format == "csv") {
    std::ostringstream csv;
    csv.precision(17);
    csv << "method,objective";
    const auto dec = doc.outputs.at("decision").get<std::vector<double>>();
    for (std::size_t k = 0; k < dec.size(); ++k) csv << ",x" << k;
    const double obj = doc.outputs.contains("solution") ? doc.outputs["solution"].value("objective", 0.0)
                                                        : doc.outputs.value("objective", 0.0);
    csv << '\n' << doc.outputs.at("method").get<std::string>() << ',' << obj;
    for (double v : dec) csv << ',' << v;
    csv << '\n';
    write_text(std::filesystem::path(o.out) / "report.csv", csv.str());
  }
  out << doc.outputs.dump(2) << '\n';
  return code;
}

inline int cmd_benchmark(const CliOptions& o, std::ostream& out) {
  BenchmarkConfig cfg;
  cfg.seed = o.seed;
  cfg.seeds = o.seeds;
  if (o.fast) cfg.make_fast();
  cfg.pipeline.herding_steps = o.herding_steps;
  apply_nu_flag(cfg.pipeline, o.nu);
  if (o.no_rcr) cfg.pipeline.use_rcr = false;
  if (o.no_rg) cfg.pipeline.use_rg = false;
  const ExperimentReport rep = benchmark(cfg);
  const std::filesystem::path dir(o.out);
  write_json(dir / "report.json", rep.to_json());
  write_json(dir / "timing.json", rep.timing_json());
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(dir / "report.csv", csv.str());
  for (const auto& s : cfg.settings) {
    out << s.name();
    for (const auto& meth : cfg.methods) out << "  " << meth << " " << rep.mean_cost(s.name(), meth);
    out << '\n';
  }
  return 0;
}

inline int cmd_verify(const CliOptions& o, std::ostream& out) {
  const SuiteReport r = run_suite(o.suite, o.seed);
  write_json(std::filesystem::path(o.out) / ("verify-" + o.suite + ".json"),
             {{"suite", r.suite}, {"passed", r.passed}, {"message", r.message}, {"details", r.details}});
  out << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.message << '\n';
  return r.passed ? 0 : 1;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Robust out-of-distribution stochastic optimization"};
  app.set_version_flag("--version", std::string(ROODSO_VERSION));
  app.require_subcommand(1);
  CliOptions o;
  auto common = [&](CLI::App* sub, bool manifest) {
    if (manifest) sub->add_option("--manifest", o.manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "64-bit seed")->each([&](const std::string&) { o.seed_set = true; });
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("-v,--verbose", o.verbose, "print warnings");
  };
  auto* fit_cmd = app.add_subcommand("fit", "fit the uncertainty ball and write smc.json");
  common(fit_cmd, true);
  fit_cmd->add_option("--nu", o.nu, "nu value");

  auto* solve_cmd = app.add_subcommand("solve", "run the full pipeline and write result.json");
  common(solve_cmd, true);
  solve_cmd->add_option("--nu", o.nu, "nu value, 'grid', start:step:stop or a,b,c");
  solve_cmd->add_option("--problem", o.problem, "newsvendor or portfolio")
      ->check(CLI::IsMember({"newsvendor", "portfolio"}));
  solve_cmd->add_option("--baseline", o.baseline, "saa or dro-conv")->check(CLI::IsMember({"saa", "dro-conv"}));
  solve_cmd->add_flag("--no-rcr", o.no_rcr, "expand over all of Upsilon and report the gap");
  solve_cmd->add_flag("--no-rg", o.no_rg, "solve with every constraint at once");
  solve_cmd->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  auto* bench_cmd = app.add_subcommand("benchmark", "synthetic newsvendor comparison grid");
  common(bench_cmd, false);
  bench_cmd->add_flag("--fast", o.fast, "20 test distributions x 2000 samples");
  bench_cmd->add_option("--seeds", o.seeds, "seeds per setting")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--nu", o.nu, "nu value or grid");
  bench_cmd->add_option("--herding-steps", o.herding_steps, "herding steps")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--no-rcr", o.no_rcr, "disable the reduced representer");
  bench_cmd->add_flag("--no-rg", o.no_rg, "disable row generation");
  bench_cmd->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  auto* verify_cmd = app.add_subcommand("verify", "run a verification suite");
  common(verify_cmd, false);
  verify_cmd->add_option("--suite", o.suite, "suite name")->required()->check(CLI::IsMember(verify_suites()));

  auto* herd_cmd = app.add_subcommand("herd", "dump herded subsets and supplemental points to points.csv");
  common(herd_cmd, true);
  herd_cmd->add_option("--steps", o.herding_steps, "herding steps")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto saved = warning_handler();
  if (!o.verbose) warning_handler() = nullptr;
  struct Restore {
    std::function<void(std::string_view)> h;
    ~Restore() { warning_handler() = h; }
  } restore{saved};
  try {
    std::filesystem::create_directories(o.out);
    if (*fit_cmd) return detail::cmd_fit(o, out);
    if (*solve_cmd) return detail::cmd_solve(o, out);
    if (*bench_cmd) return detail::cmd_benchmark(o, out);
    if (*verify_cmd) return detail::cmd_verify(o, out);
    if (*herd_cmd) return detail::cmd_herd(o, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace roodso
