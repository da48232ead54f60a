#pragma once

// CSV ingestion, manifests, and result documents.

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "roodso/pipeline.hpp"

namespace roodso {

struct ParseError : InputError {
  using InputError::InputError;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(trim(cell));
  return out;
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> columns;
  Matrix values;
};

/// Header row, then numeric rows. Errors name the file, line and column.
inline CsvTable parse_csv(std::istream& in, const std::string& name = "<stream>") {
  CsvTable t;
  std::string line;
  long lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                       " cells, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
        throw ParseError(name + ":" + std::to_string(lineno) + ": column " + std::to_string(c + 1) + " ('" +
                         t.columns[c] + "'): not a finite number: '" + s + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ParseError(name + ": empty file");
  if (rows.empty()) throw ParseError(name + ": no data rows");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  return parse_csv(in, path.string());
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& columns) {
  out.precision(17);
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

struct SourceEntry {
  std::string id;
  std::filesystem::path path;
  std::string label;
};

struct Manifest {
  std::vector<SourceEntry> sources;
  nlohmann::json kernel = nlohmann::json::object();
  nlohmann::json problem = nlohmann::json::object();
  nlohmann::json pipeline = nlohmann::json::object();
  std::filesystem::path base;

  SourceCollection load() const {
    std::vector<Dataset> ds;
    for (const auto& s : sources) {
      const auto full = s.path.is_absolute() ? s.path : base / s.path;
      ds.emplace_back(read_csv(full).values, s.label.empty() ? s.id : s.label);
    }
    return SourceCollection(std::move(ds));
  }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest: field '") + key + "': " + e.what());
  }
}

inline Vector get_vector(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("manifest: missing field '") + key + "'");
  const auto v = get_or<std::vector<double>>(j, key, {});
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace detail

inline Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  Manifest m;
  m.base = base;
  if (!j.is_object()) throw InputError("manifest: top level must be an object");
  if (!j.contains("sources") || !j.at("sources").is_array()) throw InputError("manifest: 'sources' must be an array");
  for (const auto& s : j.at("sources")) {
    SourceEntry e;
    e.id = detail::get_or<std::string>(s, "source_id", detail::get_or<std::string>(s, "id", ""));
    const std::string p = detail::get_or<std::string>(s, "csv_path", detail::get_or<std::string>(s, "path", ""));
    if (p.empty()) throw InputError("manifest: source '" + e.id + "' has no csv_path");
    e.path = p;
    e.label = detail::get_or<std::string>(s, "label", e.id);
    if (e.id.empty()) e.id = e.label.empty() ? p : e.label;
    m.sources.push_back(std::move(e));
  }
  if (j.contains("kernel")) m.kernel = j.at("kernel");
  if (j.contains("problem")) m.problem = j.at("problem");
  if (j.contains("pipeline")) m.pipeline = j.at("pipeline");
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": cannot open manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline KernelSpec kernel_from_json(const nlohmann::json& j, const SourceCollection& data) {
  KernelSpec spec;
  spec.family = kernel_family_from_string(detail::get_or<std::string>(j, "family", "rbf"));
  const double bw = detail::get_or<double>(j, "bandwidth", 0.0);
  spec.bandwidth = bw > 0.0 ? bw : median_heuristic(data);
  spec.validate();
  return spec;
}

/// Applies the manifest's pipeline and kernel sections on top of defaults.
inline PipelineConfig pipeline_from_json(const nlohmann::json& j, const nlohmann::json& kernel = {}) {
  PipelineConfig c;
  using detail::get_or;
  if (j.contains("nu_grid")) c.nu_grid = get_or<std::vector<double>>(j, "nu_grid", c.nu_grid);
  if (j.contains("nu") && !j.at("nu").is_null()) c.nu = get_or<double>(j, "nu", 0.5);
  c.herding_steps = get_or<long>(j, "herding_steps", c.herding_steps);
  c.supplemental = get_or<long>(j, "supplemental", c.supplemental);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.validation_fraction = get_or<double>(j, "validation_fraction", c.validation_fraction);
  c.use_rcr = get_or<bool>(j, "rcr", c.use_rcr);
  c.use_rg = get_or<bool>(j, "rg", c.use_rg);
  c.herded_gram = get_or<bool>(j, "herded_gram", c.herded_gram);
  const std::string rep = get_or<std::string>(j, "representation", "features");
  if (rep == "features") c.representation = Representation::features;
  else if (rep == "coefficients") c.representation = Representation::coefficients;
  else throw InputError("manifest: unknown representation '" + rep + "'");
  if (j.contains("row_generation")) {
    const auto& r = j.at("row_generation");
    c.rg.m0 = get_or<long>(r, "m0", c.rg.m0);
    c.rg.epsilon = get_or<double>(r, "epsilon", c.rg.epsilon);
    c.rg.i_max = get_or<long>(r, "i_max", c.rg.i_max);
    c.rg.c_max = get_or<long>(r, "c_max", c.rg.c_max);
  }
  if (kernel.is_object()) {
    c.family = kernel_family_from_string(get_or<std::string>(kernel, "family", "rbf"));
    c.bandwidth = get_or<double>(kernel, "bandwidth", 0.0);
  }
  c.validate();
  return c;
}

/// Builds the loss adapter named in the problem section.
inline std::unique_ptr<LossEncoder> loss_from_json(const nlohmann::json& j, const SourceCollection& data) {
  const std::string name = detail::get_or<std::string>(j, "name", "newsvendor");
  if (name == "newsvendor") {
    NewsvendorParams p = NewsvendorParams::two_item();
    if (j.contains("price")) {
      p.price = detail::get_vector(j, "price");
      p.cost = detail::get_vector(j, "cost");
      p.holding = detail::get_vector(j, "holding");
      p.backorder = detail::get_vector(j, "backorder");
    }
    require(p.dim() == data.dim(), "manifest: newsvendor has " + std::to_string(p.dim()) + " items but data has " +
                                       std::to_string(data.dim()) + " columns");
    Vector upper = j.contains("upper") ? detail::get_vector(j, "upper") : Newsvendor::demand_bound(data.pooled());
    return std::make_unique<Newsvendor>(p, upper);
  }
  if (name == "portfolio") {
    PortfolioParams p;
    p.delta1 = detail::get_or<double>(j, "delta1", p.delta1);
    p.delta2 = detail::get_or<double>(j, "delta2", p.delta2);
    return std::make_unique<CvarPortfolio>(data.dim(), p);
  }
  throw InputError("manifest: unknown problem '" + name + "'");
}

}  // namespace roodso
