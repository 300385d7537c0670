#include "stlmm/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stlmm/inference.hpp"

namespace stlmm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
    throw Error(ErrorCode::Parse, "row " + std::to_string(line) + ", column '" + column + "': missing value");
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto res = std::from_chars(cell.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw Error(ErrorCode::Parse,
                "row " + std::to_string(line) + ", column '" + column + "': non-numeric value '" + cell + "'");
  return v;
}

std::vector<std::string> named_columns(const ColumnInfo& c) {
  std::vector<std::string> out;
  for (const auto* list : {&c.fixed, &c.random})
    for (const auto& n : *list)
      if (n != "1" && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

LongDataset parse_long_csv(std::istream& in, const ColumnInfo& columns, const std::string& source) {
  if (columns.subject.empty() || columns.response.empty())
    throw Error(ErrorCode::InvalidArgument, "subject and response columns must be named");
  if (columns.fixed.empty()) throw Error(ErrorCode::InvalidArgument, "no fixed-effect columns given");
  if (columns.random.empty()) throw Error(ErrorCode::InvalidArgument, "no random-effect columns given");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, source + ": empty file, header row required");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  auto locate = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorCode::InvalidArgument, source + ": unknown column '" + name + "'");
    return it->second;
  };
  const std::size_t sub_col = locate(columns.subject);
  const std::size_t y_col = locate(columns.response);
  auto design = [&](const std::vector<std::string>& names) {
    std::vector<std::optional<std::size_t>> cols;
    for (const auto& n : names) cols.push_back(n == "1" ? std::nullopt : std::optional<std::size_t>(locate(n)));
    return cols;
  };
  const auto x_cols = design(columns.fixed);
  const auto z_cols = design(columns.random);

  struct Rows {
    std::vector<double> y;
    std::vector<std::vector<double>> x, z;
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::Parse, source + ": row " + std::to_string(line_no) + " has " +
                                        std::to_string(cells.size()) + " fields, header has " +
                                        std::to_string(header.size()));
    const std::string& id = cells[sub_col];
    if (id.empty())
      throw Error(ErrorCode::Parse, "row " + std::to_string(line_no) + ", column '" + columns.subject + "': missing value");
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    Rows& r = it->second;
    r.y.push_back(parse_cell(cells[y_col], line_no, columns.response));
    auto fill = [&](const auto& cols, const std::vector<std::string>& names) {
      std::vector<double> v;
      for (std::size_t k = 0; k < cols.size(); ++k)
        v.push_back(cols[k] ? parse_cell(cells[*cols[k]], line_no, names[k]) : 1.0);
      return v;
    };
    r.x.push_back(fill(x_cols, columns.fixed));
    r.z.push_back(fill(z_cols, columns.random));
  }
  if (order.empty()) throw Error(ErrorCode::Parse, source + ": no data rows");
  std::vector<SubjectBlock> blocks;
  for (const auto& id : order) {
    const Rows& r = rows.at(id);
    SubjectBlock b;
    b.id = id;
    const auto n = Eigen::Index(r.y.size());
    b.y = Eigen::Map<const VectorXd>(r.y.data(), n);
    b.X.resize(n, Eigen::Index(x_cols.size()));
    b.Z.resize(n, Eigen::Index(z_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < b.X.cols(); ++j) b.X(i, j) = r.x[std::size_t(i)][std::size_t(j)];
      for (Eigen::Index j = 0; j < b.Z.cols(); ++j) b.Z(i, j) = r.z[std::size_t(i)][std::size_t(j)];
    }
    blocks.push_back(std::move(b));
  }
  return LongDataset(std::move(blocks), columns);
}

LongDataset read_long_csv(const std::filesystem::path& path, const ColumnInfo& columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  return parse_long_csv(in, columns, path.string());
}

std::string long_csv(const LongDataset& data) {
  const ColumnInfo& c = data.columns();
  const auto named = named_columns(c);
  std::ostringstream os;
  os << c.subject << ',' << c.response;
  for (const auto& n : named) os << ',' << n;
  os << '\n';
  // value of each named column, from X when it is there and Z otherwise
  std::vector<std::pair<bool, Eigen::Index>> source;
  for (const auto& n : named) {
    const auto fx = std::find(c.fixed.begin(), c.fixed.end(), n);
    if (fx != c.fixed.end()) {
      source.emplace_back(true, fx - c.fixed.begin());
    } else {
      source.emplace_back(false, std::find(c.random.begin(), c.random.end(), n) - c.random.begin());
    }
  }
  for (const auto& s : data.subjects()) {
    for (Eigen::Index i = 0; i < s.n(); ++i) {
      os << s.id << ',' << format_number(s.y(i));
      for (const auto& [fixed, j] : source) os << ',' << format_number(fixed ? s.X(i, j) : s.Z(i, j));
      os << '\n';
    }
  }
  return os.str();
}

Json theta_json(const Theta& theta) {
  Json out = Json::object();
  const auto names = theta_star_names(theta);
  const VectorXd x = pack_theta_star(theta);
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = x(Eigen::Index(i));
  if (is_heavy_tailed(theta.family)) out["nu"] = theta.nu.value();
  return out;
}

Json fit_report(const FitResult& fit, const LongDataset& data, const std::optional<VectorXd>& se_numerical) {
  const Theta& t = fit.theta;
  Json r = Json::object();
  r["family"] = std::string(to_string(t.family));
  r["structure"] = std::string(to_string(t.structure));
  r["rank"] = t.r();
  r["n_subjects"] = data.size();
  r["n_obs"] = data.n_obs();
  r["estimates"] = theta_json(t);
  const auto names = theta_star_names(t);
  auto se_block = [&](const std::optional<VectorXd>& se) {
    if (!se) return Json(nullptr);
    Json o = Json::object();
    for (std::size_t i = 0; i < names.size(); ++i) o[names[i]] = (*se)(Eigen::Index(i));
    return o;
  };
  r["se_louis"] = se_block(fit.se);
  if (se_numerical) r["se_numerical"] = se_block(se_numerical);
  r["loglik"] = fit.loglik;
  r["aic"] = fit.aic;
  r["npar"] = fit.npar;
  r["iterations"] = fit.n_iter;
  r["converged"] = fit.converged;
  r["init_strategy"] = std::string(to_string(fit.init_strategy));
  Json cands = Json::array();
  for (const auto& c : fit.candidates)
    cands.push_back({{"strategy", std::string(to_string(c.strategy))},
                     {"loglik", c.loglik},
                     {"iterations", c.n_iter},
                     {"converged", c.converged}});
  r["candidates"] = cands;
  r["message"] = fit.message;
  r["loglik_trace"] = fit.loglik_trace;
  if (!fit.random_effects.empty()) {
    Json re = Json::array();
    for (std::size_t i = 0; i < fit.random_effects.size(); ++i) {
      const VectorXd& b = fit.random_effects[i];
      re.push_back({{"subject", data[i].id}, {"b", std::vector<double>(b.data(), b.data() + b.size())}});
    }
    r["random_effects"] = re;
  }
  return r;
}

Json truth_sidecar(const Scenario& scenario, std::uint64_t seed) {
  Json j = Json::object();
  j["scenario"] = scenario.name;
  j["N"] = scenario.N;
  j["seed"] = seed;
  j["family"] = std::string(to_string(scenario.truth.family));
  j["structure"] = std::string(to_string(scenario.truth.structure));
  j["truth"] = theta_json(scenario.truth);
  j["x"] = std::vector<double>(scenario.x.data(), scenario.x.data() + scenario.x.size());
  if (!scenario.note.empty()) j["note"] = scenario.note;
  return j;
}

std::string mc_summary_csv(const McSummary& s) {
  std::ostringstream os;
  os << "parameter,true,mc_av,mc_sd,se_l_mean,se_n_mean,n_ok\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : s.rows) {
    os << r.parameter << ',' << (std::isnan(r.truth) ? std::string() : format_number(r.truth)) << ','
       << format_number(r.mc_av) << ',' << opt(r.mc_sd) << ',' << opt(r.se_l_mean) << ',' << opt(r.se_n_mean) << ','
       << r.n_ok << '\n';
  }
  return os.str();
}

std::string density_csv(const MatrixXd& density, const GridSpec& grid) {
  std::ostringstream os;
  for (int j = 0; j < grid.nx; ++j) {
    if (j) os << ',';
    os << format_number(grid.x_min + (grid.x_max - grid.x_min) * double(j) / double(grid.nx - 1));
  }
  os << '\n';
  for (Eigen::Index i = 0; i < density.rows(); ++i) {
    for (Eigen::Index j = 0; j < density.cols(); ++j) {
      if (j) os << ',';
      os << format_number(density(i, j));
    }
    os << '\n';
  }
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::Io, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

}  // namespace stlmm
