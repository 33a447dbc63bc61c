#include "seqmim/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqmim/losses.hpp"

namespace seqmim {

namespace {

Vector vector_from_json(const Json& j) {
  std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <class T>
T value_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// gamma / tau in the file: one list per token, one value per cluster.
Vector per_cluster(const Json& j, const ClusterIndex& index, const char* what) {
  Vector out(index.size());
  if (!j.is_array() || static_cast<int>(j.size()) != index.tokens())
    fail(ErrorCode::validation, std::string(what) + " needs one list per token");
  for (int l = 0; l < index.tokens(); ++l) {
    const auto& row = j[static_cast<std::size_t>(l)];
    if (!row.is_array() || static_cast<int>(row.size()) != index.clusters(l))
      fail(ErrorCode::validation, std::string(what) + " needs K_l values for token " + std::to_string(l + 1));
    for (int k = 0; k < index.clusters(l); ++k) out(index.flat(l, k)) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return out;
}

Json per_cluster_to_json(const Vector& v, const ClusterIndex& index) {
  Json out = Json::array();
  for (int l = 0; l < index.tokens(); ++l) {
    Json row = Json::array();
    for (int k = 0; k < index.clusters(l); ++k) row.push_back(v(index.flat(l, k)));
    out.push_back(row);
  }
  return out;
}

}  // namespace

ZooInstance model_from_json(const Json& j) {
  try {
    if (j.contains("instance")) {
      ZooInstance z = make_instance(j.at("instance").get<std::string>(), value_or(j, "alpha", 1.0));
      if (j.contains("lambda")) z.spec.dims.lambda = j.at("lambda").get<double>();
      if (j.contains("d")) z.spec.dims.d = j.at("d").get<int>();
      return z;
    }
    ZooInstance z;
    z.name = value_or<std::string>(j, "name", "custom");
    const Json& dj = j.at("dimensions");
    Dimensions& dims = z.spec.dims;
    dims.L = dj.at("L").get<int>();
    dims.r = dj.at("r").get<int>();
    dims.t = dj.at("t").get<int>();
    dims.K = dj.at("K").get<std::vector<int>>();
    dims.alpha = dj.at("alpha").get<double>();
    dims.lambda = dj.at("lambda").get<double>();
    dims.d = value_or(dj, "d", 1000);
    if (static_cast<int>(dims.K.size()) != dims.L) fail(ErrorCode::validation, "dimensions.K needs L entries");
    const ClusterIndex index(dims.K);

    for (const auto& row : j.at("class_law")) {
      ClassTuple c = row.at("classes").get<std::vector<int>>();
      for (int& k : c) --k;  // 1-based in files
      z.spec.law.support.push_back(c);
      z.spec.law.probs.push_back(row.at("prob").get<double>());
    }
    for (const auto& row : j.at("spectral_atoms")) {
      SpectralAtom a;
      a.weight = row.at("weight").get<double>();
      a.gamma = per_cluster(row.at("gamma"), index, "gamma");
      a.tau = per_cluster(row.at("tau"), index, "tau");
      a.pi = vector_from_json(row.at("pi"));
      z.nu.atoms.push_back(a);
    }
    z.spec.nu = z.nu;
    const Json& lj = j.at("loss");
    z.spec.loss_spec.name = lj.at("name").get<std::string>();
    if (lj.contains("params"))
      for (const auto& [k, v] : lj.at("params").items()) z.spec.loss_spec.params[k] = v.get<double>();
    z.spec.loss_spec.test_name = value_or<std::string>(lj, "test", "");
    z.spec.loss = make_loss(z.spec.loss_spec, dims);
    return z;
  } catch (const Json::exception& e) {
    fail(ErrorCode::validation, std::string("model config: ") + e.what());
  }
}

Json model_to_json(const ZooInstance& inst) {
  const auto& s = inst.spec;
  const ClusterIndex index(s.dims.K);
  Json j;
  j["name"] = inst.name;
  j["dimensions"] = {{"L", s.dims.L}, {"r", s.dims.r}, {"t", s.dims.t}, {"K", s.dims.K},
                     {"alpha", s.dims.alpha}, {"lambda", s.dims.lambda}, {"d", s.dims.d}};
  Json law = Json::array();
  for (std::size_t i = 0; i < s.law.support.size(); ++i) {
    std::vector<int> c = s.law.support[i];
    for (int& k : c) ++k;
    law.push_back({{"classes", c}, {"prob", s.law.probs[i]}});
  }
  j["class_law"] = law;
  Json atoms = Json::array();
  for (const auto& a : inst.nu.atoms)
    atoms.push_back({{"weight", a.weight}, {"gamma", per_cluster_to_json(a.gamma, index)},
                     {"tau", per_cluster_to_json(a.tau, index)}, {"pi", vector_to_json(a.pi)}});
  j["spectral_atoms"] = atoms;
  Json params = Json::object();
  for (const auto& [k, v] : s.loss_spec.params) params[k] = v;
  j["loss"] = {{"name", s.loss_spec.name}, {"params", params}};
  if (!s.loss_spec.test_name.empty()) j["loss"]["test"] = s.loss_spec.test_name;
  return j;
}

McPlan mc_plan_from_json(const Json& j, McPlan base) {
  try {
    base.n_samples = value_or(j, "n_samples", base.n_samples);
    base.seed = value_or(j, "seed", base.seed);
    base.antithetic = value_or(j, "antithetic", base.antithetic);
    base.crn = value_or(j, "crn", base.crn);
    base.gh_order = value_or(j, "gh_order", base.gh_order);
    base.workers = value_or(j, "workers", base.workers);
    if (j.contains("method")) {
      const auto m = j.at("method").get<std::string>();
      if (m == "monte_carlo") base.method = QuadratureMethod::monte_carlo;
      else if (m == "gauss_hermite") base.method = QuadratureMethod::gauss_hermite;
      else fail(ErrorCode::validation, "unknown mc.method '" + m + "'");
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::validation, std::string("mc config: ") + e.what());
  }
  if (base.n_samples < 1) fail(ErrorCode::validation, "mc.n_samples must be >= 1");
  return base;
}

Json mc_plan_to_json(const McPlan& plan) {
  return {{"n_samples", plan.n_samples},
          {"seed", plan.seed},
          {"antithetic", plan.antithetic},
          {"crn", plan.crn},
          {"method", plan.method == QuadratureMethod::gauss_hermite ? "gauss_hermite" : "monte_carlo"},
          {"gh_order", plan.gh_order}};
}

SolverConfig solver_config_from_json(const Json& j, SolverConfig base) {
  try {
    base.damping = value_or(j, "damping", base.damping);
    base.eps_init = value_or(j, "eps_init", base.eps_init);
    base.tol = value_or(j, "tol", base.tol);
    base.max_iters = value_or(j, "max_iters", base.max_iters);
    base.record_trajectory = value_or(j, "record_trajectory", base.record_trajectory);
    if (j.contains("init")) {
      const auto s = j.at("init").get<std::string>();
      if (s == "cold") base.init = InitKind::cold;
      else if (s == "informed") base.init = InitKind::informed;
      else if (s == "gamp") base.init = InitKind::gamp;
      else if (s == "warm") base.init = InitKind::warm;
      else fail(ErrorCode::validation, "unknown solver.init '" + s + "'");
    }
    if (j.contains("hat_form")) {
      const auto s = j.at("hat_form").get<std::string>();
      if (s == "automatic") base.hat_form = HatForm::automatic;
      else if (s == "stein") base.hat_form = HatForm::stein;
      else if (s == "jacobian") base.hat_form = HatForm::jacobian;
      else fail(ErrorCode::validation, "unknown solver.hat_form '" + s + "'");
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::validation, std::string("solver config: ") + e.what());
  }
  if (!(base.damping >= 0 && base.damping < 1)) fail(ErrorCode::validation, "solver.damping must lie in [0, 1)");
  if (!(base.tol > 0)) fail(ErrorCode::validation, "solver.tol must be positive");
  return base;
}

Json matrix_to_json(const Matrix& A) {
  std::vector<double> data;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index k = 0; k < A.cols(); ++k) data.push_back(A(i, k));
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) fail(ErrorCode::io, "matrix size mismatch");
  Matrix A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) A(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return A;
}

namespace {

template <class T>
Json cluster_map_to_json(const ClusterMap<T>& m) {
  Json out = Json::array();
  const auto& idx = m.index();
  for (int f = 0; f < m.size(); ++f) {
    Matrix value = m.at(f);
    out.push_back({{"token", idx.token_of(f) + 1}, {"cluster", idx.cluster_of(f) + 1}, {"value", matrix_to_json(value)}});
  }
  return out;
}

}  // namespace

Json order_parameters_to_json(const OrderParameters& p) {
  return {{"q", cluster_map_to_json(p.q)},
          {"V", cluster_map_to_json(p.V)},
          {"m", cluster_map_to_json(p.m)},
          {"theta", cluster_map_to_json(p.theta)},
          {"v", matrix_to_json(p.v)}};
}

Json conjugate_parameters_to_json(const ConjugateParameters& p) {
  return {{"q_hat", cluster_map_to_json(p.q_hat)},
          {"V_hat", cluster_map_to_json(p.V_hat)},
          {"m_hat", cluster_map_to_json(p.m_hat)},
          {"theta_hat", cluster_map_to_json(p.theta_hat)},
          {"v_hat", matrix_to_json(p.v_hat)}};
}

Json report_to_json(const FixedPointReport& rep) {
  return {{"converged", rep.converged},
          {"iterations", rep.iterations},
          {"residual_history", rep.residual_history},
          {"hat_stderr", rep.hat_stderr},
          {"free_entropy", {{"value", rep.free_entropy.value}, {"stderr", rep.free_entropy.stderr_}}},
          {"test_error", {{"value", rep.test_error.value}, {"stderr", rep.test_error.stderr_}}},
          {"train_loss", {{"value", rep.train_loss.value}, {"stderr", rep.train_loss.stderr_}}},
          {"params", order_parameters_to_json(rep.params)},
          {"conj", conjugate_parameters_to_json(rep.conj)}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path);
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::exception& e) {
    fail(ErrorCode::validation, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  out << j.dump(2) << '\n';
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) fail(ErrorCode::validation, "table row has the wrong number of cells");
  rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  fail(ErrorCode::validation, "no column '" + name + "'");
}

double Table::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  try {
    return std::stod(cell);
  } catch (...) {
    fail(ErrorCode::validation, "cell '" + cell + "' in column " + name + " is not a number");
  }
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_table(std::ostream& out, const Table& table) {
  for (const auto& [k, v] : table.meta) out << "# " << k << ": " << v << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_table(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  write_table(out, table);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) fail(ErrorCode::io, "bad metadata line: " + line);
      t.meta.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    if (line.empty()) continue;
    if (!header) {
      t.columns = split_csv(line);
      header = true;
    } else {
      auto row = split_csv(line);
      if (row.size() != t.columns.size()) fail(ErrorCode::io, "ragged table row: " + line);
      t.rows.push_back(std::move(row));
    }
  }
  if (!header) fail(ErrorCode::io, "table has no header");
  return t;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path);
  return read_table(in);
}

SummaryStats stats_from_overlaps(const OrderParameters& p) {
  return SummaryStats{0, p.q, p.m, p.theta, p.v, 0.0};
}

std::vector<double> flatten_stats(const SummaryStats& s) {
  std::vector<double> out;
  auto push = [&](const Matrix& A) {
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (Eigen::Index k = 0; k < A.cols(); ++k) out.push_back(A(i, k));
  };
  for (const auto& q : s.q) push(q);
  for (const auto& m : s.m) push(m);
  for (const auto& th : s.theta) push(th);
  push(s.v);
  return out;
}

namespace {

std::vector<std::string> stats_labels(const SummaryStats& s) {
  std::vector<std::string> out;
  const auto& idx = s.q.index();
  auto push = [&](const std::string& name, int f, const Matrix& A) {
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (Eigen::Index k = 0; k < A.cols(); ++k) {
        std::string label = name;
        if (f >= 0) label += "_" + std::to_string(idx.token_of(f) + 1) + "_" + std::to_string(idx.cluster_of(f) + 1);
        out.push_back(label + "_" + std::to_string(i + 1) + std::to_string(k + 1));
      }
  };
  for (int f = 0; f < s.q.size(); ++f) push("q", f, s.q.at(f));
  for (int f = 0; f < s.m.size(); ++f) push("m", f, s.m.at(f));
  for (int f = 0; f < s.theta.size(); ++f) push("theta", f, s.theta.at(f));
  push("v", -1, s.v);
  return out;
}

}  // namespace

Table stats_trajectory_table(const std::vector<SummaryStats>& trajectory) {
  Table t;
  if (trajectory.empty()) {
    t.columns = {"iteration", "residual"};
    return t;
  }
  t.columns.push_back("iteration");
  for (auto& l : stats_labels(trajectory.front())) t.columns.push_back(l);
  t.columns.push_back("residual");
  for (const auto& s : trajectory) {
    std::vector<std::string> row{std::to_string(s.iteration)};
    for (double x : flatten_stats(s)) row.push_back(format_number(x));
    row.push_back(format_number(s.residual));
    t.add_row(std::move(row));
  }
  return t;
}

Table se_trajectory_table(const FixedPointReport& rep) {
  Table t;
  if (rep.trajectory.empty()) {
    t.columns = {"iteration", "residual"};
    return t;
  }
  t.columns.push_back("iteration");
  for (auto& l : pack_labels(rep.trajectory.front().params)) t.columns.push_back(l);
  for (auto& l : pack_labels(rep.trajectory.front().conj)) t.columns.push_back(l);
  t.columns.push_back("residual");
  for (const auto& p : rep.trajectory) {
    std::vector<std::string> row{std::to_string(p.iteration)};
    const Vector a = pack(p.params), b = pack(p.conj);
    for (Eigen::Index i = 0; i < a.size(); ++i) row.push_back(format_number(a(i)));
    for (Eigen::Index i = 0; i < b.size(); ++i) row.push_back(format_number(b(i)));
    row.push_back(format_number(p.residual));
    t.add_row(std::move(row));
  }
  return t;
}

}  // namespace seqmim
