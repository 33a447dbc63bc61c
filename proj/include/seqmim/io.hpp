#pragma once

// Configuration and result formats. Model specs and reports are JSON
// documents; learning curves and trajectories are CSV tables preceded by
// "# key: value" metadata lines.

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <utility>

#include "seqmim/erm.hpp"
#include "seqmim/gamp.hpp"
#include "seqmim/saddle.hpp"
#include "seqmim/zoo.hpp"

namespace seqmim {

using Json = nlohmann::json;

// A model section is either {"instance": name, "alpha": a, ...overrides}
// or a full inline description (see the README config reference).
ZooInstance model_from_json(const Json& j);
Json model_to_json(const ZooInstance& inst);

McPlan mc_plan_from_json(const Json& j, McPlan base = {});
Json mc_plan_to_json(const McPlan& plan);
SolverConfig solver_config_from_json(const Json& j, SolverConfig base = {});

Json matrix_to_json(const Matrix& A);
Matrix matrix_from_json(const Json& j);
Json order_parameters_to_json(const OrderParameters& p);
Json conjugate_parameters_to_json(const ConjugateParameters& p);
Json report_to_json(const FixedPointReport& rep);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

struct Table {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

std::string format_number(double x);
void write_table(std::ostream& out, const Table& table);
void write_table(const std::string& path, const Table& table);
Table read_table(std::istream& in);
Table read_table(const std::string& path);

Table se_trajectory_table(const FixedPointReport& rep);
Table stats_trajectory_table(const std::vector<SummaryStats>& trajectory);

// Same flattening as stats_trajectory_table, for joining SE and GAMP rows.
std::vector<double> flatten_stats(const SummaryStats& s);
SummaryStats stats_from_overlaps(const OrderParameters& p);

}  // namespace seqmim
