#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

#include "stlmm/ecme.hpp"
#include "stlmm/simulation.hpp"

namespace stlmm {

using Json = nlohmann::ordered_json;

/// Long-format CSV: one observation per row, header required. The column name
/// "1" in columns.fixed / columns.random stands for a column of ones. Rows keep
/// their file order within a subject.
LongDataset read_long_csv(const std::filesystem::path& path, const ColumnInfo& columns);
LongDataset parse_long_csv(std::istream& in, const ColumnInfo& columns, const std::string& source = "input");

/// Subject, response and every named design column, one row per observation.
std::string long_csv(const LongDataset& data);

/// Estimates keyed by parameter name, nu last when the family has one.
Json theta_json(const Theta& theta);
Json fit_report(const FitResult& fit, const LongDataset& data, const std::optional<VectorXd>& se_numerical = std::nullopt);
Json truth_sidecar(const Scenario& scenario, std::uint64_t seed);

std::string mc_summary_csv(const McSummary& summary);
std::string density_csv(const MatrixXd& density, const GridSpec& grid);

/// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

}  // namespace stlmm
