#include "sunroll/report.hpp"

#include <cmath>
#include <filesystem>
#include <tuple>
#include <vector>

#include "binary_io.hpp"
#include "csv.hpp"
#include "sunroll/error.hpp"

namespace sunroll {

std::map<std::string, std::string> report_tables(const std::string& sweep_csv) {
  const detail::CsvTable table = detail::parse_csv(sweep_csv);
  if (table.rows.empty()) throw FormatError("report: sweep table has no data rows");
  const std::size_t c_n = table.column("n_train");
  const std::size_t c_mode = table.column("mode");
  const std::size_t c_sigma = table.column("sigma");
  const std::size_t c_status = table.column("status");
  const std::vector<std::pair<std::string, std::size_t>> series = {
      {"psnr", table.column("psnr")}, {"rss_mean", table.column("rss_mean")}, {"dof", table.column("dof_exact_mean")}};

  using Key = std::tuple<std::string, double, double>;  // mode, sigma, n_train
  std::map<std::string, std::string> out;
  for (const auto& [name, col] : series) {
    std::map<Key, std::vector<double>> groups;
    for (const auto& row : table.rows) {
      if (row[c_status] != "ok") continue;
      const Key key{row[c_mode], detail::parse_number(row[c_sigma]), detail::parse_number(row[c_n])};
      const double v = detail::parse_number(row[col]);
      auto& g = groups[key];
      if (std::isfinite(v)) g.push_back(v);
    }
    detail::CsvTable plot;
    plot.header = {"n_train", "mode", "sigma", "mean", "stderr", "count"};
    for (const auto& [key, values] : groups) {
      double mean = std::nan(""), se = std::nan("");
      if (!values.empty()) {
        mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
      }
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        se = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
      }
      plot.rows.push_back({detail::format_number(std::get<2>(key)), std::get<0>(key),
                           detail::format_number(std::get<1>(key)), detail::format_number(mean),
                           detail::format_number(se), std::to_string(values.size())});
    }
    out[name] = detail::write_csv(plot);
  }
  return out;
}

std::vector<std::string> write_report(const std::string& sweep_csv_path, const std::string& out_dir) {
  const auto tables = report_tables(detail::read_file(sweep_csv_path));
  std::vector<std::string> paths;
  for (const auto& [name, text] : tables) {
    const std::string path = (std::filesystem::path(out_dir) / ("plot_" + name + ".csv")).string();
    detail::write_file_atomic(path, text);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace sunroll
