#pragma once

#include <map>
#include <string>
#include <vector>

namespace sunroll {

// Long-format plot tables built from sweep.csv text: one table per y in
// {psnr, rss_mean, dof}, columns n_train,mode,sigma,mean,stderr,count, rows
// sorted by (mode, sigma, n_train). Only rows with status ok contribute.
std::map<std::string, std::string> report_tables(const std::string& sweep_csv);

// Reads <sweep_csv>, writes <out_dir>/plot_<y>.csv; returns the paths.
std::vector<std::string> write_report(const std::string& sweep_csv_path, const std::string& out_dir);

}  // namespace sunroll
