#pragma once

#include <string>
#include <vector>

#include "mekf/dataset.hpp"

namespace mekf {

// column mapping for delimited ingestion: one file per environment, header
// row names the columns, one column holds the outcome
struct CsvSchema {
  std::string outcome_column = "y";
  Family family = Family::continuous;
  // environment ids; when empty, file basenames (without extension) are used
  std::vector<std::string> env_ids;
};

MultiEnvDataset load_multienv_csv(const std::vector<std::string>& paths, const CsvSchema& schema);

// plain numeric matrix with a header row of variable names (knockoff files,
// haplotype/genotype grids exported by the CLI)
void save_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& col_names,
                     const std::string& path);
Eigen::MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* col_names = nullptr);

}  // namespace mekf
