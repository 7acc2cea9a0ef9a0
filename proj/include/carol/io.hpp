#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace carol {

// Canonical float formatting for every CSV cell: round-trips the exact bits.
std::string format_double(double v);

// Embeddings CSV: header "label,e0,...,e{d-1}", one row per document.
void write_embeddings_csv(const std::string& path, const Eigen::MatrixXd& embeddings,
                          const std::vector<int>& labels);

struct LabeledEmbeddings {
  Eigen::MatrixXd embeddings;
  std::vector<int> labels;
};

LabeledEmbeddings read_embeddings_csv(const std::string& path);

// Projection CSV: header "x,y,label". Degenerate inputs with fewer than two
// principal directions pad the missing coordinates with zeros.
void write_projection_csv(const std::string& path, const Eigen::MatrixXd& projected,
                          const std::vector<int>& labels);

}  // namespace carol
