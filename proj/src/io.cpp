#include "carol/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "carol/errors.hpp"

namespace carol {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  return out;
}

void check_labels(const Eigen::MatrixXd& m, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows())
    throw std::invalid_argument("labels do not align with matrix rows");
}

}  // namespace

void write_embeddings_csv(const std::string& path, const Eigen::MatrixXd& embeddings,
                          const std::vector<int>& labels) {
  check_labels(embeddings, labels);
  auto out = open_out(path);
  out << "label";
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) out << ",e" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    out << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j)
      out << "," << format_double(embeddings(i, j));
    out << "\n";
  }
  if (!out) throw DataError("write failed on " + path);
}

LabeledEmbeddings read_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  auto fail = [&path](std::size_t line_no, const std::string& what) -> DataError {
    return DataError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  std::size_t cols = 0;
  {
    std::stringstream header(line);
    std::string cell;
    if (!std::getline(header, cell, ',') || cell != "label")
      throw fail(1, "expected header starting with 'label'");
    while (std::getline(header, cell, ',')) {
      if (cell != "e" + std::to_string(cols)) throw fail(1, "unexpected column '" + cell + "'");
      ++cols;
    }
    if (cols == 0) throw fail(1, "no embedding columns");
  }

  std::vector<int> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) throw fail(line_no, "empty row");
    try {
      std::size_t used = 0;
      int label = std::stoi(cell, &used);
      if (used != cell.size() || (label != 0 && label != 1))
        throw fail(line_no, "label must be 0 or 1, got '" + cell + "'");
      labels.push_back(label);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw fail(line_no, "label must be 0 or 1, got '" + cell + "'");
    }
    std::size_t got = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw fail(line_no, "bad number '" + cell + "'");
      }
      ++got;
    }
    if (got != cols)
      throw fail(line_no, "expected " + std::to_string(cols) + " values, got " + std::to_string(got));
  }
  if (labels.empty()) throw fail(line_no, "no data rows");

  LabeledEmbeddings result;
  result.labels = std::move(labels);
  result.embeddings.resize(static_cast<Eigen::Index>(result.labels.size()),
                           static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < result.embeddings.rows(); ++i)
    for (Eigen::Index j = 0; j < result.embeddings.cols(); ++j)
      result.embeddings(i, j) =
          values[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j)];
  return result;
}

void write_projection_csv(const std::string& path, const Eigen::MatrixXd& projected,
                          const std::vector<int>& labels) {
  check_labels(projected, labels);
  auto out = open_out(path);
  out << "x,y,label\n";
  for (Eigen::Index i = 0; i < projected.rows(); ++i) {
    const double x = projected.cols() > 0 ? projected(i, 0) : 0.0;
    const double y = projected.cols() > 1 ? projected(i, 1) : 0.0;
    out << format_double(x) << "," << format_double(y) << ","
        << labels[static_cast<std::size_t>(i)] << "\n";
  }
  if (!out) throw DataError("write failed on " + path);
}

}  // namespace carol
