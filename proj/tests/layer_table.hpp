#pragma once

// The reference layer table, written out symbolically in (T, C) so model
// traces can be compared row for row.

#include <cstddef>
#include <string>
#include <vector>

#include "erpgan/models.hpp"

namespace layer_table {

struct Row {
  std::string label;                 // as printed in the table
  std::vector<erpgan::nn::LayerKind> kinds;  // accepted layer kinds
  erpgan::nn::Shape shape;
};

inline std::vector<Row> generator(std::size_t T, std::size_t C) {
  using K = erpgan::nn::LayerKind;
  return {
      {"Dense", {K::dense}, {T / 2}},
      {"Reshape", {K::reshape}, {2, T / 16, 4}},
      {"Batch normalization", {K::batchnorm}, {2, T / 16, 4}},
      {"up sampling", {K::upsample}, {4, T / 4, 4}},
      {"zero padding", {K::zeropad}, {5, T / 4, 4}},
      {"conv2D", {K::conv2d}, {5, T / 4, 8}},
      {"ReLU", {K::relu}, {5, T / 4, 8}},
      {"Batch normalization", {K::batchnorm}, {5, T / 4, 8}},
      {"up sampling", {K::upsample}, {10, T, 8}},
      {"conv2D", {K::conv2d}, {10, T, C}},
      {"ReLU", {K::relu}, {10, T, C}},
      {"Batch normalization", {K::batchnorm}, {10, T, C}},
      {"up sampling", {K::upsample}, {20, T, C}},
      {"permute", {K::permute}, {C, T, 20}},
      {"conv2D", {K::conv2d}, {C, T, 1}},
      // Output activation: ReLU when table-strict, linear by default.
      {"ReLU", {K::relu, K::linear}, {C, T, 1}},
  };
}

inline std::vector<Row> discriminator(std::size_t T, std::size_t C) {
  using K = erpgan::nn::LayerKind;
  // "ReLU" rows are implemented as leaky ReLU.
  return {
      {"Conv2D", {K::conv2d}, {C, T, 8}},
      {"ReLU", {K::relu, K::leaky_relu}, {C, T, 8}},
      {"dropout", {K::dropout}, {C, T, 8}},
      {"permute", {K::permute}, {8, T, C}},
      {"conv2D", {K::conv2d}, {8, T, 8}},
      {"ReLU", {K::relu, K::leaky_relu}, {8, T, 8}},
      {"max pooling", {K::maxpool}, {4, T / 4, 8}},
      {"dropout", {K::dropout}, {4, T / 4, 8}},
      {"Batch normalization", {K::batchnorm}, {4, T / 4, 8}},
      {"conv2D", {K::conv2d}, {4, T / 4, 4}},
      {"ReLU", {K::relu, K::leaky_relu}, {4, T / 4, 4}},
      {"max pooling", {K::maxpool}, {2, T / 16, 4}},
      {"dropout", {K::dropout}, {2, T / 16, 4}},
      {"Batch normalization", {K::batchnorm}, {2, T / 16, 4}},
      {"flatten", {K::flatten}, {T / 2}},
  };
}

/// Empty string when the trace conforms, otherwise a description of the
/// first differing row.
inline std::string compare(const std::vector<erpgan::nn::TraceRow>& trace, const std::vector<Row>& table) {
  if (trace.size() != table.size()) {
    return "row count " + std::to_string(trace.size()) + " != " + std::to_string(table.size());
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    bool kind_ok = false;
    for (auto k : table[i].kinds) kind_ok = kind_ok || k == trace[i].kind;
    if (!kind_ok || trace[i].shape != table[i].shape) {
      return "row " + std::to_string(i + 1) + " (" + table[i].label + "): got " +
             std::string(erpgan::nn::kind_name(trace[i].kind)) + " " + erpgan::nn::to_string(trace[i].shape) +
             ", table has " + erpgan::nn::to_string(table[i].shape);
    }
  }
  return {};
}

}  // namespace layer_table
