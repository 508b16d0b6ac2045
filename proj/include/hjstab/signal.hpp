#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/csv.hpp"
#include "hjstab/tensor.hpp"

namespace hjstab {

// Uniformly sampled multichannel time series, row-major T x d.
struct Signal {
  double dt = 0.0;
  int steps = 0;
  int dim = 0;
  std::vector<double> values;
  std::vector<std::string> labels;

  static Signal make(double dt, int steps, int dim) {
    Signal s;
    s.dt = dt;
    s.steps = steps;
    s.dim = dim;
    s.values.assign(static_cast<std::size_t>(steps) * dim, 0.0);
    return s;
  }

  double& at(int t, int j) { return values[static_cast<std::size_t>(t) * dim + j]; }
  double at(int t, int j) const { return values[static_cast<std::size_t>(t) * dim + j]; }

  Tensor row(int t) const {
    Tensor out = Tensor::zeros({dim});
    for (int j = 0; j < dim; ++j) out[j] = at(t, j);
    return out;
  }

  void set_row(int t, const Tensor& v) {
    if (static_cast<int>(v.size()) != dim) throw std::invalid_argument("signal: row dim mismatch");
    for (int j = 0; j < dim; ++j) at(t, j) = v[j];
  }

  std::string label(int j) const {
    if (j < static_cast<int>(labels.size())) return labels[j];
    return "ch" + std::to_string(j);
  }

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("signal: dt must be positive");
    if (steps < 1) throw std::invalid_argument("signal: needs at least one step");
    if (dim < 1) throw std::invalid_argument("signal: needs at least one channel");
    if (values.size() != static_cast<std::size_t>(steps) * dim) {
      throw std::invalid_argument("signal: value count mismatch");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("signal: non-finite value");
    }
  }

  void to_csv(std::ostream& out) const {
    out << "t";
    for (int j = 0; j < dim; ++j) out << "," << label(j);
    out << "\n";
    for (int t = 0; t < steps; ++t) {
      out << format_double(t * dt);
      for (int j = 0; j < dim; ++j) out << "," << format_double(at(t, j));
      out << "\n";
    }
  }

  // dt is inferred from the time column; fallback_dt covers one-row signals.
  static Signal from_csv(std::istream& in, double fallback_dt = 1.0) {
    auto lines = read_lines(in);
    if (lines.empty()) throw std::runtime_error("signal csv: empty file");
    auto header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "t") {
      throw std::runtime_error("signal csv: header must start with 't'");
    }
    Signal s;
    s.dim = static_cast<int>(header.size()) - 1;
    s.labels.assign(header.begin() + 1, header.end());
    std::vector<double> times;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      auto cells = split_csv_line(lines[i]);
      if (static_cast<int>(cells.size()) != s.dim + 1) {
        throw std::runtime_error("signal csv: row " + std::to_string(i) + " has wrong arity");
      }
      times.push_back(parse_double(cells[0]));
      for (int j = 0; j < s.dim; ++j) s.values.push_back(parse_double(cells[j + 1]));
    }
    s.steps = static_cast<int>(times.size());
    s.dt = s.steps >= 2 ? times[1] - times[0] : fallback_dt;
    s.validate();
    return s;
  }
};

}  // namespace hjstab
