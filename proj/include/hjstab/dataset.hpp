#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjstab/signal.hpp"
#include "hjstab/tensor.hpp"

namespace hjstab {

struct Sequence {
  Tensor x0;
  Signal u;
  Signal y;
};

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

// Contiguous 90/10 train/test split; validation is carved out of the training
// portion (10% of it) for checkpoint selection.
inline SplitSizes make_splits(int n) {
  if (n < 1) throw std::invalid_argument("dataset: empty");
  SplitSizes s;
  s.test = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  if (s.test >= n) s.test = n - 1;
  int pool = n - s.test;
  s.val = std::max(1, static_cast<int>(std::lround(0.1 * pool)));
  if (s.val >= pool) s.val = pool - 1;
  s.train = pool - s.val;
  if (s.train < 1) throw std::invalid_argument("dataset: too few sequences to split");
  return s;
}

struct YNormalization {
  bool active = false;
  std::vector<double> y_min, y_max;
};

struct Dataset {
  std::string benchmark;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<Sequence> sequences;
  SplitSizes split;
  YNormalization norm;
  double u_scale = 1.0;

  int size() const { return static_cast<int>(sequences.size()); }
  int input_dim() const { return sequences.at(0).u.dim; }
  int output_dim() const { return sequences.at(0).y.dim; }
  int state_dim() const { return static_cast<int>(sequences.at(0).x0.size()); }
  int steps() const { return sequences.at(0).u.steps; }

  std::vector<int> train_indices() const { return index_range(0, split.train); }
  std::vector<int> val_indices() const { return index_range(split.train, split.train + split.val); }
  std::vector<int> test_indices() const {
    return index_range(split.train + split.val, size());
  }

  void validate() const {
    if (sequences.empty()) throw std::invalid_argument("dataset: empty");
    if (split.train + split.val + split.test != size()) {
      throw std::invalid_argument("dataset: split sizes do not cover the set");
    }
    for (const Sequence& s : sequences) {
      s.u.validate();
      s.y.validate();
      if (s.u.dt != dt || s.y.dt != dt) throw std::invalid_argument("dataset: dt mismatch");
      if (s.u.steps != steps() || s.y.steps != steps()) {
        throw std::invalid_argument("dataset: step count mismatch");
      }
      if (s.u.dim != input_dim() || s.y.dim != output_dim() ||
          static_cast<int>(s.x0.size()) != state_dim()) {
        throw std::invalid_argument("dataset: dim mismatch");
      }
    }
  }

 private:
  std::vector<int> index_range(int lo, int hi) const {
    std::vector<int> out;
    for (int i = lo; i < hi; ++i) out.push_back(i);
    return out;
  }
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["benchmark"] = ds.benchmark;
  meta["seed"] = ds.seed;
  meta["dt"] = ds.dt;
  meta["n_sequences"] = ds.size();
  meta["steps"] = ds.steps();
  meta["input_dim"] = ds.input_dim();
  meta["output_dim"] = ds.output_dim();
  meta["state_dim"] = ds.state_dim();
  meta["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
  meta["u_scale"] = ds.u_scale;
  meta["normalization"] = {
      {"active", ds.norm.active}, {"y_min", ds.norm.y_min}, {"y_max", ds.norm.y_max}};
  detail::write_text_file(dir / "meta", meta.dump(2) + "\n");

  for (int i = 0; i < ds.size(); ++i) {
    const Sequence& s = ds.sequences[i];
    std::ostringstream u_csv, y_csv, x0_csv;
    s.u.to_csv(u_csv);
    s.y.to_csv(y_csv);
    x0_csv << "x0\n";
    for (std::size_t j = 0; j < s.x0.size(); ++j) x0_csv << format_double(s.x0[j]) << "\n";
    std::string stem = "seq_" + std::to_string(i);
    detail::write_text_file(dir / (stem + "_u.csv"), u_csv.str());
    detail::write_text_file(dir / (stem + "_y.csv"), y_csv.str());
    detail::write_text_file(dir / (stem + "_x0.csv"), x0_csv.str());
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json meta = nlohmann::json::parse(detail::read_text_file(dir / "meta"));
  Dataset ds;
  ds.benchmark = meta.at("benchmark").get<std::string>();
  ds.seed = meta.at("seed").get<std::uint64_t>();
  ds.dt = meta.at("dt").get<double>();
  ds.split.train = meta.at("split").at("train").get<int>();
  ds.split.val = meta.at("split").at("val").get<int>();
  ds.split.test = meta.at("split").at("test").get<int>();
  ds.u_scale = meta.at("u_scale").get<double>();
  ds.norm.active = meta.at("normalization").at("active").get<bool>();
  ds.norm.y_min = meta.at("normalization").at("y_min").get<std::vector<double>>();
  ds.norm.y_max = meta.at("normalization").at("y_max").get<std::vector<double>>();
  int n = meta.at("n_sequences").get<int>();
  for (int i = 0; i < n; ++i) {
    std::string stem = "seq_" + std::to_string(i);
    Sequence s;
    std::istringstream u_in(detail::read_text_file(dir / (stem + "_u.csv")));
    std::istringstream y_in(detail::read_text_file(dir / (stem + "_y.csv")));
    s.u = Signal::from_csv(u_in, ds.dt);
    s.y = Signal::from_csv(y_in, ds.dt);
    std::istringstream x0_in(detail::read_text_file(dir / (stem + "_x0.csv")));
    auto lines = read_lines(x0_in);
    if (lines.empty() || lines[0] != "x0") throw std::runtime_error("dataset: bad x0 file");
    std::vector<double> vals;
    for (std::size_t j = 1; j < lines.size(); ++j) {
      if (!lines[j].empty()) vals.push_back(parse_double(lines[j]));
    }
    s.x0 = Tensor::vector(vals);
    ds.sequences.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace hjstab
