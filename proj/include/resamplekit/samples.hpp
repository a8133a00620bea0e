#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/budget.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/random.hpp"

namespace resamplekit {

struct Sample {
  std::string name;
  std::vector<double> values;
};

/// Indices into the backing samples, one per argument (0-based).
struct ResampleIndexVector {
  std::vector<std::size_t> j;

  friend bool operator==(const ResampleIndexVector&, const ResampleIndexVector&) = default;
};

/// Empirical samples H_1..H_k together with the argument layout. Arguments
/// that share a sample form a block and are drawn without replacement within
/// one realization.
class SampleSet {
 public:
  SampleSet() = default;

  /// arg_sample[a] is the 0-based sample backing argument a.
  SampleSet(std::vector<Sample> samples, std::vector<std::size_t> arg_sample)
      : samples_(std::move(samples)), arg_sample_(std::move(arg_sample)) {
    blocks_.assign(samples_.size(), {});
    for (std::size_t a = 0; a < arg_sample_.size(); ++a) {
      require(arg_sample_[a] < samples_.size(), ErrorCode::schema,
              "argument " + std::to_string(a + 1) + " maps to an unknown sample");
      blocks_[arg_sample_[a]].push_back(a);
    }
    for (std::size_t s = 0; s < samples_.size(); ++s) {
      require(!samples_[s].values.empty(), ErrorCode::schema, "sample '" + samples_[s].name + "' is empty");
      for (double v : samples_[s].values)
        require(std::isfinite(v), ErrorCode::schema, "sample '" + samples_[s].name + "' has a non-finite value");
      require(blocks_[s].size() <= samples_[s].values.size(), ErrorCode::infeasible_layout,
              "block of " + std::to_string(blocks_[s].size()) + " arguments drawn without replacement from sample '" +
                  samples_[s].name + "' of size " + std::to_string(samples_[s].values.size()));
    }
  }

  /// One sample per argument, argument i backed by sample i.
  static SampleSet distinct(std::vector<std::vector<double>> values) {
    std::vector<Sample> samples;
    std::vector<std::size_t> layout;
    for (std::size_t i = 0; i < values.size(); ++i) {
      samples.push_back({"H" + std::to_string(i + 1), std::move(values[i])});
      layout.push_back(i);
    }
    return SampleSet(std::move(samples), std::move(layout));
  }

  std::size_t arguments() const { return arg_sample_.size(); }
  std::size_t sample_count() const { return samples_.size(); }
  const Sample& sample(std::size_t s) const { return samples_[s]; }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t sample_of(std::size_t arg) const { return arg_sample_[arg]; }
  /// Arguments backed by sample s, in increasing order.
  const std::vector<std::size_t>& block(std::size_t s) const { return blocks_[s]; }
  std::size_t size(std::size_t s) const { return samples_[s].values.size(); }

  /// True when no two arguments share a sample.
  bool all_distinct() const {
    for (const auto& b : blocks_)
      if (b.size() > 1) return false;
    return true;
  }

  /// Sizes n_i of the samples that back at least one argument, by argument
  /// order for distinct layouts.
  std::vector<std::size_t> argument_sizes() const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < arguments(); ++a) out.push_back(size(sample_of(a)));
    return out;
  }

  /// Values at a resample index vector.
  void gather(const ResampleIndexVector& idx, std::span<double> out) const {
    for (std::size_t a = 0; a < arg_sample_.size(); ++a) out[a] = samples_[arg_sample_[a]].values[idx.j[a]];
  }

  /// Number of admissible index vectors: product of n_i!/(n_i-m_i)!.
  std::uint64_t admissible_count() const {
    std::uint64_t total = 1;
    for (std::size_t s = 0; s < samples_.size(); ++s) {
      const std::size_t n = size(s);
      for (std::size_t i = 0; i < blocks_[s].size(); ++i) total = saturating_mul(total, n - i);
    }
    return total;
  }

 private:
  std::vector<Sample> samples_;
  std::vector<std::size_t> arg_sample_;
  std::vector<std::vector<std::size_t>> blocks_;
};

/// Uniform draw over admissible index vectors.
inline ResampleIndexVector draw_resample(const SampleSet& samples, Stream& rng) {
  ResampleIndexVector out;
  out.j.resize(samples.arguments());
  std::vector<std::size_t> scratch;
  for (std::size_t s = 0; s < samples.sample_count(); ++s) {
    const auto& block = samples.block(s);
    if (block.empty()) continue;
    if (block.size() == 1) {
      out.j[block[0]] = rng.index(samples.size(s));
      continue;
    }
    scratch.resize(block.size());
    draw_distinct(rng, samples.size(s), block.size(), scratch);
    for (std::size_t i = 0; i < block.size(); ++i) out.j[block[i]] = scratch[i];
  }
  return out;
}

/// Visits every admissible index vector in lexicographic order of the
/// argument indices. Throws budget_exceeded before visiting anything when the
/// count exceeds `budget`.
template <typename F>
void for_each_index_vector(const SampleSet& samples, F&& visit, std::uint64_t budget = enumeration_budget()) {
  check_budget(samples.admissible_count(), budget, "index-vector enumeration");
  const std::size_t m = samples.arguments();
  ResampleIndexVector idx;
  idx.j.assign(m, 0);
  std::vector<std::vector<char>> used(samples.sample_count());
  for (std::size_t s = 0; s < samples.sample_count(); ++s) used[s].assign(samples.size(s), 0);

  // Depth-first over arguments.
  auto recurse = [&](auto&& self, std::size_t a) -> void {
    if (a == m) {
      visit(static_cast<const ResampleIndexVector&>(idx));
      return;
    }
    const std::size_t s = samples.sample_of(a);
    const bool exclusive = samples.block(s).size() > 1;
    for (std::size_t v = 0; v < samples.size(s); ++v) {
      if (exclusive && used[s][v]) continue;
      idx.j[a] = v;
      if (exclusive) used[s][v] = 1;
      self(self, a + 1);
      if (exclusive) used[s][v] = 0;
    }
  };
  recurse(recurse, 0);
}

// ---------------------------------------------------------------------------
// Ingestion

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::file_not_found, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// CSV with a header row of sample names; columns may have different lengths
/// (empty cells are skipped).
inline std::vector<Sample> parse_samples_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  require(!rows.empty(), ErrorCode::schema, "CSV has no header row");
  std::vector<Sample> out;
  for (auto name : rows[0]) {
    while (!name.empty() && name.front() == ' ') name.erase(name.begin());
    while (!name.empty() && name.back() == ' ') name.pop_back();
    require(!name.empty(), ErrorCode::schema, "CSV header has an empty column name");
    out.push_back({name, {}});
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    require(rows[r].size() <= out.size(), ErrorCode::schema, "CSV row " + std::to_string(r + 1) + " has too many cells");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      std::string cell = rows[r][c];
      if (cell.find_first_not_of(" \t") == std::string::npos) continue;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        fail(ErrorCode::schema, "CSV row " + std::to_string(r + 1) + ": '" + cell + "' is not a number");
      }
      require(cell.find_first_not_of(" \t", used) == std::string::npos, ErrorCode::schema,
              "CSV row " + std::to_string(r + 1) + ": '" + cell + "' is not a number");
      out[c].values.push_back(v);
    }
  }
  return out;
}

/// JSON object {name: [values]}; samples are ordered by name.
inline std::vector<Sample> parse_samples_json(const std::string& text) {
  std::vector<Sample> out;
  try {
    const auto j = nlohmann::json::parse(text);
    require(j.is_object(), ErrorCode::schema, "samples JSON must be an object {name: [values]}");
    for (const auto& [name, values] : j.items()) out.push_back({name, values.get<std::vector<double>>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("samples JSON: ") + e.what());
  }
  return out;
}

inline std::vector<Sample> load_samples(const std::string& path) {
  const std::string text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_samples_json(text);
  return parse_samples_csv(text);
}

/// Builds the layout from a blocks JSON object {argIndex: sampleName}
/// (1-based argument indices). Without one, argument i uses sample i.
inline SampleSet make_sample_set(std::vector<Sample> samples, const nlohmann::json* blocks) {
  std::vector<std::size_t> layout;
  if (!blocks) {
    for (std::size_t i = 0; i < samples.size(); ++i) layout.push_back(i);
    return SampleSet(std::move(samples), std::move(layout));
  }
  require(blocks->is_object(), ErrorCode::schema, "blocks JSON must be an object {argIndex: sampleName}");
  std::map<std::size_t, std::string> by_arg;
  for (const auto& [key, value] : blocks->items()) {
    std::size_t used = 0;
    std::size_t arg = 0;
    try {
      arg = std::stoul(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == key.size() && arg >= 1, ErrorCode::schema, "blocks key '" + key + "' is not a 1-based argument index");
    require(value.is_string(), ErrorCode::schema, "blocks value for argument " + key + " must be a sample name");
    by_arg[arg] = value.get<std::string>();
  }
  std::size_t expect = 1;
  for (const auto& [arg, name] : by_arg) {
    require(arg == expect++, ErrorCode::schema, "blocks must map every argument 1..m exactly once");
    std::size_t s = samples.size();
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].name == name) s = i;
    require(s < samples.size(), ErrorCode::schema, "blocks refer to unknown sample '" + name + "'");
    layout.push_back(s);
  }
  return SampleSet(std::move(samples), std::move(layout));
}

}  // namespace resamplekit
