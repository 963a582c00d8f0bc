#pragma once

// Batch front end: `xgp fit|predict|prequential|simulate --config FILE`.
//
// A run reads one JSON config whose sections are model, data, sampler,
// predict, prequential and simulate. Every default is written back into the
// config echoed in the run manifest.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xgp/data.hpp"
#include "xgp/hmc.hpp"
#include "xgp/io.hpp"
#include "xgp/model.hpp"

namespace xgp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

inline constexpr const char* kVersion = "0.1.0";

struct Invocation {
  std::string command;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool resume = false;
};

// Parses argv and runs the command. Errors are reported as one JSON line on
// `err` (and as error.json in the output directory when it exists).
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

// Runs one command. Throws xgp::Error subclasses on failure.
void run(const Invocation& inv, std::ostream& log);

int exit_code_for(const std::exception& e);
nlohmann::json error_json(const std::exception& e);

// A JSON object section whose reads materialize defaults and which rejects
// keys nobody asked for.
class Section {
 public:
  Section(nlohmann::json& object, std::string name);

  double number(const std::string& key, double fallback);
  double number(const std::string& key);  // required
  std::uint64_t count(const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::string text(const std::string& key);  // required
  // Scalar broadcast to `n` entries, or an array of exactly `n` numbers.
  std::vector<double> numbers(const std::string& key, std::size_t n, double fallback);
  std::optional<std::vector<double>> numbers(const std::string& key, std::size_t n);
  // Resolved against `base`; the absolute path is written back.
  std::filesystem::path path(const std::string& key, const std::filesystem::path& base);
  std::optional<std::filesystem::path> optional_path(const std::string& key,
                                                     const std::filesystem::path& base);
  Section sub(const std::string& key);
  nlohmann::json& raw(const std::string& key);
  bool has(const std::string& key) const;

  // Throws ConfigError naming the first unknown key.
  void finish() const;
  const std::string& name() const noexcept { return name_; }

 private:
  nlohmann::json& get(const std::string& key);
  nlohmann::json* obj_;
  std::string name_;
  std::vector<std::string> used_;
};

// Data bundle plus the mapping from model time back to file time labels.
// Count models index their steps 1..T; step k sits at origin + (k-1) * step.
struct LoadedData {
  ProblemData data;
  io::TimeAxis axis;
  bool indexed = false;
  double origin = 1.0;
  double step = 1.0;

  std::string label(double model_time) const;
  double file_time(double model_time) const;
  double model_time(double file_time) const;
};

LoadedData load_data(Section& data, const std::filesystem::path& base);
ModelSpec read_model(Section& model, LikelihoodKind likelihood);
SamplerConfig read_sampler(Section& sampler, std::uint64_t seed);
LikelihoodKind likelihood_of(const std::string& data_kind);

// Sample quantiles with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

}  // namespace xgp::cli
