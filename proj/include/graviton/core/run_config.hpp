#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include "graviton/core/error.hpp"
#include "graviton/core/rng.hpp"

namespace graviton {

/// Flat run configuration, serialized as a key=value text file. The canonical
/// serialization is hashed and the hash is embedded in checkpoints so that a
/// checkpoint can never silently be applied under a different configuration.
struct RunConfig {
  uint64_t seed = 0;
  int height = 64;
  int width = 48;
  double learning_rate = 0.000035;
  int batch_size = 6;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-2;
  double lambda_l1 = 1.0;
  double lambda_prec = 1.0;
  double lambda_style = 100.0;
  double lambda_owl = 1.0;
  std::string precision = "f32";  // f32 = train mode, f64 = test mode

  void validate() const {
    GRAVITON_REQUIRE(height > 0 && height % 8 == 0, "config: height must be divisible by 8");
    GRAVITON_REQUIRE(width > 0 && width % 8 == 0, "config: width must be divisible by 8");
    GRAVITON_REQUIRE(learning_rate > 0, "config: learning_rate must be positive");
    GRAVITON_REQUIRE(batch_size > 0, "config: batch_size must be positive");
    GRAVITON_REQUIRE(epochs > 0, "config: epochs must be positive");
    GRAVITON_REQUIRE(beta1 > 0 && beta1 < 1, "config: beta1 must lie in (0,1)");
    GRAVITON_REQUIRE(beta2 > 0 && beta2 < 1, "config: beta2 must lie in (0,1)");
    GRAVITON_REQUIRE(weight_decay >= 0, "config: weight_decay must be non-negative");
    GRAVITON_REQUIRE(lambda_l1 >= 0 && lambda_prec >= 0 && lambda_style >= 0 && lambda_owl >= 0,
                     "config: loss weights must be non-negative");
    GRAVITON_REQUIRE(precision == "f32" || precision == "f64",
                     "config: precision must be f32 or f64");
  }

  static std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  std::string canonical() const {
    std::string s;
    s += "batch_size=" + std::to_string(batch_size) + "\n";
    s += "beta1=" + format_double(beta1) + "\n";
    s += "beta2=" + format_double(beta2) + "\n";
    s += "epochs=" + std::to_string(epochs) + "\n";
    s += "height=" + std::to_string(height) + "\n";
    s += "lambda_l1=" + format_double(lambda_l1) + "\n";
    s += "lambda_owl=" + format_double(lambda_owl) + "\n";
    s += "lambda_prec=" + format_double(lambda_prec) + "\n";
    s += "lambda_style=" + format_double(lambda_style) + "\n";
    s += "learning_rate=" + format_double(learning_rate) + "\n";
    s += "precision=" + precision + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += "weight_decay=" + format_double(weight_decay) + "\n";
    s += "width=" + std::to_string(width) + "\n";
    return s;
  }

  uint64_t hash() const { return fnv1a64(canonical()); }

  void save(const std::string& path) const {
    std::ofstream f(path);
    GRAVITON_REQUIRE(f.good(), "cannot write config file: ", path);
    f << canonical();
    GRAVITON_REQUIRE(f.good(), "failed writing config file: ", path);
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    GRAVITON_REQUIRE(f.good(), "cannot read config file: ", path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      GRAVITON_REQUIRE(eq != std::string::npos, path, ":", lineno, ": expected key=value");
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "height") cfg.height = std::stoi(val);
      else if (key == "width") cfg.width = std::stoi(val);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "beta1") cfg.beta1 = std::stod(val);
      else if (key == "beta2") cfg.beta2 = std::stod(val);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
      else if (key == "lambda_l1") cfg.lambda_l1 = std::stod(val);
      else if (key == "lambda_prec") cfg.lambda_prec = std::stod(val);
      else if (key == "lambda_style") cfg.lambda_style = std::stod(val);
      else if (key == "lambda_owl") cfg.lambda_owl = std::stod(val);
      else if (key == "precision") cfg.precision = val;
      else GRAVITON_REQUIRE(false, path, ":", lineno, ": unknown config key '", key, "'");
    }
    cfg.validate();
    return cfg;
  }
};

}  // namespace graviton
