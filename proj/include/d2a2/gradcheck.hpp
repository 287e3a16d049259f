#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "d2a2/autodiff.hpp"

namespace d2a2 {

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStep = 1e-5;

/// Relative error of one checked tensor: max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8).
struct GradError {
  std::string name;
  double rel_error = 0.0;
};

struct GradErrors {
  std::vector<GradError> items;

  double max() const;
  std::string worst() const;
  void append(const GradErrors& other, const std::string& prefix);
};

/// Function under test, built from one leaf per input tensor (same order).
using GradFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of sum(fn(inputs) * R), R a seeded random
/// projection, with central differences. Every input tensor and every parameter
/// of `params` (if given) is checked.
GradErrors check_gradients(const GradFn& fn, std::vector<Tensor<double>>& inputs,
                           const std::vector<std::string>& names, ParameterSet<double>* params = nullptr,
                           std::uint64_t seed = 1, double step = kGradcheckStep);

struct GradcheckEntry {
  std::string op;
  std::string module;
  std::function<GradErrors()> run;
};

const std::vector<GradcheckEntry>& gradcheck_registry();

struct GradcheckResult {
  std::string op;
  std::string module;
  double max_rel_error = 0.0;
  std::string worst;
  double seconds = 0.0;
  bool passed = false;
};

/// scope: "all", an op name or a module name. Throws std::invalid_argument if nothing matches.
std::vector<GradcheckResult> run_gradcheck(const std::string& scope,
                                           const std::function<void(const GradcheckResult&)>& on_result = {});

}  // namespace d2a2
