// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vrf {

/// omega(d) = 1 / (1 + exp((d - a) / b))
struct SigmoidWeight {
  double a = 1.5;
  double b = 0.6;
  friend bool operator==(const SigmoidWeight&, const SigmoidWeight&) = default;
};

/// omega(d) = clamp_[0,1](-b * (d - a))
struct LinearWeight {
  double a = 1.5;
  double b = 1.0;
  friend bool operator==(const LinearWeight&, const LinearWeight&) = default;
};

/// omega(d) = 1[d < a]
struct BinaryWeight {
  double a = 1.5;
  friend bool operator==(const BinaryWeight&, const BinaryWeight&) = default;
};

/// omega(d) = alpha, independent of d (output-space ensembling).
struct ConstantWeight {
  double alpha = 0.5;
  friend bool operator==(const ConstantWeight&, const ConstantWeight&) = default;
};

using WeightFunction = std::variant<SigmoidWeight, LinearWeight, BinaryWeight, ConstantWeight>;

enum class WeightKind { kSigmoid, kLinear, kBinary, kConstant };

WeightKind kind_of(const WeightFunction& fn);
std::string_view to_string(WeightKind kind);
WeightKind parse_weight_kind(std::string_view text);

/// Throws ValidationError unless b > 0 (where present), alpha in [0, 1] and
/// all parameters are finite.
void validate(const WeightFunction& fn);

/// Weight on the fine-tuned model for k-NN distance `d`. `d` is clamped to
/// [0, 2] first; non-finite `d` is an error.
double weight(const WeightFunction& fn, double d);
std::vector<double> weight_batch(const WeightFunction& fn, std::span<const double> distances);

/// Decimal grid start, start+step, ..., stop (inclusive), generated from
/// integer multiples so values are the nearest doubles to the decimals.
std::vector<double> decimal_range(int start_tenths, int stop_tenths);

struct SweepAxes {
  std::vector<double> a;      // sigmoid, linear, binary
  std::vector<double> b;      // sigmoid, linear
  std::vector<double> alpha;  // constant

  /// a in {0.1..1.9}, b in {0.1..2.0}, alpha in {0.0..1.0}, step 0.1.
  static SweepAxes defaults();
};

/// Cartesian grid for one kind, `a` outer and `b` inner.
std::vector<WeightFunction> sweep_grid(WeightKind kind, const SweepAxes& axes = SweepAxes::defaults());

/// Selection order among equally accurate candidates: smaller b, then
/// smaller a, then smaller alpha. Absent parameters count as 0.
bool tie_break_less(const WeightFunction& x, const WeightFunction& y);

/// "sigmoid:a=1.5,b=0.6", "linear:a=..,b=..", "binary:a=..", "constant:alpha=.."
WeightFunction parse_weight_flag(std::string_view text);
std::string to_flag(const WeightFunction& fn);

/// {"variant": "sigmoid", "a": 1.5, "b": 0.6} and so on.
std::string to_json(const WeightFunction& fn);
WeightFunction weight_function_from_json(std::string_view text);

}  // namespace vrf
