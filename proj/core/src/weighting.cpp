// SPDX-License-Identifier: Apache-2.0
#include "vrf/weighting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <tuple>

#include <json.hpp>

#include "vrf/error.hpp"

namespace vrf {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("cannot parse " + std::string(what) + " value '" + std::string(text) + "'");
  }
  return v;
}

std::tuple<double, double, double> tie_key(const WeightFunction& fn) {
  return std::visit(Overloaded{
                        [](const SigmoidWeight& w) { return std::tuple{w.b, w.a, 0.0}; },
                        [](const LinearWeight& w) { return std::tuple{w.b, w.a, 0.0}; },
                        [](const BinaryWeight& w) { return std::tuple{0.0, w.a, 0.0}; },
                        [](const ConstantWeight& w) { return std::tuple{0.0, 0.0, w.alpha}; },
                    },
                    fn);
}

WeightFunction from_params(WeightKind kind, const std::map<std::string, double>& params) {
  auto take = [&](const char* key) {
    auto it = params.find(key);
    if (it == params.end()) {
      throw ValidationError(std::string(to_string(kind)) + " weight requires parameter '" + key + "'");
    }
    return it->second;
  };
  auto expect_count = [&](std::size_t n) {
    if (params.size() != n) {
      throw ValidationError(std::string(to_string(kind)) + " weight takes exactly " + std::to_string(n) +
                            " parameter(s)");
    }
  };
  WeightFunction fn;
  switch (kind) {
    case WeightKind::kSigmoid:
      fn = SigmoidWeight{take("a"), take("b")};
      expect_count(2);
      break;
    case WeightKind::kLinear:
      fn = LinearWeight{take("a"), take("b")};
      expect_count(2);
      break;
    case WeightKind::kBinary:
      fn = BinaryWeight{take("a")};
      expect_count(1);
      break;
    case WeightKind::kConstant:
      fn = ConstantWeight{take("alpha")};
      expect_count(1);
      break;
  }
  validate(fn);
  return fn;
}

}  // namespace

WeightKind kind_of(const WeightFunction& fn) {
  return std::visit(Overloaded{
                        [](const SigmoidWeight&) { return WeightKind::kSigmoid; },
                        [](const LinearWeight&) { return WeightKind::kLinear; },
                        [](const BinaryWeight&) { return WeightKind::kBinary; },
                        [](const ConstantWeight&) { return WeightKind::kConstant; },
                    },
                    fn);
}

std::string_view to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::kSigmoid: return "sigmoid";
    case WeightKind::kLinear: return "linear";
    case WeightKind::kBinary: return "binary";
    case WeightKind::kConstant: return "constant";
  }
  return "?";
}

WeightKind parse_weight_kind(std::string_view text) {
  if (text == "sigmoid") return WeightKind::kSigmoid;
  if (text == "linear") return WeightKind::kLinear;
  if (text == "binary") return WeightKind::kBinary;
  if (text == "constant") return WeightKind::kConstant;
  throw ValidationError("unknown weight kind '" + std::string(text) + "'");
}

void validate(const WeightFunction& fn) {
  auto finite = [](double v, const char* name) {
    if (!std::isfinite(v)) throw ValidationError(std::string("weight parameter ") + name + " must be finite");
  };
  std::visit(Overloaded{
                 [&](const SigmoidWeight& w) {
                   finite(w.a, "a");
                   finite(w.b, "b");
                   if (!(w.b > 0)) throw ValidationError("sigmoid weight needs b > 0");
                 },
                 [&](const LinearWeight& w) {
                   finite(w.a, "a");
                   finite(w.b, "b");
                   if (!(w.b > 0)) throw ValidationError("linear weight needs b > 0");
                 },
                 [&](const BinaryWeight& w) { finite(w.a, "a"); },
                 [&](const ConstantWeight& w) {
                   if (!(w.alpha >= 0.0 && w.alpha <= 1.0)) {
                     throw ValidationError("constant weight needs alpha in [0, 1]");
                   }
                 },
             },
             fn);
}

double weight(const WeightFunction& fn, double d) {
  if (!std::isfinite(d)) throw ValidationError("weight: distance is not finite");
  d = std::clamp(d, 0.0, 2.0);
  return std::visit(Overloaded{
                        [d](const SigmoidWeight& w) { return 1.0 / (1.0 + std::exp((d - w.a) / w.b)); },
                        [d](const LinearWeight& w) { return std::clamp(-w.b * (d - w.a), 0.0, 1.0); },
                        [d](const BinaryWeight& w) { return d < w.a ? 1.0 : 0.0; },
                        [](const ConstantWeight& w) { return w.alpha; },
                    },
                    fn);
}

std::vector<double> weight_batch(const WeightFunction& fn, std::span<const double> distances) {
  validate(fn);
  std::vector<double> out(distances.size());
  std::transform(distances.begin(), distances.end(), out.begin(), [&](double d) { return weight(fn, d); });
  return out;
}

std::vector<double> decimal_range(int start_tenths, int stop_tenths) {
  std::vector<double> out;
  for (int i = start_tenths; i <= stop_tenths; ++i) out.push_back(i / 10.0);
  return out;
}

SweepAxes SweepAxes::defaults() {
  return SweepAxes{decimal_range(1, 19), decimal_range(1, 20), decimal_range(0, 10)};
}

std::vector<WeightFunction> sweep_grid(WeightKind kind, const SweepAxes& axes) {
  std::vector<WeightFunction> out;
  switch (kind) {
    case WeightKind::kSigmoid:
      for (double a : axes.a)
        for (double b : axes.b) out.push_back(SigmoidWeight{a, b});
      break;
    case WeightKind::kLinear:
      for (double a : axes.a)
        for (double b : axes.b) out.push_back(LinearWeight{a, b});
      break;
    case WeightKind::kBinary:
      for (double a : axes.a) out.push_back(BinaryWeight{a});
      break;
    case WeightKind::kConstant:
      for (double alpha : axes.alpha) out.push_back(ConstantWeight{alpha});
      break;
  }
  for (const auto& fn : out) validate(fn);
  return out;
}

bool tie_break_less(const WeightFunction& x, const WeightFunction& y) { return tie_key(x) < tie_key(y); }

WeightFunction parse_weight_flag(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ValidationError("weight flag must look like kind:key=value[,key=value]");
  }
  const WeightKind kind = parse_weight_kind(text.substr(0, colon));
  std::map<std::string, double> params;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ValidationError("malformed weight parameter '" + std::string(item) + "'");
    }
    const std::string key(item.substr(0, eq));
    if (!params.emplace(key, parse_double(item.substr(eq + 1), key)).second) {
      throw ValidationError("duplicate weight parameter '" + key + "'");
    }
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return from_params(kind, params);
}

std::string to_flag(const WeightFunction& fn) {
  return std::visit(
      Overloaded{
          [](const SigmoidWeight& w) { return "sigmoid:a=" + format_double(w.a) + ",b=" + format_double(w.b); },
          [](const LinearWeight& w) { return "linear:a=" + format_double(w.a) + ",b=" + format_double(w.b); },
          [](const BinaryWeight& w) { return "binary:a=" + format_double(w.a); },
          [](const ConstantWeight& w) { return "constant:alpha=" + format_double(w.alpha); },
      },
      fn);
}

std::string to_json(const WeightFunction& fn) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(kind_of(fn)));
  std::visit(Overloaded{
                 [&](const SigmoidWeight& w) {
                   j["a"] = w.a;
                   j["b"] = w.b;
                 },
                 [&](const LinearWeight& w) {
                   j["a"] = w.a;
                   j["b"] = w.b;
                 },
                 [&](const BinaryWeight& w) { j["a"] = w.a; },
                 [&](const ConstantWeight& w) { j["alpha"] = w.alpha; },
             },
             fn);
  return j.dump();
}

WeightFunction weight_function_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("weight function JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("variant") || !j.at("variant").is_string()) {
    throw SchemaError("weight function JSON needs a string 'variant'");
  }
  std::map<std::string, double> params;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "variant") continue;
    if (!it.value().is_number()) throw SchemaError("weight parameter '" + it.key() + "' must be a number");
    params[it.key()] = it.value().get<double>();
  }
  try {
    return from_params(parse_weight_kind(j.at("variant").get<std::string>()), params);
  } catch (const ValidationError& e) {
    throw SchemaError(e.what());
  }
}

}  // namespace vrf
