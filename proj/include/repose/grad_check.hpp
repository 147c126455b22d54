#pragma once

#include <functional>
#include <string>
#include <vector>

#include "repose/param_store.hpp"
#include "repose/rng.hpp"
#include "repose/tape.hpp"

namespace repose {

// Finite-difference verification of analytic gradients. The op under test is
// rebuilt on a fresh tape per evaluation; its (possibly non-scalar) output is
// reduced to a scalar with a fixed random weighting, and the analytic
// gradient of that scalar w.r.t. every input element and every trainable
// parameter element is compared against central differences.
//
// `max_probes_per_tensor` bounds the number of perturbed elements per tensor
// (0 = exhaustive); probed positions are drawn deterministically from `seed`.
// Sampling keeps whole-model checks inside a time budget while every tensor
// still gets coverage; analytic gradients are checked for finiteness in full
// either way.
struct GradCheckSettings {
  double eps = 1e-5;
  int max_probes_per_tensor = 0;
  std::uint64_t seed = 2024;
  // A probe whose window straddles a ReLU kink reports an eps-independent
  // error; re-probing with a smaller step ejects the kink from the window,
  // while a genuinely wrong analytic gradient keeps its error at every
  // scale. Probes above `retry_threshold` are re-run at eps/8 and eps/64
  // and the smallest error wins.
  double retry_threshold = 1e-5;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_location;
  std::int64_t probes = 0;
};

template <typename T>
double grad_check_rel_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
  return std::abs(analytic - numeric) / denom;
}

// `op` maps (tape, input node ids) -> output node id. Parameters must be
// registered through `store` and used via tape.param inside `op`.
template <typename T>
GradCheckReport grad_check(const std::string& op_name,
                           const std::function<int(Tape<T>&, const std::vector<int>&)>& op,
                           std::vector<Tensor<T>> inputs, ParamStore<T>* store,
                           const GradCheckSettings& settings = {}) {
  static_assert(std::is_same_v<T, double>, "grad_check runs at 64-bit precision");
  if (settings.eps < 1e-6 || settings.eps > 1e-3)
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");

  auto evaluate = [&](const Tensor<T>* weights_out, bool do_backward, std::vector<Tensor<T>>* input_grads) -> double {
    Tape<T> tape;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (auto& in : inputs) ids.push_back(tape.leaf(in, /*needs_grad=*/true));
    int out = op(tape, ids);
    if (!tape.value(out).all_finite())
      throw std::runtime_error("grad_check: non-finite forward value in op '" + op_name + "'");
    int scalar = weighted_sum_op(tape, out, *weights_out);
    double value = static_cast<double>(tape.value(scalar)[0]);
    if (do_backward) {
      tape.backward(scalar);
      input_grads->clear();
      for (int id : ids) input_grads->push_back(tape.grad(id));
    }
    return value;
  };

  // Fixed reduction weights, shaped like the op output.
  Tensor<T> probe_weights;
  {
    Tape<T> tape;
    std::vector<int> ids;
    for (auto& in : inputs) ids.push_back(tape.leaf(in, false));
    int out = op(tape, ids);
    probe_weights = Tensor<T>(tape.value(out).dims());
    Rng wrng(settings.seed ^ 0x5eedULL);
    for (std::int64_t i = 0; i < probe_weights.size(); ++i)
      probe_weights[i] = static_cast<T>(wrng.uniform(0.25, 1.0));
  }

  if (store) store->zero_grad();
  std::vector<Tensor<T>> analytic_inputs;
  evaluate(&probe_weights, true, &analytic_inputs);

  for (const auto& g : analytic_inputs)
    if (!g.all_finite()) throw std::runtime_error("grad_check: non-finite input gradient in op '" + op_name + "'");
  if (store)
    for (auto* p : store->entries())
      if (p->trainable && !p->grad.all_finite())
        throw std::runtime_error("grad_check: non-finite gradient for param '" + p->name + "' in op '" + op_name + "'");

  GradCheckReport report;
  Rng probe_rng(settings.seed);
  const double eps = settings.eps;

  auto probe_positions = [&](std::int64_t size) {
    std::vector<std::int64_t> pos;
    if (settings.max_probes_per_tensor <= 0 || size <= settings.max_probes_per_tensor) {
      pos.resize(static_cast<std::size_t>(size));
      for (std::int64_t i = 0; i < size; ++i) pos[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < settings.max_probes_per_tensor; ++i)
        pos.push_back(static_cast<std::int64_t>(probe_rng.next_u64() % static_cast<std::uint64_t>(size)));
    }
    return pos;
  };

  auto probe_once = [&](T* slot, double analytic, double step) {
    const T saved = *slot;
    *slot = saved + static_cast<T>(step);
    const double up = evaluate(&probe_weights, false, nullptr);
    *slot = saved - static_cast<T>(step);
    const double down = evaluate(&probe_weights, false, nullptr);
    *slot = saved;
    return grad_check_rel_error<T>(analytic, (up - down) / (2.0 * step));
  };

  auto check_element = [&](T* slot, double analytic, const std::string& where) {
    double rel = probe_once(slot, analytic, eps);
    for (double step : {eps / 8.0, eps / 64.0}) {
      if (rel <= settings.retry_threshold) break;
      rel = std::min(rel, probe_once(slot, analytic, step));
    }
    ++report.probes;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_location = where;
    }
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t p : probe_positions(inputs[i].size()))
      check_element(&inputs[i][p], static_cast<double>(analytic_inputs[i][p]),
                    "input" + std::to_string(i) + "[" + std::to_string(p) + "]");
  }
  if (store) {
    for (auto* param : store->entries()) {
      if (!param->trainable) continue;
      for (std::int64_t p : probe_positions(param->value.size()))
        check_element(&param->value[p], static_cast<double>(param->grad[p]),
                      param->name + "[" + std::to_string(p) + "]");
    }
  }
  return report;
}

}  // namespace repose
