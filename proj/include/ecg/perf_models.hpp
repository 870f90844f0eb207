#pragma once

// Closed-form communication and computation models: postal, max-rate,
// node-aware 2-step / 3-step with block width t, and the per-iteration
// ECG model (point-to-point + collective + computation).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ecg/comm_plan.hpp"

namespace ecg {

struct MachineParams {
  double alpha = 1e-6;           // inter-node latency (s)
  double alpha_local = 3e-7;     // intra-node latency (s)
  double rate_injection = 2e9;   // R_N, NIC injection rate (B/s)
  double rate_process = 1e9;     // R_b, per-process network rate (B/s)
  double rate_local = 5e9;       // R_b,l, on-node rate (B/s)
  double gamma = 1e-10;          // seconds per flop
  double f = 8;                  // bytes per float
  double ppn = 16;

  void validate() const {
    for (double v : {alpha, alpha_local, rate_injection, rate_process, rate_local, gamma, f, ppn})
      if (!(v > 0.0)) throw std::invalid_argument("machine params: all values must be strictly positive");
    if (alpha < alpha_local) throw std::invalid_argument("machine params: alpha must be >= alpha_local");
  }
};

// Flat "key = value" text; '#' starts a comment. Unknown keys are rejected.
inline MachineParams parse_machine_params(std::istream& in, MachineParams base = {}) {
  const std::map<std::string, double MachineParams::*> keys = {
      {"alpha", &MachineParams::alpha},
      {"alpha_local", &MachineParams::alpha_local},
      {"rate_injection", &MachineParams::rate_injection},
      {"rate_process", &MachineParams::rate_process},
      {"rate_local", &MachineParams::rate_local},
      {"gamma", &MachineParams::gamma},
      {"f", &MachineParams::f},
      {"ppn", &MachineParams::ppn},
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("machine params line " + std::to_string(line_no) + ": expected key = value");
    std::istringstream key_in(line.substr(0, eq)), val_in(line.substr(eq + 1));
    std::string key;
    double value = 0.0;
    key_in >> key;
    if (!(val_in >> value))
      throw std::invalid_argument("machine params line " + std::to_string(line_no) + ": bad value");
    auto it = keys.find(key);
    if (it == keys.end())
      throw std::invalid_argument("machine params line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    base.*(it->second) = value;
  }
  base.validate();
  return base;
}

inline MachineParams load_machine_params(const std::string& path, MachineParams base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open machine params file: " + path);
  return parse_machine_params(in, base);
}

enum class Link { network, on_node };

// alpha * m + s / R for one link class.
inline double postal_time(double m, double s, const MachineParams& mp, Link link = Link::network) {
  if (link == Link::on_node) return mp.alpha_local * m + s / mp.rate_local;
  return mp.alpha * m + s / mp.rate_process;
}

inline double maxrate_time(double m, double s, const MachineParams& mp) {
  return mp.alpha * m + std::max(mp.ppn * s / mp.rate_injection, s / mp.rate_process);
}

namespace detail {
// Stats byte fields rescaled from the plan's width to width t.
inline double at_width(std::size_t bytes, const CommStats& st, std::size_t t) {
  return double(bytes) / double(st.width) * double(t);
}
}  // namespace detail

// Standard communication under the max-rate model at width t.
inline double model_standard(const CommStats& st, std::size_t t, const MachineParams& mp) {
  return maxrate_time(double(st.m), detail::at_width(st.s, st, t), mp);
}

inline double model_3step(const CommStats& st, std::size_t t, const MachineParams& mp) {
  const double s_node = detail::at_width(st.s_node, st, t);
  const double s_proc = detail::at_width(st.s_proc, st, t);
  const double s_nn = detail::at_width(st.s_node_to_node, st, t);
  const double inter = mp.alpha * (double(st.m_node_to_node) / mp.ppn) +
                       std::max(s_node / mp.rate_injection, s_proc / mp.rate_process);
  const double intra = 2.0 * (mp.alpha_local * (mp.ppn - 1.0) + s_nn / mp.rate_local);
  return inter + intra;
}

inline double model_2step(const CommStats& st, std::size_t t, const MachineParams& mp) {
  const double s_node = detail::at_width(st.s_node, st, t);
  const double s_proc = detail::at_width(st.s_proc, st, t);
  const double inter = mp.alpha * double(st.m_proc_to_node) +
                       std::max(s_node / mp.rate_injection, s_proc / mp.rate_process);
  const double intra = mp.alpha_local * (mp.ppn - 1.0) + s_proc / mp.rate_local;
  return inter + intra;
}

// Nodal-optimal plans share the 3-step phase structure.
inline double model_for_scheme(Scheme scheme, const CommStats& st, std::size_t t, const MachineParams& mp) {
  switch (scheme) {
    case Scheme::standard: return model_standard(st, t, mp);
    case Scheme::two_step: return model_2step(st, t, mp);
    case Scheme::three_step:
    case Scheme::nodal_optimal: return model_3step(st, t, mp);
  }
  throw std::invalid_argument("unknown scheme");
}

// Per-iteration ECG computation count, summing the kernel table with the
// SpMBV charged as (2 + 2t) nnz/p.
inline double ecg_computation_flops(double n_per_p, double nnz_per_p, double t) {
  return (2.0 + 2.0 * t) * nnz_per_p + (4.0 * t + 4.0 * t * t) * n_per_p + 0.5 * t * t + t * t * t / 6.0;
}

inline double ceil_log2(std::size_t p) {
  double levels = 0.0;
  for (std::size_t span = 1; span < p; span <<= 1) levels += 1.0;
  return levels;
}

enum class P2PModel { postal, maxrate };

struct ModelPrediction {
  double point_to_point = 0.0;
  double collective = 0.0;
  double computation = 0.0;
  double total = 0.0;
  std::string dominant;
};

// m and s are the per-vector (width 1) message count and bytes per rank;
// the block width multiplies s only.
inline ModelPrediction ecg_iteration_model(double m, double s, std::size_t t, std::size_t n, std::size_t nnz,
                                           std::size_t p, const MachineParams& mp, P2PModel variant) {
  const double td = double(t);
  ModelPrediction out;
  out.point_to_point = variant == P2PModel::postal ? postal_time(m, s * td, mp)
                                                   : maxrate_time(m, s * td, mp);
  out.collective = 2.0 * mp.alpha * ceil_log2(p) + mp.f * 4.0 * td * td / mp.rate_process;
  out.computation = mp.gamma * ecg_computation_flops(double(n) / double(p), double(nnz) / double(p), td);
  out.total = out.point_to_point + out.collective + out.computation;
  if (out.point_to_point >= out.collective && out.point_to_point >= out.computation)
    out.dominant = "point_to_point";
  else if (out.collective >= out.computation)
    out.dominant = "collective";
  else
    out.dominant = "computation";
  return out;
}

// Same, driven by standard-communication stats of a plan at any width.
inline ModelPrediction ecg_iteration_model(const CommStats& st, std::size_t t, std::size_t n, std::size_t nnz,
                                           std::size_t p, const MachineParams& mp, P2PModel variant) {
  return ecg_iteration_model(double(st.m), detail::at_width(st.s, st, 1), t, n, nnz, p, mp, variant);
}

}  // namespace ecg
