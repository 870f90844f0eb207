#pragma once

// JSON views of plans, traces, stats and solve reports.

#include <json.hpp>

#include "ecg/comm_plan.hpp"
#include "ecg/perf_models.hpp"
#include "ecg/solvers.hpp"
#include "ecg/virtual_cluster.hpp"

namespace ecg {

using json = nlohmann::ordered_json;

inline constexpr int kReportSchema = 1;

inline json to_json(const KernelFlops& f) {
  json out = json::object();
  for (std::size_t k = 0; k < kKernelCount; ++k) out[to_string(Kernel(k))] = f.flops[k];
  out["total"] = f.total();
  return out;
}

inline json kernel_calls_json(const KernelFlops& f) {
  json out = json::object();
  for (std::size_t k = 0; k < kKernelCount; ++k) out[to_string(Kernel(k))] = f.calls[k];
  return out;
}

inline json to_json(const CommPlan& plan) {
  json phases = json::array();
  for (const auto& ph : plan.phases) {
    json msgs = json::array();
    for (const auto& m : ph.messages)
      msgs.push_back({{"src", m.src}, {"dst", m.dst}, {"locality", to_string(m.locality)}, {"rows", m.rows},
                      {"bytes", plan.bytes(m)}});
    phases.push_back({{"name", ph.name}, {"messages", msgs}});
  }
  return {{"scheme", to_string(plan.scheme)}, {"p", plan.topology.p},        {"ppn", plan.topology.ppn},
          {"t", plan.t},                       {"bytes_per_float", plan.bytes_per_float}, {"phases", phases}};
}

inline json to_json(const CommStats& st) {
  return {{"m", st.m},
          {"s", st.s},
          {"s_proc", st.s_proc},
          {"s_node", st.s_node},
          {"m_proc_to_node", st.m_proc_to_node},
          {"m_node_to_node", st.m_node_to_node},
          {"s_node_to_node", st.s_node_to_node},
          {"n_opt", st.n_opt},
          {"total_internode_bytes", st.total_internode_bytes},
          {"total_onnode_bytes", st.total_onnode_bytes},
          {"total_messages", st.total_messages},
          {"width", st.width},
          {"bytes_per_float", st.bytes_per_float},
          {"ppn", st.ppn}};
}

inline json to_json(const ReduceRecord& r) {
  return {{"floats", r.floats}, {"piggyback_floats", r.piggyback_floats}, {"participants", r.participants}};
}

inline json to_json(const ExecutionTrace& tr) {
  json phases = json::array(), collectives = json::array(), flops = json::array();
  for (const auto& ph : tr.phases)
    phases.push_back({{"name", ph.name},
                      {"msgs", ph.messages},
                      {"bytes_on_node", ph.bytes_on_node},
                      {"bytes_off_node", ph.bytes_off_node}});
  for (const auto& c : tr.collectives) collectives.push_back(to_json(c));
  for (const auto& f : tr.flops_per_rank) flops.push_back(f.total());
  return {{"scheme", to_string(tr.scheme)}, {"p", tr.p},
          {"ppn", tr.ppn},                   {"t", tr.t},
          {"phases", phases},                {"collectives", collectives},
          {"flops_per_rank", flops}};
}

inline json to_json(const IterationSummary& s) {
  json collectives = json::array();
  for (const auto& c : s.collectives) collectives.push_back(to_json(c));
  KernelFlops total;
  double max_rank = 0.0;
  for (const auto& f : s.flops_per_rank) {
    total += f;
    max_rank = std::max(max_rank, f.total());
  }
  return {{"msgs", s.messages},           {"bytes_on_node", s.bytes_on_node}, {"bytes_off_node", s.bytes_off_node},
          {"collectives", collectives},   {"flops", total.total()},           {"flops_max_rank", max_rank}};
}

inline json to_json(const SolveReport& rep, bool with_solution = false) {
  json iters = json::array();
  for (const auto& it : rep.per_iteration) iters.push_back(to_json(it));
  const KernelFlops total = rep.flops_total();
  json out = {{"method", rep.method},
              {"scheme", to_string(rep.scheme)},
              {"t", rep.t},
              {"status", to_string(rep.status)},
              {"iterations", rep.iterations},
              {"final_residual", rep.final_residual},
              {"residual_history", rep.residual_history},
              {"flops", to_json(total)},
              {"kernel_calls", kernel_calls_json(total)},
              {"spmbv_stats", to_json(rep.spmbv_stats)},
              {"setup", to_json(rep.setup)},
              {"per_iteration", iters},
              {"termination", to_json(rep.termination)}};
  if (!rep.message.empty()) out["message"] = rep.message;
  if (with_solution) out["x"] = rep.x;
  return out;
}

inline json to_json(const MachineParams& mp) {
  return {{"alpha", mp.alpha},
          {"alpha_local", mp.alpha_local},
          {"rate_injection", mp.rate_injection},
          {"rate_process", mp.rate_process},
          {"rate_local", mp.rate_local},
          {"gamma", mp.gamma},
          {"f", mp.f},
          {"ppn", mp.ppn}};
}

inline json to_json(const ModelPrediction& m) {
  json out = {{"point_to_point", m.point_to_point},
              {"collective", m.collective},
              {"computation", m.computation},
              {"total", m.total},
              {"dominant", m.dominant}};
  if (m.total > 0.0)
    out["percent"] = {{"point_to_point", 100.0 * m.point_to_point / m.total},
                      {"collective", 100.0 * m.collective / m.total},
                      {"computation", 100.0 * m.computation / m.total}};
  return out;
}

}  // namespace ecg
