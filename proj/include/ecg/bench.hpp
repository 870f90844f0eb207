#pragma once

// Report builders behind the command line tool. Every report is a pure
// function of its RunConfig, so identical configs give identical bytes.

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecg/comm_plan.hpp"
#include "ecg/json_io.hpp"
#include "ecg/partition.hpp"
#include "ecg/perf_models.hpp"
#include "ecg/problems.hpp"
#include "ecg/solvers.hpp"
#include "ecg/tuning.hpp"
#include "ecg/virtual_cluster.hpp"

namespace ecg {

struct RunConfig {
  std::string problem = "laplace2d:32";
  std::string matrix;  // Matrix Market path, overrides problem
  std::size_t p = 4;
  std::size_t ppn = 2;
  std::vector<std::size_t> t{1};
  std::string scheme = "standard";  // standard|2step|3step|optimal|tuned|all
  double tol = 1e-8;
  bool relative = true;
  std::size_t maxit = 1000;
  std::size_t threshold = kDefaultThresholdBytes;
  std::string params_path;
  std::string partition = "rows";  // rows|nnz
  bool with_cg = true;
  MachineParams params;

  void validate() const {
    if (p == 0 || ppn == 0) throw std::invalid_argument("config: p and ppn must be positive");
    if (ppn > p) throw std::invalid_argument("config: ppn must not exceed p");
    if (t.empty()) throw std::invalid_argument("config: at least one t is required");
    for (auto w : t)
      if (w == 0) throw std::invalid_argument("config: t must be at least 1");
    if (threshold == 0) throw std::invalid_argument("config: threshold must be positive");
    if (partition != "rows" && partition != "nnz") throw std::invalid_argument("config: partition must be rows or nnz");
    if (scheme != "tuned" && scheme != "all" && !parse_scheme(scheme))
      throw std::invalid_argument("config: unknown scheme '" + scheme + "'");
  }
};

inline Problem load_problem(const RunConfig& cfg) {
  if (cfg.matrix.empty()) return generate_problem(cfg.problem);
  Problem prob;
  prob.name = cfg.matrix;
  prob.a = load_matrix_market(cfg.matrix);
  prob.rhs.assign(prob.a.n_rows, 1.0);
  return prob;
}

inline DistributedMatrix distribute(const RunConfig& cfg, const CsrMatrix& a) {
  const Topology topo(cfg.p, cfg.ppn);
  RowPartition part = cfg.partition == "nnz" ? build_nnz_partition(a, cfg.p) : build_row_partition(a.n_rows, cfg.p);
  return DistributedMatrix(a, std::move(part), topo);
}

// Model parameters with ppn tied to the simulated topology.
inline MachineParams effective_params(const RunConfig& cfg) {
  MachineParams mp = cfg.params_path.empty() ? cfg.params : load_machine_params(cfg.params_path, cfg.params);
  mp.ppn = double(cfg.ppn);
  mp.validate();
  return mp;
}

// Concrete schemes requested; "tuned" is resolved per t by the caller.
inline std::vector<std::string> requested_schemes(const RunConfig& cfg) {
  if (cfg.scheme == "all") return {"standard", "2step", "3step", "optimal", "tuned"};
  return {cfg.scheme};
}

namespace detail {

inline ModelPrediction scheme_prediction(Scheme s, const CommStats& scheme_stats, const CommStats& standard_stats,
                                         std::size_t t, const DistributedMatrix& a, const MachineParams& mp) {
  ModelPrediction pred =
      ecg_iteration_model(standard_stats, t, a.n(), a.global.nnz(), a.topology.p, mp, P2PModel::maxrate);
  if (s != Scheme::standard) {
    pred.point_to_point = model_for_scheme(s, scheme_stats, t, mp);
    pred.total = pred.point_to_point + pred.collective + pred.computation;
    if (pred.point_to_point >= pred.collective && pred.point_to_point >= pred.computation)
      pred.dominant = "point_to_point";
    else if (pred.collective >= pred.computation)
      pred.dominant = "collective";
    else
      pred.dominant = "computation";
  }
  return pred;
}

inline json config_json(const RunConfig& cfg, const MachineParams& mp) {
  return {{"problem", cfg.matrix.empty() ? cfg.problem : cfg.matrix},
          {"p", cfg.p},
          {"ppn", cfg.ppn},
          {"t", cfg.t},
          {"scheme", cfg.scheme},
          {"tol", cfg.tol},
          {"relative", cfg.relative},
          {"maxit", cfg.maxit},
          {"threshold", cfg.threshold},
          {"partition", cfg.partition},
          {"machine", to_json(mp)}};
}

inline json report_header(const std::string& command, const RunConfig& cfg, const MachineParams& mp,
                          const DistributedMatrix& a) {
  return {{"schema", kReportSchema},
          {"command", command},
          {"config", config_json(cfg, mp)},
          {"matrix", {{"n", a.n()}, {"nnz", a.global.nnz()}}}};
}

inline Scheme resolve_scheme(const std::string& name, const DistributedMatrix& a, std::size_t t,
                             const VirtualCluster& cluster, const MachineParams& mp, std::size_t threshold) {
  if (name == "tuned") return tune_scheme(a, t, cluster, mp, std::size_t(mp.f), threshold).choice;
  return *parse_scheme(name);
}

inline double max_rank_total(const std::vector<KernelFlops>& per_rank) {
  double m = 0.0;
  for (const auto& f : per_rank) m = std::max(m, f.total());
  return m;
}

}  // namespace detail

// One SpMBV per (t, scheme) with modeled per-iteration costs.
inline json run_spmbv_bench(const RunConfig& cfg) {
  cfg.validate();
  const MachineParams mp = effective_params(cfg);
  const Problem prob = load_problem(cfg);
  const DistributedMatrix a = distribute(cfg, prob.a);
  const VirtualCluster cluster(a.topology);
  const std::size_t f = std::size_t(mp.f);

  json out = detail::report_header("bench-spmbv", cfg, mp, a);
  json rows = json::array();
  for (std::size_t t : cfg.t) {
    BlockVector ones(a.n(), t);
    ones.fill(1.0);
    const DistBlockVector v = scatter(ones, a.partition);
    const CommStats standard_stats = plan_stats(plan_standard(a.pattern, t, f));
    for (const auto& name : requested_schemes(cfg)) {
      const Scheme s = detail::resolve_scheme(name, a, t, cluster, mp, cfg.threshold);
      const CommPlan plan = make_plan(s, a.pattern, t, f, cfg.threshold);
      ExecutionTrace trace(a.topology, t, s);
      spmbv(a, plan, v, cluster, trace);
      json row = {{"scheme", name},
                  {"resolved_scheme", to_string(s)},
                  {"t", t},
                  {"messages", trace.point_to_point_messages()},
                  {"bytes_on_node", trace.bytes_on_node()},
                  {"bytes_off_node", trace.bytes_off_node()},
                  {"flops_max_rank", detail::max_rank_total(trace.flops_per_rank)},
                  {"stats", to_json(trace.comm)},
                  {"modeled_p2p_seconds", model_for_scheme(s, trace.comm, t, mp)},
                  {"model", to_json(detail::scheme_prediction(s, trace.comm, standard_stats, t, a, mp))},
                  {"trace", to_json(trace)}};
      rows.push_back(std::move(row));
    }
  }
  out["rows"] = std::move(rows);
  return out;
}

// ECG solves per (t, scheme), plus an optional CG baseline.
inline json run_solve(const RunConfig& cfg) {
  cfg.validate();
  const MachineParams mp = effective_params(cfg);
  const Problem prob = load_problem(cfg);
  const DistributedMatrix a = distribute(cfg, prob.a);
  const VirtualCluster cluster(a.topology);
  const std::size_t f = std::size_t(mp.f);

  SolveOptions opts;
  opts.tol = cfg.tol;
  opts.relative = cfg.relative;
  opts.maxit = cfg.maxit;
  opts.threshold = cfg.threshold;
  opts.bytes_per_float = f;

  json out = detail::report_header("solve", cfg, mp, a);
  json rows = json::array();
  auto row_of = [&](const std::string& name, const SolveReport& rep) {
    json row = {{"method", rep.method}, {"scheme", name}, {"resolved_scheme", to_string(rep.scheme)}, {"t", rep.t}};
    row["iterations"] = rep.iterations;
    row["status"] = to_string(rep.status);
    row["final_residual"] = rep.final_residual;
    const CommStats standard_stats = plan_stats(plan_standard(a.pattern, rep.t, f));
    row["model"] = to_json(detail::scheme_prediction(rep.scheme, rep.spmbv_stats, standard_stats, rep.t, a, mp));
    row["report"] = to_json(rep);
    return row;
  };

  if (cfg.with_cg) {
    opts.scheme = Scheme::standard;
    rows.push_back(row_of("standard", cg_solve(a, prob.rhs, {}, opts, cluster)));
  }
  for (std::size_t t : cfg.t)
    for (const auto& name : requested_schemes(cfg)) {
      opts.scheme = detail::resolve_scheme(name, a, t, cluster, mp, cfg.threshold);
      rows.push_back(row_of(name, ecg_solve(a, prob.rhs, {}, t, opts, cluster)));
    }
  out["rows"] = std::move(rows);
  return out;
}

// Closed-form predictions from plan statistics only; nothing is executed.
inline json run_model(const RunConfig& cfg) {
  cfg.validate();
  const MachineParams mp = effective_params(cfg);
  const Problem prob = load_problem(cfg);
  const DistributedMatrix a = distribute(cfg, prob.a);
  const std::size_t f = std::size_t(mp.f);

  json out = detail::report_header("model", cfg, mp, a);
  json rows = json::array();
  for (std::size_t t : cfg.t) {
    const CommStats standard_stats = plan_stats(plan_standard(a.pattern, t, f));
    for (Scheme s : kAllSchemes) {
      const CommStats st = plan_stats(make_plan(s, a.pattern, t, f, cfg.threshold));
      rows.push_back({{"scheme", to_string(s)},
                      {"t", t},
                      {"stats", to_json(st)},
                      {"flops_per_iteration", iteration_flops(double(a.n()), double(a.global.nnz()), double(cfg.p), t)},
                      {"model", to_json(detail::scheme_prediction(s, st, standard_stats, t, a, mp))},
                      {"model_postal", to_json(ecg_iteration_model(standard_stats, t, a.n(), a.global.nnz(), cfg.p,
                                                                    mp, P2PModel::postal))}});
    }
  }
  out["rows"] = std::move(rows);
  return out;
}

inline json run_tune(const RunConfig& cfg) {
  cfg.validate();
  const MachineParams mp = effective_params(cfg);
  const Problem prob = load_problem(cfg);
  const DistributedMatrix a = distribute(cfg, prob.a);
  const VirtualCluster cluster(a.topology);

  json out = detail::report_header("tune", cfg, mp, a);
  json rows = json::array();
  for (std::size_t t : cfg.t) {
    const TuneReport rep = tune_scheme(a, t, cluster, mp, std::size_t(mp.f), cfg.threshold);
    for (const auto& e : rep.entries)
      rows.push_back({{"t", t},
                      {"scheme", to_string(e.scheme)},
                      {"selected", e.scheme == rep.choice},
                      {"modeled_seconds", e.modeled_seconds},
                      {"stats", to_json(e.stats)}});
    out["choice"][std::to_string(t)] = to_string(rep.choice);
  }
  out["rows"] = std::move(rows);
  return out;
}

namespace detail {
inline void flatten(const json& value, const std::string& prefix, json& flat) {
  if (value.is_object()) {
    for (auto it = value.begin(); it != value.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), flat);
  } else if (!value.is_array()) {
    flat[prefix] = value;
  }
}

inline std::string csv_cell(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    return s.find_first_of(",\"\n") == std::string::npos ? s : "\"" + s + "\"";
  }
  return v.dump();
}
}  // namespace detail

// Flat table of a report's rows; arrays (histories, traces) are dropped and
// nested objects become dotted column names.
inline std::string report_to_csv(const json& report) {
  std::vector<json> flat;
  std::vector<std::string> columns;
  for (const auto& row : report.at("rows")) {
    json f = json::object();
    detail::flatten(row, "", f);
    for (auto it = f.begin(); it != f.end(); ++it)
      if (std::find(columns.begin(), columns.end(), it.key()) == columns.end()) columns.push_back(it.key());
    flat.push_back(std::move(f));
  }
  std::ostringstream out;
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const auto& f : flat) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ',';
      if (f.contains(columns[c])) out << detail::csv_cell(f.at(columns[c]));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ecg
