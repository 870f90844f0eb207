// Command line front end: generate, solve, bench-spmbv, model, tune.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "ecg/ecg.hpp"

namespace {

void add_run_flags(CLI::App* cmd, ecg::RunConfig& cfg, std::string& output, std::string& format) {
  cmd->add_option("--problem", cfg.problem, "laplace1d:N, laplace2d:K[xL] or laplace2d9:K[xL]");
  cmd->add_option("--matrix", cfg.matrix, "Matrix Market file (overrides --problem)");
  cmd->add_option("--p", cfg.p, "virtual ranks")->check(CLI::PositiveNumber);
  cmd->add_option("--ppn", cfg.ppn, "ranks per node")->check(CLI::PositiveNumber);
  cmd->add_option("--t", cfg.t, "enlarging factors")->delimiter(',');
  cmd->add_option("--scheme", cfg.scheme, "standard|2step|3step|optimal|tuned|all");
  cmd->add_option("--threshold", cfg.threshold, "nodal-optimal split threshold in bytes");
  cmd->add_option("--params", cfg.params_path, "machine parameter file (key = value)");
  cmd->add_option("--partition", cfg.partition, "rows|nnz");
  cmd->add_option("--output,-o", output, "output path (default stdout)");
  cmd->add_option("--format", format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
}

void emit(const ecg::json& report, const std::string& output, const std::string& format) {
  const std::string text = format == "csv" ? ecg::report_to_csv(report) : report.dump(2) + "\n";
  if (output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + output);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Enlarged CG and node-aware SpMBV on a simulated cluster"};
  app.require_subcommand(1);

  std::string gen_problem = "laplace2d:32", gen_output;
  auto* gen = app.add_subcommand("generate", "write a built-in problem as Matrix Market");
  gen->add_option("--problem", gen_problem, "problem spec");
  gen->add_option("--output,-o", gen_output, "output path (default stdout)");

  ecg::RunConfig cfg;
  std::string output, format = "json", plan_dump;
  bool absolute = false, no_cg = false;

  auto* solve = app.add_subcommand("solve", "run CG and ECG");
  add_run_flags(solve, cfg, output, format);
  solve->add_option("--tol", cfg.tol, "convergence tolerance");
  solve->add_option("--maxit", cfg.maxit, "iteration limit");
  solve->add_flag("--absolute", absolute, "absolute instead of relative tolerance");
  solve->add_flag("--no-cg", no_cg, "skip the CG baseline");

  auto* bench = app.add_subcommand("bench-spmbv", "one SpMBV per scheme and t");
  add_run_flags(bench, cfg, output, format);
  bench->add_option("--dump-plan", plan_dump, "write the first (t, scheme) plan as JSON");

  auto* model = app.add_subcommand("model", "model predictions from plan statistics");
  add_run_flags(model, cfg, output, format);

  auto* tune = app.add_subcommand("tune", "select a scheme per t");
  add_run_flags(tune, cfg, output, format);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto prob = ecg::generate_problem(gen_problem);
      if (gen_output.empty()) {
        ecg::write_matrix_market(std::cout, prob.a);
      } else {
        std::ofstream out(gen_output);
        if (!out) throw std::runtime_error("cannot write " + gen_output);
        ecg::write_matrix_market(out, prob.a);
      }
      return 0;
    }
    cfg.relative = !absolute;
    cfg.with_cg = !no_cg;
    if (bench->parsed() && !app.get_subcommand("bench-spmbv")->count("--scheme")) cfg.scheme = "all";
    if (model->parsed() || tune->parsed()) cfg.scheme = "all";

    ecg::json report;
    if (solve->parsed()) report = ecg::run_solve(cfg);
    if (bench->parsed()) {
      report = ecg::run_spmbv_bench(cfg);
      if (!plan_dump.empty()) {
        const auto a = ecg::distribute(cfg, ecg::load_problem(cfg).a);
        const auto mp = ecg::effective_params(cfg);
        const ecg::VirtualCluster cluster(a.topology);
        const std::string name = ecg::requested_schemes(cfg).front();
        const auto s = ecg::detail::resolve_scheme(name, a, cfg.t.front(), cluster, mp, cfg.threshold);
        std::ofstream out(plan_dump);
        if (!out) throw std::runtime_error("cannot write " + plan_dump);
        out << ecg::to_json(ecg::make_plan(s, a.pattern, cfg.t.front(), std::size_t(mp.f), cfg.threshold)).dump(2)
            << "\n";
      }
    }
    if (model->parsed()) report = ecg::run_model(cfg);
    if (tune->parsed()) report = ecg::run_tune(cfg);
    emit(report, output, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
