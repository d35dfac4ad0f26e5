// Command-line workbench for the quadruple tank system: open-loop
// simulation, parameter estimation, closed-loop runs, and comparison.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "qts/harness.hpp"
#include "qts/sysid.hpp"

namespace {

// splitmix64 step: one master seed, one deterministic stream per component.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t component) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (component + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

qts::ModelParams resolve_params(const std::string& preset,
                                const std::string& file) {
  if (!file.empty()) return qts::load_params_file(file);
  return qts::params_preset(preset);
}

qts::Vec4 parse_vec4(const std::string& text) {
  qts::Vec4 v;
  std::stringstream ss(text);
  char comma;
  for (int i = 0; i < 4; ++i) {
    if (!(ss >> v[i])) throw CLI::ValidationError("expected 4 comma-separated values");
    if (i < 3) ss >> comma;
  }
  return v;
}

std::vector<qts::ParamId> parse_free_list(const std::string& text) {
  static const std::map<std::string, qts::ParamId> names = {
      {"a1", qts::ParamId::a1},         {"a2", qts::ParamId::a2},
      {"a3", qts::ParamId::a3},         {"a4", qts::ParamId::a4},
      {"A1", qts::ParamId::A1},         {"A2", qts::ParamId::A2},
      {"A3", qts::ParamId::A3},         {"A4", qts::ParamId::A4},
      {"gamma1", qts::ParamId::gamma1}, {"gamma2", qts::ParamId::gamma2},
      {"sigma1", qts::ParamId::sigma1}, {"sigma2", qts::ParamId::sigma2},
      {"sigma3", qts::ParamId::sigma3}, {"sigma4", qts::ParamId::sigma4},
  };
  std::vector<qts::ParamId> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    auto it = names.find(tok);
    if (it == names.end())
      throw CLI::ValidationError("unknown free parameter: " + tok);
    out.push_back(it->second);
  }
  return out;
}

const char* kParamNames[] = {"a1", "a2", "a3", "a4", "A1", "A2", "A3",
                             "A4", "gamma1", "gamma2", "sigma1", "sigma2",
                             "sigma3", "sigma4"};

void print_param_table(const qts::ModelParams& initial,
                       const qts::ModelParams& estimated) {
  std::printf("%-10s %12s %12s\n", "Parameter", "Initial", "Estimated");
  for (int i = 0; i < 14; ++i) {
    const auto id = static_cast<qts::ParamId>(i);
    std::printf("%-10s %12.4f %12.4f\n", kParamNames[i],
                qts::get_param(initial, id), qts::get_param(estimated, id));
  }
}

void print_report(const qts::PerformanceReport& rep) {
  std::printf("NISE  = %.3f cm^2\n", rep.nise);
  std::printf("NIAE  = %.3f cm\n", rep.niae);
  if (rep.nisdu)
    std::printf("NISdU = %.3f (cm^3/s)^2\n", *rep.nisdu);
  else
    std::printf("NISdU = - (fewer than 2 inputs)\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadruple tank system control workbench"};
  app.require_subcommand(1);
  app.set_config("--config");

  // ---- simulate ----
  auto* sim = app.add_subcommand(
      "simulate", "Open-loop excitation experiment, writes a dataset CSV");
  std::uint64_t sim_seed = 0;
  std::string sim_out, sim_preset = "estimated", sim_params_file;
  double sim_duration = 10000.0, sim_ts = 5.0;
  int sim_hold_min = 10, sim_hold_max = 40;
  double sim_level_min = 160.0, sim_level_max = 350.0;
  int sim_substeps = 10;
  bool sim_noise_free = false;
  sim->add_option("--seed", sim_seed, "Master seed")->required();
  sim->add_option("--out", sim_out, "Output CSV path")->required();
  sim->add_option("--preset", sim_preset, "Plant parameter preset");
  sim->add_option("--params", sim_params_file, "Plant parameter JSON file");
  sim->add_option("--duration", sim_duration, "Experiment length [s]");
  sim->add_option("--ts", sim_ts, "Sampling time [s]");
  sim->add_option("--hold-min", sim_hold_min, "Min hold [intervals]");
  sim->add_option("--hold-max", sim_hold_max, "Max hold [intervals]");
  sim->add_option("--level-min", sim_level_min, "Min pump flow [cm^3/s]");
  sim->add_option("--level-max", sim_level_max, "Max pump flow [cm^3/s]");
  sim->add_option("--substeps", sim_substeps, "Euler-Maruyama substeps");
  sim->add_flag("--noise-free", sim_noise_free, "Disable all noise");

  // ---- estimate ----
  auto* est = app.add_subcommand(
      "estimate", "Maximum likelihood parameter estimation from a dataset");
  std::string est_data, est_validation, est_out;
  std::string est_preset = "nominal+tuning", est_params_file;
  std::string est_free = "a1,a2,a3,a4,gamma1,gamma2";
  std::uint64_t est_seed = 0;
  int est_max_evals = 2000, est_multistart = 3;
  est->add_option("--data", est_data, "Estimation dataset CSV")->required();
  est->add_option("--validation", est_validation, "Validation dataset CSV");
  est->add_option("--out", est_out, "Estimated parameter JSON output");
  est->add_option("--preset", est_preset, "Initial parameter preset");
  est->add_option("--params", est_params_file, "Initial parameter JSON file");
  est->add_option("--free", est_free, "Comma-separated free parameters");
  est->add_option("--seed", est_seed, "Master seed")->required();
  est->add_option("--max-evals", est_max_evals, "Evaluation cap per start");
  est->add_option("--multistart", est_multistart, "Number of starts");

  // ---- run ----
  auto* run = app.add_subcommand("run", "Closed-loop run on the benchmark protocol");
  std::string run_controller, run_out;
  std::uint64_t run_seed = 0;
  std::string run_plant_preset = "estimated", run_model_preset = "estimated+tuning";
  std::string run_plant_file, run_model_file, run_dstar = "0,0,0,0";
  double run_duration = 0.0;
  bool run_noise_free = false;
  run->add_option("--controller", run_controller, "pid, lmpc or nmpc")->required();
  run->add_option("--seed", run_seed, "Master seed")->required();
  run->add_option("--out", run_out, "Run record CSV path")->required();
  run->add_option("--plant-preset", run_plant_preset, "Plant truth preset");
  run->add_option("--plant-params", run_plant_file, "Plant truth JSON file");
  run->add_option("--model-preset", run_model_preset, "Controller model preset");
  run->add_option("--model-params", run_model_file, "Controller model JSON file");
  run->add_option("--dstar", run_dstar, "Constant unmodeled inflow d1,d2,d3,d4");
  run->add_option("--duration", run_duration, "Override run length [s]");
  run->add_flag("--noise-free", run_noise_free, "Disable all noise");

  // ---- compare ----
  auto* cmp = app.add_subcommand("compare", "Metric table for saved run records");
  std::vector<std::string> cmp_records;
  std::string cmp_out;
  cmp->add_option("records", cmp_records, "Run record CSV files")->required();
  cmp->add_option("--out", cmp_out, "Also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const qts::ModelParams p = resolve_params(sim_preset, sim_params_file);
      const int n = static_cast<int>(std::llround(sim_duration / sim_ts));
      const auto u_sched = qts::generate_excitation(
          split_seed(sim_seed, 0), n, sim_hold_min, sim_hold_max,
          sim_level_min, sim_level_max);
      const qts::Vec4 x0 = qts::steady_state(u_sched[0], qts::Vec4::Zero(), p);
      const auto traj = qts::simulate_plant(
          x0, u_sched, std::vector<qts::Vec4>(n, qts::Vec4::Zero()), p, sim_ts,
          sim_substeps, split_seed(sim_seed, 1), sim_noise_free);
      qts::Dataset ds;
      ds.t = traj.t;
      ds.Y = traj.y;
      ds.U = u_sched;
      ds.U.push_back(u_sched.back());  // input held at the final sample
      qts::save_dataset_csv(ds, sim_out);
      std::printf("wrote %zu samples to %s (Ts = %g s)\n", ds.size(),
                  sim_out.c_str(), sim_ts);
    } else if (*est) {
      const qts::ModelParams theta0 = resolve_params(est_preset, est_params_file);
      qts::EstimationProblem problem;
      problem.data = qts::load_dataset_csv(est_data);
      problem.theta0 = theta0;
      problem.free_params = parse_free_list(est_free);
      qts::EstimateOptions opt;
      opt.max_evals = est_max_evals;
      opt.multistart = est_multistart;
      opt.seed = split_seed(est_seed, 2);
      const auto res = qts::estimate_parameters(problem, opt);
      std::printf("V_ML = %.6f after %d evaluations (%s)\n", res.vml,
                  res.evaluations, res.converged ? "converged" : "not converged");
      print_param_table(theta0, res.theta);

      auto gof_for = [&](const qts::Dataset& ds, const qts::ModelParams& th) {
        qts::Vec4 x0;
        for (int i = 0; i < 4; ++i) x0[i] = ds.Y[0][i] * th.rho * th.A[i];
        return qts::goodness_of_fit(
            ds, qts::simulate_levels_deterministic(x0, ds, th));
      };
      std::printf("\n%-12s %16s %16s\n", "Parameters", "Estimation GOF",
                  "Validation GOF");
      qts::Dataset val;
      const bool has_val = !est_validation.empty();
      if (has_val) val = qts::load_dataset_csv(est_validation);
      auto gof_row = [&](const char* label, const qts::ModelParams& th) {
        std::printf("%-12s %15.2f%%", label, gof_for(problem.data, th));
        if (has_val)
          std::printf(" %15.2f%%", gof_for(val, th));
        else
          std::printf(" %16s", "-");
        std::printf("\n");
      };
      gof_row("Initial", theta0);
      gof_row("Estimated", res.theta);
      if (!est_out.empty()) {
        qts::save_params_file(res.theta, est_out);
        std::printf("\nwrote estimated parameters to %s\n", est_out.c_str());
      }
    } else if (*run) {
      qts::Protocol proto = qts::paper_protocol();
      qts::RunSpec spec = proto.base;
      spec.kind = qts::controller_from_name(run_controller);
      spec.seed = split_seed(run_seed, 3);
      spec.plant_theta = resolve_params(run_plant_preset, run_plant_file);
      spec.model_theta = resolve_params(run_model_preset, run_model_file);
      spec.d_star = parse_vec4(run_dstar);
      spec.noise_free = run_noise_free;
      if (run_duration > 0.0) spec.duration = run_duration;
      const qts::RunRecord rec = qts::run_closed_loop(spec);
      qts::save_run_record(rec, run_out);
      std::printf("%s: %zu samples -> %s\n", rec.controller.c_str(),
                  rec.rows.size(), run_out.c_str());
      print_report(qts::compute_metrics(rec));
    } else if (*cmp) {
      std::vector<qts::RunRecord> records;
      for (const auto& path : cmp_records)
        records.push_back(qts::load_run_record(path));
      const auto rows = qts::compare(records);
      std::fputs(qts::comparison_text(rows).c_str(), stdout);
      if (!cmp_out.empty()) {
        std::ofstream out(cmp_out);
        if (!out) throw std::runtime_error("cannot write: " + cmp_out);
        out << qts::comparison_csv(rows);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
