#include "qts/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace qts {

double Dataset::sample_time() const {
  if (t.size() < 2) throw std::invalid_argument("Dataset: need N >= 2");
  return t[1] - t[0];
}

void Dataset::validate() const {
  if (t.size() < 2) throw std::invalid_argument("Dataset: need N >= 2");
  if (Y.size() != t.size() || U.size() != t.size())
    throw std::invalid_argument("Dataset: column length mismatch");
  const double Ts = t[1] - t[0];
  if (!(Ts > 0.0)) throw std::invalid_argument("Dataset: timestamps not increasing");
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double dt = t[k] - t[k - 1];
    if (std::abs(dt - Ts) > 1e-9 * std::max(1.0, Ts))
      throw std::invalid_argument("Dataset: non-uniform sampling at row " +
                                  std::to_string(k));
  }
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,y1", 0) != 0)
    throw std::runtime_error("dataset missing t,y1,... header: " + path);
  Dataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 7> v{};
    char comma;
    for (int i = 0; i < 7; ++i) {
      if (!(ss >> v[i])) throw std::runtime_error("malformed dataset row: " + line);
      if (i < 6) ss >> comma;
    }
    ds.t.push_back(v[0]);
    ds.Y.push_back(Vec4(v[1], v[2], v[3], v[4]));
    ds.U.push_back(Vec2(v[5], v[6]));
  }
  ds.validate();
  return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  out << "t,y1,y2,y3,y4,u1,u2\n";
  char buf[256];
  for (std::size_t k = 0; k < ds.size(); ++k) {
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", ds.t[k],
                  ds.Y[k][0], ds.Y[k][1], ds.Y[k][2], ds.Y[k][3], ds.U[k][0],
                  ds.U[k][1]);
    out << buf;
  }
}

double get_param(const ModelParams& p, ParamId id) {
  switch (id) {
    case ParamId::a1: return p.a[0];
    case ParamId::a2: return p.a[1];
    case ParamId::a3: return p.a[2];
    case ParamId::a4: return p.a[3];
    case ParamId::A1: return p.A[0];
    case ParamId::A2: return p.A[1];
    case ParamId::A3: return p.A[2];
    case ParamId::A4: return p.A[3];
    case ParamId::gamma1: return p.gamma[0];
    case ParamId::gamma2: return p.gamma[1];
    case ParamId::sigma1: return p.sigma[0];
    case ParamId::sigma2: return p.sigma[1];
    case ParamId::sigma3: return p.sigma[2];
    case ParamId::sigma4: return p.sigma[3];
  }
  throw std::invalid_argument("get_param: bad id");
}

void set_param(ModelParams& p, ParamId id, double value) {
  switch (id) {
    case ParamId::a1: p.a[0] = value; return;
    case ParamId::a2: p.a[1] = value; return;
    case ParamId::a3: p.a[2] = value; return;
    case ParamId::a4: p.a[3] = value; return;
    case ParamId::A1: p.A[0] = value; return;
    case ParamId::A2: p.A[1] = value; return;
    case ParamId::A3: p.A[2] = value; return;
    case ParamId::A4: p.A[3] = value; return;
    case ParamId::gamma1: p.gamma[0] = value; return;
    case ParamId::gamma2: p.gamma[1] = value; return;
    case ParamId::sigma1: p.sigma[0] = value; return;
    case ParamId::sigma2: p.sigma[1] = value; return;
    case ParamId::sigma3: p.sigma[2] = value; return;
    case ParamId::sigma4: p.sigma[3] = value; return;
  }
  throw std::invalid_argument("set_param: bad id");
}

double nll_term(const Eigen::Ref<const Eigen::VectorXd>& e,
                const Eigen::Ref<const Eigen::MatrixXd>& Re) {
  Eigen::LLT<Eigen::MatrixXd> llt(Re);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("nll_term: Re not positive definite");
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < Re.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return logdet + e.dot(llt.solve(e));
}

double negative_log_likelihood(const ModelParams& theta, const Dataset& ds,
                               const NllOptions& opt) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t N = ds.size();
  const double Ts = ds.sample_time();
  try {
    theta.validate();
    GaussianBelief b = opt.has_initial_belief
                           ? opt.initial_belief
                           : initial_belief(ds.U[0], theta);
    double sum = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      auto [posterior, innov] = ekf_measurement_update(b, ds.Y[k], theta);
      sum += nll_term(innov.e, innov.Re);
      if (!std::isfinite(sum)) return inf;
      b = posterior;
      if (k + 1 < N) b = ekf_time_update(b, ds.U[k], Ts, theta, opt.rk_steps);
    }
    return 0.5 * sum +
           0.5 * static_cast<double>(N) * 4.0 * std::log(2.0 * M_PI);
  } catch (const std::exception&) {
    return inf;
  }
}

namespace {

bool is_logit(ParamId id) {
  return id == ParamId::gamma1 || id == ParamId::gamma2;
}

double to_transformed(ParamId id, double v) {
  if (is_logit(id)) {
    const double c = std::clamp(v, 1e-12, 1.0 - 1e-12);
    return std::log(c / (1.0 - c));
  }
  return std::log(std::max(v, 1e-12));
}

double from_transformed(ParamId id, double x) {
  if (is_logit(id)) return 1.0 / (1.0 + std::exp(-x));
  return std::exp(x);
}

struct NmResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5) with an absolute simplex-diameter stopping rule.
template <class F>
NmResult nelder_mead(F&& func, const Eigen::VectorXd& x0, double step,
                     double tol, int max_evals, std::vector<double>* trace) {
  const int d = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(d + 1, x0);
  std::vector<double> fs(d + 1);
  NmResult res;
  for (int i = 1; i <= d; ++i) xs[i][i - 1] += step;
  for (int i = 0; i <= d; ++i) {
    fs[i] = func(xs[i]);
    ++res.evals;
  }
  auto order = [&] {
    std::vector<int> idx(d + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> xs2(d + 1);
    std::vector<double> fs2(d + 1);
    for (int i = 0; i <= d; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };
  order();
  if (trace) trace->push_back(fs[0]);

  while (res.evals < max_evals) {
    double diam = 0.0;
    for (int i = 1; i <= d; ++i)
      diam = std::max(diam, (xs[i] - xs[0]).template lpNorm<Eigen::Infinity>());
    if (diam < tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += xs[i];
    centroid /= d;

    const Eigen::VectorXd xr = centroid + (centroid - xs[d]);
    const double fr = func(xr);
    ++res.evals;
    if (fr < fs[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[d]);
      const double fe = func(xe);
      ++res.evals;
      if (fe < fr) {
        xs[d] = xe;
        fs[d] = fe;
      } else {
        xs[d] = xr;
        fs[d] = fr;
      }
    } else if (fr < fs[d - 1]) {
      xs[d] = xr;
      fs[d] = fr;
    } else {
      const bool outside = fr < fs[d];
      const Eigen::VectorXd base = outside ? xr : xs[d];
      const Eigen::VectorXd xc = centroid + 0.5 * (base - centroid);
      const double fc = func(xc);
      ++res.evals;
      if (fc < std::min(fr, fs[d])) {
        xs[d] = xc;
        fs[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = func(xs[i]);
          ++res.evals;
        }
      }
    }
    order();
    if (trace && (trace->empty() || fs[0] < trace->back()))
      trace->push_back(fs[0]);
  }
  res.x = xs[0];
  res.f = fs[0];
  return res;
}

}  // namespace

EstimateResult estimate_parameters(const EstimationProblem& problem,
                                   const EstimateOptions& opt) {
  problem.data.validate();
  problem.theta0.validate();
  const int d = static_cast<int>(problem.free_params.size());

  EstimateResult out;
  if (d == 0) {
    out.theta = problem.theta0;
    out.vml = negative_log_likelihood(problem.theta0, problem.data, opt.nll);
    out.converged = true;
    out.evaluations = 1;
    return out;
  }

  auto unpack = [&](const Eigen::VectorXd& x) {
    ModelParams th = problem.theta0;
    for (int i = 0; i < d; ++i)
      set_param(th, problem.free_params[i], from_transformed(problem.free_params[i], x[i]));
    return th;
  };
  auto objective = [&](const Eigen::VectorXd& x) {
    return negative_log_likelihood(unpack(x), problem.data, opt.nll);
  };

  Eigen::VectorXd x0(d);
  for (int i = 0; i < d; ++i)
    x0[i] = to_transformed(problem.free_params[i],
                           get_param(problem.theta0, problem.free_params[i]));

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  bool any_finite = false;
  double best_f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x0;
  bool best_converged = false;
  for (int s = 0; s < std::max(1, opt.multistart); ++s) {
    Eigen::VectorXd xs = x0;
    if (s > 0)
      for (int i = 0; i < d; ++i) xs[i] += opt.start_spread * norm(rng);
    NmResult r = nelder_mead(objective, xs, 0.05, opt.simplex_tol,
                             opt.max_evals, s == 0 ? &out.best_trace : nullptr);
    out.evaluations += r.evals;
    if (std::isfinite(r.f)) any_finite = true;
    if (r.f < best_f) {
      best_f = r.f;
      best_x = r.x;
      best_converged = r.converged;
    }
  }
  if (!any_finite)
    throw std::runtime_error("estimate_parameters: objective non-finite for all starts");

  out.theta = unpack(best_x);
  out.vml = best_f;
  out.converged = best_converged;
  return out;
}

double goodness_of_fit(const Dataset& ds, const std::vector<Vec4>& simulated) {
  if (simulated.size() != ds.size())
    throw std::invalid_argument("goodness_of_fit: length mismatch");
  const std::size_t N = ds.size();
  double gof = 0.0;
  for (int i = 0; i < 4; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < N; ++k) mean += ds.Y[k][i];
    mean /= static_cast<double>(N);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      num += std::pow(ds.Y[k][i] - simulated[k][i], 2);
      den += std::pow(ds.Y[k][i] - mean, 2);
    }
    if (!(den > 0.0))
      throw std::domain_error("goodness_of_fit: constant measured channel " +
                              std::to_string(i + 1));
    gof += (1.0 - std::sqrt(num) / std::sqrt(den)) * 100.0;
  }
  return gof / 4.0;
}

std::vector<Vec4> simulate_levels_deterministic(const Vec4& x0,
                                                const Dataset& ds,
                                                const ModelParams& p,
                                                int rk_steps) {
  const double Ts = ds.sample_time();
  std::vector<Vec4> out;
  out.reserve(ds.size());
  Vec4 m = x0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    out.push_back(measure(m, p));
    if (k + 1 < ds.size()) {
      const Vec2 u = ds.U[k];
      m = integrate_rk4([&](double, const Vec4& x) {
        return drift(x, u, Vec4::Zero(), p);
      }, m, 0.0, Ts, rk_steps);
    }
  }
  return out;
}

std::vector<Vec2> generate_excitation(std::uint64_t seed, int n_samples,
                                      int hold_min, int hold_max,
                                      double level_min, double level_max) {
  if (hold_min < 1 || hold_max < hold_min)
    throw std::invalid_argument("generate_excitation: bad hold range");
  if (!(level_min <= level_max))
    throw std::invalid_argument("generate_excitation: bad level range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> hold(hold_min, hold_max);
  std::uniform_real_distribution<double> level(level_min, level_max);
  std::vector<Vec2> sched(n_samples);
  for (int pump = 0; pump < 2; ++pump) {
    int k = 0;
    while (k < n_samples) {
      const int n = hold(rng);
      const double v = level(rng);
      for (int j = 0; j < n && k < n_samples; ++j, ++k) sched[k][pump] = v;
    }
  }
  return sched;
}

}  // namespace qts
