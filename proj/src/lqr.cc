#include "kflqr/lqr.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "kflqr/error.h"
#include "kflqr/io.h"

namespace kflqr {
namespace {

Vector Clip(Vector u, const std::optional<Box>& limits) {
  if (limits) u = u.cwiseMax(limits->lo).cwiseMin(limits->hi);
  return u;
}

void CheckWeights(const Matrix& q, const Matrix& r, int d, int m) {
  Require(q.rows() == d && q.cols() == d, "dimension", "Q must be d x d");
  Require(r.rows() == m && r.cols() == m, "dimension", "R must be m x m");
}

}  // namespace

LqrController Synthesize(const LiftedLTIModel& model, const Matrix& q,
                         const Matrix& r, const Vector& equilibrium,
                         const LqrOptions& options) {
  CheckWeights(q, r, model.dim(), model.inputs());
  Require(options.ridge >= 0.0, "validation", "ridge must be non-negative");
  const int n = model.lifted_dim();
  LqrController out(model);
  out.q = q;
  out.r = r;
  out.options = options;
  Matrix q_lift = model.c.transpose() * q * model.c;
  q_lift = 0.5 * (q_lift + q_lift.transpose()).eval();
  q_lift += options.ridge * Matrix::Identity(n, n);
  out.p = linalg::SolveCare(model.a, model.b, q_lift, r, &out.diagnostics);
  out.k = linalg::SolveLinear(r, model.b.transpose() * out.p);
  Require(linalg::IsHurwitz(model.a - model.b * out.k), "care_unsolvable",
          "closed-loop lifted matrix A - BK is not Hurwitz");
  const Vector psi_eq = LiftState(model, equilibrium);
  out.lift_at_equilibrium = psi_eq.norm();
  out.z_ref = options.recenter ? psi_eq : Vector::Zero(n);
  return out;
}

Vector Policy(const LqrController& controller, const Vector& x) {
  return Clip(-controller.k * (LiftState(controller.model, x) - controller.z_ref),
              controller.options.u_limits);
}

LinearController TaylorLqrBaseline(const PlantDef& plant, const Matrix& q,
                                   const Matrix& r) {
  CheckWeights(q, r, plant.dim, plant.inputs);
  const LinearModel lin = TaylorModel(plant);
  LinearController out;
  out.p = linalg::SolveCare(lin.a, lin.b, q, r);
  out.k = linalg::SolveLinear(r, lin.b.transpose() * out.p);
  out.equilibrium = plant.equilibrium;
  return out;
}

Vector Policy(const LinearController& controller, const Vector& x) {
  return Clip(-controller.k * (x - controller.equilibrium),
              controller.u_limits);
}

ClosedLoopResult ClosedLoopSim(const PlantDef& plant, const FeedbackLaw& law,
                               const Vector& x0, double horizon, double dt,
                               const Matrix& q, const Matrix& r,
                               double blowup_factor) {
  Require(horizon > 0.0 && dt > 0.0, "validation",
          "horizon and dt must be positive");
  CheckWeights(q, r, plant.dim, plant.inputs);
  const int steps = static_cast<int>(std::llround(horizon / dt));
  const Box safe = plant.domain.Scaled(blowup_factor);
  const VectorField f = [&plant](const Vector& x, const Vector& u) {
    return plant.Evaluate(x, u);
  };

  ClosedLoopResult res;
  res.time = Vector::LinSpaced(steps + 1, 0.0, steps * dt);
  res.states = Matrix::Constant(plant.dim, steps + 1,
                                std::numeric_limits<double>::quiet_NaN());
  res.inputs = Matrix::Constant(plant.inputs, steps + 1,
                                std::numeric_limits<double>::quiet_NaN());
  const auto running = [&](const Vector& x, const Vector& u, double* cx,
                           double* cu) {
    const Vector e = x - plant.equilibrium;
    *cx = e.dot(q * e);
    *cu = u.dot(r * u);
  };

  Vector x = x0;
  Vector u = law(x);
  double prev_x = 0.0, prev_u = 0.0;
  running(x, u, &prev_x, &prev_u);
  res.states.col(0) = x;
  res.inputs.col(0) = u;
  for (int k = 0; k < steps; ++k) {
    try {
      x = Rk4Step(f, x, u, dt);
    } catch (const Error&) {
      res.stable = false;
      break;
    }
    if (!x.allFinite() || !safe.Contains(x)) {
      res.stable = false;
      break;
    }
    u = law(x);
    if (!u.allFinite()) {
      res.stable = false;
      break;
    }
    double cx, cu;
    running(x, u, &cx, &cu);
    res.j_x += 0.5 * dt * (prev_x + cx);
    res.j_u += 0.5 * dt * (prev_u + cu);
    prev_x = cx;
    prev_u = cu;
    res.states.col(k + 1) = x;
    res.inputs.col(k + 1) = u;
  }
  if (!res.stable) {
    res.j_x = res.j_u = std::numeric_limits<double>::infinity();
  }
  res.j = res.j_x + res.j_u;
  return res;
}

int ControllerCosts::stable_count() const {
  return static_cast<int>(std::count(stable.begin(), stable.end(), true));
}

double PercentReduction(double kf, double baseline) {
  if (kf == 0.0 && baseline == 0.0) return 0.0;
  return 100.0 * (1.0 - kf / baseline);
}

CostStats Summarize(const std::vector<double>& values) {
  CostStats s;
  if (values.empty()) {
    s.mean = s.variance = s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v / n;
  if (values.size() > 1) {
    for (double v : values) s.variance += (v - s.mean) * (v - s.mean);
    s.variance /= n - 1.0;
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[mid]
                                    : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

CostReport Compare(const PlantDef& plant, const FeedbackLaw& kf,
                   const FeedbackLaw& baseline,
                   const std::vector<Vector>& initial_conditions,
                   double horizon, double dt, const Matrix& q,
                   const Matrix& r, double blowup_factor) {
  CostReport report;
  report.initial_conditions = initial_conditions;
  const auto record = [](ControllerCosts& c, const ClosedLoopResult& res) {
    c.j.push_back(res.j);
    c.j_x.push_back(res.j_x);
    c.j_u.push_back(res.j_u);
    c.stable.push_back(res.stable);
  };
  for (const Vector& x0 : initial_conditions) {
    record(report.kf,
           ClosedLoopSim(plant, kf, x0, horizon, dt, q, r, blowup_factor));
    record(report.baseline, ClosedLoopSim(plant, baseline, x0, horizon, dt, q,
                                          r, blowup_factor));
  }

  std::vector<double> kj, kjx, kju, bj, bjx, bju;
  for (size_t i = 0; i < initial_conditions.size(); ++i) {
    if (!report.kf.stable[i] || !report.baseline.stable[i]) continue;
    kj.push_back(report.kf.j[i]);
    kjx.push_back(report.kf.j_x[i]);
    kju.push_back(report.kf.j_u[i]);
    bj.push_back(report.baseline.j[i]);
    bjx.push_back(report.baseline.j_x[i]);
    bju.push_back(report.baseline.j_u[i]);
  }
  report.compared = static_cast<int>(kj.size());
  report.kf_j = Summarize(kj);
  report.kf_j_x = Summarize(kjx);
  report.kf_j_u = Summarize(kju);
  report.baseline_j = Summarize(bj);
  report.baseline_j_x = Summarize(bjx);
  report.baseline_j_u = Summarize(bju);
  report.reduction_mean_j =
      PercentReduction(report.kf_j.mean, report.baseline_j.mean);
  report.reduction_var_j_u =
      PercentReduction(report.kf_j_u.variance, report.baseline_j_u.variance);
  report.reduction_mean_j_u =
      PercentReduction(report.kf_j_u.mean, report.baseline_j_u.mean);
  return report;
}

void WriteCostCsv(const CostReport& report, const std::string& path) {
  std::ofstream out(path);
  Require(out.good(), "io", "cannot write " + path);
  const Eigen::Index d = report.initial_conditions.empty()
                             ? 0
                             : report.initial_conditions.front().size();
  out << "ic,controller";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x0_" << i + 1;
  out << ",J,J_x,J_u,stable\n";
  for (size_t i = 0; i < report.initial_conditions.size(); ++i) {
    for (int which = 0; which < 2; ++which) {
      const ControllerCosts& c = which == 0 ? report.kf : report.baseline;
      out << i << ',' << (which == 0 ? "kf" : "taylor");
      for (Eigen::Index s = 0; s < d; ++s) {
        out << ',' << FormatDouble(report.initial_conditions[i](s));
      }
      out << ',' << FormatDouble(c.j[i]) << ',' << FormatDouble(c.j_x[i])
          << ',' << FormatDouble(c.j_u[i]) << ',' << (c.stable[i] ? 1 : 0)
          << '\n';
    }
  }
}

void WriteCostSummary(const CostReport& report, const std::string& path,
                      const std::string& config_hash) {
  std::ofstream out(path);
  Require(out.good(), "io", "cannot write " + path);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "# compared=" << report.compared
      << " kf_stable=" << report.kf.stable_count()
      << " taylor_stable=" << report.baseline.stable_count()
      << " total=" << report.initial_conditions.size() << '\n';
  out << "metric,kf,taylor,reduction_percent\n";
  const auto row = [&](const char* name, double kf, double base) {
    out << name << ',' << FormatDouble(kf) << ',' << FormatDouble(base) << ','
        << FormatDouble(PercentReduction(kf, base)) << '\n';
  };
  row("mean_J", report.kf_j.mean, report.baseline_j.mean);
  row("var_J_u", report.kf_j_u.variance, report.baseline_j_u.variance);
  row("mean_J_u", report.kf_j_u.mean, report.baseline_j_u.mean);
  row("median_J", report.kf_j.median, report.baseline_j.median);
  row("var_J", report.kf_j.variance, report.baseline_j.variance);
  row("mean_J_x", report.kf_j_x.mean, report.baseline_j_x.mean);
  row("median_J_u", report.kf_j_u.median, report.baseline_j_u.median);
}

void SaveController(const LqrController& controller, const std::string& path) {
  ArrayFile file;
  file.SetScalar("lifted_dim", std::to_string(controller.k.cols()));
  file.SetScalar("inputs", std::to_string(controller.k.rows()));
  file.SetScalar("ridge", FormatDouble(controller.options.ridge));
  file.SetScalar("recenter", controller.options.recenter ? "1" : "0");
  file.SetScalar("lift_at_equilibrium",
                 FormatDouble(controller.lift_at_equilibrium));
  file.SetScalar("care_residual", FormatDouble(controller.diagnostics.residual));
  file.SetArray("K", controller.k);
  file.SetArray("P", controller.p);
  file.SetArray("Q", controller.q);
  file.SetArray("R", controller.r);
  file.SetArray("z_ref", controller.z_ref);
  if (controller.options.u_limits) {
    file.SetArray("u_lo", controller.options.u_limits->lo);
    file.SetArray("u_hi", controller.options.u_limits->hi);
  }
  file.Write(path, "kflqr-controller", 1);
}

LqrController LoadController(const std::string& path,
                             const LiftedLTIModel& model) {
  const ArrayFile file = ArrayFile::Read(path, "kflqr-controller", 1);
  LqrController c(model);
  c.k = file.Array("K");
  c.p = file.Array("P");
  c.q = file.Array("Q");
  c.r = file.Array("R");
  c.z_ref = file.Array("z_ref");
  Require(c.k.cols() == model.lifted_dim() && c.k.rows() == model.inputs() &&
              c.z_ref.size() == model.lifted_dim(),
          "dimension", "controller in " + path + " does not fit the model");
  c.options.ridge = std::stod(file.Scalar("ridge"));
  c.options.recenter = file.Scalar("recenter") == "1";
  c.lift_at_equilibrium = std::stod(file.Scalar("lift_at_equilibrium"));
  c.diagnostics.residual = std::stod(file.Scalar("care_residual"));
  if (file.HasArray("u_lo")) {
    c.options.u_limits = Box{file.Array("u_lo"), file.Array("u_hi")};
  }
  return c;
}

}  // namespace kflqr
