#include "kflqr/plant.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "kflqr/error.h"
#include "kflqr/io.h"

namespace kflqr {

Box Box::Scaled(double factor) const {
  const Vector center = 0.5 * (lo + hi);
  const Vector half = 0.5 * (hi - lo) * factor;
  return {center - half, center + half};
}

Vector Example1Field(const Vector& x) {
  Require(x.size() == 2, "dimension", "example1 state must have length 2");
  Vector out(2);
  out << x(1), -x(0) - x(1) - x(1) * std::abs(x(1));
  return out;
}

Vector Example2Field(const Vector& x) {
  Require(x.size() == 2, "dimension", "example2 state must have length 2");
  const double damping = 5.0 * (x(1) * x(1) * x(1) + x(1) * std::abs(x(1)));
  const double position_damping =
      10.0 * x(1) * std::sin(5.0 * x(0)) * std::cos(2.0 * x(0));
  Vector out(2);
  out << x(1), -5.0 * x(0) - 0.3 * x(1) - damping - position_damping;
  return out;
}

namespace {

Box SquareBox(double half_width) {
  return {Vector::Constant(2, -half_width), Vector::Constant(2, half_width)};
}

}  // namespace

PlantDef Example1Plant() {
  PlantDef p;
  p.id = "example1";
  p.dim = 2;
  p.inputs = 1;
  p.autonomous = Example1Field;
  p.b_underline = (Matrix(2, 1) << 0.0, 1.0).finished();
  p.domain = SquareBox(2.5);
  p.equilibrium = Vector::Zero(2);
  // ∂(x2|x2|)/∂x2 = 2|x2| vanishes at the origin.
  p.equilibrium_jacobian = (Matrix(2, 2) << 0.0, 1.0, -1.0, -1.0).finished();
  return p;
}

PlantDef Example2Plant() {
  PlantDef p;
  p.id = "example2";
  p.dim = 2;
  p.inputs = 1;
  p.autonomous = Example2Field;
  p.b_underline = (Matrix(2, 1) << 0.0, 1.0).finished();
  p.domain = SquareBox(1.0);
  p.equilibrium = Vector::Zero(2);
  // Both damping terms are quadratic or higher at the origin.
  p.equilibrium_jacobian = (Matrix(2, 2) << 0.0, 1.0, -5.0, -0.3).finished();
  return p;
}

PlantDef LinearPlant(std::string id, const Matrix& a, const Matrix& b,
                     const Box& domain) {
  linalg::RequireSquare(a, "A");
  Require(b.rows() == a.rows(), "dimension", "B must have as many rows as A");
  PlantDef p;
  p.id = std::move(id);
  p.dim = static_cast<int>(a.rows());
  p.inputs = static_cast<int>(b.cols());
  p.autonomous = [a](const Vector& x) -> Vector { return a * x; };
  p.b_underline = b;
  p.domain = domain;
  p.equilibrium = Vector::Zero(p.dim);
  p.equilibrium_jacobian = a;
  return p;
}

PlantDef PlantById(const std::string& id) {
  if (id == "example1") return Example1Plant();
  if (id == "example2") return Example2Plant();
  throw Error("config", "unknown plant '" + id + "'");
}

Vector Rk4Step(const VectorField& f, const Vector& x, const Vector& u,
               double dt) {
  Require(dt > 0.0, "validation", "integration step must be positive");
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  const Vector k4 = f(x + dt * k3, u);
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw Error("integration", "state became non-finite");
  return next;
}

InputSignal Aprbs(const AprbsSpec& spec, int inputs, double duration, double dt,
                  std::uint64_t seed) {
  Require(dt > 0.0, "config", "APRBS sample period must be positive");
  Require(spec.amp_lo <= spec.amp_hi, "config",
          "APRBS amplitude range is empty");
  Require(spec.hold_lo > 0.0 && spec.hold_lo <= spec.hold_hi, "config",
          "APRBS hold range must satisfy 0 < lo <= hi");
  Require(dt <= spec.hold_lo * (1.0 + 1e-12), "config",
          "APRBS sample period exceeds the minimum hold time");
  const int samples = static_cast<int>(std::lround(duration / dt));
  InputSignal signal{dt, Matrix::Zero(inputs, std::max(samples, 0))};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(spec.amp_lo, spec.amp_hi);
  std::uniform_real_distribution<double> hold(spec.hold_lo, spec.hold_hi);
  for (int channel = 0; channel < inputs; ++channel) {
    int k = 0;
    while (k < samples) {
      const double level = spec.amp_lo == spec.amp_hi ? spec.amp_lo : amp(rng);
      const double h = spec.hold_lo == spec.hold_hi ? spec.hold_lo : hold(rng);
      const int steps = std::max(1, static_cast<int>(std::ceil(h / dt - 1e-9)));
      for (int j = 0; j < steps && k < samples; ++j, ++k) {
        signal.values(channel, k) = level;
      }
    }
  }
  return signal;
}

Matrix Simulate(const PlantDef& plant, const Vector& x0,
                const InputSignal& inputs) {
  const VectorField f = [&plant](const Vector& x, const Vector& u) {
    return plant.Evaluate(x, u);
  };
  Matrix states(plant.dim, inputs.length() + 1);
  states.col(0) = x0;
  for (int k = 0; k < inputs.length(); ++k) {
    states.col(k + 1) =
        Rk4Step(f, states.col(k), inputs.values.col(k), inputs.dt);
  }
  return states;
}

std::vector<Vector> EdgeInitialConditions(const Box& box, int count) {
  Require(box.lo.size() == 2, "dimension",
          "edge initial conditions are defined for 2-D boxes");
  Require(count >= 1, "validation", "need at least one initial condition");
  const double w = box.hi(0) - box.lo(0);
  const double h = box.hi(1) - box.lo(1);
  const double perimeter = 2.0 * (w + h);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    double s = perimeter * k / count;
    Vector p(2);
    if (s < w) {
      p << box.lo(0) + s, box.lo(1);
    } else if ((s -= w) < h) {
      p << box.hi(0), box.lo(1) + s;
    } else if ((s -= h) < w) {
      p << box.hi(0) - s, box.hi(1);
    } else {
      s -= w;
      p << box.lo(0), box.hi(1) - s;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<Vector> GridInitialConditions(const Box& box, int per_axis) {
  Require(box.lo.size() == 2, "dimension",
          "grid initial conditions are defined for 2-D boxes");
  Require(per_axis >= 2, "validation", "grid needs at least 2 points per axis");
  std::vector<Vector> out;
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < per_axis; ++j) {
      Vector p(2);
      p << box.lo(0) + (box.hi(0) - box.lo(0)) * i / (per_axis - 1),
          box.lo(1) + (box.hi(1) - box.lo(1)) * j / (per_axis - 1);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Vector> RandomInitialConditions(const Box& box, int count,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    Vector p(box.lo.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) = box.lo(i) + (box.hi(i) - box.lo(i)) * unit(rng);
    }
    out.push_back(p);
  }
  return out;
}

std::vector<Vector> RandomPerimeterInitialConditions(const Box& box, int count,
                                                     std::uint64_t seed) {
  Require(box.lo.size() == 2, "dimension",
          "perimeter sampling is defined for 2-D boxes");
  const double w = box.hi(0) - box.lo(0);
  const double h = box.hi(1) - box.lo(1);
  const double perimeter = 2.0 * (w + h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    double s = perimeter * unit(rng);
    Vector p(2);
    if (s < w) {
      p << box.lo(0) + s, box.lo(1);
    } else if ((s -= w) < h) {
      p << box.hi(0), box.lo(1) + s;
    } else if ((s -= h) < w) {
      p << box.hi(0) - s, box.hi(1);
    } else {
      s -= w;
      p << box.lo(0), box.hi(1) - s;
    }
    out.push_back(p);
  }
  return out;
}

Dataset GenerateDataset(const PlantDef& plant,
                        const std::vector<Vector>& initial_conditions,
                        const GenerationSpec& spec) {
  Require(spec.dt > 0.0, "config", "dt must be positive");
  Require(spec.horizon > 0.0, "config", "horizon must be positive");
  const int samples = static_cast<int>(std::lround(spec.horizon / spec.dt));
  Require(samples >= 1, "config", "horizon shorter than one sample");
  const Box safety = plant.domain.Scaled(spec.safety_factor);
  const VectorField f = [&plant](const Vector& x, const Vector& u) {
    return plant.Evaluate(x, u);
  };

  std::vector<Vector> xs, us, xdots;
  Dataset data;
  for (size_t traj = 0; traj < initial_conditions.size(); ++traj) {
    const Vector& x0 = initial_conditions[traj];
    Require(x0.size() == plant.dim, "dimension",
            "initial condition has the wrong length");
    Require(plant.domain.Contains(x0), "validation",
            "initial condition outside the plant domain");
    InputSignal input{spec.dt, Matrix::Zero(plant.inputs, samples)};
    if (spec.forced) {
      input = Aprbs(spec.aprbs, plant.inputs, spec.horizon, spec.dt,
                    spec.seed + traj);
    }
    // Simulate one step past the horizon so every record has a successor.
    Matrix states(plant.dim, samples + 1);
    states.col(0) = x0;
    int valid = samples + 1;
    for (int k = 0; k < samples; ++k) {
      Vector next;
      try {
        next = Rk4Step(f, states.col(k), input.values.col(k), spec.dt);
      } catch (const Error&) {
        valid = k + 1;
        break;
      }
      if (!safety.Contains(next)) {
        valid = k + 1;
        break;
      }
      states.col(k + 1) = next;
    }
    const bool truncated = valid < samples + 1;
    if (truncated) ++data.meta.truncated;
    // Records k < valid; finite differences need at least two states.
    const int records = truncated ? valid - 1 : samples;
    for (int k = 0; k < records; ++k) {
      const Vector x = states.col(k);
      const Vector u = input.values.col(k);
      Vector xdot;
      if (spec.mode == DerivativeMode::kExact) {
        xdot = plant.Evaluate(x, u);
      } else if (k == 0) {
        xdot = (states.col(1) - states.col(0)) / spec.dt;
      } else if (k == records - 1) {
        xdot = (states.col(k) - states.col(k - 1)) / spec.dt;
      } else {
        xdot = (states.col(k + 1) - states.col(k - 1)) / (2.0 * spec.dt);
      }
      xs.push_back(x);
      us.push_back(u);
      xdots.push_back(xdot);
    }
  }
  const int n = static_cast<int>(xs.size());
  data.x.resize(plant.dim, n);
  data.u.resize(plant.inputs, n);
  data.xdot.resize(plant.dim, n);
  for (int i = 0; i < n; ++i) {
    data.x.col(i) = xs[i];
    data.u.col(i) = us[i];
    data.xdot.col(i) = xdots[i];
  }
  data.meta.plant_id = plant.id;
  data.meta.dt = spec.dt;
  data.meta.seed = spec.seed;
  data.meta.mode =
      spec.mode == DerivativeMode::kExact ? "exact" : "finite-difference";
  data.meta.forcing = spec.forced ? "forced" : "unforced";
  data.meta.trajectories = static_cast<int>(initial_conditions.size());
  return data;
}

void WriteDataset(const Dataset& data, const std::string& csv_path) {
  std::ofstream out(csv_path);
  Require(out.good(), "io", "cannot open " + csv_path + " for writing");
  const int d = data.state_dim();
  const int m = data.input_dim();
  for (int i = 0; i < d; ++i) out << "x" << i + 1 << ",";
  for (int i = 0; i < m; ++i) out << "u" << i + 1 << ",";
  for (int i = 0; i < d; ++i) out << "xdot" << i + 1 << (i + 1 < d ? "," : "\n");
  for (int r = 0; r < data.size(); ++r) {
    for (int i = 0; i < d; ++i) out << FormatDouble(data.x(i, r)) << ",";
    for (int i = 0; i < m; ++i) out << FormatDouble(data.u(i, r)) << ",";
    for (int i = 0; i < d; ++i) {
      out << FormatDouble(data.xdot(i, r)) << (i + 1 < d ? "," : "\n");
    }
  }
  std::ofstream meta(csv_path + ".meta");
  Require(meta.good(), "io", "cannot open metadata sidecar for " + csv_path);
  meta << "plant=" << data.meta.plant_id << "\n"
       << "dt=" << FormatDouble(data.meta.dt) << "\n"
       << "seed=" << data.meta.seed << "\n"
       << "mode=" << data.meta.mode << "\n"
       << "forcing=" << data.meta.forcing << "\n"
       << "ic_spec=" << data.meta.ic_spec << "\n"
       << "config_hash=" << data.meta.config_hash << "\n"
       << "trajectories=" << data.meta.trajectories << "\n"
       << "truncated=" << data.meta.truncated << "\n"
       << "records=" << data.size() << "\n";
}

Dataset ReadDataset(const std::string& csv_path) {
  std::ifstream in(csv_path);
  Require(in.good(), "io", "cannot open dataset " + csv_path);
  std::string header;
  std::getline(in, header);
  int d = 0, m = 0, dd = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("xdot", 0) == 0) {
        ++dd;
      } else if (col.rfind("x", 0) == 0) {
        ++d;
      } else if (col.rfind("u", 0) == 0) {
        ++m;
      } else {
        throw Error("io", "unexpected dataset column '" + col + "'");
      }
    }
  }
  Require(d > 0 && d == dd, "io", "dataset header is malformed: " + header);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    Require(static_cast<int>(row.size()) == 2 * d + m, "io",
            "dataset row has the wrong number of fields");
    rows.push_back(std::move(row));
  }
  Dataset data;
  const int n = static_cast<int>(rows.size());
  data.x.resize(d, n);
  data.u.resize(m, n);
  data.xdot.resize(d, n);
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < d; ++i) data.x(i, r) = rows[r][i];
    for (int i = 0; i < m; ++i) data.u(i, r) = rows[r][d + i];
    for (int i = 0; i < d; ++i) data.xdot(i, r) = rows[r][d + m + i];
  }
  Require(data.x.allFinite() && data.u.allFinite() && data.xdot.allFinite(),
          "io", "dataset contains non-finite values");

  std::ifstream meta(csv_path + ".meta");
  if (meta.good()) {
    std::map<std::string, std::string> kv;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    data.meta.plant_id = kv["plant"];
    if (!kv["dt"].empty()) data.meta.dt = std::stod(kv["dt"]);
    if (!kv["seed"].empty()) data.meta.seed = std::stoull(kv["seed"]);
    data.meta.mode = kv["mode"];
    data.meta.forcing = kv["forcing"];
    data.meta.ic_spec = kv["ic_spec"];
    data.meta.config_hash = kv["config_hash"];
    if (!kv["trajectories"].empty()) data.meta.trajectories = std::stoi(kv["trajectories"]);
    if (!kv["truncated"].empty()) data.meta.truncated = std::stoi(kv["truncated"]);
  }
  return data;
}

Dataset Concatenate(const Dataset& a, const Dataset& b) {
  Require(a.state_dim() == b.state_dim() && a.input_dim() == b.input_dim(),
          "dimension", "datasets have different dimensions");
  Dataset out;
  out.meta = a.meta;
  out.x.resize(a.state_dim(), a.size() + b.size());
  out.u.resize(a.input_dim(), a.size() + b.size());
  out.xdot.resize(a.state_dim(), a.size() + b.size());
  out.x << a.x, b.x;
  out.u << a.u, b.u;
  out.xdot << a.xdot, b.xdot;
  return out;
}

}  // namespace kflqr
