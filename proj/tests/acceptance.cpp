// End-to-end acceptance run: one PASS/FAIL line per criterion, tolerances
// pinned below. Exit status is nonzero when any criterion fails.

#include "deeponet/diffkit.hpp"
#include "deeponet/harness/study.hpp"
#include "deeponet/networks/mlp.hpp"
#include "deeponet/util/alloc.hpp"
#include "test_support.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace {

using namespace deeponet;
using namespace deeponet::harness;
using diff::Matrix;
using diff::Vector;

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * std::numbers::pi;

// ---------------------------------------------------------------- tolerances

constexpr int kRandomNets = 20;
constexpr Index kMaxWidth = 64;
constexpr int kMaxDepth = 7;
constexpr double kParamGradTol = 1e-6;
constexpr double kCoordTol[4] = {0.0, 1e-5, 1e-4, 1e-3};
constexpr double kC1Seconds = 60;

constexpr double kAdvDiffExactTol = 1e-12;
constexpr double kBurgersMeanTol = 1e-10;
constexpr double kKdvMeanTol = 1e-8;
constexpr double kOrderRatio = 16.0, kOrderRatioTol = 4.0;
constexpr double kC2Seconds = 120;

constexpr double kGramTol = 1e-10;
constexpr double kReconstructionTol = 1e-8;
constexpr double kSigmaInvarianceTol = 1e-10;
constexpr double kC3Seconds = 60;

constexpr int kLegendreDegree = 120;
constexpr double kPolynomialTol = 1e-12;
constexpr int kTrigDegree = 60;
constexpr double kTrigTol = 1e-8;

constexpr double kOdeTol = 1e-8;
constexpr double kC5Seconds = 10;

constexpr double kDeskErrorTol = 0.05;
constexpr double kC6Seconds = 3600;

constexpr double kCoefficientFloor = 1e-10;
constexpr double kSigmaDecades = 10.0;

constexpr double kCutoff = 1e-13;
constexpr double kTrendSpearman = -0.8;   // rank correlation of (k, median error)
constexpr double kExcursionFactor = 10.0;  // no point above 10x the best error so far
constexpr double kSaturationFactor = 10.0; // error at the cutoff count within 10x of the curve minimum

constexpr double kC9Seconds = 3 * 3600;

// ------------------------------------------------------------------ plumbing

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------- criterion 1

struct RandomMlp {
  nn::MlpSpec spec;
  diff::ParamVector params;
  nn::MlpSlots slots;

  std::vector<std::pair<Matrix, Vector>> layers(const Vector& theta) const {
    diff::ParamVector p(params.layout(), theta);
    std::vector<std::pair<Matrix, Vector>> out;
    for (std::size_t k = 0; k < slots.weight.size(); ++k) {
      out.emplace_back(Matrix(p.slot(slots.weight[k])), Vector(p.slot(slots.bias[k])));
    }
    return out;
  }
};

// Glorot-uniform weights, small random biases.
RandomMlp random_mlp(Rng& rng) {
  RandomMlp n;
  const int depth = static_cast<int>(rng.index(kMaxDepth - 1)) + 2;  // 2..7 weight layers
  n.spec.widths.push_back(2);
  for (int k = 1; k < depth; ++k) n.spec.widths.push_back(4 + static_cast<Index>(rng.index(kMaxWidth - 3)));
  n.spec.widths.push_back(1);
  diff::ParamLayout layout;
  n.slots = nn::append_layout(layout, n.spec, "net");
  n.params = diff::ParamVector(layout);
  for (std::size_t k = 0; k < n.slots.weight.size(); ++k) {
    auto w = n.params.slot(n.slots.weight[k]);
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-a, a);
    auto b = n.params.slot(n.slots.bias[k]);
    for (Index r = 0; r < b.rows(); ++r) b(r, 0) = rng.uniform(-0.1, 0.1);
  }
  return n;
}

Outcome criterion1() {
  Stopwatch sw;
  Rng rng(2024);
  double worst_param = 0.0, worst_coord[4] = {0, 0, 0, 0};
  Index max_w = 0;
  int max_d = 0;
  for (int net = 0; net < kRandomNets; ++net) {
    const RandomMlp n = random_mlp(rng);
    for (std::size_t k = 1; k + 1 < n.spec.widths.size(); ++k) max_w = std::max(max_w, n.spec.widths[k]);
    max_d = std::max(max_d, n.spec.num_layers());
    const Matrix inputs = testing_support::random_matrix(rng, 2, 8, 2.0);
    const Matrix targets = testing_support::random_matrix(rng, 1, 8);
    auto loss = [&](const Vector& th) {
      const Matrix e = testing_support::reference_mlp(n.layers(th), inputs) - targets;
      return e.squaredNorm() / static_cast<double>(e.size());
    };
    diff::Tape tape;
    const auto w = nn::bind_weights(tape, n.params, n.spec, n.slots);
    const diff::Var err = diff::sub(nn::mlp_forward(w, tape.constant(inputs)), tape.constant(targets));
    const Vector g = diff::param_gradient(diff::mean(diff::mul(err, err)), n.params).values();

    // Central differences on 48 random coordinates and along 4 random directions.
    const Vector theta = n.params.values();
    const double h = 1e-5;
    std::vector<double> ad, fd;
    for (int s = 0; s < 48; ++s) {
      const Index i = static_cast<Index>(rng.index(static_cast<std::size_t>(theta.size())));
      Vector p = theta, m = theta;
      p(i) += h;
      m(i) -= h;
      ad.push_back(g(i));
      fd.push_back((loss(p) - loss(m)) / (2 * h));
    }
    for (int s = 0; s < 4; ++s) {
      Vector v(theta.size());
      for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1.0, 1.0);
      v /= v.norm();
      ad.push_back(g.dot(v));
      fd.push_back((loss(theta + h * v) - loss(theta - h * v)) / (2 * h));
    }
    double scale = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
      scale = std::max(scale, std::abs(fd[i]));
      gap = std::max(gap, std::abs(ad[i] - fd[i]));
    }
    worst_param = std::max(worst_param, gap / scale);

    // Coordinate derivatives along x, t and a diagonal.
    const std::vector<std::pair<double, double>> dirs = {{1.0, 0.0}, {0.0, 1.0}, {0.6, -0.8}};
    for (int pt = 0; pt < 2; ++pt) {
      const double x0 = rng.uniform(0.0, kTwoPi), t0 = rng.uniform(0.0, 1.0);
      for (auto [dx, dt] : dirs) {
        diff::Tape tp;
        const auto wt = nn::bind_weights(tp, n.params, n.spec, n.slots);
        Matrix base(2, 1), dir(2, 1);
        base << x0, t0;
        dir << dx, dt;
        const diff::TaylorValue c =
            diff::taylor_eval(tp, [&](const diff::TaylorValue& y) { return nn::mlp_forward(wt, y); }, base, dir, 3);
        testing_support::CentralDifferences cd{[&](double e) {
                                                 Matrix in(2, 1);
                                                 in << x0 + e * dx, t0 + e * dt;
                                                 return testing_support::reference_mlp(n.layers(theta), in)(0, 0);
                                               },
                                               1e-3};
        const double fdv[4] = {0.0, cd.d1(0.0), cd.d2(0.0), cd.d3(0.0)};
        const double value_scale = std::max(1.0, std::abs(c[0].value()(0, 0)));
        for (int o = 1; o <= 3; ++o) {
          const double denom = std::max(std::abs(fdv[o]), 1e-2 * value_scale);
          worst_coord[o] = std::max(worst_coord[o], std::abs(c.derivative(o)(0, 0) - fdv[o]) / denom);
        }
      }
    }
  }
  const double secs = sw.seconds();
  const bool pass = worst_param < kParamGradTol && worst_coord[1] < kCoordTol[1] && worst_coord[2] < kCoordTol[2] &&
                    worst_coord[3] < kCoordTol[3] && secs < kC1Seconds && max_w <= kMaxWidth && max_d <= kMaxDepth;
  return {pass, std::to_string(kRandomNets) + " nets (width <= " + std::to_string(max_w) + ", depth <= " +
                    std::to_string(max_d) + "): param grad rel " + fmt("%.1e", worst_param) + ", d1/d2/d3 rel " +
                    fmt("%.1e", worst_coord[1]) + "/" + fmt("%.1e", worst_coord[2]) + "/" + fmt("%.1e", worst_coord[3]) +
                    ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- criterion 2

double final_gap(const solvers::SolutionField& a, const solvers::SolutionField& b) {
  return (a.values.bottomRows(1) - b.values.bottomRows(1)).norm();
}

Outcome criterion2() {
  Stopwatch sw;
  const Vector x = fourier::uniform_grid(256, kTwoPi);
  const auto ad = solvers::solve_advdiff(x.array().sin().matrix(), 4.0, 0.01, kTwoPi, {1.0, 2000, 2000});
  const Vector exact = (std::exp(-0.01) * (x.array() - 4.0).sin()).matrix();
  const double ad_err = (ad.values.bottomRows(1).transpose() - exact).norm() / exact.norm();

  // Mean drift over a sampled input of each family's kind.
  const Vector ub = (x.array().sin() + 0.5 * (2 * x.array()).cos() + 0.2 + 0.3 * (3 * x.array()).sin()).matrix();
  const auto bf = solvers::solve_burgers(ub, 0.01, kTwoPi, {1.0, 2000, 20});
  const Vector uk = (0.8 * (-0.6 * x.array().sin() + 0.9 * x.array().cos()) + 0.1).matrix();
  const auto kf = solvers::solve_kdv(uk, 0.1, kTwoPi, {1.0, 10000, 100});
  double b_drift = 0.0, k_drift = 0.0;
  for (Index n = 0; n < bf.time_points(); ++n) {
    b_drift = std::max(b_drift, std::abs(solvers::periodic_integral(bf.values.row(n).transpose(), kTwoPi) -
                                         solvers::periodic_integral(ub, kTwoPi)));
  }
  for (Index n = 0; n < kf.time_points(); ++n) {
    k_drift = std::max(k_drift, std::abs(solvers::periodic_integral(kf.values.row(n).transpose(), kTwoPi) -
                                         solvers::periodic_integral(uk, kTwoPi)));
  }

  const Vector xs = fourier::uniform_grid(128, kTwoPi);
  const Vector b0 = xs.array().sin().matrix();
  const double b_ratio = final_gap(solvers::solve_burgers(b0, 0.1, kTwoPi, {1.0, 50, 50}),
                                   solvers::solve_burgers(b0, 0.1, kTwoPi, {1.0, 100, 100})) /
                         final_gap(solvers::solve_burgers(b0, 0.1, kTwoPi, {1.0, 100, 100}),
                                   solvers::solve_burgers(b0, 0.1, kTwoPi, {1.0, 200, 200}));
  const Vector k0 = (-0.5 * xs.array().sin() + 0.7 * xs.array().cos()).matrix();
  const double k_ratio = final_gap(solvers::solve_kdv(k0, 0.1, kTwoPi, {1.0, 200, 200}),
                                   solvers::solve_kdv(k0, 0.1, kTwoPi, {1.0, 400, 400})) /
                         final_gap(solvers::solve_kdv(k0, 0.1, kTwoPi, {1.0, 400, 400}),
                                   solvers::solve_kdv(k0, 0.1, kTwoPi, {1.0, 800, 800}));
  const double secs = sw.seconds();
  const bool pass = ad_err < kAdvDiffExactTol && b_drift < kBurgersMeanTol && k_drift < kKdvMeanTol &&
                    std::abs(b_ratio - kOrderRatio) <= kOrderRatioTol && std::abs(k_ratio - kOrderRatio) <= kOrderRatioTol &&
                    secs < kC2Seconds;
  return {pass, "advdiff rel " + fmt("%.1e", ad_err) + ", mean drift Burgers " + fmt("%.1e", b_drift) + " KdV " +
                    fmt("%.1e", k_drift) + ", step-halving ratios " + fmt("%.2f", b_ratio) + "/" + fmt("%.2f", k_ratio) +
                    ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3() {
  Stopwatch sw;
  const auto q = basis::QuadratureRule::gauss_legendre(512);
  std::vector<std::pair<std::string, nn::DeepOnetModel>> trunks;
  trunks.emplace_back("plain 32x4", nn::init_model(nn::MlpSpec::uniform(16, 32, 3), nn::MlpSpec::uniform(2, 32, 4), 11));
  trunks.emplace_back("modified 24x5",
                      nn::init_model(nn::MlpSpec::uniform(16, 24, 3, nn::Variant::modified),
                                     nn::MlpSpec::uniform(2, 24, 5, nn::Variant::modified), 12));
  {
    // A briefly trained trunk.
    ExperimentConfig c;
    c.pde = pde::PdeSpec::advection_diffusion(1.0, 0.05);
    c.inputs = sampling::GrfSpec::warped_se(0.5, 16);
    const auto in = sampling::sample_inputs(c.inputs, 5, 8, 64);
    const auto set = training::make_physics_set(in.sensors, c.inputs.sensor_grid(), c.pde, 16,
                                                pde::default_boundary_orders(c.pde), 6);
    training::TrainOptions opt;
    opt.steps = 200;
    opt.batch = 96;
    opt.scheme = training::Scheme::fixed;
    const auto r = training::train_physics(nn::init_model(nn::MlpSpec::uniform(16, 16, 3), nn::MlpSpec::uniform(2, 16, 4), 3),
                                           set, c.pde, opt);
    trunks.emplace_back("trained 16x4", r.model);
  }
  double gram_err = 0.0, recon_err = 0.0, sigma_err = 0.0;
  Rng rng(77);
  for (const auto& [name, model] : trunks) {
    for (double tstar : {0.0, 1.0}) {
      const basis::FrozenTrunk ft = basis::freeze_trunk(model, tstar, q);
      const basis::BasisSet b = basis::extract_basis(ft, q);
      gram_err = std::max(gram_err, (basis::gram(b) - Matrix::Identity(b.size(), b.size())).cwiseAbs().maxCoeff());
      recon_err = std::max(recon_err, basis::reconstruction_residuals(b, ft.tau).maxCoeff());
      const Index p = ft.tau.cols();
      const Matrix r = Eigen::HouseholderQR<Matrix>(testing_support::random_matrix(rng, p, p)).householderQ();
      const basis::BasisSet br = basis::extract_basis({ft.tau * r, tstar}, q);
      sigma_err = std::max(sigma_err, (b.sigma - br.sigma).cwiseAbs().maxCoeff() / b.sigma(0));
    }
  }
  const double secs = sw.seconds();
  const bool pass = gram_err < kGramTol && recon_err < kReconstructionTol && sigma_err < kSigmaInvarianceTol && secs < kC3Seconds;
  return {pass, std::to_string(trunks.size()) + " trunks x t* in {0,1}: Gram " + fmt("%.1e", gram_err) + ", reconstruction " +
                    fmt("%.1e", recon_err) + ", sigma under rotation " + fmt("%.1e", sigma_err) + ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- criterion 4

// Orthonormal Legendre polynomial on [0, L] from the standard library.
double std_legendre(unsigned n, double x, double l) {
  return std::sqrt((2.0 * n + 1.0) / l) * std::legendre(n, 2.0 * x / l - 1.0);
}

Outcome criterion4() {
  const auto q = basis::QuadratureRule::gauss_legendre(512);
  Rng rng(4);
  Vector c(kLegendreDegree + 1);
  for (Index j = 0; j <= kLegendreDegree; ++j) c(j) = rng.uniform(-1.0, 1.0);
  auto poly = [&](const Vector& x) {
    Vector v = Vector::Zero(x.size());
    for (Index i = 0; i < x.size(); ++i)
      for (Index j = 0; j <= kLegendreDegree; ++j) v(i) += c(j) * std_legendre(static_cast<unsigned>(j), x(i), kTwoPi);
    return v;
  };
  const Vector xs = Vector::LinSpaced(301, 0.0, kTwoPi);
  const basis::BasisSet pb = basis::legendre_project(basis::basis_from_nodes(q, poly(q.nodes)), kLegendreDegree);
  const Vector pv = poly(xs);
  const double poly_err = (pb.evaluate(xs).col(0) - pv).cwiseAbs().maxCoeff() / pv.cwiseAbs().maxCoeff();
  const double coef_err = (pb.legendre.row(0).transpose() - c).cwiseAbs().maxCoeff();

  // Trig functions: error at M~ = 60 and the decay with degree.
  struct Fn {
    const char* name;
    double (*f)(double);
  };
  const std::vector<Fn> fns = {{"sin x", [](double x) { return std::sin(x); }},
                               {"cos 2x", [](double x) { return std::cos(2 * x); }},
                               {"sin 3x", [](double x) { return std::sin(3 * x); }},
                               {"e^sin x", [](double x) { return std::exp(std::sin(x)); }}};
  double trig_err = 0.0;
  bool spectral = true;
  for (const auto& fn : fns) {
    const Vector nodes = q.nodes.unaryExpr(fn.f), exact = xs.unaryExpr(fn.f);
    auto err_at = [&](int deg) {
      const basis::BasisSet b = basis::legendre_project(basis::basis_from_nodes(q, nodes), deg);
      return (b.evaluate(xs).col(0) - exact).cwiseAbs().maxCoeff();
    };
    trig_err = std::max(trig_err, err_at(kTrigDegree));
    // Geometric decay: every 8 extra degrees buys at least a factor 10 until the floor.
    double prev = err_at(12);
    for (int deg = 20; deg <= kTrigDegree; deg += 8) {
      const double e = err_at(deg);
      if (prev > 1e-11 && !(e < prev / 10.0)) spectral = false;
      prev = e;
    }
  }
  const bool pass = poly_err < kPolynomialTol && coef_err < kPolynomialTol && trig_err < kTrigTol && spectral;
  return {pass, "degree-" + std::to_string(kLegendreDegree) + " polynomial rel " + fmt("%.1e", poly_err) + " (coeffs " +
                    fmt("%.1e", coef_err) + "), trig max error at degree " + std::to_string(kTrigDegree) + " " +
                    fmt("%.1e", trig_err) + ", geometric decay " + (spectral ? "yes" : "no")};
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
  Stopwatch sw;
  const auto q = basis::QuadratureRule::gauss_legendre(512);
  Matrix f(q.size(), 2);
  f.col(0) = (q.nodes.array().cos() / std::sqrt(kPi)).matrix();
  f.col(1) = (q.nodes.array().sin() / std::sqrt(kPi)).matrix();
  const basis::BasisSet b = basis::legendre_project(basis::basis_from_nodes(q, f), 120);
  const auto spec = pde::PdeSpec::advection_diffusion(4.0, 0.01);
  Matrix expected(2, 2);
  expected << -0.01, -4.0, 4.0, -0.01;
  double op_err = 0.0, sol_err = 0.0;
  for (auto closure : {spectral::Closure::strong, spectral::Closure::periodic}) {
    const auto s = spectral::build_system(b, spec, closure);
    Matrix l(2, 2);
    for (Index k = 0; k < 2; ++k) l.col(k) = spectral::galerkin_rhs(s, Vector::Unit(2, k));
    op_err = std::max(op_err, (l - expected).cwiseAbs().maxCoeff());
    Vector a0(2);
    a0 << 0.7, -0.3;
    const auto tr = spectral::evolve(s, a0, {1.0, 2000, 2000});
    const double t = 1.0, d = std::exp(-0.01 * t);
    Vector exact(2);
    exact << d * (a0(0) * std::cos(4 * t) - a0(1) * std::sin(4 * t)), d * (a0(0) * std::sin(4 * t) + a0(1) * std::cos(4 * t));
    sol_err = std::max(sol_err, (tr.coeffs.bottomRows(1).transpose() - exact).norm() / exact.norm());
  }
  const double secs = sw.seconds();
  const bool pass = op_err < kOdeTol && sol_err < kOdeTol && secs < kC5Seconds;
  return {pass, "operator entries off by " + fmt("%.1e", op_err) + ", a(1) rel " + fmt("%.1e", sol_err) + ", " +
                    fmt("%.2f", secs) + " s"};
}

// ------------------------------------------------------------- criteria 6-8

struct DeskRun {
  Layout layout;
  ExperimentConfig config;
  double seconds = 0.0;
  std::string error;
};

DeskRun desk_run(const fs::path& root) {
  DeskRun r{Layout{root / "advdiff-desk"}, preset("advdiff-desk"), 0.0, {}};
  fs::remove_all(r.layout.root);
  Stopwatch sw;
  try {
    run_pipeline(r.config, r.layout, true, {false});
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = sw.seconds();
  return r;
}

Outcome criterion6(const DeskRun& r) {
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const json s = read_json(r.layout.eval() / "summary.json", "evaluate");
  const json m = read_json(r.layout.train() / "manifest.json", "train");
  const double mean = s.at("mean").get<double>(), sd = s.at("std").get<double>();
  const double train_s = m.at("timing").at("seconds_total").get<double>();
  const bool pass = mean < kDeskErrorTol && r.seconds <= kC6Seconds && r.config.trunk.width == 64 &&
                    r.config.training.steps == 20000 && s.at("count").get<int>() == 10;
  return {pass, "mean rel L2 " + percent(mean) + " +- " + percent(sd) + " over " + std::to_string(s.at("count").get<int>()) +
                    " samples (width " + std::to_string(r.config.trunk.width) + ", " +
                    std::to_string(r.config.training.steps) + " steps, " + training::scheme_name(r.config.training.scheme) +
                    "), training " + fmt("%.0f", train_s) + " s, pipeline " + fmt("%.0f", r.seconds) + " s"};
}

Outcome criterion7(const DeskRun& r) {
  if (!r.error.empty()) return {false, "no model: " + r.error};
  const Matrix coef = read_matrix(r.layout.basis() / "coefficients.csv", "extract-basis", true);  // k, sigma, coefficient, retained
  double peak = 0.0, smallest = std::numeric_limits<double>::infinity();
  double smax = 0.0, smin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < coef.rows(); ++i) {
    smax = std::max(smax, coef(i, 1));
    if (coef(i, 1) > 0.0) smin = std::min(smin, coef(i, 1));
    if (coef(i, 3) == 0.0) continue;
    peak = std::max(peak, std::abs(coef(i, 2)));
  }
  for (Index i = 0; i < coef.rows(); ++i) {
    if (coef(i, 3) != 0.0) smallest = std::min(smallest, std::abs(coef(i, 2)) / peak);
  }
  const double decades = std::log10(smax / smin);
  const bool pass = smallest < kCoefficientFloor && decades >= kSigmaDecades;
  return {pass, "e^sin x coefficients fall to " + fmt("%.1e", smallest) + " of peak within the retained basis, sigma spans " +
                    fmt("%.1f", decades) + " decades"};
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Outcome criterion8(const DeskRun& r) {
  if (!r.error.empty()) return {false, "no model: " + r.error};
  const json bm = read_json(r.layout.basis() / "manifest.json", "extract-basis");
  const json em = read_json(r.layout.evolve() / "manifest.json", "spectral-evolve");
  const Index p = bm.at("p").get<Index>(), retained = bm.at("retained").get<Index>();
  const Matrix ek = read_matrix(r.layout.evolve() / "error_vs_k.csv", "spectral-evolve", true);
  std::vector<double> ks, errs;
  for (Index i = 0; i < ek.rows(); ++i) {
    ks.push_back(ek(i, 0));
    errs.push_back(ek(i, 1));
  }
  const bool finite = std::all_of(errs.begin(), errs.end(), [](double e) { return std::isfinite(e); });
  const double rho = finite ? spearman(ks, errs) : 1.0;
  double best = errs.front(), excursion = 1.0;
  for (double e : errs) {
    excursion = std::max(excursion, e / best);
    best = std::min(best, e);
  }
  const double at_cutoff = errs.back() / best;
  const bool pass = r.config.basis.cutoff == kCutoff && retained < p && finite && rho <= kTrendSpearman &&
                    excursion <= kExcursionFactor && at_cutoff <= kSaturationFactor && ks.back() == static_cast<double>(retained);
  return {pass, "retained " + std::to_string(retained) + " of p = " + std::to_string(p) + " at cutoff " + fmt("%.0e", kCutoff) +
                    "; median error over " + std::to_string(em.at("ics").get<int>()) + " ICs from " + fmt("%.2e", errs.front()) +
                    " (k = " + fmt("%.0f", ks.front()) + ") to " + fmt("%.2e", errs.back()) + " (k = " + fmt("%.0f", ks.back()) +
                    "), Spearman " + fmt("%.2f", rho) + ", worst rise " + fmt("%.1f", excursion) + "x, end/min " +
                    fmt("%.1f", at_cutoff) + "x, " + em.at("closure").get<std::string>() + " closure"};
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9(const fs::path& root) {
  Stopwatch sw;
  const StudySpec s = burgers_transfer_study(false);
  const fs::path dir = root / s.name;
  fs::remove_all(dir);
  json summary;
  try {
    summary = run_study(s, dir).summary;
  } catch (const std::exception& e) {
    return {false, std::string("study failed: ") + e.what()};
  }
  const double secs = sw.seconds();
  const json& rnd = summary.at("entries").at("random");
  const json& tr = summary.at("entries").at("transfer");
  const double e_r = rnd.at("mean").get<double>(), e_t = tr.at("mean").get<double>();
  const double k_r = rnd.at("mean_retained").get<double>(), k_t = tr.at("mean_retained").get<double>();
  const bool pass = s.seeds.size() >= 3 && e_t <= e_r && k_t > k_r && secs <= kC9Seconds &&
                    rnd.at("pde").get<std::string>() == pde::PdeSpec::burgers(1e-4, 1.0).tag();
  return {pass, "Burgers nu = 1e-4 over " + std::to_string(s.seeds.size()) + " seeds: transfer " + percent(e_t) + " vs random " +
                    percent(e_r) + ", retained " + fmt("%.1f", k_t) + " vs " + fmt("%.1f", k_r) + ", " + fmt("%.0f", secs) + " s"};
}

// --------------------------------------------------------------- criterion 10

Outcome criterion10() {
  Vector diag(2);
  diag << 4.0, 1.0;
  const Vector l1 = training::update_weights(Vector::Ones(2), diag, 1.0).lambda;
  const Vector lh = training::update_weights(Vector::Ones(2), diag, 0.5).lambda;
  const bool exact = l1(0) == 1.0 && l1(1) == 4.0 && lh(0) == 1.0 && lh(1) == 2.0;
  const Vector lc = training::update_weights(Vector::Constant(5, 3.0), Vector::Constant(5, 0.37), 0.5).lambda;
  const bool unit = (lc.array() == 1.0).all();

  // CK diagonal vs the NTK diagonal of a model whose non-final layers are
  // frozen, each NTK entry from its own single-constraint gradient.
  const auto spec = pde::PdeSpec::burgers(0.05);
  const Index m = 8;
  const Vector sx = Vector::LinSpaced(m, 0.0, spec.x_max * (m - 1) / m);
  Matrix u(m, 3);
  for (Index j = 0; j < 3; ++j) u.col(j) = (0.5 * (sx.array() + 0.7 * static_cast<double>(j)).sin()).matrix();
  const auto set = training::make_physics_set(u, sx, spec, 4, pde::default_boundary_orders(spec), 17);
  const auto model = nn::init_model(nn::MlpSpec::uniform(m, 6, 2), nn::MlpSpec::uniform(2, 6, 3), 4);
  const nn::SlotFilter final_only = [&](std::size_t s) { return nn::is_final_layer_slot(model, s); };
  const training::Batch all = training::full_batch(set);
  const training::RoleVectors ck = training::kernel_diag(model, set, all, spec, training::Scheme::ck);
  auto frozen_ntk = [&](const training::Batch& b, int role, std::size_t order) {
    diff::Tape tape;
    const nn::ModelBinding w = nn::bind_model(tape, model, final_only);
    const training::PhysicsTerms t = training::physics_terms(tape, w, set, b, spec);
    const diff::Var& term = role == 0 ? t.ic : role == 1 ? t.bc[order] : t.res;
    return diff::param_gradient(diff::sum(term), model.params).values().squaredNorm();
  };
  double ck_gap = 0.0;
  for (Index q = 0; q < set.pool_size(); ++q) {
    const std::vector<Index> one{q};
    ck_gap = std::max(ck_gap, std::abs(ck.ic(q) - frozen_ntk({one, {}, {}}, 0, 0)) / (1 + ck.ic(q)));
    for (std::size_t j = 0; j < ck.bc.size(); ++j) {
      ck_gap = std::max(ck_gap, std::abs(ck.bc[j](q) - frozen_ntk({{}, one, {}}, 1, j)) / (1 + ck.bc[j](q)));
    }
    ck_gap = std::max(ck_gap, std::abs(ck.res(q) - frozen_ntk({{}, {}, one}, 2, 0)) / (1 + ck.res(q)));
  }
  const bool pass = exact && unit && ck_gap < 1e-12;
  return {pass, "diag (4,1): alpha 1 -> (" + fmt("%g", l1(0)) + "," + fmt("%g", l1(1)) + "), alpha 1/2 -> (" + fmt("%g", lh(0)) +
                    "," + fmt("%g", lh(1)) + "); constant diagonal -> " + (unit ? "ones" : "not ones") +
                    "; CK vs frozen NTK rel " + fmt("%.1e", ck_gap)};
}

// --------------------------------------------------------------- criterion 11

Outcome criterion11(const DeskRun& first, const fs::path& root) {
  if (!first.error.empty()) return {false, "first run failed: " + first.error};
  const Layout again{root / "advdiff-desk-rerun"};
  fs::remove_all(again.root);
  try {
    run_pipeline(first.config, again, true, {false});
  } catch (const std::exception& e) {
    return {false, std::string("rerun failed: ") + e.what()};
  }
  const auto diffs = compare_trees(first.layout.root, again.root);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(again.root)) files += e.is_regular_file() ? 1 : 0;
  std::string detail = std::to_string(files) + " artifacts over 7 stages compared, " + std::to_string(diffs.size()) + " differ";
  for (std::size_t i = 0; i < std::min<std::size_t>(diffs.size(), 3); ++i) detail += (i ? ", " : ": ") + diffs[i];
  return {diffs.empty() && files > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  deeponet::util::keep_heap_warm();
  CLI::App app{"Acceptance checks"};
  std::string out = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--out", out, "scratch directory for pipeline runs");
  app.add_option("--only", only, "run only these criteria (6-8 and 11 share one training run)");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> pick(only.begin(), only.end());
  auto want = [&](int n) { return pick.empty() || pick.contains(n); };
  const fs::path root(out);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int n, const Outcome& o) {
    std::printf("criterion %2d %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };
  auto guarded = [&](int n, const std::function<Outcome()>& f) {
    if (!want(n)) return;
    try {
      report(n, f());
    } catch (const std::exception& e) {
      report(n, {false, std::string("exception: ") + e.what()});
    }
  };
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  std::optional<DeskRun> desk;
  if (want(6) || want(7) || want(8) || want(11)) desk = desk_run(root);
  guarded(6, [&] { return criterion6(*desk); });
  guarded(7, [&] { return criterion7(*desk); });
  guarded(8, [&] { return criterion8(*desk); });
  guarded(9, [&] { return criterion9(root); });
  guarded(10, criterion10);
  guarded(11, [&] { return criterion11(*desk, root); });
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
