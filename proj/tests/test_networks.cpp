#include "deeponet/networks/checkpoint.hpp"
#include "deeponet/networks/deeponet.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace {

using namespace deeponet;
using nn::MlpSpec;
using nn::Variant;
using diff::Matrix;
using diff::Vector;

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "deeponet_test_networks";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Layer-by-layer enumeration, written out independently of MlpSpec::parameter_count.
diff::Index enumerate(diff::Index in, diff::Index width, int depth, bool modified) {
  diff::Index n = in * width + width;  // first layer
  for (int k = 1; k < depth; ++k) n += width * width + width;
  if (modified) n += 2 * (in * width + width);
  return n;
}

TEST(Architecture, PresetNetworkParameterCounts) {
  // Advection-diffusion: trunk 128 x 4 on (x, t), branch 128 x 3 on 128 sensors.
  {
    const auto b = MlpSpec::uniform(128, 128, 3), t = MlpSpec::uniform(2, 128, 4);
    EXPECT_EQ(t.parameter_count(), 2 * 128 + 128 + 3 * (128 * 128 + 128));
    EXPECT_EQ(nn::parameter_count(b, t), 99456);
    EXPECT_EQ(nn::make_layout(b, t).total(), 99456);
  }
  // Viscous Burgers: 100 x 7 both, 101 sensors. KdV: trunk 128 x 6, branch 128 x 5.
  struct Row {
    diff::Index m, bw;
    int bd;
    diff::Index tw;
    int td;
  };
  for (const Row r : {Row{101, 100, 7, 100, 7}, Row{128, 128, 5, 128, 6}}) {
    for (Variant v : {Variant::plain, Variant::modified}) {
      const auto b = MlpSpec::uniform(r.m, r.bw, r.bd, v), t = MlpSpec::uniform(2, r.tw, r.td, v);
      const bool mod = v == Variant::modified;
      EXPECT_EQ(nn::parameter_count(b, t), enumerate(r.m, r.bw, r.bd, mod) + enumerate(2, r.tw, r.td, mod));
      EXPECT_EQ(nn::make_layout(b, t).total(), nn::parameter_count(b, t));
    }
  }
  EXPECT_EQ(nn::parameter_count(MlpSpec::uniform(101, 100, 7), MlpSpec::uniform(2, 100, 7)), 70800 + 60900);
}

TEST(Architecture, RejectsInvalidSpecs) {
  EXPECT_THROW(nn::init_model(MlpSpec::uniform(8, 16, 2), MlpSpec::uniform(2, 12, 2), 0), std::invalid_argument);
  EXPECT_THROW(nn::init_model(MlpSpec::uniform(8, 16, 2), MlpSpec::uniform(3, 16, 2), 0), std::invalid_argument);
  MlpSpec no_hidden{{4, 4}, Variant::plain};
  EXPECT_THROW(no_hidden.validate(), std::invalid_argument);
  MlpSpec zero{{4, 0, 4}, Variant::plain};
  EXPECT_THROW(zero.validate(), std::invalid_argument);
  MlpSpec ragged{{4, 8, 6, 4}, Variant::modified};
  EXPECT_THROW(ragged.validate(), std::invalid_argument);
}

TEST(Init, SameSeedIsBitwiseIdenticalAndSeedsDiffer) {
  const auto b = MlpSpec::uniform(16, 20, 3), t = MlpSpec::uniform(2, 20, 3, Variant::modified);
  const auto m1 = nn::init_model(b, t, 42), m2 = nn::init_model(b, t, 42), m3 = nn::init_model(b, t, 43);
  ASSERT_EQ(m1.params.size(), m2.params.size());
  EXPECT_EQ(std::memcmp(m1.params.values().data(), m2.params.values().data(), sizeof(double) * m1.params.size()), 0);
  EXPECT_GT((m1.params.values() - m3.params.values()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
  const auto m = nn::init_model(MlpSpec::uniform(30, 40, 2), MlpSpec::uniform(2, 40, 2), 5);
  for (std::size_t i = 0; i < m.params.layout().num_slots(); ++i) {
    const auto& s = m.params.layout().slot(i);
    const auto block = m.params.slot(i);
    if (s.name.ends_with(".b")) {
      EXPECT_EQ(block.cwiseAbs().maxCoeff(), 0.0) << s.name;
    } else {
      const double limit = std::sqrt(6.0 / double(s.rows + s.cols));
      EXPECT_LE(block.cwiseAbs().maxCoeff(), limit) << s.name;
      // Uniform on [-l, l] has variance l^2 / 3.
      const double var = block.array().square().mean();
      EXPECT_NEAR(var, limit * limit / 3.0, 0.25 * limit * limit / 3.0) << s.name;
    }
  }
}

TEST(Forward, ZeroWeightsGiveZero) {
  auto m = nn::init_model(MlpSpec::uniform(6, 8, 3), MlpSpec::uniform(2, 8, 3), 1);
  m.params.values().setZero();
  const std::vector<double> u(6, 0.9);
  EXPECT_EQ(nn::deeponet_eval(m, u, 1.0, 0.5), 0.0);
}

TEST(Forward, PlainMatchesIndependentReference) {
  const auto m = nn::init_model(MlpSpec::uniform(5, 9, 3), MlpSpec::uniform(2, 9, 4), 3);
  Rng rng(8);
  const Matrix x = testing_support::random_matrix(rng, 2, 6);
  std::vector<std::pair<Matrix, Vector>> layers;
  const auto slots = m.trunk_slots();
  for (std::size_t k = 0; k < slots.weight.size(); ++k) {
    layers.emplace_back(Matrix(m.params.slot(slots.weight[k])), Vector(m.params.slot(slots.bias[k])));
  }
  EXPECT_LT(testing_support::max_abs(nn::trunk_forward(m, x) - testing_support::reference_mlp(layers, x)), 1e-14);
}

TEST(Forward, ModifiedWithEqualEncodersCollapsesToEncoder) {
  auto m = nn::init_model(MlpSpec::uniform(4, 7, 2), MlpSpec::uniform(2, 7, 3, Variant::modified), 12);
  auto& p = m.params;
  p.slot("trunk.enc_v.W") = p.slot("trunk.enc_u.W");
  p.slot("trunk.enc_v.b") = Matrix::Constant(7, 1, 0.1);
  p.slot("trunk.enc_u.b") = Matrix::Constant(7, 1, 0.1);
  Rng rng(2);
  const Matrix x = testing_support::random_matrix(rng, 2, 5);
  // Every hidden state is U, so the output is the last layer applied to U.
  const Matrix u = (Matrix(p.slot("trunk.enc_u.W")) * x).colwise() + Vector(p.slot("trunk.enc_u.b"));
  const Matrix expected = (Matrix(p.slot("trunk.L2.W")) * Matrix(u.array().tanh())).colwise() + Vector(p.slot("trunk.L2.b"));
  EXPECT_LT(testing_support::max_abs(nn::trunk_forward(m, x) - expected), 1e-14);
}

TEST(Forward, ModifiedMatchesHandWrittenMixing) {
  const auto m = nn::init_model(MlpSpec::uniform(3, 5, 2), MlpSpec::uniform(2, 5, 2, Variant::modified), 77);
  const auto& p = m.params;
  Matrix x(2, 1);
  x << 0.4, 0.9;
  auto lin = [&](const std::string& l, const Matrix& h) {
    return Matrix((Matrix(p.slot(l + ".W")) * h).colwise() + Vector(p.slot(l + ".b")));
  };
  const Matrix U = lin("trunk.enc_u", x).array().tanh(), V = lin("trunk.enc_v", x).array().tanh();
  const Matrix Z = lin("trunk.L0", x).array().tanh();
  const Matrix H = (1.0 - Z.array()) * U.array() + Z.array() * V.array();
  EXPECT_LT(testing_support::max_abs(nn::trunk_forward(m, x) - lin("trunk.L1", H)), 1e-14);
}

TEST(Forward, RejectsWrongInputWidth) {
  const auto m = nn::init_model(MlpSpec::uniform(6, 8, 2), MlpSpec::uniform(2, 8, 2), 1);
  EXPECT_THROW(nn::deeponet_eval(m, std::vector<double>(5, 0.0), 0.1, 0.1), std::invalid_argument);
  const auto w = nn::dense_weights(m.params, m.trunk, m.trunk_slots());
  EXPECT_THROW(nn::mlp_forward(m.trunk, w, Matrix(Matrix::Zero(3, 1))), std::invalid_argument);
}

TEST(Forward, TaylorOrderZeroEqualsPlainForward) {
  const auto m = nn::init_model(MlpSpec::uniform(4, 6, 2), MlpSpec::uniform(2, 6, 3, Variant::modified), 4);
  Rng rng(6);
  const Matrix x = testing_support::random_matrix(rng, 2, 4);
  diff::Tape tape;
  const auto b = nn::bind_model(tape, m);
  const diff::TaylorValue tv = nn::mlp_forward(b.trunk, diff::TaylorValue({tape.constant(x)}));
  ASSERT_EQ(tv.order(), 0);
  EXPECT_LT(testing_support::max_abs(tv.value().value() - nn::trunk_forward(m, x)), 1e-15);
}

TEST(DeepOnet, EvalEqualsExplicitDotProduct) {
  const auto m = nn::init_model(MlpSpec::uniform(10, 12, 3), MlpSpec::uniform(2, 12, 3), 9);
  Rng rng(10);
  std::vector<double> u(10);
  for (auto& v : u) v = rng.normal();
  const Matrix us = Eigen::Map<Matrix>(u.data(), 10, 1);
  Matrix y(2, 1);
  y << 2.0, 0.3;
  const Vector b = nn::branch_forward(m, us), g = nn::trunk_forward(m, y);
  double dot = 0.0;
  for (int k = 0; k < 12; ++k) dot += b(k) * g(k);
  EXPECT_NEAR(nn::deeponet_eval(m, u, 2.0, 0.3), dot, 1e-14 * std::max(1.0, std::abs(dot)));
}

TEST(DeepOnet, SingleWidthProductAndZeroTrunk) {
  // Width 1: branch output 2, trunk output 3 through bias-only final layers.
  auto m = nn::init_model(MlpSpec{{3, 4, 1}}, MlpSpec{{2, 4, 1}}, 2);
  m.params.slot("branch.L1.W").setZero();
  m.params.slot("branch.L1.b").setConstant(2.0);
  m.params.slot("trunk.L1.W").setZero();
  m.params.slot("trunk.L1.b").setConstant(3.0);
  EXPECT_DOUBLE_EQ(nn::deeponet_eval(m, std::vector<double>{0.1, 0.2, 0.3}, 1.0, 0.5), 6.0);
  m.params.slot("trunk.L1.b").setZero();
  for (double s : {-1.0, 0.0, 5.0}) EXPECT_EQ(nn::deeponet_eval(m, std::vector<double>(3, s), 1.0, 0.5), 0.0);
}

TEST(DeepOnet, LinearInTrunkOutput) {
  auto m = nn::init_model(MlpSpec::uniform(5, 6, 2), MlpSpec::uniform(2, 6, 2), 13);
  const std::vector<double> u{0.1, -0.4, 0.3, 0.9, -0.2};
  const double base = nn::deeponet_eval(m, u, 1.0, 0.2);
  m.params.slot("trunk.L1.W") *= 2.5;
  m.params.slot("trunk.L1.b") *= 2.5;
  EXPECT_NEAR(nn::deeponet_eval(m, u, 1.0, 0.2), 2.5 * base, 1e-14 * std::max(1.0, std::abs(base)));
}

TEST(DeepOnet, FinalLayerSlots) {
  const auto m = nn::init_model(MlpSpec::uniform(5, 6, 3), MlpSpec::uniform(2, 6, 2, Variant::modified), 1);
  std::vector<std::string> finals;
  for (std::size_t i = 0; i < m.params.layout().num_slots(); ++i) {
    if (nn::is_final_layer_slot(m, i)) finals.push_back(m.params.layout().slot(i).name);
  }
  EXPECT_EQ(finals, (std::vector<std::string>{"branch.L2.W", "branch.L2.b", "trunk.L1.W", "trunk.L1.b"}));
}

class CheckpointTest : public ::testing::Test {
 protected:
  nn::DeepOnetModel model = [] {
    auto m = nn::init_model(MlpSpec::uniform(8, 10, 3), MlpSpec::uniform(2, 10, 6, Variant::modified), 21);
    Rng rng(3);
    for (auto& v : m.params.values()) v += 1e-3 * rng.normal();  // non-round values
    m.step = 1234;
    m.pde_tag = "kdv(delta=0.1)";
    return m;
  }();
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  const auto path = temp_path("roundtrip.json");
  nn::save_checkpoint(model, path);
  const auto loaded = nn::load_checkpoint(path);
  ASSERT_EQ(loaded.params.size(), model.params.size());
  EXPECT_EQ(std::memcmp(loaded.params.values().data(), model.params.values().data(), sizeof(double) * model.params.size()), 0);
  EXPECT_EQ(loaded.branch, model.branch);
  EXPECT_EQ(loaded.trunk, model.trunk);
  EXPECT_EQ(loaded.step, 1234);
  EXPECT_EQ(loaded.seed, 21u);
  EXPECT_EQ(loaded.pde_tag, "kdv(delta=0.1)");
  EXPECT_EQ(loaded.params.layout(), model.params.layout());
}

nn::CheckpointErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const nn::CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a CheckpointError";
  return nn::CheckpointErrorKind::io;
}

TEST_F(CheckpointTest, TruncatedFileIsCorrupted) {
  const auto path = temp_path("truncated.json");
  nn::save_checkpoint(model, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_EQ(kind_of([&] { nn::load_checkpoint(path); }), nn::CheckpointErrorKind::corrupted);
}

TEST_F(CheckpointTest, AlteredPayloadIsCorrupted) {
  auto j = nn::checkpoint_to_json(model);
  j["params"][3] = j["params"][3].get<double>() + 1e-9;
  EXPECT_EQ(kind_of([&] { nn::checkpoint_from_json(j); }), nn::CheckpointErrorKind::corrupted);
  auto k = nn::checkpoint_to_json(model);
  k["params"].erase(0);
  EXPECT_EQ(kind_of([&] { nn::checkpoint_from_json(k); }), nn::CheckpointErrorKind::corrupted);
}

TEST_F(CheckpointTest, VersionMismatch) {
  auto j = nn::checkpoint_to_json(model);
  j["format_version"] = nn::kCheckpointVersion + 1;
  EXPECT_EQ(kind_of([&] { nn::checkpoint_from_json(j); }), nn::CheckpointErrorKind::version_mismatch);
}

TEST_F(CheckpointTest, DeeperCheckpointIntoShallowerExpectation) {
  const auto path = temp_path("depth6.json");
  nn::save_checkpoint(model, path);
  EXPECT_EQ(kind_of([&] { nn::load_checkpoint(path, model.branch, MlpSpec::uniform(2, 10, 4, Variant::modified)); }),
            nn::CheckpointErrorKind::spec_mismatch);
  EXPECT_NO_THROW(nn::load_checkpoint(path, model.branch, model.trunk));
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([&] { nn::load_checkpoint(temp_path("does_not_exist.json")); }), nn::CheckpointErrorKind::io);
}

}  // namespace
