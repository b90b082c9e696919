#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fdsdf/losses.hpp"
#include "fdsdf/oracles.hpp"
#include "fdsdf/siren.hpp"

namespace fdsdf {
namespace {

using T = double;

TEST(Losses, DirichletExamples) {
  std::vector<double> zero(5, 0.0), pm = {0.1, -0.1};
  EXPECT_EQ(dirichlet_loss<T>(zero), 0.0);
  EXPECT_DOUBLE_EQ(dirichlet_loss<T>(pm), 0.1);
  std::vector<double> a = {0.3, -0.2, 0.05}, b = {0.6, -0.4, 0.1};
  EXPECT_DOUBLE_EQ(dirichlet_loss<T>(b), 2 * dirichlet_loss<T>(a));
  EXPECT_THROW(dirichlet_loss<T>(std::span<const double>()), ContractViolation);
}

TEST(Losses, EikonalExamples) {
  std::vector<TangentTriple<double>> unit = {{0, 1, 0, 0}, {0, 0, 0.6, 0.8}};
  EXPECT_NEAR(eikonal_loss<T>(unit), 0.0, 1e-15);
  std::vector<TangentTriple<double>> two = {{0, 2, 0, 0}};
  EXPECT_DOUBLE_EQ(eikonal_loss<T>(two), 1.0);
  std::vector<TangentTriple<double>> zero = {{0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(eikonal_loss<T>(zero), 1.0);
  EXPECT_THROW(eikonal_loss<T>(std::span<const TangentTriple<double>>()), ContractViolation);
}

TEST(Losses, NonmanifoldExamples) {
  std::vector<double> zero(4, 0.0), far = {1e3, -1e3}, f = {0.05, -0.05};
  EXPECT_DOUBLE_EQ(nonmanifold_loss<T>(zero, 100.0), 1.0);
  EXPECT_LT(nonmanifold_loss<T>(far, 100.0), 1e-300);
  EXPECT_NEAR(nonmanifold_loss<T>(f, 100.0), std::exp(-5.0), 1e-15);
  EXPECT_NEAR(std::exp(-5.0), 6.74e-3, 1e-5);
  EXPECT_THROW(nonmanifold_loss<T>(f, 0.0), ContractViolation);
  EXPECT_THROW(nonmanifold_loss<T>(std::span<const double>(), 100.0), ContractViolation);
}

TEST(FdRegularizer, PlaneFieldIsZeroForBothVariants) {
  oracle::Field plane{oracle::Plane{Vec3(0, 0, 1), 0.0}};
  Rng rng(1);
  std::uniform_real_distribution<double> uni(-0.8, 0.8);
  std::vector<Vec3> shell;
  for (int i = 0; i < 100; ++i) shell.emplace_back(uni(rng), uni(rng), 0.02 * uni(rng));
  for (auto v : {Variant::NcrFd, Variant::NshFd}) {
    LossConfig cfg;
    cfg.variant = v;
    EXPECT_NEAR(fd_regularizer(plane, shell, cfg, rng), 0.0, 1e-20);
  }
}

TEST(FdRegularizer, SphereFieldNshOnSurface) {
  oracle::Field sphere{oracle::Sphere{Vec3::Zero(), 0.5}};
  Rng rng(2);
  auto shell = oracle::sample_surface(sphere.shape, 500, rng).points;
  LossConfig cfg;
  cfg.variant = Variant::NshFd;
  EXPECT_NEAR(fd_regularizer(sphere, shell, cfg, rng), 4.0, 0.04);
  cfg.variant = Variant::NcrFd;
  cfg.full_denominator = true;
  EXPECT_NEAR(fd_regularizer(sphere, shell, cfg, rng), 4.0, 0.04);
}

struct FlatField {
  double eval(const Vec3&) const { return 0.25; }
  TangentTriple<double> eval_with_gradient(const Vec3&) const { return {0.25, 0, 0, 0}; }
};

TEST(FdRegularizer, AllDegenerateGivesZeroAndWarns) {
  std::string seen;
  auto saved = warning_sink();
  warning_sink() = [&](std::string_view m) { seen = m; };
  FlatField flat;
  Rng rng(3);
  std::vector<Vec3> shell(10, Vec3(0.1, 0.2, 0.3));
  EXPECT_EQ(fd_regularizer(flat, shell, LossConfig{}, rng), 0.0);
  warning_sink() = saved;
  EXPECT_NE(seen.find("degenerate"), std::string::npos);
  EXPECT_THROW(fd_regularizer(flat, std::span<const Vec3>(), LossConfig{}, rng), ContractViolation);
}

TrainingBatch random_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-0.9, 0.9);
  std::normal_distribution<double> noise(0.0, 0.01);
  TrainingBatch b;
  auto surf = oracle::sample_surface(oracle::Sphere{Vec3::Zero(), 0.5}, n, rng);
  b.surface = surf.points;
  for (std::size_t i = 0; i < n; ++i) {
    b.offsurface.emplace_back(uni(rng), uni(rng), uni(rng));
    b.shell.push_back(b.surface[i] + Vec3(noise(rng), noise(rng), noise(rng)));
  }
  return b;
}

TEST(TotalLoss, WeightIdentities) {
  const auto p = init_siren(4, 16, 2);
  const auto batch = random_batch(20, 5);
  PlainSiren net{&p};
  auto run = [&](LossWeights w) {
    Rng rng(9);
    return total_loss(net, batch, w, LossConfig{}, rng);
  };
  auto zero = run({1, 0, 0, 0});
  EXPECT_EQ(zero.total, zero.parts.dm);
  for (auto w : {LossWeights{}, LossWeights{1, 3, 7, 0.6}, LossWeights{1, 0.5, 0, 2}}) {
    auto r = run(w);
    const auto& b = r.parts;
    const double expect = w.lambda_dm * b.dm + w.lambda_dnm * b.dnm + w.lambda_eik * b.eik + w.lambda_fd * b.fd;
    EXPECT_NEAR(r.total, expect, 1e-12 * std::abs(expect));
    EXPECT_NEAR(b.total, expect, 1e-12 * std::abs(expect));
    for (double c : {b.dm, b.dnm, b.eik, b.fd}) EXPECT_GE(c, 0.0);
    auto w2 = w;
    w2.lambda_fd *= 2;
    auto r2 = run(w2);
    const double rest = w.lambda_dm * b.dm + w.lambda_dnm * b.dnm + w.lambda_eik * b.eik;
    EXPECT_NEAR(r2.total - rest, 2 * (r.total - rest), 1e-12 * std::abs(r.total));
  }
  EXPECT_THROW(run({1, -1, 0, 0}), ContractViolation);
}

// Each term on the tape, differentiated w.r.t. the parameters, against
// central differences of the same term computed in plain doubles.
enum class Term { Dm, Dnm, Eik, Fd, Total };

// The frames are replayed from the taped run: the loss treats them as
// constants, so the finite differences must not see them move.
template <class Field>
double term_value(Field& f, const TrainingBatch& b, Term t, const LossConfig& cfg, FrameCache& frames) {
  Rng rng(17);
  const LossWeights w{3000, 100, 50, 1};
  auto r = total_loss(f, b, w, cfg, rng, &frames);
  const double v[] = {value_of(r.parts.dm), r.parts.dnm, r.parts.eik, r.parts.fd, value_of(r.total)};
  return v[static_cast<int>(t)];
}

ad::ScalarNode term_node(SirenOnTape& f, const TrainingBatch& b, Term t, const LossConfig& cfg, FrameCache& frames) {
  Rng rng(17);
  auto s = loss_sums(f, b, cfg, rng, &frames);
  const LossCounts n{s.surface, s.offsurface, s.fd.used};
  switch (t) {
    case Term::Dm: return s.dm / static_cast<double>(n.surface);
    case Term::Dnm: return s.dnm / static_cast<double>(n.offsurface);
    case Term::Eik: return s.eik / static_cast<double>(n.mixed());
    case Term::Fd: return s.fd.sum / static_cast<double>(n.fd_used);
    default: return weighted_objective(s, n, LossWeights{3000, 100, 50, 1});
  }
}

void check_parameter_gradient(Term t, const LossConfig& cfg) {
  const auto p = init_siren(21, 16, 2);
  const auto batch = random_batch(20, 22);
  ad::Tape tape;
  SirenOnTape net(tape, p);
  FrameCache frames;
  auto root = term_node(net, batch, t, cfg, frames);
  frames.replay = true;
  const auto grad = net.parameter_gradient(tape.backward(root));
  {
    PlainSiren plain{&p};
    EXPECT_NEAR(term_value(plain, batch, t, cfg, frames), root.value(), 1e-9 * std::abs(root.value()));
  }
  double gmax = 0.0;
  for (double g : grad) gmax = std::max(gmax, std::abs(g));
  Rng pick_rng(23);
  std::uniform_int_distribution<std::size_t> pick(0, p.parameter_count() - 1);
  double worst = 0.0;
  for (int k = 0; k < 25; ++k) {
    const std::size_t i = pick(pick_rng);
    const double h = 1e-6;
    auto pp = p, pm = p;
    pp.values[i] += h;
    pm.values[i] -= h;
    PlainSiren fp{&pp}, fm{&pm};
    const double fd = (term_value(fp, batch, t, cfg, frames) - term_value(fm, batch, t, cfg, frames)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-3 * gmax});
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  EXPECT_LT(worst, 1e-4) << "term " << static_cast<int>(t);
}

TEST(TotalLoss, ParameterGradientsMatchFiniteDifferences) {
  LossConfig cfg;
  for (Term t : {Term::Dm, Term::Dnm, Term::Eik, Term::Fd, Term::Total}) check_parameter_gradient(t, cfg);
  cfg.variant = Variant::NshFd;
  check_parameter_gradient(Term::Fd, cfg);
  check_parameter_gradient(Term::Total, cfg);
  cfg.variant = Variant::NcrFd;
  cfg.full_denominator = true;
  check_parameter_gradient(Term::Fd, cfg);
}

TEST(TotalLoss, EvaluationBudgetAndFirstOrderTape) {
  const auto p = init_siren(31, 16, 2);
  const auto batch = random_batch(20, 32);
  ad::Tape tape;
  SirenOnTape net(tape, p);
  Rng rng(33);
  auto r = total_loss(net, batch, LossWeights{}, LossConfig{}, rng);
  tape.backward(r.total);
  const std::size_t s = batch.surface.size(), o = batch.offsurface.size(), sh = batch.shell.size();
  EXPECT_EQ(r.fd_skipped, 0u);
  EXPECT_EQ(net.evaluations(), s + o + 9 * sh);
  EXPECT_EQ(net.gradient_evaluations(), s + o + sh);
  // every node on the tape is one of the first-order primitives
  const auto census = tape.census();
  std::size_t counted = 0;
  for (std::size_t k = 0; k < ad::kOpCount; ++k) counted += census[k];
  EXPECT_EQ(counted, tape.size());
}

TEST(TotalLoss, ZeroFdWeightMatchesBaselineGradient) {
  const auto p = init_siren(41, 16, 2);
  const auto batch = random_batch(20, 42);
  auto grad_of = [&](bool with_fd_term) {
    ad::Tape tape;
    SirenOnTape net(tape, p);
    Rng rng(43);
    if (with_fd_term) return net.parameter_gradient(tape.backward(total_loss(net, batch, {1, 100, 50, 0}, {}, rng).total));
    auto fs = std::vector<ad::ScalarNode>{}, fo = fs;
    std::vector<TangentTriple<ad::ScalarNode>> g;
    for (const auto& x : batch.surface) g.push_back(net.eval_with_gradient(x)), fs.push_back(g.back().value);
    for (const auto& x : batch.offsurface) g.push_back(net.eval_with_gradient(x)), fo.push_back(g.back().value);
    auto root = dirichlet_loss<ad::ScalarNode>(fs) + 100.0 * nonmanifold_loss<ad::ScalarNode>(fo, 100.0) +
                50.0 * eikonal_loss<ad::ScalarNode>(g);
    return net.parameter_gradient(tape.backward(root));
  };
  const auto a = grad_of(true), b = grad_of(false);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * (1 + std::abs(b[i])));
}

TEST(TotalLoss, EmptyBatchesAreRejected) {
  const auto p = init_siren(1, 8, 1);
  PlainSiren net{&p};
  Rng rng(0);
  auto b = random_batch(4, 1);
  b.offsurface.clear();
  EXPECT_THROW(total_loss(net, b, {}, {}, rng), ContractViolation);
}

TEST(Variant, ParsesNames) {
  EXPECT_EQ(parse_variant("ncr-fd"), Variant::NcrFd);
  EXPECT_EQ(parse_variant("nsh-fd"), Variant::NshFd);
  EXPECT_EQ(to_string(Variant::NshFd), "nsh-fd");
  EXPECT_THROW(parse_variant("ncr"), ContractViolation);
}

}  // namespace
}  // namespace fdsdf
