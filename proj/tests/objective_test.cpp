#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "poundkit/objective.hpp"
#include "support.hpp"

using namespace poundkit;
using namespace poundkit::objective;

namespace {

constexpr double kE = std::numbers::e;
const double kLn2 = std::log(2.0);

Vector unit(Eigen::Index d, Eigen::Index i) { return Vector::Unit(d, i); }

Matrix rows(std::initializer_list<Vector> vs) {
  Matrix m(static_cast<Eigen::Index>(vs.size()), vs.begin()->size());
  Eigen::Index r = 0;
  for (const auto& v : vs) m.row(r++) = v.transpose();
  return m;
}

Batch single(const Vector& img, int label, std::size_t cls = 0) {
  Batch b;
  b.images = img.transpose();
  b.labels = {label};
  b.classes = {cls};
  return b;
}

// Central differences of total_loss over every flat parameter coordinate.
Vector numeric_gradient(const Batch& b, const PromptModel& m, const ContextPair& ctx, double l1, double l2,
                        double h) {
  Vector flat = ctx.flatten();
  Vector out(flat.size());
  ContextPair probe = ctx;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double keep = flat(i);
    flat(i) = keep + h;
    probe.assign(flat);
    const double up = total_loss(b, m, probe, l1, l2).total;
    flat(i) = keep - h;
    probe.assign(flat);
    const double down = total_loss(b, m, probe, l1, l2).total;
    flat(i) = keep;
    out(i) = (up - down) / (2.0 * h);
  }
  return out;
}

double worst_relative_error(const Vector& a, const Vector& n) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(n(i)), 1e-8});
    worst = std::max(worst, std::abs(a(i) - n(i)) / denom);
  }
  return worst;
}

}  // namespace

TEST(EncodePrompts, ShapesMeansAndNorms) {
  SpaceConfig cfg;
  cfg.classes = 3;
  cfg.dim = 8;
  const auto model = make_model(cfg, 5);
  const auto ctx = init_context(cfg, 5);
  const auto emb = encode_prompts(model, ctx);
  ASSERT_EQ(emb.t_real.rows(), 3);
  ASSERT_EQ(emb.t_real.cols(), 8);
  EXPECT_TRUE(emb.t_real_bar.isApprox(emb.t_real.colwise().mean().transpose(), 1e-15));
  EXPECT_TRUE(emb.t_fake_bar.isApprox(emb.t_fake.colwise().mean().transpose(), 1e-15));
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_NEAR(emb.t_real.row(k).norm(), 1.0, 1e-12);
    EXPECT_NEAR(emb.t_fake.row(k).norm(), 1.0, 1e-12);
  }
}

TEST(EncodePrompts, Deterministic) {
  SpaceConfig cfg;
  const auto a = encode_prompts(make_model(cfg, 9), init_context(cfg, 9));
  const auto b = encode_prompts(make_model(cfg, 9), init_context(cfg, 9));
  EXPECT_EQ(a.t_real, b.t_real);
  EXPECT_EQ(a.t_fake, b.t_fake);
}

TEST(EncodePrompts, DegenerateEncoding) {
  SpaceConfig cfg;
  auto model = make_model(cfg, 1);
  model.encoder.w.setZero();
  try {
    encode_prompts(model, init_context(cfg, 1));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate encoding"), std::string::npos);
  }
}

TEST(VisionPrompt, Examples) {
  Matrix img = rows({unit(3, 0), Vector(Vector::Ones(3).normalized())});
  EXPECT_EQ(apply_vision_prompt(img, Vector::Zero(3)), img);
  const Matrix same_dir = apply_vision_prompt(img, img.row(0).transpose());
  EXPECT_TRUE(same_dir.row(0).isApprox(img.row(0), 1e-15));
  const Matrix shifted = apply_vision_prompt(img, Vector::Constant(3, 0.7));
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) EXPECT_NEAR(shifted.row(i).norm(), 1.0, 1e-12);
  try {
    apply_vision_prompt(img, -unit(3, 0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate image embedding"), std::string::npos);
  }
}

TEST(ClassPosterior, Examples) {
  const Matrix same = rows({unit(3, 0), unit(3, 0), unit(3, 0), unit(3, 0)});
  const Vector p = class_posterior(unit(3, 1), same, 1.0);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(p(k), 0.25, 1e-15);

  const Vector q = class_posterior(unit(2, 0), rows({unit(2, 0), unit(2, 1)}), 1.0);
  EXPECT_NEAR(q(0), kE / (kE + 1.0), 1e-15);
  EXPECT_NEAR(q(1), 1.0 / (kE + 1.0), 1e-15);
  EXPECT_NEAR(q(0), 0.7311, 5e-5);
}

TEST(PFake, Examples) {
  const Vector i = unit(3, 0);
  EXPECT_DOUBLE_EQ(p_fake(i, unit(3, 1), unit(3, 2), 1.0), 0.5);
  EXPECT_NEAR(p_fake(i, unit(3, 0), unit(3, 1), 1.0), kE / (kE + 1.0), 1e-15);
  EXPECT_NEAR(p_fake(i, -unit(3, 0), unit(3, 0), 1.0), 1.0 / (1.0 + kE * kE), 1e-15);
  EXPECT_NEAR(p_fake(i, -unit(3, 0), unit(3, 0), 1.0), 0.11920, 5e-6);
  EXPECT_THROW(p_fake(i, Vector::Zero(3), unit(3, 0), 1.0), Error);
}

TEST(LossBce, Examples) {
  const auto sym = embeddings_from_rows(rows({unit(3, 0)}), rows({unit(3, 0)}));
  EXPECT_NEAR(loss_bce(single(unit(3, 1), 1), sym, 1.0, 1e-7), kLn2, 1e-15);

  // Logit = scale * (1 - 0), so scale = logit(p) sets p_fake exactly.
  const auto emb = embeddings_from_rows(rows({unit(3, 1)}), rows({unit(3, 0)}));
  EXPECT_NEAR(loss_bce(single(unit(3, 0), 1), emb, std::log(9.0), 1e-7), -std::log(0.9), 1e-12);
  EXPECT_NEAR(loss_bce(single(unit(3, 0), 0), emb, std::log(4.0), 1e-7), -std::log(0.2), 1e-12);
  EXPECT_NEAR(-std::log(0.9), 0.10536, 5e-6);
  EXPECT_NEAR(-std::log(0.2), 1.60944, 5e-6);
}

TEST(LossBce, ClampBoundsLoss) {
  const auto emb = embeddings_from_rows(rows({unit(3, 1)}), rows({unit(3, 0)}));
  EXPECT_NEAR(loss_bce(single(unit(3, 0), 0), emb, 100.0, 1e-7), -std::log(1e-7), 1e-9);
}

TEST(LossSpm, Examples) {
  const Matrix same = rows({unit(3, 0), unit(3, 0), unit(3, 0), unit(3, 0)});
  const auto uniform = embeddings_from_rows(same, same);
  EXPECT_NEAR(loss_spm(single(unit(3, 1), 0, 2), uniform, 1.0), 2.0 * std::log(4.0), 1e-12);

  const Matrix t = rows({unit(2, 0), unit(2, 1)});
  const auto emb = embeddings_from_rows(t, t);
  const double expected = 2.0 * std::log(1.0 + std::exp(-1.0));
  EXPECT_NEAR(loss_spm(single(unit(2, 0), 1, 0), emb, 1.0), expected, 1e-12);
  EXPECT_NEAR(expected, 0.6266, 1e-4);
}

TEST(LossCab, Examples) {
  const Matrix t = rows({unit(3, 0), unit(3, 1)});
  const auto sym = embeddings_from_rows(t, t);
  EXPECT_NEAR(loss_cab(single(unit(3, 2), 1), sym, 1.0, 1e-7), 2.0 * kLn2, 1e-15);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = poundkit::testing::random_problem(rng, 3, 2, 1, 6, 5, 2.0);
    const auto emb = encode_prompts(p.model, p.ctx);
    const Batch prompted{apply_vision_prompt(p.batch.images, p.ctx.v_vision), p.batch.labels, p.batch.classes};
    EXPECT_NEAR(loss_cab(prompted, emb, 2.0, 1e-7), loss_bce(prompted, emb, 2.0, 1e-7), 1e-12);
  }
}

TEST(Losses, DuplicationInvariant) {
  std::mt19937_64 rng(5);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 1.5);
  const auto a = total_loss(p.batch, p.model, p.ctx, 1.0, 1.0);
  const auto b = total_loss(poundkit::testing::duplicated(p.batch), p.model, p.ctx, 1.0, 1.0);
  EXPECT_NEAR(a.terms.bce, b.terms.bce, 1e-14);
  EXPECT_NEAR(a.terms.spm, b.terms.spm, 1e-14);
  EXPECT_NEAR(a.terms.cab, b.terms.cab, 1e-14);
}

TEST(TotalLoss, Identities) {
  std::mt19937_64 rng(6);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 1.0);
  const auto zero = total_loss(p.batch, p.model, p.ctx, 0.0, 0.0);
  EXPECT_EQ(zero.total, zero.terms.bce);
  const auto one = total_loss(p.batch, p.model, p.ctx, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(one.total, one.terms.bce + one.terms.spm + one.terms.cab);
  EXPECT_DOUBLE_EQ(combine({0.1, 0.5, 0.25}, 2.0, 4.0), 2.1);
  EXPECT_THROW(total_loss(p.batch, p.model, p.ctx, -0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(total_loss(p.batch, p.model, p.ctx, 1.0, -1.0), std::invalid_argument);

  // Affine in the weights: L(a) + L(b) = L(0) + L(a + b) coordinatewise.
  const double l10 = total_loss(p.batch, p.model, p.ctx, 1.0, 0.0).total;
  const double l01 = total_loss(p.batch, p.model, p.ctx, 0.0, 1.0).total;
  EXPECT_NEAR(l10 + l01, zero.total + one.total, 1e-12);
  EXPECT_GE(one.terms.bce, 0.0);
  EXPECT_GE(one.terms.spm, 0.0);
  EXPECT_GE(one.terms.cab, 0.0);
}

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 1.0);
  for (double l1 : {0.0, 1.0})
    for (double l2 : {0.0, 1.0}) {
      const auto g = gradients(p.batch, p.model, p.ctx, l1, l2);
      const Vector fd = numeric_gradient(p.batch, p.model, p.ctx, l1, l2, 1e-5);
      EXPECT_LT(worst_relative_error(g.total.flatten(), fd), 1e-4) << "l1=" << l1 << " l2=" << l2;
    }
}

TEST(Gradients, LinearInTerms) {
  std::mt19937_64 rng(8);
  auto p = poundkit::testing::random_problem(rng, 3, 3, 4, 7, 5, 2.0);
  const auto z = gradients(p.batch, p.model, p.ctx, 0.0, 0.0);
  EXPECT_EQ(z.total.flatten(), z.bce.flatten());
  const auto g = gradients(p.batch, p.model, p.ctx, 0.5, 2.0);
  const Vector expect = g.bce.flatten() + 0.5 * g.spm.flatten() + 2.0 * g.cab.flatten();
  EXPECT_TRUE(g.total.flatten().isApprox(expect, 1e-14));
  EXPECT_DOUBLE_EQ(g.value.total, total_loss(p.batch, p.model, p.ctx, 0.5, 2.0).total);
}

TEST(Gradients, DuplicationInvariant) {
  std::mt19937_64 rng(9);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 1.0);
  const Vector a = gradients(p.batch, p.model, p.ctx, 1.0, 1.0).total.flatten();
  const Vector b = gradients(poundkit::testing::duplicated(p.batch), p.model, p.ctx, 1.0, 1.0).total.flatten();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Gradients, Deterministic) {
  std::mt19937_64 r1(10), r2(10);
  auto p = poundkit::testing::random_problem(r1, 4, 2, 3, 5, 6, 1.0);
  auto q = poundkit::testing::random_problem(r2, 4, 2, 3, 5, 6, 1.0);
  EXPECT_EQ(gradients(p.batch, p.model, p.ctx, 1.0, 1.0).total.flatten(),
            gradients(q.batch, q.model, q.ctx, 1.0, 1.0).total.flatten());
}

TEST(Inference, SymmetricIsHalf) {
  const Matrix t = rows({unit(3, 0), unit(3, 1)});
  const auto emb = embeddings_from_rows(t, t);
  EXPECT_DOUBLE_EQ(infer_deepfake(unit(3, 2), emb, MeanMode{}, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(infer_deepfake(unit(3, 0), emb, ClassMode{1}, 1.0), 0.5);
  EXPECT_THROW(infer_deepfake(unit(3, 0), emb, ClassMode{2}, 1.0), std::out_of_range);
}

TEST(Inference, MeanModeUsesBars) {
  std::mt19937_64 rng(11);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 3.0);
  const auto emb = encode_prompts(p.model, p.ctx);
  const Vector i = p.batch.images.row(0).transpose();
  EXPECT_EQ(infer_deepfake(i, emb, MeanMode{}, 3.0), p_fake(i, emb.t_fake_bar, emb.t_real_bar, 3.0));
}

TEST(Inference, ModesCanDisagree) {
  // Class 0 fake row is aligned with the image; the fake mean leans away.
  const Matrix t_fake = rows({unit(3, 0), Vector((-2.0 * unit(3, 0) + unit(3, 2)).normalized())});
  const Matrix t_real = rows({unit(3, 1), unit(3, 0)});
  const auto emb = embeddings_from_rows(t_real, t_fake);
  EXPECT_GT(infer_deepfake(unit(3, 0), emb, ClassMode{0}, 1.0), 0.5);
  EXPECT_LT(infer_deepfake(unit(3, 0), emb, MeanMode{}, 1.0), 0.5);
}

TEST(Inference, InferClass) {
  const Matrix t = rows({unit(4, 0), unit(4, 1), unit(4, 2)});
  const auto emb = embeddings_from_rows(t, t);
  EXPECT_EQ(infer_class(unit(4, 2), emb, Branch::kReal, 1.0), 2u);
  EXPECT_EQ(infer_class(unit(4, 3), emb, Branch::kFake, 1.0), 0u);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = poundkit::testing::random_problem(rng, 4, 2, 5, 3, 6, 1.0);
    const auto e = encode_prompts(p.model, p.ctx);
    const Vector i = p.batch.images.row(0).transpose();
    const auto base = infer_class(i, e, Branch::kFake, 1.0);
    for (double s : {0.01, 0.5, 7.0, 100.0}) EXPECT_EQ(infer_class(i, e, Branch::kFake, s), base);
  }
}

TEST(Properties, Normalization) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = poundkit::testing::random_problem(rng, 3, 2, 4, 2, 5, 4.0);
    const auto e = encode_prompts(p.model, p.ctx);
    const Vector i = p.batch.images.row(0).transpose();
    EXPECT_NEAR(class_posterior(i, e.t_real, 4.0).sum(), 1.0, 1e-12);
    EXPECT_NEAR(p_fake(i, e.t_fake_bar, e.t_real_bar, 4.0) + p_fake(i, e.t_real_bar, e.t_fake_bar, 4.0), 1.0, 1e-12);
  }
}

TEST(Properties, RowsStayUnitAfterUpdates) {
  std::mt19937_64 rng(14);
  auto p = poundkit::testing::random_problem(rng, 4, 2, 3, 5, 6, 1.0);
  for (int step = 0; step < 10; ++step) {
    p.ctx += gradients(p.batch, p.model, p.ctx, 1.0, 1.0).total * -0.5;
    const auto e = encode_prompts(p.model, p.ctx);
    for (Eigen::Index k = 0; k < e.t_real.rows(); ++k) {
      EXPECT_NEAR(e.t_real.row(k).norm(), 1.0, 1e-12);
      EXPECT_NEAR(e.t_fake.row(k).norm(), 1.0, 1e-12);
    }
  }
}

TEST(Batch, Validation) {
  Batch b = single(unit(3, 0), 1, 0);
  EXPECT_NO_THROW(b.validate(2, 3));
  EXPECT_THROW(b.validate(2, 4), DataError);
  b.classes = {2};
  EXPECT_THROW(b.validate(2, 3), DataError);
  b = single(Vector::Ones(3), 1, 0);
  EXPECT_THROW(b.validate(2, 3), DataError);
}
