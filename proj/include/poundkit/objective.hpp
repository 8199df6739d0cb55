#pragma once

// Balanced prompt-tuning objective on a surrogate vision-language model.
//
// A pair of learnable context matrices (real / fake) is concatenated with
// each fixed class token and mapped through a fixed linear "text encoder"
// followed by L2 normalization, giving per-class unit embeddings for both
// branches. Image embeddings are unit vectors shifted by a learnable visual
// offset and renormalized. On top of that chain sit three losses:
//
//   bce  class-agnostic binary cross-entropy against the mean real/fake
//        embeddings,
//   spm  semantic-preserving multiclass cross-entropy in both branches,
//   cab  class-aware binary cross-entropy inside every class pair,
//
// combined as bce + lambda1 * spm + lambda2 * cab. Gradients are analytic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "poundkit/error.hpp"
#include "poundkit/rng.hpp"

namespace poundkit::objective {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SpaceConfig {
  std::size_t dim = 16;          // embedding dimension d
  std::size_t token_dim = 8;     // token dimension
  std::size_t classes = 4;       // K
  std::size_t context_len = 4;   // M
  double logit_scale = 1.0;
  double clamp_eps = 1e-7;

  void validate() const {
    if (dim < 1 || token_dim < 1 || classes < 1 || context_len < 1)
      throw std::invalid_argument("space dimensions must be >= 1");
    if (!(logit_scale > 0.0) || !std::isfinite(logit_scale))
      throw std::invalid_argument("logit_scale must be positive");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw std::invalid_argument("clamp_eps must lie in (0, 0.5)");
  }

  std::size_t prompt_width() const { return (context_len + 1) * token_dim; }
};

// Learnable parameters. Also used as the container for their gradients.
struct ContextPair {
  Matrix v_real;    // M x d_tok
  Matrix v_fake;    // M x d_tok
  Vector v_vision;  // d

  static ContextPair zeros(const SpaceConfig& cfg) {
    return {Matrix::Zero(cfg.context_len, cfg.token_dim), Matrix::Zero(cfg.context_len, cfg.token_dim),
            Vector::Zero(cfg.dim)};
  }

  std::size_t size() const { return v_real.size() + v_fake.size() + v_vision.size(); }

  bool all_finite() const { return v_real.allFinite() && v_fake.allFinite() && v_vision.allFinite(); }

  ContextPair& operator+=(const ContextPair& o) {
    v_real += o.v_real;
    v_fake += o.v_fake;
    v_vision += o.v_vision;
    return *this;
  }
  ContextPair operator*(double k) const { return {v_real * k, v_fake * k, v_vision * k}; }
  ContextPair operator+(const ContextPair& o) const {
    ContextPair r = *this;
    r += o;
    return r;
  }

  // Flat layout: v_real (row-major), v_fake (row-major), v_vision.
  Vector flatten() const {
    Vector out(static_cast<Eigen::Index>(size()));
    Eigen::Index k = 0;
    for (const Matrix* m : {&v_real, &v_fake})
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) out(k++) = (*m)(r, c);
    for (Eigen::Index i = 0; i < v_vision.size(); ++i) out(k++) = v_vision(i);
    return out;
  }

  void assign(const Vector& flat) {
    if (static_cast<std::size_t>(flat.size()) != size()) throw std::invalid_argument("flat parameter size mismatch");
    Eigen::Index k = 0;
    for (Matrix* m : {&v_real, &v_fake})
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = flat(k++);
    for (Eigen::Index i = 0; i < v_vision.size(); ++i) v_vision(i) = flat(k++);
  }
};

struct ClassTokens {
  Matrix tokens;  // K x d_tok, unit rows
  std::vector<std::string> names;
};

// Fixed linear map from a flattened prompt [context rows; class token] to the
// embedding space. Never updated by training.
struct SurrogateTextEncoder {
  Matrix w;  // ((M+1) * d_tok) x d
};

struct PromptModel {
  SpaceConfig space;
  ClassTokens tokens;
  SurrogateTextEncoder encoder;
};

struct PromptEmbeddings {
  Matrix t_real;  // K x d, unit rows
  Matrix t_fake;  // K x d, unit rows
  Vector t_real_bar;
  Vector t_fake_bar;
};

struct Batch {
  Matrix images;  // N x d, unit rows
  std::vector<int> labels;
  std::vector<std::size_t> classes;

  std::size_t size() const { return labels.size(); }

  void validate(std::size_t num_classes, std::size_t dim) const {
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (images.rows() != n || classes.size() != labels.size())
      throw DataError("batch arrays have inconsistent lengths");
    if (n > 0 && static_cast<std::size_t>(images.cols()) != dim) throw DataError("batch embedding dimension mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (labels[i] != 0 && labels[i] != 1) throw DataError("label must be 0 or 1 (row " + std::to_string(i) + ")");
      if (classes[i] >= num_classes) throw DataError("class index out of range (row " + std::to_string(i) + ")");
      if (std::abs(images.row(i).norm() - 1.0) > 1e-9) throw DataError("image row not unit-norm (row " + std::to_string(i) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// Seeding

inline ClassTokens make_class_tokens(const SpaceConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kClassTokens);
  ClassTokens ct;
  ct.tokens.resize(cfg.classes, cfg.token_dim);
  fill_gaussian(ct.tokens, rng, 1.0);
  for (Eigen::Index k = 0; k < ct.tokens.rows(); ++k) {
    const double n = ct.tokens.row(k).norm();
    if (n == 0.0) throw Error("degenerate class token");
    ct.tokens.row(k) /= n;
    ct.names.push_back("class" + std::to_string(k));
  }
  return ct;
}

// Entries ~ N(0, sd) with sd = 1 / sqrt(fan_in), fan_in = (M+1) * d_tok.
inline SurrogateTextEncoder make_encoder(const SpaceConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kEncoder);
  SurrogateTextEncoder enc;
  enc.w.resize(cfg.prompt_width(), cfg.dim);
  fill_gaussian(enc.w, rng, 1.0 / std::sqrt(static_cast<double>(cfg.prompt_width())));
  return enc;
}

inline PromptModel make_model(const SpaceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return {cfg, make_class_tokens(cfg, seed), make_encoder(cfg, seed)};
}

inline ContextPair init_context(const SpaceConfig& cfg, std::uint64_t seed, double stddev = 0.02) {
  Rng rng = make_rng(seed, Stream::kContextInit);
  ContextPair ctx = ContextPair::zeros(cfg);
  fill_gaussian(ctx.v_real, rng, stddev);
  fill_gaussian(ctx.v_fake, rng, stddev);
  // The visual offset starts at zero: images enter unchanged.
  return ctx;
}

// ---------------------------------------------------------------------------
// Forward pieces

namespace detail {

inline void check_model(const PromptModel& model, const ContextPair& ctx) {
  const auto& s = model.space;
  if (static_cast<std::size_t>(ctx.v_real.rows()) != s.context_len ||
      static_cast<std::size_t>(ctx.v_real.cols()) != s.token_dim ||
      ctx.v_fake.rows() != ctx.v_real.rows() || ctx.v_fake.cols() != ctx.v_real.cols())
    throw std::invalid_argument("context shape does not match space config");
  if (static_cast<std::size_t>(ctx.v_vision.size()) != s.dim)
    throw std::invalid_argument("vision offset size does not match space config");
  if (static_cast<std::size_t>(model.tokens.tokens.rows()) != s.classes ||
      static_cast<std::size_t>(model.tokens.tokens.cols()) != s.token_dim)
    throw std::invalid_argument("class tokens shape does not match space config");
  if (static_cast<std::size_t>(model.encoder.w.rows()) != s.prompt_width() ||
      static_cast<std::size_t>(model.encoder.w.cols()) != s.dim)
    throw std::invalid_argument("encoder shape does not match space config");
}

// Unnormalized branch outputs u_c = W^T [vec(v); token_c], one row per class.
inline Matrix branch_outputs(const Matrix& v, const ClassTokens& tokens, const SurrogateTextEncoder& enc) {
  const Eigen::Index ctx_width = v.size();
  const Eigen::Index d_tok = tokens.tokens.cols();
  Vector flat(ctx_width);
  for (Eigen::Index r = 0, k = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c) flat(k++) = v(r, c);
  const Vector shared = enc.w.topRows(ctx_width).transpose() * flat;
  Matrix u = tokens.tokens * enc.w.bottomRows(d_tok);
  u.rowwise() += shared.transpose();
  return u;
}

inline Vector row_norms_or_throw(const Matrix& m, const char* what) {
  Vector n = m.rowwise().norm();
  for (Eigen::Index i = 0; i < n.size(); ++i)
    if (!(n(i) > 0.0) || !std::isfinite(n(i))) throw Error(what);
  return n;
}

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Clamped binary cross-entropy of probability sigmoid(logit) against y, and
// its derivative with respect to the logit (zero where the clamp is active).
struct BinaryTerm {
  double loss;
  double dlogit;
};

inline BinaryTerm clamped_bce(double logit, int y, double eps) {
  const double p = sigmoid(logit);
  if (p < eps || p > 1.0 - eps) {
    const double pc = std::clamp(p, eps, 1.0 - eps);
    return {-(y ? std::log(pc) : std::log1p(-pc)), 0.0};
  }
  // log p and log(1-p) from the logit keep full precision near the clamp.
  const double loss = y ? -log_sigmoid(logit) : -log_sigmoid(-logit);
  return {loss, p - static_cast<double>(y)};
}

// log-softmax of scale * rows * x at index target, plus the full softmax.
inline double log_softmax_at(const Vector& logits, std::size_t target, Vector* probs) {
  const double mx = logits.maxCoeff();
  const Vector e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  if (probs) *probs = e / z;
  return logits(static_cast<Eigen::Index>(target)) - mx - std::log(z);
}

}  // namespace detail

inline PromptEmbeddings embeddings_from_rows(Matrix t_real, Matrix t_fake) {
  PromptEmbeddings emb;
  emb.t_real_bar = t_real.colwise().mean().transpose();
  emb.t_fake_bar = t_fake.colwise().mean().transpose();
  emb.t_real = std::move(t_real);
  emb.t_fake = std::move(t_fake);
  return emb;
}

inline PromptEmbeddings encode_prompts(const ContextPair& ctx, const ClassTokens& tokens,
                                       const SurrogateTextEncoder& enc) {
  if (ctx.v_real.cols() != tokens.tokens.cols() || ctx.v_fake.cols() != tokens.tokens.cols() ||
      enc.w.rows() != ctx.v_real.size() + tokens.tokens.cols() || ctx.v_fake.size() != ctx.v_real.size())
    throw std::invalid_argument("prompt dimensions inconsistent with encoder");
  Matrix u_real = detail::branch_outputs(ctx.v_real, tokens, enc);
  Matrix u_fake = detail::branch_outputs(ctx.v_fake, tokens, enc);
  const Vector n_real = detail::row_norms_or_throw(u_real, "degenerate encoding");
  const Vector n_fake = detail::row_norms_or_throw(u_fake, "degenerate encoding");
  u_real.array().colwise() /= n_real.array();
  u_fake.array().colwise() /= n_fake.array();
  return embeddings_from_rows(std::move(u_real), std::move(u_fake));
}

inline PromptEmbeddings encode_prompts(const PromptModel& model, const ContextPair& ctx) {
  return encode_prompts(ctx, model.tokens, model.encoder);
}

// Rows (I_i + v_vision) renormalized to unit length.
inline Matrix apply_vision_prompt(const Matrix& images, const Vector& v_vision) {
  if (images.cols() != v_vision.size()) throw std::invalid_argument("vision offset dimension mismatch");
  Matrix z = images;
  z.rowwise() += v_vision.transpose();
  const Vector n = detail::row_norms_or_throw(z, "degenerate image embedding");
  z.array().colwise() /= n.array();
  return z;
}

// softmax_k(scale * <t_k, i>) over the K rows of t_rows.
inline Vector class_posterior(const Vector& i_vec, const Matrix& t_rows, double scale) {
  const Vector logits = scale * (t_rows * i_vec);
  Vector probs;
  detail::log_softmax_at(logits, 0, &probs);
  return probs;
}

inline double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error("cosine of zero vector");
  return a.dot(b) / (na * nb);
}

// exp(s cos_f) / (exp(s cos_f) + exp(s cos_r)).
inline double p_fake(const Vector& i_vec, const Vector& t_fake_ref, const Vector& t_real_ref, double scale) {
  if (!(t_fake_ref.norm() > 0.0) || !(t_real_ref.norm() > 0.0)) throw Error("zero reference embedding");
  return detail::sigmoid(scale * (cosine(i_vec, t_fake_ref) - cosine(i_vec, t_real_ref)));
}

// ---------------------------------------------------------------------------
// Losses. `batch.images` must already be in the prompted image space.

inline double loss_bce(const Batch& batch, const PromptEmbeddings& emb, double scale, double eps) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  const Vector a_f = emb.t_fake_bar / emb.t_fake_bar.norm();
  const Vector a_r = emb.t_real_bar / emb.t_real_bar.norm();
  if (!a_f.allFinite() || !a_r.allFinite()) throw Error("zero reference embedding");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = batch.images.row(static_cast<Eigen::Index>(i));
    total += detail::clamped_bce(scale * (row.dot(a_f) - row.dot(a_r)), batch.labels[i], eps).loss;
  }
  return total / static_cast<double>(batch.size());
}

inline double loss_spm(const Batch& batch, const PromptEmbeddings& emb, double scale) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector img = batch.images.row(static_cast<Eigen::Index>(i)).transpose();
    for (const Matrix* rows : {&emb.t_fake, &emb.t_real}) {
      const Vector logits = scale * ((*rows) * img);
      total -= detail::log_softmax_at(logits, batch.classes[i], nullptr);
    }
  }
  return total / static_cast<double>(batch.size());
}

inline double loss_cab(const Batch& batch, const PromptEmbeddings& emb, double scale, double eps) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  double total = 0.0;
  const Matrix diff = emb.t_fake - emb.t_real;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector logits = scale * (diff * batch.images.row(static_cast<Eigen::Index>(i)).transpose());
    for (Eigen::Index c = 0; c < logits.size(); ++c)
      total += detail::clamped_bce(logits(c), batch.labels[i], eps).loss;
  }
  return total / static_cast<double>(batch.size());
}

struct LossTerms {
  double bce = 0.0;
  double spm = 0.0;
  double cab = 0.0;
};

struct LossValue {
  double total = 0.0;
  LossTerms terms;
};

inline void check_lambdas(double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
}

inline double combine(const LossTerms& t, double lambda1, double lambda2) {
  check_lambdas(lambda1, lambda2);
  return t.bce + lambda1 * t.spm + lambda2 * t.cab;
}

inline LossTerms loss_terms(const Batch& prompted, const PromptEmbeddings& emb, double scale, double eps) {
  return {loss_bce(prompted, emb, scale, eps), loss_spm(prompted, emb, scale), loss_cab(prompted, emb, scale, eps)};
}

inline LossValue total_loss(const Batch& batch, const PromptModel& model, const ContextPair& ctx, double lambda1,
                            double lambda2) {
  check_lambdas(lambda1, lambda2);
  detail::check_model(model, ctx);
  Batch prompted{apply_vision_prompt(batch.images, ctx.v_vision), batch.labels, batch.classes};
  const auto emb = encode_prompts(model, ctx);
  const auto terms = loss_terms(prompted, emb, model.space.logit_scale, model.space.clamp_eps);
  return {combine(terms, lambda1, lambda2), terms};
}

// ---------------------------------------------------------------------------
// Analytic gradients

struct LossGradients {
  LossValue value;
  ContextPair bce;
  ContextPair spm;
  ContextPair cab;
  ContextPair total;  // bce + lambda1 * spm + lambda2 * cab
};

namespace detail {

// Upstream gradients of one loss term with respect to the normalized class
// rows of each branch and the prompted image rows.
struct Upstream {
  Matrix d_real;    // K x d
  Matrix d_fake;    // K x d
  Matrix d_images;  // N x d

  Upstream(Eigen::Index k, Eigen::Index d, Eigen::Index n)
      : d_real(Matrix::Zero(k, d)), d_fake(Matrix::Zero(k, d)), d_images(Matrix::Zero(n, d)) {}
};

// d/du of u/|u| applied to g: (g - (g.t) t) / |u|, row-wise.
inline Matrix through_normalize(const Matrix& g, const Matrix& t, const Vector& norms) {
  const Vector proj = (g.array() * t.array()).rowwise().sum();
  Matrix out = g - (t.array().colwise() * proj.array()).matrix();
  out.array().colwise() /= norms.array();
  return out;
}

}  // namespace detail

inline LossGradients gradients(const Batch& batch, const PromptModel& model, const ContextPair& ctx, double lambda1,
                               double lambda2) {
  check_lambdas(lambda1, lambda2);
  detail::check_model(model, ctx);
  if (batch.size() == 0) throw std::invalid_argument("empty batch");

  const double s = model.space.logit_scale;
  const double eps = model.space.clamp_eps;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto k = static_cast<Eigen::Index>(model.space.classes);
  const auto d = static_cast<Eigen::Index>(model.space.dim);
  const double inv_n = 1.0 / static_cast<double>(n);

  // Forward, keeping pre-normalization norms.
  Matrix u_real = detail::branch_outputs(ctx.v_real, model.tokens, model.encoder);
  Matrix u_fake = detail::branch_outputs(ctx.v_fake, model.tokens, model.encoder);
  const Vector nu_real = detail::row_norms_or_throw(u_real, "degenerate encoding");
  const Vector nu_fake = detail::row_norms_or_throw(u_fake, "degenerate encoding");
  u_real.array().colwise() /= nu_real.array();
  u_fake.array().colwise() /= nu_fake.array();
  const PromptEmbeddings emb = embeddings_from_rows(std::move(u_real), std::move(u_fake));

  Matrix z = batch.images;
  z.rowwise() += ctx.v_vision.transpose();
  const Vector nz = detail::row_norms_or_throw(z, "degenerate image embedding");
  const Matrix img = (z.array().colwise() / nz.array()).matrix();

  LossValue value;
  detail::Upstream up_bce(k, d, n), up_spm(k, d, n), up_cab(k, d, n);

  // bce: logit_i = s (<a_f, J_i> - <a_r, J_i>), a = t_bar / |t_bar|.
  {
    const double nf = emb.t_fake_bar.norm(), nr = emb.t_real_bar.norm();
    if (!(nf > 0.0) || !(nr > 0.0)) throw Error("zero reference embedding");
    const Vector a_f = emb.t_fake_bar / nf;
    const Vector a_r = emb.t_real_bar / nr;
    Vector g_af = Vector::Zero(d), g_ar = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = img.row(i);
      const auto term = detail::clamped_bce(s * (row.dot(a_f) - row.dot(a_r)), batch.labels[i], eps);
      value.terms.bce += term.loss;
      const double g = s * term.dlogit * inv_n;
      up_bce.d_images.row(i) += g * (a_f - a_r).transpose();
      g_af += g * row.transpose();
      g_ar -= g * row.transpose();
    }
    value.terms.bce *= inv_n;
    // Through a = t_bar/|t_bar|, then t_bar = mean of rows.
    const Vector g_bar_f = (g_af - a_f * a_f.dot(g_af)) / nf;
    const Vector g_bar_r = (g_ar - a_r * a_r.dot(g_ar)) / nr;
    up_bce.d_fake.rowwise() += g_bar_f.transpose() / static_cast<double>(k);
    up_bce.d_real.rowwise() += g_bar_r.transpose() / static_cast<double>(k);
  }

  // spm: -log softmax(s T_X J_i)[c_i] for X in {fake, real}.
  {
    Vector probs;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector row = img.row(i).transpose();
      const std::size_t target = batch.classes[static_cast<std::size_t>(i)];
      for (int branch = 0; branch < 2; ++branch) {
        const Matrix& rows = branch == 0 ? emb.t_fake : emb.t_real;
        Matrix& d_rows = branch == 0 ? up_spm.d_fake : up_spm.d_real;
        const Vector logits = s * (rows * row);
        value.terms.spm -= detail::log_softmax_at(logits, target, &probs);
        Vector g = probs;
        g(static_cast<Eigen::Index>(target)) -= 1.0;
        g *= s * inv_n;
        d_rows += g * row.transpose();
        up_spm.d_images.row(i) += (rows.transpose() * g).transpose();
      }
    }
    value.terms.spm *= inv_n;
  }

  // cab: per class c, logit = s <t_fake[c] - t_real[c], J_i>.
  {
    const Matrix diff = emb.t_fake - emb.t_real;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector row = img.row(i).transpose();
      const Vector logits = s * (diff * row);
      for (Eigen::Index c = 0; c < k; ++c) {
        const auto term = detail::clamped_bce(logits(c), batch.labels[static_cast<std::size_t>(i)], eps);
        value.terms.cab += term.loss;
        const double g = s * term.dlogit * inv_n;
        if (g == 0.0) continue;
        up_cab.d_fake.row(c) += g * row.transpose();
        up_cab.d_real.row(c) -= g * row.transpose();
        up_cab.d_images.row(i) += g * diff.row(c);
      }
    }
    value.terms.cab *= inv_n;
  }
  value.total = combine(value.terms, lambda1, lambda2);

  // Backprop one term's upstream gradients down to the parameters.
  const Eigen::Index ctx_width = ctx.v_real.size();
  const auto to_params = [&](const detail::Upstream& up) {
    ContextPair g = ContextPair::zeros(model.space);
    for (int branch = 0; branch < 2; ++branch) {
      const Matrix& t = branch == 0 ? emb.t_fake : emb.t_real;
      const Vector& norms = branch == 0 ? nu_fake : nu_real;
      const Matrix du = detail::through_normalize(branch == 0 ? up.d_fake : up.d_real, t, norms);
      const Vector d_flat = model.encoder.w.topRows(ctx_width) * du.colwise().sum().transpose();
      Matrix& out = branch == 0 ? g.v_fake : g.v_real;
      for (Eigen::Index r = 0, idx = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = d_flat(idx++);
    }
    g.v_vision = detail::through_normalize(up.d_images, img, nz).colwise().sum().transpose();
    return g;
  };

  LossGradients out{value, to_params(up_bce), to_params(up_spm), to_params(up_cab), {}};
  out.total = out.bce + out.spm * lambda1 + out.cab * lambda2;
  return out;
}

// ---------------------------------------------------------------------------
// Inference

struct MeanMode {};
struct ClassMode {
  std::size_t class_index = 0;
};
using InferenceMode = std::variant<MeanMode, ClassMode>;

enum class Branch { kReal, kFake };

inline double infer_deepfake(const Vector& i_vec, const PromptEmbeddings& emb, const InferenceMode& mode,
                             double scale) {
  if (const auto* cm = std::get_if<ClassMode>(&mode)) {
    if (cm->class_index >= static_cast<std::size_t>(emb.t_fake.rows())) throw std::out_of_range("invalid class index");
    const auto c = static_cast<Eigen::Index>(cm->class_index);
    return p_fake(i_vec, emb.t_fake.row(c).transpose(), emb.t_real.row(c).transpose(), scale);
  }
  return p_fake(i_vec, emb.t_fake_bar, emb.t_real_bar, scale);
}

// Argmax of the branch's class posterior; ties go to the lowest index.
inline std::size_t infer_class(const Vector& i_vec, const PromptEmbeddings& emb, Branch branch, double scale) {
  const Vector probs = class_posterior(i_vec, branch == Branch::kReal ? emb.t_real : emb.t_fake, scale);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < probs.size(); ++c)
    if (probs(c) > probs(best)) best = c;
  return static_cast<std::size_t>(best);
}

// Fake probabilities for every row of a batch through the full model
// (vision prompt applied). Class mode uses each row's own class index.
inline std::vector<double> predict_fake(const PromptModel& model, const ContextPair& ctx, const Batch& batch,
                                        bool class_conditioned = false) {
  detail::check_model(model, ctx);
  const Matrix img = apply_vision_prompt(batch.images, ctx.v_vision);
  const auto emb = encode_prompts(model, ctx);
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector row = img.row(static_cast<Eigen::Index>(i)).transpose();
    const InferenceMode mode = class_conditioned ? InferenceMode{ClassMode{batch.classes[i]}} : InferenceMode{MeanMode{}};
    out[i] = infer_deepfake(row, emb, mode, model.space.logit_scale);
  }
  return out;
}

}  // namespace poundkit::objective
