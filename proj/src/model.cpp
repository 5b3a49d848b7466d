// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#include "zofc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace zofc {

// ---------------------------------------------------------------------------
// ParamVector

void ParamVector::add_segment(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& s : segments_) {
    if (s.name == name) throw ConfigError("ParamVector: duplicate segment '" + name + "'");
  }
  segments_.push_back({std::move(name), values_.size(), rows, cols});
  values_.resize(values_.size() + rows * cols, 0.0);
}

void ParamVector::grow_last_segment(std::size_t rows) {
  if (segments_.empty()) throw ConfigError("ParamVector: no segment to grow");
  auto& last = segments_.back();
  last.rows += rows;
  values_.resize(values_.size() + rows * last.cols, 0.0);
}

const ParamSegment& ParamVector::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw ConfigError("ParamVector: unknown segment '" + std::string(name) + "'");
}

std::span<double> ParamVector::segment_values(std::string_view name) {
  const auto& s = segment(name);
  return values_.span().subspan(s.offset, s.size());
}

std::span<const double> ParamVector::segment_values(std::string_view name) const {
  const auto& s = segment(name);
  return values_.span().subspan(s.offset, s.size());
}

// ---------------------------------------------------------------------------
// Backbone

std::string_view to_string(BackboneVariant v) noexcept {
  return v == BackboneVariant::identity ? "identity" : "random-affine-stack";
}

BackboneVariant backbone_variant_from_string(std::string_view s) {
  if (s == "identity") return BackboneVariant::identity;
  if (s == "random-affine-stack") return BackboneVariant::random_affine_stack;
  throw ConfigError("unknown backbone variant '" + std::string(s) + "'");
}

FrozenBackbone FrozenBackbone::identity(std::size_t dim) {
  if (dim == 0) throw DimensionError("FrozenBackbone: input width must be >= 1");
  FrozenBackbone b;
  b.variant_ = BackboneVariant::identity;
  b.input_dim_ = dim;
  return b;
}

FrozenBackbone FrozenBackbone::random_affine_stack(std::size_t input_dim,
                                                   std::vector<std::size_t> widths,
                                                   std::uint64_t seed) {
  if (input_dim == 0) throw DimensionError("FrozenBackbone: input width must be >= 1");
  FrozenBackbone b;
  b.variant_ = BackboneVariant::random_affine_stack;
  b.input_dim_ = input_dim;
  b.widths_ = std::move(widths);
  b.seed_ = seed;
  RngStream stream("backbone", seed);
  std::size_t in = input_dim;
  for (std::size_t out : b.widths_) {
    if (out == 0) throw DimensionError("FrozenBackbone: layer width must be >= 1");
    Layer layer{Matrix(out, in), Vector(out)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight.flat()) w = scale * stream.next_gaussian();
    for (double& v : layer.bias) v = 0.1 * stream.next_gaussian();
    b.layers_.push_back(std::move(layer));
    in = out;
  }
  return b;
}

std::size_t FrozenBackbone::output_dim() const noexcept {
  return widths_.empty() ? input_dim_ : widths_.back();
}

Vector FrozenBackbone::forward(std::span<const double> x) const {
  require_same_size(x.size(), input_dim_, "backbone_forward input");
  Vector h(x);
  for (const auto& layer : layers_) {
    Vector next = matvec(layer.weight, h);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::tanh(next[i] + layer.bias[i]);
    h = std::move(next);
  }
  return h;
}

Matrix FrozenBackbone::forward_batch(const Matrix& x) const {
  require_same_size(x.cols(), input_dim_, "backbone_forward input");
  Matrix out(x.rows(), output_dim());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Vector h = forward(x.row(r));
    std::copy(h.begin(), h.end(), out.row(r).begin());
  }
  return out;
}

Vector backbone_forward(std::span<const double> x, const FrozenBackbone& backbone) {
  return backbone.forward(x);
}

// ---------------------------------------------------------------------------
// Adapter

Adapter::Adapter(std::size_t dim, std::size_t rank) : dim_(dim), rank_(rank) {
  if (dim == 0) throw DimensionError("Adapter: dim must be >= 1");
  params_.add_segment("W_down", rank, dim);
  params_.add_segment("W_up", dim, rank);
}

void Adapter::init_lora(RngStream& stream, double scale) {
  auto down = params_.segment_values("W_down");
  const double s = scale / std::sqrt(static_cast<double>(dim_));
  for (double& w : down) w = s * stream.next_gaussian();
  auto up = params_.segment_values("W_up");
  std::fill(up.begin(), up.end(), 0.0);
}

void adapter_forward_into(const AdapterView& a, std::span<const double> h, std::span<double> out,
                          std::span<double> mid) {
  require_same_size(h.size(), a.dim, "adapter_forward");
  require_same_size(out.size(), a.dim, "adapter_forward output");
  require_same_size(a.params.size(), a.param_count(), "adapter_forward parameters");
  std::copy(h.begin(), h.end(), out.begin());
  if (a.rank == 0) return;
  require_same_size(mid.size(), a.rank, "adapter_forward bottleneck");
  const double* down = a.params.data();
  const double* up = down + a.rank * a.dim;
  for (std::size_t k = 0; k < a.rank; ++k) {
    double acc = 0.0;
    const double* row = down + k * a.dim;
    for (std::size_t j = 0; j < a.dim; ++j) acc += row[j] * h[j];
    mid[k] = acc;
  }
  for (std::size_t i = 0; i < a.dim; ++i) {
    const double* row = up + i * a.rank;
    double acc = 0.0;
    for (std::size_t k = 0; k < a.rank; ++k) acc += row[k] * mid[k];
    out[i] += acc;
  }
}

Vector adapter_forward(std::span<const double> h, const AdapterView& adapter) {
  Vector out(adapter.dim);
  Vector mid(adapter.rank);
  adapter_forward_into(adapter, h, out.span(), mid.span());
  return out;
}

Vector adapter_forward(std::span<const double> h, const Adapter& adapter) {
  return adapter_forward(h, adapter.view());
}

// ---------------------------------------------------------------------------
// Heads

std::string_view to_string(HeadFamily f) noexcept {
  switch (f) {
    case HeadFamily::prototype: return "prototype";
    case HeadFamily::linear: return "linear";
    case HeadFamily::cosine: return "cosine";
  }
  return "?";
}

HeadFamily head_family_from_string(std::string_view s) {
  if (s == "prototype") return HeadFamily::prototype;
  if (s == "linear") return HeadFamily::linear;
  if (s == "cosine") return HeadFamily::cosine;
  throw ConfigError("unknown head family '" + std::string(s) + "'");
}

ClassifierHead::ClassifierHead(HeadFamily family, std::size_t dim, double cosine_scale)
    : family_(family), dim_(dim), cosine_scale_(cosine_scale), centroids_(0, dim) {
  if (dim == 0) throw DimensionError("ClassifierHead: dim must be >= 1");
  if (!(cosine_scale > 0.0)) throw ConfigError("ClassifierHead: cosine scale must be positive");
  params_.add_segment("W", 0, dim);
}

void ClassifierHead::register_classes(std::span<const int> ids, RngStream& init) {
  for (int id : ids) {
    if (id < 0) throw ConfigError("ClassifierHead: class ids must be non-negative");
    if (has_class(id)) throw ConfigError("ClassifierHead: class " + std::to_string(id) +
                                         " is already registered");
    class_ids_.push_back(id);
    params_.grow_last_segment(1);
    auto w = params_.values().span().last(dim_);
    if (family_ == HeadFamily::cosine) {
      for (double& x : w) x = 0.01 * init.next_gaussian();
    }
    centroids_.append_row(Vector(dim_).span());
    centroid_built_.push_back(0);
  }
}

bool ClassifierHead::has_class(int id) const noexcept {
  return std::find(class_ids_.begin(), class_ids_.end(), id) != class_ids_.end();
}

std::size_t ClassifierHead::row_of(int id) const {
  const auto it = std::find(class_ids_.begin(), class_ids_.end(), id);
  if (it == class_ids_.end()) {
    throw ConfigError("ClassifierHead: class " + std::to_string(id) + " is not registered");
  }
  return static_cast<std::size_t>(it - class_ids_.begin());
}

HeadView ClassifierHead::view() const noexcept {
  return {family_, dim_, class_ids_.size(), cosine_scale_, params_.values().span()};
}

void ClassifierHead::set_centroid(std::size_t row, std::span<const double> c) {
  require_same_size(c.size(), dim_, "set_centroid");
  auto dst = centroids_.row(row);
  std::copy(c.begin(), c.end(), dst.begin());
  centroid_built_.at(row) = 1;
}

void head_scores_into(std::span<const double> h, const HeadView& head, std::span<double> out) {
  if (head.family == HeadFamily::prototype) {
    throw ConfigError("head_scores: prototype heads have no scores, use prototype_predict");
  }
  if (head.classes == 0) throw ConfigError("head_scores: no classes registered");
  require_same_size(h.size(), head.dim, "head_scores feature");
  require_same_size(head.weights.size(), head.classes * head.dim, "head_scores weights");
  require_same_size(out.size(), head.classes, "head_scores output");
  double h_norm = 1.0;
  if (head.family == HeadFamily::cosine) {
    h_norm = norm2(h);
    if (h_norm == 0.0) throw NumericError("head_scores: zero-norm feature under cosine head");
  }
  for (std::size_t c = 0; c < head.classes; ++c) {
    const auto w = head.weights.subspan(c * head.dim, head.dim);
    const double s = dot(w, h);
    if (head.family == HeadFamily::linear) {
      out[c] = s;
    } else {
      const double w_norm = norm2(w);
      if (w_norm == 0.0) {
        throw NumericError("head_scores: zero-norm weight row " + std::to_string(c) +
                           " under cosine head");
      }
      out[c] = head.cosine_scale * s / (w_norm * h_norm);
    }
  }
}

Vector head_scores(std::span<const double> h, const HeadView& head) {
  Vector out(head.classes);
  head_scores_into(h, head, out.span());
  return out;
}

Vector head_scores(std::span<const double> h, const ClassifierHead& head) {
  return head_scores(h, head.view());
}

int prototype_predict(std::span<const double> h, const ClassifierHead& head) {
  require_same_size(h.size(), head.dim(), "prototype_predict");
  int best_id = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < head.num_classes(); ++r) {
    if (!head.centroid_built(r)) continue;
    const auto c = head.centroids().row(r);
    double d = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) d += (h[j] - c[j]) * (h[j] - c[j]);
    const int id = head.class_ids()[r];
    if (d < best || (d == best && id < best_id)) {
      best = d;
      best_id = id;
    }
  }
  if (best_id < 0) throw ConfigError("prototype_predict: centroid table is empty");
  return best_id;
}

int argmax_predict(std::span<const double> scores, std::span<const int> class_ids) {
  require_same_size(scores.size(), class_ids.size(), "argmax_predict");
  if (scores.empty()) throw ConfigError("argmax_predict: no classes");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best] || (scores[c] == scores[best] && class_ids[c] < class_ids[best])) {
      best = c;
    }
  }
  return class_ids[best];
}

void build_prototypes(const Matrix& features, std::span<const int> labels,
                      std::span<const int> classes, ClassifierHead& head) {
  require_same_size(features.rows(), labels.size(), "build_prototypes labels");
  require_same_size(features.cols(), head.dim(), "build_prototypes features");
  for (int id : classes) {
    const std::size_t row = head.row_of(id);
    Vector sum(head.dim());
    std::size_t count = 0;
    for (std::size_t r = 0; r < features.rows(); ++r) {
      if (labels[r] != id) continue;
      axpy(1.0, features.row(r), sum.span());
      ++count;
    }
    if (count == 0) {
      throw DataError(DataErrorKind::inconsistent,
                      "build_prototypes: class " + std::to_string(id) + " has no examples");
    }
    sum *= 1.0 / static_cast<double>(count);
    head.set_centroid(row, sum.span());
  }
}

LossValue cross_entropy(std::span<const double> scores, std::size_t target,
                        bool keep_probabilities) {
  if (target >= scores.size()) throw DimensionError("cross_entropy: target out of range");
  check_finite(scores, "cross_entropy scores");
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  const double lse = m + std::log(z);
  LossValue out;
  out.value = lse - scores[target];
  if (keep_probabilities) {
    out.probabilities = Vector(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out.probabilities[i] = std::exp(scores[i] - lse);
  }
  return out;
}

namespace {

/// dL/ds for one example: softmax(s) - onehot(target). Returns the loss.
double score_gradient(std::span<const double> h, std::size_t target, const HeadView& head,
                      Vector& scores, Vector& g) {
  head_scores_into(h, head, scores.span());
  LossValue lv = cross_entropy(scores, target, true);
  g = std::move(lv.probabilities);
  g[target] -= 1.0;
  return lv.value;
}

void accumulate_head_grad(std::span<const double> h, const Vector& g, const HeadView& head,
                          double weight, std::span<double> grad) {
  const std::size_t d = head.dim;
  if (head.family == HeadFamily::linear) {
    for (std::size_t c = 0; c < head.classes; ++c) {
      axpy(weight * g[c], h, grad.subspan(c * d, d));
    }
    return;
  }
  const double h_norm = norm2(h);
  for (std::size_t c = 0; c < head.classes; ++c) {
    const auto w = head.weights.subspan(c * d, d);
    const double w_norm = norm2(w);
    const double wh = dot(w, h);
    // d/dw [a w.h / (|w||h|)] = a/(|w||h|) (h - (w.h)/|w|^2 w)
    const double k = weight * g[c] * head.cosine_scale / (w_norm * h_norm);
    const double kw = k * wh / (w_norm * w_norm);
    auto out = grad.subspan(c * d, d);
    for (std::size_t j = 0; j < d; ++j) out[j] += k * h[j] - kw * w[j];
  }
}

void input_grad_from_scores(std::span<const double> h, const Vector& g, const HeadView& head,
                            std::span<double> grad_h) {
  const std::size_t d = head.dim;
  std::fill(grad_h.begin(), grad_h.end(), 0.0);
  if (head.family == HeadFamily::linear) {
    for (std::size_t c = 0; c < head.classes; ++c) axpy(g[c], head.weights.subspan(c * d, d), grad_h);
    return;
  }
  const double h_norm = norm2(h);
  for (std::size_t c = 0; c < head.classes; ++c) {
    const auto w = head.weights.subspan(c * d, d);
    const double w_norm = norm2(w);
    const double wh = dot(w, h);
    // d/dh [a w.h / (|w||h|)] = a/(|w||h|) (w - (w.h)/|h|^2 h)
    const double k = g[c] * head.cosine_scale / (w_norm * h_norm);
    const double kh = k * wh / (h_norm * h_norm);
    for (std::size_t j = 0; j < d; ++j) grad_h[j] += k * w[j] - kh * h[j];
  }
}

void require_learnable(const HeadView& head, std::string_view what) {
  if (head.family == HeadFamily::prototype) {
    throw ConfigError(std::string(what) + ": prototype heads are not learnable");
  }
}

}  // namespace

Vector head_gradient(const Matrix& features, std::span<const std::size_t> targets,
                     const HeadView& head) {
  require_learnable(head, "head_gradient");
  require_same_size(features.rows(), targets.size(), "head_gradient targets");
  if (features.rows() == 0) throw DimensionError("head_gradient: empty batch");
  Vector grad(head.weights.size());
  Vector scores(head.classes);
  Vector g;
  const double inv_n = 1.0 / static_cast<double>(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    score_gradient(features.row(r), targets[r], head, scores, g);
    accumulate_head_grad(features.row(r), g, head, inv_n, grad.span());
  }
  return grad;
}

void head_input_gradient(std::span<const double> h, std::size_t target, const HeadView& head,
                         std::span<double> grad_h) {
  require_learnable(head, "head_input_gradient");
  require_same_size(grad_h.size(), head.dim, "head_input_gradient");
  Vector scores(head.classes);
  Vector g;
  score_gradient(h, target, head, scores, g);
  input_grad_from_scores(h, g, head, grad_h);
}

LossGradients loss_and_gradients(const Matrix& backbone_features,
                                 std::span<const std::size_t> rows,
                                 std::span<const std::size_t> targets,
                                 const AdapterView& adapter, const HeadView& head,
                                 bool want_head, bool want_adapter) {
  require_learnable(head, "loss_and_gradients");
  require_same_size(rows.size(), targets.size(), "loss_and_gradients targets");
  if (rows.empty()) throw DimensionError("loss_and_gradients: empty batch");
  const std::size_t d = head.dim;
  require_same_size(adapter.dim, d, "loss_and_gradients adapter/head width");

  LossGradients out;
  if (want_head) out.head = Vector(head.weights.size());
  if (want_adapter) out.adapter = Vector(adapter.param_count());

  Vector z(d), mid(adapter.rank), scores(head.classes), g, gz(d), up_t_gz(adapter.rank);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto h = backbone_features.row(rows[k]);
    adapter_forward_into(adapter, h, z.span(), mid.span());
    total += score_gradient(z, targets[k], head, scores, g);
    if (want_head) accumulate_head_grad(z, g, head, inv_n, out.head.span());
    if (want_adapter && adapter.rank > 0) {
      input_grad_from_scores(z, g, head, gz.span());
      const std::size_t r = adapter.rank;
      auto grad_down = out.adapter.span().first(r * d);
      auto grad_up = out.adapter.span().subspan(r * d, d * r);
      const auto up = adapter.params.subspan(r * d, d * r);
      // dL/dW_up = gz mid^T ; dL/dW_down = (W_up^T gz) h^T
      std::fill(up_t_gz.begin(), up_t_gz.end(), 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t q = 0; q < r; ++q) {
          grad_up[i * r + q] += inv_n * gz[i] * mid[q];
          up_t_gz[q] += up[i * r + q] * gz[i];
        }
      }
      for (std::size_t q = 0; q < r; ++q) {
        axpy(inv_n * up_t_gz[q], h, grad_down.subspan(q * d, d));
      }
    }
  }
  out.loss = total * inv_n;
  return out;
}

}  // namespace zofc
