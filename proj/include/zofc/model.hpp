// Copyright 2026 The ZOFC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zofc/numerics.hpp"
#include "zofc/rng.hpp"

namespace zofc {

// ---------------------------------------------------------------------------
// Flat parameter storage

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

/// Trainable scalars of one component, with a named row-major segment layout.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a zero-filled rows x cols segment.
  void add_segment(std::string name, std::size_t rows, std::size_t cols);
  /// Grows the last segment by `rows` zero rows.
  void grow_last_segment(std::size_t rows);

  const ParamSegment& segment(std::string_view name) const;
  std::span<double> segment_values(std::string_view name);
  std::span<const double> segment_values(std::string_view name) const;
  const std::vector<ParamSegment>& segments() const noexcept { return segments_; }

  std::size_t size() const noexcept { return values_.size(); }
  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  Vector values_;
  std::vector<ParamSegment> segments_;
};

// ---------------------------------------------------------------------------
// Frozen backbone

enum class BackboneVariant { identity, random_affine_stack };

std::string_view to_string(BackboneVariant v) noexcept;
BackboneVariant backbone_variant_from_string(std::string_view s);

/// Fixed feature extractor: a stack of tanh(W x + b) layers whose weights are
/// generated once from a seed and never change.
class FrozenBackbone {
 public:
  static FrozenBackbone identity(std::size_t dim);
  /// `widths` are the output widths of each layer; an empty list behaves as
  /// the identity on `input_dim`.
  static FrozenBackbone random_affine_stack(std::size_t input_dim,
                                            std::vector<std::size_t> widths,
                                            std::uint64_t seed);

  BackboneVariant variant() const noexcept { return variant_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept;
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Vector forward(std::span<const double> x) const;
  /// Row-wise forward; used to cache features once per dataset.
  Matrix forward_batch(const Matrix& x) const;

 private:
  struct Layer {
    Matrix weight;
    Vector bias;
  };

  BackboneVariant variant_ = BackboneVariant::identity;
  std::size_t input_dim_ = 0;
  std::vector<std::size_t> widths_;
  std::uint64_t seed_ = 0;
  std::vector<Layer> layers_;
};

Vector backbone_forward(std::span<const double> x, const FrozenBackbone& backbone);

// ---------------------------------------------------------------------------
// Bottleneck adapter: z = h + W_up (W_down h)

/// Non-owning view of adapter parameters laid out as W_down (rank x dim)
/// followed by W_up (dim x rank). rank == 0 means "no adapter".
struct AdapterView {
  std::size_t dim = 0;
  std::size_t rank = 0;
  std::span<const double> params;

  std::size_t param_count() const noexcept { return 2 * dim * rank; }
};

class Adapter {
 public:
  Adapter() = default;
  /// All parameters zero, i.e. the identity map.
  Adapter(std::size_t dim, std::size_t rank);

  /// LoRA-style start: W_down ~ N(0, scale^2 / dim), W_up = 0. The map stays
  /// the identity but first-order gradients on W_up are non-zero.
  void init_lora(RngStream& stream, double scale = 1.0);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rank() const noexcept { return rank_; }
  ParamVector& params() noexcept { return params_; }
  const ParamVector& params() const noexcept { return params_; }
  AdapterView view() const noexcept { return {dim_, rank_, params_.values().span()}; }

  friend bool operator==(const Adapter&, const Adapter&) = default;

 private:
  std::size_t dim_ = 0;
  std::size_t rank_ = 0;
  ParamVector params_;
};

/// Writes the adapted feature into `out`; `mid` receives W_down h and must
/// hold `rank` entries.
void adapter_forward_into(const AdapterView& adapter, std::span<const double> h,
                          std::span<double> out, std::span<double> mid);
Vector adapter_forward(std::span<const double> h, const Adapter& adapter);
Vector adapter_forward(std::span<const double> h, const AdapterView& adapter);

// ---------------------------------------------------------------------------
// Classifier heads

enum class HeadFamily { prototype, linear, cosine };

std::string_view to_string(HeadFamily f) noexcept;
HeadFamily head_family_from_string(std::string_view s);

inline constexpr double kDefaultCosineScale = 16.0;

/// Non-owning view of learnable head weights (classes x dim, row-major).
struct HeadView {
  HeadFamily family = HeadFamily::linear;
  std::size_t dim = 0;
  std::size_t classes = 0;
  double cosine_scale = kDefaultCosineScale;
  std::span<const double> weights;
};

class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(HeadFamily family, std::size_t dim, double cosine_scale = kDefaultCosineScale);

  HeadFamily family() const noexcept { return family_; }
  std::size_t dim() const noexcept { return dim_; }
  double cosine_scale() const noexcept { return cosine_scale_; }
  std::size_t num_classes() const noexcept { return class_ids_.size(); }
  const std::vector<int>& class_ids() const noexcept { return class_ids_; }

  /// Appends one row per new class id. Linear rows start at zero; cosine rows
  /// start as small Gaussians drawn from `init`. Existing rows are untouched.
  void register_classes(std::span<const int> ids, RngStream& init);
  bool has_class(int id) const noexcept;
  /// Row index of a registered class id.
  std::size_t row_of(int id) const;

  ParamVector& params() noexcept { return params_; }
  const ParamVector& params() const noexcept { return params_; }
  HeadView view() const noexcept;

  /// Prototype table; rows aligned with class_ids(). Unbuilt rows are flagged.
  const Matrix& centroids() const noexcept { return centroids_; }
  bool centroid_built(std::size_t row) const noexcept { return centroid_built_.at(row) != 0; }
  void set_centroid(std::size_t row, std::span<const double> c);

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;

 private:
  HeadFamily family_ = HeadFamily::linear;
  std::size_t dim_ = 0;
  double cosine_scale_ = kDefaultCosineScale;
  std::vector<int> class_ids_;
  ParamVector params_;
  Matrix centroids_;
  std::vector<char> centroid_built_;
};

/// One score per registered class (linear or cosine family).
Vector head_scores(std::span<const double> h, const HeadView& head);
Vector head_scores(std::span<const double> h, const ClassifierHead& head);
void head_scores_into(std::span<const double> h, const HeadView& head, std::span<double> out);

/// Class id of the nearest built centroid; ties go to the lowest class id.
int prototype_predict(std::span<const double> h, const ClassifierHead& head);
/// Class id of the highest score; ties go to the lowest class id.
int argmax_predict(std::span<const double> scores, std::span<const int> class_ids);

/// Sets each class's centroid to the mean of its rows in `features`. Only the
/// classes listed in `classes` are (re)built; each must have an example.
void build_prototypes(const Matrix& features, std::span<const int> labels,
                      std::span<const int> classes, ClassifierHead& head);

struct LossValue {
  double value = 0.0;
  /// Softmax probabilities, only populated when requested.
  Vector probabilities;
};

LossValue cross_entropy(std::span<const double> scores, std::size_t target,
                        bool keep_probabilities = false);

/// Mean cross-entropy gradient with respect to the head weights only; the
/// features are treated as constants. `targets[k]` is the head row of the
/// label of `features.row(k)`.
Vector head_gradient(const Matrix& features, std::span<const std::size_t> targets,
                     const HeadView& head);

/// Gradient of one example's cross-entropy with respect to the head input.
void head_input_gradient(std::span<const double> h, std::size_t target, const HeadView& head,
                         std::span<double> grad_h);

struct LossGradients {
  double loss = 0.0;
  Vector head;
  Vector adapter;
};

/// Mean loss over rows of `backbone_features` and exact gradients with respect
/// to the adapter and/or the head through z = adapter(h).
LossGradients loss_and_gradients(const Matrix& backbone_features,
                                 std::span<const std::size_t> rows,
                                 std::span<const std::size_t> targets,
                                 const AdapterView& adapter, const HeadView& head,
                                 bool want_head, bool want_adapter);

}  // namespace zofc
