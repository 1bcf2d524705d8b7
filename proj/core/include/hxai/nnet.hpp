#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hxai/datagen.hpp"

namespace hxai::nnet {

/// Height x width x channels. Tensors are stored per row in HWC order.
struct Shape {
  Eigen::Index h = 1;
  Eigen::Index w = 1;
  Eigen::Index c = 1;

  Eigen::Index size() const noexcept { return h * w * c; }
  bool operator==(const Shape&) const = default;
};

enum class LayerKind { dense, conv2d, maxpool2d, flatten, activation, concat_heads };
enum class ActivationKind { elu, hard_sigmoid, scaled_tanh, linear };

std::string_view to_string(LayerKind k);
std::string_view to_string(ActivationKind k);

/// Values seen by one layer in a forward pass over a batch (one row per
/// sample).
struct LayerTrace {
  Eigen::MatrixXd input;
  Eigen::MatrixXd output;
  /// maxpool2d: winning input index for each (row, output unit), row-major.
  std::vector<Eigen::Index> route;
  /// concat_heads: one trace per branch.
  std::vector<std::vector<LayerTrace>> branches;
};

using ActivationTrace = std::vector<LayerTrace>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;

  /// Output for a batch without recording anything.
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const = 0;
  /// Fills t.input, t.output and any routing data.
  virtual void forward(const Eigen::MatrixXd& x, LayerTrace& t) const;

  /// Returns dL/dinput. When `grads` is non-empty it must hold one matrix per
  /// parameter (same order as parameters()) and receives dL/dparam added in.
  virtual Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                                   std::span<Eigen::MatrixXd> grads) const = 0;

  virtual std::vector<Eigen::MatrixXd*> parameters() { return {}; }
  std::vector<const Eigen::MatrixXd*> parameters() const;
  std::size_t parameter_count() const;

  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

/// y = x W + b, W is in x out.
class Dense final : public Layer {
 public:
  Dense(Eigen::Index in, Eigen::Index out);

  LayerKind kind() const override { return LayerKind::dense; }
  Shape input_shape() const override { return {1, 1, weights_.rows()}; }
  Shape output_shape() const override { return {1, 1, weights_.cols()}; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::vector<Eigen::MatrixXd*> parameters() override { return {&weights_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  nlohmann::json to_json() const override;

  /// x W without the bias.
  Eigen::MatrixXd evaluate_without_bias(const Eigen::MatrixXd& x) const;

  Eigen::MatrixXd& weights() { return weights_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& bias() { return bias_; }  // 1 x out
  const Eigen::MatrixXd& bias() const { return bias_; }

 private:
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd bias_;
};

/// Valid 2-D convolution, stride 1. Kernel matrix rows are indexed
/// (kh, kw, cin) in row-major order, columns by output channel.
class Conv2D final : public Layer {
 public:
  Conv2D(Shape input, Eigen::Index filters, Eigen::Index kernel_h = 3, Eigen::Index kernel_w = 3);

  LayerKind kind() const override { return LayerKind::conv2d; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override;
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::vector<Eigen::MatrixXd*> parameters() override { return {&kernel_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }
  nlohmann::json to_json() const override;

  Eigen::MatrixXd evaluate_without_bias(const Eigen::MatrixXd& x) const;

  Eigen::Index kernel_h() const { return kh_; }
  Eigen::Index kernel_w() const { return kw_; }
  Eigen::MatrixXd& kernel() { return kernel_; }
  const Eigen::MatrixXd& kernel() const { return kernel_; }
  Eigen::MatrixXd& bias() { return bias_; }  // 1 x filters
  const Eigen::MatrixXd& bias() const { return bias_; }

 private:
  Eigen::MatrixXd patches(const Eigen::MatrixXd& x) const;

  Shape in_;
  Eigen::Index kh_, kw_;
  Eigen::MatrixXd kernel_;
  Eigen::MatrixXd bias_;
};

/// 2 x 2 max pooling, stride 2, odd trailing rows/columns dropped. Ties go
/// to the lowest input index.
class MaxPool2D final : public Layer {
 public:
  explicit MaxPool2D(Shape input);

  LayerKind kind() const override { return LayerKind::maxpool2d; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return {in_.h / 2, in_.w / 2, in_.c}; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  void forward(const Eigen::MatrixXd& x, LayerTrace& t) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2D>(*this); }
  nlohmann::json to_json() const override;

 private:
  Shape in_;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(Shape input) : in_(input) {}

  LayerKind kind() const override { return LayerKind::flatten; }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return {1, 1, in_.size()}; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
  nlohmann::json to_json() const override;

 private:
  Shape in_;
};

/// Element-wise activation. hard_sigmoid and scaled_tanh map to [lo_i, hi_i]
/// per unit; with empty bounds hard_sigmoid maps to [0, 1] and scaled_tanh
/// to [-1, 1].
///   elu(x)          = x > 0 ? x : exp(x) - 1
///   hard_sigmoid(x) = lo + (hi - lo) * clamp(0.2 x + 0.5, 0, 1)
///   scaled_tanh(x)  = lo + (hi - lo) * (tanh(x) + 1) / 2
class Activation final : public Layer {
 public:
  Activation(Shape shape, ActivationKind kind, std::vector<double> lo = {}, std::vector<double> hi = {});

  LayerKind kind() const override { return LayerKind::activation; }
  ActivationKind activation() const { return kind_; }
  Shape input_shape() const override { return shape_; }
  Shape output_shape() const override { return shape_; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Activation>(*this); }
  nlohmann::json to_json() const override;

  double value(Eigen::Index unit, double x) const;
  double derivative(Eigen::Index unit, double x) const;
  const std::vector<double>& lower() const { return lo_; }
  const std::vector<double>& upper() const { return hi_; }

 private:
  Shape shape_;
  ActivationKind kind_;
  std::vector<double> lo_, hi_;
};

/// Parallel branches over the same input; outputs concatenated in branch
/// order.
class ConcatHeads final : public Layer {
 public:
  using Branch = std::vector<std::unique_ptr<Layer>>;

  explicit ConcatHeads(std::vector<Branch> branches);
  ConcatHeads(const ConcatHeads& other);
  ConcatHeads& operator=(const ConcatHeads&) = delete;

  LayerKind kind() const override { return LayerKind::concat_heads; }
  Shape input_shape() const override;
  Shape output_shape() const override;
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x) const override;
  void forward(const Eigen::MatrixXd& x, LayerTrace& t) const override;
  Eigen::MatrixXd backward(const LayerTrace& t, const Eigen::MatrixXd& grad_output,
                           std::span<Eigen::MatrixXd> grads) const override;
  std::vector<Eigen::MatrixXd*> parameters() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConcatHeads>(*this); }
  nlohmann::json to_json() const override;

  const std::vector<Branch>& branches() const { return branches_; }
  /// First output column of each branch, plus the total at the end.
  std::vector<Eigen::Index> column_offsets() const;

 private:
  std::vector<Branch> branches_;
};

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j);

enum class Architecture { fcnn, cnn, custom };
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

enum class LossKind { msle, rmse, mse };
std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view s);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  LossKind loss = LossKind::msle;
  AdamConfig adam;
  int epochs = 200;
  int batch_size = 64;
  std::uint64_t seed = 1;
  /// Compute the loss on labels mapped to [0, 1] through the model's label
  /// bounds instead of raw parameter units.
  bool normalize_labels = true;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

class Model {
 public:
  Model() = default;
  Model(Architecture arch, std::vector<std::unique_ptr<Layer>> layers,
        datagen::ParamBounds bounds = datagen::ParamBounds::standard());
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  Architecture architecture() const { return arch_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  Shape input_shape() const;
  Eigen::Index input_size() const { return input_shape().size(); }
  Eigen::Index output_size() const;

  /// Batched forward pass, one sample per row. Throws DimensionError on a
  /// wrong column count.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ActivationTrace& trace) const;

  /// Reverse pass through a recorded trace; returns dL/dinput and, when
  /// `grads` is given, adds parameter gradients into it.
  Eigen::MatrixXd backward(const ActivationTrace& trace, const Eigen::MatrixXd& grad_output,
                           std::vector<Eigen::MatrixXd>* grads) const;

  std::vector<Eigen::MatrixXd*> parameters();
  std::vector<const Eigen::MatrixXd*> parameters() const;
  std::vector<Eigen::MatrixXd> zero_gradients() const;
  std::size_t parameter_count() const;

  const datagen::ParamBounds& label_bounds() const { return bounds_; }

  TrainConfig config;
  /// Free-form state stored with the checkpoint (e.g. preprocessing).
  nlohmann::json extra = nlohmann::json::object();

 private:
  Architecture arch_ = Architecture::custom;
  std::vector<std::unique_ptr<Layer>> layers_;
  datagen::ParamBounds bounds_ = datagen::ParamBounds::standard();
};

/// Dense 88 -> 64 -> 32 -> 16 -> 5, ELU hidden layers, hard-sigmoid output
/// rescaled to the label bounds. Glorot-uniform weights from `init_seed`.
Model build_fcnn(const datagen::ParamBounds& bounds = datagen::ParamBounds::standard(),
                 std::uint64_t init_seed = 1);

/// (8, 11, 1) -> conv 3x3x32 -> ELU -> maxpool -> flatten 384 -> dense 50
/// -> ELU -> five dense(50 -> 1) + scaled_tanh heads.
Model build_cnn(const datagen::ParamBounds& bounds = datagen::ParamBounds::standard(),
                std::uint64_t init_seed = 1);

/// Glorot-uniform weights, zero biases.
void initialize(Model& model, std::uint64_t seed);

// Losses are means over all entries of the batch.
double loss_value(LossKind kind, const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);
/// d loss / d prediction. msle throws DomainError for entries <= -1.
Eigen::MatrixXd loss_gradient(LossKind kind, const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

struct GradientSet {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> parameters;  // aligned with Model::parameters()
  Eigen::MatrixXd input;                    // d loss / d input
};

/// Exact gradients of the mean batch loss. Labels are normalized through the
/// model's bounds when `normalize_labels` is set.
GradientSet gradients(const Model& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind,
                      bool normalize_labels = true);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
};

/// Mini-batch Adam. Deterministic given (model weights, data, config.seed).
/// Throws TrainingDiverged on a non-finite loss; `on_epoch` sees every
/// completed epoch first, so callers can keep the partial history.
History train(Model& model, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
              const Eigen::MatrixXd& x_valid, const Eigen::MatrixXd& y_valid, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Loss of the model on a dataset under its own config.
double evaluate(const Model& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct ErrorSummary {
  std::vector<double> mean_abs;    // per label
  std::vector<double> median_abs;  // per label
};

struct PredictionErrors {
  Eigen::MatrixXd relative;  // (prediction - label) / label
  ErrorSummary summary;
};

PredictionErrors relative_errors(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& labels);
PredictionErrors predict_errors(const Model& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& labels);

inline constexpr int kCheckpointSchema = 1;

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j, std::optional<Architecture> expected = std::nullopt);
void save_model(const Model& model, const std::filesystem::path& path);
/// Throws ArchitectureMismatch when the stored tag differs from `expected`,
/// SchemaError on a corrupt or incompatible file.
Model load_model(const std::filesystem::path& path, std::optional<Architecture> expected = std::nullopt);

void write_history(const History& history, const std::filesystem::path& path);

}  // namespace hxai::nnet
