#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hxai/csv.hpp"
#include "hxai/errors.hpp"
#include "hxai/nnet.hpp"
#include "hxai/rng.hpp"

namespace hxai::nnet {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

void collect_trainable(Layer& layer, std::vector<Layer*>& out) {
  if (layer.kind() == LayerKind::dense || layer.kind() == LayerKind::conv2d) out.push_back(&layer);
  if (auto* heads = dynamic_cast<ConcatHeads*>(&layer))
    for (const auto& b : heads->branches())
      for (const auto& l : b) collect_trainable(*l, out);
}

void glorot(MatrixXd& w, double fan_in, double fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = a * (2.0 * uniform01(rng) - 1.0);
}

std::vector<double> bound_vec(const datagen::ParamBounds& b, bool upper) {
  std::vector<double> v;
  for (const auto& r : b.range) v.push_back(upper ? r.hi : r.lo);
  return v;
}

MatrixXd normalize(const MatrixXd& y, const datagen::ParamBounds& b) {
  if (y.cols() != static_cast<Index>(b.range.size()))
    throw DimensionError("label normalization needs " + std::to_string(b.range.size()) + " outputs");
  MatrixXd out(y.rows(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    const auto& r = b.range[static_cast<std::size_t>(j)];
    out.col(j) = (y.col(j).array() - r.lo) / r.width();
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::fcnn: return "fcnn";
    case Architecture::cnn: return "cnn";
    case Architecture::custom: return "custom";
  }
  return "?";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "fcnn") return Architecture::fcnn;
  if (s == "cnn") return Architecture::cnn;
  if (s == "custom") return Architecture::custom;
  throw InvalidParameter("unknown architecture '" + std::string(s) + "'");
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::msle: return "msle";
    case LossKind::rmse: return "rmse";
    case LossKind::mse: return "mse";
  }
  return "?";
}

LossKind parse_loss(std::string_view s) {
  if (s == "msle") return LossKind::msle;
  if (s == "rmse") return LossKind::rmse;
  if (s == "mse") return LossKind::mse;
  throw InvalidParameter("unknown loss '" + std::string(s) + "'");
}

json TrainConfig::to_json() const {
  return {{"loss", std::string(nnet::to_string(loss))},
          {"learning_rate", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"epsilon", adam.epsilon},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"normalize_labels", normalize_labels}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.loss = parse_loss(j.value("loss", std::string("msle")));
  c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.normalize_labels = j.value("normalize_labels", c.normalize_labels);
  return c;
}

// ---- Model ----

Model::Model(Architecture arch, std::vector<std::unique_ptr<Layer>> layers, datagen::ParamBounds bounds)
    : arch_(arch), layers_(std::move(layers)), bounds_(bounds) {
  if (layers_.empty()) throw InvalidParameter("model needs at least one layer");
  for (std::size_t k = 1; k < layers_.size(); ++k)
    if (layers_[k]->input_shape().size() != layers_[k - 1]->output_shape().size())
      throw InvalidParameter("layer " + std::to_string(k) + " (" + std::string(to_string(layers_[k]->kind())) +
                             ") does not accept the output of layer " + std::to_string(k - 1));
}

Model::Model(const Model& other)
    : config(other.config), extra(other.extra), arch_(other.arch_), bounds_(other.bounds_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Shape Model::input_shape() const {
  if (layers_.empty()) return {1, 1, 0};
  return layers_.front()->input_shape();
}

Index Model::output_size() const {
  if (layers_.empty()) return 0;
  return layers_.back()->output_shape().size();
}

MatrixXd Model::predict(const MatrixXd& x) const {
  if (x.cols() != input_size())
    throw DimensionError("model expects " + std::to_string(input_size()) + " input columns, got " +
                         std::to_string(x.cols()));
  MatrixXd h = x;
  for (const auto& l : layers_) h = l->evaluate(h);
  return h;
}

MatrixXd Model::forward(const MatrixXd& x, ActivationTrace& trace) const {
  if (x.cols() != input_size())
    throw DimensionError("model expects " + std::to_string(input_size()) + " input columns, got " +
                         std::to_string(x.cols()));
  trace.assign(layers_.size(), {});
  const MatrixXd* h = &x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k]->forward(*h, trace[k]);
    h = &trace[k].output;
  }
  return *h;
}

MatrixXd Model::backward(const ActivationTrace& trace, const MatrixXd& grad_output,
                         std::vector<MatrixXd>* grads) const {
  if (trace.size() != layers_.size()) throw DimensionError("trace does not match the model");
  std::vector<std::size_t> first(layers_.size());
  std::size_t slot = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    first[k] = slot;
    slot += layers_[k]->parameters().size();
  }
  if (grads && grads->size() != slot) throw DimensionError("gradient set does not match the model");
  MatrixXd g = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const std::size_t np = layers_[k]->parameters().size();
    std::span<MatrixXd> sub;
    if (grads && np > 0) sub = std::span<MatrixXd>(*grads).subspan(first[k], np);
    g = layers_[k]->backward(trace[k], g, sub);
  }
  return g;
}

std::vector<MatrixXd*> Model::parameters() {
  std::vector<MatrixXd*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<const MatrixXd*> Model::parameters() const {
  auto p = const_cast<Model*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::vector<MatrixXd> Model::zero_gradients() const {
  std::vector<MatrixXd> out;
  for (const auto* p : parameters()) out.push_back(MatrixXd::Zero(p->rows(), p->cols()));
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->parameter_count();
  return n;
}

// ---- builders ----

void initialize(Model& model, std::uint64_t seed) {
  std::vector<Layer*> trainable;
  for (const auto& l : model.layers()) collect_trainable(*l, trainable);
  std::uint64_t index = 0;
  for (auto* l : trainable) {
    auto rng = make_stream(seed, index++);
    if (auto* d = dynamic_cast<Dense*>(l)) {
      glorot(d->weights(), static_cast<double>(d->weights().rows()), static_cast<double>(d->weights().cols()), rng);
      d->bias().setZero();
    } else if (auto* c = dynamic_cast<Conv2D*>(l)) {
      const double area = static_cast<double>(c->kernel_h() * c->kernel_w());
      const double cin = static_cast<double>(c->input_shape().c);
      glorot(c->kernel(), area * cin, area * static_cast<double>(c->kernel().cols()), rng);
      c->bias().setZero();
    }
  }
}

Model build_fcnn(const datagen::ParamBounds& bounds, std::uint64_t init_seed) {
  const Index widths[] = {88, 64, 32, 16, 5};
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t k = 0; k + 1 < std::size(widths); ++k) {
    layers.push_back(std::make_unique<Dense>(widths[k], widths[k + 1]));
    const Shape s{1, 1, widths[k + 1]};
    if (k + 2 < std::size(widths))
      layers.push_back(std::make_unique<Activation>(s, ActivationKind::elu));
    else
      layers.push_back(std::make_unique<Activation>(s, ActivationKind::hard_sigmoid, bound_vec(bounds, false),
                                                    bound_vec(bounds, true)));
  }
  Model m(Architecture::fcnn, std::move(layers), bounds);
  m.config.loss = LossKind::msle;
  initialize(m, init_seed);
  return m;
}

Model build_cnn(const datagen::ParamBounds& bounds, std::uint64_t init_seed) {
  const Shape input{8, 11, 1};
  std::vector<std::unique_ptr<Layer>> layers;
  auto conv = std::make_unique<Conv2D>(input, 32, 3, 3);
  const Shape conv_out = conv->output_shape();
  layers.push_back(std::move(conv));
  layers.push_back(std::make_unique<Activation>(conv_out, ActivationKind::elu));
  auto pool = std::make_unique<MaxPool2D>(conv_out);
  const Shape pool_out = pool->output_shape();
  layers.push_back(std::move(pool));
  layers.push_back(std::make_unique<Flatten>(pool_out));
  layers.push_back(std::make_unique<Dense>(pool_out.size(), 50));
  layers.push_back(std::make_unique<Activation>(Shape{1, 1, 50}, ActivationKind::elu));
  std::vector<ConcatHeads::Branch> heads;
  for (const auto& r : bounds.range) {
    ConcatHeads::Branch b;
    b.push_back(std::make_unique<Dense>(50, 1));
    b.push_back(std::make_unique<Activation>(Shape{1, 1, 1}, ActivationKind::scaled_tanh, std::vector<double>{r.lo},
                                             std::vector<double>{r.hi}));
    heads.push_back(std::move(b));
  }
  layers.push_back(std::make_unique<ConcatHeads>(std::move(heads)));
  Model m(Architecture::cnn, std::move(layers), bounds);
  m.config.loss = LossKind::rmse;
  initialize(m, init_seed);
  return m;
}

// ---- losses ----

double loss_value(LossKind kind, const MatrixXd& p, const MatrixXd& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw DimensionError("prediction and target shapes differ");
  const double n = static_cast<double>(p.size());
  if (n == 0) return 0.0;
  switch (kind) {
    case LossKind::mse: return (p - y).squaredNorm() / n;
    case LossKind::rmse: return std::sqrt((p - y).squaredNorm() / n);
    case LossKind::msle: {
      if ((p.array() <= -1.0).any() || (y.array() <= -1.0).any())
        throw DomainError("msle is undefined for values <= -1");
      return (p.array().log1p() - y.array().log1p()).matrix().squaredNorm() / n;
    }
  }
  return 0.0;
}

MatrixXd loss_gradient(LossKind kind, const MatrixXd& p, const MatrixXd& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw DimensionError("prediction and target shapes differ");
  const double n = static_cast<double>(p.size());
  if (n == 0) return MatrixXd::Zero(p.rows(), p.cols());
  switch (kind) {
    case LossKind::mse: return 2.0 * (p - y) / n;
    case LossKind::rmse: {
      const double r = std::sqrt((p - y).squaredNorm() / n);
      if (r == 0.0) return MatrixXd::Zero(p.rows(), p.cols());
      return (p - y) / (n * r);
    }
    case LossKind::msle: {
      if ((p.array() <= -1.0).any() || (y.array() <= -1.0).any())
        throw DomainError("msle is undefined for values <= -1");
      return (2.0 / n * (p.array().log1p() - y.array().log1p()) / (1.0 + p.array())).matrix();
    }
  }
  return MatrixXd::Zero(p.rows(), p.cols());
}

GradientSet gradients(const Model& model, const MatrixXd& x, const MatrixXd& y, LossKind kind,
                      bool normalize_labels) {
  ActivationTrace trace;
  const MatrixXd out = model.forward(x, trace);
  if (out.rows() != y.rows() || out.cols() != y.cols())
    throw DimensionError("labels do not match the model output shape");
  GradientSet gs;
  MatrixXd g;
  if (normalize_labels) {
    const auto& b = model.label_bounds();
    const MatrixXd pn = normalize(out, b);
    const MatrixXd yn = normalize(y, b);
    gs.loss = loss_value(kind, pn, yn);
    g = loss_gradient(kind, pn, yn);
    for (Index j = 0; j < g.cols(); ++j) g.col(j) /= b.range[static_cast<std::size_t>(j)].width();
  } else {
    gs.loss = loss_value(kind, out, y);
    g = loss_gradient(kind, out, y);
  }
  gs.parameters = model.zero_gradients();
  gs.input = model.backward(trace, g, &gs.parameters);
  return gs;
}

double evaluate(const Model& model, const MatrixXd& x, const MatrixXd& y) {
  const MatrixXd p = model.predict(x);
  if (model.config.normalize_labels) {
    return loss_value(model.config.loss, normalize(p, model.label_bounds()), normalize(y, model.label_bounds()));
  }
  return loss_value(model.config.loss, p, y);
}

// ---- training ----

History train(Model& model, const MatrixXd& x_train, const MatrixXd& y_train, const MatrixXd& x_valid,
              const MatrixXd& y_valid, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  if (x_train.rows() != y_train.rows()) throw DimensionError("training features and labels differ in rows");
  if (x_valid.rows() != y_valid.rows()) throw DimensionError("validation features and labels differ in rows");
  if (config.batch_size < 1 || config.epochs < 0) throw InvalidParameter("batch size must be >= 1, epochs >= 0");
  model.config = config;

  auto params = model.parameters();
  std::vector<MatrixXd> m1 = model.zero_gradients();
  std::vector<MatrixXd> m2 = model.zero_gradients();
  const auto& a = config.adam;
  double beta1_t = 1.0, beta2_t = 1.0;

  const auto n = static_cast<std::size_t>(x_train.rows());
  std::vector<std::size_t> order(n);
  History history;
  MatrixXd xb, yb;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_stream(config.seed, static_cast<std::uint64_t>(epoch));
    shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min(n - start, static_cast<std::size_t>(config.batch_size));
      xb.resize(static_cast<Index>(count), x_train.cols());
      yb.resize(static_cast<Index>(count), y_train.cols());
      for (std::size_t i = 0; i < count; ++i) {
        xb.row(static_cast<Index>(i)) = x_train.row(static_cast<Index>(order[start + i]));
        yb.row(static_cast<Index>(i)) = y_train.row(static_cast<Index>(order[start + i]));
      }
      const auto gs = gradients(model, xb, yb, config.loss, config.normalize_labels);
      if (!std::isfinite(gs.loss))
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), epoch);
      total += gs.loss * static_cast<double>(count);

      beta1_t *= a.beta1;
      beta2_t *= a.beta2;
      const double step = a.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      const double eps_hat = a.epsilon * std::sqrt(1.0 - beta2_t);
      for (std::size_t k = 0; k < params.size(); ++k) {
        m1[k] = a.beta1 * m1[k] + (1.0 - a.beta1) * gs.parameters[k];
        m2[k] = a.beta2 * m2[k] + (1.0 - a.beta2) * gs.parameters[k].cwiseAbs2();
        params[k]->array() -= step * m1[k].array() / (m2[k].array().sqrt() + eps_hat);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = n > 0 ? total / static_cast<double>(n) : 0.0;
    rec.valid_loss = x_valid.rows() > 0 ? evaluate(model, x_valid, y_valid) : std::numeric_limits<double>::quiet_NaN();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!std::isfinite(rec.train_loss))
      throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), epoch);
  }
  return history;
}

// ---- errors ----

PredictionErrors relative_errors(const MatrixXd& prediction, const MatrixXd& labels) {
  if (prediction.rows() != labels.rows() || prediction.cols() != labels.cols())
    throw DimensionError("predictions and labels differ in shape");
  PredictionErrors e;
  e.relative = (prediction - labels).cwiseQuotient(labels);
  for (Index j = 0; j < e.relative.cols(); ++j) {
    std::vector<double> a(static_cast<std::size_t>(e.relative.rows()));
    for (Index i = 0; i < e.relative.rows(); ++i) a[static_cast<std::size_t>(i)] = std::abs(e.relative(i, j));
    e.summary.mean_abs.push_back(a.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size()));
    e.summary.median_abs.push_back(median(std::move(a)));
  }
  return e;
}

PredictionErrors predict_errors(const Model& model, const MatrixXd& x, const MatrixXd& labels) {
  return relative_errors(model.predict(x), labels);
}

// ---- checkpoints ----

json to_json(const Model& model) {
  json layers = json::array();
  for (const auto& l : model.layers()) layers.push_back(l->to_json());
  json bounds = json::array();
  for (const auto& r : model.label_bounds().range) bounds.push_back({r.lo, r.hi});
  return {{"schema_version", kCheckpointSchema},
          {"kind", "model"},
          {"architecture", std::string(to_string(model.architecture()))},
          {"parameter_count", model.parameter_count()},
          {"label_bounds", bounds},
          {"config", model.config.to_json()},
          {"layers", layers},
          {"extra", model.extra}};
}

Model model_from_json(const json& j, std::optional<Architecture> expected) {
  Architecture arch;
  try {
    if (j.at("schema_version").get<int>() != kCheckpointSchema)
      throw SchemaError("unsupported checkpoint schema_version " + j.at("schema_version").dump());
    arch = parse_architecture(j.at("architecture").get<std::string>());
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint: " + std::string(e.what()));
  } catch (const InvalidParameter& e) {
    throw SchemaError("checkpoint: " + std::string(e.what()));
  }
  if (expected && *expected != arch)
    throw ArchitectureMismatch("checkpoint holds a " + std::string(to_string(arch)) + " model, expected " +
                               std::string(to_string(*expected)));
  try {
    datagen::ParamBounds bounds = datagen::ParamBounds::standard();
    const auto& jb = j.at("label_bounds");
    if (jb.size() != bounds.range.size()) throw SchemaError("label_bounds must have 5 entries");
    for (std::size_t i = 0; i < bounds.range.size(); ++i)
      bounds.range[i] = {jb[i].at(0).get<double>(), jb[i].at(1).get<double>()};
    std::vector<std::unique_ptr<Layer>> layers;
    for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
    Model m(arch, std::move(layers), bounds);
    m.config = TrainConfig::from_json(j.at("config"));
    m.extra = j.value("extra", json::object());
    if (j.at("parameter_count").get<std::size_t>() != m.parameter_count())
      throw SchemaError("checkpoint parameter_count does not match its layers");
    return m;
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint: " + std::string(e.what()));
  } catch (const InvalidParameter& e) {
    throw SchemaError("checkpoint: " + std::string(e.what()));
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << to_json(model).dump() << '\n';
  if (!os) throw Error("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path, std::optional<Architecture> expected) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw SchemaError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  return model_from_json(j, expected);
}

void write_history(const History& history, const std::filesystem::path& path) {
  MatrixXd v(static_cast<Index>(history.epochs.size()), 3);
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    v.row(static_cast<Index>(i)) << e.epoch, e.train_loss, e.valid_loss;
  }
  csv::write(path, {"epoch", "train_loss", "valid_loss"}, v);
}

}  // namespace hxai::nnet
