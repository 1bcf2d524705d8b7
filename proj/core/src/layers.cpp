#include <algorithm>
#include <cmath>

#include "hxai/errors.hpp"
#include "hxai/nnet.hpp"

namespace hxai::nnet {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

void check_cols(const MatrixXd& x, Index expected, const char* layer) {
  if (x.cols() != expected)
    throw DimensionError(std::string(layer) + ": expected " + std::to_string(expected) + " columns, got " +
                         std::to_string(x.cols()));
}

void check_grads(std::span<MatrixXd> grads, std::size_t n, const char* layer) {
  if (!grads.empty() && grads.size() != n)
    throw DimensionError(std::string(layer) + ": gradient slot count mismatch");
}

json shape_json(const Shape& s) { return json::array({s.h, s.w, s.c}); }

Shape shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw SchemaError("shape must be [h, w, c]");
  return {j[0].get<Index>(), j[1].get<Index>(), j[2].get<Index>()};
}

json flat_json(const MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return v;
}

void flat_into(const json& j, MatrixXd& m, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != m.size())
    throw SchemaError(std::string(what) + ": expected " + std::to_string(m.size()) + " values, got " +
                      std::to_string(v.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = v[static_cast<std::size_t>(i * m.cols() + j)];
}

}  // namespace

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::activation: return "activation";
    case LayerKind::concat_heads: return "concat_heads";
  }
  return "?";
}

std::string_view to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::elu: return "elu";
    case ActivationKind::hard_sigmoid: return "hard_sigmoid";
    case ActivationKind::scaled_tanh: return "scaled_tanh";
    case ActivationKind::linear: return "linear";
  }
  return "?";
}

void Layer::forward(const MatrixXd& x, LayerTrace& t) const {
  t.input = x;
  t.output = evaluate(x);
}

std::vector<const MatrixXd*> Layer::parameters() const {
  auto p = const_cast<Layer*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::size_t Layer::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

// ---- Dense ----

Dense::Dense(Index in, Index out) : weights_(MatrixXd::Zero(in, out)), bias_(MatrixXd::Zero(1, out)) {
  if (in <= 0 || out <= 0) throw InvalidParameter("dense layer sizes must be positive");
}

MatrixXd Dense::evaluate_without_bias(const MatrixXd& x) const {
  check_cols(x, weights_.rows(), "dense");
  return x * weights_;
}

MatrixXd Dense::evaluate(const MatrixXd& x) const {
  MatrixXd y = evaluate_without_bias(x);
  y.rowwise() += bias_.row(0);
  return y;
}

MatrixXd Dense::backward(const LayerTrace& t, const MatrixXd& g, std::span<MatrixXd> grads) const {
  check_grads(grads, 2, "dense");
  if (!grads.empty()) {
    grads[0].noalias() += t.input.transpose() * g;
    grads[1] += g.colwise().sum();
  }
  return g * weights_.transpose();
}

json Dense::to_json() const {
  return {{"type", "dense"}, {"in", weights_.rows()}, {"out", weights_.cols()},
          {"weights", flat_json(weights_)}, {"bias", flat_json(bias_)}};
}

// ---- Conv2D ----

Conv2D::Conv2D(Shape input, Index filters, Index kernel_h, Index kernel_w)
    : in_(input), kh_(kernel_h), kw_(kernel_w) {
  if (filters <= 0 || kh_ <= 0 || kw_ <= 0 || in_.c <= 0) throw InvalidParameter("conv2d sizes must be positive");
  if (in_.h < kh_ || in_.w < kw_) throw InvalidParameter("conv2d kernel larger than its input");
  kernel_ = MatrixXd::Zero(kh_ * kw_ * in_.c, filters);
  bias_ = MatrixXd::Zero(1, filters);
}

Shape Conv2D::output_shape() const { return {in_.h - kh_ + 1, in_.w - kw_ + 1, kernel_.cols()}; }

MatrixXd Conv2D::patches(const MatrixXd& x) const {
  const Shape out = output_shape();
  const Index positions = out.h * out.w;
  MatrixXd p(x.rows() * positions, kernel_.rows());
  for (Index b = 0; b < x.rows(); ++b)
    for (Index i = 0; i < out.h; ++i)
      for (Index j = 0; j < out.w; ++j) {
        const Index row = b * positions + i * out.w + j;
        Index col = 0;
        for (Index di = 0; di < kh_; ++di)
          for (Index dj = 0; dj < kw_; ++dj)
            for (Index c = 0; c < in_.c; ++c) p(row, col++) = x(b, ((i + di) * in_.w + (j + dj)) * in_.c + c);
      }
  return p;
}

MatrixXd Conv2D::evaluate_without_bias(const MatrixXd& x) const {
  check_cols(x, in_.size(), "conv2d");
  const Shape out = output_shape();
  const Index positions = out.h * out.w;
  const Index f = kernel_.cols();
  const MatrixXd z = patches(x) * kernel_;
  MatrixXd y(x.rows(), out.size());
  for (Index b = 0; b < x.rows(); ++b)
    for (Index p = 0; p < positions; ++p)
      for (Index c = 0; c < f; ++c) y(b, p * f + c) = z(b * positions + p, c);
  return y;
}

MatrixXd Conv2D::evaluate(const MatrixXd& x) const {
  MatrixXd y = evaluate_without_bias(x);
  const Index f = kernel_.cols();
  for (Index b = 0; b < y.rows(); ++b)
    for (Index k = 0; k < y.cols(); ++k) y(b, k) += bias_(0, k % f);
  return y;
}

MatrixXd Conv2D::backward(const LayerTrace& t, const MatrixXd& g, std::span<MatrixXd> grads) const {
  check_grads(grads, 2, "conv2d");
  const Shape out = output_shape();
  const Index positions = out.h * out.w;
  const Index f = kernel_.cols();
  const Index batch = g.rows();
  MatrixXd gz(batch * positions, f);
  for (Index b = 0; b < batch; ++b)
    for (Index p = 0; p < positions; ++p)
      for (Index c = 0; c < f; ++c) gz(b * positions + p, c) = g(b, p * f + c);
  if (!grads.empty()) {
    grads[0].noalias() += patches(t.input).transpose() * gz;
    grads[1] += gz.colwise().sum();
  }
  const MatrixXd gp = gz * kernel_.transpose();
  MatrixXd gx = MatrixXd::Zero(batch, in_.size());
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < out.h; ++i)
      for (Index j = 0; j < out.w; ++j) {
        const Index row = b * positions + i * out.w + j;
        Index col = 0;
        for (Index di = 0; di < kh_; ++di)
          for (Index dj = 0; dj < kw_; ++dj)
            for (Index c = 0; c < in_.c; ++c) gx(b, ((i + di) * in_.w + (j + dj)) * in_.c + c) += gp(row, col++);
      }
  return gx;
}

json Conv2D::to_json() const {
  return {{"type", "conv2d"},       {"input_shape", shape_json(in_)}, {"filters", kernel_.cols()},
          {"kernel", {kh_, kw_}},   {"weights", flat_json(kernel_)},  {"bias", flat_json(bias_)}};
}

// ---- MaxPool2D ----

MaxPool2D::MaxPool2D(Shape input) : in_(input) {
  if (in_.h < 2 || in_.w < 2) throw InvalidParameter("maxpool2d input must be at least 2x2");
}

namespace {

MatrixXd pool(const Shape& in, const MatrixXd& x, std::vector<Index>* route) {
  const Shape out{in.h / 2, in.w / 2, in.c};
  MatrixXd y(x.rows(), out.size());
  if (route) route->assign(static_cast<std::size_t>(x.rows() * out.size()), 0);
  for (Index b = 0; b < x.rows(); ++b)
    for (Index i = 0; i < out.h; ++i)
      for (Index j = 0; j < out.w; ++j)
        for (Index c = 0; c < in.c; ++c) {
          Index best = (2 * i * in.w + 2 * j) * in.c + c;
          for (Index di = 0; di < 2; ++di)
            for (Index dj = 0; dj < 2; ++dj) {
              const Index k = ((2 * i + di) * in.w + (2 * j + dj)) * in.c + c;
              if (x(b, k) > x(b, best)) best = k;
            }
          const Index o = (i * out.w + j) * in.c + c;
          y(b, o) = x(b, best);
          if (route) (*route)[static_cast<std::size_t>(b * out.size() + o)] = best;
        }
  return y;
}

}  // namespace

MatrixXd MaxPool2D::evaluate(const MatrixXd& x) const {
  check_cols(x, in_.size(), "maxpool2d");
  return pool(in_, x, nullptr);
}

void MaxPool2D::forward(const MatrixXd& x, LayerTrace& t) const {
  check_cols(x, in_.size(), "maxpool2d");
  t.input = x;
  t.output = pool(in_, x, &t.route);
}

MatrixXd MaxPool2D::backward(const LayerTrace& t, const MatrixXd& g, std::span<MatrixXd> grads) const {
  check_grads(grads, 0, "maxpool2d");
  const Index out = output_shape().size();
  MatrixXd gx = MatrixXd::Zero(g.rows(), in_.size());
  for (Index b = 0; b < g.rows(); ++b)
    for (Index o = 0; o < out; ++o) gx(b, t.route[static_cast<std::size_t>(b * out + o)]) += g(b, o);
  return gx;
}

json MaxPool2D::to_json() const { return {{"type", "maxpool2d"}, {"input_shape", shape_json(in_)}}; }

// ---- Flatten ----

MatrixXd Flatten::evaluate(const MatrixXd& x) const {
  check_cols(x, in_.size(), "flatten");
  return x;
}

MatrixXd Flatten::backward(const LayerTrace&, const MatrixXd& g, std::span<MatrixXd> grads) const {
  check_grads(grads, 0, "flatten");
  return g;
}

json Flatten::to_json() const { return {{"type", "flatten"}, {"input_shape", shape_json(in_)}}; }

// ---- Activation ----

Activation::Activation(Shape shape, ActivationKind kind, std::vector<double> lo, std::vector<double> hi)
    : shape_(shape), kind_(kind), lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) throw InvalidParameter("activation bounds must have equal length");
  if (!lo_.empty() && static_cast<Index>(lo_.size()) != shape_.size())
    throw InvalidParameter("activation bounds must have one entry per unit");
  for (std::size_t i = 0; i < lo_.size(); ++i)
    if (!(hi_[i] > lo_[i])) throw InvalidParameter("activation bounds must satisfy lo < hi");
}

double Activation::value(Index unit, double x) const {
  switch (kind_) {
    case ActivationKind::linear: return x;
    case ActivationKind::elu: return x > 0.0 ? x : std::expm1(x);
    case ActivationKind::hard_sigmoid: {
      const double u = std::clamp(0.2 * x + 0.5, 0.0, 1.0);
      if (lo_.empty()) return u;
      const auto k = static_cast<std::size_t>(unit);
      return std::clamp(lo_[k] + (hi_[k] - lo_[k]) * u, lo_[k], hi_[k]);
    }
    case ActivationKind::scaled_tanh: {
      const double th = std::tanh(x);
      if (lo_.empty()) return th;
      const auto k = static_cast<std::size_t>(unit);
      return std::clamp(lo_[k] + (hi_[k] - lo_[k]) * 0.5 * (th + 1.0), lo_[k], hi_[k]);
    }
  }
  return x;
}

double Activation::derivative(Index unit, double x) const {
  const double span = lo_.empty() ? 1.0 : hi_[static_cast<std::size_t>(unit)] - lo_[static_cast<std::size_t>(unit)];
  switch (kind_) {
    case ActivationKind::linear: return 1.0;
    case ActivationKind::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case ActivationKind::hard_sigmoid: {
      const double u = 0.2 * x + 0.5;
      return (u > 0.0 && u < 1.0) ? 0.2 * span : 0.0;
    }
    case ActivationKind::scaled_tanh: {
      const double th = std::tanh(x);
      return (lo_.empty() ? 1.0 : 0.5 * span) * (1.0 - th * th);
    }
  }
  return 1.0;
}

MatrixXd Activation::evaluate(const MatrixXd& x) const {
  check_cols(x, shape_.size(), "activation");
  MatrixXd y(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) y(i, j) = value(j, x(i, j));
  return y;
}

MatrixXd Activation::backward(const LayerTrace& t, const MatrixXd& g, std::span<MatrixXd> grads) const {
  check_grads(grads, 0, "activation");
  MatrixXd gx(g.rows(), g.cols());
  for (Index j = 0; j < g.cols(); ++j)
    for (Index i = 0; i < g.rows(); ++i) gx(i, j) = g(i, j) * derivative(j, t.input(i, j));
  return gx;
}

json Activation::to_json() const {
  json j = {{"type", "activation"}, {"shape", shape_json(shape_)}, {"function", std::string(to_string(kind_))}};
  if (!lo_.empty()) {
    j["lo"] = lo_;
    j["hi"] = hi_;
  }
  return j;
}

// ---- ConcatHeads ----

ConcatHeads::ConcatHeads(std::vector<Branch> branches) : branches_(std::move(branches)) {
  if (branches_.empty()) throw InvalidParameter("concat_heads needs at least one branch");
  const Shape in = input_shape();
  for (const auto& b : branches_) {
    if (b.empty()) throw InvalidParameter("concat_heads branch is empty");
    if (!(b.front()->input_shape() == in)) throw InvalidParameter("concat_heads branches disagree on input shape");
    for (std::size_t k = 1; k < b.size(); ++k)
      if (b[k]->input_shape().size() != b[k - 1]->output_shape().size())
        throw InvalidParameter("concat_heads branch layers do not chain");
  }
}

ConcatHeads::ConcatHeads(const ConcatHeads& other) : Layer(other) {
  for (const auto& b : other.branches_) {
    Branch copy;
    for (const auto& l : b) copy.push_back(l->clone());
    branches_.push_back(std::move(copy));
  }
}

Shape ConcatHeads::input_shape() const { return branches_.front().front()->input_shape(); }

Shape ConcatHeads::output_shape() const { return {1, 1, column_offsets().back()}; }

std::vector<Index> ConcatHeads::column_offsets() const {
  std::vector<Index> off{0};
  for (const auto& b : branches_) off.push_back(off.back() + b.back()->output_shape().size());
  return off;
}

MatrixXd ConcatHeads::evaluate(const MatrixXd& x) const {
  check_cols(x, input_shape().size(), "concat_heads");
  const auto off = column_offsets();
  MatrixXd y(x.rows(), off.back());
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    MatrixXd h = x;
    for (const auto& l : branches_[k]) h = l->evaluate(h);
    y.middleCols(off[k], off[k + 1] - off[k]) = h;
  }
  return y;
}

void ConcatHeads::forward(const MatrixXd& x, LayerTrace& t) const {
  check_cols(x, input_shape().size(), "concat_heads");
  const auto off = column_offsets();
  t.input = x;
  t.output.resize(x.rows(), off.back());
  t.branches.assign(branches_.size(), {});
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    auto& bt = t.branches[k];
    bt.resize(branches_[k].size());
    const MatrixXd* h = &x;
    for (std::size_t l = 0; l < branches_[k].size(); ++l) {
      branches_[k][l]->forward(*h, bt[l]);
      h = &bt[l].output;
    }
    t.output.middleCols(off[k], off[k + 1] - off[k]) = *h;
  }
}

MatrixXd ConcatHeads::backward(const LayerTrace& t, const MatrixXd& g, std::span<MatrixXd> grads) const {
  const auto off = column_offsets();
  std::size_t n_params = 0;
  for (const auto& b : branches_)
    for (const auto& l : b) n_params += l->parameters().size();
  check_grads(grads, n_params, "concat_heads");

  MatrixXd gx = MatrixXd::Zero(g.rows(), input_shape().size());
  std::size_t slot = 0;
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& branch = branches_[k];
    std::vector<std::size_t> first(branch.size());
    for (std::size_t l = 0; l < branch.size(); ++l) {
      first[l] = slot;
      slot += branch[l]->parameters().size();
    }
    MatrixXd h = g.middleCols(off[k], off[k + 1] - off[k]);
    for (std::size_t l = branch.size(); l-- > 0;) {
      const std::size_t np = branch[l]->parameters().size();
      auto sub = grads.empty() ? std::span<MatrixXd>{} : grads.subspan(first[l], np);
      h = branch[l]->backward(t.branches[k][l], h, sub);
    }
    gx += h;
  }
  return gx;
}

std::vector<MatrixXd*> ConcatHeads::parameters() {
  std::vector<MatrixXd*> out;
  for (auto& b : branches_)
    for (auto& l : b)
      for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

json ConcatHeads::to_json() const {
  json branches = json::array();
  for (const auto& b : branches_) {
    json layers = json::array();
    for (const auto& l : b) layers.push_back(l->to_json());
    branches.push_back(std::move(layers));
  }
  return {{"type", "concat_heads"}, {"branches", std::move(branches)}};
}

// ---- deserialization ----

std::unique_ptr<Layer> layer_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "dense") {
      auto l = std::make_unique<Dense>(j.at("in").get<Index>(), j.at("out").get<Index>());
      flat_into(j.at("weights"), l->weights(), "dense weights");
      flat_into(j.at("bias"), l->bias(), "dense bias");
      return l;
    }
    if (type == "conv2d") {
      const auto k = j.at("kernel");
      auto l = std::make_unique<Conv2D>(shape_from_json(j.at("input_shape")), j.at("filters").get<Index>(),
                                        k.at(0).get<Index>(), k.at(1).get<Index>());
      flat_into(j.at("weights"), l->kernel(), "conv2d weights");
      flat_into(j.at("bias"), l->bias(), "conv2d bias");
      return l;
    }
    if (type == "maxpool2d") return std::make_unique<MaxPool2D>(shape_from_json(j.at("input_shape")));
    if (type == "flatten") return std::make_unique<Flatten>(shape_from_json(j.at("input_shape")));
    if (type == "activation") {
      const auto fn = j.at("function").get<std::string>();
      ActivationKind kind;
      if (fn == "elu") kind = ActivationKind::elu;
      else if (fn == "hard_sigmoid") kind = ActivationKind::hard_sigmoid;
      else if (fn == "scaled_tanh") kind = ActivationKind::scaled_tanh;
      else if (fn == "linear") kind = ActivationKind::linear;
      else throw SchemaError("unknown activation '" + fn + "'");
      std::vector<double> lo, hi;
      if (j.contains("lo")) {
        lo = j.at("lo").get<std::vector<double>>();
        hi = j.at("hi").get<std::vector<double>>();
      }
      return std::make_unique<Activation>(shape_from_json(j.at("shape")), kind, std::move(lo), std::move(hi));
    }
    if (type == "concat_heads") {
      std::vector<ConcatHeads::Branch> branches;
      for (const auto& b : j.at("branches")) {
        ConcatHeads::Branch branch;
        for (const auto& l : b) branch.push_back(layer_from_json(l));
        branches.push_back(std::move(branch));
      }
      return std::make_unique<ConcatHeads>(std::move(branches));
    }
    throw SchemaError("unknown layer type '" + type + "'");
  } catch (const json::exception& e) {
    throw SchemaError("layer spec: " + std::string(e.what()));
  } catch (const InvalidParameter& e) {
    throw SchemaError("layer spec: " + std::string(e.what()));
  }
}

}  // namespace hxai::nnet
