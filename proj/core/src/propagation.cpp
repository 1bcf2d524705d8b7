#include <cmath>

#include "hxai/attrib.hpp"
#include "hxai/errors.hpp"

namespace hxai::attrib {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Layers = std::vector<std::unique_ptr<nnet::Layer>>;
using nnet::LayerKind;
using nnet::LayerTrace;

RowVectorXd with_sum(const RowVectorXd& out) {
  RowVectorXd t(out.size() + 1);
  t.head(out.size()) = out;
  t(out.size()) = out.sum();
  return t;
}

/// Reference trace where activation outputs are zero and everything else is
/// evaluated on its reference input.
void zero_reference(const Layers& layers, const MatrixXd& input, std::vector<LayerTrace>& trace) {
  trace.assign(layers.size(), {});
  MatrixXd h = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& t = trace[l];
    t.input = h;
    const auto& layer = *layers[l];
    if (layer.kind() == LayerKind::activation) {
      t.output = MatrixXd::Zero(h.rows(), layer.output_shape().size());
    } else if (layer.kind() == LayerKind::concat_heads) {
      const auto& concat = static_cast<const nnet::ConcatHeads&>(layer);
      const auto off = concat.column_offsets();
      t.output.resize(h.rows(), off.back());
      t.branches.resize(concat.branches().size());
      for (std::size_t k = 0; k < concat.branches().size(); ++k) {
        zero_reference(concat.branches()[k], h, t.branches[k]);
        t.output.middleCols(off[k], off[k + 1] - off[k]) = t.branches[k].back().output;
      }
    } else {
      t.output = layer.evaluate(h);
    }
    h = t.output;
  }
}

/// Multipliers d(target)/d(layer input) under the Rescale rule; m is
/// targets x output units of the last layer.
MatrixXd rescale_backward(const Layers& layers, const std::vector<LayerTrace>& tx,
                          const std::vector<LayerTrace>& tr, MatrixXd m) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = *layers[l];
    const auto& a = tx[l];
    const auto& r = tr[l];
    switch (layer.kind()) {
      case LayerKind::dense:
      case LayerKind::conv2d:
      case LayerKind::flatten:
        m = layer.backward(LayerTrace{}, m, {});
        break;
      case LayerKind::activation: {
        const auto& act = static_cast<const nnet::Activation&>(layer);
        for (Index j = 0; j < m.cols(); ++j) {
          const double dx = a.input(0, j) - r.input(0, j);
          const double dy = a.output(0, j) - r.output(0, j);
          m.col(j) *= std::abs(dx) < kNearZero ? act.derivative(j, a.input(0, j)) : dy / dx;
        }
        break;
      }
      case LayerKind::maxpool2d: {
        MatrixXd in = MatrixXd::Zero(m.rows(), layer.input_shape().size());
        for (Index o = 0; o < m.cols(); ++o) {
          const Index w = a.route[static_cast<std::size_t>(o)];
          const double dx = a.input(0, w) - r.input(0, w);
          const double dy = a.output(0, o) - r.output(0, o);
          in.col(w) += (std::abs(dx) < kNearZero ? 1.0 : dy / dx) * m.col(o);
        }
        m = std::move(in);
        break;
      }
      case LayerKind::concat_heads: {
        const auto& concat = static_cast<const nnet::ConcatHeads&>(layer);
        const auto off = concat.column_offsets();
        MatrixXd in = MatrixXd::Zero(m.rows(), layer.input_shape().size());
        for (std::size_t k = 0; k < concat.branches().size(); ++k)
          in += rescale_backward(concat.branches()[k], a.branches[k], r.branches[k],
                                 m.middleCols(off[k], off[k + 1] - off[k]));
        m = std::move(in);
        break;
      }
    }
  }
  return m;
}

MatrixXd lrp_linear(const MatrixXd& z, const MatrixXd& relevance, double epsilon) {
  MatrixXd s(relevance.rows(), relevance.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    const double zj = z(0, j);
    if (epsilon == 0.0 && zj == 0.0)
      throw NumericalFailure("epsilon-LRP: zero pre-activation at unit " + std::to_string(j) + " with epsilon = 0");
    s.col(j) = relevance.col(j) / (zj + epsilon * (zj >= 0.0 ? 1.0 : -1.0));
  }
  return s;
}

MatrixXd lrp_backward(const Layers& layers, const std::vector<LayerTrace>& tx, MatrixXd r, double epsilon) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = *layers[l];
    const auto& a = tx[l];
    switch (layer.kind()) {
      case LayerKind::dense: {
        const auto& d = static_cast<const nnet::Dense&>(layer);
        const MatrixXd s = lrp_linear(d.evaluate_without_bias(a.input), r, epsilon);
        r = layer.backward(LayerTrace{}, s, {}).array().rowwise() * a.input.row(0).array();
        break;
      }
      case LayerKind::conv2d: {
        const auto& c = static_cast<const nnet::Conv2D&>(layer);
        const MatrixXd s = lrp_linear(c.evaluate_without_bias(a.input), r, epsilon);
        r = layer.backward(LayerTrace{}, s, {}).array().rowwise() * a.input.row(0).array();
        break;
      }
      case LayerKind::flatten:
      case LayerKind::activation:
        break;
      case LayerKind::maxpool2d: {
        MatrixXd in = MatrixXd::Zero(r.rows(), layer.input_shape().size());
        for (Index o = 0; o < r.cols(); ++o) in.col(a.route[static_cast<std::size_t>(o)]) += r.col(o);
        r = std::move(in);
        break;
      }
      case LayerKind::concat_heads: {
        const auto& concat = static_cast<const nnet::ConcatHeads&>(layer);
        const auto off = concat.column_offsets();
        MatrixXd in = MatrixXd::Zero(r.rows(), layer.input_shape().size());
        for (std::size_t k = 0; k < concat.branches().size(); ++k)
          in += lrp_backward(concat.branches()[k], a.branches[k], r.middleCols(off[k], off[k + 1] - off[k]),
                             epsilon);
        r = std::move(in);
        break;
      }
    }
  }
  return r;
}

void check_input(const nnet::Model& model, const RowVectorXd& x) {
  if (x.size() != model.input_size())
    throw DimensionError("instance has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(model.input_size()));
}

}  // namespace

Explanation deeplift_rescale_all(const nnet::Model& model, const RowVectorXd& x, const RowVectorXd& baseline,
                                 ReferenceMode mode) {
  check_input(model, x);
  check_input(model, baseline);
  nnet::ActivationTrace tx, tr;
  const MatrixXd xin = x;
  const MatrixXd rin = baseline;
  const RowVectorXd fx = model.forward(xin, tx).row(0);
  if (mode == ReferenceMode::propagate)
    model.forward(rin, tr);
  else
    zero_reference(model.layers(), rin, tr);

  const Index k = fx.size();
  MatrixXd seed(k + 1, k);
  seed.topRows(k).setIdentity();
  seed.row(k).setOnes();
  const MatrixXd m = rescale_backward(model.layers(), tx, tr, seed);

  Explanation e;
  e.phi = (m.array().rowwise() * (x - baseline).array()).transpose();
  e.base = with_sum(tr.back().output.row(0));
  e.prediction = with_sum(fx);
  return e;
}

Eigen::VectorXd deeplift_rescale(const nnet::Model& model, const RowVectorXd& x, const RowVectorXd& baseline,
                                 int output_index, ReferenceMode mode) {
  return deeplift_rescale_all(model, x, baseline, mode).column(output_index);
}

Explanation epsilon_lrp_all(const nnet::Model& model, const RowVectorXd& x, double epsilon) {
  check_input(model, x);
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon must be finite and >= 0");
  nnet::ActivationTrace tx;
  const MatrixXd xin = x;
  const RowVectorXd fx = model.forward(xin, tx).row(0);

  const Index k = fx.size();
  MatrixXd r = MatrixXd::Zero(k + 1, k);
  r.topRows(k).diagonal() = fx.transpose();
  r.row(k) = fx;
  const MatrixXd rel = lrp_backward(model.layers(), tx, r, epsilon);

  Explanation e;
  e.phi = rel.transpose();
  e.base = RowVectorXd::Zero(k + 1);
  e.prediction = with_sum(fx);
  return e;
}

Eigen::VectorXd epsilon_lrp(const nnet::Model& model, const RowVectorXd& x, int output_index, double epsilon) {
  return epsilon_lrp_all(model, x, epsilon).column(output_index);
}

}  // namespace hxai::attrib
