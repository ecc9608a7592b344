#include "prefsum/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/SparseCore>

#include "prefsum/random.hpp"

namespace prefsum::nnet {
namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kTanh: return z.array().tanh();
    case Activation::kSigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

// d activation / d z evaluated from the pre-activation and the output.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, Activation a) {
  switch (a) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::kTanh: return (1.0 - y.array().square()).matrix();
    case Activation::kSigmoid: return (y.array() * (1.0 - y.array())).matrix();
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Gradient Gradient::zeros_like(const Mlp& net) {
  Gradient g;
  for (const auto& layer : net.layers()) {
    g.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

std::size_t Gradient::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    n += static_cast<std::size_t>(weight[l].size() + bias[l].size());
  }
  return n;
}

double Gradient::value(std::size_t flat_index) const {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    const auto& w = weight[l];
    const auto nw = static_cast<std::size_t>(w.size());
    if (flat_index < nw) {
      const auto cols = static_cast<std::size_t>(w.cols());
      return w(static_cast<Eigen::Index>(flat_index / cols),
               static_cast<Eigen::Index>(flat_index % cols));
    }
    flat_index -= nw;
    const auto nb = static_cast<std::size_t>(bias[l].size());
    if (flat_index < nb) return bias[l][static_cast<Eigen::Index>(flat_index)];
    flat_index -= nb;
  }
  throw std::out_of_range("gradient index out of range");
}

bool Gradient::all_finite() const {
  if (!std::isfinite(loss)) return false;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    if (!weight[l].allFinite() || !bias[l].allFinite()) return false;
  }
  return true;
}

Gradient& Gradient::operator+=(const Gradient& other) {
  if (weight.empty()) {
    *this = other;
    return *this;
  }
  if (other.weight.size() != weight.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  loss += other.loss;
  return *this;
}

Gradient& Gradient::operator*=(double scale) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] *= scale;
    bias[l] *= scale;
  }
  loss *= scale;
  return *this;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) throw ShapeError("bias/weight size mismatch");
    if (l > 0 && layer.input_size() != layers_[l - 1].output_size()) {
      throw ShapeError("layer " + std::to_string(l) + " input does not match previous output");
    }
  }
  if (!all_finite()) throw std::domain_error("network parameters must be finite");
}

Mlp Mlp::zeros(const std::vector<std::size_t>& sizes, const std::vector<Activation>& activations) {
  if (sizes.size() < 2 || activations.size() + 1 != sizes.size()) {
    throw ShapeError("need one activation per layer and at least one layer");
  }
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out), activations[l]});
  }
  return Mlp(std::move(layers));
}

Mlp Mlp::create(const std::vector<std::size_t>& sizes, const std::vector<Activation>& activations,
                std::uint64_t seed) {
  Mlp net = zeros(sizes, activations);
  Rng rng(seed);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.input_size()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = dist(rng);
  }
  return net;
}

std::size_t Mlp::input_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().input_size());
}

std::size_t Mlp::output_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().output_size());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> out;
  if (layers_.empty()) return out;
  out.push_back(input_size());
  for (const auto& layer : layers_) out.push_back(static_cast<std::size_t>(layer.output_size()));
  return out;
}

double* Mlp::locate(std::size_t flat_index) {
  for (auto& layer : layers_) {
    const auto nw = static_cast<std::size_t>(layer.weight.size());
    if (flat_index < nw) {
      const auto cols = static_cast<std::size_t>(layer.weight.cols());
      return &layer.weight(static_cast<Eigen::Index>(flat_index / cols),
                           static_cast<Eigen::Index>(flat_index % cols));
    }
    flat_index -= nw;
    const auto nb = static_cast<std::size_t>(layer.bias.size());
    if (flat_index < nb) return &layer.bias[static_cast<Eigen::Index>(flat_index)];
    flat_index -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

double Mlp::parameter(std::size_t flat_index) const {
  return *const_cast<Mlp*>(this)->locate(flat_index);
}

void Mlp::set_parameter(std::size_t flat_index, double value) { *locate(flat_index) = value; }

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  ForwardCache cache;
  return forward(x, cache);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, ForwardCache& cache) const {
  if (layers_.empty()) throw ShapeError("forward on an empty network");
  if (x.size() != layers_.front().input_size()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(layers_.front().input_size()));
  }
  if (!x.allFinite()) throw std::domain_error("non-finite network input");
  cache.inputs.clear();
  cache.preactivations.clear();
  Eigen::VectorXd h = x;
  for (const auto& layer : layers_) {
    cache.inputs.push_back(h);
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    h = activate(z, layer.activation);
    cache.preactivations.push_back(std::move(z));
  }
  cache.output = h;
  return h;
}

Eigen::VectorXd Mlp::backward(const ForwardCache& cache, const Eigen::VectorXd& grad_output,
                              Gradient& grad) const {
  const auto& last = layers_.back();
  const Eigen::VectorXd slope =
      activation_slope(cache.preactivations.back(), cache.output, last.activation);
  return backward_from_preactivation(cache, grad_output.cwiseProduct(slope), grad);
}

Eigen::VectorXd Mlp::backward_from_preactivation(const ForwardCache& cache,
                                                 const Eigen::VectorXd& grad_preactivation,
                                                 Gradient& grad) const {
  if (cache.inputs.size() != layers_.size()) throw ShapeError("forward cache does not match network");
  if (grad.weight.empty()) grad = Gradient::zeros_like(*this);
  check_compatible(grad);
  Eigen::VectorXd delta = grad_preactivation;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    grad.weight[l].noalias() += delta * cache.inputs[l].transpose();
    grad.bias[l] += delta;
    Eigen::VectorXd upstream = layer.weight.transpose() * delta;
    if (l == 0) return upstream;
    const auto& prev = layers_[l - 1];
    delta = upstream.cwiseProduct(
        activation_slope(cache.preactivations[l - 1], cache.inputs[l], prev.activation));
  }
  return delta;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x, BatchCache& cache) const {
  if (layers_.empty()) throw ShapeError("forward on an empty network");
  if (x.rows() != layers_.front().input_size()) {
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(layers_.front().input_size()));
  }
  if (!x.allFinite()) throw std::domain_error("non-finite network input");
  cache.inputs.clear();
  cache.preactivations.clear();
  // Bag-of-words inputs are mostly zeros; the first product runs sparse.
  cache.sparse_input = x.sparseView();
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    cache.inputs.push_back(h);
    Eigen::MatrixXd z = l == 0 ? Eigen::MatrixXd(layer.weight * cache.sparse_input) : Eigen::MatrixXd(layer.weight * h);
    z.colwise() += layer.bias;
    h = activate(z, layer.activation);
    cache.preactivations.push_back(std::move(z));
  }
  cache.output = h;
  return h;
}

Eigen::MatrixXd Mlp::backward_batch(const BatchCache& cache, const Eigen::MatrixXd& grad_output,
                                    Gradient& grad, bool input_gradient) const {
  if (cache.inputs.size() != layers_.size()) throw ShapeError("forward cache does not match network");
  return backward_batch_from_preactivation(
      cache,
      grad_output.cwiseProduct(activation_slope(cache.preactivations.back(), cache.output, layers_.back().activation)),
      grad, input_gradient);
}

Eigen::MatrixXd Mlp::backward_batch_from_preactivation(const BatchCache& cache,
                                                       const Eigen::MatrixXd& grad_preactivation,
                                                       Gradient& grad, bool input_gradient) const {
  if (cache.inputs.size() != layers_.size()) throw ShapeError("forward cache does not match network");
  if (grad.weight.empty()) grad = Gradient::zeros_like(*this);
  check_compatible(grad);
  Eigen::MatrixXd delta = grad_preactivation;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (l == 0) {
      grad.weight[l] += delta * cache.sparse_input.transpose();
    } else {
      grad.weight[l].noalias() += delta * cache.inputs[l].transpose();
    }
    grad.bias[l] += delta.rowwise().sum();
    if (l == 0 && !input_gradient) return {};
    Eigen::MatrixXd upstream = layer.weight.transpose() * delta;
    if (l == 0) return upstream;
    delta = upstream.cwiseProduct(
        activation_slope(cache.preactivations[l - 1], cache.inputs[l], layers_[l - 1].activation));
  }
  return delta;
}

bool Mlp::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const Layer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

void Mlp::check_compatible(const Gradient& grad) const {
  if (grad.weight.size() != layers_.size() || grad.bias.size() != layers_.size()) {
    throw ShapeError("gradient layer count does not match network");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (grad.weight[l].rows() != layers_[l].weight.rows() ||
        grad.weight[l].cols() != layers_[l].weight.cols() ||
        grad.bias[l].size() != layers_[l].bias.size()) {
      throw ShapeError("gradient shape does not match layer " + std::to_string(l));
    }
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& x = a.layers_[l];
    const auto& y = b.layers_[l];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
        x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

Mlp train_step(const Mlp& params, const Gradient& grad, double lr) {
  params.check_compatible(grad);
  if (!grad.all_finite()) throw std::domain_error("non-finite gradient");
  std::vector<Layer> layers = params.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight -= lr * grad.weight[l];
    layers[l].bias -= lr * grad.bias[l];
  }
  return Mlp(std::move(layers));
}

double finite_diff_check(const Mlp& params, const LossFunction& loss,
                         const FiniteDiffOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-3) {
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  }
  const Gradient analytic = loss(params);
  if (!analytic.all_finite()) throw std::domain_error("finite_diff_check: non-finite loss");
  params.check_compatible(analytic);

  const std::size_t n = params.parameter_count();
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (n > options.max_coordinates) {
    Rng rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  Mlp probe = params;
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double original = params.parameter(i);
    probe.set_parameter(i, original + options.eps);
    const double up = loss(probe).loss;
    probe.set_parameter(i, original - options.eps);
    const double down = loss(probe).loss;
    probe.set_parameter(i, original);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_diff_check: non-finite loss");
    }
    const double numeric = (up - down) / (2.0 * options.eps);
    const double exact = analytic.value(i);
    const double denom = std::max({std::abs(exact), std::abs(numeric), options.floor});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
    }
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"in", layer.input_size()},
                      {"out", layer.output_size()},
                      {"activation", to_string(layer.activation)},
                      {"weight", std::move(w)},
                      {"bias", std::move(b)}});
  }
  return {{"format", "prefsum-mlp"}, {"version", 1}, {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "prefsum-mlp" || j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported network checkpoint format");
  }
  std::vector<Layer> layers;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
      throw ShapeError("checkpoint layer has inconsistent sizes");
    }
    Layer layer;
    layer.activation = activation_from_string(lj.at("activation").get<std::string>());
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
    }
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << to_json(net).dump() << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  return mlp_from_json(nlohmann::json::parse(in));
}

}  // namespace prefsum::nnet
