#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "json.hpp"

// Small fully connected networks with hand-written backward passes. All
// parameter updates are functional: train_step returns a new network.
namespace prefsum::nnet {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Activation { kIdentity, kTanh, kSigmoid };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;

  Eigen::Index input_size() const { return weight.cols(); }
  Eigen::Index output_size() const { return weight.rows(); }
};

// Activations recorded by a forward pass: the input to every layer and
// every pre-activation vector.
struct ForwardCache {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> preactivations;
  Eigen::VectorXd output;
};

// Same as ForwardCache with one column per sample.
struct BatchCache {
  Eigen::SparseMatrix<double> sparse_input;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preactivations;
  Eigen::MatrixXd output;
};

class Mlp;

// Partials aligned with an Mlp's layers plus the loss they differentiate.
struct Gradient {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  double loss = 0.0;

  static Gradient zeros_like(const Mlp& net);

  std::size_t parameter_count() const;
  double value(std::size_t flat_index) const;
  bool all_finite() const;
  Gradient& operator+=(const Gradient& other);
  Gradient& operator*=(double scale);
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  // sizes has one more entry than activations. Weights and biases are drawn
  // uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp create(const std::vector<std::size_t>& sizes,
                    const std::vector<Activation>& activations, std::uint64_t seed);
  static Mlp zeros(const std::vector<std::size_t>& sizes,
                   const std::vector<Activation>& activations);

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;
  std::vector<std::size_t> sizes() const;

  // Flat view in layer order: weights row-major, then biases.
  double parameter(std::size_t flat_index) const;
  void set_parameter(std::size_t flat_index, double value);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x, ForwardCache& cache) const;

  // Accumulates dLoss/dparams into grad given dLoss/doutput and returns
  // dLoss/dinput.
  Eigen::VectorXd backward(const ForwardCache& cache, const Eigen::VectorXd& grad_output,
                           Gradient& grad) const;
  // Same, but starting from dLoss/d(last pre-activation). Used when the
  // caller differentiates through the output nonlinearity analytically
  // (log-sigmoid terms) to avoid 0 * inf at saturation.
  Eigen::VectorXd backward_from_preactivation(const ForwardCache& cache,
                                              const Eigen::VectorXd& grad_preactivation,
                                              Gradient& grad) const;

  // Column-per-sample variants; the gradient is summed over the columns.
  // Without input_gradient the returned matrix is empty.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, BatchCache& cache) const;
  Eigen::MatrixXd backward_batch(const BatchCache& cache, const Eigen::MatrixXd& grad_output,
                                 Gradient& grad, bool input_gradient = true) const;
  Eigen::MatrixXd backward_batch_from_preactivation(const BatchCache& cache,
                                                    const Eigen::MatrixXd& grad_preactivation,
                                                    Gradient& grad, bool input_gradient = true) const;

  bool all_finite() const;
  void check_compatible(const Gradient& grad) const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  double* locate(std::size_t flat_index);

  std::vector<Layer> layers_;
};

// p' = p - lr * g. Throws ShapeError on mismatch and std::domain_error on
// a non-finite gradient.
Mlp train_step(const Mlp& params, const Gradient& grad, double lr);

// Returns the loss and its analytic gradient at the given parameters.
using LossFunction = std::function<Gradient(const Mlp&)>;

struct FiniteDiffOptions {
  double eps = 1e-6;
  // Coordinates compared; all of them when the network is smaller.
  std::size_t max_coordinates = 200;
  std::uint64_t seed = 0;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double floor = 1e-6;
};

// Central-difference check of the analytic gradient; returns the maximum
// relative error over the sampled coordinates.
double finite_diff_check(const Mlp& params, const LossFunction& loss,
                         const FiniteDiffOptions& options = {});

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace prefsum::nnet
