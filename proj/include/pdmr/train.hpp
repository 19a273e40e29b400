#pragma once

#include "pdmr/core.hpp"
#include "pdmr/nn.hpp"
#include "pdmr/recon.hpp"
#include "pdmr/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pdmr {

struct TrainConfig
{
  int epochs = 100;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  NetworkSpec net;

  void validate() const;
};

/// ‖ref − est‖₂/‖ref‖₂ + ‖ref − est‖₁/‖ref‖₁ over complex elements (modulus for ℓ1).
template <typename T>
double loss_normalized_l1l2(Image<T> const &ref, Image<T> const &est);

/// ∂L/∂Re(est) + i·∂L/∂Im(est). Elements with ref = est contribute 0 to the ℓ1 part.
template <typename T>
Image<T> loss_gradient(Image<T> const &ref, Image<T> const &est);

struct BackpropResult
{
  double loss = 0.0;
  TensorMap<double> grads;
};

/// Loss of resnet(x) against ref and its gradient with respect to every parameter, in F64.
BackpropResult backprop_resnet(ComplexImageD const &x, ComplexImageD const &ref, NetworkSpec const &spec,
                               TensorMap<double> const &params);

BackpropResult backprop_resnet(ComplexImage const &x, ComplexImage const &ref, WeightStore const &w);

TensorMap<double> to_double(TensorMap<float> const &t);
TensorMap<float> to_float(TensorMap<double> const &t);

/// He-uniform convolution weights (bound √(6/fan_in)), tail scaled by 0.1, zero biases.
TensorMap<double> init_parameters(NetworkSpec const &spec, std::uint64_t seed);

struct TrainingPair
{
  ComplexImage input;
  ComplexImage target;
};

/// What the network sees as its corrupted input during training.
enum class TrainingInputs {
  ZeroFilled, // Eᴴy
  CgSense,    // the clinical baseline
  Iterates,   // every regularizer input of an unrolled run (identity regularizer unless weights are given)
};

/// Pairs each selected input image of every dataset with its ground truth.
std::vector<TrainingPair> make_training_pairs(std::vector<Dataset> const &suite, TrainingInputs kind,
                                              UnrollConfig const &cfg, RegularizerWeights const &weights = {});

/// `per_pair` random size×size crops (same window for input and target) of every pair.
std::vector<TrainingPair> crop_patches(std::vector<TrainingPair> const &pairs, long size, int per_pair,
                                       std::uint64_t seed);

struct TrainResult
{
  WeightStore weights;
  /// Entry 0 is the mean loss of the initialized network over the whole set;
  /// entry e ≥ 1 is the mean minibatch loss seen during epoch e.
  std::vector<double> loss_log;
};

/// Adam on the normalized ℓ1-ℓ2 loss; minibatch gradients are the mean of
/// per-sample gradients accumulated in dataset order.
TrainResult train_denoiser(std::vector<TrainingPair> const &dataset, TrainConfig const &cfg);

struct GradCheckReport
{
  double max_rel_error = 0.0;
  std::string worst_parameter;
  long checked = 0;
  long skipped = 0; // perturbation crossed a ReLU kink
  double loss = 0.0;
};

/// Central finite differences over every scalar parameter of a randomly
/// initialized network on a random size×size input, in F64.
GradCheckReport gradient_check(NetworkSpec const &spec, long size, std::uint64_t seed, double step = 1e-5);

} // namespace pdmr
