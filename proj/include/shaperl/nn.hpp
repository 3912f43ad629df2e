#pragma once

#include <string>
#include <vector>

#include "shaperl/rng.hpp"

namespace shaperl {

// Dense rectifier network over flat parameter storage.  Hidden layers use
// ReLU; the output layer is affine, optionally rectified as well so a network
// can serve as the shared trunk beneath several heads.
struct MlpSpec {
  int in_dim = 0;
  std::vector<int> hidden;
  int out_dim = 0;
  bool relu_output = false;
};

class Mlp {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  int n_params() const { return n_params_; }
  int n_layers() const { return static_cast<int>(dims_.size()) - 1; }

  // Activations retained for the exact backward pass.  h[0] is the input
  // batch; h[l] for l >= 1 holds layer l's (possibly rectified) outputs.
  struct Cache {
    int batch = 0;
    std::vector<std::vector<double>> h;
  };

  // x is row-major (batch x in_dim); y becomes row-major (batch x out_dim).
  void forward(const std::vector<double>& params, const double* x, int batch,
               Cache& cache, std::vector<double>& y) const;

  // dy is row-major (batch x out_dim).  Parameter gradients are ACCUMULATED
  // into grad (callers zero it between optimizer steps); dx, when non-null,
  // is overwritten with the input gradients (batch x in_dim).
  void backward(const std::vector<double>& params, const Cache& cache,
                const double* dy, std::vector<double>& grad, double* dx) const;

  // Glorot-uniform weights, zero biases; the final layer's weights are scaled
  // down by last_scale to start heads near zero.
  void init_params(std::vector<double>& params, Rng& rng,
                   double last_scale = 1.0) const;

  int weight_offset(int layer) const { return w_off_[layer]; }
  int bias_offset(int layer) const { return b_off_[layer]; }
  int layer_in(int layer) const { return dims_[layer]; }
  int layer_out(int layer) const { return dims_[layer + 1]; }

 private:
  MlpSpec spec_;
  std::vector<int> dims_;   // in_dim, hidden..., out_dim
  std::vector<int> w_off_, b_off_;
  int n_params_ = 0;
};

// Decoupled-weight-decay Adam over one flat parameter vector.
struct AdamW {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  std::vector<double> m, v;
  long long t = 0;

  // Throws RuntimeFault naming `tensor` if grad has a non-finite entry.
  void step(std::vector<double>& params, const std::vector<double>& grad,
            const std::string& tensor);
};

// Tanh-squashed Gaussian policy head over a raw head output laid out as
// [mean(n) | log_std(n)].
struct SquashConfig {
  double log_std_lo = -20.0;
  double log_std_hi = 2.0;
};

struct SquashSample {
  std::vector<double> action;   // in (-1, 1)^n
  std::vector<double> mean;
  std::vector<double> sigma;    // after the log_std clamp
  std::vector<double> eps;      // the unit normal draws used
  std::vector<bool> clamped;    // true where log_std hit the band edge
  double logp = 0.0;
};

void squash_sample(const double* head, int n_act, const SquashConfig& cfg,
                   Rng& rng, SquashSample& out);

// Same transform with caller-supplied unit normal draws (n_act of them), so
// replayed noise gives bit-identical samples.
void squash_sample_with_eps(const double* head, int n_act,
                            const SquashConfig& cfg, const double* eps,
                            SquashSample& out);

// log-probability of the given pre-squash noise draw (used by both the
// sampler and the density tests).
double squash_logp(const SquashSample& s);

// Deterministic action: tanh(mean).
void squash_mean_action(const double* head, int n_act, double* action);

// Reverse-mode through the sample: dlogp scales the log-prob path, daction
// (may be null) the action path; gradients accumulate into dhead (2n wide).
void squash_backward(const SquashSample& s, double dlogp, const double* daction,
                     double* dhead);

}  // namespace shaperl
