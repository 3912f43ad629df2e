#include "shaperl/nn.hpp"

#include <cmath>
#include <cstring>

#include "shaperl/errors.hpp"

namespace shaperl {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
constexpr double kLog2 = 0.69314718055994530942;

// tanh rounds to exactly +/-1 for |u| beyond ~19; keep actions strictly
// inside the box as the interface promises.
double tanh_interior(double u) {
  const double lim = 1.0 - 1e-12;
  const double a = std::tanh(u);
  return a > lim ? lim : (a < -lim ? -lim : a);
}

}  // namespace

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_dim < 1 || spec_.out_dim < 1)
    throw ValidationError("mlp: input and output dims must be >= 1");
  dims_.push_back(spec_.in_dim);
  for (int h : spec_.hidden) {
    if (h < 1) throw ValidationError("mlp: hidden dims must be >= 1");
    dims_.push_back(h);
  }
  dims_.push_back(spec_.out_dim);
  for (int l = 0; l + 1 < static_cast<int>(dims_.size()); ++l) {
    w_off_.push_back(n_params_);
    n_params_ += dims_[l] * dims_[l + 1];
    b_off_.push_back(n_params_);
    n_params_ += dims_[l + 1];
  }
}

void Mlp::forward(const std::vector<double>& params, const double* x, int batch,
                  Cache& cache, std::vector<double>& y) const {
  if (static_cast<int>(params.size()) != n_params_)
    throw ValidationError("mlp forward: parameter vector has the wrong size");
  if (batch < 1) throw ValidationError("mlp forward: batch must be >= 1");
  const int L = n_layers();
  cache.batch = batch;
  cache.h.resize(L + 1);
  cache.h[0].assign(x, x + static_cast<size_t>(batch) * dims_[0]);
  for (int l = 0; l < L; ++l) {
    const int in = dims_[l], out = dims_[l + 1];
    const double* w = params.data() + w_off_[l];
    const double* b = params.data() + b_off_[l];
    const bool relu = (l + 1 < L) || spec_.relu_output;
    auto& hin = cache.h[l];
    auto& hout = cache.h[l + 1];
    hout.assign(static_cast<size_t>(batch) * out, 0.0);
    for (int n = 0; n < batch; ++n) {
      const double* xi = hin.data() + static_cast<size_t>(n) * in;
      double* yo = hout.data() + static_cast<size_t>(n) * out;
      for (int o = 0; o < out; ++o) {
        const double* wr = w + static_cast<size_t>(o) * in;
        double s = b[o];
        for (int i = 0; i < in; ++i) s += wr[i] * xi[i];
        yo[o] = relu ? (s > 0.0 ? s : 0.0) : s;
      }
    }
  }
  y = cache.h[L];
}

void Mlp::backward(const std::vector<double>& params, const Cache& cache,
                   const double* dy, std::vector<double>& grad,
                   double* dx) const {
  if (static_cast<int>(params.size()) != n_params_ ||
      static_cast<int>(grad.size()) != n_params_)
    throw ValidationError("mlp backward: parameter/gradient size mismatch");
  if (static_cast<int>(cache.h.size()) != n_layers() + 1)
    throw ValidationError("mlp backward: cache does not match this network");
  const int L = n_layers();
  const int batch = cache.batch;
  std::vector<double> d(dy, dy + static_cast<size_t>(batch) * dims_[L]);
  std::vector<double> d_prev;
  for (int l = L - 1; l >= 0; --l) {
    const int in = dims_[l], out = dims_[l + 1];
    const double* w = params.data() + w_off_[l];
    double* gw = grad.data() + w_off_[l];
    double* gb = grad.data() + b_off_[l];
    const bool relu = (l + 1 < L) || spec_.relu_output;
    const auto& hout = cache.h[l + 1];
    const auto& hin = cache.h[l];
    if (relu) {
      for (size_t i = 0; i < d.size(); ++i)
        if (hout[i] <= 0.0) d[i] = 0.0;
    }
    const bool need_dx = (l > 0) || (dx != nullptr);
    if (need_dx) d_prev.assign(static_cast<size_t>(batch) * in, 0.0);
    for (int n = 0; n < batch; ++n) {
      const double* dn = d.data() + static_cast<size_t>(n) * out;
      const double* xi = hin.data() + static_cast<size_t>(n) * in;
      double* dp = need_dx ? d_prev.data() + static_cast<size_t>(n) * in : nullptr;
      for (int o = 0; o < out; ++o) {
        const double g = dn[o];
        if (g == 0.0) continue;
        gb[o] += g;
        double* gwr = gw + static_cast<size_t>(o) * in;
        const double* wr = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          gwr[i] += g * xi[i];
          if (dp != nullptr) dp[i] += g * wr[i];
        }
      }
    }
    if (l > 0)
      d.swap(d_prev);
    else if (dx != nullptr)
      std::memcpy(dx, d_prev.data(), d_prev.size() * sizeof(double));
  }
}

void Mlp::init_params(std::vector<double>& params, Rng& rng,
                      double last_scale) const {
  params.assign(n_params_, 0.0);
  const int L = n_layers();
  for (int l = 0; l < L; ++l) {
    const int in = dims_[l], out = dims_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    const double scale = (l == L - 1) ? last_scale : 1.0;
    double* w = params.data() + w_off_[l];
    for (int k = 0; k < in * out; ++k)
      w[k] = scale * rng.uniform(-limit, limit);
    // biases stay zero
  }
}

void AdamW::step(std::vector<double>& params, const std::vector<double>& grad,
                 const std::string& tensor) {
  if (params.size() != grad.size())
    throw ValidationError("adamw: parameter/gradient size mismatch for " + tensor);
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (m.size() != params.size())
    throw ValidationError("adamw: optimizer state size mismatch for " + tensor);
  for (double g : grad) {
    if (!std::isfinite(g))
      throw RuntimeFault("adamw: non-finite gradient in " + tensor);
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
  }
}

void squash_sample_with_eps(const double* head, int n_act,
                            const SquashConfig& cfg, const double* eps,
                            SquashSample& out) {
  out.action.resize(n_act);
  out.mean.resize(n_act);
  out.sigma.resize(n_act);
  out.eps.assign(eps, eps + n_act);
  out.clamped.assign(n_act, false);
  for (int i = 0; i < n_act; ++i) {
    const double mu = head[i];
    double ls = head[n_act + i];
    if (ls < cfg.log_std_lo) {
      ls = cfg.log_std_lo;
      out.clamped[i] = true;
    } else if (ls > cfg.log_std_hi) {
      ls = cfg.log_std_hi;
      out.clamped[i] = true;
    }
    const double sigma = std::exp(ls);
    out.mean[i] = mu;
    out.sigma[i] = sigma;
    out.action[i] = tanh_interior(mu + sigma * out.eps[i]);
  }
  out.logp = squash_logp(out);
}

void squash_sample(const double* head, int n_act, const SquashConfig& cfg,
                   Rng& rng, SquashSample& out) {
  std::vector<double> eps(static_cast<size_t>(n_act));
  for (double& e : eps) e = rng.normal();
  squash_sample_with_eps(head, n_act, cfg, eps.data(), out);
}

double squash_logp(const SquashSample& s) {
  double lp = 0.0;
  for (size_t i = 0; i < s.action.size(); ++i) {
    const double u = s.mean[i] + s.sigma[i] * s.eps[i];
    lp += -0.5 * s.eps[i] * s.eps[i] - kHalfLog2Pi - std::log(s.sigma[i]);
    // log(1 - tanh(u)^2) in a cancellation-free form
    lp -= 2.0 * (kLog2 - u - softplus(-2.0 * u));
  }
  return lp;
}

void squash_mean_action(const double* head, int n_act, double* action) {
  for (int i = 0; i < n_act; ++i) action[i] = tanh_interior(head[i]);
}

void squash_backward(const SquashSample& s, double dlogp, const double* daction,
                     double* dhead) {
  const int n = static_cast<int>(s.action.size());
  for (int i = 0; i < n; ++i) {
    const double a = s.action[i];
    const double one_m_a2 = 1.0 - a * a;
    const double se = s.sigma[i] * s.eps[i];
    double dmu = dlogp * 2.0 * a;
    double dls = dlogp * (2.0 * a * se - 1.0);
    if (daction != nullptr) {
      dmu += daction[i] * one_m_a2;
      dls += daction[i] * one_m_a2 * s.eps[i] * s.sigma[i];
    }
    if (s.clamped[i]) dls = 0.0;
    dhead[i] += dmu;
    dhead[n + i] += dls;
  }
}

}  // namespace shaperl
