#include "deermc/targets/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "deermc/core/errors.hpp"

namespace deermc {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// log(1 + exp(z))
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class StdNormal final : public TargetModel {
 public:
  explicit StdNormal(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const noexcept override { return dim_; }
  double logp(std::span<const double> x) const override { return -0.5 * dot(x, x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = -x[i];
  }
  void hvp(std::span<const double>, std::span<const double> v,
           std::span<double> out) const override {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = -v[i];
  }

 private:
  std::size_t dim_;
};

class Gaussian final : public TargetModel {
 public:
  Gaussian(std::vector<double> mean, const std::vector<double>& chol)
      : dim_(mean.size()), mean_(std::move(mean)), prec_(dim_ * dim_, 0.0) {
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j)
        for (std::size_t k = 0; k <= std::min(i, j); ++k)
          prec_[i * dim_ + j] += chol[i * dim_ + k] * chol[j * dim_ + k];
  }
  std::size_t dim() const noexcept override { return dim_; }
  double logp(std::span<const double> x) const override {
    std::vector<double> g(dim_);
    return logp_grad(x, g);
  }
  void grad(std::span<const double> x, std::span<double> out) const override { logp_grad(x, out); }
  double logp_grad(std::span<const double> x, std::span<double> out) const override {
    double lp = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) acc += prec_[i * dim_ + j] * (x[j] - mean_[j]);
      out[i] = -acc;
      lp -= 0.5 * (x[i] - mean_[i]) * acc;
    }
    return lp;
  }
  void hvp(std::span<const double>, std::span<const double> v,
           std::span<double> out) const override {
    for (std::size_t i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) acc += prec_[i * dim_ + j] * v[j];
      out[i] = -acc;
    }
  }

 private:
  std::size_t dim_;
  std::vector<double> mean_;
  std::vector<double> prec_;
};

class Rosenbrock final : public TargetModel {
 public:
  Rosenbrock(double a, double b, double v1, double v2) : a_(a), b_(b), v1_(v1), v2_(v2) {}
  std::size_t dim() const noexcept override { return 2; }
  double logp(std::span<const double> x) const override {
    const double r = x[1] - b_ * x[0] * x[0];
    return -(x[0] - a_) * (x[0] - a_) / (2 * v1_) - r * r / (2 * v2_);
  }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const double r = x[1] - b_ * x[0] * x[0];
    out[0] = -(x[0] - a_) / v1_ + r * 2 * b_ * x[0] / v2_;
    out[1] = -r / v2_;
  }
  void hvp(std::span<const double> x, std::span<const double> v,
           std::span<double> out) const override {
    const double r = x[1] - b_ * x[0] * x[0];
    const double h11 = -1 / v1_ + 2 * b_ * (r - 2 * b_ * x[0] * x[0]) / v2_;
    const double h12 = 2 * b_ * x[0] / v2_;
    const double h22 = -1 / v2_;
    out[0] = h11 * v[0] + h12 * v[1];
    out[1] = h12 * v[0] + h22 * v[1];
  }

 private:
  double a_, b_, v1_, v2_;
};

class Mixture final : public TargetModel {
 public:
  Mixture(std::size_t dim, const std::vector<double>& w, std::vector<double> means,
          std::vector<double> vars)
      : dim_(dim), k_(w.size()), means_(std::move(means)), vars_(std::move(vars)) {
    for (std::size_t c = 0; c < k_; ++c)
      log_norm_.push_back(std::log(w[c]) -
                          0.5 * dim_ * std::log(2 * std::numbers::pi * vars_[c]));
  }
  std::size_t dim() const noexcept override { return dim_; }
  double logp(std::span<const double> x) const override {
    std::vector<double> lw(k_);
    return log_weights(x, lw);
  }
  void grad(std::span<const double> x, std::span<double> out) const override { logp_grad(x, out); }
  double logp_grad(std::span<const double> x, std::span<double> out) const override {
    std::vector<double> lw(k_);
    const double lse = log_weights(x, lw);
    std::ranges::fill(out, 0.0);
    for (std::size_t c = 0; c < k_; ++c) {
      const double r = std::exp(lw[c] - lse);
      for (std::size_t i = 0; i < dim_; ++i) out[i] -= r * (x[i] - means_[c * dim_ + i]) / vars_[c];
    }
    return lse;
  }
  // H = sum_c r_c (g_c g_c^T - I / var_c) - g g^T
  void hvp(std::span<const double> x, std::span<const double> v,
           std::span<double> out) const override {
    std::vector<double> lw(k_), g(dim_, 0.0), gc(dim_);
    const double lse = log_weights(x, lw);
    std::ranges::fill(out, 0.0);
    for (std::size_t c = 0; c < k_; ++c) {
      const double r = std::exp(lw[c] - lse);
      for (std::size_t i = 0; i < dim_; ++i) gc[i] = -(x[i] - means_[c * dim_ + i]) / vars_[c];
      const double gv = dot(gc, v);
      for (std::size_t i = 0; i < dim_; ++i) {
        out[i] += r * (gc[i] * gv - v[i] / vars_[c]);
        g[i] += r * gc[i];
      }
    }
    const double gv = dot(g, v);
    for (std::size_t i = 0; i < dim_; ++i) out[i] -= g[i] * gv;
  }

 private:
  // per-component log joint, returns log-sum-exp
  double log_weights(std::span<const double> x, std::span<double> lw) const {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k_; ++c) {
      double sq = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double d = x[i] - means_[c * dim_ + i];
        sq += d * d;
      }
      lw[c] = log_norm_[c] - sq / (2 * vars_[c]);
      mx = std::max(mx, lw[c]);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k_; ++c) s += std::exp(lw[c] - mx);
    return mx + std::log(s);
  }

  std::size_t dim_, k_;
  std::vector<double> means_, vars_, log_norm_;
};

class LogisticRegression final : public TargetModel {
 public:
  LogisticRegression(Dataset data, double prec) : data_(std::move(data)), prec_(prec) {}
  std::size_t dim() const noexcept override { return data_.cols; }
  double logp(std::span<const double> b) const override {
    double lp = -0.5 * prec_ * dot(b, b);
    for (std::size_t n = 0; n < data_.rows; ++n) {
      const double z = dot(row(n), b);
      lp += data_.y[n] * z - softplus(z);
    }
    return lp;
  }
  void grad(std::span<const double> b, std::span<double> out) const override { logp_grad(b, out); }
  double logp_grad(std::span<const double> b, std::span<double> out) const override {
    return logp_grad_hvp(b, out, {}, {});
  }
  double logp_grad_hvp(std::span<const double> b, std::span<double> out,
                       std::span<const double> tangents, std::span<double> hv) const override {
    const std::size_t d = data_.cols;
    const std::size_t k = tangents.size() / d;
    double lp = -0.5 * prec_ * dot(b, b);
    for (std::size_t i = 0; i < d; ++i) out[i] = -prec_ * b[i];
    for (std::size_t j = 0; j < k * d; ++j) hv[j] = -prec_ * tangents[j];
    for (std::size_t n = 0; n < data_.rows; ++n) {
      const auto xn = row(n);
      const double z = dot(xn, b);
      lp += data_.y[n] * z - softplus(z);
      const double s = sigmoid(z);
      const double r = data_.y[n] - s;
      for (std::size_t i = 0; i < d; ++i) out[i] += r * xn[i];
      const double w = s * (1 - s);
      for (std::size_t j = 0; j < k; ++j) {
        const double c = w * dot(xn, tangents.subspan(j * d, d));
        for (std::size_t i = 0; i < d; ++i) hv[j * d + i] -= c * xn[i];
      }
    }
    return lp;
  }
  void hvp(std::span<const double> b, std::span<const double> v,
           std::span<double> out) const override {
    const std::size_t d = data_.cols;
    for (std::size_t i = 0; i < d; ++i) out[i] = -prec_ * v[i];
    for (std::size_t n = 0; n < data_.rows; ++n) {
      const auto xn = row(n);
      const double s = sigmoid(dot(xn, b));
      const double c = s * (1 - s) * dot(xn, v);
      for (std::size_t i = 0; i < d; ++i) out[i] -= c * xn[i];
    }
  }

 private:
  std::span<const double> row(std::size_t n) const {
    return {data_.x.data() + n * data_.cols, data_.cols};
  }
  Dataset data_;
  double prec_;
};

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::std_normal:
      return "std-normal";
    case ModelKind::gaussian:
      return "gaussian";
    case ModelKind::rosenbrock:
      return "rosenbrock";
    case ModelKind::mog:
      return "mog";
    case ModelKind::blr:
      return "blr";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  for (auto k : {ModelKind::std_normal, ModelKind::gaussian, ModelKind::rosenbrock, ModelKind::mog,
                 ModelKind::blr})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown target '" + text + "'");
}

void ModelSpec::validate() const {
  if (dim == 0) throw ConfigError("target dimension must be positive");
  switch (kind) {
    case ModelKind::std_normal:
      return;
    case ModelKind::gaussian:
      if (mean.size() != dim || precision_chol.size() != dim * dim)
        throw ConfigError("gaussian: mean / Cholesky factor size mismatch");
      for (std::size_t i = 0; i < dim; ++i)
        if (!(precision_chol[i * dim + i] > 0)) throw ConfigError("gaussian: Cholesky diagonal must be positive");
      return;
    case ModelKind::rosenbrock:
      if (dim != 2) throw ConfigError("rosenbrock is two-dimensional");
      if (!(rosen_var1 > 0 && rosen_var2 > 0)) throw ConfigError("rosenbrock variances must be positive");
      return;
    case ModelKind::mog: {
      const std::size_t k = weights.size();
      if (k == 0 || means.size() != k * dim || variances.size() != k)
        throw ConfigError("mog: weights / means / variances size mismatch");
      double total = 0;
      for (double w : weights) {
        if (!(w > 0)) throw ConfigError("mog weights must be positive");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mog weights must sum to 1");
      for (double v : variances)
        if (!(v > 0)) throw ConfigError("mog variances must be positive");
      return;
    }
    case ModelKind::blr:
      if (!(prior_precision > 0)) throw ConfigError("blr prior precision must be positive");
      if (data.rows == 0 || data.cols != dim || data.x.size() != data.rows * data.cols ||
          data.y.size() != data.rows)
        throw ConfigError("blr: design matrix and labels disagree in shape");
      return;
  }
}

ModelSpec default_mog_spec() {
  ModelSpec s;
  s.kind = ModelKind::mog;
  s.dim = 2;
  s.weights = {0.25, 0.25, 0.25, 0.25};
  s.means = {3, 3, 3, -3, -3, 3, -3, -3};
  s.variances = {1, 1, 1, 1};
  return s;
}

ModelSpec std_normal_spec(std::size_t dim) {
  ModelSpec s;
  s.dim = dim;
  return s;
}

ModelSpec rosenbrock_spec(double a, double b, double var1, double var2) {
  ModelSpec s;
  s.kind = ModelKind::rosenbrock;
  s.dim = 2;
  s.rosen_a = a;
  s.rosen_b = b;
  s.rosen_var1 = var1;
  s.rosen_var2 = var2;
  return s;
}

ModelSpec gaussian_spec_from_covariance(std::vector<double> mean, const std::vector<double>& cov) {
  const std::size_t d = mean.size();
  if (cov.size() != d * d) throw ConfigError("gaussian: covariance size mismatch");
  // precision = cov^-1 via Cholesky of cov: cov = C C^T, precision = C^-T C^-1
  std::vector<double> c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = cov[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= c[i * d + k] * c[j * d + k];
      if (i == j) {
        if (!(s > 0)) throw ConfigError("gaussian: covariance is not positive definite");
        c[i * d + i] = std::sqrt(s);
      } else {
        c[i * d + j] = s / c[j * d + j];
      }
    }
  std::vector<double> inv(d * d, 0.0);  // C^-1, lower triangular
  for (std::size_t j = 0; j < d; ++j) {
    inv[j * d + j] = 1.0 / c[j * d + j];
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = 0;
      for (std::size_t k = j; k < i; ++k) s -= c[i * d + k] * inv[k * d + j];
      inv[i * d + j] = s / c[i * d + i];
    }
  }
  std::vector<double> prec(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) prec[i * d + j] += inv[k * d + i] * inv[k * d + j];
  std::vector<double> l(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = prec[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
      l[i * d + j] = i == j ? std::sqrt(s) : s / l[j * d + j];
    }
  ModelSpec s;
  s.kind = ModelKind::gaussian;
  s.dim = d;
  s.mean = std::move(mean);
  s.precision_chol = std::move(l);
  return s;
}

ModelSpec blr_spec(Dataset data, double prior_precision) {
  ModelSpec s;
  s.kind = ModelKind::blr;
  s.dim = data.cols;
  s.data = std::move(data);
  s.prior_precision = prior_precision;
  return s;
}

TargetModelPtr make_model(const ModelSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ModelKind::std_normal:
      return std::make_shared<StdNormal>(spec.dim);
    case ModelKind::gaussian:
      return std::make_shared<Gaussian>(spec.mean, spec.precision_chol);
    case ModelKind::rosenbrock:
      return std::make_shared<Rosenbrock>(spec.rosen_a, spec.rosen_b, spec.rosen_var1,
                                          spec.rosen_var2);
    case ModelKind::mog:
      return std::make_shared<Mixture>(spec.dim, spec.weights, spec.means, spec.variances);
    case ModelKind::blr:
      return std::make_shared<LogisticRegression>(spec.data, spec.prior_precision);
  }
  throw ConfigError("unknown model kind");
}

StateSequence exact_samples(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  const std::size_t d = spec.dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  StateSequence out(n, d);
  switch (spec.kind) {
    case ModelKind::std_normal:
      for (auto& v : out.data()) v = z(rng);
      return out;
    case ModelKind::gaussian: {
      // x = mean + L^-T z
      const auto& l = spec.precision_chol;
      std::vector<double> w(d);
      for (std::size_t r = 0; r < n; ++r) {
        for (auto& v : w) v = z(rng);
        for (std::size_t i = d; i-- > 0;) {
          double s = w[i];
          for (std::size_t k = i + 1; k < d; ++k) s -= l[k * d + i] * w[k];
          w[i] = s / l[i * d + i];
        }
        for (std::size_t i = 0; i < d; ++i) out(r, i) = spec.mean[i] + w[i];
      }
      return out;
    }
    case ModelKind::rosenbrock:
      for (std::size_t r = 0; r < n; ++r) {
        const double x1 = spec.rosen_a + std::sqrt(spec.rosen_var1) * z(rng);
        out(r, 0) = x1;
        out(r, 1) = spec.rosen_b * x1 * x1 + std::sqrt(spec.rosen_var2) * z(rng);
      }
      return out;
    case ModelKind::mog: {
      std::discrete_distribution<std::size_t> comp(spec.weights.begin(), spec.weights.end());
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t k = comp(rng);
        const double sd = std::sqrt(spec.variances[k]);
        for (std::size_t i = 0; i < d; ++i) out(r, i) = spec.means[k * d + i] + sd * z(rng);
      }
      return out;
    }
    case ModelKind::blr:
      break;
  }
  throw ConfigError("no exact sampler for target " + to_string(spec.kind));
}

}  // namespace deermc
