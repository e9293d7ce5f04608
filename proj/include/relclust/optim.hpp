#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"

namespace relclust {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Parameters are registered once (order defines
/// the gradient alignment) and updated in place.
class Adam {
  public:
    Adam(std::vector<Matrix*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Matrix* p : params_) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }

    void step(const std::vector<Matrix>& grads) {
        if (grads.size() != params_.size())
            throw contract_error("adam: got " + std::to_string(grads.size()) +
                                 " gradients for " + std::to_string(params_.size()) +
                                 " parameters");
        for (std::size_t k = 0; k < params_.size(); ++k)
            if (!grads[k].same_shape(*params_[k]))
                throw contract_error("adam: gradient " + std::to_string(k) + " shape " +
                                     grads[k].shape_str() + " does not match parameter " +
                                     params_[k]->shape_str());
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Matrix& p = *params_[k];
            Matrix& m = m_[k];
            Matrix& v = v_[k];
            const double* g = grads[k].data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                m.data()[i] = cfg_.beta1 * m.data()[i] + (1.0 - cfg_.beta1) * g[i];
                v.data()[i] = cfg_.beta2 * v.data()[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m.data()[i] / bc1;
                const double vhat = v.data()[i] / bc2;
                p.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            check_finite(p, "adam parameter update");
        }
    }

    // Serialization access (checkpointing).
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }
    const AdamConfig& config() const { return cfg_; }
    std::size_t param_count() const { return params_.size(); }

  private:
    std::vector<Matrix*> params_;
    AdamConfig cfg_;
    std::vector<Matrix> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace relclust
