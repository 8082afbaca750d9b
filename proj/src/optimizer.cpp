#include "met2net/optimizer.hpp"

#include <cmath>

namespace met2net {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ConfigError("Adam: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("Adam: betas must lie in [0,1)");
    }
    if (eps <= 0.0) throw ConfigError("Adam: eps must be positive");
}

void Adam::step(const ParameterCollection& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        auto it = state_.find(p->path);
        if (it == state_.end()) {
            it = state_.emplace(p->path,
                                Moments{Tensor::zeros(p->value.shape(), p->value.dtype()),
                                        Tensor::zeros(p->value.shape(), p->value.dtype())})
                     .first;
        }
        Moments& st = it->second;
        if (!st.m.same_shape(p->value)) {
            throw ShapeError("Adam: stale moments for '" + p->path + "': " +
                             shape_str(st.m.shape()) + " vs " + shape_str(p->value.shape()));
        }
        dispatch(p->value.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto val = p->value.data<T>();
            auto grd = p->grad.data<T>();
            auto m = st.m.data<T>();
            auto v = st.v.data<T>();
            for (std::size_t i = 0; i < val.size(); ++i) {
                const double g = static_cast<double>(grd[i]);
                const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g;
                const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                val[i] = static_cast<T>(static_cast<double>(val[i]) -
                                        lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        });
        p->zero_grad();
    }
}

}  // namespace met2net
