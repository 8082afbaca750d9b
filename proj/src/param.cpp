#include "met2net/param.hpp"

namespace met2net {

void ParameterCollection::add(Parameter* p) {
    for (const auto* q : params_) {
        if (q->path == p->path) {
            throw ConfigError("ParameterCollection: duplicate parameter path '" + p->path + "'");
        }
    }
    params_.push_back(p);
}

void ParameterCollection::extend(const ParameterCollection& other) {
    for (auto* p : other.params_) add(p);
}

Parameter* ParameterCollection::find(const std::string& path) const {
    for (auto* p : params_)
        if (p->path == path) return p;
    return nullptr;
}

std::int64_t ParameterCollection::total_elements() const {
    std::int64_t n = 0;
    for (const auto* p : params_) n += p->value.numel();
    return n;
}

void ParameterCollection::zero_grads() const {
    for (auto* p : params_) p->zero_grad();
}

}  // namespace met2net
