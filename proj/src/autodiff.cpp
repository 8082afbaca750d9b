#include "met2net/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>

#include "met2net/param.hpp"

namespace met2net::autodiff {

thread_local bool GradMode::enabled_ = true;

bool any_tracked(std::initializer_list<std::reference_wrapper<const Tensor>> ts) {
    for (const auto& t : ts)
        if (t.get().tracked()) return true;
    return false;
}

void record(Tensor& out, const char* op, const std::vector<Tensor>& inputs,
            std::function<void(const Tensor&, const GradSink&)> fn) {
    if (!GradMode::enabled()) return;
    bool tracked = false;
    for (const auto& t : inputs)
        if (t.tracked()) { tracked = true; break; }
    if (!tracked) return;

    auto node = std::make_shared<Node>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(fn);
    node->shape = out.shape();
    node->dtype = out.dtype();
    out.set_node(std::move(node));
}

namespace {

void add_into(Tensor& acc, const Tensor& g) {
    dispatch(acc.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto a = acc.data<T>();
        auto b = g.data<T>();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    });
}

}  // namespace

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.tracked()) return;  // constant loss: nothing reachable

    // Iterative post-order DFS; each node visited exactly once.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx++].get();
            if (child && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, Tensor> grads;
    grads.emplace(loss.node().get(), Tensor::full({1}, 1.0, loss.dtype()));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto git = grads.find(node);
        if (git == grads.end()) continue;  // not reachable from the loss
        const Tensor& gout = git->second;  // element references survive rehash
        if (node->param) {
            if (node->param->trainable) add_into(node->param->grad, gout);
            continue;
        }
        if (node->backward) {
            node->backward(gout, [&](std::size_t slot, const Tensor& g) {
                Node* in = node->inputs.at(slot).get();
                if (!in) return;
                auto [pos, inserted] = grads.try_emplace(in, Tensor());
                if (inserted)
                    pos->second = g.clone();
                else
                    add_into(pos->second, g);
            });
        }
        grads.erase(node);  // free as we go
    }
}

}  // namespace met2net::autodiff
