#include "sagc/autodiff.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "sagc/errors.hpp"
#include "sagc/kernels.hpp"

namespace sagc::autodiff {
namespace {

void accumulate(Tensor2& dst, const Tensor2& src) {
    kernels::active().axpy(1.0, src.data.data(), dst.data.data(), dst.size());
}

bool any_needs_grad(const std::vector<NodePtr>& parents) {
    return std::any_of(parents.begin(), parents.end(),
                       [](const NodePtr& p) { return p->needs_grad; });
}

} // namespace

void Node::zero_grad() {
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

NodePtr leaf(Tensor2 value) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor2(value.rows, value.cols);
    n->value = std::move(value);
    n->needs_grad = true;
    return n;
}

NodePtr constant(Tensor2 value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = false;
    return n;
}

NodePtr make_node(Tensor2 value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->needs_grad = any_needs_grad(parents);
    if (n->needs_grad) {
        // Constant-only subgraphs skip gradient storage and backward wiring.
        n->grad = Tensor2(value.rows, value.cols);
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    n->value = std::move(value);
    return n;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    return make_node(sagc::matmul(a->value, b->value), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.needs_grad) {
            accumulate(pa.grad, sagc::matmul(n.grad, sagc::transpose(pb.value)));
        }
        if (pb.needs_grad) {
            accumulate(pb.grad, sagc::matmul(sagc::transpose(pa.value), n.grad));
        }
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    return make_node(sagc::add(a->value, b->value), {a, b}, [](Node& n) {
        if (n.parents[0]->needs_grad) accumulate(n.parents[0]->grad, n.grad);
        if (n.parents[1]->needs_grad) accumulate(n.parents[1]->grad, n.grad);
    });
}

NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
    return make_node(sagc::hadamard(a->value, b->value), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.needs_grad) accumulate(pa.grad, sagc::hadamard(n.grad, pb.value));
        if (pb.needs_grad) accumulate(pb.grad, sagc::hadamard(n.grad, pa.value));
    });
}

NodePtr tanh_elem(const NodePtr& x) {
    return make_node(sagc::tanh_elem(x->value), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        // d tanh = 1 - tanh^2, using the already-computed output.
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            const double y = n.value.data[i];
            p.grad.data[i] += n.grad.data[i] * (1.0 - y * y);
        }
    });
}

NodePtr sigmoid_elem(const NodePtr& x) {
    return make_node(sagc::sigmoid_elem(x->value), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            const double y = n.value.data[i];
            p.grad.data[i] += n.grad.data[i] * y * (1.0 - y);
        }
    });
}

NodePtr transpose(const NodePtr& x) {
    return make_node(sagc::transpose(x->value), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (p.needs_grad) accumulate(p.grad, sagc::transpose(n.grad));
    });
}

NodePtr flatten_row_major(const NodePtr& x) {
    return make_node(sagc::flatten_row_major(x->value), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        // Same row-major layout, only the shape differs.
        kernels::active().axpy(1.0, n.grad.data.data(), p.grad.data.data(),
                               p.grad.size());
    });
}

NodePtr concat_cols(const NodePtr& a, const NodePtr& b) {
    return make_node(sagc::concat_cols(a->value, b->value), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const int ca = pa.value.cols;
        const int cb = pb.value.cols;
        for (int i = 0; i < n.value.rows; ++i) {
            if (pa.needs_grad) {
                for (int j = 0; j < ca; ++j) pa.grad.at(i, j) += n.grad.at(i, j);
            }
            if (pb.needs_grad) {
                for (int j = 0; j < cb; ++j) pb.grad.at(i, j) += n.grad.at(i, ca + j);
            }
        }
    });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    int rows = 0;
    const int cols = parts.front()->value.cols;
    for (const NodePtr& p : parts) {
        if (p->value.cols != cols) {
            throw ShapeError("concat_rows: column counts differ, " +
                             parts.front()->value.shape_str() + " vs " +
                             p->value.shape_str());
        }
        rows += p->value.rows;
    }
    Tensor2 out(rows, cols);
    int r = 0;
    for (const NodePtr& p : parts) {
        std::memcpy(&out.at(r, 0), p->value.data.data(), sizeof(double) * p->value.size());
        r += p->value.rows;
    }
    return make_node(std::move(out), parts, [](Node& n) {
        int row = 0;
        for (const NodePtr& p : n.parents) {
            if (p->needs_grad) {
                kernels::active().axpy(1.0, &n.grad.at(row, 0), p->grad.data.data(),
                                       p->grad.size());
            }
            row += p->value.rows;
        }
    });
}

NodePtr softmax_rows(const NodePtr& x) {
    return make_node(sagc::softmax_rows(x->value), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        // dx_ij = y_ij * (dy_ij - sum_k dy_ik * y_ik)
        for (int i = 0; i < n.value.rows; ++i) {
            double dotrow = 0.0;
            for (int j = 0; j < n.value.cols; ++j) {
                dotrow += n.grad.at(i, j) * n.value.at(i, j);
            }
            for (int j = 0; j < n.value.cols; ++j) {
                p.grad.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dotrow);
            }
        }
    });
}

NodePtr sum_all(const NodePtr& x) {
    double s = 0.0;
    for (double v : x->value.data) s += v;
    return make_node(Tensor2(1, 1, {s}), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        const double g = n.grad.at(0, 0);
        for (double& d : p.grad.data) d += g;
    });
}

void backward(const NodePtr& output) {
    if (output->value.rows != 1 || output->value.cols != 1) {
        throw ContractError("backward: output must be 1x1, got " +
                            output->value.shape_str());
    }
    if (!output->needs_grad) return; // nothing differentiable upstream
    // Iterative post-order DFS; recursion would overflow on long LSTM chains.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(output.get(), 0);
    visited.insert(output.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->needs_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    output->grad.at(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

void release_graph(const NodePtr& root) {
    std::vector<NodePtr> reachable;
    std::unordered_set<Node*> visited;
    reachable.push_back(root);
    visited.insert(root.get());
    for (std::size_t i = 0; i < reachable.size(); ++i) {
        for (const NodePtr& p : reachable[i]->parents) {
            if (visited.insert(p.get()).second) reachable.push_back(p);
        }
    }
    for (const NodePtr& n : reachable) {
        n->parents.clear();
        n->backprop = nullptr;
    }
}

} // namespace sagc::autodiff
