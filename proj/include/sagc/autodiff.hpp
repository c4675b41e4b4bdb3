#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sagc/tensor.hpp"

// Reverse-mode differentiation over Tensor2. A forward pass dynamically
// builds a DAG of nodes; backward() seeds the scalar output with 1 and
// walks the graph once in reverse topological order, accumulating each
// node's contribution into its parents' gradients.
//
// Gradients accumulate across backward() calls; callers zero parameter
// gradients between batches. A graph is confined to one thread.

namespace sagc::autodiff {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor2 value;
    // Same shape as value once needs_grad; left empty on constant-only paths.
    Tensor2 grad;
    bool needs_grad = false;
    std::vector<NodePtr> parents;
    // Accumulates d(loss)/d(parent) into each parent's grad, given this
    // node's grad. Null for nodes nothing differentiable flows through.
    std::function<void(Node&)> backprop;

    void zero_grad();
};

// Leaf that participates in differentiation (a trainable parameter).
NodePtr leaf(Tensor2 value);

// Leaf that does not (inputs, masks).
NodePtr constant(Tensor2 value);

// Hook for fused custom operations (e.g. losses) and tests.
NodePtr make_node(Tensor2 value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr hadamard(const NodePtr& a, const NodePtr& b);
NodePtr tanh_elem(const NodePtr& x);
NodePtr sigmoid_elem(const NodePtr& x);
NodePtr transpose(const NodePtr& x);
NodePtr flatten_row_major(const NodePtr& x);
NodePtr concat_cols(const NodePtr& a, const NodePtr& b);
// Stacks 1-row-compatible pieces top to bottom; all must share col count.
NodePtr concat_rows(const std::vector<NodePtr>& parts);
NodePtr softmax_rows(const NodePtr& x);
// 1x1 sum of all entries.
NodePtr sum_all(const NodePtr& x);

// Seeds output (must be 1x1, else ContractError) and accumulates
// d(output)/d(node) into every reachable node's grad, visiting each
// node exactly once.
void backward(const NodePtr& output);

// Severs parent links of every node reachable from root so the graph can
// be freed without deep recursive destruction. Values and gradients stay
// readable; backward() on the released graph is no longer possible.
void release_graph(const NodePtr& root);

} // namespace sagc::autodiff
