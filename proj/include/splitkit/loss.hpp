#pragma once

#include <vector>

#include "splitkit/forward.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

// Mean over the batch of -sum_k q_k * log softmax(logits)_k with smoothed
// targets q = (1 - epsilon) * onehot + epsilon / C.
double label_smoothed_ce(const Tensor& logits, const std::vector<int>& targets,
                         double epsilon);

// Half mean squared distance between logits and one-hot targets:
// (1 / 2B) * sum_b ||logits_b - onehot(target_b)||^2.
double squared_error_loss(const Tensor& logits,
                          const std::vector<int>& targets);

// Loss value plus gradient with respect to the logits.
Tensor loss_gradient(const Tensor& logits, const std::vector<int>& targets,
                     const LossSpec& spec, double* loss_out);

// Per-row argmax class predictions.
std::vector<int> predict_classes(const Tensor& logits);

}  // namespace splitkit
