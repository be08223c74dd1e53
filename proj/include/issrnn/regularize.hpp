#pragma once

#include <span>

#include "issrnn/iss.hpp"

namespace issrnn {

// Sum of epsilon-safe group norms over every group in the map.
double group_lasso_penalty(const NamedTensorsConst& tensors,
                           const ResolvedGroups& resolved, double epsilon);

// Plain SGD on every tensor: w <- w - eta * g.
void sgd_step_plain(const NamedTensors& weights, const NamedTensorsConst& grads,
                    double eta);

// The group-Lasso SGD step. Every weight takes the data-gradient step; group
// members additionally take -eta * lambda * w / sqrt(eps + ||group||^2), with
// the norm and direction read from the pre-step weights. Weights belonging to
// several groups accumulate one regularization term per group.
void sgd_step_group_lasso(const NamedTensors& weights, const NamedTensorsConst& grads,
                          const ResolvedGroups& resolved, double eta, double lambda,
                          double epsilon);

// w <- w - eta * (g + decay * sign(w)), sign(0) = 0. Applies to everything
// passed in; callers route non-sparsified tensors through sgd_step_plain.
void sgd_step_l1_dense(std::span<float> weights, std::span<const float> grads,
                       double eta, double decay);

// l1 on group-member coordinates, plain SGD elsewhere.
void sgd_step_l1(const NamedTensors& weights, const NamedTensorsConst& grads,
                 const ResolvedGroups& resolved, double eta, double decay);

// Zero every group-member weight with |w| < tau. Returns how many weights
// moved to zero in this call. Idempotent; non-members untouched.
long long threshold_weights(const NamedTensors& weights, const ResolvedGroups& resolved,
                            double tau);

// Scale all gradients by clip/||g|| when the global norm exceeds clip.
// Returns the pre-clip global norm.
double clip_gradients_global_norm(const NamedTensors& grads, double clip);

}  // namespace issrnn
