#pragma once

// Loss registry. Losses are looked up by name and parameters and returned as
// behavioral LossModel values; the solver never branches on the name.
//
//   square        1/2 |Y - X|^2 (needs r = t)
//   square_v      1/2 |Y - X|^2 + kappa/4 Tr[v v]
//   zero          0
//   logistic      sum log(1 + exp(-y_c x)), y_c = +1 for cluster 1, -1 otherwise
//   square_label  1/2 sum (y_c - x)^2
//   hinge         sum max(0, 1 - y_c x)
//
// Test metrics: square, misclassification (1[y_c x <= 0] averaged over
// entries), zero_one_loss alias, one (constant 1).

#include "seqmim/model.hpp"

namespace seqmim {

LossModel make_loss(const LossSpec& spec, const Dimensions& dims);
LossEval make_test_metric(const std::string& name, const Dimensions& dims);
std::vector<std::string> loss_names();

// +1 for the first cluster of a token, -1 otherwise.
inline double cluster_label(int k) { return k == 0 ? 1.0 : -1.0; }

}  // namespace seqmim
