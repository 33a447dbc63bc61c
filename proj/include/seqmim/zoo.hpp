#pragma once

// Model zoo: ridge regression, binary Gaussian-mixture classification
// (logistic or square loss) and a two-token square-loss teacher-student.

#include "seqmim/model.hpp"

namespace seqmim {

struct ZooInstance {
  std::string name;
  ModelSpec spec;
  SpectralMeasure nu;
};

// L = 1, K = 1, Sigma = I, r = t = 1, square loss, teacher w* = 1.
ZooInstance ridge_instance(double alpha, double lambda = 0.1);
// L = 1, K = 2, means +-mu with |mu| = 1, Sigma = 0.5 I, balanced classes.
ZooInstance gmm_instance(const std::string& loss, double alpha, double lambda = 0.05);
// L = 2, K = (1, 1), token covariances with distinct spectra, square loss.
ZooInstance multitoken_instance(double alpha, double lambda = 0.1);

// "ridge", "logistic_gmm", "square_gmm", "multitoken".
ZooInstance make_instance(const std::string& name, double alpha);
std::vector<std::string> zoo_names();

}  // namespace seqmim
