#pragma once

// Finite-d instances realizing a spectral measure in the canonical basis.

#include <cstdint>
#include <string>

#include "seqmim/model.hpp"

namespace seqmim {

struct Dataset {
  long n = 0;
  int L = 1, d = 1, t = 1;
  std::vector<int> K;
  std::vector<double> X;  // n x L x d, row-major
  std::vector<double> y;  // n x L x t
  std::vector<ClassTuple> c;
  Matrix teacher;  // d x t
  // Generator metadata, indexed by flat (token, cluster).
  std::vector<Vector> cov_diag;  // d
  std::vector<Vector> means;     // d, unit scale: mu_i = tau_i / sqrt(d)
  std::uint64_t seed = 0;

  const double* x(long mu, int l) const { return X.data() + (mu * L + l) * static_cast<long>(d); }
  double* x(long mu, int l) { return X.data() + (mu * L + l) * static_cast<long>(d); }
  Matrix labels(long mu) const;   // L x t
  Matrix sample(long mu) const;   // L x d
};

class DatasetGenerator {
 public:
  DatasetGenerator(const ModelSpec& spec, const SpectralMeasure& nu, int d);

  // n samples with class tuples drawn from the class law.
  Dataset sample(long n, std::uint64_t seed) const;
  // Index of the spectral atom realized at each coordinate.
  const std::vector<int>& atom_of_coordinate() const { return atom_of_; }

 private:
  ClassLaw law_;
  int L_, d_, t_;
  std::vector<int> K_;
  std::vector<int> atom_of_;
  Matrix teacher_;
  std::vector<Vector> cov_diag_, means_;
};

Dataset generate_dataset(const ModelSpec& spec, const SpectralMeasure& nu, int d, long n, std::uint64_t seed);

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace seqmim
