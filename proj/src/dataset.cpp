#include "seqmim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "seqmim/kernels.hpp"

namespace seqmim {

Matrix Dataset::labels(long mu) const {
  Matrix out(L, t);
  for (int l = 0; l < L; ++l)
    for (int j = 0; j < t; ++j) out(l, j) = y[static_cast<std::size_t>((mu * L + l) * t + j)];
  return out;
}

Matrix Dataset::sample(long mu) const {
  Matrix out(L, d);
  for (int l = 0; l < L; ++l) out.row(l) = Eigen::Map<const Vector>(x(mu, l), d).transpose();
  return out;
}

DatasetGenerator::DatasetGenerator(const ModelSpec& spec, const SpectralMeasure& nu, int d)
    : law_(spec.law), L_(spec.dims.L), d_(d), t_(spec.dims.t), K_(spec.dims.K) {
  if (d < 1) fail(ErrorCode::validation, "d must be positive");
  std::size_t positive = 0;
  for (const auto& a : nu.atoms) positive += a.weight > 0;
  if (static_cast<std::size_t>(d) < positive)
    fail(ErrorCode::validation, "d = " + std::to_string(d) + " is smaller than the number of atoms");
  const ClusterIndex index(K_);

  // floor(w d) coordinates per atom, remainder to the heaviest atom
  std::vector<int> counts(nu.atoms.size());
  int used = 0;
  std::size_t heaviest = 0;
  for (std::size_t a = 0; a < nu.atoms.size(); ++a) {
    counts[a] = static_cast<int>(std::floor(nu.atoms[a].weight * d + 1e-9));
    used += counts[a];
    if (nu.atoms[a].weight > nu.atoms[heaviest].weight) heaviest = a;
  }
  counts[heaviest] += d - used;
  for (std::size_t a = 0; a < counts.size(); ++a)
    for (int j = 0; j < counts[a]; ++j) atom_of_.push_back(static_cast<int>(a));

  teacher_.resize(d, t_);
  cov_diag_.assign(static_cast<std::size_t>(index.size()), Vector(d));
  means_.assign(static_cast<std::size_t>(index.size()), Vector(d));
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) {
    const auto& atom = nu.atoms[static_cast<std::size_t>(atom_of_[static_cast<std::size_t>(i)])];
    teacher_.row(i) = atom.pi.transpose();
    for (int f = 0; f < index.size(); ++f) {
      cov_diag_[static_cast<std::size_t>(f)](i) = atom.gamma(f);
      means_[static_cast<std::size_t>(f)](i) = atom.tau(f) / sqrt_d;
    }
  }
}

Dataset DatasetGenerator::sample(long n, std::uint64_t seed) const {
  const ClusterIndex index(K_);
  Dataset ds;
  ds.n = n;
  ds.L = L_;
  ds.d = d_;
  ds.t = t_;
  ds.K = K_;
  ds.teacher = teacher_;
  ds.cov_diag = cov_diag_;
  ds.means = means_;
  ds.seed = seed;
  ds.X.resize(static_cast<std::size_t>(n * L_ * d_));
  ds.y.resize(static_cast<std::size_t>(n * L_ * t_));
  ds.c.resize(static_cast<std::size_t>(n));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::discrete_distribution<std::size_t> pick(law_.probs.begin(), law_.probs.end());
  std::vector<std::vector<double>> sd(cov_diag_.size());
  for (std::size_t f = 0; f < cov_diag_.size(); ++f) {
    sd[f].resize(static_cast<std::size_t>(d_));
    for (int i = 0; i < d_; ++i) sd[f][static_cast<std::size_t>(i)] = std::sqrt(cov_diag_[f](i));
  }
  // teacher columns, contiguous
  std::vector<Vector> wcol(static_cast<std::size_t>(t_));
  for (int j = 0; j < t_; ++j) wcol[static_cast<std::size_t>(j)] = teacher_.col(j);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_));
  const auto& kern = kernels();

  for (long mu = 0; mu < n; ++mu) {
    const ClassTuple& c = law_.support[pick(rng)];
    ds.c[static_cast<std::size_t>(mu)] = c;
    for (int l = 0; l < L_; ++l) {
      const auto f = static_cast<std::size_t>(index.flat(l, c[static_cast<std::size_t>(l)]));
      double* row = ds.x(mu, l);
      const double* mean = means_[f].data();
      const double* s = sd[f].data();
      for (int i = 0; i < d_; ++i) row[i] = mean[i] + s[i] * normal(rng);
      for (int j = 0; j < t_; ++j)
        ds.y[static_cast<std::size_t>((mu * L_ + l) * t_ + j)] =
            kern.dot(row, wcol[static_cast<std::size_t>(j)].data(), static_cast<std::size_t>(d_)) * inv_sqrt_d;
    }
  }
  return ds;
}

Dataset generate_dataset(const ModelSpec& spec, const SpectralMeasure& nu, int d, long n, std::uint64_t seed) {
  return DatasetGenerator(spec, nu, d).sample(n, seed);
}

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'M', 'I', 'M', 'D', 'S', '1'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::io, "truncated dataset file");
  return v;
}

void put_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::ifstream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) fail(ErrorCode::io, "truncated dataset file");
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::int64_t>(out, ds.n);
  put<std::int32_t>(out, ds.L);
  put<std::int32_t>(out, ds.d);
  put<std::int32_t>(out, ds.t);
  for (int k : ds.K) put<std::int32_t>(out, k);
  put<std::uint64_t>(out, ds.seed);
  for (const auto& c : ds.c)
    for (int k : c) put<std::int32_t>(out, k);
  put_doubles(out, ds.X.data(), ds.X.size());
  put_doubles(out, ds.y.data(), ds.y.size());
  const Matrix teacher_rm = ds.teacher;  // column-major in memory; store row-major
  for (int i = 0; i < ds.d; ++i)
    for (int j = 0; j < ds.t; ++j) put<double>(out, teacher_rm(i, j));
  for (const auto& v : ds.cov_diag) put_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
  for (const auto& v : ds.means) put_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail(ErrorCode::io, path + " is not a dataset file");
  Dataset ds;
  ds.n = get<std::int64_t>(in);
  ds.L = get<std::int32_t>(in);
  ds.d = get<std::int32_t>(in);
  ds.t = get<std::int32_t>(in);
  if (ds.n < 0 || ds.L < 1 || ds.d < 1 || ds.t < 1) fail(ErrorCode::io, "bad dataset header");
  for (int l = 0; l < ds.L; ++l) ds.K.push_back(get<std::int32_t>(in));
  ds.seed = get<std::uint64_t>(in);
  ds.c.assign(static_cast<std::size_t>(ds.n), ClassTuple(static_cast<std::size_t>(ds.L)));
  for (auto& c : ds.c)
    for (auto& k : c) k = get<std::int32_t>(in);
  ds.X.resize(static_cast<std::size_t>(ds.n * ds.L * ds.d));
  ds.y.resize(static_cast<std::size_t>(ds.n * ds.L * ds.t));
  get_doubles(in, ds.X.data(), ds.X.size());
  get_doubles(in, ds.y.data(), ds.y.size());
  ds.teacher.resize(ds.d, ds.t);
  for (int i = 0; i < ds.d; ++i)
    for (int j = 0; j < ds.t; ++j) ds.teacher(i, j) = get<double>(in);
  const int nf = ClusterIndex(ds.K).size();
  ds.cov_diag.assign(static_cast<std::size_t>(nf), Vector(ds.d));
  ds.means.assign(static_cast<std::size_t>(nf), Vector(ds.d));
  for (auto& v : ds.cov_diag) get_doubles(in, v.data(), static_cast<std::size_t>(ds.d));
  for (auto& v : ds.means) get_doubles(in, v.data(), static_cast<std::size_t>(ds.d));
  return ds;
}

}  // namespace seqmim
