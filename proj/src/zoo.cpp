#include "seqmim/zoo.hpp"

#include "seqmim/losses.hpp"

namespace seqmim {

namespace {

SpectralAtom atom(double weight, std::vector<double> gamma, std::vector<double> tau, std::vector<double> pi) {
  SpectralAtom a;
  a.weight = weight;
  a.gamma = Eigen::Map<Vector>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
  a.tau = Eigen::Map<Vector>(tau.data(), static_cast<Eigen::Index>(tau.size()));
  a.pi = Eigen::Map<Vector>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  return a;
}

void attach_loss(ModelSpec& spec, const std::string& name) {
  spec.loss_spec.name = name;
  spec.loss = make_loss(spec.loss_spec, spec.dims);
}

}  // namespace

ZooInstance ridge_instance(double alpha, double lambda) {
  ZooInstance z;
  z.name = "ridge";
  z.spec.dims = Dimensions{1, 1, 1, {1}, alpha, lambda, 1000};
  z.spec.law = ClassLaw{{{0}}, {1.0}};
  z.nu.atoms = {atom(1.0, {1.0}, {0.0}, {1.0})};
  z.spec.nu = z.nu;
  attach_loss(z.spec, "square");
  return z;
}

ZooInstance gmm_instance(const std::string& loss, double alpha, double lambda) {
  ZooInstance z;
  z.name = loss == "logistic" ? "logistic_gmm" : loss + "_gmm";
  z.spec.dims = Dimensions{1, 1, 1, {2}, alpha, lambda, 500};
  z.spec.law = ClassLaw{{{0}, {1}}, {0.5, 0.5}};
  z.nu.atoms = {atom(1.0, {0.5, 0.5}, {1.0, -1.0}, {0.0})};
  z.spec.nu = z.nu;
  attach_loss(z.spec, loss == "square" ? "square_label" : loss);
  return z;
}

ZooInstance multitoken_instance(double alpha, double lambda) {
  ZooInstance z;
  z.name = "multitoken";
  z.spec.dims = Dimensions{2, 1, 1, {1, 1}, alpha, lambda, 1000};
  z.spec.law = ClassLaw{{{0, 0}}, {1.0}};
  z.nu.atoms = {atom(0.5, {1.0, 0.5}, {0.0, 0.0}, {1.0}), atom(0.5, {0.5, 1.5}, {0.0, 0.0}, {1.0})};
  z.spec.nu = z.nu;
  attach_loss(z.spec, "square");
  return z;
}

ZooInstance make_instance(const std::string& name, double alpha) {
  if (name == "ridge") return ridge_instance(alpha);
  if (name == "logistic_gmm") return gmm_instance("logistic", alpha);
  if (name == "square_gmm") return gmm_instance("square", alpha);
  if (name == "multitoken") return multitoken_instance(alpha);
  fail(ErrorCode::validation, "unknown instance '" + name + "'");
}

std::vector<std::string> zoo_names() { return {"ridge", "logistic_gmm", "square_gmm", "multitoken"}; }

}  // namespace seqmim
