#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "rpace/errors.hpp"

namespace rpace {

enum class ManifoldFamily { Sphere, Rotation, Euclidean };

// Descriptor of the manifold a dataset lives on. SO(3) points are stored as
// row-major flattened 3x3 matrices (D = 9).
struct ManifoldKind {
  ManifoldFamily family = ManifoldFamily::Euclidean;
  int ambient_dim = 1;

  int intrinsic_dim() const {
    switch (family) {
      case ManifoldFamily::Sphere:
        return ambient_dim - 1;
      case ManifoldFamily::Rotation:
        return 3;
      case ManifoldFamily::Euclidean:
        return ambient_dim;
    }
    return 0;
  }

  static ManifoldKind sphere(int d) { return {ManifoldFamily::Sphere, d + 1}; }
  static ManifoldKind rotation3() { return {ManifoldFamily::Rotation, 9}; }
  static ManifoldKind euclidean(int dim) { return {ManifoldFamily::Euclidean, dim}; }

  bool operator==(const ManifoldKind&) const = default;
  std::string name() const;
};

struct ManifoldPoint {
  Eigen::VectorXd coords;
};

struct TangentVector {
  ManifoldPoint base;
  Eigen::VectorXd coords;
};

// Riemannian manifold with ambient-coordinate points and tangent vectors.
// All operations are pure; instances are immutable and shareable.
class Manifold {
 public:
  explicit Manifold(ManifoldKind kind) : kind_(kind) {}
  virtual ~Manifold() = default;

  const ManifoldKind& kind() const { return kind_; }
  int ambient_dim() const { return kind_.ambient_dim; }
  int intrinsic_dim() const { return kind_.intrinsic_dim(); }

  // Geodesic distance.
  virtual double dist(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const = 0;
  // Exponential map of a tangent vector at p.
  virtual Eigen::VectorXd exp(const Eigen::VectorXd& p, const Eigen::VectorXd& v) const = 0;
  // Logarithm map; throws CutLocusError when q is at or beyond the cut locus of p.
  virtual Eigen::VectorXd log(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const = 0;
  // Nearest manifold point to an ambient vector.
  virtual Eigen::VectorXd project(const Eigen::VectorXd& ambient) const = 0;
  // Orthogonal projection of an ambient vector onto the tangent space at p.
  virtual Eigen::VectorXd project_tangent(const Eigen::VectorXd& p,
                                          const Eigen::VectorXd& v) const = 0;
  // out += weight * Log_p(q), without heap allocation; the inner loop of the
  // Frechet mean gradient.
  virtual void add_scaled_log(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                              double weight, Eigen::VectorXd& out) const = 0;
  // sum_k coeff[k] d^2(points.col(k), y); batched for the smoother inner loops.
  virtual double weighted_sqdist_sum(const Eigen::MatrixXd& points,
                                     const Eigen::VectorXd& coeff,
                                     const Eigen::VectorXd& y) const;
  // out = -2 sum_k coeff[k] Log_y(points.col(k)), the gradient of the sum above.
  virtual void frechet_gradient(const Eigen::MatrixXd& points,
                                const Eigen::VectorXd& coeff, const Eigen::VectorXd& y,
                                Eigen::VectorXd& out) const;
  // Deterministic orthonormal tangent basis at p, one column per intrinsic
  // dimension; used to sample isotropic tangent-space noise.
  virtual Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& p) const = 0;
  // Injectivity radius measured in coordinate norm; +inf for flat space.
  virtual double injectivity_radius() const = 0;

  // Invariant checks; throw InvalidInputError with a description on failure.
  virtual void check_point(const Eigen::VectorXd& p, double tol = 1e-9) const = 0;
  virtual void check_tangent(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                             double tol = 1e-9) const = 0;

 protected:
  void check_dim(const Eigen::VectorXd& x, const char* what) const;

 private:
  ManifoldKind kind_;
};

// Unit sphere S^d embedded in R^{d+1}.
class Sphere : public Manifold {
 public:
  explicit Sphere(int d) : Manifold(ManifoldKind::sphere(d)) {}

  double dist(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd exp(const Eigen::VectorXd& p, const Eigen::VectorXd& v) const override;
  Eigen::VectorXd log(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd project(const Eigen::VectorXd& ambient) const override;
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& v) const override;
  void add_scaled_log(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double weight,
                      Eigen::VectorXd& out) const override;
  double weighted_sqdist_sum(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                             const Eigen::VectorXd& y) const override;
  void frechet_gradient(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                        const Eigen::VectorXd& y, Eigen::VectorXd& out) const override;
  Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& p) const override;
  double injectivity_radius() const override { return M_PI; }
  void check_point(const Eigen::VectorXd& p, double tol) const override;
  void check_tangent(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                     double tol) const override;
};

// Rotation group SO(3), points flattened row-major to R^9.
//
// The default metric is the one induced by the ambient Frobenius inner
// product, so dist(I, rotation by theta) = sqrt(2) * theta. `metric_scale`
// rescales the metric: tangent coordinates represent scale * (ambient
// matrix), so scale = 1/sqrt(2) gives the convention where distances equal
// rotation angles and skew generators have unit norm.
class So3 : public Manifold {
 public:
  explicit So3(double metric_scale = 1.0)
      : Manifold(ManifoldKind::rotation3()), scale_(metric_scale) {}

  double metric_scale() const { return scale_; }

  double dist(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd exp(const Eigen::VectorXd& p, const Eigen::VectorXd& v) const override;
  Eigen::VectorXd log(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd project(const Eigen::VectorXd& ambient) const override;
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& v) const override;
  void add_scaled_log(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double weight,
                      Eigen::VectorXd& out) const override;
  double weighted_sqdist_sum(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                             const Eigen::VectorXd& y) const override;
  void frechet_gradient(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                        const Eigen::VectorXd& y, Eigen::VectorXd& out) const override;
  Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& p) const override;
  double injectivity_radius() const override { return scale_ * std::sqrt(2.0) * M_PI; }
  void check_point(const Eigen::VectorXd& p, double tol) const override;
  void check_tangent(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                     double tol) const override;

 private:
  double scale_;
};

// Flat R^D: exp is addition, log is subtraction, dist is the norm.
class Euclidean : public Manifold {
 public:
  explicit Euclidean(int dim) : Manifold(ManifoldKind::euclidean(dim)) {}

  double dist(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd exp(const Eigen::VectorXd& p, const Eigen::VectorXd& v) const override;
  Eigen::VectorXd log(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const override;
  Eigen::VectorXd project(const Eigen::VectorXd& ambient) const override;
  Eigen::VectorXd project_tangent(const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& v) const override;
  void add_scaled_log(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double weight,
                      Eigen::VectorXd& out) const override;
  double weighted_sqdist_sum(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                             const Eigen::VectorXd& y) const override;
  void frechet_gradient(const Eigen::MatrixXd& points, const Eigen::VectorXd& coeff,
                        const Eigen::VectorXd& y, Eigen::VectorXd& out) const override;
  Eigen::MatrixXd tangent_basis(const Eigen::VectorXd& p) const override;
  double injectivity_radius() const override {
    return std::numeric_limits<double>::infinity();
  }
  void check_point(const Eigen::VectorXd& p, double tol) const override;
  void check_tangent(const Eigen::VectorXd& p, const Eigen::VectorXd& v,
                     double tol) const override;
};

std::shared_ptr<const Manifold> make_manifold(const ManifoldKind& kind,
                                              double so3_metric_scale = 1.0);

// Orthogonal matrix mapping p to q on a sphere, acting as the identity on the
// orthogonal complement of span{p, q}. Throws CutLocusError for antipodal pairs.
Eigen::MatrixXd rotation_between(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// --- 3x3 rotation utilities shared by So3 and the simulation generators ---

// Skew matrix with lower-triangular entries (2,1), (3,1), (3,2) = v (1-based,
// ordered by column).
Eigen::Matrix3d skew_lower(const Eigen::Vector3d& v);

// Rodrigues rotation exp of the skew matrix with axis-angle vector omega.
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega);
Eigen::Matrix3d rotation_exp(const Eigen::Matrix3d& skew);

// Axis-angle vector of a rotation matrix, robust near 0 and pi.
// Throws CutLocusError when the rotation angle reaches pi.
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& rot);

}  // namespace rpace
