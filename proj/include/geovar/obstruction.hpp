#pragma once

#include <optional>
#include <string>

namespace geovar {

enum class SurfaceKind { Sphere, Torus, KleinBottle, ProjectivePlane, Genus, NonorientableGenus };

// Sphere S^m, a closed surface, or a manifold described only by its flags.
struct ManifoldDescriptor {
  enum class Kind { Sphere, Surface, Generic };
  Kind kind = Kind::Generic;
  int dim = 0;
  bool compact = true;
  bool orientable = true;
  std::optional<long> euler;  // chi, when known
  SurfaceKind surface_kind = SurfaceKind::Sphere;
  int genus = 0;  // handles (orientable) or cross-caps (nonorientable)

  static ManifoldDescriptor sphere(int m);
  // Names: sphere, torus, klein_bottle, projective_plane, genus_<g>,
  // nonorientable_genus_<k>. Throws InvalidArgument for anything else.
  static ManifoldDescriptor surface(const std::string& name);
  static ManifoldDescriptor generic(bool compact, bool orientable, int dim, std::optional<long> euler = {});
  std::string name() const;
};

enum class Existence { Yes, No, Unknown };
const char* existence_name(Existence e);

struct ObstructionVerdict {
  Existence exists = Existence::Unknown;
  int dim = 0;
  int index = 0;
  std::string rule;  // tag of the rule that decided, empty when unknown
  std::string explanation;
};

// Index-1 metrics from compactness, orientability, dimension and chi.
ObstructionVerdict lorentzian_exists(const ManifoldDescriptor& desc);
// Index-nu metrics on S^m from the sphere tables, closed under nu <-> m - nu.
ObstructionVerdict sphere_metric_exists(int m, int nu);
// Verdict for (m, m - nu): -g has the complementary index.
ObstructionVerdict index_duality(const ObstructionVerdict& v);
// General entry point: Riemannian base case, duality, the Lorentzian rules,
// all indices in dimension 3 and the sphere tables. Throws InvalidArgument
// unless 0 <= nu <= dim.
ObstructionVerdict metric_exists(const ManifoldDescriptor& desc, int nu);

// Individual sphere rules, exposed for the disjointness check.
bool sphere_table_yes(int m, int nu, std::string* rule = nullptr);
bool sphere_table_no(int m, int nu, std::string* rule = nullptr);

}  // namespace geovar
