#include "geovar/obstruction.hpp"

#include "geovar/common.hpp"

#include <string_view>

namespace geovar {

namespace {

constexpr std::string_view kDualTag = "duality:";
constexpr std::string_view kDualNote = " Negating the metric exchanges index nu and m - nu.";

ObstructionVerdict verdict(Existence e, int m, int nu, std::string rule, std::string why) {
  ObstructionVerdict v;
  v.exists = e;
  v.dim = m;
  v.index = nu;
  v.rule = std::move(rule);
  v.explanation = std::move(why);
  return v;
}

long lowest_power_of_two(long n) { return n & -n; }

}  // namespace

ManifoldDescriptor ManifoldDescriptor::sphere(int m) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "sphere dimension must be positive");
  ManifoldDescriptor d;
  d.kind = Kind::Sphere;
  d.dim = m;
  d.euler = m % 2 == 0 ? 2 : 0;
  return d;
}

ManifoldDescriptor ManifoldDescriptor::surface(const std::string& name) {
  ManifoldDescriptor d;
  d.kind = Kind::Surface;
  d.dim = 2;
  auto suffix_number = [&](std::string_view prefix) -> int {
    const std::string rest = name.substr(prefix.size());
    if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "bad surface name '" + name + "'");
    return std::stoi(rest);
  };
  if (name == "sphere") {
    d.surface_kind = SurfaceKind::Sphere;
  } else if (name == "torus") {
    d.surface_kind = SurfaceKind::Torus;
    d.genus = 1;
  } else if (name == "klein_bottle") {
    d.surface_kind = SurfaceKind::KleinBottle;
    d.orientable = false;
    d.genus = 2;
  } else if (name == "projective_plane") {
    d.surface_kind = SurfaceKind::ProjectivePlane;
    d.orientable = false;
    d.genus = 1;
  } else if (name.rfind("genus_", 0) == 0) {
    d.surface_kind = SurfaceKind::Genus;
    d.genus = suffix_number("genus_");
  } else if (name.rfind("nonorientable_genus_", 0) == 0) {
    d.surface_kind = SurfaceKind::NonorientableGenus;
    d.orientable = false;
    d.genus = suffix_number("nonorientable_genus_");
    if (d.genus < 1) throw Error(ErrorCode::InvalidArgument, "nonorientable genus must be at least 1");
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown surface '" + name + "'");
  }
  d.euler = d.orientable ? 2 - 2L * d.genus : 2 - static_cast<long>(d.genus);
  return d;
}

ManifoldDescriptor ManifoldDescriptor::generic(bool compact, bool orientable, int dim, std::optional<long> euler) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
  if (compact && dim % 2 == 1 && euler && *euler != 0)
    throw Error(ErrorCode::InvalidArgument, "a closed odd-dimensional manifold has chi = 0");
  ManifoldDescriptor d;
  d.kind = Kind::Generic;
  d.dim = dim;
  d.compact = compact;
  d.orientable = orientable;
  d.euler = euler;
  return d;
}

std::string ManifoldDescriptor::name() const {
  switch (kind) {
    case Kind::Sphere: return "S^" + std::to_string(dim);
    case Kind::Surface:
      switch (surface_kind) {
        case SurfaceKind::Sphere: return "sphere";
        case SurfaceKind::Torus: return "torus";
        case SurfaceKind::KleinBottle: return "klein_bottle";
        case SurfaceKind::ProjectivePlane: return "projective_plane";
        case SurfaceKind::Genus: return "genus_" + std::to_string(genus);
        case SurfaceKind::NonorientableGenus: return "nonorientable_genus_" + std::to_string(genus);
      }
      break;
    case Kind::Generic: break;
  }
  std::string s = std::string(compact ? "compact" : "noncompact") + (orientable ? " orientable" : " nonorientable") +
                  " " + std::to_string(dim) + "-manifold";
  if (euler) s += " (chi " + std::to_string(*euler) + ")";
  return s;
}

const char* existence_name(Existence e) {
  switch (e) {
    case Existence::Yes: return "yes";
    case Existence::No: return "no";
    case Existence::Unknown: return "unknown";
  }
  return "?";
}

ObstructionVerdict lorentzian_exists(const ManifoldDescriptor& d) {
  const int m = d.dim;
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
  if (m == 1)
    return verdict(Existence::Yes, m, 1, "negative_definite",
                   "In dimension 1 index 1 is the negative of a Riemannian metric.");
  if (!d.compact)
    return verdict(Existence::Yes, m, 1, "noncompact",
                   "A noncompact manifold has vanishing top cohomology, so a line field and a Lorentzian metric exist.");
  if (m == 2 && d.euler) {
    const bool ok = *d.euler == 0;
    return verdict(ok ? Existence::Yes : Existence::No, m, 1, "compact_surface",
                   ok ? "Closed surfaces with chi = 0 (torus, Klein bottle) carry a line field."
                      : "Only the torus and the Klein bottle among closed surfaces carry Lorentzian metrics; chi = " +
                            std::to_string(*d.euler) + ".");
  }
  if (d.orientable && d.euler) {
    const bool ok = *d.euler == 0;
    return verdict(ok ? Existence::Yes : Existence::No, m, 1, "euler_characteristic",
                   "A closed orientable manifold carries a Lorentzian metric exactly when chi = 0; chi = " +
                       std::to_string(*d.euler) + ".");
  }
  if (d.orientable && m % 2 == 1)
    return verdict(Existence::Yes, m, 1, "odd_dimension_orientable",
                   "The Euler class of an odd-rank oriented bundle vanishes.");
  return verdict(Existence::Unknown, m, 1, "",
                 d.orientable ? "Closed orientable even-dimensional manifold with unknown chi."
                              : "No rule covers closed nonorientable manifolds outside dimension 2.");
}

bool sphere_table_yes(int m, int nu, std::string* rule) {
  auto hit = [&](const char* r) {
    if (rule) *rule = r;
    return true;
  };
  if (nu < 0 || nu > m) return false;
  if (nu == 0 || nu == m) return hit("sphere_riemannian");
  if (m % 2 == 1 && (nu == 1 || nu == m - 1)) return hit("sphere_odd_lorentzian");
  if (m % 4 == 3 && (nu <= 3 || nu >= m - 3)) return hit("sphere_mod4");
  if (m % 8 == 7 && (nu <= 7 || nu >= m - 7)) return hit("sphere_mod8");
  return false;
}

bool sphere_table_no(int m, int nu, std::string* rule) {
  auto hit = [&](const char* r) {
    if (rule) *rule = r;
    return true;
  };
  if (nu < 0 || nu > m) return false;
  if (m % 2 == 0 && nu >= 1 && nu <= m - 1) return hit("sphere_even");
  const long p = lowest_power_of_two(m + 1L);
  if (nu >= p && nu <= m - p) return hit("sphere_two_power");
  return false;
}

ObstructionVerdict sphere_metric_exists(int m, int nu) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "sphere dimension must be positive");
  if (nu < 0 || nu > m) throw Error(ErrorCode::InvalidArgument, "index must lie in [0, m]");
  std::string rule;
  if (sphere_table_yes(m, nu, &rule))
    return verdict(Existence::Yes, m, nu, rule, "S^" + std::to_string(m) + " carries a rank-" +
                                                    std::to_string(nu) + " distribution (sphere table).");
  if (sphere_table_no(m, nu, &rule)) {
    std::string why = "S^" + std::to_string(m) + " has no rank-" + std::to_string(nu) + " distribution";
    if (rule == "sphere_even") why += " (even sphere, 0 < nu < m).";
    else
      why += " (2^r = " + std::to_string(lowest_power_of_two(m + 1L)) + " is the largest power of 2 dividing m + 1).";
    return verdict(Existence::No, m, nu, rule, why);
  }
  // The tables are symmetric, so the dual index settles nothing new; kept for completeness.
  const int dual = m - nu;
  if (sphere_table_yes(m, dual, &rule) || sphere_table_no(m, dual, &rule))
    return index_duality(sphere_metric_exists(m, dual));
  return verdict(Existence::Unknown, m, nu, "", "Neither sphere table covers this index.");
}

ObstructionVerdict index_duality(const ObstructionVerdict& v) {
  ObstructionVerdict d = v;
  d.index = v.dim - v.index;
  if (v.exists == Existence::Unknown) return d;
  if (d.rule.rfind(kDualTag, 0) == 0) {
    d.rule.erase(0, kDualTag.size());
    if (d.explanation.size() >= kDualNote.size() &&
        d.explanation.compare(d.explanation.size() - kDualNote.size(), kDualNote.size(), kDualNote) == 0)
      d.explanation.erase(d.explanation.size() - kDualNote.size());
  } else {
    d.rule.insert(0, kDualTag);
    d.explanation += kDualNote;
  }
  return d;
}

ObstructionVerdict metric_exists(const ManifoldDescriptor& d, int nu) {
  const int m = d.dim;
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
  if (nu < 0 || nu > m) throw Error(ErrorCode::InvalidArgument, "index must lie in [0, dim]");
  if (nu == 0) return verdict(Existence::Yes, m, 0, "riemannian", "Every manifold carries a Riemannian metric.");
  if (nu == m) return index_duality(metric_exists(d, 0));
  if (d.kind == ManifoldDescriptor::Kind::Sphere) return sphere_metric_exists(m, nu);
  if (nu == 1) return lorentzian_exists(d);
  if (nu == m - 1) return index_duality(lorentzian_exists(d));
  return verdict(Existence::Unknown, m, nu, "", "No rule decides index " + std::to_string(nu) + " here.");
}

}  // namespace geovar
